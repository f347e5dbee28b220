"""Command-line entry point: ``generate``, ``estimate``, ``eval`` and ``psf``.

Settings come from a JSON config file (``--config``); individual flags
override single fields. The resolved config is written into every output
root as ``config.json``. The default worker count is read from the
``QPDISP_WORKERS`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from qpdisp import dataset_io, metrics, psf, renderer, solver
from qpdisp.optics import CameraParams

log = logging.getLogger("qpdisp")

WORKERS_ENV = "QPDISP_WORKERS"


@dataclass(frozen=True)
class RenderSettings:
    layer_width: float = renderer.DEFAULT_LAYER_WIDTH
    kernel_family: str = "half_disk"
    occlusion_gap_px: float = renderer.DEFAULT_OCCLUSION_GAP

    def __post_init__(self):
        if not self.layer_width > 0:
            raise ValueError("layer_width must be > 0")
        if self.occlusion_gap_px < 0:
            raise ValueError("occlusion_gap_px must be >= 0")
        psf.get_family(self.kernel_family)


@dataclass(frozen=True)
class NoiseSettings:
    variance: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("noise variance must be >= 0")


@dataclass(frozen=True)
class DatasetSettings:
    depth_range: tuple = (0.5, 50.0)
    min_valid_fraction: float = 1.0
    transfer: str = "srgb"
    split_counts: tuple | None = None
    split_ratios: tuple = (0.8, 0.1, 0.1)
    split_seed: int = 0

    def __post_init__(self):
        lo, hi = self.depth_range
        if not 0 < lo < hi:
            raise ValueError(f"invalid depth range {self.depth_range}")
        if not 0 <= self.min_valid_fraction <= 1:
            raise ValueError("min_valid_fraction must lie in [0, 1]")
        if self.transfer not in dataset_io.TRANSFERS:
            raise ValueError(f"transfer must be one of {dataset_io.TRANSFERS}")


@dataclass(frozen=True)
class MetricSettings:
    irls_eps: float = metrics.IRLS_EPS
    irls_tol: float = metrics.IRLS_TOL
    irls_max_iter: int = metrics.IRLS_MAX_ITER


@dataclass(frozen=True)
class RunConfig:
    camera: CameraParams = field(default_factory=CameraParams)
    render: RenderSettings = field(default_factory=RenderSettings)
    solver: solver.SolverConfig = field(default_factory=solver.SolverConfig)
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    metrics: MetricSettings = field(default_factory=MetricSettings)
    visualize: bool = False

    def to_dict(self) -> dict:
        return {
            "camera": self.camera.to_dict(),
            "render": asdict(self.render),
            "solver": self.solver.to_dict(),
            "noise": asdict(self.noise),
            "dataset": {k: list(v) if isinstance(v, tuple) else v
                        for k, v in asdict(self.dataset).items()},
            "metrics": asdict(self.metrics),
            "visualize": self.visualize,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        if "camera" in d:
            kw["camera"] = CameraParams.from_dict({**CameraParams().to_dict(), **d["camera"]})
        if "render" in d:
            kw["render"] = RenderSettings(**d["render"])
        if "solver" in d:
            kw["solver"] = solver.SolverConfig.from_dict(d["solver"])
        if "noise" in d:
            kw["noise"] = NoiseSettings(**d["noise"])
        if "dataset" in d:
            ds = dict(d["dataset"])
            for k in ("depth_range", "split_counts", "split_ratios"):
                if ds.get(k) is not None:
                    ds[k] = tuple(ds[k])
            kw["dataset"] = DatasetSettings(**ds)
        if "metrics" in d:
            kw["metrics"] = MetricSettings(**d["metrics"])
        if "visualize" in d:
            kw["visualize"] = bool(d["visualize"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def scene_seed(seed: int, scene_id: str) -> int:
    """Per-scene noise seed, independent of processing order."""
    ss = np.random.SeedSequence([seed, zlib.crc32(scene_id.encode())])
    return int(ss.generate_state(1)[0])


def _run_pool(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _snapshot(config: RunConfig, out_root: Path) -> None:
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "config.json").write_text(config.to_json())


def _write_summary(out_root: Path, summary: dict) -> None:
    (out_root / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


# --- generate ----------------------------------------------------------------

def _generate_one(job):
    config, record, out_root = job
    t0 = time.perf_counter()
    try:
        image, depth = dataset_io.load_scene(record, config.dataset.depth_range,
                                             config.dataset.min_valid_fraction,
                                             config.dataset.transfer)
        frames = renderer.render_qp(image, depth, config.camera, None,
                                    config.render.kernel_family, config.render.layer_width,
                                    config.render.occlusion_gap_px)
        scene_dir = out_root / record.scene_id
        frames.meta["scene_id"] = record.scene_id
        dataset_io.write_frameset(frames, scene_dir, config.dataset.transfer)
        if config.noise.variance > 0:
            seed = scene_seed(config.noise.seed, record.scene_id)
            noisy = renderer.add_gaussian_noise(frames, config.noise.variance, seed)
            dataset_io.write_frameset(noisy, scene_dir / "noisy", config.dataset.transfer)
    except (ValueError, OSError, dataset_io.SceneRejected) as exc:
        return record.scene_id, False, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0
    return record.scene_id, True, "", time.perf_counter() - t0


def cmd_generate(config: RunConfig, rgbd_root, out_root, workers: int = 1) -> dict:
    """Render every scene under ``rgbd_root`` into a QP dataset at ``out_root``."""
    out_root = Path(out_root)
    records = dataset_io.discover_scenes(rgbd_root)
    _snapshot(config, out_root)
    results = _run_pool(_generate_one, [(config, r, out_root) for r in records], workers)
    ok, skipped = [], {}
    for scene_id, success, reason, seconds in results:
        if success:
            log.info("generated %s in %.2fs", scene_id, seconds)
            ok.append(scene_id)
        else:
            log.warning("skipped %s: %s", scene_id, reason)
            skipped[scene_id] = reason
    kept = [r for r in records if r.scene_id in set(ok)]
    manifest = dataset_io.DatasetManifest(kept, settings=config.to_dict())
    ds = config.dataset
    if kept:
        counts = ds.split_counts if ds.split_counts is not None else None
        manifest = dataset_io.split_dataset(manifest, ratios=ds.split_ratios, counts=counts,
                                            seed=ds.split_seed)
    manifest.write(out_root)
    summary = {"generated": len(ok), "skipped": len(skipped), "skipped_scenes": skipped,
               "noisy_copies": config.noise.variance > 0}
    _write_summary(out_root, summary)
    return summary


# --- estimate ----------------------------------------------------------------

def _colorize(disp: np.ndarray):
    import matplotlib

    lim = float(np.nanmax(np.abs(disp))) if np.isfinite(disp).any() else 0.0
    lim = lim if lim > 0 else 1.0
    rgba = matplotlib.colormaps["RdBu_r"](np.clip((disp / lim + 1.0) / 2.0, 0.0, 1.0))
    return (rgba[:, :, :3] * 255).round().astype(np.uint8), lim


def _estimate_one(job):
    config, scene_id, in_dir, out_dir = job
    t0 = time.perf_counter()
    try:
        frames = dataset_io.read_frameset(in_dir)
        disp = solver.estimate(frames, config.solver)
    except (ValueError, OSError) as exc:
        return scene_id, False, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset_io.write_pfm(out_dir / "disp.pfm", disp.values)
    info = {"low_confidence": disp.low_confidence, **disp.meta}
    if config.visualize:
        import cv2

        rgb, lim = _colorize(disp.values)
        ok, buf = cv2.imencode(".png", rgb[:, :, ::-1])
        if ok:
            (out_dir / "disp_viz.png").write_bytes(buf.tobytes())
        info["viz_range_px"] = [-lim, lim]
        info["viz_colormap"] = "RdBu_r"
    (out_dir / "disp_meta.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    return scene_id, True, "", time.perf_counter() - t0


def cmd_estimate(config: RunConfig, dataset_root, out_root, workers: int = 1,
                 variant: str = "clean") -> dict:
    """Estimate disparity for every scene of a dataset; malformed scenes are skipped."""
    dataset_root, out_root = Path(dataset_root), Path(out_root)
    _snapshot(config, out_root)
    jobs = []
    for sid in dataset_io.scene_dirs(dataset_root):
        src = dataset_root / sid / ("noisy" if variant == "noisy" else "")
        jobs.append((config, sid, src, out_root / sid))
    results = _run_pool(_estimate_one, jobs, workers)
    done, skipped = [], {}
    for sid, success, reason, seconds in results:
        if success:
            log.info("estimated %s in %.2fs", sid, seconds)
            done.append(sid)
        else:
            log.warning("skipped %s: %s", sid, reason)
            skipped[sid] = reason
    summary = {"estimated": len(done), "skipped": len(skipped), "skipped_scenes": skipped,
               "variant": variant}
    _write_summary(out_root, summary)
    return summary


# --- eval --------------------------------------------------------------------

class SceneSetMismatch(ValueError):
    pass


def _scenes_with(root: Path, name: str) -> set:
    return {p.parent.name for p in root.glob(f"*/{name}")}


def cmd_eval(pred_root, gt_root, out_root=None, config: RunConfig | None = None) -> dict:
    """Per-scene and mean metric reports; writes ``metrics.json`` and ``metrics.txt``."""
    config = config or RunConfig()
    pred_root, gt_root = Path(pred_root), Path(gt_root)
    out_root = Path(out_root) if out_root else pred_root
    pred = _scenes_with(pred_root, "disp.pfm")
    gt = _scenes_with(gt_root, "gt_disp.pfm")
    if pred != gt or not pred:
        raise SceneSetMismatch(
            f"scene sets differ: only in predictions {sorted(pred - gt)}, "
            f"only in ground truth {sorted(gt - pred)}" if pred != gt else
            "no scenes to evaluate")
    ms = config.metrics
    per_scene = {}
    for sid in sorted(pred):
        est = dataset_io.read_pfm(pred_root / sid / "disp.pfm").astype(np.float64)
        ref = dataset_io.read_pfm(gt_root / sid / "gt_disp.pfm").astype(np.float64)
        mask_path = gt_root / sid / "mask.pfm"
        mask = dataset_io.read_pfm(mask_path) > 0.5 if mask_path.exists() else None
        rep = metrics.basic_metrics(est, ref, mask)
        rep.ai1, rep.ai1_a, rep.ai1_b, rep.ai1_iterations = metrics.affine_invariant(
            est, ref, 1, mask, ms.irls_eps, ms.irls_tol, ms.irls_max_iter)
        rep.ai2, rep.ai2_a, rep.ai2_b, _ = metrics.affine_invariant(est, ref, 2, mask)
        rep.irls_eps, rep.irls_tol, rep.irls_max_iter = ms.irls_eps, ms.irls_tol, ms.irls_max_iter
        per_scene[sid] = rep
    result = {"scenes": {k: v.to_dict() for k, v in per_scene.items()},
              "mean": metrics.mean_report(per_scene.values())}
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "metrics.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    (out_root / "metrics.txt").write_text(format_table(per_scene, result["mean"]))
    return result


def format_table(per_scene: dict, mean: dict) -> str:
    cols = ("mae", "rmse", "d05", "d1", "d2", "ai1", "ai2")
    width = max([len("scene"), len("mean")] + [len(s) for s in per_scene])
    lines = [f"{'scene':<{width}} " + " ".join(f"{c:>9}" for c in cols)]
    for sid, rep in per_scene.items():
        lines.append(f"{sid:<{width}} " + " ".join(f"{getattr(rep, c):9.4f}" for c in cols))
    lines.append(f"{'mean':<{width}} " + " ".join(f"{mean[c]:9.4f}" for c in cols))
    return "\n".join(lines) + "\n"


# --- psf -----------------------------------------------------------------------

def cmd_psf(radius: float, direction: str, out_path, family: str = "half_disk") -> dict:
    kern = psf.make_kernel(radius, direction, family)
    dataset_io.write_pfm(out_path, kern.taps)
    cx, cy = psf.kernel_centroid(kern)
    return {"radius_px": kern.radius_px, "direction": direction, "size": kern.taps.shape[0],
            "centroid": [cx, cy], "sum": float(kern.taps.sum())}


# --- argument parsing -----------------------------------------------------------

def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _resolve_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "noise_var", None) is not None or getattr(args, "seed", None) is not None:
        noise = config.noise
        if args.noise_var is not None:
            noise = replace(noise, variance=args.noise_var)
        if args.seed is not None:
            noise = replace(noise, seed=args.seed)
        config = replace(config, noise=noise)
    sv = {}
    if getattr(args, "iterations", None) is not None:
        sv["iterations"] = args.iterations
    if getattr(args, "radius", None) is not None:
        sv["radius"] = args.radius
    if sv:
        config = replace(config, solver=replace(config.solver, **sv))
    if getattr(args, "viz", False):
        config = replace(config, visualize=True)
    return config


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpdisp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--out", required=True, help="output root")
        sp.add_argument("--workers", type=int, default=_default_workers(),
                        help=f"scene-level workers (default: ${WORKERS_ENV} or 1)")

    g = sub.add_parser("generate", help="render a QP dataset from RGB-D scenes")
    g.add_argument("rgbd_root")
    common(g)
    g.add_argument("--noise-var", type=float, help="Gaussian noise variance for noisy copies")
    g.add_argument("--seed", type=int, help="noise seed")

    e = sub.add_parser("estimate", help="estimate disparity maps for a dataset")
    e.add_argument("dataset_root")
    common(e)
    e.add_argument("--iterations", type=int)
    e.add_argument("--radius", type=int, help="correlation lookup radius")
    e.add_argument("--variant", choices=("clean", "noisy"), default="clean")
    e.add_argument("--viz", action="store_true", help="also write color-mapped PNGs")

    v = sub.add_parser("eval", help="score predictions against ground truth")
    v.add_argument("pred_root")
    v.add_argument("gt_root")
    v.add_argument("--config", help="JSON run config")
    v.add_argument("--out", help="report directory (default: pred_root)")

    k = sub.add_parser("psf", help="dump one PSF kernel as a PFM float map")
    k.add_argument("--radius", type=float, required=True, help="blur radius in pixels")
    k.add_argument("--direction", choices=psf.DIRECTIONS, default="right")
    k.add_argument("--family", default="half_disk")
    k.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "psf":
            info = cmd_psf(args.radius, args.direction, args.out, args.family)
        elif args.command == "eval":
            config = RunConfig.load(args.config) if args.config else RunConfig()
            result = cmd_eval(args.pred_root, args.gt_root, args.out, config)
            out = Path(args.out) if args.out else Path(args.pred_root)
            sys.stdout.write((out / "metrics.txt").read_text())
            info = result["mean"]
        else:
            config = _resolve_config(args)
            if args.command == "generate":
                info = cmd_generate(config, args.rgbd_root, args.out, args.workers)
            else:
                info = cmd_estimate(config, args.dataset_root, args.out, args.workers,
                                    args.variant)
    except (ValueError, OSError) as exc:
        print(f"qpdisp {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(info, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
