"""File formats, scene ingestion and dataset manifests.

On-disk layout of a generated dataset::

    <root>/manifest.json
    <root>/<scene_id>/{left,right,center,top,bottom}.png16   16-bit PNG, gamma-encoded
    <root>/<scene_id>/gt_disp.pfm                            float32 disparity (px)
    <root>/<scene_id>/mask.pfm                               1.0 valid / 0.0 invalid
    <root>/<scene_id>/meta.json

An RGB-D input root holds one directory per scene with ``image.png`` (or
``.jpg``/``.png16``/``.npy``) and ``depth.pfm`` (or ``depth.npy``) in meters.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from qpdisp.optics import CameraParams, DepthMap, DisparityMap
from qpdisp.renderer import VIEWS, QpFrameSet

VIEW_EXT = ".png16"
IMAGE_NAMES = ("image.png", "image.png16", "image.jpg", "image.npy")
DEPTH_NAMES = ("depth.pfm", "depth.npy")
TRANSFERS = ("srgb", "linear")


class SceneRejected(Exception):
    """Scene is readable but fails the validity requirements."""


# --- portable float map ----------------------------------------------------

def write_pfm(path, data: np.ndarray) -> None:
    """Write a 1- or 3-channel float map, little-endian, bottom row first."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        mode = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        mode = b"PF"
    else:
        raise ValueError(f"PFM needs an (H, W) or (H, W, 3) array, got {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(mode + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(np.flipud(data)).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header not in (b"Pf", b"PF"):
            raise ValueError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline()
        while dims.startswith(b"#"):
            dims = f.readline()
        m = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"{path}: malformed PFM dimensions {dims!r}")
        w, h = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if header == b"PF" else 1
        count = w * h * channels
        data = np.frombuffer(f.read(count * 4), dtype=dtype)
    if data.size != count:
        raise ValueError(f"{path}: truncated PFM payload ({data.size} of {count} values)")
    shape = (h, w, 3) if channels == 3 else (h, w)
    return np.flipud(data.reshape(shape)).astype(np.float32)


# --- transfer functions ----------------------------------------------------

def srgb_decode(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def srgb_encode(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1 / 2.4) - 0.055)


def _encode(x, transfer):
    return srgb_encode(x) if transfer == "srgb" else np.clip(x, 0.0, 1.0)


def _decode(v, transfer):
    return srgb_decode(v) if transfer == "srgb" else v


# --- images ----------------------------------------------------------------

def _imread_raw(path: Path) -> np.ndarray:
    buf = np.fromfile(path, dtype=np.uint8)
    img = cv2.imdecode(buf, cv2.IMREAD_UNCHANGED) if buf.size else None
    if img is None:
        raise ValueError(f"{path}: cannot decode image")
    if img.ndim == 3:
        img = img[:, :, :3][:, :, ::-1]     # BGR(A) -> RGB
    return img


def read_image(path, transfer: str = "srgb") -> np.ndarray:
    """Decode an 8/16-bit image (or ``.npy`` of encoded floats) to linear [0, 1]."""
    path = Path(path)
    if path.suffix == ".npy":
        return _decode(np.clip(np.load(path).astype(np.float64), 0.0, 1.0), transfer)
    raw = _imread_raw(path)
    if raw.dtype == np.uint8:
        v = raw / 255.0
    elif raw.dtype == np.uint16:
        v = raw / 65535.0
    else:
        raise ValueError(f"{path}: unsupported sample type {raw.dtype}")
    return _decode(v, transfer)


def write_image16(path, image: np.ndarray, transfer: str = "srgb") -> None:
    """Store a linear image as a 16-bit PNG with the given transfer function."""
    code = np.round(_encode(image, transfer) * 65535.0).astype(np.uint16)
    if code.ndim == 3:
        code = code[:, :, ::-1]
    ok, buf = cv2.imencode(".png", code)
    if not ok:
        raise OSError(f"{path}: PNG encoding failed")
    Path(path).write_bytes(buf.tobytes())


def read_depth(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".pfm":
        d = read_pfm(path)
    elif path.suffix == ".npy":
        d = np.load(path)
    else:
        raise ValueError(f"{path}: unsupported depth format")
    if d.ndim == 3:
        d = d[:, :, 0]
    return d.astype(np.float64)


# --- scenes ----------------------------------------------------------------

@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    image_path: str
    depth_path: str
    camera: str = "default"


def load_scene(record: SceneRecord, depth_range=(0.5, 50.0), min_valid_fraction: float = 1.0,
               transfer: str = "srgb"):
    """Read one RGB-D scene as ``(linear image, DepthMap)``.

    Depths outside ``depth_range`` (inclusive) are masked. A scene whose valid
    fraction is below ``min_valid_fraction`` raises :class:`SceneRejected`.
    """
    try:
        image = read_image(record.image_path, transfer)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read image {record.image_path}: {exc}") from exc
    try:
        raw = read_depth(record.depth_path)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read depth {record.depth_path}: {exc}") from exc
    if image.shape[:2] != raw.shape:
        raise ValueError(f"{record.scene_id}: image {image.shape[:2]} and depth {raw.shape} "
                         "dimensions differ")
    lo, hi = depth_range
    with np.errstate(invalid="ignore"):
        in_range = np.isfinite(raw) & (raw >= lo) & (raw <= hi)
    depth = DepthMap(raw, in_range)
    frac = float(depth.valid_mask.mean())
    if frac < min_valid_fraction:
        raise SceneRejected(f"{record.scene_id}: only {frac:.1%} of pixels within "
                            f"{lo}-{hi} m (need {min_valid_fraction:.1%})")
    return image, depth


def discover_scenes(rgbd_root) -> list[SceneRecord]:
    """Scene records for every sub-directory holding an image and a depth file."""
    root = Path(rgbd_root)
    if not root.is_dir():
        raise FileNotFoundError(f"input root {root} is not a directory")
    records = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        img = next((sub / n for n in IMAGE_NAMES if (sub / n).exists()), None)
        dep = next((sub / n for n in DEPTH_NAMES if (sub / n).exists()), None)
        if img is not None and dep is not None:
            records.append(SceneRecord(sub.name, str(img), str(dep)))
    return records


# --- manifest and splits -----------------------------------------------------

@dataclass
class DatasetManifest:
    records: list
    splits: dict = field(default_factory=dict)   # scene_id -> train / val / test
    settings: dict = field(default_factory=dict)
    seed: int | None = None

    def split_sizes(self) -> dict:
        sizes = {"train": 0, "val": 0, "test": 0}
        for s in self.splits.values():
            sizes[s] += 1
        return sizes

    def to_json(self) -> str:
        doc = {
            "records": [vars(r) if isinstance(r, SceneRecord) else dict(r)
                        for r in self.records],
            "splits": dict(sorted(self.splits.items())),
            "split_sizes": self.split_sizes(),
            "seed": self.seed,
            "settings": self.settings,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        return cls([SceneRecord(**r) for r in doc["records"]], doc.get("splits", {}),
                   doc.get("settings", {}), doc.get("seed"))

    def write(self, root) -> Path:
        path = Path(root) / "manifest.json"
        path.write_text(self.to_json())
        return path

    @classmethod
    def read(cls, root) -> "DatasetManifest":
        return cls.from_json((Path(root) / "manifest.json").read_text())


def _counts_from_ratios(ratios, n):
    ratios = np.asarray(ratios, dtype=np.float64)
    if (ratios < 0).any() or ratios.sum() <= 0:
        raise ValueError(f"invalid split ratios {tuple(ratios)}")
    exact = ratios / ratios.sum() * n
    counts = np.floor(exact).astype(int)
    # largest remainders first, ties to the earlier split
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[: n - counts.sum()]] += 1
    return [int(c) for c in counts]


def split_dataset(manifest: DatasetManifest, ratios=None, counts=None, seed: int = 0):
    """Shuffle the records with ``seed`` and cut them into train/val/test.

    Give either exact ``counts`` (must sum to the number of records) or
    ``ratios`` (apportioned by largest remainder).
    """
    ids = sorted(r.scene_id for r in manifest.records)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate scene ids in manifest")
    n = len(ids)
    if counts is None:
        if ratios is None:
            raise ValueError("give split counts or ratios")
        counts = _counts_from_ratios(ratios, n)
    counts = [int(c) for c in counts]
    if len(counts) != 3 or min(counts) < 0:
        raise ValueError(f"need three non-negative split counts, got {counts}")
    if sum(counts) > n:
        raise ValueError(f"split counts {counts} exceed the {n} records")
    if sum(counts) != n:
        raise ValueError(f"split counts {counts} do not sum to the {n} records")
    perm = np.random.default_rng(seed).permutation(n)
    names = ("train",) * counts[0] + ("val",) * counts[1] + ("test",) * counts[2]
    splits = {ids[i]: names[k] for k, i in enumerate(perm)}
    return DatasetManifest(list(manifest.records), splits, dict(manifest.settings), seed)


# --- frame sets ------------------------------------------------------------

def write_frameset(frames: QpFrameSet, directory, transfer: str = "srgb") -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for v in VIEWS:
        write_image16(d / f"{v}{VIEW_EXT}", frames.views[v], transfer)
    if frames.gt_disparity is not None:
        gt = frames.gt_disparity
        write_pfm(d / "gt_disp.pfm", np.where(gt.valid_mask, gt.values, 0.0))
        write_pfm(d / "mask.pfm", gt.valid_mask.astype(np.float32))
    meta = dict(frames.meta, transfer=transfer)
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable)
                                 + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def read_frameset(directory) -> QpFrameSet:
    d = Path(directory)
    meta_path = d / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    transfer = meta.get("transfer", "srgb")
    views = {}
    for v in VIEWS:
        p = d / f"{v}{VIEW_EXT}"
        if not p.exists():
            raise FileNotFoundError(f"{d}: missing view '{v}' ({p.name})")
        views[v] = read_image(p, transfer)
    gt = None
    if (d / "gt_disp.pfm").exists():
        values = read_pfm(d / "gt_disp.pfm")
        mask = read_pfm(d / "mask.pfm") > 0.5 if (d / "mask.pfm").exists() else None
        gt = DisparityMap(values, mask)
    return QpFrameSet(views, gt, meta)


def scene_dirs(root) -> list[str]:
    """Scene ids under a dataset root: manifest order if present, else directories with views."""
    root = Path(root)
    if (root / "manifest.json").exists():
        return sorted(r.scene_id for r in DatasetManifest.read(root).records)
    return sorted(p.name for p in root.iterdir()
                  if p.is_dir() and any((p / f"{v}{VIEW_EXT}").exists() for v in VIEWS))


def camera_from_meta(meta: dict) -> CameraParams | None:
    cam = meta.get("camera")
    return CameraParams.from_dict(cam) if cam else None


def atomic_write_bytes(path, data: bytes) -> None:
    tmp = Path(f"{path}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)
