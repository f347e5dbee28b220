"""Iterative disparity estimation from a quad-pixel frame set.

The disparity starts at zero. Every iteration looks up the fused
correlation window at the current estimate, box-aggregates the fused
scores over a neighbourhood, takes their sub-pixel peak and moves the
estimate towards it. Early iterations read the coarsest pyramid scale and
later ones the finer scales; the aggregation window shrinks with the scale.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from qpdisp import matcher
from qpdisp.optics import DisparityMap


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``radius`` (lookup radius) and ``downsample`` (feature resolution) are
    not fixed by any reference setting; the defaults follow common practice
    for recurrent correlation-lookup stereo.
    """

    iterations: int = 8
    radius: int = 4
    damping: float = 0.8
    median_window: int = 3
    clamp: tuple = (-64.0, 64.0)
    downsample: int = 4
    temperature: float = 0.1
    directions: tuple = matcher.DIRECTIONS
    aggregate: tuple = (3, 5, 9, 15)
    min_sharpness: float = 1e-6

    def __post_init__(self):
        if not (isinstance(self.iterations, (int, np.integer)) and self.iterations >= 1):
            raise ValueError(f"iterations must be >= 1, got {self.iterations!r}")
        if not (isinstance(self.radius, (int, np.integer)) and self.radius >= 1):
            raise ValueError(f"radius must be >= 1, got {self.radius!r}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.median_window < 0 or (self.median_window and self.median_window % 2 == 0):
            raise ValueError(f"median_window must be 0 or odd, got {self.median_window}")
        lo, hi = self.clamp
        if not lo < hi:
            raise ValueError(f"clamp range must be increasing, got {self.clamp}")
        if self.downsample not in (1, 2, 4):
            raise ValueError(f"downsample must be 1, 2 or 4, got {self.downsample}")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if len(self.aggregate) != matcher.N_SCALES or any(
                int(a) != a or a < 1 or a % 2 == 0 for a in self.aggregate):
            raise ValueError(f"aggregate needs {matcher.N_SCALES} odd window sizes >= 1, "
                             f"got {self.aggregate}")
        bad = set(self.directions) - set(matcher.DIRECTIONS)
        if bad or not self.directions:
            raise ValueError(f"directions must be a non-empty subset of {matcher.DIRECTIONS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clamp"] = list(self.clamp)
        d["directions"] = list(self.directions)
        d["aggregate"] = list(self.aggregate)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        if "clamp" in d:
            d["clamp"] = tuple(d["clamp"])
        for key in ("directions", "aggregate"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def scale_schedule(iterations: int, n_scales: int = matcher.N_SCALES) -> list[int]:
    """Pyramid scale (1 = finest) read at each iteration, coarse first."""
    return [n_scales - (j * n_scales) // iterations for j in range(iterations)]


def subpixel_refine(window, argmax_index: int) -> float:
    """Sub-pixel peak position: vertex of the parabola through the three scores at the peak.

    Peaks on the window edge, and flat or non-concave triples, return the
    integer index unchanged.
    """
    w = np.asarray(window, dtype=np.float64)
    i = int(argmax_index)
    if i <= 0 or i >= len(w) - 1:
        return float(i)
    sm, s0, sp = w[i - 1], w[i], w[i + 1]
    denom = sm - 2.0 * s0 + sp
    if denom >= 0:
        return float(i)
    return i + float(np.clip(0.5 * (sm - sp) / denom, -1.0, 1.0))


def _refine_all(scores: np.ndarray) -> np.ndarray:
    """Vectorized :func:`subpixel_refine` over the last axis."""
    n = scores.shape[-1]
    idx = np.argmax(scores, axis=-1)
    inner = (idx > 0) & (idx < n - 1)
    j = np.clip(idx, 1, n - 2)
    sm = np.take_along_axis(scores, (j - 1)[..., None], -1)[..., 0]
    s0 = np.take_along_axis(scores, j[..., None], -1)[..., 0]
    sp = np.take_along_axis(scores, (j + 1)[..., None], -1)[..., 0]
    denom = sm - 2.0 * s0 + sp
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.clip(0.5 * (sm - sp) / denom, -1.0, 1.0)
    delta = np.where(inner & (denom < 0), delta, 0.0)
    return idx + delta


def _features(frames, config: SolverConfig):
    views = frames.views
    center = matcher.extract_features(views["center"], config.downsample)
    sides = {d: matcher.extract_features(views[matcher.DIRECTION_VIEWS[d]], config.downsample)
             for d in config.directions}
    return center, sides


def iterate(frames, config: SolverConfig = SolverConfig()):
    """Yield the feature-resolution disparity after each iteration.

    The final yielded array is the estimate before upsampling; a boolean
    ``flat`` map (pixels where no direction had any correlation structure)
    is returned as the generator's value.
    """
    center, sides = _features(frames, config)
    pyramids = matcher.build_pyramids(center, sides, config.directions)
    h, w = center.shape
    d = np.zeros((h, w))
    lo, hi = config.clamp
    r = config.radius
    flat = None
    for scale in scale_schedule(config.iterations):
        feat = matcher.lookup(pyramids, d, r, config.directions, pool_phase=True)
        scores, _ = matcher.fuse(feat, config.temperature, scales=(scale,))
        size = config.aggregate[scale - 1]
        if size > 1:
            scores = ndimage.uniform_filter(scores, (size, size, 1), mode="nearest")
        sharp = scores.max(axis=-1) - scores.min(axis=-1)
        flat = sharp < config.min_sharpness
        offset = _refine_all(scores) - r
        offset[flat] = 0.0
        d = np.clip(d + config.damping * offset * 2.0 ** (scale - 1), lo / config.downsample,
                    hi / config.downsample)
        if config.median_window:
            d = ndimage.median_filter(d, size=config.median_window, mode="nearest")
        yield d.copy()
    return flat


def upsample(disp: np.ndarray, factor: int, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear upsampling with disparity values scaled by ``factor``."""
    if factor == 1:
        return disp[: shape[0], : shape[1]].copy()
    yy = (np.arange(shape[0]) - (factor - 1) / 2) / factor
    xx = (np.arange(shape[1]) - (factor - 1) / 2) / factor
    coords = np.meshgrid(yy, xx, indexing="ij")
    return factor * ndimage.map_coordinates(disp, coords, order=1, mode="nearest")


def estimate(frames, config: SolverConfig = SolverConfig()) -> DisparityMap:
    """Disparity map at image resolution aligned to the center view."""
    gen = iterate(frames, config)
    d = None
    while True:
        try:
            d = next(gen)
        except StopIteration as stop:
            flat = stop.value
            break
    full = upsample(d, config.downsample, frames.shape)
    low = bool(flat.all())
    if low:
        full = np.zeros(frames.shape)
    return DisparityMap(full, low_confidence=low,
                        meta={"solver": config.to_dict(), "flat_fraction": float(flat.mean())})
