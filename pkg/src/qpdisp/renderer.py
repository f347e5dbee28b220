"""Layered defocus rendering of the five quad-pixel views."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from qpdisp import psf
from qpdisp.optics import CameraParams, CocMap, DepthMap, DisparityMap, coc_from_depth, \
    disparity_from_coc

VIEWS = ("left", "right", "center", "top", "bottom")
DEFAULT_LAYER_WIDTH = 0.1
DEFAULT_OCCLUSION_GAP = 1.0


@dataclass
class QpFrameSet:
    """Five co-registered views plus optional ground truth.

    Views are float arrays of shape (H, W) or (H, W, C) in linear [0, 1].
    """

    views: dict
    gt_disparity: DisparityMap | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [v for v in VIEWS if v not in self.views]
        if missing:
            raise ValueError(f"frameset missing views: {missing}")
        shapes = {np.shape(self.views[v]) for v in VIEWS}
        if len(shapes) != 1:
            raise ValueError(f"views differ in shape: {sorted(shapes)}")
        if self.gt_disparity is not None and self.gt_disparity.shape != self.shape:
            raise ValueError("gt_disparity is not aligned with the center view")

    @property
    def shape(self) -> tuple[int, int]:
        return np.shape(self.views["center"])[:2]


@dataclass(frozen=True)
class DepthLayering:
    """Equal-width slabs in CoC space with lattice-snapped representatives."""

    boundaries: np.ndarray
    radii: np.ndarray

    @property
    def n_layers(self) -> int:
        return len(self.radii)

    def assign(self, coc: np.ndarray) -> np.ndarray:
        """Layer index of each CoC value (values outside the range are clipped)."""
        if self.n_layers == 1:
            return np.zeros(np.shape(coc), dtype=np.intp)
        idx = np.searchsorted(self.boundaries[1:-1], coc, side="right")
        return idx.astype(np.intp)


def plan_layers(coc: CocMap, max_layer_width_px: float = DEFAULT_LAYER_WIDTH) -> DepthLayering:
    if not max_layer_width_px > 0:
        raise ValueError(f"max_layer_width_px must be > 0, got {max_layer_width_px}")
    lo, hi = coc.valid_range()
    span = hi - lo
    n = max(1, math.ceil(span / max_layer_width_px - 1e-9))
    bounds = np.linspace(lo, hi, n + 1)
    if n == 1 and span == 0:
        bounds = np.array([lo, hi])
    mids = 0.5 * (bounds[:-1] + bounds[1:])
    radii = np.round(mids / psf.RADIUS_STEP) * psf.RADIUS_STEP
    return DepthLayering(bounds, radii)


def _fill_invalid(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if mask.all():
        return values
    if not mask.any():
        raise ValueError("depth map has no valid pixels")
    idx = ndimage.distance_transform_edt(~mask, return_distances=False, return_indices=True)
    return values[tuple(idx)]


def _convolve(stack: np.ndarray, taps: np.ndarray) -> np.ndarray:
    if taps.shape == (1, 1):
        return stack * taps[0, 0]
    return fftconvolve(stack, taps[:, :, None], mode="same", axes=(0, 1))


def render_view(aif: np.ndarray, coc_values: np.ndarray, layering: DepthLayering, view: str,
                kernel_family: str = "half_disk",
                occlusion_gap_px: float = DEFAULT_OCCLUSION_GAP) -> np.ndarray:
    """One view by layered compositing with blurred-mask renormalization.

    Each layer's premultiplied image and its mask are blurred with the view's
    kernel at the layer radius. A layer is attenuated by the blurred masks of
    the layers in front of it whose CoC is smaller by more than
    ``occlusion_gap_px``; closer neighbours belong to the same continuous
    surface and add linearly. With a gap below the layer width this reduces
    to plain back-to-front "over". The composite is divided by the
    accumulated coverage. Borders use half-sample symmetric extension.
    """
    squeeze = aif.ndim == 2
    img = aif[:, :, None] if squeeze else aif
    h, w, c = img.shape
    pad = max(psf.make_kernel(abs(r), view, kernel_family).half_width for r in layering.radii)
    img_p = np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="symmetric")
    labels = np.pad(layering.assign(coc_values), pad, mode="symmetric")
    shape = labels.shape
    acc = np.zeros(shape + (c,))
    alpha = np.zeros(shape)
    front = np.ones(shape)      # product of (1 - coverage) over all processed layers
    snapshots = deque()         # (layer index, copy of ``front`` after that layer)
    lag = _occlusion_lag(layering, occlusion_gap_px)
    # near to far: smaller CoC first
    for k in range(layering.n_layers):
        mask = labels == k
        if not mask.any():
            continue
        while len(snapshots) > 1 and snapshots[1][0] <= k - lag:
            snapshots.popleft()
        if snapshots and snapshots[0][0] <= k - lag:
            trans_full = snapshots[0][1]
        else:
            trans_full = None
        kern = psf.view_kernel(float(layering.radii[k]), view, kernel_family)
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        hw = kern.half_width
        y0, y1 = max(rows[0] - hw, 0), min(rows[-1] + hw + 1, shape[0])
        x0, x1 = max(cols[0] - hw, 0), min(cols[-1] + hw + 1, shape[1])
        win = (slice(y0, y1), slice(x0, x1))
        m = mask[win].astype(np.float64)
        stack = np.concatenate([img_p[win] * m[:, :, None], m[:, :, None]], axis=2)
        blurred = _convolve(stack, kern.taps)
        a = np.clip(blurred[:, :, -1], 0.0, 1.0)
        color = blurred[:, :, :-1]
        if trans_full is not None:
            t = trans_full[win]
            color = color * t[:, :, None]
            a_eff = a * t
        else:
            a_eff = a
        acc[win] += color
        alpha[win] += a_eff
        front[win] *= 1.0 - a
        snapshots.append((k, front.copy()))
    acc = acc[pad:pad + h, pad:pad + w]
    alpha = alpha[pad:pad + h, pad:pad + w]
    out = acc / np.maximum(alpha, 1e-12)[:, :, None]
    out = np.clip(out, 0.0, 1.0)
    return out[:, :, 0] if squeeze else out


def _occlusion_lag(layering: DepthLayering, gap: float) -> int:
    """Index distance at which a nearer layer starts to occlude."""
    if layering.n_layers == 1:
        return 1
    width = layering.boundaries[1] - layering.boundaries[0]
    return max(1, math.ceil(gap / width - 1e-9))


def render_qp(aif: np.ndarray, depth: DepthMap, params: CameraParams,
              layering: DepthLayering | None = None, kernel_family: str = "half_disk",
              layer_width: float = DEFAULT_LAYER_WIDTH,
              occlusion_gap_px: float = DEFAULT_OCCLUSION_GAP) -> QpFrameSet:
    """Render left/right/center/top/bottom views and the ground-truth disparity.

    Invalid depth pixels are rendered with the CoC of their nearest valid
    neighbour and are masked out of the ground truth.
    """
    aif = np.asarray(aif, dtype=np.float64)
    if not isinstance(depth, DepthMap):
        depth = DepthMap(depth)
    if aif.shape[:2] != depth.shape or aif.ndim not in (2, 3):
        raise ValueError(f"image shape {aif.shape} does not match depth shape {depth.shape}")
    if not np.isfinite(aif).all():
        raise ValueError("all-in-focus image contains non-finite values")
    coc = coc_from_depth(params, depth)
    if layering is None:
        layering = plan_layers(coc, layer_width)
    psf.get_family(kernel_family)
    coc_filled = _fill_invalid(coc.values, coc.valid_mask)
    views = {v: render_view(aif, coc_filled, layering, v, kernel_family, occlusion_gap_px)
             for v in VIEWS}
    gt = disparity_from_coc(coc, kernel_family)
    meta = {
        "camera": params.to_dict(),
        "kernel_family": kernel_family,
        "n_layers": layering.n_layers,
        "layer_width": float(layering.boundaries[1] - layering.boundaries[0])
        if layering.n_layers > 1 else 0.0,
        "occlusion_gap_px": occlusion_gap_px,
    }
    return QpFrameSet(views, gt, meta)


def add_gaussian_noise(frames: QpFrameSet, variance: float, seed: int) -> QpFrameSet:
    """Add i.i.d. zero-mean Gaussian noise to every view and clamp to [0, 1].

    Each view draws from its own stream keyed by ``(seed, view index)`` so the
    result does not depend on the order in which views are processed.
    """
    if not (math.isfinite(variance) and variance >= 0):
        raise ValueError(f"noise variance must be >= 0, got {variance}")
    if variance == 0:
        return QpFrameSet({v: np.array(frames.views[v], copy=True) for v in VIEWS},
                          frames.gt_disparity, dict(frames.meta))
    sigma = math.sqrt(variance)
    views = {}
    for i, v in enumerate(VIEWS):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, i])))
        x = np.asarray(frames.views[v], dtype=np.float64)
        views[v] = np.clip(x + sigma * rng.standard_normal(x.shape), 0.0, 1.0)
    meta = dict(frames.meta, noise_variance=variance, noise_seed=seed)
    return QpFrameSet(views, frames.gt_disparity, meta)
