"""Correlation volumes, pyramids and multi-direction lookup.

Four matching directions pair the center view with each side view:
``l``/``r`` are matched along rows (volume H x W x W), ``t``/``b`` along
columns (volume H x W x H). For a pixel with disparity ``d`` the
correspondence sits at ``x + d`` in the right view, ``x - d`` in the left,
``y - d`` in the top and ``y + d`` in the bottom view.

The looked-up feature is ordered direction-major, scale-minor::

    [l1, l2, l3, l4, r1, ..., r4, t1, ..., t4, b1, ..., b4]

where each block holds ``2r + 1`` samples at offsets ``-r .. +r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DIRECTIONS = ("l", "r", "t", "b")
DIRECTION_VIEWS = {"l": "left", "r": "right", "t": "top", "b": "bottom"}
AXIS = {"l": "horizontal", "r": "horizontal", "t": "vertical", "b": "vertical"}
SIGN = {"l": -1.0, "r": 1.0, "t": -1.0, "b": 1.0}
N_SCALES = 4
WINDOW = 7
LUMA = np.array([0.2126, 0.7152, 0.0722])
# relative weights of the descriptor parts; the patch part dominates
_LUM_WEIGHT = 0.1
_GRAD_WEIGHT = 1.0


@dataclass(frozen=True)
class FeatureMap:
    """Unit-norm descriptors, shape (H, W, N_F), at 1/``downsample`` resolution."""

    data: np.ndarray
    downsample: int = 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class CorrelationVolume:
    axis: str
    values: np.ndarray


@dataclass(frozen=True)
class CorrelationPyramid:
    levels: tuple

    @property
    def axis(self) -> str:
        return self.levels[0].axis

    def __getitem__(self, k: int) -> CorrelationVolume:
        return self.levels[k]

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class LocalCorrelationFeature:
    """Looked-up windows, shape (H, W, 16 * (2r + 1))."""

    data: np.ndarray
    radius: int
    directions: tuple = DIRECTIONS
    n_scales: int = N_SCALES

    def windows(self) -> np.ndarray:
        """View as (H, W, n_directions, n_scales, 2r + 1)."""
        h, w, _ = self.data.shape
        return self.data.reshape(h, w, len(self.directions), self.n_scales, 2 * self.radius + 1)


def to_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        if image.shape[2] == 1:
            return image[:, :, 0]
        return image[:, :, :3] @ LUMA
    return image


def downsample(image: np.ndarray, factor: int) -> np.ndarray:
    """Block-mean downsampling; edges are replicated up to a multiple of ``factor``."""
    if factor == 1:
        return image
    h, w = image.shape
    ph, pw = -h % factor, -w % factor
    if ph or pw:
        image = np.pad(image, ((0, ph), (0, pw)), mode="edge")
    hh, ww = image.shape
    return image.reshape(hh // factor, factor, ww // factor, factor).mean(axis=(1, 3))


def extract_features(image: np.ndarray, downsample_factor: int = 4) -> FeatureMap:
    """Hand-crafted descriptor over a 7x7 window.

    Channels: the 49 mean-subtracted patch intensities, the x/y central
    differences and the local mean luminance, L2-normalized per pixel.
    Borders use half-sample symmetric extension, so the descriptor is
    translation-equivariant away from the image edge.
    """
    if downsample_factor not in (1, 2, 4):
        raise ValueError(f"downsample_factor must be 1, 2 or 4, got {downsample_factor}")
    gray = downsample(to_gray(image), downsample_factor)
    h, w = gray.shape
    if h < WINDOW or w < WINDOW:
        raise ValueError(f"image too small for a {WINDOW}x{WINDOW} descriptor: {gray.shape}")
    rad = WINDOW // 2
    p = np.pad(gray, rad, mode="symmetric")
    mean = ndimage.uniform_filter(gray, WINDOW, mode="reflect")
    patches = np.lib.stride_tricks.sliding_window_view(p, (WINDOW, WINDOW))
    patches = patches.reshape(h, w, WINDOW * WINDOW) - mean[:, :, None]
    gx = 0.5 * (p[rad:rad + h, rad + 1:rad + w + 1] - p[rad:rad + h, rad - 1:rad + w - 1])
    gy = 0.5 * (p[rad + 1:rad + h + 1, rad:rad + w] - p[rad - 1:rad + h - 1, rad:rad + w])
    feat = np.concatenate([
        patches,
        _GRAD_WEIGHT * np.stack([gx, gy], axis=2),
        _LUM_WEIGHT * mean[:, :, None],
    ], axis=2)
    norm = np.linalg.norm(feat, axis=2, keepdims=True)
    flat = norm[:, :, 0] < 1e-12
    feat = feat / np.where(norm < 1e-12, 1.0, norm)
    # all-black flat patches have no direction; pin them to the luminance axis
    feat[flat] = 0.0
    feat[flat, -1] = 1.0
    return FeatureMap(feat, downsample_factor)


def build_volume(ref: FeatureMap, other: FeatureMap, axis: str) -> CorrelationVolume:
    """All-pairs inner products along one axis.

    horizontal: ``v[y, x, s] = <ref[y, x], other[y, s]>``
    vertical:   ``v[y, x, s] = <ref[y, x], other[s, x]>``
    """
    a = ref.data if isinstance(ref, FeatureMap) else np.asarray(ref)
    b = other.data if isinstance(other, FeatureMap) else np.asarray(other)
    if a.shape != b.shape:
        raise ValueError(f"feature maps differ in shape: {a.shape} vs {b.shape}")
    if axis == "horizontal":
        vol = np.einsum("yxc,ysc->yxs", a, b, optimize=True)
    elif axis == "vertical":
        vol = np.einsum("yxc,sxc->yxs", a, b, optimize=True)
    else:
        raise ValueError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")
    return CorrelationVolume(axis, vol)


def pool_last(values: np.ndarray) -> np.ndarray:
    """Width-2, stride-2 mean over the last axis; an odd tail is kept as is."""
    n = values.shape[-1]
    even = values[..., : n - n % 2]
    pooled = 0.5 * (even[..., 0::2] + even[..., 1::2])
    if n % 2:
        pooled = np.concatenate([pooled, values[..., -1:]], axis=-1)
    return pooled


def build_pyramid(volume: CorrelationVolume, n_scales: int = N_SCALES) -> CorrelationPyramid:
    if volume.values.shape[-1] < 2 ** (n_scales - 1):
        raise ValueError(
            f"last dimension {volume.values.shape[-1]} too short for {n_scales} scales "
            f"(need >= {2 ** (n_scales - 1)})")
    levels = [volume]
    for _ in range(n_scales - 1):
        levels.append(CorrelationVolume(volume.axis, pool_last(levels[-1].values)))
    return CorrelationPyramid(tuple(levels))


def _sample(values: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Linear interpolation of ``values[y, x, :]`` at fractional ``coords[y, x, j]``."""
    n = values.shape[-1]
    c = np.clip(coords, 0.0, n - 1)
    # integer positions (including the last index) get frac == 0 and so return exact entries
    i0 = np.floor(c).astype(np.intp)
    frac = c - i0
    i1 = np.minimum(i0 + 1, n - 1)
    v0 = np.take_along_axis(values, i0, axis=-1)
    v1 = np.take_along_axis(values, i1, axis=-1)
    return v0 + frac * (v1 - v0)


def lookup_centers(disparity: np.ndarray, direction: str) -> np.ndarray:
    """Signed lookup position in the full-resolution volume for each pixel."""
    h, w = disparity.shape
    if AXIS[direction] == "horizontal":
        base = np.broadcast_to(np.arange(w, dtype=np.float64), (h, w))
    else:
        base = np.broadcast_to(np.arange(h, dtype=np.float64)[:, None], (h, w))
    return base + SIGN[direction] * disparity


def lookup(pyramids: dict, disparity, r: int = 4, directions=DIRECTIONS,
           pool_phase: bool = False) -> LocalCorrelationFeature:
    """Sample ``2r + 1`` correlations per direction and scale around the current disparity.

    At scale ``k`` (0-based) the window is centered at ``center / 2**k``;
    with ``pool_phase=True`` it is centered on the pooled cell that covers
    ``center`` instead, i.e. ``(center - (2**k - 1) / 2) / 2**k``. Positions
    outside the volume are clamped to the edge.
    """
    if not (isinstance(r, (int, np.integer)) and r >= 1):
        raise ValueError(f"lookup radius must be an integer >= 1, got {r!r}")
    d = np.asarray(getattr(disparity, "values", disparity), dtype=np.float64)
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    blocks = []
    n_scales = None
    for dirn in directions:
        pyr = pyramids[dirn]
        n_scales = len(pyr)
        center = lookup_centers(d, dirn)
        for k in range(len(pyr)):
            scale = 2.0 ** k
            c = (center - (scale - 1) / 2) / scale if pool_phase else center / scale
            blocks.append(_sample(pyr[k].values, c[:, :, None] + offsets))
    return LocalCorrelationFeature(np.concatenate(blocks, axis=-1), int(r), tuple(directions),
                                   n_scales)


def residual_frame(feature: LocalCorrelationFeature) -> np.ndarray:
    """Windows re-indexed so offset ``o`` means "disparity is ``o`` larger" for every direction.

    Directions looked up with a reversed sign (``l``, ``t``) are mirrored.
    Returns (H, W, n_directions, n_scales, 2r + 1).
    """
    win = feature.windows().copy()
    for i, dirn in enumerate(feature.directions):
        if SIGN[dirn] < 0:
            win[:, :, i] = win[:, :, i, :, ::-1]
    return win


def fuse(feature: LocalCorrelationFeature, temperature: float = 0.1, scales=None):
    """Confidence-weighted fusion of all direction/scale windows.

    Each window's confidence is its peak sharpness (max minus mean); the
    weights are a softmax of confidence / ``temperature`` over the selected
    (direction, scale) pairs, so they sum to one per pixel and flat windows
    get equal shares. Windows are first brought to the common residual
    frame (see :func:`residual_frame`).

    Returns ``(scores, weights)`` with shapes (H, W, 2r + 1) and
    (H, W, n_directions, n_scales); unselected scales get weight 0.
    """
    win = residual_frame(feature)
    n_dir, n_sc = win.shape[2], win.shape[3]
    sel = np.zeros(n_sc, dtype=bool)
    sel[list(range(n_sc)) if scales is None else [s - 1 for s in scales]] = True
    sharp = win.max(axis=-1) - win.mean(axis=-1)
    logits = np.where(sel, sharp / temperature, -np.inf)
    logits = logits - logits.max(axis=(2, 3), keepdims=True)
    wts = np.exp(logits)
    wts /= wts.sum(axis=(2, 3), keepdims=True)
    scores = np.einsum("yxds,yxdso->yxo", wts, win)
    return scores, wts


def build_pyramids(center: FeatureMap, sides: dict, directions=DIRECTIONS) -> dict:
    """Correlation pyramids for each direction, keyed ``l``/``r``/``t``/``b``."""
    return {d: build_pyramid(build_volume(center, sides[d], AXIS[d])) for d in directions}
