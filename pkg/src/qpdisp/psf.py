"""Directional PSF kernels for the five quad-pixel views.

The right kernel of a defocused point is one half of the blur disk. The other
views are derived from it with exact array operations, so the symmetry
relations hold bit-for-bit:

* left   = right mirrored in x
* top    = left rotated 90 degrees clockwise (on screen, +y down)
* bottom = right rotated 90 degrees clockwise
* center = 0.5 * (left + right)

With this orientation a point with signed disparity ``d`` lands at ``(+d, 0)``
in the right view, ``(-d, 0)`` in the left, ``(0, -d)`` in the top and
``(0, +d)`` in the bottom view.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

RADIUS_STEP = 0.01
DIRECTIONS = ("left", "right", "center", "top", "bottom")
_OPPOSITE = {"left": "right", "right": "left", "top": "bottom", "bottom": "top",
             "center": "center"}


def quantize_radius(radius_px: float) -> float:
    """Snap a radius to the 0.01 px lattice."""
    return round(radius_px / RADIUS_STEP) * RADIUS_STEP


def _radius_key(radius_px: float) -> int:
    return int(round(radius_px / RADIUS_STEP))


@dataclass(frozen=True)
class PsfKernel:
    radius_px: float
    direction: str
    taps: np.ndarray

    @property
    def center_index(self) -> tuple[int, int]:
        n = self.taps.shape[0] // 2
        return n, n

    @property
    def half_width(self) -> int:
        return self.taps.shape[0] // 2


# --- half-disk family ------------------------------------------------------

def _half_disk_taps(radius: float) -> np.ndarray:
    """Right half of a uniform disk, rasterized analytically.

    Each tap integrates the half-disk indicator against a separable pixel
    filter: a unit box in y and a unit tent (linear B-spline) in x. The tent
    is a partition of unity that reproduces linear functions, so the tap sum
    equals the half-disk area and the tap-weighted x-centroid equals the
    continuous centroid 4R/(3 pi) exactly. All integrals are closed form.
    """
    n = math.ceil(radius)
    R2 = radius * radius
    rows, cols = np.meshgrid(np.arange(-n, n + 1, dtype=np.float64),
                             np.arange(-n, n + 1, dtype=np.float64), indexing="ij")
    i = rows.ravel()
    j = cols.ravel()
    lo = np.clip(j - 1.0, 0.0, radius)
    hi = np.clip(j + 1.0, 0.0, radius)

    def cross(yb):
        with np.errstate(invalid="ignore"):
            return np.where(np.abs(yb) < radius, np.sqrt(np.maximum(R2 - yb * yb, 0.0)), lo)

    cand = np.stack([lo, hi, j, cross(i - 0.5), cross(i + 0.5)], axis=1)
    cand = np.clip(cand, lo[:, None], hi[:, None])
    cand.sort(axis=1)
    u = cand[:, :-1]
    v = cand[:, 1:]
    m = 0.5 * (u + v)

    def h(x):
        return np.sqrt(np.maximum(R2 - x * x, 0.0))

    def G(x):  # integral of h
        return 0.5 * (x * h(x) + R2 * np.arcsin(np.clip(x / radius, -1.0, 1.0)))

    def H(x):  # integral of x * h
        return -(np.maximum(R2 - x * x, 0.0) ** 1.5) / 3.0

    hm = h(m)
    top = (i + 0.5)[:, None]
    bot = (i - 0.5)[:, None]
    upper_is_h = hm < top
    lower_is_h = -hm > bot
    c0 = np.where(upper_is_h, 0.0, top) - np.where(lower_is_h, 0.0, bot)
    c1 = upper_is_h.astype(np.float64) + lower_is_h
    covered = (np.minimum(top, hm) - np.maximum(bot, -hm)) > 0
    jj = j[:, None]
    left_side = m < jj
    a = np.where(left_side, 1.0 - jj, 1.0 + jj)
    b = np.where(left_side, 1.0, -1.0)
    seg = (c0 * (a * (v - u) + b * (v * v - u * u) / 2.0)
           + c1 * (a * (G(v) - G(u)) + b * (H(v) - H(u))))
    seg = np.where(covered & (v > u), seg, 0.0)
    taps = np.maximum(seg.sum(axis=1), 0.0).reshape(2 * n + 1, 2 * n + 1)
    return taps / taps.sum()


class HalfDiskFamily:
    """Uniform half-disk split along the vertical diameter."""

    name = "half_disk"

    @staticmethod
    def right_taps(radius: float) -> np.ndarray:
        return _half_disk_taps(radius)

    @staticmethod
    def centroid(radius):
        return 4.0 * np.asarray(radius, dtype=np.float64) / (3.0 * np.pi) if np.ndim(radius) \
            else 4.0 * radius / (3.0 * math.pi)


_FAMILIES = {"half_disk": HalfDiskFamily()}


def register_family(name: str, family) -> None:
    """Add a kernel family.

    ``family`` needs ``right_taps(radius) -> ndarray`` returning a normalized
    odd-sized square grid and ``centroid(radius)`` giving the x-centroid of
    the right kernel (array-aware).
    """
    _FAMILIES[name] = family
    _right_taps.cache_clear()


def get_family(name: str):
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown kernel family {name!r}; known: {sorted(_FAMILIES)}") from None


@functools.lru_cache(maxsize=4096)
def _right_taps(family: str, key: int) -> np.ndarray:
    if key == 0:
        taps = np.ones((1, 1))
    else:
        taps = np.asarray(get_family(family).right_taps(key * RADIUS_STEP), dtype=np.float64)
    taps.setflags(write=False)
    return taps


@functools.lru_cache(maxsize=8192)
def _taps(family: str, key: int, direction: str) -> np.ndarray:
    right = _right_taps(family, key)
    if direction == "right":
        return right
    left = right[:, ::-1]
    if direction == "left":
        out = left
    elif direction == "top":
        out = np.rot90(left, k=-1)
    elif direction == "bottom":
        out = np.rot90(right, k=-1)
    else:
        out = 0.5 * (left + right)
    out = np.ascontiguousarray(out)
    out.setflags(write=False)
    return out


def make_kernel(radius_px: float, direction: str, family: str = "half_disk") -> PsfKernel:
    """Kernel for one view at a non-negative blur radius (pixels)."""
    if not (isinstance(radius_px, (int, float, np.floating, np.integer))
            and math.isfinite(radius_px) and radius_px >= 0):
        raise ValueError(f"radius must be finite and >= 0, got {radius_px!r}")
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")
    key = _radius_key(float(radius_px))
    return PsfKernel(key * RADIUS_STEP, direction, _taps(family, key, direction))


def view_kernel(signed_radius: float, direction: str, family: str = "half_disk") -> PsfKernel:
    """Kernel for a signed CoC: in front of focus the half-aperture images swap."""
    if signed_radius < 0:
        direction = _OPPOSITE[direction]
    return make_kernel(abs(signed_radius), direction, family)


def kernel_centroid(kernel: PsfKernel) -> tuple[float, float]:
    """Tap-weighted mean position ``(x, y)`` relative to the kernel center (+y down)."""
    taps = kernel.taps
    n = taps.shape[0] // 2
    offs = np.arange(-n, n + 1, dtype=np.float64)
    total = taps.sum()
    return float(taps.sum(axis=0) @ offs / total), float(taps.sum(axis=1) @ offs / total)
