"""Thin-lens defocus model.

Converts metric depth to a signed circle-of-confusion radius in pixels and
maps that radius to the signed defocus disparity seen by a quad-pixel sensor.
Negative radii belong to points in front of the focal plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CameraParams:
    """Thin-lens and sensor constants (all SI units)."""

    focal_length_m: float = 0.025
    focus_distance_m: float = 4.0
    f_stop: float = 1.8
    pixel_size_m: float = 1.01e-5

    def __post_init__(self):
        for name in ("focal_length_m", "focus_distance_m", "f_stop", "pixel_size_m"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"CameraParams.{name} must be finite and > 0, got {value!r}")
        if self.focus_distance_m <= self.focal_length_m:
            raise ValueError(
                "focus_distance_m must exceed focal_length_m "
                f"({self.focus_distance_m} <= {self.focal_length_m})"
            )

    @property
    def coc_gain(self) -> float:
        """CoC radius in pixels of a point at infinite depth."""
        f = self.focal_length_m
        return (1.0 / self.pixel_size_m) * (f / (2.0 * self.f_stop)) * (f / (self.focus_distance_m - f))

    def rescaled(self, factor: float) -> "CameraParams":
        """Parameters after resizing the image by ``factor`` (pixels grow by 1/factor)."""
        return CameraParams(self.focal_length_m, self.focus_distance_m, self.f_stop,
                            self.pixel_size_m / factor)

    def to_dict(self) -> dict:
        return {
            "focal_length_m": self.focal_length_m,
            "focus_distance_m": self.focus_distance_m,
            "f_stop": self.f_stop,
            "pixel_size_m": self.pixel_size_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraParams":
        return cls(**{k: float(d[k]) for k in
                      ("focal_length_m", "focus_distance_m", "f_stop", "pixel_size_m")})


def _as_mask(values: np.ndarray, valid_mask) -> np.ndarray:
    if valid_mask is None:
        return np.ones(values.shape, dtype=bool)
    valid_mask = np.asarray(valid_mask, dtype=bool)
    if valid_mask.shape != values.shape:
        raise ValueError(f"mask shape {valid_mask.shape} != values shape {values.shape}")
    return valid_mask


@dataclass
class DepthMap:
    """Per-pixel metric depth with a validity mask.

    Pixels whose depth is non-finite or non-positive are folded into the
    mask on construction, so ``valid_mask`` always implies a usable depth.
    """

    values: np.ndarray
    valid_mask: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {self.values.shape}")
        mask = _as_mask(self.values, self.valid_mask)
        with np.errstate(invalid="ignore"):
            self.valid_mask = mask & np.isfinite(self.values) & (self.values > 0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class CocMap:
    """Signed CoC radius in pixels; invalid pixels hold NaN."""

    values: np.ndarray
    valid_mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def valid_range(self) -> tuple[float, float]:
        v = self.values[self.valid_mask]
        if v.size == 0:
            raise ValueError("CoC map has no valid pixels")
        return float(v.min()), float(v.max())


@dataclass
class DisparityMap:
    """Signed disparity in pixels, aligned to the center view."""

    values: np.ndarray
    valid_mask: np.ndarray = None
    low_confidence: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError(f"disparity must be 2-D, got shape {self.values.shape}")
        mask = _as_mask(self.values, self.valid_mask)
        self.valid_mask = mask & np.isfinite(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def coc_from_depth(params: CameraParams, depth: DepthMap) -> CocMap:
    """Signed CoC radius (pixels) for every valid depth pixel.

    ``CoC = (1/p) * (f / 2F) * (f / (f_d - f)) * ((z - f_d) / z)``.
    The factors are multiplied in that order so ``z == f_d`` gives exactly 0.
    """
    if not isinstance(depth, DepthMap):
        depth = DepthMap(depth)
    f = params.focal_length_m
    fd = params.focus_distance_m
    gain = (1.0 / params.pixel_size_m) * (f / (2.0 * params.f_stop)) * (f / (fd - f))
    z = np.where(depth.valid_mask, depth.values, np.nan)
    with np.errstate(invalid="ignore"):
        coc = gain * ((z - fd) / z)
    return CocMap(coc, depth.valid_mask.copy())


def disparity_from_coc(coc, kernel_family: str = "half_disk") -> DisparityMap:
    """Disparity implied by a CoC map: signed centroid offset of the right PSF.

    ``coc`` may be a :class:`CocMap`, an array, or a scalar. The magnitude is
    looked up on the 0.01 px radius lattice used for kernel construction and
    the sign of the CoC is carried over.
    """
    from qpdisp import psf

    family = psf.get_family(kernel_family)
    if isinstance(coc, CocMap):
        values, mask = coc.values, coc.valid_mask
    else:
        values = np.asarray(coc, dtype=np.float64)
        mask = None
    if values.ndim == 0:
        r = psf.quantize_radius(abs(float(values)))
        return math.copysign(family.centroid(r), float(values)) if r > 0 else 0.0
    safe = np.where(np.isfinite(values), values, 0.0)
    radii = np.round(np.abs(safe) / psf.RADIUS_STEP) * psf.RADIUS_STEP
    disp = np.sign(safe) * family.centroid(radii)
    if mask is not None:
        disp = np.where(mask, disp, np.nan)
    return DisparityMap(disp, mask)
