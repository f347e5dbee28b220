"""Disparity error metrics.

Threshold rates count errors strictly greater than the threshold. The
affine-invariant errors fit ``gt ~ a * estimate + b`` before measuring the
residual: least squares for q = 2 and iteratively re-weighted least squares
for q = 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

THRESHOLDS = (0.5, 1.0, 2.0)
IRLS_EPS = 1e-6
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100


@dataclass
class MetricReport:
    mae: float
    rmse: float
    d05: float
    d1: float
    d2: float
    ai1: float = math.nan
    ai2: float = math.nan
    ai1_a: float = math.nan
    ai1_b: float = math.nan
    ai2_a: float = math.nan
    ai2_b: float = math.nan
    ai1_iterations: int = 0
    pixel_count: int = 0
    irls_eps: float = IRLS_EPS
    irls_tol: float = IRLS_TOL
    irls_max_iter: int = IRLS_MAX_ITER

    def to_dict(self) -> dict:
        return asdict(self)

    def to_record(self) -> str:
        """Flat ``key=value`` text, one pair per line."""
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.to_dict().items())


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _pair(estimate, gt, mask=None):
    est_v = np.asarray(getattr(estimate, "values", estimate), dtype=np.float64)
    gt_v = np.asarray(getattr(gt, "values", gt), dtype=np.float64)
    if est_v.shape != gt_v.shape:
        raise ValueError(f"estimate shape {est_v.shape} != gt shape {gt_v.shape}")
    valid = np.isfinite(est_v) & np.isfinite(gt_v)
    for m in (getattr(estimate, "valid_mask", None), getattr(gt, "valid_mask", None), mask):
        if m is not None:
            valid &= np.asarray(m, dtype=bool)
    if not valid.any():
        raise ValueError("estimate and ground truth share no valid pixels")
    return est_v[valid], gt_v[valid]


def basic_metrics(estimate, gt, mask=None) -> MetricReport:
    """MAE, RMSE and the percentage of pixels with error > 0.5, 1 and 2 px."""
    est, ref = _pair(estimate, gt, mask)
    err = np.abs(est - ref)
    rates = [100.0 * np.count_nonzero(err > t) / err.size for t in THRESHOLDS]
    return MetricReport(
        mae=float(np.mean(err)),
        rmse=float(np.sqrt(np.mean(err * err))),
        d05=rates[0], d1=rates[1], d2=rates[2],
        pixel_count=int(err.size),
    )


def _lstsq(x, y, w=None):
    if w is None:
        w = np.ones_like(x)
    sw = np.sum(w)
    mx = np.sum(w * x) / sw
    my = np.sum(w * y) / sw
    dx = x - mx
    sxx = np.sum(w * dx * dx)
    if not sxx > 0:
        raise np.linalg.LinAlgError("singular normal equations: estimate has no spread")
    a = np.sum(w * dx * (y - my)) / sxx
    return a, my - a * mx


def affine_invariant(estimate, gt, q: int = 2, mask=None, eps: float = IRLS_EPS,
                     tol: float = IRLS_TOL, max_iter: int = IRLS_MAX_ITER):
    """Affine-invariant error ``AI(q)`` and the fitted ``(a, b)`` of ``gt ~ a * est + b``.

    Returns ``(value, a, b, iterations)``. For a constant estimate the slope
    is undefined; the convention is ``a = 0`` with ``b`` the mean (q = 2) or
    median (q = 1) of the ground truth, which is the optimal offset.
    """
    if q not in (1, 2):
        raise ValueError(f"q must be 1 or 2, got {q}")
    est, ref = _pair(estimate, gt, mask)
    if est.size < 2:
        raise ValueError("affine-invariant error needs at least 2 valid pixels")
    if np.ptp(est) == 0:
        b = float(np.mean(ref)) if q == 2 else float(np.median(ref))
        res = ref - b
        value = math.sqrt(np.mean(res * res)) if q == 2 else float(np.mean(np.abs(res)))
        return value, 0.0, b, 0
    a, b = _lstsq(est, ref)
    res = ref - (a * est + b)
    if q == 2:
        return math.sqrt(np.mean(res * res)), float(a), float(b), 0
    it = 0
    for it in range(1, max_iter + 1):
        w = 1.0 / np.maximum(np.abs(res), eps)
        a, b = _lstsq(est, ref, w)
        new = ref - (a * est + b)
        change = np.linalg.norm(new - res) / max(np.linalg.norm(new), np.finfo(float).tiny)
        res = new
        if change < tol:
            break
    return float(np.mean(np.abs(res))), float(a), float(b), it


def evaluate(estimate, gt, mask=None) -> MetricReport:
    """Full report: basic metrics plus AI(1) and AI(2)."""
    rep = basic_metrics(estimate, gt, mask)
    rep.ai1, rep.ai1_a, rep.ai1_b, rep.ai1_iterations = affine_invariant(estimate, gt, 1, mask)
    rep.ai2, rep.ai2_a, rep.ai2_b, _ = affine_invariant(estimate, gt, 2, mask)
    return rep


def mean_report(reports) -> dict:
    """Unweighted per-scene mean of every numeric metric."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    keys = ("mae", "rmse", "d05", "d1", "d2", "ai1", "ai2")
    out = {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}
    out["scenes"] = len(reports)
    out["pixel_count"] = int(sum(r.pixel_count for r in reports))
    return out
