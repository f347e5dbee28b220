"""Quad-pixel defocus simulation and disparity estimation."""

from qpdisp.optics import CameraParams, CocMap, DepthMap, DisparityMap, coc_from_depth, \
    disparity_from_coc
from qpdisp.psf import PsfKernel, kernel_centroid, make_kernel
from qpdisp.renderer import QpFrameSet, add_gaussian_noise, plan_layers, render_qp
from qpdisp.solver import SolverConfig, estimate
from qpdisp.metrics import MetricReport, affine_invariant, basic_metrics, evaluate

__version__ = "0.1.0"

__all__ = [
    "CameraParams", "CocMap", "DepthMap", "DisparityMap", "coc_from_depth",
    "disparity_from_coc", "PsfKernel", "kernel_centroid", "make_kernel", "QpFrameSet",
    "add_gaussian_noise", "plan_layers", "render_qp", "SolverConfig", "estimate",
    "MetricReport", "affine_invariant", "basic_metrics", "evaluate",
]
