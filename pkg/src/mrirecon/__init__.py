"""Numpy reconstruction toolkit for undersampled multi-coil MRI.

Forward model, simulation, calibration and a family of reconstruction methods
(SENSE, GRAPPA, PICS, structured low-rank, subspace, plug-and-play and deep
image prior) with metrics and a small file/CLI layer.
"""
from .core import (
    CalibrationError, DimensionError, FormatError, GridGeometry, ParameterError, ReconError,
    ReconstructionError,
)
from .encoding import (
    CGResult, CoilMaps, ImagingModel, SamplingMask, apply_A, apply_AH, apply_AHA, cg_normal,
    conjugate_residual, fft2c, ifft2c,
)
from .metrics import nrmse, psnr, ssim
from .phantom import MaskSpec, make_mask, quant_phantom, shepp_logan, simulate_coils

__version__ = "0.1.0"
