"""Magnitude-image quality metrics: NRMSE, PSNR and SSIM."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import DimensionError, ParameterError


def _mags(x, ref):
    x = np.abs(np.asarray(x))
    ref = np.abs(np.asarray(ref))
    if x.shape != ref.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {ref.shape}")
    if not np.any(ref):
        raise ParameterError("reference image is all zero")
    return x.astype(np.float64), ref.astype(np.float64)


def nrmse(x, ref):
    """||abs(x) - abs(ref)|| / ||ref||."""
    x, ref = _mags(x, ref)
    return float(np.linalg.norm(x - ref) / np.linalg.norm(ref))


def psnr(x, ref):
    """10 log10(max|ref|^2 / MSE) in dB; ``inf`` when the magnitudes agree exactly."""
    x, ref = _mags(x, ref)
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(ref.max() ** 2 / mse))


def ssim(x, ref, window=7, k1=0.01, k2=0.03):
    """Mean SSIM over all valid ``window x window`` uniform windows.

    Both magnitudes are divided by max|ref| so the dynamic range is 1.  Local
    statistics use population (biased) variances.
    """
    x, ref = _mags(x, ref)
    if x.ndim != 2:
        raise DimensionError("ssim expects 2D images")
    if min(x.shape) < window:
        raise DimensionError(f"image {x.shape} smaller than window {window}")
    scale = ref.max()
    x, ref = x / scale, ref / scale
    c1, c2 = (k1 * 1.0) ** 2, (k2 * 1.0) ** 2
    wx = sliding_window_view(x, (window, window))
    wr = sliding_window_view(ref, (window, window))
    mx, mr = wx.mean(axis=(-2, -1)), wr.mean(axis=(-2, -1))
    vx = wx.var(axis=(-2, -1))
    vr = wr.var(axis=(-2, -1))
    cov = (wx * wr).mean(axis=(-2, -1)) - mx * mr
    s = ((2 * mx * mr + c1) * (2 * cov + c2)) / ((mx ** 2 + mr ** 2 + c1) * (vx + vr + c2))
    return float(np.clip(s.mean(), -1.0, 1.0))


def metric_report(x, ref, window=7):
    """All three metrics as a JSON-ready dict (``psnr`` serialises ``inf`` as a string)."""
    p = psnr(x, ref)
    return {
        "nrmse": nrmse(x, ref),
        "psnr": "inf" if np.isinf(p) else p,
        "ssim": ssim(x, ref, window=window),
    }
