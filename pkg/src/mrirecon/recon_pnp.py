"""Plug-and-play reconstruction: alternate a denoiser with a data-consistency solve."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import CDTYPE, ParameterError
from .encoding import apply_A, apply_AH, cg_normal
from .recon_sparse import SparsifyingTransform, soft_threshold


def denoise_wavelet(x, strength, levels=3):
    """Haar-domain soft thresholding of the detail bands; the coarse approximation band is kept."""
    if strength < 0:
        raise ParameterError("denoiser strength must be >= 0")
    T = SparsifyingTransform(levels=levels)
    c = T.forward(x)
    out = soft_threshold(c, strength)
    h, w = c.shape[-2] >> levels, c.shape[-1] >> levels
    out[..., :h, :w] = c[..., :h, :w]
    return T.adjoint(out)


@dataclass(frozen=True)
class DenoiserSpec:
    """``kind`` is "wavelet", "identity" or "external"; an external denoiser is any
    callable ``fn(image, strength) -> image`` of the same shape."""

    kind: str = "wavelet"
    strength: float = 0.0
    fn: Optional[Callable] = None
    levels: int = 3

    def __post_init__(self):
        if self.kind not in ("wavelet", "identity", "external"):
            raise ParameterError(f"unknown denoiser {self.kind!r}")
        if self.strength < 0:
            raise ParameterError("denoiser strength must be >= 0")
        if self.kind == "external" and not callable(self.fn):
            raise ParameterError("external denoiser needs a callable fn")

    def __call__(self, x):
        if self.kind == "identity":
            return np.array(x, dtype=CDTYPE)
        if self.kind == "wavelet":
            return denoise_wavelet(x, self.strength, self.levels)
        out = np.asarray(self.fn(x, self.strength), dtype=CDTYPE)
        if out.shape != np.shape(x):
            raise ParameterError(f"external denoiser returned shape {out.shape}, expected {np.shape(x)}")
        return out


@dataclass(frozen=True)
class PnpConfig:
    lam: float = 1.0
    iterations: int = 10
    dc_inner_iter: int = 20
    dc_tol: float = 1e-6

    def __post_init__(self):
        if self.lam <= 0:
            raise ParameterError("lambda must be > 0")
        if self.iterations < 1 or self.dc_inner_iter < 1:
            raise ParameterError("iteration counts must be >= 1")


def dc_objective(m, d, model, lam, z):
    """||d - A m||^2 + lam ||m - z||^2."""
    r = apply_A(m, model) - d
    return float(np.vdot(r, r).real + lam * np.vdot(m - z, m - z).real)


def pnp_recon(d, model, denoiser=DenoiserSpec(), cfg=PnpConfig()):
    """Run ``cfg.iterations`` rounds of z = denoise(m); m = argmin DC objective.

    Starts from the zero-filled adjoint.  Each inner solve is warm-started at z,
    so its objective can only decrease from the value at z.  Returns the final
    image and a list of per-iteration diagnostic dicts.
    """
    d = np.asarray(d, dtype=CDTYPE)
    m = apply_AH(d, model)
    diagnostics = []
    for i in range(cfg.iterations):
        z = denoiser(m)
        res = cg_normal(d, model, cfg.lam, z, max_iter=cfg.dc_inner_iter, tol=cfg.dc_tol, x0=z)
        m = res.image
        r = apply_A(m, model) - d
        diagnostics.append({
            "iteration": i,
            "objective": dc_objective(m, d, model, cfg.lam, z),
            "objective_at_z": dc_objective(z, d, model, cfg.lam, z),
            "data_residual": float(np.linalg.norm(r)),
            "dc_relative_residual": res.residual_history[-1],
            "dc_iterations": res.iterations,
            "dc_converged": bool(res.converged),
        })
    return m, diagnostics
