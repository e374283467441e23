"""Structured low-rank k-space completion with Hankel-style patch lifting."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import CDTYPE, DimensionError, ParameterError
from .encoding import ifft2c
from .recon_linear import rss_combine


@dataclass(frozen=True)
class HankelConfig:
    """Exactly one of ``rank_ell`` (hard rank projection) or ``tau`` (SVT) must be set."""

    radius: int = 2
    rank_ell: Optional[int] = None
    tau: Optional[float] = None
    max_iter: int = 100
    tol: float = 1e-10

    def __post_init__(self):
        if (self.rank_ell is None) == (self.tau is None):
            raise ParameterError("set exactly one of rank_ell / tau")
        if self.rank_ell is not None and self.rank_ell < 1:
            raise ParameterError("rank_ell must be >= 1")
        if self.tau is not None and self.tau <= 0:
            raise ParameterError("tau must be > 0")
        if self.radius < 0 or self.max_iter < 1:
            raise ParameterError("radius must be >= 0 and max_iter >= 1")


@dataclass(frozen=True, eq=False)
class LiftedMatrix:
    """Rows are vectorised (coil, dy, dx) windows; ``multiplicity`` counts window coverage per sample."""

    matrix: np.ndarray
    kshape: tuple  # (nc, ny, nx)
    radius: int
    multiplicity: np.ndarray


def _patch(radius):
    return 2 * radius + 1


def hankel_build(d, radius):
    """Lift k-space ``[nc, ny, nx]`` (or ``[ny, nx]``) to the window matrix."""
    d = np.asarray(d, dtype=CDTYPE)
    if d.ndim == 2:
        d = d[None]
    nc, ny, nx = d.shape
    p = _patch(radius)
    if p > ny or p > nx:
        raise DimensionError(f"patch {p}x{p} larger than grid {ny}x{nx}")
    win = sliding_window_view(d, (p, p), axis=(1, 2))  # [nc, py, px, p, p]
    mat = np.ascontiguousarray(np.moveaxis(win, 0, 2)).reshape(-1, nc * p * p)
    return LiftedMatrix(mat, (nc, ny, nx), radius, _multiplicity(ny, nx, p))


def _multiplicity(ny, nx, p):
    cy = np.minimum.reduce([np.arange(ny) + 1, np.full(ny, p), ny - np.arange(ny), np.full(ny, ny - p + 1)])
    cx = np.minimum.reduce([np.arange(nx) + 1, np.full(nx, p), nx - np.arange(nx), np.full(nx, nx - p + 1)])
    return np.outer(cy, cx).astype(np.float64)


def _scatter(mat, kshape, radius):
    nc, ny, nx = kshape
    p = _patch(radius)
    py, px = ny - p + 1, nx - p + 1
    if mat.shape != (py * px, nc * p * p):
        raise DimensionError(f"lifted matrix shape {mat.shape} does not fit k-space {kshape}")
    blocks = mat.reshape(py, px, nc, p, p)
    out = np.zeros(kshape, dtype=CDTYPE)
    for a in range(p):
        for b in range(p):
            out[:, a:a + py, b:b + px] += np.moveaxis(blocks[:, :, :, a, b], 2, 0)
    return out


def hankel_adjoint(lifted, matrix=None):
    """Adjoint of :func:`hankel_build`: sum every window entry back onto its sample."""
    mat = lifted.matrix if matrix is None else np.asarray(matrix)
    return _scatter(mat, lifted.kshape, lifted.radius)


def unlift_average(lifted, matrix=None):
    """Average window contributions per sample (left inverse of the lifting)."""
    return hankel_adjoint(lifted, matrix) / lifted.multiplicity


def rank_project(M, ell):
    """Best rank-``ell`` approximation and the discarded energy sum_{i > ell} sigma_i^2."""
    M = np.asarray(M)
    if not 1 <= ell <= min(M.shape):
        raise ParameterError(f"rank {ell} outside [1, {min(M.shape)}]")
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    low = (U[:, :ell] * s[:ell]) @ Vh[:ell]
    return low, float(np.sum(s[ell:] ** 2))


def svt(M, tau):
    """Singular value soft thresholding, the proximal map of tau * nuclear norm."""
    if tau < 0:
        raise ParameterError(f"tau must be >= 0, got {tau}")
    M = np.asarray(M)
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    return (U * np.maximum(s - tau, 0.0)) @ Vh


def _gram_project(M, ell=None, tau=None):
    # Right singular vectors from eigh(M^H M): the column count is small (nc * p^2)
    # so this is far cheaper than a full SVD of the tall window matrix.
    w, V = np.linalg.eigh(M.conj().T @ M)
    w, V = w[::-1], V[:, ::-1]
    if ell is not None:
        Vl = V[:, :ell]
        return (M @ Vl) @ Vl.conj().T
    s = np.sqrt(np.maximum(w, 0.0))
    gain = np.where(s > 0, np.maximum(s - tau, 0.0) / np.where(s > 0, s, 1.0), 0.0)
    return (M @ (V * gain)) @ V.conj().T


def lowrank_complete(d_us, mask, cfg):
    """Alternate rank projection of the lifted k-space with data consistency.

    Returns the completed ``[nc, ny, nx]`` k-space and the per-iteration relative
    change history.  Acquired samples always equal the measurements exactly.
    """
    d_us = np.asarray(d_us, dtype=CDTYPE)
    squeeze = d_us.ndim == 2
    if squeeze:
        d_us = d_us[None]
    sampled = np.broadcast_to(np.asarray(mask.data if hasattr(mask, "data") else mask, bool), d_us.shape)
    k = np.where(sampled, d_us, 0)
    history = []
    for _ in range(cfg.max_iter):
        lifted = hankel_build(k, cfg.radius)
        if cfg.rank_ell is not None:
            low = _gram_project(lifted.matrix, ell=min(cfg.rank_ell, min(lifted.matrix.shape)))
        else:
            low = _gram_project(lifted.matrix, tau=cfg.tau)
        k_new = np.where(sampled, d_us, unlift_average(lifted, low))
        change = np.linalg.norm(k_new - k) / max(np.linalg.norm(k_new), 1e-300)
        history.append(float(change))
        k = k_new
        if change < cfg.tol:
            break
    return (k[0] if squeeze else k), history


def lowrank_recon(d_us, mask, cfg):
    """Low-rank completion followed by root-sum-of-squares coil combination."""
    k, _ = lowrank_complete(d_us, mask, cfg)
    if k.ndim == 2:
        k = k[None]
    return rss_combine(ifft2c(k)).astype(CDTYPE)
