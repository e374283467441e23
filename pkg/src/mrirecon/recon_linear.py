"""Parallel imaging: SENSE by gradient descent / conjugate gradient, and GRAPPA."""
from dataclasses import dataclass

import numpy as np

from .core import CDTYPE, ParameterError, ReconstructionError
from .encoding import apply_A, apply_AH, cg_normal


@dataclass(frozen=True)
class GdConfig:
    alpha: float = 1.0
    max_iter: int = 100
    tol: float = 0.0  # stop once the relative cost decrease falls below tol

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ParameterError(f"step size must lie in (0, 2), got {self.alpha}")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")


def data_cost(m, d, model):
    r = apply_A(m, model) - d
    return float(np.vdot(r, r).real)


def sense_gd(d, model, cfg=GdConfig()):
    """Gradient descent m <- m - alpha A^H (A m - d) from m = 0.

    Returns the final image and the cost history ||d - A m_t||^2, t = 0..T.
    """
    d = np.asarray(d, dtype=CDTYPE)
    m = np.zeros(model.geometry.shape if model.mask.data.ndim == 2 else d.shape[1:], dtype=CDTYPE)
    resid = apply_A(m, model) - d
    history = [float(np.vdot(resid, resid).real)]
    for _ in range(cfg.max_iter):
        m = m - cfg.alpha * apply_AH(resid, model)
        resid = apply_A(m, model) - d
        history.append(float(np.vdot(resid, resid).real))
        prev = history[-2]
        if prev == 0 or (prev - history[-1]) <= cfg.tol * prev:
            break
    return m, history


def sense_cg(d, model, max_iter=200, tol=1e-9):
    """SENSE via the normal equations (no regularisation); returns a CGResult."""
    return cg_normal(d, model, 0.0, None, max_iter=max_iter, tol=tol)


def rss_combine(coil_images):
    """Root-sum-of-squares coil combination over axis 0."""
    x = np.asarray(coil_images)
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=0))


def _line_rows(mask):
    m = mask.data
    if m.ndim != 2:
        raise ReconstructionError("GRAPPA needs a single 2D mask")
    full = m.all(axis=1)
    empty = ~m.any(axis=1)
    if not np.all(full | empty):
        raise ReconstructionError("GRAPPA needs a line (ky) sampling pattern")
    return full


def grappa_apply(d_us, mask, kernel):
    """Fill every unacquired ky line with the kernel combination of acquired neighbours.

    Acquired lines (including ACS) are copied through untouched; neighbourhoods
    that leave the grid see zeros.
    """
    d_us = np.asarray(d_us, dtype=CDTYPE)
    sampled = _line_rows(mask)
    R = kernel.R
    if mask.acceleration is not None and int(round(mask.acceleration)) != R:
        raise ReconstructionError(f"mask R={mask.acceleration} does not match kernel R={R}")
    ny = sampled.size
    lattice = (np.arange(ny) - kernel.lattice_offset) % R == 0
    if not np.all(sampled[lattice]):
        raise ReconstructionError("acquired lattice of the mask does not match the kernel")
    nc, _, nx = d_us.shape
    if nc != kernel.nc:
        raise ReconstructionError(f"k-space has {nc} coils, kernel expects {kernel.nc}")
    out = d_us.copy()
    missing = np.flatnonzero(~sampled)
    if missing.size == 0:
        return out
    u_off, v_off = kernel.u_offsets, kernel.v_offsets
    pu = R * max(max(u_off), -min(u_off)) + R
    pv = max(max(v_off), -min(v_off))
    # sources are read from lattice lines only, zero padded off-grid
    src = np.zeros((nc, ny + 2 * pu, nx + 2 * pv), dtype=CDTYPE)
    src[:, pu:pu + ny, pv:pv + nx] = d_us * lattice[None, :, None]
    for t in range(1, R):
        rows = missing[(missing - kernel.lattice_offset) % R == t]
        if rows.size == 0:
            continue
        base = rows - t
        # [nc, n_u, n_v, n_rows, nx]
        blk = np.stack(
            [
                np.stack([src[:, base + R * u + pu, pv + v:pv + v + nx] for v in v_off], axis=1)
                for u in u_off
            ],
            axis=1,
        )
        blk = blk.reshape(-1, rows.size * nx)
        out[:, rows, :] = (kernel.weights[t - 1] @ blk).reshape(nc, rows.size, nx)
    return out
