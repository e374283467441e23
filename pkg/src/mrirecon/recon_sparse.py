"""Compressed-sensing parallel imaging (PICS) with an orthonormal Haar wavelet."""
from dataclasses import dataclass

import numpy as np

from .core import CDTYPE, DimensionError, ParameterError
from .encoding import apply_A, apply_AH

_S = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class SparsifyingTransform:
    kind: str = "haar"
    levels: int = 3

    def __post_init__(self):
        if self.kind != "haar":
            raise ParameterError(f"unsupported transform {self.kind!r}")
        if self.levels < 1:
            raise ParameterError("levels must be >= 1")

    def forward(self, x):
        return haar2(x, self.levels, "forward")

    def adjoint(self, c):
        return haar2(c, self.levels, "inverse")


def _check_dyadic(shape, levels):
    ny, nx = shape[-2:]
    f = 2 ** levels
    if levels < 1 or ny % f or nx % f:
        raise DimensionError(f"{ny}x{nx} grid does not support {levels} Haar levels")


def _analysis_1d(x, axis):
    x = np.moveaxis(x, axis, -1)
    lo = (x[..., 0::2] + x[..., 1::2]) * _S
    hi = (x[..., 0::2] - x[..., 1::2]) * _S
    return np.moveaxis(np.concatenate([lo, hi], axis=-1), -1, axis)


def _synthesis_1d(c, axis):
    c = np.moveaxis(c, axis, -1)
    h = c.shape[-1] // 2
    lo, hi = c[..., :h], c[..., h:]
    x = np.empty_like(c)
    x[..., 0::2] = (lo + hi) * _S
    x[..., 1::2] = (lo - hi) * _S
    return np.moveaxis(x, -1, axis)


def haar2(x, levels=3, direction="forward"):
    """Multilevel orthonormal 2D Haar transform over the last two axes.

    Coefficients use the usual nested layout: after each level the approximation
    band occupies the top-left quarter of the previous block.
    """
    x = np.array(x, dtype=CDTYPE if np.iscomplexobj(x) else np.float64)
    _check_dyadic(x.shape, levels)
    ny, nx = x.shape[-2:]
    if direction == "forward":
        for lev in range(levels):
            h, w = ny >> lev, nx >> lev
            blk = x[..., :h, :w]
            x[..., :h, :w] = _analysis_1d(_analysis_1d(blk, -2), -1)
    elif direction == "inverse":
        for lev in reversed(range(levels)):
            h, w = ny >> lev, nx >> lev
            blk = x[..., :h, :w]
            x[..., :h, :w] = _synthesis_1d(_synthesis_1d(blk, -1), -2)
    else:
        raise ParameterError(f"unknown direction {direction!r}")
    return x


def soft_threshold(x, tau):
    """Complex soft thresholding: shrink magnitudes by ``tau``, keep phase."""
    if tau < 0:
        raise ParameterError(f"threshold must be >= 0, got {tau}")
    x = np.asarray(x)
    mag = np.abs(x)
    scale = np.maximum(mag - tau, 0.0) / np.where(mag > 0, mag, 1.0)
    return x * scale


def csign(z):
    """z / |z| with sign(0) = 0."""
    mag = np.abs(z)
    return np.where(mag > 0, z / np.where(mag > 0, mag, 1.0), 0)


@dataclass(frozen=True)
class PicsConfig:
    """``lam`` is relative: the penalty weight used is ``lam * max|A^H d|``."""

    lam: float = 1e-3
    alpha: float = 1.0
    max_iter: int = 200
    variant: str = "fista"
    tol: float = 0.0
    levels: int = 3

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError("lambda must be >= 0")
        if self.alpha <= 0:
            raise ParameterError("alpha must be > 0")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")
        if self.variant not in ("subgradient", "ista", "fista"):
            raise ParameterError(f"unknown PICS variant {self.variant!r}")


def absolute_lambda(d, model, lam_rel):
    return float(lam_rel * np.max(np.abs(apply_AH(d, model))))


def pics_objective(m, d, model, transform, lam_abs):
    """0.5 ||d - A m||^2 + lam ||Phi m||_1, the objective the PICS updates descend."""
    r = apply_A(m, model) - np.asarray(d)
    return float(0.5 * np.vdot(r, r).real + lam_abs * np.sum(np.abs(transform.forward(m))))


def _zero_image(d, model):
    shape = model.geometry.shape if model.mask.data.ndim == 2 else np.shape(d)[1:]
    return np.zeros(shape, dtype=CDTYPE)


def pics_subgradient(d, model, transform=None, cfg=PicsConfig(variant="subgradient")):
    """m <- m - alpha A^H(A m - d) - alpha lam Phi^H sign(Phi m), from m = 0."""
    transform = transform or SparsifyingTransform(levels=cfg.levels)
    d = np.asarray(d, dtype=CDTYPE)
    lam = absolute_lambda(d, model, cfg.lam)
    m = _zero_image(d, model)
    history = [pics_objective(m, d, model, transform, lam)]
    for _ in range(cfg.max_iter):
        m_new = m - cfg.alpha * apply_AH(apply_A(m, model) - d, model)
        if lam > 0:
            m_new = m_new - cfg.alpha * lam * transform.adjoint(csign(transform.forward(m)))
        history.append(pics_objective(m_new, d, model, transform, lam))
        done = cfg.tol > 0 and np.linalg.norm(m_new - m) <= cfg.tol * max(np.linalg.norm(m_new), 1e-30)
        m = m_new
        if done:
            break
    return m, history


def pics_ista(d, model, transform=None, cfg=PicsConfig()):
    """Proximal gradient (ISTA, or FISTA with momentum) for the PICS objective.

    m <- Phi^H ST(Phi(m - alpha A^H(A m - d)), alpha lam).  ``alpha <= 1`` keeps
    ISTA monotone because ||A|| <= 1 for normalised coil maps.
    """
    if cfg.variant not in ("ista", "fista"):
        raise ParameterError("pics_ista needs variant 'ista' or 'fista'")
    if cfg.alpha > 1:
        raise ParameterError(f"alpha must be <= 1 for proximal PICS, got {cfg.alpha}")
    transform = transform or SparsifyingTransform(levels=cfg.levels)
    d = np.asarray(d, dtype=CDTYPE)
    lam = absolute_lambda(d, model, cfg.lam)
    thresh = cfg.alpha * lam
    m = _zero_image(d, model)
    y = m
    tk = 1.0
    history = [pics_objective(m, d, model, transform, lam)]
    for _ in range(cfg.max_iter):
        g = y - cfg.alpha * apply_AH(apply_A(y, model) - d, model)
        m_new = transform.adjoint(soft_threshold(transform.forward(g), thresh))
        if cfg.variant == "fista":
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            y = m_new + ((tk - 1.0) / t_next) * (m_new - m)
            tk = t_next
        else:
            y = m_new
        history.append(pics_objective(m_new, d, model, transform, lam))
        done = cfg.tol > 0 and np.linalg.norm(m_new - m) <= cfg.tol * max(np.linalg.norm(m_new), 1e-30)
        m = m_new
        if done:
            break
    return m, history


def pics_recon(d, model, transform=None, cfg=PicsConfig()):
    if cfg.variant == "subgradient":
        return pics_subgradient(d, model, transform, cfg)
    return pics_ista(d, model, transform, cfg)
