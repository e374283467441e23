"""Centered orthonormal FFTs and the multi-coil imaging operator A = P F C."""
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import CDTYPE, DimensionError, GridGeometry, ParameterError, inner_product


def _check_even(x):
    ny, nx = x.shape[-2:]
    if ny % 2 or nx % 2:
        raise DimensionError(f"centered FFT needs even dimensions, got {ny}x{nx}")


def fft2c(x, direction="forward"):
    """Centered, orthonormal 2D DFT over the last two axes.

    DC lives at index ``(n // 2, n // 2)``; centering is done with index shifts
    (no phase ramps) so results are bit-reproducible.
    """
    x = np.asarray(x, dtype=CDTYPE)
    _check_even(x)
    axes = (-2, -1)
    x = np.fft.ifftshift(x, axes=axes)
    if direction == "forward":
        x = np.fft.fft2(x, axes=axes, norm="ortho")
    elif direction == "inverse":
        x = np.fft.ifft2(x, axes=axes, norm="ortho")
    else:
        raise ParameterError(f"unknown FFT direction {direction!r}")
    return np.fft.fftshift(x, axes=axes)


def ifft2c(x):
    return fft2c(x, "inverse")


@dataclass(frozen=True, eq=False)
class CoilMaps:
    """Complex sensitivities, shape ``[nc, ny, nx]``."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=CDTYPE)
        if data.ndim != 3:
            raise DimensionError(f"coil maps must be [nc, ny, nx], got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ParameterError("coil maps contain non-finite values")
        if self.normalized:
            ss = np.sum(np.abs(data) ** 2, axis=0)
            nz = ss > 0
            if not np.allclose(ss[nz], 1.0, rtol=0, atol=1e-10):
                raise ParameterError("coil maps flagged normalized but sum |c|^2 != 1")
        object.__setattr__(self, "data", data)

    @property
    def nc(self):
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape[1:]


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Binary k-space sampling pattern, ``[ny, nx]`` or per-echo ``[ne, ny, nx]``.

    ``acceleration`` is the declared R (None for ad-hoc masks such as held-out
    validation sets); ``acs_lines`` is the number of fully sampled central ky lines.
    """

    data: np.ndarray
    acceleration: Optional[float] = None
    acs_lines: int = 0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim not in (2, 3):
            raise DimensionError(f"mask must be 2D or echo-stacked 3D, got shape {data.shape}")
        if not np.all((data == 0) | (data == 1)):
            raise ParameterError("mask entries must be 0 or 1")
        data = data.astype(bool)
        if not data.any():
            raise ParameterError("mask has no sampled entries")
        if self.acceleration is not None:
            R = float(self.acceleration)
            if R < 1:
                raise ParameterError(f"acceleration must be >= 1, got {R}")
            frac = data.mean()
            if not 0.5 / R <= frac <= min(1.0, 2.0 / R):
                raise ParameterError(f"sampled fraction {frac:.4f} inconsistent with R={R}")
        if self.acs_lines < 0:
            raise ParameterError("acs_lines must be >= 0")
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape[-2:]

    @property
    def fraction(self):
        return float(self.data.mean())


@dataclass(frozen=True, eq=False)
class ImagingModel:
    maps: CoilMaps
    mask: SamplingMask
    geometry: Optional[GridGeometry] = None

    def __post_init__(self):
        if self.geometry is None:
            object.__setattr__(self, "geometry", GridGeometry(*self.maps.shape))
        shape = self.geometry.shape
        if self.maps.shape != shape or self.mask.shape != shape:
            raise DimensionError(
                f"maps {self.maps.shape} / mask {self.mask.shape} disagree with grid {shape}"
            )

    @property
    def nc(self):
        return self.maps.nc

    def with_mask(self, mask):
        return ImagingModel(self.maps, mask, self.geometry)


def _check_image(m, model):
    m = np.asarray(m, dtype=CDTYPE)
    if m.shape[-2:] != model.geometry.shape or m.ndim not in (2, 3):
        raise DimensionError(f"image shape {m.shape} does not match grid {model.geometry.shape}")
    if model.mask.data.ndim == 3 and (m.ndim != 3 or m.shape[0] != model.mask.data.shape[0]):
        raise DimensionError("echo-stacked mask needs an echo-stacked image with matching echo count")
    return m


def _coil_axis(arr, m_ndim):
    # coil maps [nc, ny, nx] -> broadcastable against [nc, ne, ny, nx] for echo stacks
    return arr if m_ndim == 2 else arr[:, None]


def apply_A(m, model):
    """Forward operator: per coil, mask * fft2c(maps_c * m)."""
    m = _check_image(m, model)
    coil_images = _coil_axis(model.maps.data, m.ndim) * m[None]
    return model.mask.data * fft2c(coil_images)


def apply_AH(d, model):
    """Adjoint operator: sum_c conj(maps_c) * ifft2c(mask * d_c)."""
    d = np.asarray(d, dtype=CDTYPE)
    if d.shape[0] != model.nc or d.shape[-2:] != model.geometry.shape or d.ndim not in (3, 4):
        raise DimensionError(
            f"k-space shape {d.shape} does not match {model.nc} coils on grid {model.geometry.shape}"
        )
    if model.mask.data.ndim == 3 and (d.ndim != 4 or d.shape[1] != model.mask.data.shape[0]):
        raise DimensionError("echo-stacked mask needs echo-stacked k-space with matching echo count")
    coil_images = ifft2c(model.mask.data * d)
    return np.sum(np.conj(_coil_axis(model.maps.data, d.ndim - 1)) * coil_images, axis=0)


def apply_AHA(m, model):
    return apply_AH(apply_A(m, model), model)


class CGResult(NamedTuple):
    image: np.ndarray
    iterations: int
    residual_history: list
    converged: bool


def conjugate_residual(normal_op, rhs, x0=None, max_iter=200, tol=1e-9, callback=None):
    """Solve ``normal_op(x) = rhs`` for a Hermitian positive semidefinite operator.

    Uses the conjugate-residual member of the CG family, whose residual norm is
    monotonically non-increasing.  ``residual_history`` holds ||r_k|| / ||rhs||
    starting with the initial residual.  ``callback(k, x)`` is invoked after each
    iteration.
    """
    if max_iter < 1:
        raise ParameterError("max_iter must be >= 1")
    rhs = np.asarray(rhs, dtype=CDTYPE)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=CDTYPE)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        bnorm = 1.0
    r = rhs - normal_op(x) if x0 is not None else rhs.copy()
    history = [float(np.linalg.norm(r) / bnorm)]
    if history[0] <= tol:
        return CGResult(x, 0, history, True)
    p = r.copy()
    Ar = normal_op(r)
    Ap = Ar.copy()
    rAr = inner_product(r, Ar).real
    k = 0
    for k in range(1, max_iter + 1):
        ApAp = np.vdot(Ap, Ap).real
        if ApAp == 0 or rAr == 0:
            # breakdown: r lies in the null space of the operator
            k -= 1
            break
        alpha = rAr / ApAp
        x = x + alpha * p
        r = r - alpha * Ap
        history.append(float(np.linalg.norm(r) / bnorm))
        if callback is not None:
            callback(k, x)
        if history[-1] <= tol:
            break
        Ar = normal_op(r)
        rAr_new = inner_product(r, Ar).real
        beta = rAr_new / rAr
        rAr = rAr_new
        p = r + beta * p
        Ap = Ar + beta * Ap
    return CGResult(x, k, history, history[-1] <= tol)


def cg_normal(d, model, lam=0.0, z=None, max_iter=200, tol=1e-9, x0=None, callback=None):
    """Minimize ||d - A m||^2 + lam ||m - z||^2 via (A^H A + lam I) m = A^H d + lam z.

    Returns a :class:`CGResult`; non-convergence is flagged, not raised.
    """
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if lam > 0 and z is None:
        raise ParameterError("lambda > 0 requires a prior image z")
    rhs = apply_AH(d, model)
    if lam > 0:
        z = np.asarray(z, dtype=CDTYPE)
        if z.shape != rhs.shape:
            raise DimensionError(f"prior image shape {z.shape} != {rhs.shape}")
        rhs = rhs + lam * z

        def normal_op(m):
            return apply_AHA(m, model) + lam * m
    else:
        def normal_op(m):
            return apply_AHA(m, model)

    return conjugate_residual(normal_op, rhs, x0=x0, max_iter=max_iter, tol=tol, callback=callback)
