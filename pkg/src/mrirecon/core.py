"""Shared array conventions, exceptions and elementary linear algebra.

Images are complex128 arrays shaped ``[ny, nx]`` or ``[ne, ny, nx]``; k-space
arrays are shaped ``[nc, ny, nx]`` or ``[nc, ne, ny, nx]``.  Everything is
row-major with axis order ``[coil, echo, ky, kx]`` and the k-space centre sits
at index ``(n // 2, n // 2)``.
"""
from dataclasses import dataclass

import numpy as np

CDTYPE = np.complex128
RDTYPE = np.float64


class ReconError(Exception):
    """Base class for all library errors."""


class DimensionError(ReconError, ValueError):
    pass


class ParameterError(ReconError, ValueError):
    pass


class CalibrationError(ReconError):
    pass


class ReconstructionError(ReconError):
    pass


class FormatError(ReconError):
    pass


def as_complex(x):
    """Return ``x`` as a complex128 array, rejecting non-finite entries."""
    x = np.asarray(x, dtype=CDTYPE)
    if not np.all(np.isfinite(x)):
        raise ParameterError("array contains non-finite values")
    return x


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def inner_product(a, b):
    """Return sum(conj(a) * b), conjugate-linear in the first argument."""
    a = np.asarray(a)
    b = np.asarray(b)
    _same_shape(a, b, "inner_product")
    return complex(np.vdot(a.ravel(), b.ravel()))


def axpy(alpha, x, y):
    x = np.asarray(x)
    y = np.asarray(y)
    _same_shape(x, y, "axpy")
    return alpha * x + y


def hadamard(a, b):
    """Elementwise product, broadcasting ``b`` over the leading (coil/echo) axes of ``a``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if b.ndim > a.ndim:
        a, b = b, a
    if a.shape[a.ndim - b.ndim:] != b.shape:
        raise DimensionError(f"hadamard: cannot broadcast {b.shape} against {a.shape}")
    return a * b


def norm(x):
    return float(np.linalg.norm(np.ravel(x)))


@dataclass(frozen=True)
class GridGeometry:
    """Cartesian grid with ``ny x nx`` samples and sampling period ``dk`` per axis."""

    ny: int
    nx: int
    dk: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.ny < 2 or self.nx < 2 or self.ny % 2 or self.nx % 2:
            raise DimensionError(f"grid dimensions must be even and >= 2, got {self.ny}x{self.nx}")
        if len(self.dk) != 2 or min(self.dk) <= 0:
            raise ParameterError("dk must hold two positive sampling periods")

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def wk(self):
        """Covered bandwidth per axis, n * dk."""
        return (self.ny * self.dk[0], self.nx * self.dk[1])

    @property
    def center(self):
        return (self.ny // 2, self.nx // 2)
