"""Spin-echo / diffusion signal equations and T2 decay dictionaries."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DimensionError, ParameterError, RDTYPE


@dataclass(frozen=True)
class SequenceParams:
    """Timing in ms, ``b`` in s/mm^2.  ``te`` may be a scalar or a sequence of echo times."""

    tr: float
    te: object = 0.0
    k_const: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        te = np.atleast_1d(np.asarray(self.te, dtype=RDTYPE))
        if self.tr <= 0:
            raise ParameterError(f"TR must be > 0, got {self.tr}")
        if np.any(te < 0) or np.any(te > self.tr):
            raise ParameterError("echo times must satisfy 0 <= TE <= TR")
        if self.k_const <= 0:
            raise ParameterError("K must be > 0")
        if self.b < 0:
            raise ParameterError(f"b must be >= 0, got {self.b}")

    @property
    def te_list(self):
        return np.atleast_1d(np.asarray(self.te, dtype=RDTYPE))


@dataclass(frozen=True, eq=False)
class TissueMaps:
    """Proton density, T1/T2 (ms) and diffusivity D (mm^2/s) maps of equal shape."""

    rho: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    diff: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, k), dtype=RDTYPE) for k in ("rho", "t1", "t2", "diff")]
        if len({a.shape for a in arrs}) != 1:
            raise DimensionError("tissue maps must share one shape")
        rho, t1, t2, diff = arrs
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise ParameterError("tissue maps contain non-finite values")
        if np.any(rho < 0) or np.any(t1 <= 0) or np.any(t2 <= 0) or np.any(diff < 0):
            raise ParameterError("tissue maps out of range (rho, D >= 0; T1, T2 > 0)")
        if np.any((t2 > t1) & (rho > 0)):
            raise ParameterError("T2 > T1 inside the object")
        for k, a in zip(("rho", "t1", "t2", "diff"), arrs):
            object.__setattr__(self, k, a)

    @property
    def shape(self):
        return self.rho.shape


def _check_relax(t1, t2):
    if np.any(np.asarray(t1) <= 0) or np.any(np.asarray(t2) <= 0):
        raise ParameterError("T1 and T2 must be > 0")


def spin_echo_signal(rho, t1, t2, params):
    """K * rho * (1 - exp(-TR/T1)) * exp(-TE/T2); broadcasts over array inputs."""
    _check_relax(t1, t2)
    te = np.asarray(params.te, dtype=RDTYPE)
    return (
        params.k_const
        * np.asarray(rho, dtype=RDTYPE)
        * -np.expm1(-params.tr / np.asarray(t1, dtype=RDTYPE))
        * np.exp(-te / np.asarray(t2, dtype=RDTYPE))
    )


def diffusion_signal(rho, t1, t2, params, diff):
    """Spin-echo signal attenuated by exp(-b * D)."""
    if params.b < 0:
        raise ParameterError(f"b must be >= 0, got {params.b}")
    diff = np.asarray(diff, dtype=RDTYPE)
    if np.any(diff < 0):
        raise ParameterError("diffusivity must be >= 0")
    return spin_echo_signal(rho, t1, t2, params) * np.exp(-params.b * diff)


def b_value(gamma, g_amp, big_delta, small_delta):
    """Diffusion weighting b = (gamma * G * Delta)^2 * (Delta - delta / 3).

    Note the squared factor carries the gradient separation Delta; this is the
    form used here, not the Stejskal-Tanner (gamma * G * delta)^2 variant.
    """
    if big_delta < 0 or small_delta < 0:
        raise ParameterError("gradient durations must be non-negative")
    if not big_delta > small_delta / 3:
        raise ParameterError("need Delta > delta / 3")
    return (gamma * g_amp * big_delta) ** 2 * (big_delta - small_delta / 3)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Unit-norm simulated decay curves, one row per T2 value."""

    atoms: np.ndarray
    t2_grid: np.ndarray
    te_list: np.ndarray

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @property
    def n_echo(self):
        return self.atoms.shape[1]


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    basis: np.ndarray
    energy_captured: float
    singular_values: np.ndarray = field(default=None, repr=False)

    @property
    def k(self):
        return self.basis.shape[1]

    @property
    def n_echo(self):
        return self.basis.shape[0]


# T2 grid (ms) of the shipped dictionary: 10 ms steps over tissue values plus a
# sparse fluid tail.  Finer steps fall below what K=3 subspace recon can resolve.
DEFAULT_T2_GRID = tuple(float(v) for v in range(20, 301, 10)) + (500.0, 2000.0)
DEFAULT_TE_LIST = tuple(10.0 * (i + 1) for i in range(10))


def dict_generate(t2_grid=DEFAULT_T2_GRID, te_list=DEFAULT_TE_LIST, tr: Optional[float] = None, t1=None):
    """Mono-exponential T2 decay atoms exp(-TE/T2), each normalised to unit norm.

    With ``tr`` and ``t1`` given, the spin-echo T1 saturation factor is applied
    first; it is constant over echoes so it disappears after normalisation unless
    ``t1`` varies per atom.
    """
    t2 = np.asarray(t2_grid, dtype=RDTYPE)
    te = np.asarray(te_list, dtype=RDTYPE)
    if t2.ndim != 1 or t2.size < 2 or te.ndim != 1 or te.size < 1:
        raise ParameterError("need at least two T2 values and one echo time")
    if np.any(np.diff(t2) == 0):
        raise ParameterError("duplicate T2 values in grid")
    if np.any(np.diff(t2) < 0) or np.any(np.diff(te) <= 0):
        raise ParameterError("T2 grid and echo times must be strictly increasing")
    if np.any(t2 <= 0):
        raise ParameterError("T2 values must be > 0")
    atoms = np.exp(-te[None, :] / t2[:, None])
    if tr is not None and t1 is not None:
        atoms *= -np.expm1(-tr / np.broadcast_to(np.asarray(t1, dtype=RDTYPE), t2.shape))[:, None]
    atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
    return Dictionary(atoms, t2, te)


def svd_basis(dictionary, k):
    """Top-``k`` right singular vectors of the atom matrix as an ``[n_echo, k]`` basis."""
    n_echo = dictionary.n_echo
    if not 1 <= k <= n_echo:
        raise ParameterError(f"k must lie in [1, {n_echo}], got {k}")
    _, s, vh = np.linalg.svd(dictionary.atoms, full_matrices=False)
    basis = vh[:k].conj().T
    # deterministic sign: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(basis), axis=0)
    basis = basis * np.sign(basis[idx, np.arange(k)])
    energy = float(np.sum(s[:k] ** 2) / np.sum(s ** 2))
    return SubspaceBasis(basis, energy, s)
