"""Subspace-constrained multi-echo reconstruction and dictionary T2 matching."""
import numpy as np

from .core import CDTYPE, DimensionError, ParameterError
from .encoding import apply_A, apply_AH, conjugate_residual


def synth_from_coeffs(basis, s):
    """Echo images ``[ne, ny, nx]`` = basis @ s pixelwise, for coefficient maps ``[K, ny, nx]``."""
    s = np.asarray(s)
    B = basis.basis
    if s.shape[0] != B.shape[1]:
        raise DimensionError(f"{s.shape[0]} coefficient maps for a {B.shape[1]}-column basis")
    return np.tensordot(B, s, axes=(1, 0))


def project_to_coeffs(basis, echoes):
    """Adjoint of :func:`synth_from_coeffs`: basis^H applied pixelwise."""
    echoes = np.asarray(echoes)
    B = basis.basis
    if echoes.shape[0] != B.shape[0]:
        raise DimensionError(f"{echoes.shape[0]} echoes for a {B.shape[0]}-echo basis")
    return np.tensordot(B.conj().T, echoes, axes=(1, 0))


def subspace_recon(d, model, basis, lam=0.0, max_iter=200, tol=1e-10, return_info=False):
    """Solve min_s ||d - A Gamma s||^2 + lam ||s||^2 for coefficient maps ``s``.

    ``d`` is echo-resolved k-space ``[nc, ne, ny, nx]``; ``model.mask`` may carry
    one mask per echo.  With ``return_info`` a :class:`CGResult` (whose ``image``
    holds the coefficient maps) and the per-iteration data residual
    ||d - A Gamma s_k|| are returned as well.
    """
    if lam < 0:
        raise ParameterError("lambda must be >= 0")
    d = np.asarray(d, dtype=CDTYPE)
    if d.ndim != 4:
        raise DimensionError(f"multi-echo k-space must be [nc, ne, ny, nx], got {d.shape}")
    if d.shape[1] != basis.n_echo:
        raise DimensionError(f"data has {d.shape[1]} echoes, basis has {basis.n_echo}")

    def fwd(s):
        return apply_A(synth_from_coeffs(basis, s), model)

    def adj(y):
        return project_to_coeffs(basis, apply_AH(y, model))

    def normal(s):
        return adj(fwd(s)) + lam * s

    data_resid = []

    def track(k, s):
        data_resid.append(float(np.linalg.norm(d - fwd(s))))

    res = conjugate_residual(normal, adj(d), max_iter=max_iter, tol=tol,
                             callback=track if return_info else None)
    if return_info:
        return res.image, res, [float(np.linalg.norm(d))] + data_resid
    return res.image


def t2_match(echo_signals, dictionary, background=1e-6):
    """Per-pixel T2 of the atom with the largest normalised |correlation|.

    ``echo_signals`` is ``[ne, ...]``.  Pixels whose signal norm is below
    ``background * max norm`` are set to 0.  Returns (t2_map, atom_index_map);
    background pixels get index -1.
    """
    sig = np.asarray(echo_signals)
    ne = sig.shape[0]
    if ne != dictionary.n_echo:
        raise DimensionError(f"{ne} echoes but dictionary atoms have {dictionary.n_echo}")
    flat = sig.reshape(ne, -1)
    nrm = np.linalg.norm(flat, axis=0)
    corr = np.abs(dictionary.atoms.conj() @ flat)  # atoms are unit norm
    idx = np.argmax(corr, axis=0)
    fg = nrm >= background * nrm.max() if nrm.max() > 0 else np.zeros_like(nrm, bool)
    t2 = np.where(fg, dictionary.t2_grid[idx], 0.0)
    idx = np.where(fg, idx, -1)
    shape = sig.shape[1:]
    return t2.reshape(shape), idx.reshape(shape)
