"""Calibration from fully sampled central k-space: GRAPPA kernels and ESPIRiT maps."""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import CDTYPE, CalibrationError, ParameterError
from .encoding import CoilMaps, ifft2c


@dataclass(frozen=True, eq=False)
class AcsBlock:
    """Fully sampled ky rows ``start .. start + n_acs - 1`` of every coil, ``[nc, n_acs, nx]``."""

    data: np.ndarray
    start: int
    full_shape: tuple

    @property
    def nc(self):
        return self.data.shape[0]

    @property
    def n_acs(self):
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class GrappaKernel:
    """GRAPPA weights, one set per target offset t = 1 .. R-1 between acquired lines.

    ``weights[t - 1]`` maps the flattened (coil, u, v) source neighbourhood to all
    target coils: shape ``[R - 1, nc, nc * n_u * n_v]``.  Source ky offsets are
    in acquired-line units (R * dky), source kx offsets in dkx.
    """

    weights: np.ndarray
    R: int
    u_offsets: tuple
    v_offsets: tuple
    lattice_offset: int = 0

    @property
    def nc(self):
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class CalibrationMatrix:
    rows: np.ndarray
    window: tuple


def extract_acs(d, mask):
    """Return the centred fully sampled block declared by ``mask.acs_lines``."""
    d = np.asarray(d, dtype=CDTYPE)
    n_acs = int(mask.acs_lines)
    if n_acs < 1:
        raise CalibrationError("mask declares no ACS lines")
    m = mask.data if mask.data.ndim == 2 else mask.data[0]
    ny = m.shape[0]
    start = ny // 2 - n_acs // 2
    rows = np.arange(start, start + n_acs)
    if not m[rows].all():
        raise CalibrationError(f"ACS rows {start}..{start + n_acs - 1} are not fully sampled")
    return AcsBlock(d[:, rows, :].copy(), int(start), tuple(d.shape[-2:]))


def source_offsets(n_u, n_v):
    """Source ky offsets (acquired-line units, relative to the line below the target) and kx offsets."""
    u0 = -((n_u - 1) // 2)
    v0 = -(n_v // 2)
    return tuple(range(u0, u0 + n_u)), tuple(range(v0, v0 + n_v))


def _ridge(S, T, tikhonov):
    # SVD form keeps the minimum-norm structure when S is rank deficient
    U, s, Vh = np.linalg.svd(S, full_matrices=False)
    filt = s / (s * s + tikhonov) if tikhonov > 0 else np.where(s > s[0] * 1e-14, 1 / np.where(s > 0, s, 1), 0)
    return (Vh.conj().T * filt) @ (U.conj().T @ T)


def grappa_sources(acs, R, t, u_offsets, v_offsets, lattice_offset=0):
    """Collect (source matrix, target matrix) over all lattice-aligned ACS windows for offset ``t``."""
    data = acs.data
    nc, n_acs, nx = data.shape
    vmin, vmax = min(v_offsets), max(v_offsets)
    kx = np.arange(-vmin, nx - vmax)
    src_rows, tgt_rows = [], []
    for ky in range(acs.start, acs.start + n_acs):
        if (ky - t - lattice_offset) % R:
            continue
        base = ky - t
        rows = [base + R * u - acs.start for u in u_offsets]
        if min(rows) < 0 or max(rows) >= n_acs:
            continue
        # [nc, n_u, n_v, n_kx]
        blk = np.stack([np.stack([data[:, r, kx + v] for v in v_offsets], axis=1) for r in rows], axis=1)
        src_rows.append(blk.reshape(-1, kx.size).T)
        tgt_rows.append(data[:, ky - acs.start, kx].T)
    if not src_rows:
        return np.zeros((0, nc * len(u_offsets) * len(v_offsets)), CDTYPE), np.zeros((0, nc), CDTYPE)
    return np.concatenate(src_rows), np.concatenate(tgt_rows)


def grappa_fit(acs, R, geometry=(2, 3), tikhonov=None, lattice_offset=0):
    """Fit GRAPPA weights by ridge regression on the ACS block.

    Solves ``min ||S g_j - t_j||^2 + tikhonov ||g_j||^2`` per target coil.  With
    ``tikhonov=None`` the penalty is ``1e-9 * trace(S^H S) / n_unknowns``.
    """
    R = int(R)
    if R < 1:
        raise ParameterError("R must be >= 1")
    n_u, n_v = geometry
    u_off, v_off = source_offsets(n_u, n_v)
    n_unknown = acs.nc * n_u * n_v
    weights = np.zeros((R - 1, acs.nc, n_unknown), dtype=CDTYPE)
    for t in range(1, R):
        S, T = grappa_sources(acs, R, t, u_off, v_off, lattice_offset)
        if S.shape[0] < n_unknown:
            raise CalibrationError(
                f"underdetermined GRAPPA fit for offset {t}: {S.shape[0]} equations, {n_unknown} unknowns"
            )
        lam = tikhonov
        if lam is None:
            lam = 1e-9 * np.linalg.norm(S) ** 2 / n_unknown
        if lam < 0:
            raise ParameterError("tikhonov must be >= 0")
        weights[t - 1] = _ridge(S, T, lam).T
    return GrappaKernel(weights, R, u_off, v_off, lattice_offset)


def calibration_matrix(acs, kernel=(6, 6), calib_width=None):
    """Stack vectorised (coil, ky, kx) sliding windows of the ACS block as rows.

    ``calib_width`` limits the kx extent to a centred band; by default the full
    readout width of the ACS rows is used.
    """
    data = acs.data
    nc, n_acs, nx = data.shape
    w = nx if calib_width is None else int(calib_width)
    w = min(w, nx)
    x0 = nx // 2 - w // 2
    region = data[:, :, x0:x0 + w]
    ky_k, kx_k = kernel
    if ky_k > region.shape[1] or kx_k > region.shape[2]:
        raise CalibrationError(f"calibration region {region.shape[1:]} smaller than kernel {kernel}")
    win = sliding_window_view(region, (ky_k, kx_k), axis=(1, 2))  # [nc, py, px, ky_k, kx_k]
    rows = np.moveaxis(win, 0, 2).reshape(-1, nc * ky_k * kx_k)
    return CalibrationMatrix(rows, (ky_k, kx_k))


def _center_pad(kern, shape):
    out = np.zeros(kern.shape[:-2] + tuple(shape), dtype=CDTYPE)
    ky, kx = kern.shape[-2:]
    y0 = shape[0] // 2 - ky // 2
    x0 = shape[1] // 2 - kx // 2
    out[..., y0:y0 + ky, x0:x0 + kx] = kern
    return out


def espirit_maps(acs, kernel=(6, 6), sigma_rel=0.02, eig_crop=0.9, full_shape=None,
                 n_power=50, power_tol=1e-10, calib_width=None):
    """Coil maps as the dominant eigenvectors of the per-pixel ESPIRiT operator.

    The signal subspace keeps right singular vectors of the calibration matrix with
    singular value >= ``sigma_rel * sigma_1``.  Pixels whose dominant eigenvalue
    falls below ``eig_crop`` are zeroed.  Returned maps have unit norm over coils
    wherever non-zero; the per-pixel phase is fixed so that sum_c c(r) is real
    and positive.
    """
    full_shape = tuple(acs.full_shape if full_shape is None else full_shape)
    cm = calibration_matrix(acs, kernel, calib_width)
    nc = acs.nc
    ky_k, kx_k = cm.window
    _, s, vh = np.linalg.svd(cm.rows, full_matrices=False)
    keep = vh[s >= sigma_rel * s[0]]
    kernels = keep.reshape(-1, nc, ky_k, kx_k)
    img_k = ifft2c(_center_pad(kernels, full_shape))  # [n_k, nc, ny, nx]
    scale = np.prod(full_shape) / (ky_k * kx_k)
    # per-pixel Gram operator sum_k v_k v_k^H, laid out [ny, nx, nc, nc]
    op = np.einsum("kcyx,kdyx->yxcd", img_k, img_k.conj()) * scale
    v = np.ones(full_shape + (nc,), dtype=CDTYPE) / np.sqrt(nc)
    for _ in range(n_power):
        w = np.einsum("yxcd,yxd->yxc", op, v)
        nrm = np.linalg.norm(w, axis=-1, keepdims=True)
        w = np.where(nrm > 0, w / np.where(nrm > 0, nrm, 1), 0)
        delta = np.max(np.abs(w - v))
        v = w
        if delta < power_tol:
            break
    eig = np.linalg.norm(np.einsum("yxcd,yxd->yxc", op, v), axis=-1)
    total = v.sum(axis=-1, keepdims=True)
    mag = np.abs(total)
    v = v * np.where(mag > 0, total.conj() / np.where(mag > 0, mag, 1), 1)
    v = v * (eig >= eig_crop)[..., None]
    maps = np.moveaxis(v, -1, 0)
    return CoilMaps(maps, normalized=True)
