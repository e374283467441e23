import numpy as np
import pytest

from mrirecon.encoding import ImagingModel, apply_A, apply_AH
from mrirecon.phantom import MaskSpec, make_mask, simulate_coils


def crandn(g, *shape):
    return g.standard_normal(shape) + 1j * g.standard_normal(shape)


def dense_operator(fn, in_shape):
    """Build the matrix of a linear map column by column from unit impulses."""
    n = int(np.prod(in_shape))
    cols = []
    for i in range(n):
        e = np.zeros(n, dtype=complex)
        e[i] = 1.0
        cols.append(np.ravel(fn(e.reshape(in_shape))))
    return np.stack(cols, axis=1)


def naive_dft2c(x):
    """Quadruple-loop centered orthonormal DFT."""
    ny, nx = x.shape
    out = np.zeros((ny, nx), dtype=complex)
    cy, cx = ny // 2, nx // 2
    for ky in range(ny):
        for kx in range(nx):
            acc = 0j
            for y in range(ny):
                for xx in range(nx):
                    ph = (ky - cy) * (y - cy) / ny + (kx - cx) * (xx - cx) / nx
                    acc += x[y, xx] * np.exp(-2j * np.pi * ph)
            out[ky, kx] = acc / np.sqrt(ny * nx)
    return out


def small_model(n=16, nc=4, R=2, acs=0, seed=0, kind="uniform"):
    maps = simulate_coils(n, nc, seed=seed)
    mask = make_mask(n, MaskSpec(kind, R, acs, seed=seed))
    return ImagingModel(maps, mask)


def rel(a, b):
    return np.linalg.norm(np.ravel(a) - np.ravel(b)) / np.linalg.norm(np.ravel(b))


@pytest.fixture
def g():
    return np.random.default_rng(20240611)


__all__ = ["crandn", "dense_operator", "naive_dft2c", "small_model", "rel", "apply_A", "apply_AH"]
