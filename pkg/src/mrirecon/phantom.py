"""Deterministic synthetic scenes: ellipse phantoms, coil maps, masks, echo series.

All randomness goes through a Philox counter-based generator seeded with an
explicit 64-bit integer (see :func:`rng`), so outputs are reproducible across
platforms.
"""
from dataclasses import dataclass

import numpy as np

from .core import CDTYPE, ParameterError, RDTYPE
from .encoding import CoilMaps, SamplingMask
from .signal_models import SequenceParams, TissueMaps, diffusion_signal, spin_echo_signal


def rng(seed):
    """Philox generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple
    axes: tuple
    angle: float  # radians
    intensity: float

    def __post_init__(self):
        if min(self.axes) <= 0:
            raise ParameterError("ellipse semi-axes must be > 0")


def _deg(a):
    return np.deg2rad(a)


# Modified (Toft) Shepp-Logan head: non-negative, intensities in [0, 1].
SHEPP_LOGAN = (
    EllipseSpec((0.0, 0.0), (0.69, 0.92), 0.0, 1.0),
    EllipseSpec((0.0, -0.0184), (0.6624, 0.874), 0.0, -0.8),
    EllipseSpec((0.22, 0.0), (0.11, 0.31), _deg(-18.0), -0.2),
    EllipseSpec((-0.22, 0.0), (0.16, 0.41), _deg(18.0), -0.2),
    EllipseSpec((0.0, 0.35), (0.21, 0.25), 0.0, 0.1),
    EllipseSpec((0.0, 0.1), (0.046, 0.046), 0.0, 0.1),
    EllipseSpec((0.0, -0.1), (0.046, 0.046), 0.0, 0.1),
    EllipseSpec((-0.08, -0.605), (0.046, 0.023), 0.0, 0.1),
    EllipseSpec((0.0, -0.606), (0.023, 0.023), 0.0, 0.1),
    EllipseSpec((0.06, -0.605), (0.023, 0.046), 0.0, 0.1),
)


def pixel_coords(n):
    """Pixel-centre coordinates in [-1, 1]; x grows with column, y grows upward."""
    c = (np.arange(n) + 0.5) * (2.0 / n) - 1.0
    return np.meshgrid(c, -c, indexing="xy")


def ellipse_inside(e, x, y):
    dx = x - e.center[0]
    dy = y - e.center[1]
    ca, sa = np.cos(e.angle), np.sin(e.angle)
    u = (dx * ca + dy * sa) / e.axes[0]
    v = (-dx * sa + dy * ca) / e.axes[1]
    return u * u + v * v <= 1.0


def _check_size(n, minimum=2):
    if n % 2 or n < minimum:
        raise ParameterError(f"phantom size must be even and >= {minimum}, got {n}")


def shepp_logan(n, ellipses=SHEPP_LOGAN):
    """Rasterise the ellipse phantom on an ``n x n`` grid (complex, zero phase)."""
    _check_size(n, 16)
    x, y = pixel_coords(n)
    img = np.zeros((n, n), dtype=RDTYPE)
    for e in ellipses:
        img[ellipse_inside(e, x, y)] += e.intensity
    # summing +-0.1 style constants leaves 1e-17 crumbs; snap them
    img = np.clip(np.round(img, 12), 0.0, 1.0)
    return img.astype(CDTYPE)


# Region table: (rho, T1 ms, T2 ms, D mm^2/s).  Implementation defaults, not
# measured tissue values.
REGION_TABLE = {
    "background": (0.0, 1000.0, 100.0, 0.0),
    "wm": (0.8, 800.0, 80.0, 0.8e-3),
    "gm": (1.0, 1200.0, 110.0, 1.0e-3),
    "csf": (1.0, 4000.0, 2000.0, 3.0e-3),
}


def region_labels(n, ellipses=SHEPP_LOGAN):
    """Tissue class per pixel from the ellipse layout.

    Skull ring and small blobs map to ``wm``, the brain body to ``gm`` and the
    two ventricles to ``csf``.
    """
    x, y = pixel_coords(n)
    inside = [ellipse_inside(e, x, y) for e in ellipses]
    labels = np.full((n, n), "background", dtype=object)
    labels[inside[0]] = "wm"
    labels[inside[1]] = "gm"
    labels[inside[2] | inside[3]] = "csf"
    for m in inside[4:]:
        labels[m] = "wm"
    return labels


def quant_phantom(n, table=None):
    """Piecewise-constant rho / T1 / T2 / D maps over the Shepp-Logan layout."""
    _check_size(n)
    table = dict(REGION_TABLE if table is None else table)
    labels = region_labels(n)
    maps = np.zeros((4, n, n), dtype=RDTYPE)
    for name, row in table.items():
        maps[:, labels == name] = np.asarray(row, dtype=RDTYPE)[:, None]
    return TissueMaps(*maps)


def simulate_coils(n, nc, seed=0, radius=1.3, width=0.9):
    """Smooth complex Gaussian-lobe sensitivities, normalised so sum_c |c|^2 = 1.

    Lobe centres sit evenly on a circle of ``radius`` (FOV units, [-1, 1]) with
    Gaussian width ``width``; each coil carries a seed-dependent linear phase ramp.
    """
    if nc < 1:
        raise ParameterError("need at least one coil")
    _check_size(n)
    x, y = pixel_coords(n)
    g = rng(seed)
    # ramp coefficients drawn before the loop so coil c always gets the same ones
    phase = g.uniform(-np.pi / 4, np.pi / 4, size=(nc, 3))
    maps = np.empty((nc, n, n), dtype=CDTYPE)
    for c in range(nc):
        ang = 2 * np.pi * c / nc
        cx, cy = radius * np.cos(ang), radius * np.sin(ang)
        mag = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width**2))
        ph = phase[c, 0] + phase[c, 1] * x + phase[c, 2] * y
        maps[c] = mag * np.exp(1j * ph)
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return CoilMaps(maps, normalized=True)


@dataclass(frozen=True)
class MaskSpec:
    kind: str = "uniform"  # "uniform" | "vdrandom"
    R: float = 2.0
    acs_lines: int = 0
    seed: int = 0
    density_exponent: float = 2.0
    offset: int = 0  # uniform only: lattice phase, lines with ky % R == offset

    def __post_init__(self):
        if self.kind not in ("uniform", "vdrandom"):
            raise ParameterError(f"unknown mask kind {self.kind!r}")
        if self.R < 1:
            raise ParameterError("R must be >= 1")
        if self.acs_lines < 0:
            raise ParameterError("acs_lines must be >= 0")


def acs_rows(n, acs_lines):
    start = n // 2 - acs_lines // 2
    return np.arange(start, start + acs_lines)


def make_mask(n, spec):
    """Line (ky) undersampling mask on an ``n x n`` grid; kx is always fully sampled."""
    _check_size(n)
    if spec.acs_lines >= n:
        raise ParameterError("acs_lines must be < n")
    if spec.acs_lines > n / spec.R:
        raise ParameterError(
            f"infeasible budget: {spec.acs_lines} ACS lines exceed n/R = {n / spec.R:g}"
        )
    lines = np.zeros(n, dtype=bool)
    lines[acs_rows(n, spec.acs_lines)] = True
    if spec.kind == "uniform":
        step = int(round(spec.R))
        if step != spec.R:
            raise ParameterError("uniform masks need an integer R")
        lines[spec.offset % step::step] = True
    else:
        budget = int(round(n / spec.R)) - int(lines.sum())
        centre = n // 2
        free = np.flatnonzero(~lines)
        w = (1.0 + np.abs(free - centre) / centre) ** (-spec.density_exponent)
        if budget > 0:
            pick = rng(spec.seed).choice(free, size=budget, replace=False, p=w / w.sum())
            lines[pick] = True
    mask = np.repeat(lines[:, None], n, axis=1)
    return SamplingMask(mask.astype(np.uint8), acceleration=spec.R, acs_lines=spec.acs_lines)


def complementary_masks(n, R, n_echo, acs_lines=0):
    """Echo-stacked uniform masks whose lattice offset rotates with the echo index."""
    masks = [
        make_mask(n, MaskSpec("uniform", R, acs_lines, offset=e % int(R))).data for e in range(n_echo)
    ]
    return SamplingMask(np.stack(masks).astype(np.uint8), acceleration=R, acs_lines=acs_lines)


def synth_multiecho(maps, te_list, tr, k_const=1.0):
    """Echo series ``[ne, ny, nx]`` from the spin-echo equation, one image per TE."""
    te = np.atleast_1d(np.asarray(te_list, dtype=RDTYPE))
    if te.size == 0:
        raise ParameterError("need at least one echo time")
    out = np.empty((te.size,) + maps.shape, dtype=CDTYPE)
    for e, t in enumerate(te):
        out[e] = spin_echo_signal(maps.rho, maps.t1, maps.t2, SequenceParams(tr, float(t), k_const))
    return out


def synth_contrast(maps, kind, k_const=1.0):
    """Single weighted image: ``t1w``, ``t2w``, ``pd`` or ``dwi`` with fixed protocol timings."""
    protocols = {
        "t1w": SequenceParams(tr=500.0, te=10.0, k_const=k_const),
        "t2w": SequenceParams(tr=6000.0, te=100.0, k_const=k_const),
        "pd": SequenceParams(tr=6000.0, te=10.0, k_const=k_const),
        "dwi": SequenceParams(tr=6000.0, te=80.0, k_const=k_const, b=1000.0),
    }
    if kind not in protocols:
        raise ParameterError(f"unknown contrast {kind!r}")
    p = protocols[kind]
    return diffusion_signal(maps.rho, maps.t1, maps.t2, p, maps.diff).astype(CDTYPE)


def add_noise(x, sigma, seed):
    """Add circular complex white Gaussian noise with per-component std ``sigma``."""
    x = np.asarray(x, dtype=CDTYPE)
    g = rng(seed)
    noise = g.standard_normal(x.shape + (2,))
    return x + sigma * (noise[..., 0] + 1j * noise[..., 1])
