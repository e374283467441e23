"""Array files (JSON header + raw little-endian payload) and run configuration."""
import copy
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import FormatError, ParameterError
from .phantom import REGION_TABLE

FORMAT_VERSION = 1
DTYPES = {
    "complex64": np.dtype("<c8"),
    "float32": np.dtype("<f4"),
    "uint8": np.dtype("u1"),
}
# k-space axes plus image-domain and calibration axes used by non-k-space files
AXIS_NAMES = {"coil", "echo", "ky", "kx", "basis", "y", "x", "atom", "offset", "source"}


def _paths(path):
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".bin")


def atomic_write_bytes(path, data):
    """Write ``data`` to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def atomic_write_json(path, obj):
    atomic_write_bytes(path, dump_json(obj).encode("utf-8"))


def _pick_dtype(arr):
    if np.iscomplexobj(arr):
        return "complex64"
    if arr.dtype == np.bool_ or arr.dtype == np.uint8:
        return "uint8"
    return "float32"


def write_array(path, array, dims, dtype=None, seed_provenance=None, meta=None):
    """Write ``<path>.json`` + ``<path>.bin``.  Returns the header dict."""
    arr = np.asarray(array)
    dims = list(dims)
    if len(dims) != arr.ndim:
        raise FormatError(f"{len(dims)} dim names for a {arr.ndim}-D array")
    bad = [d for d in dims if d not in AXIS_NAMES]
    if bad:
        raise FormatError(f"unknown axis names {bad}")
    dtype = dtype or _pick_dtype(arr)
    if dtype not in DTYPES:
        raise FormatError(f"unsupported dtype {dtype!r}")
    if dtype != "complex64" and np.iscomplexobj(arr):
        raise FormatError(f"complex data cannot be stored as {dtype}")
    payload = np.ascontiguousarray(arr, dtype=DTYPES[dtype]).tobytes(order="C")
    header = {
        "version": FORMAT_VERSION,
        "dtype": dtype,
        "order": "row-major",
        "endianness": "little",
        "dims": dims,
        "shape": [int(s) for s in arr.shape],
    }
    if seed_provenance is not None:
        header["seed_provenance"] = seed_provenance
    if meta is not None:
        header["meta"] = meta
    hpath, bpath = _paths(path)
    atomic_write_bytes(bpath, payload)
    atomic_write_json(hpath, header)
    return header


def read_header(path):
    hpath, _ = _paths(path)
    try:
        header = json.loads(hpath.read_text())
    except FileNotFoundError:
        raise FormatError(f"missing header {hpath}") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"header {hpath} is not valid JSON at byte {e.pos}") from None
    for key in ("version", "dtype", "order", "dims", "shape"):
        if key not in header:
            raise FormatError(f"header {hpath} lacks field {key!r}")
    if header["version"] != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {header['version']}")
    if header["dtype"] not in DTYPES:
        raise FormatError(f"bad dtype {header['dtype']!r}")
    if header["order"] != "row-major":
        raise FormatError(f"bad order {header['order']!r}")
    if header.get("endianness", "little") != "little":
        raise FormatError(f"bad endianness marker {header['endianness']!r}")
    if len(header["dims"]) != len(header["shape"]):
        raise FormatError("dims and shape lengths differ")
    if any((not isinstance(s, int)) or s < 0 for s in header["shape"]):
        raise FormatError(f"bad shape {header['shape']}")
    return header


def read_array(path, with_header=False):
    """Load an array file, validating the header and the payload length."""
    header = read_header(path)
    _, bpath = _paths(path)
    dt = DTYPES[header["dtype"]]
    try:
        raw = bpath.read_bytes()
    except FileNotFoundError:
        raise FormatError(f"missing payload {bpath}") from None
    count = int(np.prod(header["shape"], dtype=np.int64))
    expected = count * dt.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"payload {bpath} has {len(raw)} bytes, expected {expected} "
            f"({count} x {dt.itemsize}-byte {header['dtype']})"
        )
    arr = np.frombuffer(raw, dtype=dt).reshape(header["shape"]).copy()
    return (arr, header) if with_header else arr


# ---------------------------------------------------------------- run config

DEFAULT_CONFIG = {
    "simulation": {
        "size": 32,
        "coils": 8,
        "model": "pd",
        "noise_sigma": 0.001,
        # per tissue class: [rho, T1 ms, T2 ms, D mm^2/s]
        "regions": {name: list(row) for name, row in REGION_TABLE.items()},
    },
    "mask": {
        "type": "uniform",
        "accel": 4.0,
        "acs": 4,
        "density_exponent": 2.0,
    },
    "calibration": {
        "maps": "true",
        "grappa_geometry": [2, 3],
        "tikhonov": None,
        "espirit_kernel": [6, 6],
        "sigma_rel": 0.02,
        "eig_crop": 0.9,
    },
    "methods": {
        "list": ["adjoint", "sense", "pics", "lowrank", "pnp", "dip"],
        "sense": {"iterations": 400, "tol": 1e-6},
        "pics": {"lambda": 0.001, "alpha": 1.0, "iterations": 200, "variant": "fista", "levels": 3},
        "lowrank": {"radius": 2, "rank_ell": 30, "tau": None, "iterations": 50},
        "subspace": {"K": 3, "lambda": 1e-6, "iterations": 200, "tol": 1e-10},
        "pnp": {"lambda": 0.5, "iterations": 10, "dc_inner_iter": 20, "dc_tol": 1e-6,
                "denoiser": "wavelet", "strength": 0.01, "levels": 2},
        "dip": {"max_steps": 1000, "val_fraction": 0.1, "patience": 5, "lr": 0.003},
    },
    "metrics": {"ssim_window": 7},
    "seeds": {"coils": 1, "mask": 2, "noise": 3, "dip": 4},
}


def _merge(defaults, user, where):
    if not isinstance(user, dict):
        raise ParameterError(f"config section {where or '<root>'} must be an object")
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        path = f"{where}.{key}" if where else key
        if key not in defaults:
            raise ParameterError(f"unknown config key {path!r}")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], val, path)
        else:
            out[key] = copy.deepcopy(val)
    return out


class RunConfig:
    """A fully materialised run configuration; unknown keys are rejected."""

    def __init__(self, data=None):
        self.data = _merge(DEFAULT_CONFIG, data or {}, "")

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        try:
            text = Path(path).read_text()
        except FileNotFoundError:
            raise ParameterError(f"config file {path} not found") from None
        try:
            return cls(json.loads(text))
        except json.JSONDecodeError as e:
            raise ParameterError(f"config {path} is not valid JSON: {e.msg} at byte {e.pos}") from None

    def __getitem__(self, key):
        return self.data[key]

    def method(self, name):
        return self.data["methods"][name]

    def to_dict(self):
        return copy.deepcopy(self.data)
