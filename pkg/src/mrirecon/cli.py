"""Command-line entry point: ``mrirecon <subcommand> ...`` or ``python -m mrirecon``."""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .calibration import espirit_maps, extract_acs, grappa_fit
from .calibration import GrappaKernel
from .core import FormatError, ParameterError, ReconError
from .encoding import CoilMaps, ImagingModel, SamplingMask, apply_A, apply_AH, fft2c
from .io import RunConfig, atomic_write_json, read_array, write_array
from .metrics import metric_report
from .phantom import (
    MaskSpec, add_noise, complementary_masks, make_mask, quant_phantom, simulate_coils, synth_multiecho,
)
from .pipeline import bench, make_image, run_method
from .signal_models import DEFAULT_T2_GRID, DEFAULT_TE_LIST, Dictionary, SubspaceBasis, dict_generate, svd_basis

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NONCONVERGED, EXIT_SELFTEST = 0, 2, 3, 4, 5
MULTIECHO_TR = 3000.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(code, message, context=None):
    sys.stderr.write(json.dumps({"code": code, "message": message, "context": context or {}}) + "\n")
    return code


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


# ------------------------------------------------------------------ loaders

def load_mask(path):
    data, hdr = read_array(path, with_header=True)
    meta = hdr.get("meta", {})
    return SamplingMask(data, acceleration=meta.get("acceleration"), acs_lines=meta.get("acs_lines", 0))


def load_maps(path):
    return CoilMaps(read_array(path).astype(np.complex128))


def save_mask(path, mask, seed=None):
    meta = {"acceleration": mask.acceleration, "acs_lines": int(mask.acs_lines)}
    dims = ["ky", "kx"] if mask.data.ndim == 2 else ["echo", "ky", "kx"]
    write_array(path, mask.data.astype(np.uint8), dims, seed_provenance=seed, meta=meta)


def save_kernel(path, k):
    meta = {"R": k.R, "u_offsets": list(k.u_offsets), "v_offsets": list(k.v_offsets),
            "lattice_offset": k.lattice_offset}
    write_array(path, k.weights, ["offset", "coil", "source"], meta=meta)


def load_kernel(path):
    w, hdr = read_array(path, with_header=True)
    m = hdr.get("meta", {})
    try:
        return GrappaKernel(w.astype(np.complex128), int(m["R"]), tuple(m["u_offsets"]),
                            tuple(m["v_offsets"]), int(m.get("lattice_offset", 0)))
    except KeyError as e:
        raise FormatError(f"kernel header lacks meta field {e}") from None


def load_basis(path):
    b, hdr = read_array(path, with_header=True)
    return SubspaceBasis(b.astype(np.complex128), float(hdr.get("meta", {}).get("energy_captured", np.nan)))


def load_dictionary(path):
    atoms, hdr = read_array(path, with_header=True)
    m = hdr.get("meta", {})
    if "t2_grid" not in m or "te_list" not in m:
        raise FormatError("dictionary header lacks t2_grid / te_list meta")
    return Dictionary(atoms.astype(np.float64), np.asarray(m["t2_grid"]), np.asarray(m["te_list"]))


# ------------------------------------------------------------------ commands

def cmd_sim(a):
    out = Path(a.out)
    regions = RunConfig.load(a.config)["simulation"]["regions"]
    table = {k: tuple(v) for k, v in regions.items()}
    n, seeds = a.size, {"coils": a.seed, "noise": a.seed + 1}
    maps = simulate_coils(n, a.coils, seed=a.seed)
    if a.model == "multiecho":
        te = list(DEFAULT_TE_LIST)
        truth = synth_multiecho(quant_phantom(n, table), te, MULTIECHO_TR)
        k = fft2c(maps.data[:, None] * truth[None])
        tdims, kdims, meta = ["echo", "y", "x"], ["coil", "echo", "ky", "kx"], {"te_list": te, "tr": MULTIECHO_TR}
    else:
        truth = make_image(n, a.model, regions)
        k = fft2c(maps.data * truth)
        tdims, kdims, meta = ["y", "x"], ["coil", "ky", "kx"], {"model": a.model}
    if a.noise > 0:
        k = add_noise(k, a.noise, seeds["noise"])
    write_array(out / "truth", truth, tdims, seed_provenance=seeds, meta=meta)
    write_array(out / "maps", maps.data, ["coil", "y", "x"], seed_provenance=seeds)
    write_array(out / "kspace", k, kdims, seed_provenance=seeds, meta=meta)
    return EXIT_OK


def cmd_mask(a):
    if a.echoes > 1:
        if a.type != "uniform":
            raise ParameterError("echo-stacked masks are uniform with rotating offsets")
        mask = complementary_masks(a.size, a.accel, a.echoes, a.acs)
    else:
        mask = make_mask(a.size, MaskSpec(a.type, a.accel, a.acs, a.seed))
    save_mask(a.out, mask, seed={"mask": a.seed})
    return EXIT_OK


def cmd_calib(a):
    d = read_array(a.kspace).astype(np.complex128)
    mask = load_mask(a.mask)
    acs = extract_acs(d, mask)
    if a.method == "grappa":
        k = grappa_fit(acs, int(round(mask.acceleration)), (a.n_u, a.n_v), a.tikhonov)
        save_kernel(a.out, k)
    else:
        maps = espirit_maps(acs, kernel=(a.ksize, a.ksize), full_shape=mask.shape)
        write_array(a.out, maps.data, ["coil", "y", "x"])
    return EXIT_OK


def cmd_recon(a):
    cfg = RunConfig.load(a.config)
    d = read_array(a.kspace).astype(np.complex128)
    mask = load_mask(a.mask)
    d = d * mask.data
    if a.method == "subspace":
        if a.maps is None or a.basis is None:
            raise ParameterError("subspace recon needs --maps and --basis")
        from .recon_subspace import subspace_recon, synth_from_coeffs
        p = cfg.method("subspace")
        basis = load_basis(a.basis)
        model = ImagingModel(load_maps(a.maps), mask)
        s, res, _ = subspace_recon(d, model, basis, lam=p["lambda"], max_iter=p["iterations"],
                                   tol=p["tol"], return_info=True)
        img, info = synth_from_coeffs(basis, s), {"converged": bool(res.converged)}
        write_array(a.out, img, ["echo", "y", "x"], meta={"config": cfg.to_dict(), "info": info})
    else:
        maps = load_maps(a.maps) if a.maps else None
        kernel = load_kernel(a.kernel) if a.kernel else None
        img, info = run_method(a.method, d, mask, cfg, maps=maps, kernel=kernel)
        write_array(a.out, img, ["y", "x"], meta={"config": cfg.to_dict(), "info": _jsonable(info)})
    ok = info.get("converged", True) and info.get("dc_converged", True)
    if not ok:
        _emit_error(EXIT_NONCONVERGED, f"{a.method} did not reach its tolerance", {"info": _jsonable(info)})
        return EXIT_NONCONVERGED
    return EXIT_OK


def _jsonable(info):
    return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in info.items()}


def cmd_eval(a):
    cfg = RunConfig.load(a.config)
    x = read_array(a.recon)
    ref = read_array(a.ref)
    if x.shape != ref.shape:
        raise ParameterError(f"recon shape {list(x.shape)} differs from reference {list(ref.shape)}")
    w = cfg["metrics"]["ssim_window"]
    if x.ndim == 2:
        report = metric_report(x, ref, w)
    else:
        per = [metric_report(xi, ri, w) for xi, ri in zip(x.reshape(-1, *x.shape[-2:]), ref.reshape(-1, *ref.shape[-2:]))]
        report = {"per_image": per, "nrmse": float(np.mean([p["nrmse"] for p in per]))}
    report["config"] = cfg.to_dict()
    atomic_write_json(a.out, report)
    print(json.dumps({k: v for k, v in report.items() if k != "config"}))
    return EXIT_OK


def cmd_dict(a):
    if a.action == "gen":
        t2 = _floats(a.t2) if a.t2 else DEFAULT_T2_GRID
        te = _floats(a.te) if a.te else DEFAULT_TE_LIST
        dic = dict_generate(t2, te)
        write_array(a.out, dic.atoms, ["atom", "echo"],
                    meta={"t2_grid": dic.t2_grid.tolist(), "te_list": dic.te_list.tolist()})
    else:
        if not a.dict:
            raise ParameterError("dict basis needs --dict")
        b = svd_basis(load_dictionary(a.dict), a.k)
        write_array(a.out, b.basis, ["echo", "basis"],
                    meta={"energy_captured": b.energy_captured, "singular_values": b.singular_values.tolist()})
        print(json.dumps({"k": b.k, "energy_captured": b.energy_captured}))
    return EXIT_OK


def cmd_bench(a):
    cfg = RunConfig.load(a.config)
    bench(cfg, a.out)
    print((Path(a.out) / "table.txt").read_text(), end="")
    return EXIT_OK


def selftest_checks():
    """Small oracle checks; returns a list of (name, passed, detail)."""
    from .recon_dip import dip_init, dip_loss_grad, DipNetwork
    from .recon_sparse import soft_threshold
    from .phantom import rng

    g = rng(12345)
    results = []
    n = 16
    maps = simulate_coils(n, 4, seed=0)
    model = ImagingModel(maps, make_mask(n, MaskSpec("uniform", 2, 4)))
    worst = 0.0
    for _ in range(10):
        m = g.standard_normal((n, n)) + 1j * g.standard_normal((n, n))
        d = (g.standard_normal((4, n, n)) + 1j * g.standard_normal((4, n, n))) * model.mask.data
        Am = apply_A(m, model)
        err = abs(np.vdot(Am, d) - np.vdot(m, apply_AH(d, model)))
        worst = max(worst, err / (np.linalg.norm(Am) * np.linalg.norm(d)))
    results.append(("adjoint", worst <= 1e-10, worst))

    x = g.standard_normal((8, 8)) + 1j * g.standard_normal((8, 8))
    pars = abs(np.linalg.norm(fft2c(x)) - np.linalg.norm(x)) / np.linalg.norm(x)
    results.append(("parseval", pars <= 1e-12, pars))

    z = g.standard_normal(20) + 1j * g.standard_normal(20)
    tau = 0.7
    grid = np.linspace(-4, 4, 801)
    cand = grid[:, None] + 1j * grid[None, :]
    worst = 0.0
    for zi in z:
        obj = 0.5 * np.abs(cand - zi) ** 2 + tau * np.abs(cand)
        best = cand.flat[np.argmin(obj)]
        worst = max(worst, abs(best - soft_threshold(zi, tau)))
    results.append(("prox_oracle", worst <= 2e-2, worst))

    net, zz, _ = dip_init(7, 8, 8)
    mdl = ImagingModel(simulate_coils(8, 2, seed=3), make_mask(8, MaskSpec("uniform", 2, 2)))
    d = apply_A(g.standard_normal((8, 8)) + 1j * g.standard_normal((8, 8)), mdl)
    _, grads = dip_loss_grad(net, zz, d, mdl)
    worst, h = 0.0, 1e-4
    for _ in range(20):
        pi = int(g.integers(len(net.params)))
        j = int(g.integers(net.params[pi].size))
        vals = []
        for sgn in (1, -1):
            ps = [p.copy() for p in net.params]
            ps[pi].flat[j] += sgn * h
            vals.append(dip_loss_grad(DipNetwork(tuple(ps)), zz, d, mdl)[0])
        fd = (vals[0] - vals[1]) / (2 * h)
        an = grads[pi].flat[j]
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
    results.append(("dip_gradient", worst < 1e-4, worst))
    return results


def cmd_selftest(a):
    results = selftest_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} ({detail:.3e})")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_SELFTEST


# ------------------------------------------------------------------ parser

def build_parser():
    p = _Parser(prog="mrirecon", description="Simulate, calibrate, reconstruct and evaluate undersampled MRI.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sim", help="simulate a phantom scene")
    s.add_argument("what", choices=["phantom"])
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--coils", type=int, default=8)
    s.add_argument("--model", choices=["t1w", "t2w", "pd", "multiecho", "dwi", "shepp"], default="t2w")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--config", help="run config; only simulation.regions is used")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sim)

    s = sub.add_parser("mask", help="generate a sampling mask")
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--type", choices=["uniform", "vdrandom"], default="uniform")
    s.add_argument("--accel", type=float, default=2.0)
    s.add_argument("--acs", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--echoes", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("calib", help="GRAPPA kernel or ESPIRiT maps from ACS data")
    s.add_argument("method", choices=["grappa", "espirit"])
    s.add_argument("--kspace", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--n-u", type=int, default=2)
    s.add_argument("--n-v", type=int, default=3)
    s.add_argument("--tikhonov", type=float, default=None)
    s.add_argument("--ksize", type=int, default=6)
    s.set_defaults(func=cmd_calib)

    s = sub.add_parser("recon", help="reconstruct an image")
    s.add_argument("method", choices=["adjoint", "sense", "grappa", "pics", "lowrank", "subspace", "pnp", "dip"])
    s.add_argument("--kspace", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--maps")
    s.add_argument("--kernel")
    s.add_argument("--basis")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_recon)

    s = sub.add_parser("eval", help="nrmse / psnr / ssim against a reference")
    s.add_argument("--recon", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("dict", help="T2 dictionary and subspace basis files")
    s.add_argument("action", choices=["gen", "basis"])
    s.add_argument("--t2", help="comma-separated T2 grid in ms")
    s.add_argument("--te", help="comma-separated echo times in ms")
    s.add_argument("--dict")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_dict)

    s = sub.add_parser("bench", help="run the method comparison table")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("selftest", help="run built-in oracle checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        return _emit_error(EXIT_USAGE, str(e))
    except FormatError as e:
        return _emit_error(EXIT_FORMAT, str(e), {"type": type(e).__name__})
    except (ParameterError, ReconError, ValueError) as e:
        return _emit_error(EXIT_USAGE, str(e), {"type": type(e).__name__})


if __name__ == "__main__":
    sys.exit(main())
