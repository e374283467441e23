"""Scene construction, per-method dispatch and the benchmark table."""
from pathlib import Path

import numpy as np

from .calibration import espirit_maps, extract_acs, grappa_fit
from .core import CDTYPE, ParameterError
from .encoding import ImagingModel, apply_AH, fft2c, ifft2c
from .io import atomic_write_bytes, atomic_write_json, write_array
from .metrics import metric_report
from .phantom import (
    MaskSpec, add_noise, make_mask, quant_phantom, shepp_logan, simulate_coils, synth_contrast,
)
from .recon_dip import dip_recon
from .recon_linear import grappa_apply, rss_combine, sense_cg
from .recon_lowrank import HankelConfig, lowrank_recon
from .recon_pnp import DenoiserSpec, PnpConfig, pnp_recon
from .recon_sparse import PicsConfig, pics_recon

METHODS = ("adjoint", "sense", "grappa", "pics", "lowrank", "pnp", "dip")


def make_image(size, model, regions=None):
    if model == "shepp":
        return shepp_logan(size)
    table = None if regions is None else {k: tuple(v) for k, v in regions.items()}
    return synth_contrast(quant_phantom(size, table), model)


def mask_from_config(cfg):
    n = cfg["simulation"]["size"]
    mc = cfg["mask"]
    spec = MaskSpec(mc["type"], mc["accel"], mc["acs"], cfg["seeds"]["mask"], mc["density_exponent"])
    return make_mask(n, spec)


def make_scene(cfg):
    """Ground truth image, true coil maps, mask and noisy undersampled k-space."""
    sim = cfg["simulation"]
    n = sim["size"]
    truth = make_image(n, sim["model"], sim["regions"])
    maps = simulate_coils(n, sim["coils"], seed=cfg["seeds"]["coils"])
    mask = mask_from_config(cfg)
    k_full = fft2c(maps.data * truth)
    if sim["noise_sigma"] > 0:
        k_full = add_noise(k_full, sim["noise_sigma"], cfg["seeds"]["noise"])
    d = k_full * mask.data
    return {"truth": truth, "maps": maps, "mask": mask, "kspace": d}


def estimate_maps(d, mask, cfg):
    cal = cfg["calibration"]
    acs = extract_acs(d, mask)
    return espirit_maps(acs, kernel=tuple(cal["espirit_kernel"]), sigma_rel=cal["sigma_rel"],
                        eig_crop=cal["eig_crop"], full_shape=mask.shape)


def run_method(name, d, mask, cfg, maps=None, kernel=None):
    """Reconstruct with one method.  Returns (image, info dict with ``converged``)."""
    if name not in METHODS:
        raise ParameterError(f"unknown method {name!r}")
    d = np.asarray(d, dtype=CDTYPE)
    p = cfg["methods"].get(name, {})
    info = {"converged": True}
    if name == "lowrank":
        lr = HankelConfig(radius=p["radius"], rank_ell=p["rank_ell"], tau=p["tau"],
                          max_iter=p["iterations"])
        return lowrank_recon(d, mask, lr), info
    if name == "grappa":
        if kernel is None:
            cal = cfg["calibration"]
            kernel = grappa_fit(extract_acs(d, mask), int(round(mask.acceleration)),
                                tuple(cal["grappa_geometry"]), cal["tikhonov"])
        return rss_combine(ifft2c(grappa_apply(d, mask, kernel))).astype(CDTYPE), info
    if maps is None:
        raise ParameterError(f"method {name!r} needs coil maps")
    model = ImagingModel(maps, mask)
    if name == "adjoint":
        return apply_AH(d, model), info
    if name == "sense":
        res = sense_cg(d, model, max_iter=p["iterations"], tol=p["tol"])
        info.update(iterations=res.iterations, converged=bool(res.converged))
        return res.image, info
    if name == "pics":
        pc = PicsConfig(lam=p["lambda"], alpha=p["alpha"], max_iter=p["iterations"],
                        variant=p["variant"], levels=p["levels"])
        m, hist = pics_recon(d, model, cfg=pc)
        info["objective"] = hist[-1]
        return m, info
    if name == "pnp":
        den = DenoiserSpec(p["denoiser"], p["strength"], levels=p["levels"])
        pc = PnpConfig(p["lambda"], p["iterations"], p["dc_inner_iter"], p["dc_tol"])
        m, diag = pnp_recon(d, model, den, pc)
        info["dc_converged"] = all(x["dc_converged"] for x in diag)
        return m, info
    # dip
    m, hist = dip_recon(d, model, seed=cfg["seeds"]["dip"], max_steps=p["max_steps"],
                        val_fraction=p["val_fraction"], patience=p["patience"], lr=p["lr"])
    info.update(best_step=hist.best_step, stopped_at=hist.stopped_at)
    return m, info


def format_table(rows):
    lines = [f"{'method':<10}{'nrmse':>12}{'psnr_db':>12}{'ssim':>10}"]
    for r in rows:
        ps = r["psnr"] if isinstance(r["psnr"], str) else f"{r['psnr']:.3f}"
        lines.append(f"{r['method']:<10}{r['nrmse']:>12.6f}{ps:>12}{r['ssim']:>10.4f}")
    return "\n".join(lines) + "\n"


def bench(cfg, out_dir):
    """Run every configured method on one generated scene and write the report.

    Writes ``report.json``, ``table.txt`` and one ``recon_<method>`` array per
    method into ``out_dir``.  Contains no timings so reruns are bit-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = make_scene(cfg)
    d, mask, truth = scene["kspace"], scene["mask"], scene["truth"]
    maps = scene["maps"] if cfg["calibration"]["maps"] == "true" else estimate_maps(d, mask, cfg)
    rows = []
    for name in cfg["methods"]["list"]:
        img, info = run_method(name, d, mask, cfg, maps=maps)
        write_array(out / f"recon_{name}", img, ["y", "x"])
        row = {"method": name}
        row.update(metric_report(img, truth, cfg["metrics"]["ssim_window"]))
        row["info"] = info
        rows.append(row)
    write_array(out / "truth", truth, ["y", "x"])
    report = {"config": cfg.to_dict() if hasattr(cfg, "to_dict") else cfg, "results": rows}
    atomic_write_json(out / "report.json", report)
    atomic_write_bytes(out / "table.txt", format_table(rows).encode())
    return report
