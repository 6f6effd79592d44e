"""Command-line front end.

Subcommands: analyze, calibrate, noise, denoise, baseline, eval, experiment.
Every command is deterministic given its inputs and ``--seed``; numeric
output is written with 6 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import noisegen
from .calibration import Calibration, calibrate
from .denoise import (TAU_GRID, TauSelection, denoise_once, hard_threshold, select_tau,
                      soft_threshold)
from .imagio import load_corpus, load_image, save_image
from .kern import KernelSpec, fit_widths
from .metrics import QualityRow, quality_row, residual_report, rmse, ssim, write_quality_csv
from .stats import (corpus_bands, iid_corpus, mi_map, mi_profiles, write_curve_csv, write_hist_csv,
                    write_mimap_csv)
from .xform import SteerableSpec, band_name

log = logging.getLogger("svrdenoise")

METHODS = ("noisy", "HT", "ST", "SVR", "SVR_opt")


# ---------------------------------------------------------------------------
# configuration schema

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


class TransformCfg(_Strict):
    n_scales: int = Field(4, ge=1)
    n_orients: int = Field(8, ge=1)


class KernelCfg(_Strict):
    sigma1: float = Field(4.8, gt=0)
    sigma2: float = Field(2.4, gt=0)


class ProfilesCfg(_Strict):
    c_global: float = Field(1000.0, gt=0)
    tau: float = Field(2.5, gt=0)


class SvrCfg(_Strict):
    tol: float = Field(1e-3, gt=0)
    max_sweeps: int = Field(5000, ge=1)


class NoiseCfg(BaseModel):
    """A noise spec: ``{"kind": ..., <fields>}`` plus an optional ``label``."""
    model_config = ConfigDict(extra="allow")
    kind: str
    label: Optional[str] = None

    def spec(self, seed: int = 0) -> noisegen.NoiseSpec:
        d = {k: v for k, v in self.model_dump().items() if k != "label"}
        d.setdefault("seed", seed)
        return noisegen.spec_from_dict(d)

    def name(self) -> str:
        if self.label:
            return self.label
        d = self.model_dump(exclude={"label", "kind", "seed"})
        args = ",".join(f"{k}={v}" for k, v in sorted(d.items()))
        return f"{self.kind}({args})" if args else self.kind


class RunConfig(_Strict):
    seed: int = 0
    corpus: str = "data/corpus"
    corpus_limit: Optional[int] = Field(100, ge=1)
    out: str = "out"
    images: List[str] = Field(default_factory=list)
    noise: List[NoiseCfg] = Field(default_factory=list)
    methods: List[Literal["noisy", "HT", "ST", "SVR", "SVR_opt"]] = Field(
        default_factory=lambda: list(METHODS))
    transform: TransformCfg = Field(default_factory=TransformCfg)
    kernel: KernelCfg = Field(default_factory=KernelCfg)
    profiles: ProfilesCfg = Field(default_factory=ProfilesCfg)
    svr: SvrCfg = Field(default_factory=SvrCfg)
    tau_grid: List[float] = Field(default_factory=lambda: list(TAU_GRID))
    st_images: int = Field(30, ge=1)
    mi_bins: int = Field(256, ge=2)

    @field_validator("tau_grid")
    @classmethod
    def _ascending(cls, v):
        if not v:
            raise ValueError("tau_grid must be nonempty")
        if any(t <= 0 for t in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("tau_grid must be positive and strictly ascending")
        return v

    @field_validator("noise")
    @classmethod
    def _valid_noise(cls, v):
        for n in v:
            n.spec()
        return v

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel.sigma1, self.kernel.sigma2)

    def transform_spec(self, dims) -> SteerableSpec:
        return SteerableSpec(self.transform.n_scales, self.transform.n_orients, tuple(dims))


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise SystemExit(f"error: config file not found: {p}")
    try:
        return RunConfig.model_validate_json(p.read_text())
    except ValidationError as exc:
        raise SystemExit(f"error: invalid config {p}:\n{exc}")


def _corpus(path, limit=None):
    p = Path(path)
    if not p.is_dir():
        raise SystemExit(f"error: corpus directory not found: {p}")
    try:
        return load_corpus(p, limit)
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")


def _noise_arg(text: Optional[str], cfg: RunConfig, seed: int) -> Tuple[str, noisegen.NoiseSpec]:
    """``text`` is a preset name or a JSON object; default is the config's first noise."""
    if text is None:
        if not cfg.noise:
            raise SystemExit("error: no noise given (use --noise or a config with 'noise')")
        return cfg.noise[0].name(), cfg.noise[0].spec(seed)
    if text in noisegen.PRESETS:
        return text, noisegen.with_seed(noisegen.PRESETS[text], seed)
    try:
        nc = NoiseCfg.model_validate(json.loads(text))
        return nc.name(), nc.spec(seed)
    except (json.JSONDecodeError, ValidationError, ValueError) as exc:
        raise SystemExit(f"error: --noise must be one of {sorted(noisegen.PRESETS)} "
                         f"or a JSON noise spec ({exc})")


def _f(v) -> str:
    return f"{v:.6g}"


# ---------------------------------------------------------------------------
# commands

def cmd_analyze(args, cfg: RunConfig) -> int:
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.iid:
        n = args.limit or cfg.corpus_limit or 100
        spec = cfg.transform_spec((256, 256))
        bands = corpus_bands(iid_corpus(n, spec.image_dims, cfg.seed), spec)
        for kind in ("spatial", "orientation", "scale"):
            c = mi_profiles(None, kind, spec, cfg.mi_bins, natural_bands=bands, iid_bands=bands)
            write_curve_csv(c, out / f"mi_curve_{kind}.csv", include_natural=False)
        print(f"wrote i.i.d. baseline curves to {out}")
        return 0
    corpus = _corpus(args.corpus or cfg.corpus, args.limit or cfg.corpus_limit)
    if len(corpus) < 10:
        raise SystemExit(f"error: analyze needs at least 10 images, found {len(corpus)}")
    spec_dims = corpus[0].shape
    spec = cfg.transform_spec(spec_dims)
    nat = corpus_bands(corpus, spec)
    iid = corpus_bands(iid_corpus(len(corpus), spec.image_dims, cfg.seed), spec)
    for kind in ("spatial", "orientation", "scale"):
        c = mi_profiles(None, kind, spec, cfg.mi_bins, natural_bands=nat, iid_bands=iid)
        write_curve_csv(c, out / f"mi_curve_{kind}.csv")
    maps = out / "mimaps"
    maps.mkdir(exist_ok=True)
    rows = []
    for key in spec.band_keys():
        m = mi_map(nat[key], cfg.mi_bins, band=key, alpha=spec.angle(key[1]))
        write_mimap_csv(m, maps / f"mimap_{band_name(key)}.csv")
        try:
            s1, s2 = fit_widths(m)
            c1, c2 = fit_widths(m, constrain_ratio=True)
        except ValueError:
            s1 = s2 = c1 = c2 = float("nan")
        rows.append([band_name(key), _f(spec.angle(key[1])), _f(s1), _f(s2), _f(c1), _f(c2)])
    with open(out / "kernel_widths.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["band", "alpha", "sigma1", "sigma2", "sigma1_ratio2", "sigma2_ratio2"])
        w.writerows(rows)
    print(f"wrote 3 MI curves, {len(rows)} MI maps and kernel widths to {out}")
    return 0


def cmd_calibrate(args, cfg: RunConfig) -> int:
    corpus = _corpus(args.corpus or cfg.corpus, args.limit or cfg.corpus_limit)
    seed = cfg.seed if args.seed is None else args.seed
    name, spec = _noise_arg(args.noise, cfg, seed)
    dims = corpus[0].shape
    cal = calibrate(corpus, spec, cfg.kernel_spec(), cfg.transform_spec(dims),
                    cfg.profiles.c_global, cfg.profiles.tau, cfg.st_images, strict=False,
                    fit_kernel=True, mi_bins=cfg.mi_bins)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cal.save(out)
    stem = out.with_suffix("")
    write_hist_csv(cal.signal_ref, f"{stem}_signal_hist.csv")
    write_hist_csv(cal.noise_ref, f"{stem}_noise_hist.csv")
    print(f"calibrated {name} on {len(corpus)} images -> {out}")
    return 0


def cmd_noise(args, cfg: RunConfig) -> int:
    seed = cfg.seed if args.seed is None else args.seed
    name, spec = _noise_arg(args.noise, cfg, seed)
    img = load_image(args.input)
    noisy, res = noisegen.apply_noise(img, spec)
    save_image(noisy, args.out)
    rep = residual_report(res)
    if args.report:
        write_hist_csv(rep.hist, args.report, exponent=0.25)
    print(f"noise={name} residual_var={_f(rep.variance)} pair_corr={_f(rep.pair_corr)} "
          f"noisy_ssim={_f(ssim(noisy, img))}")
    return 0


def _parse_tau(text: str):
    if text == "auto":
        return "auto"
    try:
        t = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--tau must be 'auto' or a positive number")
    if not t > 0:
        raise argparse.ArgumentTypeError("--tau must be 'auto' or a positive number")
    return t


def cmd_denoise(args, cfg: RunConfig) -> int:
    if not args.calib:
        raise SystemExit("error: --calib is required")
    try:
        cal = Calibration.load(args.calib)
    except FileNotFoundError as exc:
        raise SystemExit(f"error: {exc}")
    dc = cal.config(tau_grid=cfg.tau_grid, tol=cfg.svr.tol, max_sweeps=cfg.svr.max_sweeps)
    noisy = load_image(args.input)
    if args.tau == "auto":
        sel = select_tau(noisy, cal.signal_ref, cal.noise_ref, dc)
        tau, est = sel.tau, sel.estimate
        log.info("tau*=%s scores=%s", tau, sel.scores)
    else:
        tau = args.tau
        est, _ = denoise_once(noisy, dc, tau)
    save_image(est, args.out)
    ref = load_image(args.clean) if args.clean else None
    row = QualityRow(Path(args.input).stem, spec_label(cal), "SVR",
                     ssim(est, ref) if ref is not None else float("nan"),
                     rmse(est, ref) if ref is not None else float("nan"), tau)
    if args.report:
        write_quality_csv([row], args.report, append=True)
    print(f"tau={_f(tau)} ssim={_f(row.ssim)} rmse={_f(row.rmse)} -> {args.out}")
    return 0


def spec_label(cal: Calibration) -> str:
    return cal.noise.kind


def cmd_baseline(args, cfg: RunConfig) -> int:
    noisy = load_image(args.input)
    if args.method == "HT":
        if args.sigma is None:
            raise SystemExit("error: HT needs --sigma")
        est = hard_threshold(noisy, args.sigma)
    else:
        if not args.calib:
            raise SystemExit("error: ST needs --calib (optimized thresholds)")
        est = soft_threshold(noisy, Calibration.load(args.calib).st_thresholds)
    save_image(est, args.out)
    print(f"{args.method} -> {args.out}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    a, b = load_image(args.estimate), load_image(args.reference)
    print(f"ssim={_f(ssim(a, b))} rmse={_f(rmse(a, b))}")
    return 0


def run_experiment(cfg: RunConfig, progress=None) -> List[QualityRow]:
    """All images x noise specs x methods, in canonical order."""
    if not cfg.images or not cfg.noise:
        raise ValueError("experiment config needs 'images' and 'noise'")
    corpus = _corpus(cfg.corpus, cfg.corpus_limit)
    images = [(Path(p).stem, load_image(p)) for p in cfg.images]
    rows: List[QualityRow] = []
    for ni, nc in enumerate(cfg.noise):
        spec = nc.spec(cfg.seed)
        cal = calibrate(corpus, spec, cfg.kernel_spec(), cfg.transform_spec(corpus[0].shape),
                        cfg.profiles.c_global, cfg.profiles.tau, cfg.st_images, strict=False)
        dc = cal.config(tau_grid=cfg.tau_grid, tol=cfg.svr.tol, max_sweeps=cfg.svr.max_sweeps)
        for ii, (name, img) in enumerate(images):
            rng = np.random.default_rng([cfg.seed, 1 + ii, 1 + ni])
            noisy, _ = noisegen.apply_noise(img, spec, rng)
            sel: TauSelection | None = None
            if "SVR" in cfg.methods or "SVR_opt" in cfg.methods:
                sel = select_tau(noisy, cal.signal_ref, cal.noise_ref, dc)
            for m in cfg.methods:
                if m == "noisy":
                    rows.append(quality_row(name, nc.name(), m, noisy, img))
                elif m == "HT":
                    rows.append(quality_row(name, nc.name(), m, hard_threshold(noisy, cal.sigma_equiv), img))
                elif m == "ST":
                    rows.append(quality_row(name, nc.name(), m, soft_threshold(noisy, cal.st_thresholds), img))
                elif m == "SVR":
                    rows.append(quality_row(name, nc.name(), m, sel.estimate, img, sel.tau))
                elif m == "SVR_opt":
                    # oracle column: needs the clean image
                    best = max(dc.tau_grid, key=lambda t: (ssim(sel.estimates[t], img), -t))
                    rows.append(quality_row(name, nc.name(), m, sel.estimates[best], img, best))
            if progress:
                progress(rows[-len(cfg.methods):])
    return rows


def cmd_experiment(args, cfg: RunConfig) -> int:
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    try:
        rows = run_experiment(cfg, progress=lambda rs: [log.info("%s", r) for r in rs])
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    out = Path(args.out or cfg.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "experiment.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_quality_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="svrdenoise", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, corpus=False):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output path")
        if corpus:
            p.add_argument("--corpus", help="directory of .pgm images")
            p.add_argument("--limit", type=int, default=None, help="use the first N corpus images")

    p = sub.add_parser("analyze", help="MI curves, MI maps and fitted kernel widths")
    common(p, corpus=True)
    p.add_argument("--iid", action="store_true", help="i.i.d. baseline curves only")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("calibrate", help="profiles and reference histograms")
    common(p, corpus=True)
    p.add_argument("--noise", help=f"preset ({', '.join(sorted(noisegen.PRESETS))}) or JSON spec")
    p.set_defaults(fn=cmd_calibrate, out_required=True)

    p = sub.add_parser("noise", help="corrupt an image")
    common(p)
    p.add_argument("input")
    p.add_argument("--noise", help="preset name or JSON spec")
    p.add_argument("--report", help="residual pair-histogram CSV (0.25 display exponent)")
    p.set_defaults(fn=cmd_noise, out_required=True)

    p = sub.add_parser("denoise", help="SVR denoising")
    common(p)
    p.add_argument("input")
    p.add_argument("--calib", help="calibration JSON from 'calibrate'")
    p.add_argument("--tau", type=_parse_tau, default="auto", help="'auto' or a positive value")
    p.add_argument("--clean", help="clean reference for the report row")
    p.add_argument("--report", help="append a CSV report row here")
    p.set_defaults(fn=cmd_denoise, out_required=True)

    p = sub.add_parser("baseline", help="hard/soft wavelet thresholding")
    common(p)
    p.add_argument("input")
    p.add_argument("--method", choices=["HT", "ST"], required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--calib")
    p.set_defaults(fn=cmd_baseline, out_required=True)

    p = sub.add_parser("eval", help="SSIM and RMSE of an estimate")
    p.add_argument("estimate")
    p.add_argument("reference")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("experiment", help="full results table")
    common(p)
    p.set_defaults(fn=cmd_experiment)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "out_required", False) and not args.out:
        ap.error(f"{args.cmd}: --out is required")
    cfg = load_config(getattr(args, "config", None))
    return args.fn(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
