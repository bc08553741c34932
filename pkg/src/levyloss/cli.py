"""Command-line front end: config ingestion, experiment drivers, CSV emission.

Subcommands: model-info, simulate, sweep, validate.  Configuration is a
TOML file with [model], [barrier] and [sim] blocks (see README for the
schema); CLI flags override file keys.  Exit codes: 0 pass, 1 validation
failure, 2 config error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import tomli

from . import analytics, estimation
from .barrier import PeriodicBarrier
from .errors import (ConfigError, InsufficientDataError, LevylossError, NoRootError)
from .model import (ExpNegative, ExpPositive, LevyModel, PointMass, TwoSidedExp)
from .reflection import SimConfig, run_replicas

_JUMP_KINDS = {
    "exp_positive": (ExpPositive, ("rate",)),
    "exp_negative": (ExpNegative, ("rate",)),
    "two_sided_exp": (TwoSidedExp, ("p_pos", "rate_pos", "rate_neg")),
    "point_mass": (PointMass, ("size",)),
}


def _require_keys(block: dict, allowed: set, name: str):
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}")


def build_model(block: dict) -> LevyModel:
    _require_keys(block, {"drift", "sigma", "lambda", "jump"}, "model")
    try:
        drift = float(block["drift"])
    except KeyError:
        raise ConfigError("model.drift is required")
    sigma = float(block.get("sigma", 0.0))
    lam = float(block.get("lambda", 0.0))
    jumps = None
    if lam > 0.0:
        jb = block.get("jump")
        if not isinstance(jb, dict) or "kind" not in jb:
            raise ConfigError("model.jump = {kind = ..., ...} is required when lambda > 0")
        kind = jb["kind"]
        if kind not in _JUMP_KINDS:
            raise ConfigError(f"unknown jump kind {kind!r}; expected one of {sorted(_JUMP_KINDS)}")
        cls, fields = _JUMP_KINDS[kind]
        _require_keys(jb, {"kind", *fields}, "model.jump")
        try:
            jumps = cls(**{f: float(jb[f]) for f in fields})
        except KeyError as exc:
            raise ConfigError(f"model.jump missing {exc} for kind {kind!r}")
        except ValueError as exc:
            raise ConfigError(f"model.jump invalid: {exc}")
    try:
        return LevyModel(drift=drift, sigma=sigma, intensity=lam, jumps=jumps)
    except ValueError as exc:
        raise ConfigError(str(exc))


def build_barrier(block: dict) -> PeriodicBarrier:
    _require_keys(block, {"kind", "a", "pieces"}, "barrier")
    kind = block.get("kind", "sawtooth")
    if kind == "flat":
        return PeriodicBarrier.flat()
    if kind == "sawtooth":
        a = float(block.get("a", 1.0))
        if a == 0.0:
            return PeriodicBarrier.flat()
        try:
            return PeriodicBarrier.sawtooth(a)
        except ValueError as exc:
            raise ConfigError(str(exc))
    if kind == "pieces":
        rows = block.get("pieces")
        if not rows:
            raise ConfigError("barrier.kind = 'pieces' needs a pieces list")
        try:
            return PeriodicBarrier.from_pieces(
                [(float(r["t0"]), float(r["t1"]), float(r["c"]), float(r["b"]))
                 for r in rows])
        except (KeyError, TypeError):
            raise ConfigError("each barrier piece needs keys t0, t1, c, b")
        except ValueError as exc:
            raise ConfigError(str(exc))
    raise ConfigError(f"unknown barrier kind {kind!r}")


def build_sim_config(block: dict, args) -> SimConfig:
    allowed = {"K", "K_list", "T", "burn_in", "scheme", "step", "seed", "replicas",
               "workers", "v_bins", "a_bins", "batches", "v0"}
    _require_keys(block, allowed, "sim")
    if "T" not in block:
        raise ConfigError("sim.T is required")
    k = block.get("K")
    if k is None:
        klist = block.get("K_list")
        if not klist:
            raise ConfigError("sim.K (or sim.K_list for sweeps) is required")
        k = klist[0]
    seed = args.seed if args.seed is not None else block.get("seed")
    if seed is None:
        raise ConfigError("a seed is required (sim.seed or --seed)")
    workers = args.workers if args.workers is not None else block.get("workers")
    cfg = SimConfig(
        buffer=float(k),
        horizon=float(block["T"]),
        burn_in=float(block["burn_in"]) if "burn_in" in block else None,
        scheme=str(block.get("scheme", "event")),
        step=float(block.get("step", 1e-3)),
        seed=int(seed),
        replicas=int(block.get("replicas", 1)),
        workers=int(workers) if workers is not None else None,
        v_bins=int(block.get("v_bins", 200)),
        a_bins=int(block.get("a_bins", 40)),
        batches=int(block.get("batches", 32)),
        v0=float(block["v0"]) if "v0" in block else None,
        mutation="reversed_clamp" if getattr(args, "mutate", None) else None,
    )
    return cfg


def _parse_inputs(args, need_barrier=True):
    conf = load_config(args.config)
    _require_keys(conf, {"model", "barrier", "sim", "sweep", "validate"}, "config root")
    if "model" not in conf:
        raise ConfigError("[model] block is required")
    model = build_model(conf["model"])
    barrier = build_barrier(conf.get("barrier", {"kind": "flat"})) if need_barrier else None
    if "sim" not in conf:
        raise ConfigError("[sim] block is required")
    cfg = build_sim_config(conf["sim"], args)
    return conf, model, barrier, cfg


def _require_stationary(model: LevyModel):
    if model.mean_x1() >= 0.0:
        raise ConfigError(f"E X_1 >= 0 (got {model.mean_x1():g}); "
                          "stationary estimation requires negative mean input")


# ---- formatting ------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: Path, header: list, rows: list) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _loss_row(k: float, rep) -> list:
    return [float(k), rep.loss_rate, rep.loss_ci, rep.loss_cont, rep.loss_jump,
            rep.feed_rate, rep.feed_ci]


def write_loss_csv(path: Path, entries) -> None:
    write_csv(path, ["K", "l_K", "ci", "lK_cont", "lK_jump", "l_A", "ci_A"],
              [_loss_row(k, rep) for k, rep in entries])


def write_hist_csv(path: Path, hist) -> None:
    rows = []
    nv = hist.n_v
    amids = hist.a_mids()
    for iv in range(nv):
        for ia in range(hist.n_a):
            m = hist.joint[iv, ia]
            if m > 0.0:
                rows.append([float(hist.v_edges[iv]), float(hist.v_edges[iv + 1]),
                             float(hist.a_edges[ia]), float(hist.a_edges[ia + 1]), float(m)])
    for ia in range(hist.n_a):
        m = hist.joint[nv, ia]
        if m > 0.0:
            # contact cells: the level equals the barrier level, so the V range
            # is the A range of the bin
            rows.append([float(hist.a_edges[ia]), float(hist.a_edges[ia + 1]),
                         float(hist.a_edges[ia]), float(hist.a_edges[ia + 1]), float(m)])
    write_csv(path, ["v_lo", "v_hi", "a_lo", "a_hi", "mass"], rows)


# ---- subcommands -----------------------------------------------------------

def cmd_model_info(args) -> int:
    conf, model, barrier, cfg = _parse_inputs(args)
    print(f"model: drift={model.drift:g} sigma={model.sigma:g} "
          f"intensity={model.intensity:g} jumps={model.jumps}")
    dom = model.domain()
    print(f"exponent domain: ({dom.lo:g}, {dom.hi:g})")
    print(f"E X_1 = {_fmt(model.mean_x1())}")
    try:
        gamma = model.lundberg_root()
        print(f"lundberg_root gamma = {_fmt(gamma)}")
    except NoRootError as exc:
        gamma = None
        print(f"lundberg_root: none ({exc})")
    lo = max(dom.lo, -4.0) if math.isfinite(dom.lo) else -4.0
    hi = min(dom.hi, 4.0) if math.isfinite(dom.hi) else 4.0
    print("kappa table:")
    for alpha in np.linspace(lo + 0.125 * (hi - lo), hi - 0.125 * (hi - lo), 7):
        print(f"  kappa({alpha:+.4f}) = {_fmt(model.kappa(float(alpha)))}")
    print(f"barrier: period={barrier.period:g} amplitude={barrier.amplitude:g}")
    print(f"E A_0 = {_fmt(barrier.mean_level())}")
    if gamma is not None:
        print(f"C_gamma = {_fmt(barrier.exp_moment(gamma))}")
    return 0


def cmd_simulate(args) -> int:
    conf, model, barrier, cfg = _parse_inputs(args)
    _require_stationary(model)
    cfg.validate(model, barrier)
    acc = run_replicas(model, barrier, cfg)
    report = estimation.estimate_loss_rates(model, barrier, cfg, accumulators=acc)
    hist = estimation.stationary_histogram(acc)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_loss_csv(out / "loss.csv", [(cfg.buffer, report)])
    write_hist_csv(out / "hist.csv", hist)
    print(f"loss rate l_K = {_fmt(report.loss_rate)} +- {_fmt(report.loss_ci)} "
          f"(cont {_fmt(report.loss_cont)}, jump {_fmt(report.loss_jump)})")
    print(f"feed rate l_A = {_fmt(report.feed_rate)} +- {_fmt(report.feed_ci)}")
    print(f"wrote {out / 'loss.csv'} and {out / 'hist.csv'}")
    return 0


def _sweep_table(conf, model, barrier, cfg, k_list):
    entries = []
    for k in k_list:
        cfg_k = replace(cfg, buffer=float(k))
        cfg_k.validate(model, barrier)
        rep = estimation.estimate_loss_rates(model, barrier, cfg_k)
        entries.append((float(k), rep))
    return entries


def cmd_sweep(args) -> int:
    conf, model, barrier, cfg = _parse_inputs(args)
    sweep = conf.get("sweep", {})
    _require_keys(sweep, {"K_list", "table"}, "sweep")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if "table" in sweep:
        table = [(float(r[0]), float(r[1]), float(r[2])) for r in sweep["table"]]
        gamma = model.lundberg_root()
        entries = None
    else:
        _require_stationary(model)
        k_list = sweep.get("K_list") or conf["sim"].get("K_list")
        if not k_list or len(set(k_list)) < 4:
            raise ConfigError("sweep needs a K_list with at least 4 distinct levels")
        gamma = model.lundberg_root()
        entries = _sweep_table(conf, model, barrier, cfg, k_list)
        table = [(k, rep.loss_rate, rep.loss_ci) for k, rep in entries]

    try:
        fit = analytics.fit_asymptote(table, gamma)
    except InsufficientDataError as exc:
        raise ConfigError(str(exc))
    c_gamma = barrier.exp_moment(gamma)
    d_product = d_assembled = None
    if (barrier.amplitude > 0.0 and len(barrier.pieces) == 1
            and model.sigma == 0.0 and model.drift == -1.0
            and isinstance(model.jumps, ExpPositive)):
        audit = analytics.mm1_sawtooth_prefactor(
            model.intensity, model.jumps.rate, barrier.amplitude)
        d_product, d_assembled = audit.product_form, audit.assembled_form
    fit = replace(fit, c_gamma=c_gamma, d_product=d_product, d_assembled=d_assembled)

    rows = [[k, l, c, r] for (k, l, c), r in zip(fit.table, fit.log_residuals)]
    write_csv(out / "asymptotics.csv", ["K", "loss_rate", "ci", "log_resid"], rows)
    if entries is not None:
        write_loss_csv(out / "loss.csv", entries)
    summary = [
        "decay fit summary:",
        f"  gamma = {_fmt(fit.gamma)}",
        f"  c_gamma = {_fmt(fit.c_gamma)}",
        f"  d_fixed_slope = {_fmt(fit.d_fixed)}",
        f"  slope_free = {_fmt(fit.slope_free)}",
        f"  d_free = {_fmt(fit.d_free)}",
    ]
    if d_product is not None:
        summary.append(f"  d_product_form = {_fmt(d_product)}")
        summary.append(f"  d_assembled_form = {_fmt(d_assembled)}")
        closer = ("assembled" if abs(fit.d_fixed - d_assembled)
                  <= abs(fit.d_fixed - d_product) else "product")
        summary.append(f"  regression_supports = {closer}_form")
    text = "\n".join(summary)
    print(text)
    (out / "summary.txt").write_text(text + "\n")
    print(f"wrote {out / 'asymptotics.csv'}")
    return 0


def _report_row(name: str, status: str, detail: str) -> str:
    return f"  {name:<24} {status:<6} {detail}"


def cmd_validate(args) -> int:
    conf, model, barrier, cfg = _parse_inputs(args)
    _require_stationary(model)
    vconf = conf.get("validate", {})
    _require_keys(vconf, {"martingale_replicas", "alpha_fractions", "ks_samples"},
                  "validate")
    mart_reps = int(vconf.get("martingale_replicas", 2000))
    fracs = [float(f) for f in vconf.get("alpha_fractions", [0.5, 1.0])]
    ks_n = int(vconf.get("ks_samples", 100_000))

    rows = []
    failed = False
    skipped_event = False
    if model.sigma > 0.0 and cfg.scheme == "event":
        cfg = replace(cfg, scheme="grid")
        skipped_event = True
    cfg.validate(model, barrier)
    gamma = model.lundberg_root()

    # invariant barrier law at fixed offsets
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    for t_off in (0.0, 0.37 * barrier.period, 0.81 * barrier.period):
        if barrier.is_flat:
            rows.append(_report_row(f"barrier_law_ks(t={t_off:.3g})", "SKIP",
                                    "degenerate flat barrier (law is an atom)"))
            continue
        ks = estimation.empirical_phase_law_ks(barrier, t_off, ks_n, rng)
        ok = ks < 0.015
        failed |= not ok
        rows.append(_report_row(f"barrier_law_ks(t={t_off:.3g})",
                                "PASS" if ok else "FAIL", f"ks={ks:.4f} < 0.015"))

    # zero-mean martingale
    for frac in fracs:
        alpha = frac * gamma
        if skipped_event:
            rows.append(_report_row(f"martingale(alpha={alpha:.3g})", "SKIP",
                                    "event scheme unavailable with sigma > 0"))
            continue
        mt = estimation.martingale_zero_mean(model, barrier, cfg, alpha, mart_reps)
        failed |= not mt.passed
        rows.append(_report_row(
            f"martingale(alpha={alpha:.3g})", "PASS" if mt.passed else "FAIL",
            f"mean={mt.mean:.4g} se={mt.se:.4g} n={mt.n}"))

    # main run: balance, work identity, histogram, integral formula
    acc = run_replicas(model, barrier, cfg)
    report = estimation.estimate_loss_rates(model, barrier, cfg, accumulators=acc)
    hist = estimation.stationary_histogram(acc)

    bal = estimation.balance_check(report, model)
    failed |= not bal.passed
    rows.append(_report_row("balance", "PASS" if bal.passed else "FAIL",
                            f"resid={bal.value:.4g} tol={bal.tolerance:.4g}"))

    work = estimation.barrier_work_check(acc, barrier, report)
    failed |= not work.passed
    rows.append(_report_row("barrier_work", "PASS" if work.passed else "FAIL",
                            f"resid={work.value:.4g} tol={work.tolerance:.4g} ({work.detail})"))

    ks_hist = estimation.histogram_vs_barrier_law(hist, barrier)
    ok = ks_hist < 0.02
    failed |= not ok
    rows.append(_report_row("phase_marginal_ks", "PASS" if ok else "FAIL",
                            f"ks={ks_hist:.4f} < 0.02"))

    # sandwich against constant-barrier references
    lo_ref = analytics.constant_barrier_reference(model, cfg.buffer, cfg)
    hi_ref = analytics.constant_barrier_reference(
        model, cfg.buffer - barrier.amplitude, cfg) if barrier.amplitude > 0 else lo_ref
    slack_lo = report.loss_ci + lo_ref.loss_ci
    slack_hi = report.loss_ci + hi_ref.loss_ci
    ok_lo = lo_ref.loss_rate <= report.loss_rate + slack_lo
    ok_hi = report.loss_rate <= hi_ref.loss_rate + slack_hi
    failed |= not (ok_lo and ok_hi)
    rows.append(_report_row("sandwich_lower", "PASS" if ok_lo else "FAIL",
                            f"flat {lo_ref.loss_rate:.4g} <= {report.loss_rate:.4g}"))
    rows.append(_report_row("sandwich_upper", "PASS" if ok_hi else "FAIL",
                            f"{report.loss_rate:.4g} <= shifted flat {hi_ref.loss_rate:.4g}"))

    formula = analytics.integral_loss_rate(analytics.IntegralLossInputs(
        model=model, barrier=barrier, buffer=cfg.buffer, histogram=hist))
    rel = abs(formula - report.loss_rate) / report.loss_rate if report.loss_rate > 0 else math.inf
    ok = rel <= 0.10
    failed |= not ok
    rows.append(_report_row("integral_formula_vs_mc", "PASS" if ok else "FAIL",
                            f"formula={formula:.4g} mc={report.loss_rate:.4g} rel={rel:.2%}"))

    print("validation suite:")
    for r in rows:
        print(r)
    print("result:", "FAIL" if failed else "PASS")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="levyloss",
        description="Loss-rate simulation and analytics for reflected Levy input")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("model-info", cmd_model_info), ("simulate", cmd_simulate),
                     ("sweep", cmd_sweep), ("validate", cmd_validate)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override sim.seed")
        p.add_argument("--workers", type=int, default=None, help="override sim.workers")
        p.add_argument("--out-dir", default=".", help="output directory for CSV files")
        if name == "validate":
            p.add_argument("--mutate", choices=["reversed-clamp"], default=None,
                           help="run the deliberately corrupted build (negative control)")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InsufficientDataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LevylossError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
