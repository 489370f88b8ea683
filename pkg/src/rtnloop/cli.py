"""Command-line front end: ``rtnloop {simulate,fit,predict,compare,synth}``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analytic, inference, io, montecarlo
from .analytic import DecoherenceCurve, NoLoopingError, Protocol
from .montecarlo import Fidelity, SimPlan
from .noise_model import ConfigurationError, discretize

log = logging.getLogger("rtnloop")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
METHODS = ("analytic", "phase", "lab")


class UsageError(Exception):
    pass


def _methods(args, default="analytic"):
    names = [m.strip() for m in (args.method or default).split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad:
        raise UsageError(f"--method: unknown method {bad[0]!r}; choose from {', '.join(METHODS)}")
    return names


def _config(args, required=True):
    if args.config is None:
        if required:
            raise UsageError("--config is required for this command")
        return None
    cfg = io.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trajectories is not None:
        cfg.trajectories = args.trajectories
    cfg.validate()
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_curve(out: Path, name: str, curve: DecoherenceCurve, fmt: str) -> Path:
    if fmt == "json":
        path = out / f"{name}.json"
        path.write_text(io.curve_to_json(curve))
    else:
        path = out / f"{name}.csv"
        io.write_curve_csv(path, curve)
    return path


def analytic_curve(cfg: io.RunConfig, cos_theta=None, alpha=None) -> DecoherenceCurve:
    """Closed-form curve for a config: continuum formulas for a spectrum,
    discrete ones for an explicit source list."""
    t = cfg.times()
    protocol = Protocol(cfg.protocol)
    qubit = cfg.qubit()
    if cfg.sources is not None:
        sources = cfg.source_list(cos_theta)
        if protocol is Protocol.ER:
            values = analytic.n_er_discrete(sources, qubit, t)
        elif protocol is Protocol.SE:
            values = analytic.n_se_discrete(sources, qubit, t)
        else:
            values = analytic.phi_se_discrete(sources, t)
    else:
        spec = cfg.spectrum(cos_theta, alpha)
        if protocol is Protocol.ER:
            values = np.exp(-analytic.gamma1_continuum(spec, qubit.b0) * t)
        elif protocol is Protocol.SE:
            values = analytic.n_se_continuum(spec, qubit, t)
        else:
            gc = spec.gamma_c
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", analytic.OutOfBandWarning)
                g3 = analytic.gamma3_continuum(spec, gc)
            values = analytic.phi_se(g3, gc, t)
    meta = {"method": "analytic", "cos_theta": qubit.cos_theta if cos_theta is None else cos_theta}
    return DecoherenceCurve(protocol, t, values, None, meta)


def mc_plan(cfg: io.RunConfig, fidelity: Fidelity, cos_theta=None, alpha=None) -> SimPlan:
    protocol = Protocol(cfg.protocol)
    if fidelity is Fidelity.LAB_FRAME and protocol is Protocol.PHI_SE:
        raise UsageError("protocol: lab-frame simulation needs protocol ER or SE")
    if fidelity is Fidelity.PHASE_ONLY and protocol is Protocol.ER:
        raise UsageError("protocol: the phase-only channel has no ER signal; use --method lab")
    if alpha is not None:
        sources = discretize(cfg.spectrum(cos_theta, alpha))
    else:
        sources = cfg.source_list(cos_theta)
    return SimPlan(
        sources=tuple(sources),
        qubit=cfg.qubit(),
        times=cfg.times(),
        protocol=protocol,
        fidelity=fidelity,
        trajectories=cfg.trajectories,
        master_seed=cfg.seed,
    )


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    for method in _methods(args):
        if method == "analytic":
            curve = analytic_curve(cfg)
        else:
            fid = Fidelity.PHASE_ONLY if method == "phase" else Fidelity.LAB_FRAME
            curve = montecarlo.simulate(mc_plan(cfg, fid), workers=args.workers)
        path = _write_curve(out, f"curve_{method}", curve, args.format)
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args, required=False)
    curves = io.read_dataset_csv(args.dataset)
    delta = args.delta
    if delta is None and cfg is not None:
        delta = cfg.qubit().delta
    gamma1_ex = args.gamma1_ex if args.gamma1_ex is not None else (cfg.gamma1_ex if cfg else None)
    report = inference.analyze(curves, delta=delta, gamma1_ex=gamma1_ex, weighted=not args.unweighted)
    out = _out_dir(args)
    (out / "report.json").write_text(io.report_to_json(report))
    (out / "report.txt").write_text(io.report_table(report))
    sys.stdout.write(io.report_table(report))
    return EXIT_OK


def predictions(g: float, cos_thetas) -> list[dict]:
    rows = []
    for c in cos_thetas:
        gc = g * c
        try:
            row = {"cos_theta": c, "gamma_c": gc, "tau_p_us": analytic.plateau_time(gc),
                   "loop_period_us": analytic.looping_period(g, c), "looping": "yes"}
        except NoLoopingError:
            row = {"cos_theta": c, "gamma_c": gc, "tau_p_us": None, "loop_period_us": None, "looping": "no"}
        rows.append(row)
    return rows


def cmd_predict(args) -> int:
    if args.report is not None:
        try:
            data = json.loads(Path(args.report).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise io.DataError(f"{args.report}: cannot read report: {exc}") from None
        g = data.get("g_hat")
        if g is None:
            raise io.DataError(f"{args.report}: report has no g_hat (underdetermined fit)")
        cos_thetas = [p["cos_theta"] for p in data.get("per_point", [])]
    else:
        cfg = _config(args)
        g = cfg.g
        cos_thetas = cfg.cos_thetas or [cfg.qubit().cos_theta]
    rows = predictions(g, [float(c) for c in cos_thetas])
    out = _out_dir(args)
    if args.format == "json":
        (out / "predictions.json").write_text(json.dumps({"g": g, "predictions": rows}, indent=2) + "\n")
    else:
        keys = ["cos_theta", "gamma_c", "tau_p_us", "loop_period_us", "looping"]
        lines = [",".join(keys)]
        for r in rows:
            lines.append(",".join(r[k] if isinstance(r[k], str) else io._fmt(r[k]) for k in keys))
        (out / "predictions.csv").write_text("\n".join(lines) + "\n")
    for r in rows:
        if r["looping"] == "yes":
            print(f"cos_theta={r['cos_theta']:g}: gamma_c={r['gamma_c']:.4g}, "
                  f"tau_P={r['tau_p_us']:.4g} us, period={r['loop_period_us']:.4g} us")
        else:
            print(f"cos_theta={r['cos_theta']:g}: no looping")
    return EXIT_OK


def compare_rows(cfg: io.RunConfig, methods, workers=None):
    """Long-format rows ``(alpha, cos_theta, t, model, value, stderr)`` plus plateau heights."""
    alphas = cfg.alphas or [cfg.alpha]
    cos_thetas = cfg.cos_thetas or [cfg.qubit().cos_theta]
    pc = io.RunConfig(**{**cfg.to_dict(), "protocol": "PhiSE"})
    rows, heights = [], {}
    for a in alphas:
        for c in cos_thetas:
            phi = analytic_curve(pc, c, a)
            t = phi.times
            families = [("phi_se", phi.values, None)]
            try:
                gg = inference.fit_gaussian(phi)
                families.append(("gaussian_fit", analytic.gaussian_model(gg, t), None))
            except inference.InsufficientDataError:
                log.warning("alpha=%g cos_theta=%g: too few points for a Gaussian fit", a, c)
            if "phase" in methods:
                plan = mc_plan(pc, Fidelity.PHASE_ONLY, c, a)
                mc = montecarlo.phi_se_mc(plan, workers)
                cum = montecarlo.gaussian_from_cumulant(plan, workers)
                families += [("mc_phase", mc.values, mc.stderr), ("mc_cumulant", cum.values, cum.stderr)]
            for model, values, err in families:
                err = [None] * t.size if err is None else err
                rows.extend((a, c, ti, model, v, e) for ti, v, e in zip(t, values, err))
            heights[(a, c)] = analytic.plateau_height(t, phi.values)
    return rows, heights


def cmd_compare(args) -> int:
    cfg = _config(args)
    if cfg.sources is not None:
        raise UsageError("sources: compare needs a power-law spectrum")
    rows, heights = compare_rows(cfg, _methods(args), args.workers)
    out = _out_dir(args)
    io.write_compare_csv(out / "compare.csv", rows)
    for (a, c), h in heights.items():
        print(f"alpha={a:g} cos_theta={c:g}: first plateau height {h:.4g}")
    return EXIT_OK


def synth_dataset(cfg: io.RunConfig, noise_level: float, seed: int) -> dict:
    """Phase-memory curves with multiplicative Gaussian noise at each working point."""
    t = cfg.times()
    curves = {}
    for i, c in enumerate(cfg.cos_thetas or [cfg.qubit().cos_theta]):
        spec = cfg.spectrum(c)
        gc = spec.gamma_c
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", analytic.OutOfBandWarning)
            clean = analytic.phi_se(analytic.gamma3_continuum(spec, gc), gc, t)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        values = clean * (1.0 + noise_level * rng.standard_normal(t.size))
        stderr = noise_level * np.abs(values) if noise_level > 0 else None
        curves[float(c)] = DecoherenceCurve(Protocol.PHI_SE, t, values, stderr)
    return curves


def cmd_synth(args) -> int:
    cfg = _config(args)
    noise = cfg.noise_level if args.noise_level is None else args.noise_level
    if noise < 0:
        raise UsageError("--noise-level: must be >= 0")
    curves = synth_dataset(cfg, noise, cfg.seed)
    out = _out_dir(args)
    io.write_dataset_csv(out / "dataset.csv", curves)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--trajectories", type=int, help="Monte Carlo trajectories (overrides config)")
    common.add_argument("--method", help="analytic, phase or lab; comma-separated for several")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo chunks")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rtnloop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="write decoherence curves")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("fit", parents=[common], help="infer noise parameters from a dataset")
    p.add_argument("dataset", help="CSV with cos_theta,t_us,phi_se,stderr")
    p.add_argument("--delta", type=float, help="splitting at cos(theta)=0 in us^-1, for Gamma_1 theory")
    p.add_argument("--gamma1-ex", type=float, help="measured relaxation rate in us^-1")
    p.add_argument("--unweighted", action="store_true", help="unweighted global regressions")
    p.set_defaults(func=cmd_fit)
    p = sub.add_parser("predict", parents=[common], help="plateau times and looping periods")
    p.add_argument("--report", help="fit report JSON to take g and working points from")
    p.set_defaults(func=cmd_predict)
    p = sub.add_parser("compare", parents=[common], help="echo vs Gaussian curves over alpha and cos(theta)")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("synth", parents=[common], help="synthetic phase-memory dataset")
    p.add_argument("--noise-level", type=float, help="relative Gaussian noise (overrides config)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (io.DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (inference.NonConvergenceError, inference.InsufficientDataError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
