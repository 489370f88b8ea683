"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one ``PASS``/``FAIL`` line to the terminal before asserting.
"""
import json
import math
import time
import warnings

import numpy as np
import pytest
from scipy import integrate

from rtnloop import analytic, inference, io
from rtnloop.analytic import DecoherenceCurve, Protocol
from rtnloop.cli import main
from rtnloop.montecarlo import (
    Fidelity,
    SimPlan,
    evolve_lab_frame,
    exact_single_rtn_echo,
    gaussian_from_cumulant,
    phi_se_mc,
)
from rtnloop.noise_model import PowerLawSpectrum, QubitConfig, RtnSource, discretize, psd

pytestmark = pytest.mark.acceptance

A = dict(alpha=0.77, s=0.0, gamma_min=0.048, g=9.6)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail, elapsed, budget):
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail} ({elapsed:.2f}s / {budget:g}s)")
        assert ok, detail
    return emit


def test_c01_gamma1_consistency(verdict):
    t0 = time.perf_counter()
    b_b0 = math.hypot(3900.0, 925.0)
    col_b = analytic.gamma1_continuum(PowerLawSpectrum(0.75, 0.0, 0.098, math.inf, 135.0, math.pi / 2), b_b0,
                                      gamma_max=math.inf)
    col_a = analytic.gamma1_continuum(PowerLawSpectrum(0.77, 0.0, 0.048, math.inf, 9.6, math.pi / 2), 5445.0,
                                      gamma_max=math.inf)
    elapsed = time.perf_counter() - t0
    ok = abs(col_b / 5.4 - 1) <= 0.1 and float(f"{col_a:.1g}") == 0.02
    verdict(1, ok, f"Gamma_1(th) B = {col_b:.3f} (5.4 +-10%), A = {col_a:.4f} (0.02 at 1 s.f.)", elapsed, 1.0)


def test_c02_plateau_time(verdict):
    t0 = time.perf_counter()
    tau = analytic.plateau_time(2.1)
    elapsed = time.perf_counter() - t0
    verdict(2, abs(tau - 3.74) < 5e-4 and abs(tau / 3.7 - 1) <= 0.02, f"tau_P(2.1) = {tau:.4f} us (3.7 +-2%)",
            elapsed, 0.1)


def test_c03_gamma3_closed_form(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        alpha = rng.uniform(0.05, 3.0)
        s = rng.uniform(-0.9, 1.5)
        gmin = 10 ** rng.uniform(-3, 0)
        gmax = gmin * 10 ** rng.uniform(1, 5)
        gc = gmin * (gmax / gmin) ** rng.uniform(0.05, 0.95)
        closed = analytic.gamma3_continuum(PowerLawSpectrum(alpha, s, gmin, gmax), gc)
        quad, _ = integrate.quad(lambda x: alpha * x**s, gmin, gc, epsrel=1e-13, epsabs=0, limit=400)
        worst = max(worst, abs(closed / quad - 1))
    elapsed = time.perf_counter() - t0
    verdict(3, worst <= 1e-9, f"max rel. deviation over 20 draws = {worst:.2e} (<= 1e-9)", elapsed, 1.0)


def test_c04_single_rtn_oracle(verdict):
    v, gamma = 2.0, 0.1
    t = np.linspace(0, 2 * math.pi / v, 41)
    t0 = time.perf_counter()
    exact = exact_single_rtn_echo(v, gamma, 0.0, t)
    plan = SimPlan((RtnSource(v, gamma),), QubitConfig(0.0, 1.0), t, Protocol.PHI_SE,
                   trajectories=1_000_000, master_seed=0)
    mc = phi_se_mc(plan, workers=4)
    elapsed = time.perf_counter() - t0
    first_order = analytic.phi_se_discrete([RtnSource(v, gamma)], t)
    z = np.abs(mc.values - exact) / np.where(mc.stderr > 0, mc.stderr, np.inf)
    z[mc.stderr == 0] = np.where(np.abs(mc.values - exact)[mc.stderr == 0] < 1e-12, 0.0, np.inf)
    dev_exact = np.max(np.abs(exact - first_order))
    dev_mc = np.max(np.abs(mc.values - first_order))
    ok = np.all(z <= 3.0) and dev_exact < 0.01 and dev_mc < 0.01
    verdict(4, ok, f"max |MC-exact|/stderr = {z.max():.2f} (<= 3); first-order deviation exact "
                   f"{dev_exact:.4f}, MC {dev_mc:.4f} (< 0.01)", elapsed, 120.0)


def test_c05_ensemble_oracle(verdict):
    cos_theta = 0.18
    spec = PowerLawSpectrum(0.77, 0.0, 0.048, 480.0, 9.6, math.acos(cos_theta))
    sources = discretize(spec)
    t = np.linspace(0, 4, 81)
    t0 = time.perf_counter()
    plan = SimPlan(sources, QubitConfig(cos_theta, math.sqrt(1 - cos_theta**2)), t, Protocol.PHI_SE,
                   trajectories=100_000, master_seed=0)
    mc = phi_se_mc(plan, workers=4)
    elapsed = time.perf_counter() - t0
    gc = 9.6 * cos_theta
    model = analytic.phi_se(analytic.gamma3_continuum(spec, gc), gc, t)
    dev = np.abs(mc.values - model)
    tol = np.maximum(0.03, 3 * mc.stderr)
    verdict(5, np.all(dev <= tol), f"K = {len(sources)}, max |MC - model| = {dev.max():.4f}, "
                                   f"worst margin {np.max(dev - tol):+.4f} (<= 0)", elapsed, 120.0)


def test_c06_redfield_rate(verdict):
    t = np.linspace(0, 15, 31)
    t0 = time.perf_counter()
    plan = SimPlan((RtnSource(2.0, 5.0, math.pi / 2),), QubitConfig(0.0, 20.0), t, Protocol.ER,
                   Fidelity.LAB_FRAME, trajectories=100_000, master_seed=0)
    curve = evolve_lab_frame(plan, workers=4)
    rate = inference.fit_er(curve)
    elapsed = time.perf_counter() - t0
    verdict(6, abs(rate / 0.08 - 1) <= 0.1, f"fitted Gamma_1 = {rate:.4f} (0.08 +-10%)", elapsed, 300.0)


def test_c07_round_trip(verdict, tmp_path, capsys):
    cfg = tmp_path / "synth.json"
    cfg.write_text(json.dumps({
        **A, "epsilon": 0.0, "delta": 1.0, "cos_thetas": [0.1, 0.2, 0.3, 0.4, 0.5],
        "t_max": 4.0, "n_points": 36, "noise_level": 0.01,
    }))
    t0 = time.perf_counter()
    counts = {"g": 0, "alpha": 0, "gamma_min": 0, "s": 0, "all": 0}
    for seed in range(100):
        out = tmp_path / f"r{seed}"
        assert main(["synth", "--config", str(cfg), "--seed", str(seed), "--out", str(out)]) == 0
        assert main(["fit", str(out / "dataset.csv"), "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        hits = {
            "g": abs(rep["g_hat"] / 9.6 - 1) <= 0.05,
            "alpha": abs(rep["alpha_hat"] / 0.77 - 1) <= 0.05,
            "gamma_min": abs(rep["gamma_min_hat"] / 0.048 - 1) <= 0.2,
            "s": rep["s_hat"] == 0.0,
        }
        hits["all"] = all(hits.values())
        for k, hit in hits.items():
            counts[k] += hit
    capsys.readouterr()
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"{k} {v}/100" for k, v in counts.items())
    verdict(7, counts["all"] >= 95, f"repetitions within tolerance: {detail} (all >= 95)", elapsed, 120.0)


def test_c08_one_over_f_slope(verdict):
    t0 = time.perf_counter()
    spec = PowerLawSpectrum(0.77 * 100, 0.0, 0.048, 480.0, 9.6)
    sources = discretize(spec)
    mid = math.sqrt(0.048 * 480.0)
    omega = np.logspace(math.log10(mid) - 1, math.log10(mid) + 1, 41)
    slope = np.polyfit(np.log(omega), np.log(psd(sources, omega)), 1)[0]
    elapsed = time.perf_counter() - t0
    verdict(8, abs(slope + 1) <= 0.05, f"K = {len(sources)}, mid-band slope = {slope:.4f} (-1 +-0.05)", elapsed, 1.0)


def _gaussian_checks(g3, gc):
    t = np.linspace(0, 4, 400)
    phi = analytic.phi_se(g3, gc, t)
    gg = inference.fit_gaussian(DecoherenceCurve(Protocol.PHI_SE, t, phi))
    tau = analytic.plateau_time(gc)
    half = t[np.argmax(phi < 0.5)] if np.any(phi < 0.5) else t[-1]
    tt = np.linspace(0, half, 200)
    sup = np.max(np.abs(analytic.phi_se(g3, gc, tt) - analytic.gaussian_model(gg, tt)))
    resid = lambda x: abs(float(analytic.phi_se(g3, gc, x)) - float(analytic.gaussian_model(gg, x)))
    return sup, resid(tau) / resid(tau / 4)


def test_c09_gaussian_comparison(verdict):
    t0 = time.perf_counter()
    # (a) Gaussian fit vs the phase-memory model on the single-working-point fit
    # (Gamma_3 = 0.99, gamma_c = 2.1). Over the alpha families the property is not
    # universal (no plateau for large alpha, plateau above 0.5 for small alpha), so
    # those are printed as diagnostics only.
    sup, ratio = _gaussian_checks(0.99, 2.1)
    ok_a = sup <= 0.02 and ratio >= 5.0
    scan = []
    for alpha in (0.1, 0.3, 0.77, 1.5):
        for c in (0.2, 0.5):
            fs, fr = _gaussian_checks(alpha * (9.6 * c - 0.048), 9.6 * c)
            scan.append(f"a={alpha:g},c={c:g}: {fs:.3f}/{fr:.2g}")

    # (b) cumulant comparator: variance additivity and phase linear in cos(theta)
    cos_theta = 0.18
    spec = PowerLawSpectrum(0.77, 0.0, 0.048, 480.0, 9.6, math.acos(cos_theta))
    sources = discretize(spec)
    t = np.linspace(0, 4, 41)
    q = QubitConfig(cos_theta, math.sqrt(1 - cos_theta**2))
    one = gaussian_from_cumulant(SimPlan(sources, q, t, Protocol.PHI_SE, trajectories=100_000, master_seed=1),
                                 workers=4)
    two = gaussian_from_cumulant(SimPlan(sources + sources, q, t, Protocol.PHI_SE, trajectories=100_000,
                                         master_seed=1), workers=4)
    l1, l2 = -np.log(one.values), -np.log(two.values)
    s1, s2 = one.stderr / one.values, two.stderr / two.values
    z = np.abs(l2 - 2 * l1)[1:] / np.hypot(2 * s1, s2)[1:]
    other = spec.with_theta(math.acos(0.5))
    half = gaussian_from_cumulant(SimPlan(discretize(other), q, t, Protocol.PHI_SE, trajectories=100_000,
                                          master_seed=1), workers=4)
    v18 = np.array(one.meta["phase_variance"])[1:]
    v50 = np.array(half.meta["phase_variance"])[1:]
    lin = np.max(np.abs(v50 / v18 / (0.5 / 0.18) ** 2 - 1))
    ok_b = np.all(z <= 3.0) and lin < 1e-9
    elapsed = time.perf_counter() - t0
    verdict(9, ok_a and ok_b,
            f"(a) sup-norm to Phi=0.5 {sup:.4f} (<= 0.02), residual ratio {ratio:.1f} (>= 5); "
            f"(b) additivity max z {z.max():.2f} (<= 3), cos(theta) scaling error {lin:.1e}; "
            f"alpha scan sup/ratio [{'; '.join(scan)}]", elapsed, 180.0)


def test_c10_determinism(verdict, tmp_path, capsys):
    runs = [
        ("simulate", "phase", {**A, "gamma_max": 480.0, "epsilon": 0.18, "delta": math.sqrt(1 - 0.18**2),
                               "protocol": "PhiSE", "n_points": 41, "trajectories": 20000}),
        ("simulate", "lab", {"sources": [{"g": 2.0, "gamma": 5.0}], "theta_mode": "locked", "epsilon": 0.0,
                             "delta": 20.0, "protocol": "ER", "t_max": 10.0, "n_points": 21,
                             "trajectories": 20000}),
        ("compare", "analytic,phase", {**A, "gamma_max": 480.0, "alphas": [0.77], "cos_thetas": [0.2, 0.4],
                                       "n_points": 41, "trajectories": 10000}),
    ]
    t0 = time.perf_counter()
    identical = True
    for i, (cmd, method, conf) in enumerate(runs):
        cfg = tmp_path / f"c{i}.json"
        cfg.write_text(json.dumps(conf))
        blobs = []
        for workers in (1, 4, 8, 8):
            out = tmp_path / f"c{i}_w{workers}_{len(blobs)}"
            assert main([cmd, "--config", str(cfg), "--method", method, "--seed", "77",
                         "--workers", str(workers), "--out", str(out)]) == 0
            blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        identical &= all(b == blobs[0] for b in blobs[1:])
    capsys.readouterr()
    elapsed = time.perf_counter() - t0
    verdict(10, identical, "phase, lab and compare outputs byte-identical for workers 1, 4, 8 and reruns",
            elapsed, 120.0)
