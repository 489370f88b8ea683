import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtnloop import analytic, kernels
from rtnloop.analytic import Protocol
from rtnloop.montecarlo import (
    CHUNK,
    Fidelity,
    SimPlan,
    TelegraphPath,
    WeakFieldWarning,
    echo_phase,
    evolve_lab_frame,
    exact_single_rtn_echo,
    gaussian_from_cumulant,
    phi_se_mc,
    sample_chunk,
    sample_telegraph,
    simulate,
)
from rtnloop.noise_model import QubitConfig, RtnSource

BACKENDS = kernels.available()
Q = QubitConfig(0.0, 20.0)


def paths_from_csr(sign0, ptr, flips, horizon):
    n, k = sign0.shape
    return [
        [TelegraphPath(int(sign0[i, j]), flips[ptr[i * k + j]:ptr[i * k + j + 1]], horizon) for j in range(k)]
        for i in range(n)
    ]


def test_telegraph_integral_by_hand():
    p = TelegraphPath(1, np.array([1.0, 3.0]), 5.0)
    assert p.integral(0.5) == 0.5
    assert p.integral(2.0) == pytest.approx(1.0 - 1.0)
    assert p.integral(5.0) == pytest.approx(1.0 - 2.0 + 2.0)
    np.testing.assert_array_equal(p.sign([0.0, 1.5, 4.0]), [1, -1, 1])


def test_telegraph_flip_statistics():
    rng = np.random.default_rng(1)
    counts = [sample_telegraph(2.0, 5.0, rng).flip_times.size for _ in range(4000)]
    assert np.mean(counts) == pytest.approx(10.0, rel=0.03)
    signs = [sample_telegraph(2.0, 5.0, rng).initial_sign for _ in range(4000)]
    assert abs(np.mean(signs)) < 0.05


def test_sample_chunk_layout():
    sources = [RtnSource(1.0, 3.0), RtnSource(1.0, 0.2)]
    sign0, ptr, flips = sample_chunk(sources, 4.0, 50, 7, 0)
    assert sign0.shape == (50, 2) and ptr.size == 101 and ptr[-1] == flips.size
    for i in range(100):
        seg = flips[ptr[i]:ptr[i + 1]]
        assert np.all(np.diff(seg) >= 0) and np.all((seg >= 0) & (seg <= 4.0))
    again = sample_chunk(sources, 4.0, 50, 7, 0)
    for a, b in zip((sign0, ptr, flips), again):
        np.testing.assert_array_equal(a, b)
    other = sample_chunk(sources, 4.0, 50, 7, 1)
    assert not np.array_equal(other[2][:10], flips[:10])


@pytest.mark.parametrize("backend", BACKENDS)
def test_echo_kernel_matches_path_oracle(backend):
    sources = [RtnSource(2.0, 1.5, 0.3), RtnSource(1.0, 0.2, 0.0)]
    vz = np.array([s.coupling_z for s in sources])
    times = np.linspace(0, 3, 7)
    sign0, ptr, flips = sample_chunk(sources, 3.0, 40, 11, 0)
    out = np.empty((40, times.size))
    kernels.load(backend).echo_phases(sign0, ptr, flips, vz, times, out)
    paths = paths_from_csr(sign0, ptr, flips, 3.0)
    ref = np.array([[echo_phase(p, vz, t) for t in times] for p in paths])
    np.testing.assert_allclose(out, ref, atol=1e-12)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
@pytest.mark.parametrize("protocol", [0, 1])
def test_lab_kernels_agree_across_backends(protocol):
    sources = [RtnSource(2.0, 5.0, 1.0), RtnSource(0.5, 0.3, 0.2)]
    vx = np.array([s.coupling_x for s in sources])
    vz = np.array([s.coupling_z for s in sources])
    times = np.linspace(0, 2, 9)
    sign0, ptr, flips = sample_chunk(sources, 2.0, 30, 3, 0)
    outs = []
    for b in ("cython", "python"):
        out = np.empty((30, times.size))
        drift = kernels.load(b).lab_frame(sign0, ptr, flips, vx, vz, 20.0, times, protocol, out)
        assert drift < 1e-10
        outs.append(out)
    np.testing.assert_allclose(outs[0], outs[1], atol=1e-12)


def test_plan_validation():
    with pytest.raises(ValueError):
        SimPlan((), Q, [0.5, 1.0])
    with pytest.raises(ValueError):
        SimPlan((), Q, [0.0, 1.0], trajectories=0)
    with pytest.raises(ValueError):
        SimPlan((), Q, [0.0, 1.0], initial_sign=2)


def test_empty_ensemble_gives_ones():
    plan = SimPlan((), Q, np.linspace(0, 1, 5), Protocol.PHI_SE, trajectories=10)
    np.testing.assert_array_equal(phi_se_mc(plan).values, 1.0)
    np.testing.assert_array_equal(gaussian_from_cumulant(plan).values, 1.0)


@pytest.mark.parametrize("protocol", [Protocol.ER, Protocol.SE])
def test_lab_frame_without_noise_is_static(protocol):
    plan = SimPlan((RtnSource(0.0, 1.0, 1.0),), Q, np.linspace(0, 2, 11), protocol, Fidelity.LAB_FRAME, 20)
    curve = evolve_lab_frame(plan)
    np.testing.assert_allclose(curve.values, 1.0, atol=1e-12)


def test_lab_echo_with_longitudinal_noise_equals_phase_channel():
    sources = (RtnSource(1.0, 0.3, 0.0), RtnSource(0.7, 2.0, 0.0))
    times = np.linspace(0, 3, 13)
    lab = evolve_lab_frame(SimPlan(sources, QubitConfig(0.0, 200.0), times, Protocol.SE, Fidelity.LAB_FRAME, 500, 5))
    phase = phi_se_mc(SimPlan(sources, QubitConfig(0.0, 200.0), times, Protocol.PHI_SE, Fidelity.PHASE_ONLY, 500, 5))
    np.testing.assert_allclose(lab.values, phase.values, atol=1e-9)
    assert lab.meta["norm_drift"] < 1e-10


def test_weak_field_warns():
    plan = SimPlan((RtnSource(2.0, 5.0, 1.0),), QubitConfig(0.0, 5.0), np.linspace(0, 1, 3),
                   Protocol.ER, Fidelity.LAB_FRAME, 5)
    with pytest.warns(WeakFieldWarning):
        evolve_lab_frame(plan)


def test_fidelity_mismatch_rejected():
    plan = SimPlan((), Q, [0.0, 1.0], Protocol.PHI_SE, Fidelity.LAB_FRAME, 5)
    with pytest.raises(ValueError):
        phi_se_mc(plan)
    with pytest.raises(ValueError):
        evolve_lab_frame(plan)


@settings(max_examples=10, deadline=None)
@given(workers=st.integers(2, 6), seed=st.integers(0, 2**32))
def test_results_independent_of_worker_count(workers, seed):
    plan = SimPlan((RtnSource(1.0, 0.5, 0.2),), Q, np.linspace(0, 2, 5), Protocol.PHI_SE,
                   trajectories=2 * CHUNK + 17, master_seed=seed)
    a = phi_se_mc(plan, workers=1)
    b = phi_se_mc(plan, workers=workers)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.stderr.tobytes() == b.stderr.tobytes()


def test_exact_single_rtn_limits():
    t = np.linspace(0, 20, 81)
    assert exact_single_rtn_echo(2.0, 0.1, 0.0, 0.0) == pytest.approx(1.0)
    # slow source: the first-order form holds up to O(eps1**2)
    slow = exact_single_rtn_echo(2.0, 0.01, 0.0, t)
    np.testing.assert_allclose(slow, analytic.phi_se_discrete([RtnSource(2.0, 0.01)], t), atol=2e-3)
    # fast source: long-time decay at the slow eigenvalue gamma - sqrt(gamma^2 - v^2),
    # which is v^2 / (2 gamma) to leading order
    fast = exact_single_rtn_echo(0.2, 10.0, 0.0, t)
    rate = 10.0 - math.sqrt(100.0 - 0.04)
    assert rate == pytest.approx(0.04 / 20.0, rel=1e-3)
    assert fast[-1] / fast[-21] == pytest.approx(math.exp(-rate * 5.0), rel=1e-9)


def test_exact_single_rtn_matches_monte_carlo():
    t = np.linspace(0, 6, 13)
    plan = SimPlan((RtnSource(2.0, 0.5),), Q, t, Protocol.PHI_SE, trajectories=20000, master_seed=2)
    mc = phi_se_mc(plan)
    exact = exact_single_rtn_echo(2.0, 0.5, 0.0, t)
    assert np.all(np.abs(mc.values - exact) <= 4 * mc.stderr + 1e-12)


def test_cumulant_variance_doubles_with_duplicated_sources():
    t = np.linspace(0, 3, 7)
    src = RtnSource(1.0, 0.4)
    one = gaussian_from_cumulant(SimPlan((src,), Q, t, Protocol.PHI_SE, trajectories=20000, master_seed=1))
    two = gaussian_from_cumulant(SimPlan((src, src), Q, t, Protocol.PHI_SE, trajectories=20000, master_seed=1))
    v1 = np.array(one.meta["phase_variance"])
    v2 = np.array(two.meta["phase_variance"])
    np.testing.assert_allclose(v2[1:] / v1[1:], 2.0, rtol=0.08)


def test_simulate_dispatches_by_fidelity():
    plan = SimPlan((RtnSource(1.0, 0.5),), Q, np.linspace(0, 1, 3), Protocol.PHI_SE, trajectories=10)
    assert simulate(plan).meta["method"] == "phase"
