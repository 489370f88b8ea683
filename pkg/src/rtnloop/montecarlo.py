"""Brute-force trajectory simulation of a qubit driven by telegraph noise.

Trajectories are grouped in fixed chunks of ``CHUNK`` consecutive indices.
Chunk ``c``, source ``k`` draws from a Philox stream keyed by
``(master_seed, c, k)``, so results do not depend on the worker count and
adding a source leaves the other sources' paths untouched. Chunk statistics
are summed in chunk order.
"""
from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from . import kernels
from .analytic import DecoherenceCurve, Protocol
from .noise_model import QubitConfig, RtnSource

CHUNK = 4096
DEFAULT_TRAJECTORIES = 100_000
DEFAULT_GRID = 200


class Fidelity(str, enum.Enum):
    PHASE_ONLY = "phase"
    LAB_FRAME = "lab"


class WeakFieldWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TelegraphPath:
    initial_sign: int
    flip_times: np.ndarray
    horizon: float

    def sign(self, t):
        """Value of the process at time(s) ``t``."""
        n_flips = np.searchsorted(self.flip_times, np.asarray(t, dtype=float), side="right")
        return self.initial_sign * np.where(n_flips % 2 == 0, 1, -1)

    def integral(self, a: float) -> float:
        """``int_0^a s(t) dt`` evaluated segment by segment."""
        edges = np.concatenate(([0.0], self.flip_times[self.flip_times < a], [a]))
        signs = self.initial_sign * (-1.0) ** np.arange(edges.size - 1)
        return float(np.sum(signs * np.diff(edges)))


@dataclass(frozen=True)
class SimPlan:
    sources: tuple[RtnSource, ...]
    qubit: QubitConfig
    times: np.ndarray
    protocol: Protocol = Protocol.SE
    fidelity: Fidelity = Fidelity.PHASE_ONLY
    trajectories: int = DEFAULT_TRAJECTORIES
    master_seed: int = 0
    initial_sign: Optional[int] = None  # None: stationary +-1 start
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        object.__setattr__(self, "fidelity", Fidelity(self.fidelity))
        t = self.times
        if t.ndim != 1 or t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing and start at 0")
        if self.trajectories < 1:
            raise ValueError("trajectories must be >= 1")
        if self.initial_sign not in (None, 1, -1):
            raise ValueError("initial_sign must be None, +1 or -1")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def sample_telegraph(gamma: float, horizon: float, rng: np.random.Generator, initial_sign=None) -> TelegraphPath:
    """One symmetric telegraph path: Poisson flips of rate ``gamma`` on ``[0, horizon]``."""
    if not gamma > 0 or not horizon > 0:
        raise ValueError("gamma and horizon must be positive")
    sign = int(initial_sign) if initial_sign is not None else int(rng.integers(0, 2)) * 2 - 1
    n = rng.poisson(gamma * horizon)
    return TelegraphPath(sign, np.sort(rng.uniform(0.0, horizon, size=n)), horizon)


def echo_phase(paths: Sequence[TelegraphPath], couplings_z: Sequence[float], t: float) -> float:
    """Accumulated phase with the field sign reversed after the pi pulse at ``t/2``."""
    return float(sum(
        v * (2.0 * p.integral(0.5 * t) - p.integral(t)) for p, v in zip(paths, couplings_z)
    ))


def _stream(master_seed: int, chunk: int, source: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(chunk, source))
    return np.random.Generator(np.random.Philox(seq))


def sample_chunk(sources, horizon, n, master_seed, chunk, initial_sign=None):
    """Sample ``n`` trajectories of every source in the CSR layout the kernels read."""
    nsrc = len(sources)
    sign0 = np.empty((n, nsrc))
    counts = np.empty((n, nsrc), dtype=np.int64)
    per_source = []
    for k, src in enumerate(sources):
        rng = _stream(master_seed, chunk, k)
        signs = rng.integers(0, 2, size=n) * 2 - 1
        sign0[:, k] = signs if initial_sign is None else initial_sign
        c = rng.poisson(src.gamma * horizon, size=n)
        times = rng.uniform(0.0, horizon, size=int(c.sum()))
        # one float key orders by trajectory, then by time
        key = np.repeat(np.arange(n, dtype=float), c) * (2.0 * horizon) + times
        per_source.append(times[np.argsort(key, kind="stable")])
        counts[:, k] = c
    ptr = np.zeros(n * nsrc + 1, dtype=np.int64)
    np.cumsum(counts.ravel(), out=ptr[1:])
    flips = np.empty(int(ptr[-1]))
    starts = ptr[:-1].reshape(n, nsrc)
    for k, times in enumerate(per_source):
        c = counts[:, k]
        src_start = np.repeat(np.cumsum(c) - c, c)
        flips[np.repeat(starts[:, k], c) + np.arange(times.size) - src_start] = times
    return sign0, ptr, flips


def _chunks(total):
    return [(c, min(CHUNK, total - c * CHUNK)) for c in range(-(-total // CHUNK))]


def _run_chunks(plan: SimPlan, work, workers):
    jobs = _chunks(plan.trajectories)
    if workers is None or workers <= 1:
        return [work(c, n) for c, n in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: work(*job), jobs))


def _phase_power_sums(plan: SimPlan, workers, backend, moments=False):
    """Per-time sums of cos(phi), cos(phi)**2 and, with ``moments``, phi**1..4."""
    kern = kernels.load(backend) if backend else kernels
    vz = np.array([s.coupling_z for s in plan.sources], dtype=float)
    times = np.ascontiguousarray(plan.times)

    def work(chunk, n):
        sign0, ptr, flips = sample_chunk(plan.sources, plan.horizon, n, plan.master_seed, chunk, plan.initial_sign)
        phi = np.empty((n, times.size))
        kern.echo_phases(sign0, ptr, flips, vz, times, phi)
        if moments:
            p2 = phi * phi
            return np.stack([phi.sum(0), p2.sum(0), (p2 * phi).sum(0), (p2 * p2).sum(0)])
        c = np.cos(phi)
        return np.stack([c.sum(0), (c * c).sum(0)])

    total = np.zeros((4 if moments else 2, times.size))
    for part in _run_chunks(plan, work, workers):
        total += part
    return total


def _require(plan: SimPlan, fidelity: Fidelity):
    if plan.fidelity is not fidelity:
        raise ValueError(f"plan fidelity is {plan.fidelity.value}, expected {fidelity.value}")


def _mean_and_stderr(s1, s2, n):
    mean = s1 / n
    if n < 2:
        return mean, np.zeros_like(mean)
    var = np.maximum(s2 - n * mean * mean, 0.0) / (n - 1)
    return mean, np.sqrt(var / n)


def _meta(plan: SimPlan, method: str) -> dict:
    return {
        "method": method,
        "seed": plan.master_seed,
        "trajectories": plan.trajectories,
        "b0": plan.qubit.b0,
        "cos_theta": plan.qubit.cos_theta,
        "n_sources": len(plan.sources),
        **plan.meta,
    }


def phi_se_mc(plan: SimPlan, workers: Optional[int] = None, backend: Optional[str] = None) -> DecoherenceCurve:
    """Echo signal ``<cos phi>`` in the pure-dephasing channel."""
    _require(plan, Fidelity.PHASE_ONLY)
    n = plan.trajectories
    if not plan.sources:
        ones = np.ones_like(plan.times)
        return DecoherenceCurve(Protocol.PHI_SE, plan.times, ones, np.zeros_like(ones), _meta(plan, "phase"))
    sums = _phase_power_sums(plan, workers, backend)
    mean, err = _mean_and_stderr(sums[0], sums[1], n)
    return DecoherenceCurve(Protocol.PHI_SE, plan.times, mean, err, _meta(plan, "phase"))


def gaussian_from_cumulant(plan: SimPlan, workers: Optional[int] = None, backend: Optional[str] = None) -> DecoherenceCurve:
    """Second-cumulant echo ``exp(-Var[phi]/2)`` from the sampled phases."""
    _require(plan, Fidelity.PHASE_ONLY)
    n = plan.trajectories
    if not plan.sources:
        ones = np.ones_like(plan.times)
        return DecoherenceCurve(Protocol.PHI_SE, plan.times, ones, np.zeros_like(ones), _meta(plan, "cumulant"))
    if n < 2:
        raise ValueError("variance needs at least two trajectories")
    sums = _phase_power_sums(plan, workers, backend, moments=True)
    m1, m2, m3, m4 = sums / n
    var = np.maximum(m2 - m1 * m1, 0.0) * n / (n - 1)
    mu2 = m2 - m1 * m1
    mu4 = m4 - 4 * m1 * m3 + 6 * m1 * m1 * m2 - 3 * m1**4
    var_err = np.sqrt(np.maximum(mu4 - mu2 * mu2, 0.0) / n)
    values = np.exp(-0.5 * var)
    meta = _meta(plan, "cumulant")
    meta["phase_variance"] = var.tolist()
    return DecoherenceCurve(Protocol.PHI_SE, plan.times, values, 0.5 * values * var_err, meta)


def evolve_lab_frame(plan: SimPlan, workers: Optional[int] = None, backend: Optional[str] = None) -> DecoherenceCurve:
    """Full Bloch-vector evolution under the piecewise-constant Hamiltonian.

    ER starts along +z and reports ``<sigma_z>``. SE starts along +x, applies
    an ideal pi pulse about the rotating-frame x axis at ``t/2`` and reports
    the rotating-frame x component.
    """
    _require(plan, Fidelity.LAB_FRAME)
    if plan.protocol is Protocol.PHI_SE:
        raise ValueError("lab-frame simulation supports the ER and SE protocols")
    kern = kernels.load(backend) if backend else kernels
    b0 = plan.qubit.b0
    gmax = max((s.g for s in plan.sources), default=0.0)
    if b0 < 10.0 * gmax:
        warnings.warn("B0 < 10 max(g): perturbative comparison is not valid", WeakFieldWarning)
    vx = np.array([s.coupling_x for s in plan.sources], dtype=float)
    vz = np.array([s.coupling_z for s in plan.sources], dtype=float)
    times = np.ascontiguousarray(plan.times)
    code = 0 if plan.protocol is Protocol.ER else 1

    def work(chunk, n):
        sign0, ptr, flips = sample_chunk(plan.sources, plan.horizon, n, plan.master_seed, chunk, plan.initial_sign)
        vals = np.empty((n, times.size))
        drift = kern.lab_frame(sign0, ptr, flips, vx, vz, b0, times, code, vals)
        return vals.sum(0), (vals * vals).sum(0), drift

    s1 = np.zeros(times.size)
    s2 = np.zeros(times.size)
    drift = 0.0
    for a, b, d in _run_chunks(plan, work, workers):
        s1 += a
        s2 += b
        drift = max(drift, d)
    mean, err = _mean_and_stderr(s1, s2, plan.trajectories)
    meta = _meta(plan, "lab")
    meta["norm_drift"] = drift
    return DecoherenceCurve(plan.protocol, times, mean, err, meta)


def simulate(plan: SimPlan, workers: Optional[int] = None, backend: Optional[str] = None) -> DecoherenceCurve:
    if plan.fidelity is Fidelity.LAB_FRAME:
        return evolve_lab_frame(plan, workers, backend)
    return phi_se_mc(plan, workers, backend)


def exact_single_rtn_echo(g: float, gamma: float, theta: float, t):
    """Exact echo ``Re E[exp(i phi)]`` for one telegraph source.

    Propagates the state-resolved characteristic function through the two
    halves of the echo, starting from the stationary mixture.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    v = g * math.cos(theta)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    first = np.array([[1j * v - gamma, gamma], [gamma, -1j * v - gamma]])
    second = np.array([[-1j * v - gamma, gamma], [gamma, 1j * v - gamma]])
    start = np.array([0.5, 0.5], dtype=complex)
    out = np.array([
        (expm(0.5 * ti * second) @ (expm(0.5 * ti * first) @ start)).sum().real for ti in t_arr
    ])
    return out if np.ndim(t) else float(out[0])
