"""Time the compiled and pure-Python trajectory kernels on the same inputs.

    python benchmarks/bench_kernels.py [--trajectories N] [--repeat R]
"""
import argparse
import time

import numpy as np

from rtnloop import kernels
from rtnloop.montecarlo import sample_chunk
from rtnloop.noise_model import PowerLawSpectrum, RtnSource, discretize


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trajectories", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    times = np.linspace(0.0, 4.0, 200)
    spec = PowerLawSpectrum(alpha=0.77, s=0.0, gamma_min=0.048, gamma_max=48.0, g=9.6, theta=np.arccos(0.18))
    phase_sources = discretize(spec)
    lab_sources = [RtnSource(2.0, 5.0, np.pi / 2)]
    n = args.trajectories

    cases = []
    sign0, ptr, flips = sample_chunk(phase_sources, times[-1], n, 0, 0)
    vz = np.array([s.coupling_z for s in phase_sources])
    cases.append(("echo_phases", lambda k: k.echo_phases(sign0, ptr, flips, vz, times, np.empty((n, times.size)))))

    lab_times = np.linspace(0.0, 10.0, 50)
    m = max(n // 20, 1)
    ls0, lptr, lflips = sample_chunk(lab_sources, lab_times[-1], m, 0, 0)
    vx = np.array([s.coupling_x for s in lab_sources])
    lvz = np.array([s.coupling_z for s in lab_sources])
    for code, label in ((0, "lab_frame ER"), (1, "lab_frame SE")):
        cases.append((label, lambda k, c=code: k.lab_frame(ls0, lptr, lflips, vx, lvz, 20.0, lab_times, c,
                                                              np.empty((m, lab_times.size)))))

    backends = kernels.available()
    print(f"{'kernel':<14}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, fn in cases:
        row = {b: _best(lambda: fn(kernels.load(b)), args.repeat) for b in backends}
        line = f"{label:<14}" + "".join(f"{row[b]:>11.4f}s" for b in backends)
        if "cython" in row and "python" in row:
            line += f"{row['python'] / row['cython']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
