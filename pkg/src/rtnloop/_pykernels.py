"""Reference kernels in plain Python.

Both kernels read trajectories in a CSR layout: trajectory ``i``, source ``k``
owns ``flips[ptr[i*K + k]:ptr[i*K + k + 1]]`` (sorted) and starts in state
``sign0[i, k]``.
"""
import math

import numpy as np


def _walk(flips, lo, hi, s0, points, scale, coef, row):
    """Add ``coef`` times the running integral of the sign at ``scale * points``."""
    p, acc, last, s = lo, 0.0, 0.0, s0
    for g, a in enumerate(points):
        a = a * scale
        while p < hi and flips[p] <= a:
            acc += s * (flips[p] - last)
            last = flips[p]
            s = -s
            p += 1
        row[g] += coef * (acc + s * (a - last))


def echo_phases(sign0, ptr, flips, vz, times, out):
    n, nsrc = sign0.shape
    times = [float(t) for t in times]
    for i in range(n):
        row = [0.0] * len(times)
        for k in range(nsrc):
            if vz[k] == 0.0:
                continue
            j = i * nsrc + k
            s0 = float(sign0[i, k])
            _walk(flips, ptr[j], ptr[j + 1], s0, times, 0.5, 2.0 * vz[k], row)
            _walk(flips, ptr[j], ptr[j + 1], s0, times, 1.0, -vz[k], row)
        out[i, :] = row


def _rotate(r, hx, hz, b0, dt):
    ox, oz = hx, b0 + hz
    w = math.hypot(ox, oz)
    if w == 0.0 or dt == 0.0:
        return r
    nx, nz = ox / w, oz / w
    beta = -w * dt
    c, sn = math.cos(beta), math.sin(beta)
    x, y, z = r
    dot = nx * x + nz * z
    return (
        x * c + (-nz * y) * sn + nx * dot * (1.0 - c),
        y * c + (nz * x - nx * z) * sn,
        z * c + (nx * y) * sn + nz * dot * (1.0 - c),
    )


class _Walker:
    """Bloch vector driven by all sources of one trajectory."""

    def __init__(self, i, sign0, ptr, flips, vx, vz, b0, r):
        nsrc = sign0.shape[1]
        self.flips = flips
        self.pos = [ptr[i * nsrc + k] for k in range(nsrc)]
        self.end = [ptr[i * nsrc + k + 1] for k in range(nsrc)]
        self.sign = [float(sign0[i, k]) for k in range(nsrc)]
        self.vx, self.vz, self.b0 = vx, vz, b0
        self.hx = sum(s * v for s, v in zip(self.sign, vx))
        self.hz = sum(s * v for s, v in zip(self.sign, vz))
        self.t = 0.0
        self.r = r

    def advance(self, target):
        while True:
            kmin, tmin = -1, target
            for k in range(len(self.pos)):
                if self.pos[k] < self.end[k] and self.flips[self.pos[k]] < tmin:
                    kmin, tmin = k, self.flips[self.pos[k]]
            self.r = _rotate(self.r, self.hx, self.hz, self.b0, tmin - self.t)
            self.t = tmin
            if kmin < 0:
                return
            self.sign[kmin] = -self.sign[kmin]
            self.hx += 2.0 * self.sign[kmin] * self.vx[kmin]
            self.hz += 2.0 * self.sign[kmin] * self.vz[kmin]
            self.pos[kmin] += 1


def lab_frame(sign0, ptr, flips, vx, vz, b0, times, protocol, out):
    """Exact piecewise rotations; ``protocol`` 0 is ER (reports z), 1 is SE.

    Returns the largest deviation of the Bloch norm from one.
    """
    n = sign0.shape[0]
    drift = 0.0
    for i in range(n):
        if protocol == 0:
            w = _Walker(i, sign0, ptr, flips, vx, vz, b0, (0.0, 0.0, 1.0))
            for g, t in enumerate(times):
                w.advance(t)
                out[i, g] = w.r[2]
                drift = max(drift, abs(math.sqrt(sum(c * c for c in w.r)) - 1.0))
        else:
            for g, t in enumerate(times):
                w = _Walker(i, sign0, ptr, flips, vx, vz, b0, (1.0, 0.0, 0.0))
                half = 0.5 * t
                w.advance(half)
                # pi pulse about the rotating-frame x axis
                cx, cy = math.cos(b0 * half), -math.sin(b0 * half)
                x, y, z = w.r
                dot = cx * x + cy * y
                w.r = (2.0 * dot * cx - x, 2.0 * dot * cy - y, -z)
                w.advance(t)
                x, y, z = w.r
                out[i, g] = x * math.cos(b0 * t) - y * math.sin(b0 * t)
                drift = max(drift, abs(math.sqrt(x * x + y * y + z * z) - 1.0))
    return drift
