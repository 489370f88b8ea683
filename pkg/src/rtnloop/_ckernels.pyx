# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same layout and results as ``_pykernels``."""
from libc.math cimport cos, sin, sqrt, fabs
from libc.stdlib cimport malloc, free


cdef inline void _walk(const double[::1] flips, Py_ssize_t lo, Py_ssize_t hi, double s0,
                       const double[::1] pts, double scale, double coef, double[::1] row) noexcept nogil:
    cdef Py_ssize_t p = lo, g
    cdef double acc = 0.0, last = 0.0, s = s0, a
    for g in range(pts.shape[0]):
        a = pts[g] * scale
        while p < hi and flips[p] <= a:
            acc += s * (flips[p] - last)
            last = flips[p]
            s = -s
            p += 1
        row[g] += coef * (acc + s * (a - last))


def echo_phases(const double[:, ::1] sign0, const long long[::1] ptr, const double[::1] flips,
                const double[::1] vz, const double[::1] times, double[:, ::1] out):
    cdef Py_ssize_t n = sign0.shape[0], nsrc = sign0.shape[1], i, k, j
    with nogil:
        for i in range(n):
            out[i, :] = 0.0
            for k in range(nsrc):
                if vz[k] == 0.0:
                    continue
                j = i * nsrc + k
                _walk(flips, ptr[j], ptr[j + 1], sign0[i, k], times, 0.5, 2.0 * vz[k], out[i])
                _walk(flips, ptr[j], ptr[j + 1], sign0[i, k], times, 1.0, -vz[k], out[i])


cdef inline void _rotate(double* r, double hx, double hz, double b0, double dt) noexcept nogil:
    cdef double oz = b0 + hz
    cdef double w = sqrt(hx * hx + oz * oz)
    cdef double nx, nz, beta, c, sn, x, y, z, dot
    if w == 0.0 or dt == 0.0:
        return
    nx = hx / w
    nz = oz / w
    beta = -w * dt
    c = cos(beta)
    sn = sin(beta)
    x = r[0]; y = r[1]; z = r[2]
    dot = nx * x + nz * z
    r[0] = x * c + (-nz * y) * sn + nx * dot * (1.0 - c)
    r[1] = y * c + (nz * x - nx * z) * sn
    r[2] = z * c + (nx * y) * sn + nz * dot * (1.0 - c)


cdef struct Walker:
    Py_ssize_t* pos
    Py_ssize_t* end
    double* sign
    double hx
    double hz
    double t


cdef void _reset(Walker* w, Py_ssize_t i, Py_ssize_t nsrc, const double[:, ::1] sign0,
                 const long long[::1] ptr, const double[::1] vx, const double[::1] vz) noexcept nogil:
    cdef Py_ssize_t k
    w.hx = 0.0
    w.hz = 0.0
    w.t = 0.0
    for k in range(nsrc):
        w.pos[k] = ptr[i * nsrc + k]
        w.end[k] = ptr[i * nsrc + k + 1]
        w.sign[k] = sign0[i, k]
        w.hx += w.sign[k] * vx[k]
        w.hz += w.sign[k] * vz[k]


cdef void _advance(Walker* w, Py_ssize_t nsrc, double* r, double target, const double[::1] flips,
                   const double[::1] vx, const double[::1] vz, double b0) noexcept nogil:
    cdef Py_ssize_t k, kmin
    cdef double tmin
    while True:
        kmin = -1
        tmin = target
        for k in range(nsrc):
            if w.pos[k] < w.end[k] and flips[w.pos[k]] < tmin:
                kmin = k
                tmin = flips[w.pos[k]]
        _rotate(r, w.hx, w.hz, b0, tmin - w.t)
        w.t = tmin
        if kmin < 0:
            return
        w.sign[kmin] = -w.sign[kmin]
        w.hx += 2.0 * w.sign[kmin] * vx[kmin]
        w.hz += 2.0 * w.sign[kmin] * vz[kmin]
        w.pos[kmin] += 1


def lab_frame(const double[:, ::1] sign0, const long long[::1] ptr, const double[::1] flips,
              const double[::1] vx, const double[::1] vz, double b0, const double[::1] times,
              int protocol, double[:, ::1] out):
    cdef Py_ssize_t n = sign0.shape[0], nsrc = sign0.shape[1], ng = times.shape[0]
    cdef Py_ssize_t i, g
    cdef double drift = 0.0, half, cx, cy, dot, t
    cdef double r[3]
    cdef Walker w
    w.pos = <Py_ssize_t*> malloc((nsrc + 1) * sizeof(Py_ssize_t))
    w.end = <Py_ssize_t*> malloc((nsrc + 1) * sizeof(Py_ssize_t))
    w.sign = <double*> malloc((nsrc + 1) * sizeof(double))
    if w.pos == NULL or w.end == NULL or w.sign == NULL:
        free(w.pos); free(w.end); free(w.sign)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                if protocol == 0:
                    _reset(&w, i, nsrc, sign0, ptr, vx, vz)
                    r[0] = 0.0; r[1] = 0.0; r[2] = 1.0
                    for g in range(ng):
                        _advance(&w, nsrc, r, times[g], flips, vx, vz, b0)
                        out[i, g] = r[2]
                        drift = max(drift, fabs(sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) - 1.0))
                else:
                    for g in range(ng):
                        t = times[g]
                        _reset(&w, i, nsrc, sign0, ptr, vx, vz)
                        r[0] = 1.0; r[1] = 0.0; r[2] = 0.0
                        half = 0.5 * t
                        _advance(&w, nsrc, r, half, flips, vx, vz, b0)
                        cx = cos(b0 * half)
                        cy = -sin(b0 * half)
                        dot = cx * r[0] + cy * r[1]
                        r[0] = 2.0 * dot * cx - r[0]
                        r[1] = 2.0 * dot * cy - r[1]
                        r[2] = -r[2]
                        _advance(&w, nsrc, r, t, flips, vx, vz, b0)
                        out[i, g] = r[0] * cos(b0 * t) - r[1] * sin(b0 * t)
                        drift = max(drift, fabs(sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) - 1.0))
    finally:
        free(w.pos); free(w.end); free(w.sign)
    return drift
