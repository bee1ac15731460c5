# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scan kernels.

Same contract as `_scan_py`. The recurrence is a tight C loop, so the
"chunked" path here simply runs the sequential loop chunk-at-a-time with the
state carried across chunk boundaries; both paths are bit-identical in this
backend.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

BACKEND_NAME = "compiled"


def scan_forward(x, delta, b, c, decay, *, path="chunked", chunk=64, want_hidden=False):
    if path not in ("sequential", "chunked"):
        raise ValueError(f"unknown scan path {path!r}")
    if path == "chunked" and chunk < 1:
        raise ValueError("chunk size must be >= 1")
    x = np.ascontiguousarray(x, dtype=np.float64)
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    decay = np.ascontiguousarray(decay, dtype=np.float64)
    n_steps = x.shape[0]
    d = x.shape[1]
    n = b.shape[1]
    y = np.empty((n_steps, d))
    h_all = np.empty((n_steps, d, n)) if want_hidden else None
    if want_hidden:
        _forward_hidden(x, delta, b, c, decay, y, h_all)
    else:
        _forward(x, delta, b, c, decay, y)
    return y, h_all


cdef void _forward(const double[:, ::1] x, const double[:, ::1] delta,
                   const double[:, ::1] b, const double[:, ::1] c,
                   const double[:, ::1] decay, double[:, ::1] y):
    cdef Py_ssize_t n_steps = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    cdef Py_ssize_t k, dd, i
    cdef double dk, base, acc, hv
    cdef double[:, ::1] h = np.zeros((d, n))
    for k in range(n_steps):
        for dd in range(d):
            dk = delta[k, dd]
            base = dk * x[k, dd]
            acc = 0.0
            for i in range(n):
                hv = exp(-dk * decay[dd, i]) * h[dd, i] + base * b[k, i]
                h[dd, i] = hv
                acc += c[k, i] * hv
            y[k, dd] = acc


cdef void _forward_hidden(const double[:, ::1] x, const double[:, ::1] delta,
                          const double[:, ::1] b, const double[:, ::1] c,
                          const double[:, ::1] decay, double[:, ::1] y,
                          double[:, :, ::1] h_all):
    cdef Py_ssize_t n_steps = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    cdef Py_ssize_t k, dd, i
    cdef double dk, base, acc, hv
    cdef double[:, ::1] h = np.zeros((d, n))
    for k in range(n_steps):
        for dd in range(d):
            dk = delta[k, dd]
            base = dk * x[k, dd]
            acc = 0.0
            for i in range(n):
                hv = exp(-dk * decay[dd, i]) * h[dd, i] + base * b[k, i]
                h[dd, i] = hv
                h_all[k, dd, i] = hv
                acc += c[k, i] * hv
            y[k, dd] = acc


def scan_backward(x, delta, b, c, decay, h_all, dy):
    x = np.ascontiguousarray(x, dtype=np.float64)
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    decay = np.ascontiguousarray(decay, dtype=np.float64)
    h_all = np.ascontiguousarray(h_all, dtype=np.float64)
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    n_steps = x.shape[0]
    d = x.shape[1]
    n = b.shape[1]
    dx = np.zeros((n_steps, d))
    ddelta = np.zeros((n_steps, d))
    db = np.zeros((n_steps, n))
    dc = np.zeros((n_steps, n))
    ddecay = np.zeros((d, n))
    _backward(x, delta, b, c, decay, h_all, dy, dx, ddelta, db, dc, ddecay)
    return dx, ddelta, db, dc, ddecay


cdef void _backward(const double[:, ::1] x, const double[:, ::1] delta,
                    const double[:, ::1] b, const double[:, ::1] c,
                    const double[:, ::1] decay, const double[:, :, ::1] h_all,
                    const double[:, ::1] dy, double[:, ::1] dx, double[:, ::1] ddelta,
                    double[:, ::1] db, double[:, ::1] dc, double[:, ::1] ddecay):
    cdef Py_ssize_t n_steps = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    cdef Py_ssize_t k, dd, i
    cdef double dyk, dk, xk, a, ghv, hprev, dpre, ddelta_acc, dx_acc
    cdef double[:, ::1] gh = np.zeros((d, n))
    for k in range(n_steps - 1, -1, -1):
        for dd in range(d):
            dyk = dy[k, dd]
            dk = delta[k, dd]
            xk = x[k, dd]
            ddelta_acc = 0.0
            dx_acc = 0.0
            for i in range(n):
                dc[k, i] += dyk * h_all[k, dd, i]
                ghv = gh[dd, i] + dyk * c[k, i]
                hprev = h_all[k - 1, dd, i] if k > 0 else 0.0
                a = exp(-dk * decay[dd, i])
                ddelta_acc += ghv * b[k, i] * xk
                db[k, i] += ghv * dk * xk
                dx_acc += ghv * dk * b[k, i]
                dpre = ghv * hprev * a
                ddelta_acc -= dpre * decay[dd, i]
                ddecay[dd, i] -= dpre * dk
                gh[dd, i] = ghv * a
            ddelta[k, dd] = ddelta_acc
            dx[k, dd] = dx_acc
