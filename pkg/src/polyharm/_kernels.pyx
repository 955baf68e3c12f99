# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels; contracts mirror ``polyharm._kernels_py``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, sin, sqrt

cnp.import_array()

BACKEND = "cython"


cdef inline double _step(double u) nogil:
    cdef double a, b
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    a = exp(-1.0 / u)
    b = exp(-1.0 / (1.0 - u))
    return a / (a + b)


def radial_cutoff(r, double r1, double r2):
    arr = np.ascontiguousarray(np.atleast_1d(np.asarray(r, dtype=np.float64)))
    out = np.empty_like(arr)
    cdef double[::1] rv = arr.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i
    cdef double inv = 1.0 / (r2 - r1)
    for i in range(rv.shape[0]):
        ov[i] = _step((r2 - rv[i]) * inv)
    return out.reshape(np.shape(r)) if np.ndim(r) else float(out[0])


def dbar_cauchy_transform(
    points,
    mu1,
    mu2,
    double r1,
    double r2,
    rho_nodes,
    rho_weights,
    int n_theta,
    int chunk=128,
):
    pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] p = pts
    cdef double[::1] m1 = np.ascontiguousarray(mu1, dtype=np.float64)
    cdef double[::1] m2 = np.ascontiguousarray(mu2, dtype=np.float64)
    cdef double[::1] rho = np.ascontiguousarray(rho_nodes, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(rho_weights, dtype=np.float64)
    cdef Py_ssize_t M = p.shape[0], R = rho.shape[0], T = n_theta
    out = np.empty(M, dtype=np.complex128)
    cdef double complex[::1] ov = out

    cdef double[::1] ct = np.cos(2.0 * np.pi * np.arange(T) / T)
    cdef double[::1] st = np.sin(2.0 * np.pi * np.arange(T) / T)
    cdef Py_ssize_t i, j, k
    cdef double dx0, dx1, dx2, rr, chi, acc_re, acc_im, radial, inv_w, inv_T
    cdef double d0, d1, d2

    inv_w = 1.0 / (r2 - r1)
    inv_T = 1.0 / T
    with nogil:
        for i in range(M):
            acc_re = 0.0
            acc_im = 0.0
            for j in range(T):
                d0 = ct[j] * m1[0] + st[j] * m2[0]
                d1 = ct[j] * m1[1] + st[j] * m2[1]
                d2 = ct[j] * m1[2] + st[j] * m2[2]
                radial = 0.0
                for k in range(R):
                    dx0 = p[i, 0] - rho[k] * d0
                    dx1 = p[i, 1] - rho[k] * d1
                    dx2 = p[i, 2] - rho[k] * d2
                    rr = sqrt(dx0 * dx0 + dx1 * dx1 + dx2 * dx2)
                    chi = _step((r2 - rr) * inv_w)
                    radial += w[k] * chi
                acc_re += radial * ct[j]
                acc_im -= radial * st[j]
            ov[i] = (acc_re + 1j * acc_im) * inv_T
    return out
