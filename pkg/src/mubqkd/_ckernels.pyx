# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled trial-sampling loop. Must stay bit-identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef int NDRAWS = 5


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t trial, uint64_t k) nogil:
    cdef uint64_t x = key + (trial * NDRAWS + k + 1) * GOLDEN
    return <double>(_mix(x) >> 11) * (1.0 / 9007199254740992.0)


cdef inline Py_ssize_t _pick(const double[::1] cdf, double u) nogil:
    cdef Py_ssize_t k = 0
    cdef Py_ssize_t n = cdf.shape[0]
    while k < n - 1 and cdf[k] <= u:
        k += 1
    return k


cdef inline Py_ssize_t _pick_row(const double[:, ::1] cdf, Py_ssize_t row, double u) nogil:
    cdef Py_ssize_t k = 0
    cdef Py_ssize_t n = cdf.shape[1]
    while k < n - 1 and cdf[row, k] <= u:
        k += 1
    return k


def key_from_seed(uint64_t seed):
    return _mix(seed + GOLDEN)


def uniforms(uint64_t key, cnp.ndarray[int64_t, ndim=1] trials, uint64_t k):
    cdef Py_ssize_t i, n = trials.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = _uniform(key, <uint64_t>trials[i], k)
    return out


def tally_block(uint64_t key, int64_t start, int64_t stop, int d,
                const double[::1] basis_cdf, const double[::1] state_cdf,
                const double[::1] weyl_cdf, const double[:, ::1] outcome_cdf,
                int64_t[::1] counts):
    """Accumulate outcome counts for trials ``[start, stop)`` into ``counts``."""
    cdef int64_t t
    cdef Py_ssize_t ra, na, rb, w, nb, row, nb_cat
    cdef Py_ssize_t nbas = d + 1
    cdef Py_ssize_t nw = d * d
    nb_cat = outcome_cdf.shape[1]
    with nogil:
        for t in range(start, stop):
            ra = _pick(basis_cdf, _uniform(key, <uint64_t>t, 0))
            na = _pick(state_cdf, _uniform(key, <uint64_t>t, 1))
            rb = _pick(basis_cdf, _uniform(key, <uint64_t>t, 2))
            w = _pick(weyl_cdf, _uniform(key, <uint64_t>t, 3))
            row = ((ra * d + na) * nw + w) * nbas + rb
            nb = _pick_row(outcome_cdf, row, _uniform(key, <uint64_t>t, 4))
            counts[((ra * d + na) * nbas + rb) * nb_cat + nb] += 1
