# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled D2/D3 gate-cascade kernel for one block of D1 triggers.

Must consume the bit generator exactly like ``_kernels_py`` so both
backends return identical arrays for the same stream.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport floor, log
from libc.stdlib cimport free, realloc
from numpy.random cimport bitgen_t
from scipy.special.cython_special cimport ndtri

import numpy as np

cdef double TINY = 5.551115123125783e-17  # 2**-54, keeps ndtri finite
cdef int DRAWS = 8


cdef struct Buf:
    long long *data
    Py_ssize_t n
    Py_ssize_t cap


cdef int push(Buf *b, long long v) noexcept nogil:
    cdef Py_ssize_t cap
    cdef long long *p
    if b.n == b.cap:
        cap = b.cap * 2 if b.cap else 4096
        p = <long long *> realloc(b.data, cap * sizeof(long long))
        if p == NULL:
            return -1
        b.data = p
        b.cap = cap
    b.data[b.n] = v
    b.n += 1
    return 0


cdef object to_array(Buf *b):
    out = np.empty(b.n, dtype=np.int64)
    cdef long long[::1] view = out
    cdef Py_ssize_t i
    for i in range(b.n):
        view[i] = b.data[i]
    return out


cdef inline double clamp(double u) noexcept nogil:
    return u if u > 0.0 else TINY


def event_block(bit_generator, long long n_triggers, double p_fire, double p_sig,
                double center, double gate2, double gate3, double delay,
                double s1, double s2, double s3, double eta3, double p3, bint keep_all):
    """Simulate the D2 fires among ``n_triggers`` triggers.

    Returns ``(n_d2, d2_idx, d3_pos, d3_type, d3_t)``; ``d2_idx`` is empty
    unless ``keep_all``. ``d3_type`` is 1 for a detected partner photon and
    2 for a D3 dark count; ``d3_t`` is the D3 time in integer ps.
    """
    cdef bitgen_t *rng
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid bit generator capsule")
    rng = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef Buf idx_buf, pos_buf, type_buf, t_buf
    idx_buf.data = NULL; idx_buf.n = 0; idx_buf.cap = 0
    pos_buf.data = NULL; pos_buf.n = 0; pos_buf.cap = 0
    type_buf.data = NULL; type_buf.n = 0; type_buf.cap = 0
    t_buf.data = NULL; t_buf.n = 0; t_buf.cap = 0

    cdef double u[8]
    cdef double log_q, g, t_ph, t2, t3, lo, hi, ov, half = 0.5 * gate3
    cdef long long idx = -1, n_d2 = 0, tick
    cdef int k, typ, err = 0
    cdef bint signal

    if p_fire <= 0.0 or n_triggers <= 0:
        return 0, np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int64)
    log_q = log(1.0 - p_fire) if p_fire < 1.0 else -np.inf

    with nogil:
        while True:
            for k in range(DRAWS):
                u[k] = rng.next_double(rng.state)
            g = floor(log(1.0 - u[0]) / log_q)
            if g >= <double>(n_triggers - 1 - idx):
                break
            idx += <long long> g + 1
            signal = u[1] < p_sig
            typ = 0
            if signal:
                t_ph = center - s1 * ndtri(clamp(u[2]))
                t2 = t_ph + s2 * ndtri(clamp(u[3]))
                t3 = t_ph + s3 * ndtri(clamp(u[4]))
                lo = t2 + delay - half
                hi = lo + gate3
                if lo <= t3 and t3 < hi and u[5] < eta3:
                    typ = 1
            else:
                t2 = u[2] * gate2
                lo = t2 + delay - half
                hi = lo + gate3
            if typ == 0:
                if lo < 0.0:
                    lo = 0.0
                if hi > gate2:
                    hi = gate2
                ov = hi - lo
                if ov > 0.0 and u[6] < p3 * ov / gate3:
                    typ = 2
                    t3 = lo + u[7] * ov
            if keep_all:
                err |= push(&idx_buf, idx)
            if typ:
                tick = <long long> floor(t3)
                if typ == 2 and tick >= <long long> gate2:
                    tick = <long long> gate2 - 1
                err |= push(&pos_buf, n_d2)
                err |= push(&type_buf, typ)
                err |= push(&t_buf, tick)
            n_d2 += 1
            if err:
                break

    try:
        if err:
            raise MemoryError("event buffer allocation failed")
        return (n_d2, to_array(&idx_buf), to_array(&pos_buf), to_array(&type_buf), to_array(&t_buf))
    finally:
        free(idx_buf.data)
        free(pos_buf.data)
        free(type_buf.data)
        free(t_buf.data)


def dead_time_mask(const long long[::1] idx, long long blocked):
    """Non-paralysable dead time: a fire at trigger i blocks triggers i+1 .. i+blocked."""
    cdef Py_ssize_t i, n = idx.shape[0]
    out = np.zeros(n, dtype=bool)
    cdef unsigned char[::1] keep = out.view(np.uint8)
    cdef long long last
    cdef bint have = False
    with nogil:
        for i in range(n):
            if not have or idx[i] > last + blocked:
                keep[i] = 1
                last = idx[i]
                have = True
    return out
