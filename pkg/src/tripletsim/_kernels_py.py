"""Pure numpy fallback for the gate-cascade kernel.

Consumes the bit generator row by row exactly like the compiled kernel: eight
uniforms per D2 fire. Logarithms of the gap draws go through ``math.log``
because numpy's SIMD ``log`` is not bit-identical to libm.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

DRAWS = 8
TINY = 2.0**-54


def _empty():
    return np.empty(0, np.int64)


def event_block(bit_generator, n_triggers, p_fire, p_sig, center, gate2, gate3, delay,
                s1, s2, s3, eta3, p3, keep_all):
    if p_fire <= 0.0 or n_triggers <= 0:
        return 0, _empty(), _empty(), _empty(), _empty()
    gen = np.random.Generator(bit_generator)
    log_q = math.log(1.0 - p_fire) if p_fire < 1.0 else -math.inf
    expected = n_triggers * p_fire

    chunks, idx_chunks = [], []
    idx_prev = -1
    rows = int(expected * 1.02 + 6.0 * math.sqrt(expected) + 64)
    while True:
        u = gen.random((rows, DRAWS))
        logs = np.fromiter(map(math.log, 1.0 - u[:, 0]), dtype=float, count=rows)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.floor(logs / log_q)
        g = np.minimum(g, float(n_triggers)).astype(np.int64)
        idx = idx_prev + np.cumsum(g + 1)
        over = np.flatnonzero(idx >= n_triggers)
        if over.size:
            cut = over[0]
            chunks.append(u[:cut])
            idx_chunks.append(idx[:cut])
            break
        chunks.append(u)
        idx_chunks.append(idx)
        idx_prev = int(idx[-1])
        rows = max(64, rows // 4)

    u = np.concatenate(chunks)
    idx = np.concatenate(idx_chunks)
    n_d2 = len(u)

    half = 0.5 * gate3
    sig = u[:, 1] < p_sig
    z = ndtri(np.where(u[:, 2:5] > 0.0, u[:, 2:5], TINY))
    t_ph = center - s1 * z[:, 0]
    t2 = np.where(sig, t_ph + s2 * z[:, 1], u[:, 2] * gate2)
    t3 = t_ph + s3 * z[:, 2]
    lo = t2 + delay - half
    hi = lo + gate3
    partner = sig & (lo <= t3) & (t3 < hi) & (u[:, 5] < eta3)

    lo_w = np.where(lo < 0.0, 0.0, lo)
    hi_w = np.where(hi > gate2, gate2, hi)
    ov = hi_w - lo_w
    dark = ~partner & (ov > 0.0) & (u[:, 6] < p3 * ov / gate3)
    t_dark = lo_w + u[:, 7] * ov

    typ = np.where(partner, 1, np.where(dark, 2, 0)).astype(np.int64)
    pos = np.flatnonzero(typ)
    t = np.where(partner, t3, t_dark)[pos]
    ticks = np.floor(t).astype(np.int64)
    ticks = np.where((typ[pos] == 2) & (ticks >= int(gate2)), int(gate2) - 1, ticks)
    return n_d2, (idx if keep_all else _empty()), pos.astype(np.int64), typ[pos], ticks


def dead_time_mask(idx, blocked):
    keep = np.zeros(len(idx), dtype=bool)
    last = None
    for i, v in enumerate(idx.tolist()):
        if last is None or v > last + blocked:
            keep[i] = True
            last = v
    return keep
