"""Batched assignment drawing for the Monte Carlo driver.

Rejection sampling for rerandomization burns ~1/acceptance candidate
randomizations per replicate, so the hot loop is compiled with numba.  Each
replicate owns a counter-style splitmix64 stream with a per-replicate odd
increment (both words come from a SeedSequence keyed on (master_seed,
replicate)), which makes results bit-identical regardless of thread count
or scheduling.  Bounded integers use Lemire's unbiased method, and each
candidate is a fresh partial Fisher-Yates prefix, so accepted assignments
are exactly uniform on the acceptance set.
"""

from __future__ import annotations

import numpy as np
from numba import int64, njit, prange, uint32, uint64

_MASK64 = uint64(0xFFFFFFFFFFFFFFFF)


@njit(inline="always")
def _mix64(state, gamma):
    # splitmix64 with a per-stream increment (SplittableRandom style)
    state = (state + gamma) & _MASK64
    z = state
    z = ((z ^ (z >> uint32(30))) * uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> uint32(27))) * uint64(0x94D049BB133111EB)) & _MASK64
    return state, z ^ (z >> uint32(31))


@njit(inline="always")
def _bounded(state, gamma, s):
    # Lemire unbiased integer in [0, s); s < 2^32
    state, z = _mix64(state, gamma)
    x = uint32(z >> uint32(32))
    m = uint64(x) * uint64(s)
    lo = uint32(m & uint64(0xFFFFFFFF))
    if lo < uint32(s):
        t = (uint32(0) - uint32(s)) % uint32(s)
        while lo < t:
            state, z = _mix64(state, gamma)
            x = uint32(z >> uint32(32))
            m = uint64(x) * uint64(s)
            lo = uint32(m & uint64(0xFFFFFFFF))
    return state, uint32(m >> uint32(32))


@njit(parallel=True, cache=True)
def draw_assignments(xc, n1, bmat, threshold, seeds, max_attempts,
                     treated_out, attempts_out):
    """Draw one accepted assignment per replicate.

    xc: (n, K) centered design covariates (K may be 0 for a CRE);
    bmat: (K, K) with M = s' bmat s for the treated-group column sums s;
    threshold: acceptance bound on M (inf accepts the first candidate);
    seeds: (R, 2) uint64 per-replicate stream words.
    Writes treated indices (R, n1) and signed attempt counts (negative
    marks a replicate that exhausted max_attempts).
    """
    R = seeds.shape[0]
    n = xc.shape[0]
    K = xc.shape[1]
    accept_all = not np.isfinite(threshold) or K == 0
    for r in prange(R):
        state = seeds[r, 0]
        gamma = seeds[r, 1] | uint64(1)
        idx = np.empty(n, dtype=np.int32)
        for i in range(n):
            idx[i] = i
        s = np.zeros(K, dtype=np.float64)
        ok = False
        att = int64(0)
        while att < max_attempts:
            att += 1
            for k in range(K):
                s[k] = 0.0
            for t in range(n1):
                state, rr = _bounded(state, gamma, uint32(n - t))
                j = t + int64(rr)
                tmp = idx[t]
                idx[t] = idx[j]
                idx[j] = tmp
                for k in range(K):
                    s[k] += xc[idx[t], k]
            if accept_all:
                ok = True
                break
            m = 0.0
            for k1 in range(K):
                acc = 0.0
                for k2 in range(K):
                    acc += bmat[k1, k2] * s[k2]
                m += s[k1] * acc
            if m <= threshold:
                ok = True
                break
        attempts_out[r] = att if ok else -att
        for t in range(n1):
            treated_out[r, t] = idx[t]
