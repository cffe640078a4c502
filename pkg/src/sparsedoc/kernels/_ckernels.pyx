# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: skip-gram negative-sampling training and block-sparse
document accumulation.

The contract (argument layout, update schedule, determinism) is documented in
``pykernels``; this module is the fast path selected at import when present.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline double _next_uniform(unsigned long long *state) noexcept nogil:
    # xorshift64*; state must stay nonzero.
    cdef unsigned long long x
    state[0] ^= state[0] >> 12
    state[0] ^= state[0] << 25
    state[0] ^= state[0] >> 27
    x = state[0] * 2685821657736338717ULL
    return (x >> 11) * (1.0 / 9007199254740992.0)


cdef inline double _sigmoid(double x) noexcept nogil:
    if x > 30.0:
        x = 30.0
    elif x < -30.0:
        x = -30.0
    return 1.0 / (1.0 + exp(-x))


cdef inline Py_ssize_t _sample_cdf(double[::1] cdf, double u, Py_ssize_t vmax) noexcept nogil:
    # Equivalent to np.searchsorted(cdf, u, side="right"), clamped to vmax.
    cdef Py_ssize_t lo = 0, hi = vmax + 1, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    if lo > vmax:
        lo = vmax
    return lo


def train_epoch(
    cnp.int32_t[::1] tokens,
    cnp.int64_t[::1] offsets,
    double[:, ::1] syn0,
    double[:, ::1] syn1,
    double[::1] noise_cdf,
    int window,
    int negatives,
    double alpha_start,
    double alpha_end,
    double keep_rate,
    double local_weight,
    bint global_context,
    unsigned long long seed,
):
    """One training epoch; returns the number of pairs processed."""
    cdef Py_ssize_t n_total = tokens.shape[0]
    cdef Py_ssize_t n_docs = offsets.shape[0] - 1
    cdef Py_ssize_t d = syn0.shape[1]
    cdef Py_ssize_t vmax = noise_cdf.shape[0] - 1
    cdef double span = alpha_end - alpha_start
    cdef unsigned long long state = seed * 6364136223846793005ULL + 1442695040888963407ULL
    if state == 0:
        state = 88172645463325252ULL

    cdef Py_ssize_t t_max = 0, doc_len
    cdef Py_ssize_t i
    for i in range(n_docs):
        doc_len = offsets[i + 1] - offsets[i]
        if doc_len > t_max:
            t_max = doc_len

    work = np.zeros((3, d), dtype=np.float64)
    cdef double[::1] h = work[0]
    cdef double[::1] neu1e = work[1]
    cdef double[::1] g = work[2]
    sampled_arr = np.zeros(max(t_max, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] sampled = sampled_arr
    weight_arr = np.zeros(max(t_max, 1), dtype=np.float64)
    cdef double[::1] weights = weight_arr

    cdef Py_ssize_t doc_idx, doc_start, T, t, j, jlo, jhi, c, m, n_sampled, n_types
    cdef Py_ssize_t word, target, tgt
    cdef long long pairs_done = 0, tokens_done = 0
    cdef double alpha, inv_tq, dot, f, errv, label
    cdef cnp.int64_t[::1] types
    cdef cnp.int64_t[::1] counts

    for doc_idx in range(n_docs):
        doc_start = offsets[doc_idx]
        T = offsets[doc_idx + 1] - doc_start
        alpha = alpha_start + span * (tokens_done / <double> max(1, n_total))
        tokens_done += T

        if T < 2:
            continue

        n_types = 0
        inv_tq = 0.0
        if global_context:
            inv_tq = 1.0 / (T * keep_rate)
            types_arr, counts_arr = np.unique(
                np.asarray(tokens[doc_start : doc_start + T]), return_counts=True
            )
            types = types_arr.astype(np.int64)
            counts = counts_arr
            n_types = types.shape[0]

        for t in range(T):
            target = tokens[doc_start + t]
            jlo = t - window
            if jlo < 0:
                jlo = 0
            jhi = t + window + 1
            if jhi > T:
                jhi = T
            for j in range(jlo, jhi):
                if j == t:
                    continue
                word = tokens[doc_start + j]
                if global_context:
                    # Fresh corruption draw per pair.
                    n_sampled = 0
                    for i in range(n_types):
                        if keep_rate >= 1.0 or _next_uniform(&state) < keep_rate:
                            sampled[n_sampled] = types[i]
                            weights[n_sampled] = counts[i] * inv_tq
                            n_sampled += 1
                    for c in range(d):
                        g[c] = 0.0
                    for i in range(n_sampled):
                        tgt = sampled[i]
                        for c in range(d):
                            g[c] += weights[i] * syn0[tgt, c]
                    for c in range(d):
                        h[c] = local_weight * syn0[word, c] + g[c]
                        neu1e[c] = 0.0
                else:
                    for c in range(d):
                        h[c] = syn0[word, c]
                        neu1e[c] = 0.0
                for m in range(negatives + 1):
                    if m == 0:
                        tgt = target
                        label = 1.0
                    else:
                        tgt = _sample_cdf(noise_cdf, _next_uniform(&state), vmax)
                        if tgt == target:
                            continue
                        label = 0.0
                    dot = 0.0
                    for c in range(d):
                        dot += h[c] * syn1[tgt, c]
                    errv = (label - _sigmoid(dot)) * alpha
                    for c in range(d):
                        neu1e[c] += errv * syn1[tgt, c]
                        syn1[tgt, c] += errv * h[c]
                if global_context:
                    for c in range(d):
                        syn0[word, c] += local_weight * neu1e[c]
                    for i in range(n_sampled):
                        tgt = sampled[i]
                        for c in range(d):
                            syn0[tgt, c] += neu1e[c] * weights[i]
                else:
                    for c in range(d):
                        syn0[word, c] += neu1e[c]
                pairs_done += 1

    return pairs_done


def accumulate_doc(
    cnp.int32_t[::1] token_ids,
    cnp.int32_t[:, ::1] support,
    double[:, ::1] coeffs,
    double[:, ::1] wv,
    double[::1] out,
):
    """Add each token's block-sparse word-topic row into ``out``."""
    cdef Py_ssize_t d = wv.shape[1]
    cdef Py_ssize_t width = support.shape[1]
    cdef Py_ssize_t n = token_ids.shape[0]
    cdef Py_ssize_t i, j, c, t, k
    cdef long long touched = 0
    cdef double coeff
    cdef double* acc = &out[0] if out.shape[0] else NULL
    cdef double* wrow
    cdef double* dst
    with nogil:
        for i in range(n):
            t = token_ids[i]
            wrow = &wv[t, 0]
            for j in range(width):
                k = support[t, j]
                if k < 0:
                    break
                coeff = coeffs[t, j]
                dst = acc + k * d
                for c in range(d):
                    dst[c] += coeff * wrow[c]
                touched += d
    return touched
