"""Pure numpy implementations of the hot kernels.

Drop-in fallback for the compiled extension module. Semantics shared by both
backends:

* ``train_epoch`` runs one skip-gram negative-sampling pass over the corpus,
  updating ``syn0``/``syn1`` in place. Within a training pair the input vector
  is held fixed while the (1 + negatives) output rows are updated; the input
  row is updated once per pair. With ``global_context`` set, a corruption
  sample of the document is added to each pair's input projection: the
  document's distinct word types are redrawn for every pair, each kept with
  probability ``keep_rate`` and contributing count/(T * keep_rate) times its
  vector, an unbiased estimate of the full document average whose noise grows
  quadratically with a word's within-document frequency. The local input
  enters the projection with ``local_weight`` (the share one word carries in
  an averaged context of 2 * window words; plain skip-gram passes 1.0), and
  the gradient of the shared vector is applied to the sampled types after each
  pair. Both together are what drive frequent uninformative words toward zero
  vectors while the document average carries the topical signal.
* ``accumulate_doc`` adds block-sparse word-topic rows into a dense
  accumulator, one block of ``d`` entries per retained cluster.

Both backends are deterministic given their arguments, but they use different
random streams and floating-point schedules, so their trained outputs agree
statistically rather than bitwise.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


def train_epoch(
    tokens: np.ndarray,
    offsets: np.ndarray,
    syn0: np.ndarray,
    syn1: np.ndarray,
    noise_cdf: np.ndarray,
    window: int,
    negatives: int,
    alpha_start: float,
    alpha_end: float,
    keep_rate: float,
    local_weight: float,
    global_context: bool,
    seed: int,
) -> int:
    """One training epoch; returns the number of pairs processed."""
    rng = np.random.default_rng(seed)
    n_total = len(tokens)
    vmax = len(noise_cdf) - 1
    pairs_done = 0
    tokens_done = 0
    span = alpha_end - alpha_start

    for doc_idx in range(len(offsets) - 1):
        doc = tokens[offsets[doc_idx] : offsets[doc_idx + 1]]
        T = len(doc)
        alpha = alpha_start + span * (tokens_done / max(1, n_total))
        tokens_done += T

        if T < 2:
            continue
        types = type_weights = None
        if global_context:
            types, counts = np.unique(doc, return_counts=True)
            type_weights = counts / (T * keep_rate)
        n_pairs = sum(min(t + window + 1, T) - max(t - window, 0) - 1 for t in range(T))
        negs = np.minimum(
            noise_cdf.searchsorted(rng.random((n_pairs, negatives)), side="right"), vmax
        )

        pair = 0
        for t in range(T):
            target = doc[t]
            for j in range(max(t - window, 0), min(t + window + 1, T)):
                if j == t:
                    continue
                word = doc[j]
                g = None
                if global_context:
                    if keep_rate >= 1.0:
                        kept = slice(None)  # keep everything, no randomness consumed
                    else:
                        kept = rng.random(len(types)) < keep_rate
                    sampled = types[kept]
                    weights = type_weights[kept]
                    g = weights @ syn0[sampled] if len(sampled) else np.zeros(syn0.shape[1])
                tgt_ids = [target] + [n for n in negs[pair] if n != target]
                pair += 1
                labels = np.zeros(len(tgt_ids))
                labels[0] = 1.0
                tgt_ids = np.asarray(tgt_ids, dtype=np.int64)

                h = local_weight * syn0[word] + g if g is not None else syn0[word]
                rows = syn1[tgt_ids]
                err = (labels - _sigmoid(rows @ h)) * alpha
                grad_h = err @ rows
                np.add.at(syn1, tgt_ids, np.outer(err, h))
                syn0[word] += local_weight * grad_h if g is not None else grad_h
                if g is not None and len(sampled):
                    syn0[sampled] += np.outer(weights, grad_h)
        pairs_done += pair
    return pairs_done


def accumulate_doc(
    token_ids: np.ndarray,
    support: np.ndarray,
    coeffs: np.ndarray,
    wv: np.ndarray,
    out: np.ndarray,
) -> int:
    """Add each token's block-sparse word-topic row into ``out``.

    ``support`` holds per-word retained cluster ids (-1 padded at the end),
    ``coeffs`` the matching idf-weighted posteriors. Returns the number of
    accumulator entries touched.
    """
    d = wv.shape[1]
    width = support.shape[1]
    touched = 0
    for t in token_ids:
        vec = wv[t]
        for j in range(width):
            k = support[t, j]
            if k < 0:
                break
            s = k * d
            out[s : s + d] += coeffs[t, j] * vec
            touched += d
    return touched
