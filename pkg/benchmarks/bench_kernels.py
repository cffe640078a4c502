#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-python fallback.

Covers the two hot paths: one skip-gram training epoch (plain and with the
corruption-sampled document context) and block-sparse document accumulation,
the latter also against the dense brute-force baseline it replaces.

Usage: python3 benchmarks/bench_kernels.py [--docs N] [--dim D]
"""

import argparse
import time

import numpy as np

from sparsedoc.kernels import backends


def _corpus(rng, n_docs, vocab, lo=40, hi=120):
    docs = [rng.integers(0, vocab, size=rng.integers(lo, hi)).astype(np.int32)
            for _ in range(n_docs)]
    offsets = np.zeros(n_docs + 1, dtype=np.int64)
    for i, d in enumerate(docs):
        offsets[i + 1] = offsets[i] + len(d)
    return np.concatenate(docs), offsets, docs


def bench_training(impls, n_docs, vocab, dim):
    rng = np.random.default_rng(0)
    flat, offsets, _ = _corpus(rng, n_docs, vocab)
    cdf = np.cumsum(np.full(vocab, 1.0 / vocab))
    rows = []
    for label, global_context in (("sgns epoch", False), ("doc2vecc epoch", True)):
        timings = {}
        for name, impl in impls.items():
            syn0 = (np.random.default_rng(1).random((vocab, dim)) - 0.5) / dim
            syn1 = np.zeros((vocab, dim))
            t0 = time.perf_counter()
            pairs = impl.train_epoch(flat, offsets, syn0, syn1, cdf, 5, 5,
                                     0.025, 0.02, 0.5, 0.1, global_context, 7)
            timings[name] = time.perf_counter() - t0
        rows.append((label, pairs, timings))
    return rows


def bench_accumulation(impls, n_docs, vocab, dim, k=60, l=3):
    rng = np.random.default_rng(2)
    support = np.full((vocab, l), -1, dtype=np.int32)
    coeffs = np.zeros((vocab, l))
    for w in range(vocab):
        support[w] = np.sort(rng.choice(k, size=l, replace=False))
        coeffs[w] = rng.random(l)
    wv = rng.standard_normal((vocab, dim))
    _, _, docs = _corpus(rng, n_docs, vocab)

    timings = {}
    out = np.zeros(k * dim)
    for name, impl in impls.items():
        t0 = time.perf_counter()
        for ids in docs:
            out[:] = 0.0
            impl.accumulate_doc(ids, support, coeffs, wv, out)
        timings[name] = time.perf_counter() - t0

    dense = np.zeros((vocab, k * dim))
    for w in range(vocab):
        for j in range(l):
            blk = support[w, j] * dim
            dense[w, blk : blk + dim] = coeffs[w, j] * wv[w]
    t0 = time.perf_counter()
    for ids in docs:
        dense[ids].sum(axis=0)
    timings["dense baseline"] = time.perf_counter() - t0
    return timings


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=300)
    parser.add_argument("--dim", type=int, default=100)
    parser.add_argument("--vocab", type=int, default=500)
    args = parser.parse_args()

    impls = backends()
    print(f"backends available: {', '.join(impls)}")
    if "compiled" not in impls:
        print("note: compiled extension not built, python fallback only")

    print(f"\ntraining ({args.docs} docs, vocab {args.vocab}, dim {args.dim})")
    for label, pairs, timings in bench_training(impls, args.docs, args.vocab, args.dim):
        parts = "  ".join(f"{n}: {t:.3f}s" for n, t in timings.items())
        ratio = ""
        if "compiled" in timings and "python" in timings:
            ratio = f"  (python/compiled = {timings['python'] / timings['compiled']:.1f}x)"
        print(f"  {label:<16} {pairs} pairs  {parts}{ratio}")

    n_acc = args.docs * 20
    print(f"\naccumulation ({n_acc} docs, K=60, d={args.dim}, l=3)")
    timings = bench_accumulation(impls, n_acc, args.vocab, args.dim)
    for name, t in sorted(timings.items(), key=lambda kv: kv[1]):
        print(f"  {name:<16} {t:.3f}s  ({t / n_acc * 1e6:.2f} us/doc)")
    if "compiled" in timings:
        print(f"  dense/compiled speedup: {timings['dense baseline'] / timings['compiled']:.1f}x")


if __name__ == "__main__":
    main()
