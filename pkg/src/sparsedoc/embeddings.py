"""Word-vector training on the (annotated) corpus.

Two trainers share one negative-sampling core: plain skip-gram, and a
corruption-regularized variant that adds an unbiased subsample average of the
document's word vectors to every input projection. The corruption penalizes
words that occur everywhere, so frequent function words are driven toward
zero vectors while topical words keep their norms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import Vocabulary
from .errors import DataFormatError


@dataclass
class EmbeddingConfig:
    dim: int = 200
    window: int = 10
    negatives: int = 10
    epochs: int = 10
    learning_rate: float = 0.025
    keep_rate: float = 0.3  # corruption keep probability q, doc2vecc only
    seed: int = 1

    def __post_init__(self):
        if self.dim < 1 or self.window < 1:
            raise ValueError("dim and window must be >= 1")
        if not 0.0 < self.keep_rate <= 1.0:
            raise ValueError("keep_rate must be in (0, 1]")


@dataclass
class EmbeddingMatrix:
    """Vocabulary-aligned word vectors plus training metadata."""

    tokens: list[str]
    vectors: np.ndarray                      # (V, d) float64
    method: str = "none"
    epochs: int = 0
    seed: int = 0
    output_vectors: np.ndarray | None = None  # context table, kept for loss probes
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)


def _initial_matrices(n_words: int, dim: int, seed: int):
    rng = np.random.default_rng(seed)
    syn0 = (rng.random((n_words, dim)) - 0.5) / dim
    syn1 = np.zeros((n_words, dim))
    return syn0, syn1


def noise_distribution(vocab: Vocabulary) -> np.ndarray:
    """Cumulative unigram^0.75 negative-sampling distribution."""
    weights = vocab.frequency.astype(np.float64) ** 0.75
    cdf = np.cumsum(weights / weights.sum())
    cdf[-1] = 1.0
    return cdf


def _flatten(documents) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.zeros(len(documents) + 1, dtype=np.int64)
    for i, doc in enumerate(documents):
        offsets[i + 1] = offsets[i] + len(doc)
    flat = np.concatenate([np.asarray(d, dtype=np.int32) for d in documents]) if documents else np.zeros(0, np.int32)
    return flat.astype(np.int32, copy=False), offsets


def _train(documents, vocab: Vocabulary, config: EmbeddingConfig, global_context: bool, method: str) -> EmbeddingMatrix:
    if not documents or all(len(d) == 0 for d in documents):
        raise DataFormatError("cannot train embeddings on an empty corpus")
    flat, offsets = _flatten(documents)
    if flat.size and int(flat.max()) >= len(vocab):
        raise ValueError("token index exceeds vocabulary size")
    syn0, syn1 = _initial_matrices(len(vocab), config.dim, config.seed)
    cdf = noise_distribution(vocab)
    lr = config.learning_rate
    floor = lr * 1e-4
    for epoch in range(config.epochs):
        alpha_start = max(lr * (1.0 - epoch / config.epochs), floor)
        alpha_end = max(lr * (1.0 - (epoch + 1) / config.epochs), floor)
        kernels.train_epoch(
            flat,
            offsets,
            syn0,
            syn1,
            cdf,
            config.window,
            config.negatives,
            alpha_start,
            alpha_end,
            config.keep_rate if global_context else 1.0,
            # The local word carries the share it would have in an averaged
            # context of 2*window words; the document average carries the rest.
            1.0 / (2.0 * config.window) if global_context else 1.0,
            global_context,
            config.seed + 1_000_003 * (epoch + 1),
        )
        if not np.isfinite(syn0).all():
            raise FloatingPointError(f"non-finite embedding entries after epoch {epoch}")
    return EmbeddingMatrix(
        tokens=list(vocab.tokens),
        vectors=syn0,
        method=method,
        epochs=config.epochs,
        seed=config.seed,
        output_vectors=syn1,
    )


def train_sgns(documents, vocab: Vocabulary, config: EmbeddingConfig) -> EmbeddingMatrix:
    """Skip-gram negative sampling over index-encoded documents."""
    return _train(documents, vocab, config, global_context=False, method="sgns")


def train_doc2vecc(documents, vocab: Vocabulary, config: EmbeddingConfig) -> EmbeddingMatrix:
    """Skip-gram with a corruption-sampled document context added to each input."""
    return _train(documents, vocab, config, global_context=True, method="doc2vecc")


def probe_loss(emb: EmbeddingMatrix, documents, vocab: Vocabulary, config: EmbeddingConfig,
               n_probes: int = 2000, seed: int = 99) -> float:
    """Sampled negative-sampling loss on a fixed probe set of (input, target) pairs.

    Uses the stored output table; an untrained matrix (epochs=0) scores
    -log(0.5) per term, anything trained should score lower.
    """
    if emb.output_vectors is None:
        raise ValueError("embedding matrix has no output table")
    rng = np.random.default_rng(seed)
    flat, offsets = _flatten(documents)
    cdf = noise_distribution(vocab)
    total = 0.0
    count = 0
    for _ in range(n_probes):
        di = rng.integers(0, len(offsets) - 1)
        doc = flat[offsets[di] : offsets[di + 1]]
        if len(doc) < 2:
            continue
        t = int(rng.integers(0, len(doc)))
        lo, hi = max(0, t - config.window), min(len(doc), t + config.window + 1)
        j = int(rng.integers(lo, hi))
        if j == t:
            continue
        h = emb.vectors[doc[j]]
        target = doc[t]
        negs = np.minimum(cdf.searchsorted(rng.random(config.negatives), side="right"), len(cdf) - 1)
        pos = 1.0 / (1.0 + np.exp(-np.clip(h @ emb.output_vectors[target], -30, 30)))
        neg = 1.0 / (1.0 + np.exp(np.clip(emb.output_vectors[negs] @ h, -30, 30)))
        total += -np.log(max(pos, 1e-12)) - np.log(np.maximum(neg, 1e-12)).sum()
        count += 1
    return total / max(count, 1)


# ---------------------------------------------------------------------------
# Persistence: plain-text interchange format, header "V d"
# ---------------------------------------------------------------------------

def save_vectors(emb_or_tokens, path, matrix: np.ndarray | None = None) -> None:
    """Write vectors as text: header "V d", then token followed by d reals."""
    if matrix is None:
        tokens, matrix = emb_or_tokens.tokens, emb_or_tokens.vectors
    else:
        tokens = emb_or_tokens
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(tokens)} {matrix.shape[1]}\n")
        for token, row in zip(tokens, matrix):
            if " " in token or "\n" in token or not token:
                raise DataFormatError(f"token not representable in vector file: {token!r}")
            fh.write(token + " " + " ".join(f"{x:.6f}" for x in row) + "\n")


def load_vectors(path) -> EmbeddingMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataFormatError(f"{path}:1: expected header 'V d'")
        n_words, dim = int(header[0]), int(header[1])
        tokens = []
        matrix = np.zeros((n_words, dim))
        lineno = 1
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise DataFormatError(f"{path}:{lineno}: expected token plus {dim} values")
            if lineno - 2 >= n_words:
                raise DataFormatError(f"{path}:{lineno}: more rows than header declares")
            tokens.append(parts[0])
            matrix[lineno - 2] = [float(x) for x in parts[1:]]
    if len(tokens) != n_words:
        raise DataFormatError(f"{path}: header declares {n_words} rows, found {len(tokens)}")
    return EmbeddingMatrix(tokens=tokens, vectors=matrix, method="loaded")
