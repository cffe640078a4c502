"""Context-clustering word sense induction and corpus annotation.

Polysemy candidates are the highest tf-idf words. Every occurrence of a
candidate is summarized as the mean of its in-window neighbor embeddings;
the occurrence summaries are clustered into at most ``max_senses`` groups,
near-duplicate clusters are merged by centroid cosine similarity and
low-share clusters are absorbed into their nearest survivor. A word that
ends up with a single cluster is not multi-sense. Annotation rewrites each
occurrence of a multi-sense word as ``word#k`` for the sense whose centroid
is most cosine-similar to the occurrence context; stripping the suffixes
recovers the original corpus exactly.

Externally produced annotations in the same ``word#k`` text format (for
example AdaGram output) can be imported in place of the built-in inducer.
"""

from __future__ import annotations

import re
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Document, Vocabulary
from .embeddings import EmbeddingMatrix
from .errors import DataFormatError

_SUFFIX_RE = re.compile(r"^(.*)#(\d+)$")


@dataclass
class WordSenses:
    centroids: np.ndarray  # (s, d)
    shares: np.ndarray     # (s,), sums to 1

    @property
    def n_senses(self) -> int:
        return len(self.shares)


@dataclass
class SenseInventory:
    senses: dict[str, WordSenses]
    dim: int
    window: int = 5

    def n_senses(self, word: str) -> int:
        entry = self.senses.get(word)
        return entry.n_senses if entry else 1

    def multi_sense_words(self) -> list[str]:
        return sorted(w for w, s in self.senses.items() if s.n_senses >= 2)


def select_candidates(vocab: Vocabulary, idf: np.ndarray, top_n: int = 5000) -> list[str]:
    """Top-n words by corpus-level tf-idf (frequency * idf), ties by index."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    scores = vocab.frequency.astype(np.float64) * np.asarray(idf)
    order = np.lexsort((np.arange(len(vocab)), -scores))
    return [vocab.tokens[i] for i in order[:top_n]]


def _context_mean(tokens, position, emb_index, vectors, window):
    rows = [
        emb_index[tokens[j]]
        for j in range(max(0, position - window), min(len(tokens), position + window + 1))
        if j != position and tokens[j] in emb_index
    ]
    if not rows:
        return np.zeros(vectors.shape[1])
    return vectors[rows].mean(axis=0)


def _kmeans(points: np.ndarray, k: int, rng, n_iter: int = 50):
    """Lloyd iterations from k-means++ seeding; deterministic given rng."""
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = points[rng.integers(n)]
        else:
            centroids[i] = points[np.searchsorted(np.cumsum(d2 / total), rng.random())]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(n_iter):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        for c in range(k):
            members = new_labels == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
            else:
                centroids[c] = points[int(np.argmax(dists.min(axis=1)))]
        if (new_labels == labels).all():
            break
        labels = new_labels
    return labels, centroids


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def _merge_and_absorb(centroids, counts, merge_threshold, min_share):
    centroids = [c.copy() for c in centroids]
    counts = [float(c) for c in counts]

    def weighted_merge(i, j):
        total = counts[i] + counts[j]
        centroids[i] = (counts[i] * centroids[i] + counts[j] * centroids[j]) / total
        counts[i] = total
        del centroids[j], counts[j]

    # merge near-duplicate centroids, most similar pair first
    while len(centroids) > 1:
        best, pair = -2.0, None
        for i in range(len(centroids)):
            for j in range(i + 1, len(centroids)):
                sim = _cosine(centroids[i], centroids[j])
                if sim > best:
                    best, pair = sim, (i, j)
        if best <= merge_threshold:
            break
        weighted_merge(*pair)

    # absorb low-share clusters into the nearest survivor
    total = sum(counts)
    while len(centroids) > 1:
        shares = [c / total for c in counts]
        smallest = int(np.argmin(shares))
        if shares[smallest] >= min_share:
            break
        dists = [
            np.inf if i == smallest else float(np.linalg.norm(centroids[i] - centroids[smallest]))
            for i in range(len(centroids))
        ]
        nearest = int(np.argmin(dists))
        i, j = sorted((nearest, smallest))
        weighted_merge(i, j)

    shares = np.array([c / total for c in counts])
    return np.vstack(centroids), shares


def induce_senses(
    documents: list[Document],
    embeddings: EmbeddingMatrix,
    candidates,
    window: int = 5,
    max_senses: int = 3,
    min_share: float = 0.1,
    merge_threshold: float = 0.85,
    seed: int = 1,
) -> SenseInventory:
    """Cluster occurrence contexts of each candidate word into senses."""
    if max_senses < 1:
        raise ValueError("max_senses must be >= 1")
    candidate_set = set(candidates)
    contexts: dict[str, list[np.ndarray]] = {w: [] for w in candidate_set}
    for doc in documents:
        for pos, token in enumerate(doc.tokens):
            if token in candidate_set:
                contexts[token].append(
                    _context_mean(doc.tokens, pos, embeddings.index, embeddings.vectors, window)
                )
    senses: dict[str, WordSenses] = {}
    for word in sorted(candidate_set):
        occ = contexts[word]
        if not occ:
            continue
        points = np.vstack(occ)
        k = min(max_senses, len(points))
        # per-word stream, so results do not depend on the candidate list
        rng = np.random.default_rng((seed, zlib.crc32(word.encode())))
        labels, centroids = _kmeans(points, k, rng)
        counts = np.bincount(labels, minlength=k).astype(float)
        keep = counts > 0
        centroids, shares = _merge_and_absorb(
            centroids[keep], counts[keep], merge_threshold, min_share
        )
        senses[word] = WordSenses(centroids=centroids, shares=shares)
    return SenseInventory(senses=senses, dim=embeddings.dim, window=window)


def annotate(
    documents: list[Document],
    inventory: SenseInventory,
    embeddings: EmbeddingMatrix,
    window: int | None = None,
) -> list[Document]:
    """Rewrite multi-sense occurrences as word#k, leaving everything else."""
    window = inventory.window if window is None else window
    multi = {w: s for w, s in inventory.senses.items() if s.n_senses >= 2}
    out = []
    for doc in documents:
        tokens = list(doc.tokens)
        for pos, token in enumerate(tokens):
            entry = multi.get(token)
            if entry is None:
                continue
            ctx = _context_mean(doc.tokens, pos, embeddings.index, embeddings.vectors, window)
            if not ctx.any():
                sense = 0
            else:
                sims = [_cosine(ctx, c) for c in entry.centroids]
                sense = int(np.argmax(sims))  # ties resolve to the lower id
            tokens[pos] = f"{token}#{sense}"
        out.append(Document(doc_id=doc.doc_id, labels=doc.labels, tokens=tokens, split=doc.split))
    return out


def strip_sense_suffix(token: str) -> str:
    match = _SUFFIX_RE.match(token)
    return match.group(1) if match else token


def strip_annotation(documents: list[Document]) -> list[Document]:
    return [
        Document(
            doc_id=d.doc_id,
            labels=d.labels,
            tokens=[strip_sense_suffix(t) for t in d.tokens],
            split=d.split,
        )
        for d in documents
    ]


# ---------------------------------------------------------------------------
# Annotated corpus text format: one document per line, space-separated tokens
# ---------------------------------------------------------------------------

def export_annotation(documents: list[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in documents:
            fh.write(" ".join(doc.tokens) + "\n")


def import_annotation(path, inventory: SenseInventory | None = None) -> list[Document]:
    """Read an annotated corpus; suffixed tokens are accepted as they come.

    With an inventory given, suffixes on words it does not list as
    multi-sense produce a warning (the token is still kept).
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty annotated corpus")
    documents = []
    for i, line in enumerate(lines):
        tokens = line.split()
        if inventory is not None:
            for token in tokens:
                match = _SUFFIX_RE.match(token)
                if match and inventory.n_senses(match.group(1)) < 2:
                    warnings.warn(
                        f"{path}:{i + 1}: sense suffix on non-multi-sense word {match.group(1)!r}"
                    )
        documents.append(Document(doc_id=str(i), labels=(), tokens=tokens, split="train"))
    return documents


_INVENTORY_HEADER = "sense-inventory v1"


def save_inventory(inventory: SenseInventory, path) -> None:
    """Per line: word, sense id, share at 6 decimals, then the centroid."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_INVENTORY_HEADER} {inventory.dim} {inventory.window}\n")
        for word in sorted(inventory.senses):
            entry = inventory.senses[word]
            for k in range(entry.n_senses):
                centroid = " ".join(f"{x:.6f}" for x in entry.centroids[k])
                fh.write(f"{word} {k} {entry.shares[k]:.6f} {centroid}\n")


def load_inventory(path) -> SenseInventory:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != _INVENTORY_HEADER.split():
            raise DataFormatError(f"{path}: not a sense inventory file")
        dim, window = int(header[2]), int(header[3])
        rows: dict[str, list[tuple[int, float, np.ndarray]]] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if len(parts) != 3 + dim:
                raise DataFormatError(f"{path}:{lineno}: expected word, id, share, {dim} values")
            word, sense_id, share = parts[0], int(parts[1]), float(parts[2])
            rows.setdefault(word, []).append(
                (sense_id, share, np.array([float(x) for x in parts[3:]]))
            )
    senses = {}
    for word, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        senses[word] = WordSenses(
            centroids=np.vstack([e[2] for e in entries]),
            shares=np.array([e[1] for e in entries]),
        )
    return SenseInventory(senses=senses, dim=dim, window=window)
