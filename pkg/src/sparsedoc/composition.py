"""Word-topic vectors and document composition.

Each word's K*d word-topic vector concatenates K blocks of its d-dimensional
embedding, block k scaled by idf(w) * SP(c_k|w). Only the blocks in the
sparse assignment support are nonzero, so the table is stored block-sparse
and documents are embedded by summing at most l blocks per token through the
compiled accumulation kernel. A dense brute-force path doubles as the
correctness oracle and the timing baseline.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .clustering import SparseAssignmentTable
from .embeddings import EmbeddingMatrix
from .errors import DataFormatError


@dataclass
class WordTopicTable:
    """Block-sparse K*d word-topic vectors over the annotated vocabulary."""

    tokens: list[str]
    word_vectors: np.ndarray   # (V, d) float64
    support: np.ndarray        # (V, l) int32, -1 padded
    coeffs: np.ndarray         # (V, l) float64: idf * retained posterior
    n_clusters: int
    l: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def dim(self) -> int:
        return self.n_clusters * self.word_vectors.shape[1]

    @property
    def block_dim(self) -> int:
        return self.word_vectors.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def row_dense(self, i: int) -> np.ndarray:
        d = self.block_dim
        out = np.zeros(self.dim)
        for k, c in zip(self.support[i], self.coeffs[i]):
            if k >= 0:
                out[k * d : (k + 1) * d] = c * self.word_vectors[i]
        return out

    def row_nonzeros(self, i: int) -> int:
        # entries below the 6-decimal artifact resolution count as zeros
        return int(
            sum((np.abs(c * self.word_vectors[i]) >= 5e-7).sum() for k, c in
                zip(self.support[i], self.coeffs[i]) if k >= 0)
        )

    def rows_dense(self, indices) -> np.ndarray:
        indices = np.asarray(indices)
        d = self.block_dim
        out = np.zeros((len(indices), self.dim))
        sup = self.support[indices]
        cf = self.coeffs[indices]
        wv = self.word_vectors[indices]
        for j in range(sup.shape[1]):
            rows = np.flatnonzero(sup[:, j] >= 0)
            if len(rows):
                cols = sup[rows, j].astype(np.int64)[:, None] * d + np.arange(d)
                out[rows[:, None], cols] = cf[rows, j, None] * wv[rows]
        return out

    def block_dense(self, block: int) -> np.ndarray:
        """Dense (V, d) slice of one cluster block."""
        out = np.zeros((len(self), self.block_dim))
        rows, cols = np.nonzero(self.support == block)
        out[rows] = self.coeffs[rows, cols, None] * self.word_vectors[rows]
        return out

    def to_dense(self) -> np.ndarray:
        return self.rows_dense(np.arange(len(self)))

    def to_csr(self):
        from scipy import sparse

        d = self.block_dim
        rows, cols, vals = [], [], []
        for j in range(self.support.shape[1]):
            idx = np.flatnonzero(self.support[:, j] >= 0)
            if not len(idx):
                continue
            base = self.support[idx, j].astype(np.int64) * d
            rows.append(np.repeat(idx, d))
            cols.append((base[:, None] + np.arange(d)).ravel())
            vals.append((self.coeffs[idx, j, None] * self.word_vectors[idx]).ravel())
        if not rows:
            return sparse.csr_matrix((len(self), self.dim))
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(self), self.dim),
        )

    def sparsity(self) -> float:
        """Fraction of exact zeros over the dense V x K*d layout."""
        nonzeros = sum(self.row_nonzeros(i) for i in range(len(self)))
        return 1.0 - nonzeros / (len(self) * self.dim)


def word_topic_vector(word_vector: np.ndarray, sparse_row: dict[int, float],
                      idf: float, n_clusters: int) -> np.ndarray:
    """Dense K*d word-topic vector for one word.

    Block k holds idf * SP(c_k|w) * wv for each retained cluster k; all other
    blocks are exactly zero. An empty support yields a zero vector and warns.
    """
    word_vector = np.asarray(word_vector, dtype=np.float64)
    d = len(word_vector)
    out = np.zeros(n_clusters * d)
    if not sparse_row:
        warnings.warn("word has no retained cluster assignments; zero vector")
        return out
    for k, p in sparse_row.items():
        if not 0 <= k < n_clusters:
            raise ValueError(f"cluster id {k} out of range")
        out[k * d : (k + 1) * d] = idf * p * word_vector
    return out


def build_table(embeddings: EmbeddingMatrix, assignments: SparseAssignmentTable,
                idf: np.ndarray) -> WordTopicTable:
    """Assemble the block-sparse word-topic table over aligned vocabularies."""
    v = len(embeddings.tokens)
    if len(assignments.support) != v or len(idf) != v:
        raise DataFormatError(
            f"vocabulary sizes disagree: embeddings={v}, "
            f"assignments={len(assignments.support)}, idf={len(idf)}"
        )
    coeffs = assignments.probs * np.asarray(idf, dtype=np.float64)[:, None]
    coeffs = np.where(assignments.support >= 0, coeffs, 0.0)
    return WordTopicTable(
        tokens=list(embeddings.tokens),
        word_vectors=np.ascontiguousarray(embeddings.vectors, dtype=np.float64),
        support=np.ascontiguousarray(assignments.support, dtype=np.int32),
        coeffs=np.ascontiguousarray(coeffs, dtype=np.float64),
        n_clusters=assignments.n_clusters,
        l=assignments.l,
    )


@dataclass
class DocumentVectorSet:
    ids: list[str]
    vectors: np.ndarray           # (N, dim)
    labels: list[tuple[int, ...]] | None = None
    normalized: bool = True


@dataclass
class TimingReport:
    """Mean per-document feature-formation time, sparse path vs dense oracle."""

    n_documents: int
    sparse_seconds_per_doc: float
    dense_seconds_per_doc: float | None
    touched_nonzeros: int

    @property
    def speedup(self) -> float | None:
        if self.dense_seconds_per_doc is None or self.sparse_seconds_per_doc <= 0:
            return None
        return self.dense_seconds_per_doc / self.sparse_seconds_per_doc


def _resolve_tokens(document, table: WordTopicTable) -> tuple[np.ndarray, int]:
    """Map a token-string or index sequence onto table rows; count unknowns."""
    if len(document) and isinstance(document[0], str):
        ids = [table.index[t] for t in document if t in table.index]
        unknown = len(document) - len(ids)
        return np.asarray(ids, dtype=np.int32), unknown
    ids = np.asarray(document, dtype=np.int32)
    return ids, 0


def embed_document(document, table, normalize: bool = True) -> np.ndarray:
    """Sum the word-topic rows of a document's tokens (occurrences count).

    Accepts the block-sparse table or a reduced dense table (anything with a
    ``matrix`` attribute); unknown tokens are skipped and an all-unknown
    document yields a zero vector with a warning. With ``normalize`` the sum
    is scaled to unit L2 norm.
    """
    ids, unknown = _resolve_tokens(document, table)
    dense_rows = getattr(table, "matrix", None)
    out = np.zeros(table.dim if dense_rows is None else dense_rows.shape[1])
    if len(ids) == 0:
        if unknown:
            warnings.warn(f"document has no known tokens ({unknown} skipped)")
        return out
    if dense_rows is None:
        kernels.accumulate_doc(ids, table.support, table.coeffs, table.word_vectors, out)
    else:
        out += dense_rows[ids].sum(axis=0)
    if normalize:
        norm = np.linalg.norm(out)
        if norm > 0:
            out /= norm
    return out


def embed_document_dense(document, dense_table: np.ndarray, index: dict[str, int] | None = None,
                         normalize: bool = True) -> np.ndarray:
    """Brute-force oracle: sum fully dense word-topic rows."""
    if len(document) and isinstance(document[0], str):
        ids = np.asarray([index[t] for t in document if t in index], dtype=np.int64)
    else:
        ids = np.asarray(document, dtype=np.int64)
    out = dense_table[ids].sum(axis=0) if len(ids) else np.zeros(dense_table.shape[1])
    if normalize:
        norm = np.linalg.norm(out)
        if norm > 0:
            out = out / norm
    return out


def embed_corpus(documents, table: WordTopicTable, normalize: bool = True,
                 ids: list[str] | None = None, labels=None,
                 time_dense_oracle: bool = False,
                 dense_cap_entries: int = 50_000_000) -> tuple[DocumentVectorSet, TimingReport]:
    """Embed every document, timing the sparse path.

    With ``time_dense_oracle`` the dense table is materialized (when its entry
    count stays under ``dense_cap_entries``) and the brute-force path is timed
    over the same documents for the complexity report.
    """
    n = len(documents)
    dense_rows = getattr(table, "matrix", None)
    width = table.dim if dense_rows is None else dense_rows.shape[1]
    vectors = np.zeros((n, width))
    touched = 0
    resolved = [_resolve_tokens(doc, table)[0] for doc in documents]
    # accumulate into one warm buffer so the timer sees feature formation,
    # not first-touch page faults on the output matrix
    buf = np.zeros(width)
    sparse_elapsed = 0.0
    for i, ids_row in enumerate(resolved):
        if not len(ids_row):
            continue
        if dense_rows is None:
            buf[:] = 0.0
            t0 = time.perf_counter()
            touched += kernels.accumulate_doc(
                ids_row, table.support, table.coeffs, table.word_vectors, buf
            )
            sparse_elapsed += time.perf_counter() - t0
            vectors[i] = buf
        else:
            vectors[i] = dense_rows[ids_row].sum(axis=0)
            touched += int(np.count_nonzero(dense_rows[ids_row]))

    dense_per_doc = None
    if time_dense_oracle and dense_rows is None:
        if len(table) * table.dim <= dense_cap_entries:
            dense = table.to_dense()
            t1 = time.perf_counter()
            for ids_row in resolved:
                if len(ids_row):
                    dense[ids_row].sum(axis=0)
            dense_per_doc = (time.perf_counter() - t1) / max(n, 1)
        else:
            warnings.warn("dense oracle skipped: table exceeds the entry cap")

    if normalize:
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        np.divide(vectors, norms, out=vectors, where=norms > 0)

    doc_ids = ids if ids is not None else [str(i) for i in range(n)]
    report = TimingReport(
        n_documents=n,
        sparse_seconds_per_doc=sparse_elapsed / max(n, 1),
        dense_seconds_per_doc=dense_per_doc,
        touched_nonzeros=touched,
    )
    return DocumentVectorSet(ids=doc_ids, vectors=vectors, labels=labels,
                             normalized=normalize), report


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_WTV_HEADER = "word-topic-table v1"
_DV_HEADER = "docvecs v1"


def save_table(table: WordTopicTable, path) -> None:
    """One line per word: token then index:value pairs over the K*d layout."""
    d = table.block_dim
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_WTV_HEADER} {len(table)} {table.n_clusters} {d} {table.l}\n")
        for i, token in enumerate(table.tokens):
            parts = [token]
            for k, c in zip(table.support[i], table.coeffs[i]):
                if k < 0:
                    continue
                base = k * d
                parts.extend(
                    f"{base + j}:{c * table.word_vectors[i, j]:.6f}" for j in range(d)
                )
            fh.write(" ".join(parts) + "\n")


def load_table_dense(path) -> tuple[np.ndarray, list[str]]:
    """Read a word-topic table file into a dense matrix (test/oracle use)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != _WTV_HEADER.split():
            raise DataFormatError(f"{path}: not a word-topic table file")
        v, k, d = int(header[2]), int(header[3]), int(header[4])
        dense = np.zeros((v, k * d))
        tokens = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            tokens.append(parts[0])
            row = lineno - 2
            for pair in parts[1:]:
                idx, val = pair.split(":")
                dense[row, int(idx)] = float(val)
    return dense, tokens


def save_docvecs(docs: DocumentVectorSet, path, sparse: bool = False) -> None:
    """Document vectors, dense values or index:value pairs per the header flag."""
    mode = "sparse" if sparse else "dense"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_DV_HEADER} {mode} {len(docs.ids)} {docs.vectors.shape[1]}\n")
        for doc_id, row in zip(docs.ids, docs.vectors):
            if sparse:
                body = " ".join(f"{j}:{row[j]:.6f}" for j in np.flatnonzero(row))
            else:
                body = " ".join(f"{x:.6f}" for x in row)
            fh.write(f"{doc_id} {body}".rstrip() + "\n")


def load_docvecs(path) -> DocumentVectorSet:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != _DV_HEADER.split():
            raise DataFormatError(f"{path}: not a document vector file")
        mode, n, dim = header[2], int(header[3]), int(header[4])
        ids = []
        vectors = np.zeros((n, dim))
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            row = lineno - 2
            if row >= n:
                raise DataFormatError(f"{path}:{lineno}: more rows than header declares")
            ids.append(parts[0])
            if mode == "sparse":
                for pair in parts[1:]:
                    if pair:
                        j, val = pair.split(":")
                        vectors[row, int(j)] = float(val)
            else:
                if len(parts) != dim + 1:
                    raise DataFormatError(f"{path}:{lineno}: expected {dim} values")
                vectors[row] = [float(x) for x in parts[1:]]
    if len(ids) != n:
        raise DataFormatError(f"{path}: header declares {n} rows, found {len(ids)}")
    return DocumentVectorSet(ids=ids, vectors=vectors)
