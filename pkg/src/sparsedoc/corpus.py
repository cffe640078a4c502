"""Corpus ingestion: tokenization, vocabulary construction and idf weights."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError

# Compact english stopword list, enough for the usual cleanup of news-style text.
DEFAULT_STOPWORDS = frozenset(
    """
    a about above after again all also am an and any are as at be because been
    before being below between both but by can did do does doing down during
    each few for from further had has have having he her here hers him his how
    i if in into is it its itself just me more most my myself no nor not now of
    off on once only or other our ours out over own same she should so some
    such than that the their theirs them then there these they this those
    through to too under until up very was we were what when where which while
    who whom why will with you your yours
    """.split()
)

# Unicode alphanumeric runs, underscores excluded.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Longest suffix first; bare "s" is skipped for "ss" endings so that stemming
# reaches a fixpoint (tokenize must be idempotent on its own output).
_SUFFIX_RULES = (("sses", "ss"), ("ies", "y"), ("ing", ""), ("ed", ""), ("es", ""), ("s", ""))
_MIN_STEM = 3


def _stem(token: str) -> str:
    while True:
        for suffix, repl in _SUFFIX_RULES:
            if not token.endswith(suffix):
                continue
            if suffix == "s" and token.endswith("ss"):
                continue
            candidate = token[: -len(suffix)] + repl
            if len(candidate) >= _MIN_STEM and candidate != token:
                token = candidate
                break
        else:
            return token


def tokenize(text: str, stopwords: frozenset[str] | None = None, stem: bool = False) -> list[str]:
    """Lowercase, strip punctuation and split ``text`` into tokens.

    ``stopwords`` is the removal list (None keeps everything). Empty text
    yields an empty list. Deterministic for fixed options.
    """
    tokens = _TOKEN_RE.findall(text.lower())
    if stem:
        tokens = [_stem(t) for t in tokens]
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tokens


@dataclass
class Document:
    """One document: stable id, label indices, token strings, split marker."""

    doc_id: str
    labels: tuple[int, ...]
    tokens: list[str]
    split: str  # "train" | "test"


@dataclass
class Vocabulary:
    """Token/index maps with corpus frequency, document frequency and N."""

    tokens: list[str]
    frequency: np.ndarray       # int64, corpus term counts
    doc_frequency: np.ndarray   # int64, df(w)
    n_documents: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index


def build_vocabulary(token_docs, min_frequency: int = 1) -> Vocabulary:
    """Build a Vocabulary over an iterable of token lists.

    Tokens with corpus frequency below ``min_frequency`` are dropped. Indices
    are assigned in descending frequency order, ties broken lexicographically,
    so the vocabulary is byte-stable across runs.
    """
    if min_frequency < 1:
        raise ValueError("min_frequency must be >= 1")
    freq = Counter()
    df = Counter()
    n_docs = 0
    for tokens in token_docs:
        n_docs += 1
        freq.update(tokens)
        df.update(set(tokens))
    kept = sorted((t for t, c in freq.items() if c >= min_frequency), key=lambda t: (-freq[t], t))
    if not kept:
        raise DataFormatError(
            f"no token reaches min_frequency={min_frequency} over {n_docs} documents"
        )
    return Vocabulary(
        tokens=kept,
        frequency=np.array([freq[t] for t in kept], dtype=np.int64),
        doc_frequency=np.array([df[t] for t in kept], dtype=np.int64),
        n_documents=n_docs,
    )


def compute_idf(vocab: Vocabulary) -> np.ndarray:
    """idf(w) = ln(N / df(w)), vocabulary aligned."""
    if vocab.n_documents < 1:
        raise ValueError("vocabulary built over an empty corpus")
    return np.log(vocab.n_documents / vocab.doc_frequency.astype(np.float64))


def index_documents(documents: list[Document], vocab: Vocabulary) -> list[np.ndarray]:
    """Map token strings to int32 index arrays, dropping out-of-vocabulary tokens."""
    index = vocab.index
    return [
        np.fromiter((index[t] for t in doc.tokens if t in index), dtype=np.int32)
        for doc in documents
    ]


# ---------------------------------------------------------------------------
# Dataset loading
# ---------------------------------------------------------------------------

def load_dataset(
    path,
    fmt: str,
    stopwords: frozenset[str] | None = DEFAULT_STOPWORDS,
    stem: bool = False,
) -> tuple[list[Document], list[str]]:
    """Load a labeled corpus from ``path``.

    ``fmt`` is "newsgroup-dirs" (train/ and test/ roots with one directory per
    class, one UTF-8 file per document) or "multilabel-tsv" (train.tsv and
    test.tsv, one document per line: id TAB comma-separated-labels TAB text;
    a single .tsv file is treated as all-train). Returns the documents plus
    label names in a stable (sorted) order.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"dataset path does not exist: {path}")
    if fmt == "newsgroup-dirs":
        return _load_newsgroup_dirs(path, stopwords, stem)
    if fmt == "multilabel-tsv":
        return _load_multilabel_tsv(path, stopwords, stem)
    raise DataFormatError(f"unknown dataset format: {fmt!r}")


def _read_text(fp: Path) -> str:
    try:
        return fp.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"file is not valid UTF-8: {fp}") from exc


def _load_newsgroup_dirs(root, stopwords, stem):
    splits = [s for s in ("train", "test") if (root / s).is_dir()]
    if not splits:
        raise DataFormatError(f"newsgroup-dirs root has no train/ or test/ directory: {root}")
    class_names = sorted({d.name for s in splits for d in (root / s).iterdir() if d.is_dir()})
    if not class_names:
        raise DataFormatError(f"no class directories under {root}")
    class_index = {c: i for i, c in enumerate(class_names)}
    documents = []
    for split in splits:
        for class_name in class_names:
            class_dir = root / split / class_name
            if not class_dir.is_dir():
                continue
            for fp in sorted(class_dir.iterdir()):
                if not fp.is_file():
                    raise DataFormatError(f"unexpected non-file entry: {fp}")
                documents.append(
                    Document(
                        doc_id=f"{split}/{class_name}/{fp.name}",
                        labels=(class_index[class_name],),
                        tokens=tokenize(_read_text(fp), stopwords=stopwords, stem=stem),
                        split=split,
                    )
                )
    return documents, class_names


def _parse_tsv_rows(fp: Path):
    for lineno, line in enumerate(_read_text(fp).splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataFormatError(
                f"{fp}:{lineno}: expected 3 tab-separated fields (id, labels, text), got {len(parts)}"
            )
        doc_id, label_field, text = parts
        if not doc_id:
            raise DataFormatError(f"{fp}:{lineno}: empty document id")
        labels = [l for l in label_field.split(",") if l]
        yield doc_id, labels, text


def _load_multilabel_tsv(path, stopwords, stem):
    if path.is_dir():
        files = [(s, path / f"{s}.tsv") for s in ("train", "test") if (path / f"{s}.tsv").is_file()]
        if not files:
            raise DataFormatError(f"no train.tsv or test.tsv under {path}")
    else:
        files = [("train", path)]
    rows = [(split, *row) for split, fp in files for row in _parse_tsv_rows(fp)]
    label_names = sorted({l for _, _, labels, _ in rows for l in labels})
    label_index = {l: i for i, l in enumerate(label_names)}
    documents = [
        Document(
            doc_id=doc_id,
            labels=tuple(sorted(label_index[l] for l in labels)),
            tokens=tokenize(text, stopwords=stopwords, stem=stem),
            split=split,
        )
        for split, doc_id, labels, text in rows
    ]
    return documents, label_names


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_vocabulary(vocab: Vocabulary, idf: np.ndarray, path) -> None:
    """One line per token: token, frequency, df, idf at 6 decimal places."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, token in enumerate(vocab.tokens):
            fh.write(f"{token} {vocab.frequency[i]} {vocab.doc_frequency[i]} {idf[i]:.6f}\n")


def load_vocabulary(path) -> tuple[Vocabulary, np.ndarray]:
    tokens, freqs, dfs, idfs = [], [], [], []
    path = Path(path)
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        parts = line.split(" ")
        if len(parts) != 4:
            raise DataFormatError(f"{path}:{lineno}: expected 'token freq df idf'")
        tokens.append(parts[0])
        freqs.append(int(parts[1]))
        dfs.append(int(parts[2]))
        idfs.append(float(parts[3]))
    if not tokens:
        raise DataFormatError(f"{path}: empty vocabulary file")
    # N is not stored explicitly; recover it from idf = ln(N/df).
    n_documents = max(int(round(df * math.exp(idf))) for df, idf in zip(dfs, idfs))
    vocab = Vocabulary(
        tokens=tokens,
        frequency=np.array(freqs, dtype=np.int64),
        doc_frequency=np.array(dfs, dtype=np.int64),
        n_documents=n_documents,
    )
    return vocab, np.array(idfs, dtype=np.float64)


def save_corpus(documents: list[Document], corpus_path, meta_path) -> None:
    """Write tokens (one document per line) plus an id/split/labels sidecar."""
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for doc in documents:
            fh.write(" ".join(doc.tokens) + "\n")
    with open(meta_path, "w", encoding="utf-8") as fh:
        for doc in documents:
            labels = ",".join(str(l) for l in doc.labels)
            fh.write(f"{doc.doc_id}\t{doc.split}\t{labels}\n")


def load_corpus(corpus_path, meta_path) -> list[Document]:
    token_lines = _read_text(Path(corpus_path)).splitlines()
    meta_lines = _read_text(Path(meta_path)).splitlines()
    if len(token_lines) != len(meta_lines):
        raise DataFormatError(
            f"{corpus_path} has {len(token_lines)} documents but {meta_path} has {len(meta_lines)}"
        )
    documents = []
    for lineno, (tok_line, meta_line) in enumerate(zip(token_lines, meta_lines), start=1):
        parts = meta_line.split("\t")
        if len(parts) != 3:
            raise DataFormatError(f"{meta_path}:{lineno}: expected 'id\\tsplit\\tlabels'")
        doc_id, split, label_field = parts
        labels = tuple(int(l) for l in label_field.split(",") if l)
        documents.append(
            Document(doc_id=doc_id, labels=labels, tokens=tok_line.split(), split=split)
        )
    return documents


def save_labels(label_names: list[str], path) -> None:
    Path(path).write_text("".join(n + "\n" for n in label_names), encoding="utf-8")


def load_labels(path) -> list[str]:
    return _read_text(Path(path)).splitlines()
