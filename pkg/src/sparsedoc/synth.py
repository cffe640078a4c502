"""Synthetic labeled corpus generator used as the shipped test fixture.

Documents are built from disjoint per-topic vocabularies, a shared pool of
uniform-background filler tokens (the planted stopwords), and planted
polysemous words that occur in exactly two topics so a context-based sense
inducer must split them. An optional long-tail pool scales the vocabulary up
for size-sensitive checks. Output can be materialized in either dataset
layout the loader understands.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import Document


@dataclass
class SynthSpec:
    n_topics: int = 3
    docs_per_topic: int = 100
    topic_vocab: int = 50
    doc_len_min: int = 150
    doc_len_max: int = 250
    n_stopwords: int = 20
    stopword_rate: float = 0.4
    n_polysemous: int = 3
    poly_doc_rate: float = 0.3  # fraction of documents carrying one poly word
    poly_burst_min: int = 4     # occurrences per carrying document
    poly_burst_max: int = 8
    test_fraction: float = 0.25
    extra_vocab: int = 0
    extra_rate: float = 0.1
    multilabel: bool = False
    aux_rate: float = 0.4
    seed: int = 7


def _topic_words(spec: SynthSpec) -> list[list[str]]:
    return [[f"t{t}w{i}" for i in range(spec.topic_vocab)] for t in range(spec.n_topics)]


def generate(spec: SynthSpec) -> tuple[list[Document], list[str], dict]:
    """Build documents, label names, and a metadata record of what was planted."""
    rng = np.random.default_rng(spec.seed)
    topics = _topic_words(spec)
    stopwords = [f"filler{j}" for j in range(spec.n_stopwords)]
    poly = [f"poly{j}" for j in range(spec.n_polysemous)]
    poly_topics = {w: (j % spec.n_topics, (j + 1) % spec.n_topics) for j, w in enumerate(poly)}
    extra_pool = [f"rare{i}" for i in range(spec.extra_vocab)]

    label_names = [f"topic{t}" for t in range(spec.n_topics)]
    if spec.multilabel:
        label_names = label_names + ["auxeven", "auxodd"]

    documents = []
    n_total = spec.n_topics * spec.docs_per_topic
    test_every = max(int(round(1.0 / spec.test_fraction)), 2) if spec.test_fraction > 0 else 0
    extra_cursor = 0
    extra_rate = spec.extra_rate if spec.extra_vocab else 0.0
    for t in range(spec.n_topics):
        topic_polys = [w for w, ts in poly_topics.items() if t in ts]
        for i in range(spec.docs_per_topic):
            length = int(rng.integers(spec.doc_len_min, spec.doc_len_max + 1))
            tokens = []
            for _ in range(length):
                u = rng.random()
                if u < spec.stopword_rate:
                    tokens.append(stopwords[rng.integers(spec.n_stopwords)])
                elif spec.extra_vocab and u < spec.stopword_rate + extra_rate:
                    # cycle first so every long-tail token occurs at least once
                    if extra_cursor < spec.extra_vocab:
                        tokens.append(extra_pool[extra_cursor])
                        extra_cursor += 1
                    else:
                        tokens.append(extra_pool[rng.integers(spec.extra_vocab)])
                else:
                    tokens.append(topics[t][rng.integers(spec.topic_vocab)])
            if topic_polys and rng.random() < spec.poly_doc_rate:
                # burst of one polysemous word, header-style: frequent within
                # few documents, so it rises in tf-idf rather than frequency
                word = topic_polys[rng.integers(len(topic_polys))]
                burst = int(rng.integers(spec.poly_burst_min, spec.poly_burst_max + 1))
                for pos in sorted(rng.integers(0, len(tokens) + 1, size=burst), reverse=True):
                    tokens.insert(int(pos), word)
            doc_index = t * spec.docs_per_topic + i
            split = "test" if test_every and doc_index % test_every == test_every - 1 else "train"
            labels = [t]
            if spec.multilabel and rng.random() < spec.aux_rate:
                aux = spec.n_topics + (doc_index % 2)
                labels.append(aux)
                tokens.extend(["auxeven" if doc_index % 2 == 0 else "auxodd"] * 3)
            documents.append(
                Document(
                    doc_id=f"synth{doc_index:05d}",
                    labels=tuple(sorted(labels)),
                    tokens=tokens,
                    split=split,
                )
            )
    meta = {
        "stopwords": stopwords,
        "polysemous": {w: list(ts) for w, ts in poly_topics.items()},
        "topic_vocab": [w for words in topics for w in words],
        "n_documents": n_total,
        "spec": asdict(spec),
    }
    return documents, label_names, meta


def write_dataset(spec: SynthSpec, out_dir, fmt: str = "newsgroup-dirs") -> dict:
    """Materialize the generated corpus in a loader-compatible layout."""
    out_dir = Path(out_dir)
    documents, label_names, meta = generate(spec)
    if fmt == "newsgroup-dirs":
        for doc in documents:
            class_dir = out_dir / doc.split / label_names[doc.labels[0]]
            class_dir.mkdir(parents=True, exist_ok=True)
            (class_dir / f"{doc.doc_id}.txt").write_text(
                " ".join(doc.tokens) + "\n", encoding="utf-8"
            )
    elif fmt == "multilabel-tsv":
        out_dir.mkdir(parents=True, exist_ok=True)
        handles = {}
        try:
            for doc in documents:
                if doc.split not in handles:
                    handles[doc.split] = open(out_dir / f"{doc.split}.tsv", "w", encoding="utf-8")
                labels = ",".join(label_names[l] for l in doc.labels)
                handles[doc.split].write(f"{doc.doc_id}\t{labels}\t{' '.join(doc.tokens)}\n")
        finally:
            for fh in handles.values():
                fh.close()
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    (out_dir / "synth_meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return meta
