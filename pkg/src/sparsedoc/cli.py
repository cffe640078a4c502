"""Pipeline orchestration: stage subcommands over a working directory.

Every stage reads its upstream artifacts from the workdir, writes its own,
and records content hashes, wall-clock timing and summary statistics in
manifest.json. A stage is skipped when its configuration fingerprint, input
hashes and output hashes all match the manifest. Ablation switches reproduce
the degraded pipeline variants (document-level thresholding instead of
assignment sparsification, plain skip-gram instead of corruption training,
no sense annotation) and the ablate subcommand runs all five combinations.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import classify, clustering, composition, corpus, embeddings, reduction, sense, synth
from .errors import DataFormatError, NumericError

STAGES = (
    "preprocess",
    "induce-senses",
    "annotate",
    "train-embeddings",
    "cluster",
    "compose",
    "reduce",
    "embed-docs",
    "train-classifier",
    "evaluate",
)


@dataclass
class PipelineConfig:
    data_path: str = ""
    data_format: str = "newsgroup-dirs"
    remove_stopwords: bool = True
    stem: bool = False
    min_count: int = 20
    candidates: int = 5000
    sense_window: int = 5
    max_senses: int = 3
    min_share: float = 0.1
    merge_threshold: float = 0.85
    dim: int = 200
    window: int = 10
    negatives: int = 10
    epochs: int = 10
    learning_rate: float = 0.025
    keep_rate: float = 0.3
    n_clusters: int = 60
    reg_eps: float = 1e-4
    gmm_max_iter: int = 100
    gmm_tol: float = 1e-4
    l: int = 3
    select_l: str = ""          # e.g. "3,5,7" to cross-validate before training
    cv_folds: int = 5
    reducer: str = "none"       # none | random-projection | pca-subspace | autoencoder
    out_dim: int = 2000
    ae_epochs: int = 50
    ae_batch: int = 64
    normalize: bool = True
    classifier_loss: str = "auto"
    classifier_reg: float = 1e-4
    classifier_epochs: int = 200
    classifier_lr: float = 0.5
    seed: int = 1
    no_multisense: bool = False
    no_doc2vecc: bool = False
    doc_level_sparsity: bool = False
    doc_threshold: float = 0.04
    dense_oracle_cap: int = 50_000_000
    deterministic: bool = False

    def fingerprint(self, keys) -> str:
        payload = {k: getattr(self, k) for k in sorted(keys)}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


_BOOL_FIELDS = {f.name for f in fields(PipelineConfig) if f.type == "bool"}


def _coerce(name: str, value: str):
    proto = {f.name: f for f in fields(PipelineConfig)}.get(name)
    if proto is None:
        raise DataFormatError(f"unknown config key: {name}")
    if name in _BOOL_FIELDS:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise DataFormatError(f"config key {name} expects a boolean, got {value!r}")
    kind = type(getattr(PipelineConfig(), name))
    try:
        return kind(value)
    except ValueError as exc:
        raise DataFormatError(f"config key {name} expects {kind.__name__}, got {value!r}") from exc


def load_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), value.strip())
    return values


# ---------------------------------------------------------------------------
# Workdir artifacts and the manifest
# ---------------------------------------------------------------------------

class Workdir:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def __getattr__(self, name):
        files = {
            "corpus_txt": "corpus.txt",
            "docs_tsv": "docs.tsv",
            "labels_txt": "labels.txt",
            "vocab_txt": "vocab.txt",
            "base_vectors_txt": "base_vectors.txt",
            "inventory_txt": "inventory.txt",
            "corpus_annotated_txt": "corpus_annotated.txt",
            "vocab_annotated_txt": "vocab_annotated.txt",
            "vectors_txt": "vectors.txt",
            "gmm_txt": "gmm.txt",
            "posteriors_txt": "posteriors.txt",
            "assign_sparse_txt": "assign_sparse.txt",
            "wtv_txt": "wtv.txt",
            "reducer_npz": "reducer.npz",
            "rwtv_txt": "rwtv.txt",
            "docvecs_train_txt": "docvecs_train.txt",
            "docvecs_test_txt": "docvecs_test.txt",
            "model_txt": "model.txt",
            "metrics_txt": "metrics.txt",
            "metrics_json": "metrics.json",
            "manifest_json": "manifest.json",
            "ablation_txt": "ablation.txt",
        }
        if name in files:
            return self.root / files[name]
        raise AttributeError(name)


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _hash_tree(path: Path) -> str:
    path = Path(path)
    if path.is_file():
        return _hash_file(path)
    h = hashlib.sha256()
    for fp in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(str(fp.relative_to(path)).encode())
        h.update(_hash_file(fp).encode())
    return h.hexdigest()[:16]


class Manifest:
    def __init__(self, path: Path):
        self.path = path
        self.data = {"stages": {}}
        if path.exists():
            self.data = json.loads(path.read_text(encoding="utf-8"))

    def save(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True), encoding="utf-8")

    def record(self, stage, config_fp, inputs, outputs, elapsed, stats):
        self.data["stages"][stage] = {
            "config": config_fp,
            "inputs": {str(p): _hash_tree(Path(p)) for p in inputs},
            "outputs": {str(p): _hash_file(Path(p)) for p in outputs},
            "elapsed_s": elapsed,
            "stats": stats,
        }
        self.save()

    def up_to_date(self, stage, config_fp, inputs, outputs) -> bool:
        entry = self.data["stages"].get(stage)
        if not entry or entry["config"] != config_fp:
            return False
        for p in map(str, inputs):
            if p not in entry["inputs"] or not Path(p).exists():
                return False
            if _hash_tree(Path(p)) != entry["inputs"][p]:
                return False
        for p in map(str, outputs):
            if p not in entry["outputs"] or not Path(p).exists():
                return False
            if _hash_file(Path(p)) != entry["outputs"][p]:
                return False
        return True

    def stats(self, stage) -> dict:
        entry = self.data["stages"].get(stage)
        if not entry:
            raise DataFormatError(f"manifest has no record of stage {stage!r}; run it first")
        return entry["stats"]

    def elapsed(self, stage) -> float:
        entry = self.data["stages"].get(stage)
        if not entry:
            raise DataFormatError(f"manifest has no record of stage {stage!r}; run it first")
        return entry["elapsed_s"]


# ---------------------------------------------------------------------------
# Stage implementations
# ---------------------------------------------------------------------------

def _require(stage_needed: str, *paths):
    for p in paths:
        if not Path(p).exists():
            raise DataFormatError(
                f"missing upstream artifact {Path(p).name}; run `{stage_needed}` first"
            )


def _embedding_config(cfg: PipelineConfig) -> embeddings.EmbeddingConfig:
    return embeddings.EmbeddingConfig(
        dim=cfg.dim,
        window=cfg.window,
        negatives=cfg.negatives,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        keep_rate=cfg.keep_rate,
        seed=cfg.seed,
    )


def _load_indexed(wd: Workdir):
    documents = corpus.load_corpus(wd.corpus_annotated_txt, wd.docs_tsv)
    vocab, idf = corpus.load_vocabulary(wd.vocab_annotated_txt)
    indexed = corpus.index_documents(documents, vocab)
    return documents, vocab, idf, indexed


def stage_preprocess(cfg: PipelineConfig, wd: Workdir) -> dict:
    if not cfg.data_path:
        raise DataFormatError("data_path is not configured")
    stopwords = corpus.DEFAULT_STOPWORDS if cfg.remove_stopwords else None
    documents, label_names = corpus.load_dataset(
        cfg.data_path, cfg.data_format, stopwords=stopwords, stem=cfg.stem
    )
    vocab = corpus.build_vocabulary((d.tokens for d in documents), cfg.min_count)
    idf = corpus.compute_idf(vocab)
    corpus.save_corpus(documents, wd.corpus_txt, wd.docs_tsv)
    corpus.save_labels(label_names, wd.labels_txt)
    corpus.save_vocabulary(vocab, idf, wd.vocab_txt)
    return {
        "documents": len(documents),
        "labels": len(label_names),
        "vocabulary": len(vocab),
    }


def stage_induce_senses(cfg: PipelineConfig, wd: Workdir) -> dict:
    _require("preprocess", wd.corpus_txt, wd.docs_tsv, wd.vocab_txt)
    documents = corpus.load_corpus(wd.corpus_txt, wd.docs_tsv)
    vocab, idf = corpus.load_vocabulary(wd.vocab_txt)
    if cfg.no_multisense:
        inventory = sense.SenseInventory(senses={}, dim=cfg.dim, window=cfg.sense_window)
        embeddings.save_vectors([], wd.base_vectors_txt, matrix=np.zeros((0, cfg.dim)))
        sense.save_inventory(inventory, wd.inventory_txt)
        return {"candidates": 0, "multi_sense_words": 0, "ablated": True}
    indexed = corpus.index_documents(documents, vocab)
    base = embeddings.train_sgns(indexed, vocab, _embedding_config(cfg))
    embeddings.save_vectors(base, wd.base_vectors_txt)
    candidates = sense.select_candidates(vocab, idf, cfg.candidates)
    inventory = sense.induce_senses(
        documents,
        base,
        candidates,
        window=cfg.sense_window,
        max_senses=cfg.max_senses,
        min_share=cfg.min_share,
        merge_threshold=cfg.merge_threshold,
        seed=cfg.seed,
    )
    sense.save_inventory(inventory, wd.inventory_txt)
    return {
        "candidates": len(candidates),
        "multi_sense_words": len(inventory.multi_sense_words()),
    }


def stage_annotate(cfg: PipelineConfig, wd: Workdir) -> dict:
    _require("preprocess", wd.corpus_txt, wd.docs_tsv)
    _require("induce-senses", wd.inventory_txt)
    documents = corpus.load_corpus(wd.corpus_txt, wd.docs_tsv)
    if cfg.no_multisense:
        annotated = documents
        suffixed = 0
    else:
        inventory = sense.load_inventory(wd.inventory_txt)
        base = embeddings.load_vectors(wd.base_vectors_txt)
        annotated = sense.annotate(documents, inventory, base, window=cfg.sense_window)
        suffixed = sum(1 for d in annotated for t in d.tokens if "#" in t)
    corpus.save_corpus(annotated, wd.corpus_annotated_txt, wd.docs_tsv)
    vocab_ann = corpus.build_vocabulary((d.tokens for d in annotated), min_frequency=1)
    idf_ann = corpus.compute_idf(vocab_ann)
    corpus.save_vocabulary(vocab_ann, idf_ann, wd.vocab_annotated_txt)
    return {"suffixed_tokens": suffixed, "annotated_vocabulary": len(vocab_ann)}


def stage_train_embeddings(cfg: PipelineConfig, wd: Workdir) -> dict:
    _require("annotate", wd.corpus_annotated_txt, wd.vocab_annotated_txt)
    _, vocab, _, indexed = _load_indexed(wd)
    trainer = embeddings.train_sgns if cfg.no_doc2vecc else embeddings.train_doc2vecc
    matrix = trainer(indexed, vocab, _embedding_config(cfg))
    embeddings.save_vectors(matrix, wd.vectors_txt)
    return {"method": matrix.method, "vocabulary": len(vocab), "dim": cfg.dim}


def stage_cluster(cfg: PipelineConfig, wd: Workdir) -> dict:
    _require("train-embeddings", wd.vectors_txt)
    emb = embeddings.load_vectors(wd.vectors_txt)
    t0 = time.perf_counter()
    model = clustering.fit_gmm(
        emb.vectors,
        n_components=cfg.n_clusters,
        seed=cfg.seed,
        reg_eps=cfg.reg_eps,
        max_iter=cfg.gmm_max_iter,
        tol=cfg.gmm_tol,
    )
    fit_seconds = time.perf_counter() - t0
    posteriors = clustering.posterior(model, emb.vectors)
    clustering.save_gmm(model, wd.gmm_txt)
    _save_posteriors(posteriors, emb.tokens, wd.posteriors_txt)
    l = cfg.n_clusters if cfg.doc_level_sparsity else cfg.l
    table = clustering.sparsify(posteriors, l)
    clustering.save_sparse_assignments(table, emb.tokens, wd.assign_sparse_txt)
    stats = clustering.assignment_stats(posteriors)
    return {
        "fit_seconds": fit_seconds,
        "n_iter": model.n_iter,
        "converged": model.converged,
        "l": l,
        "fraction_below_threshold": stats["fraction_below"],
        "mean_below_per_word": stats["mean_below_per_word"],
        "variance_below_per_word": stats["variance_below_per_word"],
    }


def _save_posteriors(p: np.ndarray, tokens, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"posteriors v1 {p.shape[0]} {p.shape[1]}\n")
        for token, row in zip(tokens, p):
            fh.write(token + " " + " ".join(f"{x:.9f}" for x in row) + "\n")


def _load_posteriors(path) -> tuple[np.ndarray, list[str]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != ["posteriors", "v1"]:
            raise DataFormatError(f"{path}: not a posteriors file")
        v, k = int(header[2]), int(header[3])
        tokens = []
        out = np.zeros((v, k))
        for i, line in enumerate(fh):
            parts = line.split()
            tokens.append(parts[0])
            out[i] = [float(x) for x in parts[1:]]
    return out, tokens


def stage_compose(cfg: PipelineConfig, wd: Workdir) -> dict:
    _require("cluster", wd.assign_sparse_txt)
    _require("train-embeddings", wd.vectors_txt)
    _require("annotate", wd.vocab_annotated_txt)
    emb = embeddings.load_vectors(wd.vectors_txt)
    assignments, _ = clustering.load_sparse_assignments(wd.assign_sparse_txt)
    _, idf = corpus.load_vocabulary(wd.vocab_annotated_txt)
    table = composition.build_table(emb, assignments, idf)
    composition.save_table(table, wd.wtv_txt)
    return {
        "vocabulary": len(table),
        "wtv_dim": table.dim,
        "wtv_sparsity": table.sparsity(),
        "wtv_bytes": Path(wd.wtv_txt).stat().st_size,
        "l": table.l,
    }


def stage_reduce(cfg: PipelineConfig, wd: Workdir) -> dict:
    _require("compose", wd.wtv_txt)
    if cfg.reducer == "none":
        raise DataFormatError("reduce stage requires reducer != none")
    table = _rebuild_table(cfg, wd)
    if cfg.reducer == "random-projection":
        model = reduction.fit_random_projection(table.dim, cfg.out_dim, seed=cfg.seed)
    elif cfg.reducer == "pca-subspace":
        model = reduction.fit_pca_subspace(table, cfg.out_dim)
    elif cfg.reducer == "autoencoder":
        ae_cfg = reduction.AeTrainConfig(
            epochs=cfg.ae_epochs, batch_size=cfg.ae_batch, seed=cfg.seed
        )
        model = reduction.train_autoencoder(table, cfg.out_dim, ae_cfg)
    else:
        raise DataFormatError(f"unknown reducer {cfg.reducer!r}")
    reduction.save_reducer(model, wd.reducer_npz)
    reduced = reduction.reduce_table(model, table)
    embeddings.save_vectors(reduced.tokens, wd.rwtv_txt, matrix=reduced.matrix)
    stats = {"variant": cfg.reducer, "in_dim": model.in_dim, "out_dim": model.out_dim}
    if cfg.reducer == "autoencoder":
        stats["final_mse"] = model.loss_history[-1] if model.loss_history else None
    return stats


def _rebuild_table(cfg: PipelineConfig, wd: Workdir) -> composition.WordTopicTable:
    emb = embeddings.load_vectors(wd.vectors_txt)
    assignments, _ = clustering.load_sparse_assignments(wd.assign_sparse_txt)
    _, idf = corpus.load_vocabulary(wd.vocab_annotated_txt)
    return composition.build_table(emb, assignments, idf)


def stage_embed_docs(cfg: PipelineConfig, wd: Workdir) -> dict:
    _require("compose", wd.wtv_txt)
    _require("annotate", wd.corpus_annotated_txt)
    documents = corpus.load_corpus(wd.corpus_annotated_txt, wd.docs_tsv)
    use_reduced = cfg.reducer != "none"
    if use_reduced:
        _require("reduce", wd.rwtv_txt)
        loaded = embeddings.load_vectors(wd.rwtv_txt)
        table = reduction.ReducedTable(tokens=loaded.tokens, matrix=loaded.vectors)
    else:
        table = _rebuild_table(cfg, wd)

    stats = {}
    out = {}
    for split, path in (("train", wd.docvecs_train_txt), ("test", wd.docvecs_test_txt)):
        split_docs = [d for d in documents if d.split == split]
        vecs, timing = composition.embed_corpus(
            [d.tokens for d in split_docs],
            table,
            normalize=False,
            ids=[d.doc_id for d in split_docs],
            labels=[d.labels for d in split_docs],
            time_dense_oracle=(split == "train" and not use_reduced),
            dense_cap_entries=cfg.dense_oracle_cap,
        )
        out[split] = vecs
        if split == "train":
            stats["feature_us_sparse"] = timing.sparse_seconds_per_doc * 1e6
            stats["feature_us_dense"] = (
                timing.dense_seconds_per_doc * 1e6
                if timing.dense_seconds_per_doc is not None
                else None
            )
            stats["touched_nonzeros"] = timing.touched_nonzeros

    if cfg.doc_level_sparsity and not use_reduced:
        train = out["train"].vectors
        avg_max = float(train.max(axis=1).mean()) if len(train) else 0.0
        avg_min = float(train.min(axis=1).mean()) if len(train) else 0.0
        cut = cfg.doc_threshold * (abs(avg_max) + abs(avg_min)) / 2.0
        for split in ("train", "test"):
            v = out[split].vectors
            v[np.abs(v) < cut] = 0.0
        stats["doc_threshold_cut"] = cut

    if cfg.normalize:
        for split in ("train", "test"):
            v = out[split].vectors
            norms = np.linalg.norm(v, axis=1, keepdims=True)
            np.divide(v, norms, out=v, where=norms > 0)

    sparse_fmt = not use_reduced
    for split, path in (("train", wd.docvecs_train_txt), ("test", wd.docvecs_test_txt)):
        composition.save_docvecs(out[split], path, sparse=sparse_fmt)
        stats[f"{split}_documents"] = len(out[split].ids)
    all_vecs = np.vstack([out["train"].vectors, out["test"].vectors])
    stats["dv_sparsity"] = float((all_vecs == 0).mean()) if all_vecs.size else 0.0
    stats["dv_dim"] = int(all_vecs.shape[1]) if all_vecs.size else 0
    return stats


def _split_documents(wd: Workdir):
    documents = corpus.load_corpus(wd.corpus_annotated_txt, wd.docs_tsv)
    return (
        [d for d in documents if d.split == "train"],
        [d for d in documents if d.split == "test"],
    )


def _task_kind(documents) -> str:
    return "multiclass" if all(len(d.labels) == 1 for d in documents) else "multilabel"


def stage_train_classifier(cfg: PipelineConfig, wd: Workdir) -> dict:
    _require("embed-docs", wd.docvecs_train_txt)
    _require("preprocess", wd.labels_txt)
    train_docs, _ = _split_documents(wd)
    label_names = corpus.load_labels(wd.labels_txt)
    vecs = composition.load_docvecs(wd.docvecs_train_txt)
    by_id = {d.doc_id: d for d in train_docs}
    labels = [by_id[i].labels for i in vecs.ids]
    task = _task_kind(train_docs)
    loss = cfg.classifier_loss
    if loss == "auto":
        loss = "hinge" if task == "multiclass" else "logistic"

    stats = {"task": task, "loss": loss}
    if cfg.select_l:
        candidates = tuple(int(x) for x in cfg.select_l.split(",") if x)
        emb = embeddings.load_vectors(wd.vectors_txt)
        posteriors, _ = _load_posteriors(wd.posteriors_txt)
        _, idf = corpus.load_vocabulary(wd.vocab_annotated_txt)
        best, cv_scores = classify.cross_validate_l(
            train_docs,
            emb,
            posteriors,
            idf,
            candidate_l=candidates,
            n_folds=cfg.cv_folds,
            loss=loss,
            reg=cfg.classifier_reg,
            epochs=cfg.classifier_epochs,
            seed=cfg.seed,
            normalize=cfg.normalize,
        )
        stats["selected_l"] = best
        stats["cv_mean_f1"] = {str(l): float(np.mean(s)) for l, s in cv_scores.items()}

    model = classify.train_linear(
        vecs.vectors,
        labels,
        n_labels=len(label_names),
        loss=loss,
        reg=cfg.classifier_reg,
        epochs=cfg.classifier_epochs,
        learning_rate=cfg.classifier_lr,
        seed=cfg.seed,
    )
    classify.save_model(model, wd.model_txt)
    stats["n_labels"] = len(label_names)
    return stats


def stage_evaluate(cfg: PipelineConfig, wd: Workdir) -> dict:
    _require("train-classifier", wd.model_txt)
    _require("embed-docs", wd.docvecs_test_txt)
    _, test_docs = _split_documents(wd)
    if not test_docs:
        raise DataFormatError("no test split documents to evaluate")
    model = classify.load_model(wd.model_txt)
    vecs = composition.load_docvecs(wd.docvecs_test_txt)
    by_id = {d.doc_id: d for d in test_docs}
    truth = [by_id[i].labels for i in vecs.ids]
    scores = classify.predict_scores(model, vecs.vectors)
    if _task_kind(test_docs) == "multiclass":
        preds = np.atleast_2d(scores).argmax(axis=1)
        report = classify.evaluate_multiclass(
            [t[0] for t in truth], preds, n_labels=model.n_labels
        )
    else:
        report = classify.evaluate_multilabel(scores, [set(t) for t in truth])
    classify.save_report(report, wd.metrics_txt, wd.metrics_json)
    return dict(report.values)


_STAGE_FUNCS = {
    "preprocess": stage_preprocess,
    "induce-senses": stage_induce_senses,
    "annotate": stage_annotate,
    "train-embeddings": stage_train_embeddings,
    "cluster": stage_cluster,
    "compose": stage_compose,
    "reduce": stage_reduce,
    "embed-docs": stage_embed_docs,
    "train-classifier": stage_train_classifier,
    "evaluate": stage_evaluate,
}

_COMMON_KEYS = ("seed",)
_STAGE_KEYS = {
    "preprocess": ("data_path", "data_format", "remove_stopwords", "stem", "min_count"),
    "induce-senses": (
        "candidates", "sense_window", "max_senses", "min_share", "merge_threshold",
        "dim", "window", "negatives", "epochs", "learning_rate", "no_multisense",
    ),
    "annotate": ("sense_window", "no_multisense"),
    "train-embeddings": (
        "dim", "window", "negatives", "epochs", "learning_rate", "keep_rate", "no_doc2vecc",
    ),
    "cluster": ("n_clusters", "reg_eps", "gmm_max_iter", "gmm_tol", "l", "doc_level_sparsity"),
    "compose": (),
    "reduce": ("reducer", "out_dim", "ae_epochs", "ae_batch"),
    "embed-docs": (
        "normalize", "reducer", "doc_level_sparsity", "doc_threshold", "dense_oracle_cap",
    ),
    "train-classifier": (
        "classifier_loss", "classifier_reg", "classifier_epochs", "classifier_lr",
        "select_l", "cv_folds", "normalize",
    ),
    "evaluate": ("classifier_loss",),
}

_STAGE_INPUTS = {
    "preprocess": lambda cfg, wd: [cfg.data_path],
    "induce-senses": lambda cfg, wd: [wd.corpus_txt, wd.vocab_txt],
    "annotate": lambda cfg, wd: [wd.corpus_txt, wd.inventory_txt],
    "train-embeddings": lambda cfg, wd: [wd.corpus_annotated_txt, wd.vocab_annotated_txt],
    "cluster": lambda cfg, wd: [wd.vectors_txt],
    "compose": lambda cfg, wd: [wd.vectors_txt, wd.assign_sparse_txt, wd.vocab_annotated_txt],
    "reduce": lambda cfg, wd: [wd.wtv_txt],
    "embed-docs": lambda cfg, wd: [wd.corpus_annotated_txt, wd.wtv_txt]
    + ([wd.rwtv_txt] if cfg.reducer != "none" else []),
    "train-classifier": lambda cfg, wd: [wd.docvecs_train_txt, wd.labels_txt],
    "evaluate": lambda cfg, wd: [wd.model_txt, wd.docvecs_test_txt],
}

_STAGE_OUTPUTS = {
    "preprocess": lambda cfg, wd: [wd.corpus_txt, wd.docs_tsv, wd.labels_txt, wd.vocab_txt],
    "induce-senses": lambda cfg, wd: [wd.base_vectors_txt, wd.inventory_txt],
    "annotate": lambda cfg, wd: [wd.corpus_annotated_txt, wd.vocab_annotated_txt],
    "train-embeddings": lambda cfg, wd: [wd.vectors_txt],
    "cluster": lambda cfg, wd: [wd.gmm_txt, wd.posteriors_txt, wd.assign_sparse_txt],
    "compose": lambda cfg, wd: [wd.wtv_txt],
    "reduce": lambda cfg, wd: [wd.reducer_npz, wd.rwtv_txt],
    "embed-docs": lambda cfg, wd: [wd.docvecs_train_txt, wd.docvecs_test_txt],
    "train-classifier": lambda cfg, wd: [wd.model_txt],
    "evaluate": lambda cfg, wd: [wd.metrics_txt, wd.metrics_json],
}


def run_stage(stage: str, cfg: PipelineConfig, wd: Workdir, force: bool = False) -> dict:
    """Run one stage unless the manifest proves it is current; returns stats."""
    if stage not in _STAGE_FUNCS:
        raise DataFormatError(f"unknown stage {stage!r}")
    manifest = Manifest(wd.manifest_json)
    keys = _COMMON_KEYS + _STAGE_KEYS[stage]
    config_fp = cfg.fingerprint(keys)
    inputs = [p for p in _STAGE_INPUTS[stage](cfg, wd) if str(p)]
    outputs = _STAGE_OUTPUTS[stage](cfg, wd)
    if not force and all(Path(p).exists() for p in inputs) and manifest.up_to_date(
        stage, config_fp, inputs, outputs
    ):
        stats = manifest.stats(stage)
        stats["skipped"] = True
        return stats
    t0 = time.perf_counter()
    stats = _STAGE_FUNCS[stage](cfg, wd)
    elapsed = time.perf_counter() - t0
    manifest.record(stage, config_fp, inputs, outputs, elapsed, stats)
    stats = dict(stats)
    stats["skipped"] = False
    stats["elapsed_s"] = elapsed
    return stats


def run_pipeline(cfg: PipelineConfig, wd: Workdir, force: bool = False) -> dict:
    """Run the standard stage sequence; reduce only when configured."""
    results = {}
    for stage in STAGES:
        if stage == "reduce" and cfg.reducer == "none":
            continue
        results[stage] = run_stage(stage, cfg, wd, force=force)
    return results


# ---------------------------------------------------------------------------
# Ablation suite and complexity report
# ---------------------------------------------------------------------------

ABLATION_ROWS = (
    ("sparsity", {"doc_level_sparsity": True}),
    ("doc2vecc", {"no_doc2vecc": True}),
    ("multisense", {"no_multisense": True}),
    ("all", {"doc_level_sparsity": True, "no_doc2vecc": True, "no_multisense": True}),
    ("none", {}),
)


def run_ablation_suite(cfg: PipelineConfig, wd: Workdir) -> list[dict]:
    """Run the five ablation configurations and collect their macro F1."""
    rows = []
    for name, overrides in ABLATION_ROWS:
        sub_cfg = replace(cfg, **overrides)
        sub_wd = Workdir(wd.root / "ablation" / name)
        run_pipeline(sub_cfg, sub_wd)
        metrics = json.loads(Path(sub_wd.metrics_json).read_text(encoding="utf-8"))
        keys = _COMMON_KEYS + tuple(
            k for stage_keys in _STAGE_KEYS.values() for k in stage_keys
        )
        rows.append(
            {
                "ablation": name,
                "macro_f1": metrics["macro_f1"],
                "config": sub_cfg.fingerprint(sorted(set(keys))),
            }
        )
    with open(wd.ablation_txt, "w", encoding="utf-8") as fh:
        fh.write("ablation\tmacro_f1\tconfig\n")
        for row in rows:
            fh.write(f"{row['ablation']}\t{row['macro_f1']:.6f}\t{row['config']}\n")
    return rows


def complexity_report(wd: Workdir) -> dict:
    """Assemble the time and space summary from manifest instrumentation."""
    manifest = Manifest(wd.manifest_json)
    if not manifest.data["stages"]:
        raise DataFormatError("manifest is empty; run the pipeline first")
    compose_stats = manifest.stats("compose")
    embed_stats = manifest.stats("embed-docs")
    cluster_stats = manifest.stats("cluster")
    report = {
        "vocabulary": compose_stats["vocabulary"],
        "wtv_dim": compose_stats["wtv_dim"],
        "wtv_sparsity_pct": 100.0 * compose_stats["wtv_sparsity"],
        "dv_sparsity_pct": 100.0 * embed_stats["dv_sparsity"],
        "cluster_seconds": cluster_stats["fit_seconds"],
        "feature_us_sparse": embed_stats["feature_us_sparse"],
        "feature_us_dense": embed_stats["feature_us_dense"],
        "wtv_bytes": compose_stats["wtv_bytes"],
    }
    if report["feature_us_dense"]:
        report["feature_speedup"] = report["feature_us_dense"] / report["feature_us_sparse"]
    return report


def format_report(report: dict) -> str:
    lines = [f"{key} {value:.4f}" if isinstance(value, float) else f"{key} {value}"
             for key, value in report.items()]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Command line front end
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="sparsedoc", description=__doc__)
    parser.add_argument("--workdir", default="workdir", help="artifact directory")
    parser.add_argument("--config", default=None, help="key=value configuration file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    parser.add_argument("--force", action="store_true", help="rerun even when cached")
    parser.add_argument("--deterministic", action="store_true",
                        help="limit numeric libraries to one thread")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, help=f"run the {stage} stage")
    sub.add_parser("ablate", help="run the five ablation configurations")
    sub.add_parser("report", help="print the time and space complexity summary")
    synth_p = sub.add_parser("synth-corpus", help="write the bundled synthetic dataset")
    synth_p.add_argument("--out", required=True)
    synth_p.add_argument("--format", default="newsgroup-dirs",
                         choices=["newsgroup-dirs", "multilabel-tsv"])
    synth_p.add_argument("--docs-per-topic", type=int, default=100)
    synth_p.add_argument("--topics", type=int, default=3)
    synth_p.add_argument("--topic-vocab", type=int, default=50)
    synth_p.add_argument("--extra-vocab", type=int, default=0)
    synth_p.add_argument("--seed", type=int, default=7)
    return parser


def _config_from_args(args) -> PipelineConfig:
    values = {}
    if args.config:
        if not Path(args.config).exists():
            raise DataFormatError(f"config file not found: {args.config}")
        values.update(load_config_file(args.config))
    for item in args.set:
        if "=" not in item:
            raise DataFormatError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), value.strip())
    if getattr(args, "deterministic", False):
        values["deterministic"] = True
    return PipelineConfig(**values)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.deterministic:
            try:
                from threadpoolctl import threadpool_limits

                threadpool_limits(1)
            except ImportError:
                pass
        if args.command == "synth-corpus":
            spec = synth.SynthSpec(
                n_topics=args.topics,
                docs_per_topic=args.docs_per_topic,
                topic_vocab=args.topic_vocab,
                extra_vocab=args.extra_vocab,
                multilabel=(args.format == "multilabel-tsv"),
                seed=args.seed,
            )
            meta = synth.write_dataset(spec, args.out, fmt=args.format)
            print(f"wrote {meta['n_documents']} documents to {args.out}")
            return 0

        wd = Workdir(args.workdir)
        cfg = _config_from_args(args)
        if args.command == "ablate":
            rows = run_ablation_suite(cfg, wd)
            for row in rows:
                print(f"{row['ablation']}\t{row['macro_f1']:.6f}\t{row['config']}")
            return 0
        if args.command == "report":
            print(format_report(complexity_report(wd)), end="")
            return 0
        stats = run_stage(args.command, cfg, wd, force=args.force)
        printable = {k: v for k, v in stats.items() if not isinstance(v, dict)}
        print(f"{args.command}: " + json.dumps(printable, sort_keys=True, default=str))
        return 0
    except (DataFormatError, ValueError, OSError) as exc:
        print(f"sparsedoc: data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"sparsedoc: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
