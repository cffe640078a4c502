"""One-vs-rest linear classifiers and the evaluation metric suite.

Training is deterministic averaged subgradient descent on the regularized
hinge or logistic objective: every step uses the exact mean subgradient over
the training distribution (duplicate rows are folded into multiplicity
weights first, so the fit depends only on the empirical distribution, and a
duplicated training set yields the bit-identical model), and the returned
parameters are the average of the second half of the iterate trajectory.

Multi-class evaluation reports accuracy and macro precision/recall/F1;
multi-label evaluation reports precision@k, nDCG@k, coverage error, label
ranking average precision, and macro F1 at a score threshold of zero. Label
rankings are total orders: scores descending, ties broken by lower label
index.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

METRIC_KEYS = (
    "accuracy",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "p_at_1",
    "p_at_5",
    "ndcg_at_5",
    "coverage_error",
    "lraps",
)


@dataclass
class LinearModel:
    weights: np.ndarray  # (L, dim)
    biases: np.ndarray   # (L,)
    loss: str
    reg: float

    @property
    def n_labels(self) -> int:
        return len(self.biases)


def _as_label_sets(labels, n_labels: int | None):
    sets = [frozenset(l) if not np.isscalar(l) else frozenset((int(l),)) for l in labels]
    found = max((max(s) for s in sets if s), default=-1) + 1
    if n_labels is None:
        n_labels = found
    elif found > n_labels:
        raise ValueError(f"label index {found - 1} exceeds n_labels={n_labels}")
    return sets, n_labels


def _fold_duplicates(x, y):
    """Collapse duplicate (row, targets) pairs into multiplicity weights."""
    combined = np.hstack([x, y])
    _, first_idx, counts = np.unique(
        combined, axis=0, return_index=True, return_counts=True
    )
    order = np.sort(first_idx)
    lookup = {int(i): int(c) for i, c in zip(first_idx, counts)}
    weights = np.array([lookup[int(i)] for i in order], dtype=np.float64)
    return x[order], y[order], weights / weights.sum()


def train_linear(
    vectors,
    labels,
    n_labels: int | None = None,
    loss: str = "hinge",
    reg: float = 1e-4,
    epochs: int = 200,
    learning_rate: float = 0.5,
    seed: int = 1,
) -> LinearModel:
    """Fit one-vs-rest linear scorers; deterministic for fixed arguments."""
    if loss not in ("hinge", "logistic"):
        raise ValueError(f"loss must be hinge or logistic, got {loss!r}")
    x = np.ascontiguousarray(np.atleast_2d(vectors), dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("training vectors contain non-finite entries")
    label_sets, n_labels = _as_label_sets(labels, n_labels)
    if n_labels < 2:
        raise ValueError("need at least two labels to train a classifier")
    y = -np.ones((len(x), n_labels))
    for i, s in enumerate(label_sets):
        for l in s:
            y[i, l] = 1.0

    x, y, sample_w = _fold_duplicates(x, y)
    w = np.zeros((n_labels, x.shape[1]))
    b = np.zeros(n_labels)
    w_avg = np.zeros_like(w)
    b_avg = np.zeros_like(b)
    n_avg = 0
    tail_start = epochs // 2
    for step in range(1, epochs + 1):
        eta = learning_rate / (1.0 + learning_rate * reg * step)
        scores = x @ w.T + b
        if loss == "hinge":
            active = (y * scores < 1.0).astype(np.float64)
            grad_s = -(y * active) * sample_w[:, None]
        else:
            grad_s = -(y / (1.0 + np.exp(np.clip(y * scores, -30, 30)))) * sample_w[:, None]
        w -= eta * (grad_s.T @ x + reg * w)
        b -= eta * grad_s.sum(axis=0)
        if step > tail_start:
            n_avg += 1
            w_avg += (w - w_avg) / n_avg
            b_avg += (b - b_avg) / n_avg
    return LinearModel(weights=w_avg, biases=b_avg, loss=loss, reg=reg)


def predict_scores(model: LinearModel, vectors) -> np.ndarray:
    x = np.atleast_2d(vectors)
    if x.shape[1] != model.weights.shape[1]:
        raise ValueError(
            f"dimension mismatch: model {model.weights.shape[1]}, input {x.shape[1]}"
        )
    scores = x @ model.weights.T + model.biases
    return scores[0] if np.ndim(vectors) == 1 else scores


def predict_labels(model: LinearModel, vectors) -> np.ndarray:
    """Multi-class prediction: argmax score, ties to the lower label index."""
    scores = np.atleast_2d(predict_scores(model, vectors))
    out = scores.argmax(axis=1)
    return int(out[0]) if np.ndim(vectors) == 1 else out


def rank_labels(scores: np.ndarray) -> np.ndarray:
    """Label ids ordered by score descending, ties by lower label index."""
    scores = np.asarray(scores)
    idx = np.arange(scores.shape[-1])
    return np.lexsort((idx, -scores))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    task: str
    values: dict = field(default_factory=dict)
    per_class_f1: list | None = None
    absent_classes: list | None = None

    def to_text(self) -> str:
        lines = [f"{k} {self.values[k]:.6f}" for k in METRIC_KEYS if k in self.values]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {"task": self.task, **{k: self.values[k] for k in self.values}}
        if self.per_class_f1 is not None:
            payload["per_class_f1"] = self.per_class_f1
        return json.dumps(payload, indent=2, sort_keys=True)


def evaluate_multiclass(y_true, y_pred, n_labels: int | None = None) -> MetricsReport:
    """Accuracy plus macro precision/recall/F1 over all known classes.

    Classes absent from the truth contribute zeros to the macro averages and
    are listed in the report.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) == 0 or len(y_true) != len(y_pred):
        raise ValueError("predictions and truth must be non-empty and aligned")
    if n_labels is None:
        n_labels = int(max(y_true.max(), y_pred.max())) + 1
    precision = np.zeros(n_labels)
    recall = np.zeros(n_labels)
    f1 = np.zeros(n_labels)
    absent = []
    for c in range(n_labels):
        tp = int(((y_pred == c) & (y_true == c)).sum())
        fp = int(((y_pred == c) & (y_true != c)).sum())
        fn = int(((y_pred != c) & (y_true == c)).sum())
        if tp + fn == 0:
            absent.append(c)
        precision[c] = tp / (tp + fp) if tp + fp else 0.0
        recall[c] = tp / (tp + fn) if tp + fn else 0.0
        denom = precision[c] + recall[c]
        f1[c] = 2 * precision[c] * recall[c] / denom if denom else 0.0
    report = MetricsReport(task="multiclass")
    report.values = {
        "accuracy": float((y_true == y_pred).mean()),
        "macro_precision": float(precision.mean()),
        "macro_recall": float(recall.mean()),
        "macro_f1": float(f1.mean()),
    }
    report.per_class_f1 = [float(x) for x in f1]
    report.absent_classes = absent
    return report


def _ranking_metrics_one(scores: np.ndarray, truth: frozenset, ks=(1, 5)):
    order = rank_labels(scores)
    n_labels = len(order)
    rank_of = np.empty(n_labels, dtype=np.int64)
    rank_of[order] = np.arange(1, n_labels + 1)

    p_at = {}
    ndcg_at = {}
    for k in ks:
        kk = min(k, n_labels)
        hits = [1.0 if order[i] in truth else 0.0 for i in range(kk)]
        p_at[k] = sum(hits) / k
        dcg = sum(h / np.log2(i + 2) for i, h in enumerate(hits))
        ideal = sum(1.0 / np.log2(i + 2) for i in range(min(k, len(truth))))
        ndcg_at[k] = dcg / ideal if ideal else 0.0

    true_ranks = np.sort([rank_of[t] for t in truth])
    coverage = int(true_ranks.max())
    lrap = float(np.mean([(i + 1) / r for i, r in enumerate(true_ranks)]))
    return p_at, ndcg_at, coverage, lrap


def evaluate_multilabel(score_matrix, truth_sets, threshold: float = 0.0) -> MetricsReport:
    """Ranking metrics over per-label scores plus thresholded macro F1."""
    scores = np.atleast_2d(np.asarray(score_matrix, dtype=np.float64))
    n_docs, n_labels = scores.shape
    if n_docs == 0 or n_docs != len(truth_sets):
        raise ValueError("scores and truth sets must be non-empty and aligned")
    truth = []
    for i, s in enumerate(truth_sets):
        fs = frozenset(int(l) for l in s)
        if not fs:
            raise DataFormatError(f"document {i} has an empty truth set")
        if max(fs) >= n_labels:
            raise ValueError(f"document {i} references label {max(fs)} >= {n_labels}")
        truth.append(fs)

    p1 = p5 = ndcg5 = cov = lrap = 0.0
    for i in range(n_docs):
        p_at, ndcg_at, coverage, lr = _ranking_metrics_one(scores[i], truth[i])
        p1 += p_at[1]
        p5 += p_at[5]
        ndcg5 += ndcg_at[5]
        cov += coverage
        lrap += lr

    predicted = scores > threshold
    f1 = np.zeros(n_labels)
    for c in range(n_labels):
        in_truth = np.array([c in t for t in truth])
        tp = int((predicted[:, c] & in_truth).sum())
        fp = int((predicted[:, c] & ~in_truth).sum())
        fn = int((~predicted[:, c] & in_truth).sum())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1[c] = 2 * p * r / (p + r) if p + r else 0.0

    report = MetricsReport(task="multilabel")
    report.values = {
        "p_at_1": p1 / n_docs,
        "p_at_5": p5 / n_docs,
        "ndcg_at_5": ndcg5 / n_docs,
        "coverage_error": cov / n_docs,
        "lraps": lrap / n_docs,
        "macro_f1": float(f1.mean()),
    }
    report.per_class_f1 = [float(x) for x in f1]
    return report


# ---------------------------------------------------------------------------
# Cross-validated selection of the sparsity constant
# ---------------------------------------------------------------------------

def _stratified_folds(label_sets, n_folds: int, seed: int):
    """Round-robin class-stratified folds for single-label data, seeded
    shuffle splits otherwise."""
    rng = np.random.default_rng(seed)
    n = len(label_sets)
    fold_of = np.zeros(n, dtype=np.int64)
    if all(len(s) == 1 for s in label_sets):
        by_class: dict[int, list[int]] = {}
        for i, s in enumerate(label_sets):
            by_class.setdefault(next(iter(s)), []).append(i)
        counter = 0
        for c in sorted(by_class):
            members = np.array(by_class[c])
            rng.shuffle(members)
            for i in members:
                fold_of[i] = counter % n_folds
                counter += 1
    else:
        order = rng.permutation(n)
        for pos, i in enumerate(order):
            fold_of[i] = pos % n_folds
    return fold_of


def cross_validate_l(
    documents,
    embeddings,
    posteriors,
    idf,
    candidate_l=(3, 5, 7),
    n_folds: int = 5,
    loss: str = "hinge",
    reg: float = 1e-4,
    epochs: int = 200,
    seed: int = 1,
    normalize: bool = True,
):
    """Pick the sparsity constant maximizing mean macro F1 over stratified
    folds; embeddings and mixture posteriors stay fixed, only the
    sparsification and composition are redone per candidate.

    Returns (best_l, {l: [fold macro F1 scores]}).
    """
    from .clustering import sparsify
    from .composition import build_table, embed_corpus

    label_sets = [frozenset(doc.labels) for doc in documents]
    n_labels = max(max(s) for s in label_sets if s) + 1
    multiclass = all(len(s) == 1 for s in label_sets)
    fold_of = _stratified_folds(label_sets, n_folds, seed)

    # merge folds whose training complement lost a class
    classes = set().union(*label_sets)
    merged = True
    while merged and len(np.unique(fold_of)) > 1:
        merged = False
        for f in np.unique(fold_of):
            train_classes = set().union(
                *(label_sets[i] for i in np.flatnonzero(fold_of != f))
            )
            if train_classes != classes:
                others = np.unique(fold_of[fold_of != f])
                warnings.warn(f"fold {f} leaves a class uncovered; merging into {others[0]}")
                fold_of[fold_of == f] = others[0]
                merged = True
                break

    token_docs = [doc.tokens for doc in documents]
    scores_by_l: dict[int, list[float]] = {}
    for l in candidate_l:
        table = build_table(embeddings, sparsify(posteriors, int(l)), idf)
        vecs, _ = embed_corpus(token_docs, table, normalize=normalize)
        x = vecs.vectors
        fold_scores = []
        for f in np.unique(fold_of):
            test_idx = np.flatnonzero(fold_of == f)
            train_idx = np.flatnonzero(fold_of != f)
            model = train_linear(
                x[train_idx],
                [label_sets[i] for i in train_idx],
                n_labels=n_labels,
                loss=loss,
                reg=reg,
                epochs=epochs,
                seed=seed,
            )
            test_scores = predict_scores(model, x[test_idx])
            if multiclass:
                preds = np.atleast_2d(test_scores).argmax(axis=1)
                truth = [next(iter(label_sets[i])) for i in test_idx]
                f1 = evaluate_multiclass(truth, preds, n_labels).values["macro_f1"]
            else:
                f1 = evaluate_multilabel(
                    test_scores, [label_sets[i] for i in test_idx]
                ).values["macro_f1"]
            fold_scores.append(f1)
        scores_by_l[int(l)] = fold_scores

    means = {l: float(np.mean(s)) for l, s in scores_by_l.items()}
    best = min(sorted(means), key=lambda l: (-means[l], l))
    return best, scores_by_l


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_MODEL_HEADER = "linear-model v1"


def save_model(model: LinearModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_MODEL_HEADER} {model.loss} {float(model.reg)!r} "
                 f"{model.n_labels} {model.weights.shape[1]}\n")
        for c in range(model.n_labels):
            fh.write(repr(float(model.biases[c])) + " "
                     + " ".join(repr(float(x)) for x in model.weights[c]) + "\n")


def load_model(path) -> LinearModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != _MODEL_HEADER.split():
            raise DataFormatError(f"{path}: not a linear model file")
        loss, reg, n_labels, dim = header[2], float(header[3]), int(header[4]), int(header[5])
        weights = np.zeros((n_labels, dim))
        biases = np.zeros(n_labels)
        for c in range(n_labels):
            parts = fh.readline().split()
            biases[c] = float(parts[0])
            weights[c] = [float(x) for x in parts[1:]]
    return LinearModel(weights=weights, biases=biases, loss=loss, reg=reg)


def save_report(report: MetricsReport, text_path, json_path=None) -> None:
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
