"""Full-covariance Gaussian mixture fitting over word vectors, posterior
cluster assignments, and their top-l sparsification.

The mixture is fit with EM from a k-means++ seeding. Every M-step adds
``reg_eps`` to the covariance diagonals, which keeps the factorizations well
posed even when the number of points per component is far below the embedding
dimension. Assignments are kept as full posterior rows; sparsification keeps
the top l entries of each row at their original values and zeroes the rest,
with no renormalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DataFormatError, NumericError

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GmmModel:
    """K-component full-covariance mixture with cached Cholesky factors."""

    weights: np.ndarray        # (K,)
    means: np.ndarray          # (K, d)
    covariances: np.ndarray    # (K, d, d)
    reg_eps: float
    n_iter: int = 0
    converged: bool = False
    log_likelihoods: list = field(default_factory=list)
    _chol: np.ndarray = field(init=False, repr=False)
    _half_log_det: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.refresh_factorizations()

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def refresh_factorizations(self):
        k, d = self.means.shape
        self._chol = np.empty((k, d, d))
        self._half_log_det = np.empty(k)
        for i in range(k):
            try:
                self._chol[i] = linalg.cholesky(self.covariances[i], lower=True)
            except linalg.LinAlgError as exc:
                raise NumericError(f"component {i} covariance is not SPD") from exc
            self._half_log_det[i] = np.log(np.diag(self._chol[i])).sum()

    def log_densities(self, points: np.ndarray) -> np.ndarray:
        """log(pi_k) + log N(x; mu_k, Sigma_k) for each point and component."""
        points = np.atleast_2d(points)
        n, d = points.shape
        out = np.empty((n, self.n_components))
        for k in range(self.n_components):
            diff = (points - self.means[k]).T
            sol = linalg.solve_triangular(self._chol[k], diff, lower=True)
            quad = (sol * sol).sum(axis=0)
            out[:, k] = (
                np.log(self.weights[k])
                - self._half_log_det[k]
                - 0.5 * (d * _LOG_2PI + quad)
            )
        return out


def _kmeans_pp_seeds(points: np.ndarray, k: int, rng) -> np.ndarray:
    n = len(points)
    seeds = np.empty((k, points.shape[1]))
    seeds[0] = points[rng.integers(n)]
    d2 = ((points - seeds[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            seeds[i] = points[rng.integers(n)]
        else:
            seeds[i] = points[np.searchsorted(np.cumsum(d2 / total), rng.random())]
        d2 = np.minimum(d2, ((points - seeds[i]) ** 2).sum(axis=1))
    return seeds


def _log_resp(model: GmmModel, points: np.ndarray):
    log_dens = model.log_densities(points)
    log_norm = np.logaddexp.reduce(log_dens, axis=1)
    return log_dens - log_norm[:, None], log_norm.mean()


def fit_gmm(
    points: np.ndarray,
    n_components: int = 60,
    seed: int = 1,
    reg_eps: float = 1e-4,
    max_iter: int = 100,
    tol: float = 1e-4,
) -> GmmModel:
    """Fit a full-covariance mixture by EM from k-means++ seeds.

    Terminates when the mean per-point log-likelihood improves by less than
    ``tol`` or after ``max_iter`` iterations. A component whose weight
    collapses below 1e-8 is reseeded from the point farthest from every
    current mean, at most three times in total.
    """
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    if n <= n_components:
        raise ValueError(f"need more points than components ({n} <= {n_components})")
    rng = np.random.default_rng(seed)

    means = _kmeans_pp_seeds(points, n_components, rng)
    var = points.var(axis=0) + reg_eps
    covariances = np.tile(np.diag(var), (n_components, 1, 1))
    weights = np.full(n_components, 1.0 / n_components)
    model = GmmModel(weights=weights, means=means, covariances=covariances, reg_eps=reg_eps)

    reseeds = 0
    prev_ll = -np.inf
    for iteration in range(max_iter):
        log_resp, ll = _log_resp(model, points)
        resp = np.exp(log_resp)
        nk = resp.sum(axis=0)

        collapsed = np.flatnonzero(nk / n < 1e-8)
        if collapsed.size:
            reseeds += len(collapsed)
            if reseeds > 3:
                raise NumericError(
                    f"{reseeds} component collapses exceed the reseed budget"
                )
            dist = np.min(
                ((points[:, None, :] - model.means[None, :, :]) ** 2).sum(axis=2), axis=1
            )
            farthest = np.argsort(-dist)
            global_cov = np.cov(points.T, bias=True) + model.reg_eps * np.eye(d)
            for rank, k in enumerate(collapsed):
                model.means[k] = points[int(farthest[rank])]
                model.covariances[k] = global_cov
                model.weights[k] = 1.0 / model.n_components
            model.weights /= model.weights.sum()
            model.refresh_factorizations()
            prev_ll = -np.inf
            continue

        model.weights = nk / n
        model.means = (resp.T @ points) / nk[:, None]
        for k in range(model.n_components):
            diff = points - model.means[k]
            cov = (resp[:, k][:, None] * diff).T @ diff / nk[k]
            cov.flat[:: d + 1] += model.reg_eps
            model.covariances[k] = cov
        model.refresh_factorizations()

        model.log_likelihoods.append(ll)
        model.n_iter = iteration + 1
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            model.converged = True
            break
        prev_ll = ll
    return model


def posterior(model: GmmModel, points: np.ndarray) -> np.ndarray:
    """P(c_k | x): softmax over log(pi_k) + log N(x; mu_k, Sigma_k).

    Accepts one vector or a matrix of row vectors; rows sum to 1.
    """
    single = np.ndim(points) == 1
    log_resp, _ = _log_resp(model, np.atleast_2d(points))
    resp = np.exp(log_resp)
    return resp[0] if single else resp


@dataclass
class SparseAssignmentTable:
    """Per-word top-l cluster assignments: ids and unmodified probabilities."""

    support: np.ndarray  # (V, l) int32, cluster ids ascending, -1 padded
    probs: np.ndarray    # (V, l) float64, aligned with support, 0 padded
    n_clusters: int
    l: int

    def __len__(self) -> int:
        return len(self.support)

    def row_dict(self, i: int) -> dict[int, float]:
        return {
            int(k): float(p)
            for k, p in zip(self.support[i], self.probs[i])
            if k >= 0
        }


def sparsify(assignments: np.ndarray, l: int) -> SparseAssignmentTable:
    """Keep the l largest posteriors of each row at their original values.

    Nothing is renormalized; ties at the cutoff keep the lower cluster index.
    """
    assignments = np.atleast_2d(assignments)
    v, k = assignments.shape
    if not 1 <= l <= k:
        raise ValueError(f"l must be in [1, {k}], got {l}")
    # stable argsort on -p keeps lower cluster index first among exact ties
    top = np.argsort(-assignments, axis=1, kind="stable")[:, :l]
    support = np.sort(top, axis=1).astype(np.int32)
    probs = np.take_along_axis(assignments, support, axis=1)
    return SparseAssignmentTable(support=support, probs=probs, n_clusters=k, l=l)


def densify(table: SparseAssignmentTable) -> np.ndarray:
    out = np.zeros((len(table.support), table.n_clusters))
    rows = np.repeat(np.arange(len(table.support)), table.support.shape[1])
    cols = table.support.ravel()
    mask = cols >= 0
    out[rows[mask], cols.ravel()[mask]] = table.probs.ravel()[mask]
    return out


def assignment_stats(assignments: np.ndarray, threshold: float = 0.01) -> dict:
    """Fraction of entries below ``threshold`` plus per-row count statistics."""
    assignments = np.atleast_2d(assignments)
    below = assignments < threshold
    counts = below.sum(axis=1)
    return {
        "fraction_below": float(below.mean()),
        "mean_below_per_word": float(counts.mean()),
        "variance_below_per_word": float(counts.var()),
        "threshold": threshold,
    }


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_GMM_HEADER = "gmm-model v1"
_TABLE_HEADER = "sparse-assignments v1"


def save_gmm(model: GmmModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_GMM_HEADER}\n")
        fh.write(f"{model.n_components} {model.dim} {float(model.reg_eps)!r}\n")
        for k in range(model.n_components):
            fh.write(f"{float(model.weights[k])!r}\n")
            fh.write(" ".join(repr(float(x)) for x in model.means[k]) + "\n")
            for row in model.covariances[k]:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_gmm(path) -> GmmModel:
    with open(path, encoding="utf-8") as fh:
        if fh.readline().strip() != _GMM_HEADER:
            raise DataFormatError(f"{path}: not a gmm model file")
        k, d, reg = fh.readline().split()
        k, d = int(k), int(d)
        weights = np.empty(k)
        means = np.empty((k, d))
        covs = np.empty((k, d, d))
        for i in range(k):
            weights[i] = float(fh.readline())
            means[i] = [float(x) for x in fh.readline().split()]
            for j in range(d):
                covs[i, j] = [float(x) for x in fh.readline().split()]
    return GmmModel(weights=weights, means=means, covariances=covs, reg_eps=float(reg))


def save_sparse_assignments(table: SparseAssignmentTable, tokens: list[str], path) -> None:
    """One line per word: token then k:p pairs, p at 6 decimal places."""
    if len(tokens) != len(table.support):
        raise DataFormatError("token list does not match assignment table size")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_TABLE_HEADER} {table.n_clusters} {table.l}\n")
        for token, sup, pr in zip(tokens, table.support, table.probs):
            pairs = " ".join(f"{k}:{p:.6f}" for k, p in zip(sup, pr) if k >= 0)
            fh.write(f"{token} {pairs}".rstrip() + "\n")


def load_sparse_assignments(path) -> tuple[SparseAssignmentTable, list[str]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != _TABLE_HEADER.split():
            raise DataFormatError(f"{path}: not a sparse assignment file")
        n_clusters, l = int(header[2]), int(header[3])
        tokens, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                raise DataFormatError(f"{path}:{lineno}: empty line")
            tokens.append(parts[0])
            try:
                rows.append([(int(k), float(p)) for k, p in (x.split(":") for x in parts[1:])])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed k:p pair") from exc
    support = np.full((len(rows), l), -1, dtype=np.int32)
    probs = np.zeros((len(rows), l))
    for i, row in enumerate(rows):
        for j, (k, p) in enumerate(row):
            support[i, j] = k
            probs[i, j] = p
    table = SparseAssignmentTable(support=support, probs=probs, n_clusters=n_clusters, l=l)
    return table, tokens
