"""Lower-dimensional projections of the sparse word-topic table.

Three reducers share one protocol (``in_dim``, ``out_dim``, ``encode``):

* sparse sign random projection, entries +/- sqrt(3/out_dim) with
  probabilities 1/6 each and 0 with probability 2/3, reproducible from seed;
* per-block PCA, one centered principal basis per d-dimensional cluster
  subspace with the retained width set by the nominal-dimension rank rules;
* a feedforward autoencoder in -> 2*out -> out -> 2*out -> in with tanh
  hidden activations and a linear output, trained on mean squared
  reconstruction error by Adam.

Reduction always runs over the vocabulary table (V rows), never over the
document collection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as sp

from .errors import DataFormatError, NumericError

# nominal target dimension -> (rank threshold, reduced width)
PCA_RANK_RULES = {500: (10, 10), 1000: (20, 15), 2000: (100, 30), 3000: (100, 50)}
_RANK_TOL = 1e-10


@dataclass
class ReducedTable:
    """Dense reduced word-topic rows, consumed like the sparse table."""

    tokens: list[str]
    matrix: np.ndarray
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)


def _table_rows(table):
    """(n_rows, in_dim, fetch(indices) -> dense rows) for a table or matrix."""
    if hasattr(table, "rows_dense"):
        return len(table), table.dim, table.rows_dense
    matrix = np.asarray(table, dtype=np.float64)
    return len(matrix), matrix.shape[1], lambda idx: matrix[np.asarray(idx)]


class RandomProjection:
    """Sparse sign projection in the distance-preserving regime."""

    variant = "random-projection"

    def __init__(self, in_dim: int, out_dim: int, seed: int):
        if out_dim >= in_dim:
            raise ValueError(f"out_dim must be < in_dim ({out_dim} >= {in_dim})")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.seed = seed
        self.matrix = self._build(in_dim, out_dim, seed)

    @staticmethod
    def _build(in_dim, out_dim, seed):
        rng = np.random.default_rng(seed)
        scale = np.sqrt(3.0 / out_dim)
        codes = rng.integers(0, 6, size=(in_dim, out_dim), dtype=np.int8)
        rows, cols = np.nonzero((codes == 0) | (codes == 5))
        vals = np.where(codes[rows, cols] == 0, scale, -scale)
        return sp.csr_matrix((vals, (rows, cols)), shape=(in_dim, out_dim))

    def encode(self, x: np.ndarray) -> np.ndarray:
        single = np.ndim(x) == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.in_dim:
            raise ValueError(f"expected dimension {self.in_dim}, got {x2.shape[1]}")
        out = (self.matrix.T @ x2.T).T
        if sp.issparse(out):
            out = out.toarray()
        return out[0] if single else out


class PcaSubspace:
    """Independent centered PCA per d-dimensional cluster block."""

    variant = "pca-subspace"

    def __init__(self, block_dim: int, nominal_dim: int, means: list[np.ndarray],
                 bases: list[np.ndarray]):
        self.block_dim = block_dim
        self.nominal_dim = nominal_dim
        self.means = means
        self.bases = bases  # (d, width_b) each, orthonormal columns
        self.in_dim = block_dim * len(means)
        self.out_dim = int(sum(b.shape[1] for b in bases))

    def encode(self, x: np.ndarray) -> np.ndarray:
        single = np.ndim(x) == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.in_dim:
            raise ValueError(f"expected dimension {self.in_dim}, got {x2.shape[1]}")
        d = self.block_dim
        parts = [
            (x2[:, b * d : (b + 1) * d] - self.means[b]) @ self.bases[b]
            for b in range(len(self.means))
            if self.bases[b].shape[1]
        ]
        out = np.hstack(parts) if parts else np.zeros((len(x2), 0))
        return out[0] if single else out


def fit_random_projection(in_dim: int, out_dim: int, seed: int = 1) -> RandomProjection:
    return RandomProjection(in_dim, out_dim, seed)


def fit_pca_subspace(table, nominal_dim: int, block_dim: int | None = None) -> PcaSubspace:
    """Fit per-block bases; width = rule cap when numerical rank exceeds the
    rule threshold, the block's own numerical rank otherwise."""
    if nominal_dim not in PCA_RANK_RULES:
        raise ValueError(
            f"nominal_dim must be one of {sorted(PCA_RANK_RULES)}, got {nominal_dim}"
        )
    threshold, cap = PCA_RANK_RULES[nominal_dim]
    if hasattr(table, "block_dense"):
        block_dim = table.block_dim
        n_blocks = table.n_clusters
        get_block = table.block_dense
    else:
        matrix = np.asarray(table, dtype=np.float64)
        if block_dim is None or matrix.shape[1] % block_dim:
            raise ValueError("matrix input needs a block_dim dividing its width")
        n_blocks = matrix.shape[1] // block_dim
        get_block = lambda b: matrix[:, b * block_dim : (b + 1) * block_dim]

    means, bases = [], []
    for b in range(n_blocks):
        block = get_block(b)
        mean = block.mean(axis=0)
        centered = block - mean
        if not centered.any():
            means.append(mean)
            bases.append(np.zeros((block_dim, 0)))
            continue
        _, svals, vt = np.linalg.svd(centered, full_matrices=False)
        rank = int((svals > _RANK_TOL * svals[0]).sum()) if svals.size else 0
        width = cap if rank > threshold else rank
        means.append(mean)
        bases.append(vt[:width].T.copy())
    return PcaSubspace(block_dim=block_dim, nominal_dim=nominal_dim, means=means, bases=bases)


# ---------------------------------------------------------------------------
# Autoencoder
# ---------------------------------------------------------------------------

@dataclass
class AeTrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 50
    batch_size: int = 64
    seed: int = 1

    def __post_init__(self):
        for name in ("learning_rate", "beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")


class Autoencoder:
    """in -> hidden -> code -> hidden -> in, tanh hidden, linear output."""

    variant = "autoencoder"
    _PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")

    def __init__(self, in_dim: int, out_dim: int, hidden: int | None = None,
                 seed: int = 1, init: str = "glorot"):
        if out_dim >= in_dim:
            raise ValueError(f"out_dim must be < in_dim ({out_dim} >= {in_dim})")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden = hidden if hidden is not None else 2 * out_dim
        self.loss_history: list[float] = []
        rng = np.random.default_rng(seed)
        shapes = [
            (in_dim, self.hidden),
            (self.hidden, out_dim),
            (out_dim, self.hidden),
            (self.hidden, in_dim),
        ]
        self.params = {}
        for i, (fan_in, fan_out) in enumerate(shapes, start=1):
            if init == "glorot":
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            elif init == "zeros":
                w = np.zeros((fan_in, fan_out))
            else:
                raise ValueError(f"unknown init {init!r}")
            self.params[f"w{i}"] = w
            self.params[f"b{i}"] = np.zeros(fan_out)

    def encode(self, x: np.ndarray) -> np.ndarray:
        single = np.ndim(x) == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.in_dim:
            raise ValueError(f"expected dimension {self.in_dim}, got {x2.shape[1]}")
        p = self.params
        code = np.tanh(np.tanh(x2 @ p["w1"] + p["b1"]) @ p["w2"] + p["b2"])
        return code[0] if single else code

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        a3 = np.tanh(self.encode(x) @ p["w3"] + p["b3"])
        return a3 @ p["w4"] + p["b4"]

    def loss(self, x: np.ndarray) -> float:
        x2 = np.atleast_2d(x)
        return float(((self.reconstruct(x2) - x2) ** 2).mean())

    def loss_and_grads(self, x: np.ndarray):
        """Mean squared reconstruction error and its analytic gradients."""
        x = np.atleast_2d(x)
        p = self.params
        z1 = x @ p["w1"] + p["b1"]
        a1 = np.tanh(z1)
        z2 = a1 @ p["w2"] + p["b2"]
        a2 = np.tanh(z2)
        z3 = a2 @ p["w3"] + p["b3"]
        a3 = np.tanh(z3)
        xhat = a3 @ p["w4"] + p["b4"]

        diff = xhat - x
        loss = float((diff**2).mean())
        dxhat = 2.0 * diff / diff.size
        grads = {
            "w4": a3.T @ dxhat,
            "b4": dxhat.sum(axis=0),
        }
        dz3 = (dxhat @ p["w4"].T) * (1.0 - a3**2)
        grads["w3"] = a2.T @ dz3
        grads["b3"] = dz3.sum(axis=0)
        dz2 = (dz3 @ p["w3"].T) * (1.0 - a2**2)
        grads["w2"] = a1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dz1 = (dz2 @ p["w2"].T) * (1.0 - a1**2)
        grads["w1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return loss, grads


def train_autoencoder(table, out_dim: int, config: AeTrainConfig | None = None,
                      hidden: int | None = None) -> Autoencoder:
    """Adam on mean squared reconstruction error over the table rows."""
    config = config or AeTrainConfig()
    n_rows, in_dim, fetch = _table_rows(table)
    model = Autoencoder(in_dim, out_dim, hidden=hidden, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(p) for k, p in model.params.items()}
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n_rows)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_rows, config.batch_size):
            batch = fetch(order[start : start + config.batch_size])
            loss, grads = model.loss_and_grads(batch)
            epoch_loss += loss
            n_batches += 1
            step += 1
            bc1 = 1.0 - config.beta1**step
            bc2 = 1.0 - config.beta2**step
            for key, grad in grads.items():
                m[key] = config.beta1 * m[key] + (1 - config.beta1) * grad
                v[key] = config.beta2 * v[key] + (1 - config.beta2) * grad**2
                model.params[key] -= (
                    config.learning_rate
                    * (m[key] / bc1)
                    / (np.sqrt(v[key] / bc2) + config.epsilon)
                )
        mean_loss = epoch_loss / max(n_batches, 1)
        if not np.isfinite(mean_loss):
            raise NumericError(
                "autoencoder training diverged (MSE is not finite); lower the learning rate"
            )
        model.loss_history.append(mean_loss)
    return model


def reduce_table(model, table) -> ReducedTable:
    """Encode every table row; output feeds embed_document unchanged."""
    n_rows, in_dim, fetch = _table_rows(table)
    if in_dim != model.in_dim:
        raise DataFormatError(
            f"reducer expects dimension {model.in_dim}, table has {in_dim}"
        )
    if isinstance(model, RandomProjection) and hasattr(table, "to_csr"):
        matrix = np.asarray((table.to_csr() @ model.matrix).todense())
    else:
        chunks = [
            model.encode(fetch(np.arange(s, min(s + 512, n_rows))))
            for s in range(0, n_rows, 512)
        ]
        matrix = np.vstack(chunks) if chunks else np.zeros((0, model.out_dim))
    tokens = list(table.tokens) if hasattr(table, "tokens") else [str(i) for i in range(n_rows)]
    return ReducedTable(tokens=tokens, matrix=matrix)


# ---------------------------------------------------------------------------
# Persistence: one .npz per model, variant tag + version inside
# ---------------------------------------------------------------------------

def save_reducer(model, path) -> None:
    if isinstance(model, RandomProjection):
        np.savez_compressed(
            path, variant="random-projection", version=1,
            seed=model.seed, in_dim=model.in_dim, out_dim=model.out_dim,
        )
    elif isinstance(model, PcaSubspace):
        payload = {
            "variant": "pca-subspace", "version": 1,
            "block_dim": model.block_dim, "nominal_dim": model.nominal_dim,
            "n_blocks": len(model.means),
        }
        for b, (mean, basis) in enumerate(zip(model.means, model.bases)):
            payload[f"mean_{b}"] = mean
            payload[f"basis_{b}"] = basis
        np.savez_compressed(path, **payload)
    elif isinstance(model, Autoencoder):
        np.savez_compressed(
            path, variant="autoencoder", version=1,
            in_dim=model.in_dim, out_dim=model.out_dim, hidden=model.hidden,
            loss_history=np.asarray(model.loss_history),
            **model.params,
        )
    else:
        raise ValueError(f"unknown reducer type {type(model).__name__}")


def load_reducer(path):
    try:
        data = np.load(path, allow_pickle=False)
    except Exception as exc:
        raise DataFormatError(f"{path}: not a reducer model file") from exc
    variant = str(data["variant"])
    if int(data["version"]) != 1:
        raise DataFormatError(f"{path}: unsupported reducer version")
    if variant == "random-projection":
        return RandomProjection(int(data["in_dim"]), int(data["out_dim"]), int(data["seed"]))
    if variant == "pca-subspace":
        n_blocks = int(data["n_blocks"])
        means = [data[f"mean_{b}"] for b in range(n_blocks)]
        bases = [data[f"basis_{b}"] for b in range(n_blocks)]
        return PcaSubspace(int(data["block_dim"]), int(data["nominal_dim"]), means, bases)
    if variant == "autoencoder":
        model = Autoencoder(int(data["in_dim"]), int(data["out_dim"]),
                            hidden=int(data["hidden"]), init="zeros")
        for key in Autoencoder._PARAM_NAMES:
            model.params[key] = data[key]
        model.loss_history = list(data["loss_history"])
        return model
    raise DataFormatError(f"{path}: unknown reducer variant {variant!r}")
