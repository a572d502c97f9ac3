"""Self-organising map classifier with majority-vote node labelling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .config import ConfigError

log = logging.getLogger(__name__)

_LABEL_TAG = 0x1ABE1
_TRAIN_TAG = 0x7A1


@dataclass
class Sample:
    vector: np.ndarray
    label: int
    provenance: tuple = ()


@dataclass
class SomModel:
    rows: int
    cols: int
    prototypes: np.ndarray  # (rows * cols, dim), row-major node order
    seed: int
    learning_rate: float = 0.1
    sigma0: float = 23.0
    steps: int = 0
    labels: np.ndarray | None = None  # (rows * cols,), class per node
    hits: np.ndarray | None = None  # (rows * cols,), training samples mapped to node
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    def coords(self) -> np.ndarray:
        r, c = np.divmod(np.arange(self.n_nodes), self.cols)
        return np.column_stack((r, c)).astype(float)

    def node(self, index: int) -> tuple[int, int]:
        return divmod(int(index), self.cols)


def build_samples(series_list, window: int = 5):
    """Cut each series into non-overlapping ``window``-step blocks.

    ``series_list`` holds ``(FeatureSeries, label)`` pairs.  Returns the sample
    matrix, the label vector and a provenance list of
    ``(setting, behaviour, replicate, start_step)``.
    """
    vectors, labels, prov = [], [], []
    for series, label in series_list:
        n_win = series.n_steps // window
        if n_win == 0:
            log.warning("series %s shorter than window %d; skipped", series.meta, window)
            continue
        blocks = series.values[: n_win * window].reshape(n_win, window * series.dim)
        vectors.append(blocks)
        labels.extend([label] * n_win)
        m = series.meta
        prov.extend(
            (m.get("setting"), m.get("behaviour"), m.get("replicate"), int(series.steps[k * window]))
            for k in range(n_win)
        )
    if not vectors:
        return np.empty((0, 0)), np.empty(0, dtype=int), []
    return np.vstack(vectors), np.asarray(labels, dtype=int), prov


def init_som(rows: int, cols: int, dim: int, data: np.ndarray, seed: int) -> SomModel:
    """Prototypes uniform within the per-dimension range of ``data``."""
    data = np.asarray(data, dtype=float)
    if dim <= 0:
        raise ConfigError("dim must be positive")
    if data.size == 0:
        raise ValueError("cannot initialise a SOM without training data")
    if data.shape[1] != dim:
        raise ValueError(f"data dimension {data.shape[1]} != {dim}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([_TRAIN_TAG, seed])))
    lo, hi = data.min(axis=0), data.max(axis=0)
    protos = lo + rng.random((rows * cols, dim)) * (hi - lo)
    return SomModel(rows, cols, protos, seed)


def bmu(model: SomModel, sample: np.ndarray) -> tuple[int, int]:
    """Node with the smallest Euclidean prototype distance; lowest (row, col) on ties."""
    x = np.asarray(sample, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"sample dimension {x.shape} != ({model.dim},)")
    d = ((model.prototypes - x) ** 2).sum(axis=1)
    return model.node(int(np.argmin(d)))


def bmu_indices(model: SomModel, data: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Flat BMU index of every row of ``data``.

    Distances come from the expanded ``|x|² - 2 x·w + |w|²`` form; nodes
    within rounding of the minimum are re-scored exactly so ties resolve the
    same way as :func:`bmu`.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != model.dim:
        raise ValueError(f"data shape {data.shape} incompatible with dim {model.dim}")
    w = model.prototypes
    w2 = (w**2).sum(axis=1)
    out = np.empty(len(data), dtype=int)
    for start in range(0, len(data), chunk):
        x = data[start : start + chunk]
        x2 = (x**2).sum(axis=1)
        d = x2[:, None] - 2.0 * (x @ w.T) + w2[None, :]
        dmin = d.min(axis=1, keepdims=True)
        tol = 1e-9 * (x2[:, None] + w2.max() + 1.0)
        for i, row in enumerate(d <= dmin + tol):
            cand = np.flatnonzero(row)
            if len(cand) == 1:
                out[start + i] = cand[0]
            else:
                exact = ((w[cand] - x[i]) ** 2).sum(axis=1)
                out[start + i] = cand[np.argmin(exact)]
    return out


def decay(t: float, steps: int, initial: float) -> float:
    return initial / (1.0 + 2.0 * t / steps)


def train_step(prototypes: np.ndarray, coords: np.ndarray, x: np.ndarray, t: int, steps: int, alpha0: float, sigma0: float) -> int:
    """One in-place update of ``prototypes`` towards ``x``; returns the BMU index."""
    best = int(np.argmin(((prototypes - x) ** 2).sum(axis=1)))
    alpha = decay(t, steps, alpha0)
    sigma = decay(t, steps, sigma0)
    g2 = ((coords - coords[best]) ** 2).sum(axis=1)
    if sigma > 0:
        h = alpha * np.exp(-g2 / (2.0 * sigma * sigma))
    else:
        h = np.where(g2 == 0, alpha, 0.0)
    prototypes += h[:, None] * (x - prototypes)
    return best


@njit(cache=True)
def _train_kernel(w, coords, data, order, steps, alpha0, sigma0):
    n_nodes, dim = w.shape
    # BMU of the first sample; later ones are found while updating
    x = data[order[0]]
    best = 0
    best_d = np.inf
    for k in range(n_nodes):
        d = 0.0
        for j in range(dim):
            diff = w[k, j] - x[j]
            d += diff * diff
        if d < best_d:
            best_d = d
            best = k
    for t in range(steps):
        x = data[order[t]]
        frac = 1.0 + 2.0 * t / steps
        alpha = alpha0 / frac
        sigma = sigma0 / frac
        br = coords[best, 0]
        bc = coords[best, 1]
        has_next = t + 1 < steps
        nxt = data[order[t + 1]] if has_next else x
        next_best = 0
        next_d = np.inf
        for k in range(n_nodes):
            dr = coords[k, 0] - br
            dc = coords[k, 1] - bc
            g2 = dr * dr + dc * dc
            if sigma > 0:
                h = alpha * np.exp(-g2 / (2.0 * sigma * sigma))
            else:
                h = alpha if g2 == 0 else 0.0
            d = 0.0
            for j in range(dim):
                v = w[k, j] + h * (x[j] - w[k, j])
                w[k, j] = v
                diff = v - nxt[j]
                d += diff * diff
            if d < next_d:
                next_d = d
                next_best = k
        best = next_best


def train(model: SomModel, data: np.ndarray, steps: int = 180_000, learning_rate: float = 0.1, sigma0: float | None = None) -> SomModel:
    """Online training: each step presents one uniformly drawn sample.

    Learning rate and neighbourhood width both decay as ``x0 / (1 + 2t/T)``;
    the neighbourhood is Gaussian in lattice distance.  The draw order comes
    from the model seed, so training is reproducible.
    """
    data = np.ascontiguousarray(data, dtype=float)
    if len(data) == 0:
        raise ValueError("no training samples")
    if data.shape[1] != model.dim:
        raise ValueError(f"data dimension {data.shape[1]} != model dimension {model.dim}")
    sigma0 = model.sigma0 if sigma0 is None else sigma0
    order = sample_order(model.seed, len(data), steps)
    w = np.ascontiguousarray(model.prototypes.copy())
    if steps > 0:
        _train_kernel(w, model.coords(), data, order, steps, float(learning_rate), float(sigma0))
    model.prototypes = w
    model.learning_rate = learning_rate
    model.sigma0 = sigma0
    model.steps = steps
    model.labels = None
    model.hits = None
    return model


def sample_order(seed: int, n: int, steps: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([_TRAIN_TAG, seed, 1])))
    return rng.integers(0, n, size=steps)


def _pick(counts: np.ndarray, rng: np.random.Generator) -> int:
    tied = np.flatnonzero(counts == counts.max())
    return int(tied[0]) if len(tied) == 1 else int(rng.choice(tied))


def label_nodes(model: SomModel, data: np.ndarray, labels: np.ndarray) -> SomModel:
    """Majority-vote labelling of the nodes.

    Ties between classes are broken by a draw seeded from the model seed.
    Nodes that no training sample maps to get the label carried by most of the
    hit nodes.
    """
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise ValueError("no labelled samples")
    idx = bmu_indices(model, data)
    return assign_labels(model, idx, labels)


def assign_labels(model: SomModel, bmu_idx: np.ndarray, labels: np.ndarray) -> SomModel:
    """Label nodes from precomputed BMU indices (see :func:`label_nodes`)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([_LABEL_TAG, model.seed])))
    classes = np.unique(labels)
    votes = np.zeros((model.n_nodes, len(classes)), dtype=int)
    np.add.at(votes, (bmu_idx, np.searchsorted(classes, labels)), 1)
    hits = votes.sum(axis=1)
    node_labels = np.zeros(model.n_nodes, dtype=int)
    for k in np.flatnonzero(hits):
        node_labels[k] = classes[_pick(votes[k], rng)]
    hit_labels = node_labels[hits > 0]
    default = classes[_pick(np.array([(hit_labels == c).sum() for c in classes]), rng)]
    node_labels[hits == 0] = default
    model.labels = node_labels
    model.hits = hits
    model.extra["default_label"] = int(default)
    return model


def classify(model: SomModel, data: np.ndarray) -> np.ndarray:
    """Predicted class of each row of ``data`` (the BMU's label)."""
    if model.labels is None:
        raise ValueError("model has not been labelled")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return model.labels[bmu_indices(model, data)]


def u_matrix(model: SomModel) -> np.ndarray:
    """Mean prototype distance of each node to its (up to 8) lattice neighbours."""
    w = model.prototypes.reshape(model.rows, model.cols, -1)
    total = np.zeros((model.rows, model.cols))
    count = np.zeros((model.rows, model.cols))
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            r0, r1 = max(0, -dr), model.rows - max(0, dr)
            c0, c1 = max(0, -dc), model.cols - max(0, dc)
            if r1 <= r0 or c1 <= c0:
                continue
            d = np.linalg.norm(w[r0:r1, c0:c1] - w[r0 + dr : r1 + dr, c0 + dc : c1 + dc], axis=-1)
            total[r0:r1, c0:c1] += d
            count[r0:r1, c0:c1] += 1
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0)


def label_map(model: SomModel) -> np.ndarray:
    if model.labels is None:
        raise ValueError("model has not been labelled")
    return model.labels.reshape(model.rows, model.cols)


def accuracy(model: SomModel, data: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty split")
    return float((classify(model, data) == labels).mean())


def evaluate(models: list[SomModel], train_set, test_set) -> dict:
    """Train/test accuracy of each model plus mean and std over models."""
    if not models:
        raise ValueError("no models to evaluate")
    tr = [accuracy(m, *train_set) for m in models]
    te = [accuracy(m, *test_set) for m in models]
    return {
        "train": tr,
        "test": te,
        "train_mean": float(np.mean(tr)),
        "train_std": float(np.std(tr)),
        "test_mean": float(np.mean(te)),
        "test_std": float(np.std(te)),
    }
