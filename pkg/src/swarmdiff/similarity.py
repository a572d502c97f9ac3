"""Similarity and distance measures between two feature series.

All measures compare two runs step by step, so the series must come from the
same replicate seed and have the same shape.  ``cosine`` is a similarity (1 =
identical); the three others are distances (0 = identical).
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .config import MEASURES, ConfigError, MeasureConfig
from .features import FeatureSeries

LOW, MEDIUM, HIGH = 0, 1, 2


class MissingRunError(ConfigError):
    """A replicate required for a pairwise comparison is absent."""


@dataclass(frozen=True)
class SimilarityScore:
    measure: str
    feature_set: str
    behaviour_a: str
    behaviour_b: str
    mean: float
    std: float
    n: int


def _values(series) -> np.ndarray:
    return np.asarray(series.values if isinstance(series, FeatureSeries) else series, dtype=float)


def _agent_dim(series) -> int | None:
    return series.agent_dim if isinstance(series, FeatureSeries) else None


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    va, vb = _values(a), _values(b)
    if va.ndim != 2 or va.shape != vb.shape:
        raise ValueError(f"series shapes differ: {va.shape} vs {vb.shape}")
    return va, vb


def cosine(a, b) -> float:
    """Mean over steps of the cosine between the two feature vectors.

    A step where both vectors are zero counts as 1, a step where only one of
    them is zero counts as 0.
    """
    va, vb = _pair(a, b)
    na = np.linalg.norm(va, axis=1)
    nb = np.linalg.norm(vb, axis=1)
    dot = np.einsum("ij,ij->i", va, vb)
    both_zero = (na == 0) & (nb == 0)
    denom = na * nb
    cos = np.divide(dot, denom, out=np.zeros_like(dot), where=denom > 0)
    cos = np.where(both_zero, 1.0, np.clip(cos, -1.0, 1.0))
    return float(cos.mean())


def euclidean(a, b) -> float:
    va, vb = _pair(a, b)
    return float(np.linalg.norm(va - vb, axis=1).mean())


def discretise(values: np.ndarray, threshold: float) -> np.ndarray:
    """Bin normalised values: ``< t`` low, ``> 1 - t`` high, medium otherwise."""
    values = np.asarray(values, dtype=float)
    if values.size and (values.min() < 0.0 or values.max() > 1.0 or np.isnan(values).any()):
        raise ValueError("combined state count needs features normalised to [0, 1]")
    bins = np.full(values.shape, MEDIUM, dtype=np.int8)
    bins[values < threshold] = LOW
    bins[values > 1.0 - threshold] = HIGH
    return bins


def state_counts(values: np.ndarray, threshold: float, agent_dim: int | None = None) -> Counter:
    """Occurrence count of each discrete state.

    Swarm-level series contribute one state per step; agent-level series
    (``agent_dim`` features per agent) one state per agent per step.
    """
    bins = discretise(values, threshold)
    if agent_dim is not None:
        bins = bins.reshape(-1, agent_dim)
    return Counter(map(bytes, bins))


def count_map_distance(ca: Mapping, cb: Mapping) -> float:
    """``sum |c_A(s) - c_B(s)| / (sum c_A + sum c_B)``."""
    total = sum(ca.values()) + sum(cb.values())
    if total == 0:
        return 0.0
    diff = sum(abs(ca.get(s, 0) - cb.get(s, 0)) for s in set(ca) | set(cb))
    return diff / total


def combined_state_count(a, b, threshold: float = 1e-2) -> float:
    va, vb = _pair(a, b)
    dim = _agent_dim(a)
    if dim != _agent_dim(b):
        raise ValueError("series disagree on agent-level layout")
    return count_map_distance(state_counts(va, threshold, dim), state_counts(vb, threshold, dim))


def _robot_average(values: np.ndarray, agent_dim: int | None) -> np.ndarray:
    if agent_dim is None:
        return values
    t = values.shape[0]
    return values.reshape(t, -1, agent_dim).mean(axis=1)


def window_means(values: np.ndarray, window: int, agent_dim: int | None = None) -> np.ndarray:
    """Average over robots, then over consecutive ``window``-step blocks (partial tail dropped)."""
    if window < 1:
        raise ConfigError("window must be >= 1")
    values = _robot_average(np.asarray(values, dtype=float), agent_dim)
    n_win = values.shape[0] // window
    if n_win == 0:
        raise ValueError(f"need at least {window} steps, got {values.shape[0]}")
    return values[: n_win * window].reshape(n_win, window, -1).mean(axis=1)


def sampled_average_state(a, b, window: int = 10) -> float:
    va, vb = _pair(a, b)
    dim = _agent_dim(a)
    if dim != _agent_dim(b):
        raise ValueError("series disagree on agent-level layout")
    wa = window_means(va, window, dim)
    wb = window_means(vb, window, dim)
    return float(np.linalg.norm(wa - wb, axis=1).mean())


def score(measure: str, a, b, config: MeasureConfig | None = None) -> float:
    cfg = config or MeasureConfig()
    if measure == "cosine":
        return cosine(a, b)
    if measure == "euclidean":
        return euclidean(a, b)
    if measure == "combined_state_count":
        return combined_state_count(a, b, cfg.state_threshold)
    if measure == "sampled_average_state":
        return sampled_average_state(a, b, cfg.window)
    raise ConfigError(f"unknown measure {measure!r}; expected one of {MEASURES}")


def pairwise_matrix(
    dataset: Mapping[tuple[str, int], FeatureSeries],
    feature_set: str,
    measure: str,
    behaviours: list[str],
    replicates: list[int],
    config: MeasureConfig | None = None,
    include_self: bool = False,
) -> list[SimilarityScore]:
    """Score every unordered behaviour pair over same-seed replicates.

    ``dataset`` maps ``(behaviour, replicate)`` to the feature series of one
    setting.  Scores are aggregated as mean and population standard deviation
    over replicates, in a fixed order.
    """
    missing = [(b, r) for b in behaviours for r in replicates if (b, r) not in dataset]
    if missing:
        raise MissingRunError(f"missing runs for {feature_set}: {missing[:10]}")
    pairs = list(itertools.combinations(behaviours, 2))
    if include_self:
        pairs = [(b, b) for b in behaviours] + pairs
    out = []
    for ba, bb in pairs:
        vals = np.array([score(measure, dataset[ba, r], dataset[bb, r], config) for r in replicates])
        out.append(SimilarityScore(measure, feature_set, ba, bb, float(vals.mean()), float(vals.std()), len(vals)))
    return out
