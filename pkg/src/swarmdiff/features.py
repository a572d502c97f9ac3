"""Per-step feature sets computed from simulated trajectories.

Four sets are supported:

``alharthi2022``
    eight swarm-level scalars (shift, centre of mass, mode index, longest
    path, maximum radius, local density, nearest-neighbour distance, beta index)
``yang2023``
    six swarm-level scalars (collisions, flock density, grouping, stragglers,
    order, subgroups)
``gomes2013``
    ``x, y, vx, vy`` of every agent
``gharbi2023``
    every agent's nearest-neighbour distance, sorted ascending

Raw values are mapped to [0, 1] with a fixed bounds table (see
:func:`bounds_table`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .config import BOUNDS_VERSION, FEATURE_SETS, ArenaConfig, ConfigError, FeatureConfig
from .sim import Trajectory, make_rng, pairwise_distances, subsample_seed

SWARM_LEVEL = ("alharthi2022", "yang2023")
AGENT_DIM = {"gomes2013": 4, "gharbi2023": 1}

ALHARTHI_NAMES = (
    "max_swarm_shift",
    "centre_of_mass",
    "swarm_mode_index",
    "longest_path",
    "max_radius",
    "avg_local_density",
    "avg_nn_distance",
    "beta_index",
)
YANG_NAMES = ("collision_count", "flock_density", "grouping", "straggler_count", "order", "subgroup_count")


@dataclass(frozen=True)
class ProximityGraph:
    n: int
    edges: np.ndarray  # (E, 2), i < j, lexicographic order
    radius: float

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        adj[self.edges[:, 0], self.edges[:, 1]] = True
        adj[self.edges[:, 1], self.edges[:, 0]] = True
        return adj


@dataclass
class FeatureSeries:
    feature_set: str
    meta: dict
    steps: np.ndarray
    values: np.ndarray  # (T, d), normalised
    names: list[str]
    agent_dim: int | None = None  # None for swarm-level sets
    subsample: list[int] | None = None
    bounds_version: str = BOUNDS_VERSION
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# graph substrate


def proximity_graph(positions: np.ndarray, radius: float, arena: ArenaConfig) -> ProximityGraph:
    """All pairs within ``radius`` (inclusive) under the arena metric."""
    if radius <= 0:
        raise ConfigError("radius must be positive")
    positions = np.asarray(positions, dtype=float)
    dist = pairwise_distances(positions, arena)
    i, j = np.nonzero(np.triu(dist <= radius, k=1))
    return ProximityGraph(len(positions), np.column_stack((i, j)).astype(int), float(radius))


def hop_distances(adj: np.ndarray) -> np.ndarray:
    """All-pairs hop counts for a stack of adjacency matrices; ``inf`` between components.

    ``adj`` is (..., N, N) boolean and symmetric.  Breadth-first expansion is
    run for every matrix of the stack at once.
    """
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[-1]
    a = adj.astype(np.float32)
    hops = np.full(adj.shape, np.inf)
    reach = np.broadcast_to(np.eye(n, dtype=bool), adj.shape).copy()
    hops[reach] = 0
    k = 0
    while True:
        k += 1
        grown = reach | (np.matmul(reach.astype(np.float32), a) > 0)
        new = grown & ~reach
        if not new.any():
            return hops
        hops[new] = k
        reach = grown


@dataclass(frozen=True)
class GraphStats:
    n_edges: np.ndarray
    n_nodes: int
    subgroup_count: np.ndarray
    largest_size: np.ndarray
    stragglers: np.ndarray
    largest_diameter: np.ndarray

    @property
    def grouping(self) -> np.ndarray:
        return self.largest_size / self.n_nodes

    @property
    def beta_index(self) -> np.ndarray:
        return self.n_edges / self.n_nodes


def graph_stats(adj: np.ndarray) -> GraphStats:
    """Component statistics of each graph in a (T, N, N) adjacency stack.

    ``largest_diameter`` is the hop diameter of the largest component; when
    several components share the largest size the widest one counts, which
    keeps the value independent of agent labelling.
    """
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[-1]
    hops = hop_distances(adj)
    reach = np.isfinite(hops)
    root = reach.argmax(axis=2)  # lowest member index of each node's component
    size = reach.sum(axis=2)
    is_root = root == np.arange(n)
    largest = size.max(axis=1)
    ecc = np.where(reach, hops, 0).max(axis=2)
    return GraphStats(
        n_edges=np.triu(adj, k=1).sum(axis=(1, 2)),
        n_nodes=n,
        subgroup_count=is_root.sum(axis=1),
        largest_size=largest,
        stragglers=(is_root & (size == 1)).sum(axis=1),
        largest_diameter=np.where(size == largest[:, None], ecc, 0).max(axis=1).astype(int),
    )


def _adjacency(dist: np.ndarray, radius: float) -> np.ndarray:
    adj = dist <= radius
    n = adj.shape[-1]
    adj[..., np.arange(n), np.arange(n)] = False
    return adj


# ---------------------------------------------------------------------------
# raw features


def _nn_distances(dist: np.ndarray) -> np.ndarray:
    d = dist.copy()
    idx = np.arange(d.shape[-1])
    d[..., idx, idx] = np.inf
    return d.min(axis=-1)


def _distances_over_time(positions: np.ndarray, arena: ArenaConfig) -> np.ndarray:
    d = positions[:, None, :, :] - positions[:, :, None, :]
    if arena.periodic:
        d = d - arena.side * np.round(d / arena.side)
    return np.linalg.norm(d, axis=-1)


def _centroid_shift(positions: np.ndarray, arena: ArenaConfig) -> np.ndarray:
    """|mean per-agent displacement| for each step; 0 at the first step."""
    disp = np.diff(positions, axis=0)
    if arena.periodic:
        disp = disp - arena.side * np.round(disp / arena.side)
    shift = np.linalg.norm(disp.mean(axis=1), axis=-1)
    return np.concatenate(([0.0], shift))


def _rolling_max(x: np.ndarray, window: int) -> np.ndarray:
    out = np.empty_like(x)
    for t in range(len(x)):
        out[t] = x[max(0, t - window + 1) : t + 1].max()
    return out


def swarm_mode_index(positions: np.ndarray, arena: ArenaConfig, threshold: float, cell: float) -> np.ndarray:
    """Fraction of agents within ``threshold * side / 2`` of the densest grid cell's centre.

    ``positions`` is (T, N, 2); the densest cell is the first in (ix, iy)
    row-major order on ties.
    """
    ncell = max(1, int(math.ceil(arena.side / cell)))
    T, N, _ = positions.shape
    ij = np.minimum((positions // cell).astype(int), ncell - 1)
    flat = ij[..., 0] * ncell + ij[..., 1] + (np.arange(T) * ncell * ncell)[:, None]
    counts = np.bincount(flat.ravel(), minlength=T * ncell * ncell).reshape(T, ncell * ncell)
    best = counts.argmax(axis=1)
    centre = np.column_stack((best // ncell, best % ncell)).astype(float) * cell + cell / 2
    d = positions - centre[:, None, :]
    if arena.periodic:
        d = d - arena.side * np.round(d / arena.side)
    r = np.linalg.norm(d, axis=-1)
    return (r <= threshold * arena.side / 2).mean(axis=1)


def hull_area(points: np.ndarray) -> float:
    """Convex-hull area, or the bounding-box area when the hull is degenerate."""
    try:
        return float(ConvexHull(points).volume)
    except (QhullError, ValueError):
        span = points.max(axis=0) - points.min(axis=0)
        return float(span[0] * span[1])


def raw_alharthi(positions, headings, arena, speed, cfg: FeatureConfig) -> np.ndarray:
    T, N, _ = positions.shape
    dist = _distances_over_time(positions, arena)
    centroid = positions.mean(axis=1)
    out = np.empty((T, 8))
    out[:, 0] = _rolling_max(_centroid_shift(positions, arena), cfg.shift_window)
    out[:, 1] = np.linalg.norm(centroid - arena.side / 2, axis=-1)
    out[:, 2] = swarm_mode_index(positions, arena, cfg.mode_threshold, cfg.mode_cell)
    out[:, 4] = np.linalg.norm(positions - centroid[:, None, :], axis=-1).max(axis=1)
    adj = _adjacency(dist, cfg.connection_radius)
    out[:, 5] = adj.sum(axis=2).mean(axis=1) / (N - 1)
    out[:, 6] = _nn_distances(dist).mean(axis=1)
    stats = graph_stats(adj)
    out[:, 3] = stats.largest_diameter
    out[:, 7] = stats.beta_index
    return out


def raw_yang(positions, headings, arena, speed, cfg: FeatureConfig) -> np.ndarray:
    T, N, _ = positions.shape
    dist = _distances_over_time(positions, arena)
    upper = np.triu(np.ones((N, N), dtype=bool), k=1)
    stats = graph_stats(_adjacency(dist, cfg.connection_radius))
    out = np.empty((T, 6))
    out[:, 0] = ((dist < cfg.collision_radius) & upper).sum(axis=(1, 2))
    out[:, 1] = [N / (cfg.hull_epsilon + hull_area(p)) for p in positions]
    out[:, 2] = stats.grouping
    out[:, 3] = stats.stragglers
    out[:, 4] = np.hypot(np.cos(headings).mean(axis=1), np.sin(headings).mean(axis=1))
    out[:, 5] = stats.subgroup_count
    return out


def raw_gomes(positions, headings, arena, speed, cfg: FeatureConfig) -> np.ndarray:
    T, N, _ = positions.shape
    per_agent = np.stack(
        (positions[..., 0], positions[..., 1], speed * np.cos(headings), speed * np.sin(headings)), axis=-1
    )
    return per_agent.reshape(T, N * 4)


def raw_gharbi(positions, headings, arena, speed, cfg: FeatureConfig) -> np.ndarray:
    return np.sort(_nn_distances(_distances_over_time(positions, arena)), axis=1)


_RAW = {
    "alharthi2022": raw_alharthi,
    "yang2023": raw_yang,
    "gomes2013": raw_gomes,
    "gharbi2023": raw_gharbi,
}


def feature_names(feature_set: str, n_agents: int) -> list[str]:
    if feature_set == "alharthi2022":
        return list(ALHARTHI_NAMES)
    if feature_set == "yang2023":
        return list(YANG_NAMES)
    if feature_set == "gomes2013":
        return [f"{c}_{i}" for i in range(n_agents) for c in ("x", "y", "vx", "vy")]
    if feature_set == "gharbi2023":
        return [f"nn_{i}" for i in range(n_agents)]
    raise ConfigError(f"unknown feature set {feature_set!r}")


def bounds_table(feature_set: str, n_agents: int, side: float, speed: float) -> dict[str, tuple[float, float]]:
    """Fixed (lo, hi) normalisation bounds of every feature of a set."""
    n = n_agents
    dmax = side * math.sqrt(2.0)
    pairs = n * (n - 1) / 2
    if feature_set == "alharthi2022":
        return {
            "max_swarm_shift": (0.0, speed),
            "centre_of_mass": (0.0, dmax),
            "swarm_mode_index": (0.0, 1.0),
            "longest_path": (0.0, max(n - 1, 1)),
            "max_radius": (0.0, dmax),
            "avg_local_density": (0.0, 1.0),
            "avg_nn_distance": (0.0, dmax),
            "beta_index": (0.0, max((n - 1) / 2, 1.0)),
        }
    if feature_set == "yang2023":
        return {
            "collision_count": (0.0, max(pairs, 1.0)),
            "flock_density": (0.0, float(n)),  # n / (eps + area) with eps = 1
            "grouping": (0.0, 1.0),
            "straggler_count": (0.0, float(n)),
            "order": (0.0, 1.0),
            "subgroup_count": (0.0, float(n)),
        }
    if feature_set == "gomes2013":
        b = {}
        for i in range(n):
            b.update({f"x_{i}": (0.0, side), f"y_{i}": (0.0, side), f"vx_{i}": (-speed, speed), f"vy_{i}": (-speed, speed)})
        return b
    if feature_set == "gharbi2023":
        return {f"nn_{i}": (0.0, dmax) for i in range(n)}
    raise ConfigError(f"unknown feature set {feature_set!r}")


def normalize(values: np.ndarray, names: list[str], bounds: dict[str, tuple[float, float]]) -> np.ndarray:
    """``clip((v - lo) / (hi - lo), 0, 1)`` column by column."""
    missing = [n for n in names if n not in bounds]
    if missing:
        raise ConfigError(f"no normalisation bounds for {missing[:5]}")
    lo = np.array([bounds[n][0] for n in names])
    hi = np.array([bounds[n][1] for n in names])
    return np.clip((np.asarray(values, dtype=float) - lo) / (hi - lo), 0.0, 1.0)


# ---------------------------------------------------------------------------
# trajectory-level API


def subsample_agents(trajectory: Trajectory, k: int, seed) -> tuple[Trajectory, list[int]]:
    """Restrict a trajectory to a random ``k``-subset of agents (original order kept)."""
    n = trajectory.n_agents
    if k > n:
        raise ConfigError(f"cannot subsample {k} agents out of {n}")
    if k == n:
        return trajectory, list(range(n))
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    idx = np.sort(make_rng(seed).choice(n, k, replace=False))
    sub = Trajectory(
        trajectory.behaviour_id,
        trajectory.setting,
        trajectory.replicate,
        trajectory.base_seed,
        trajectory.speed,
        trajectory.side,
        trajectory.positions[:, idx],
        trajectory.headings[:, idx],
    )
    return sub, idx.tolist()


def extract(
    trajectory: Trajectory,
    feature_set: str,
    config: FeatureConfig | None = None,
    transient: int = 250,
) -> FeatureSeries:
    """Normalised per-step features for steps ``transient..end`` of a trajectory.

    Agent-level sets on swarms larger than ``config.subsample`` are computed on
    a fixed random subset of agents; the subset depends on
    ``(base_seed, setting, replicate)`` only, so runs of different behaviours
    sharing a seed use the same agents.
    """
    if feature_set not in FEATURE_SETS:
        raise ConfigError(f"unknown feature set {feature_set!r}")
    cfg = config or FeatureConfig()
    if not 0 <= transient < trajectory.n_steps:
        raise ConfigError("transient must be smaller than the trajectory length")
    subset = None
    if feature_set in AGENT_DIM and trajectory.n_agents > cfg.subsample:
        seed = subsample_seed(trajectory.base_seed, trajectory.setting, trajectory.replicate)
        trajectory, subset = subsample_agents(trajectory, cfg.subsample, seed)
    n = trajectory.n_agents
    if n < 2 and feature_set != "gomes2013":
        raise ConfigError("nearest-neighbour features need at least two agents")

    raw = _RAW[feature_set](trajectory.positions, trajectory.headings, trajectory.arena, trajectory.speed, cfg)
    names = feature_names(feature_set, n)
    bounds = bounds_table(feature_set, n, trajectory.side, trajectory.speed)
    values = normalize(raw[transient:], names, bounds)
    return FeatureSeries(
        feature_set=feature_set,
        meta=trajectory.meta,
        steps=np.arange(transient, trajectory.n_steps),
        values=values,
        names=names,
        agent_dim=AGENT_DIM.get(feature_set),
        subsample=subset,
    )
