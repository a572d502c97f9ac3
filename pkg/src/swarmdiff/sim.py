"""Constant-speed point-agent simulator for the six collective behaviours.

Agents are stored as ``positions`` (N, 2) and ``headings`` (N,) arrays; the
speed is shared and never changes, so the velocity magnitude is constant by
construction.  Every update is a pure function of the previous state and the
run's random stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import (
    BEHAVIOURS,
    SETTINGS,
    ArenaConfig,
    BehaviourParams,
    ConfigError,
    SimConfig,
    setting_info,
)

TWO_PI = 2.0 * np.pi

_SEED_TAG_INIT = 0x1A17
_SEED_TAG_RUN = 0x57E9
_SEED_TAG_SUBSAMPLE = 0x5B5A


def _setting_ordinal(setting: str) -> int:
    setting_info(setting)
    return list(SETTINGS).index(setting)


def _behaviour_ordinal(behaviour_id: str) -> int:
    if behaviour_id not in BEHAVIOURS:
        raise ConfigError(f"unknown behaviour {behaviour_id!r}")
    return BEHAVIOURS.index(behaviour_id)


def init_seed(base_seed: int, setting: str, replicate_index: int) -> np.random.SeedSequence:
    """Seed of the initial condition; shared by all behaviours of one replicate."""
    return np.random.SeedSequence(
        [_SEED_TAG_INIT, base_seed, _setting_ordinal(setting), replicate_index]
    )


def run_seed(base_seed: int, behaviour_id: str, setting: str, replicate_index: int) -> np.random.SeedSequence:
    """Seed of the per-step noise stream of one run."""
    return np.random.SeedSequence(
        [_SEED_TAG_RUN, base_seed, _behaviour_ordinal(behaviour_id), _setting_ordinal(setting), replicate_index]
    )


def subsample_seed(base_seed: int, setting: str, replicate_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        [_SEED_TAG_SUBSAMPLE, base_seed, _setting_ordinal(setting), replicate_index]
    )


def make_rng(seed: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class SwarmState:
    step_index: int
    positions: np.ndarray
    headings: np.ndarray
    speed: float

    def __post_init__(self):
        self.positions.setflags(write=False)
        self.headings.setflags(write=False)

    @property
    def n_agents(self) -> int:
        return len(self.headings)

    @property
    def velocities(self) -> np.ndarray:
        return self.speed * np.column_stack((np.cos(self.headings), np.sin(self.headings)))


@dataclass(frozen=True)
class Trajectory:
    behaviour_id: str
    setting: str
    replicate: int
    base_seed: int
    speed: float
    side: float
    positions: np.ndarray  # (T, N, 2)
    headings: np.ndarray  # (T, N)

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0]

    @property
    def n_agents(self) -> int:
        return self.positions.shape[1]

    @property
    def arena(self) -> ArenaConfig:
        return ArenaConfig(self.side, setting_info(self.setting)[1])

    @property
    def meta(self) -> dict:
        return {
            "behaviour": self.behaviour_id,
            "setting": self.setting,
            "replicate": self.replicate,
            "base_seed": self.base_seed,
        }

    def state(self, t: int) -> SwarmState:
        return SwarmState(t, self.positions[t].copy(), self.headings[t].copy(), self.speed)


def init_swarm(
    behaviour_id: str,
    setting: str,
    replicate_index: int,
    base_seed: int,
    side: float = 500.0,
    speed: float = 2.0,
) -> SwarmState:
    """Uniform random positions over the arena and uniform headings in [0, 2π).

    The draw depends only on ``(base_seed, setting, replicate_index)`` so that
    different behaviours of the same replicate start from the same swarm.
    """
    _behaviour_ordinal(behaviour_id)
    n, _ = setting_info(setting)
    if replicate_index < 0:
        raise ConfigError("replicate_index must be non-negative")
    rng = make_rng(init_seed(base_seed, setting, replicate_index))
    positions = rng.uniform(0.0, side, size=(n, 2))
    headings = rng.uniform(0.0, TWO_PI, size=n)
    return SwarmState(0, positions, headings, speed)


def wrap_angle(a):
    """Map angles to [-π, π)."""
    return (np.asarray(a) + np.pi) % TWO_PI - np.pi


def pairwise_offsets(positions: np.ndarray, arena: ArenaConfig) -> np.ndarray:
    """``d[i, j] = p_j - p_i``, minimum-image under the toroidal arena."""
    d = positions[None, :, :] - positions[:, None, :]
    if arena.periodic:
        d = d - arena.side * np.round(d / arena.side)
    return d


def pairwise_distances(positions: np.ndarray, arena: ArenaConfig) -> np.ndarray:
    return np.linalg.norm(pairwise_offsets(positions, arena), axis=-1)


def apply_boundary(positions: np.ndarray, headings: np.ndarray, arena: ArenaConfig):
    """Wrap (unbounded) or specularly reflect (bounded) positions back into the arena.

    Positions may lie outside by at most one step length.
    """
    pos = np.array(positions, dtype=float, copy=True)
    hd = np.array(headings, dtype=float, copy=True)
    side = arena.side
    if arena.periodic:
        pos = np.mod(pos, side)
        pos[pos >= side] -= side
        return pos, hd
    vx, vy = np.cos(hd), np.sin(hd)
    flip_x = (pos[..., 0] < 0) | (pos[..., 0] > side)
    flip_y = (pos[..., 1] < 0) | (pos[..., 1] > side)
    pos[..., 0] = np.where(pos[..., 0] < 0, -pos[..., 0], pos[..., 0])
    pos[..., 0] = np.where(pos[..., 0] > side, 2 * side - pos[..., 0], pos[..., 0])
    pos[..., 1] = np.where(pos[..., 1] < 0, -pos[..., 1], pos[..., 1])
    pos[..., 1] = np.where(pos[..., 1] > side, 2 * side - pos[..., 1], pos[..., 1])
    if np.any(flip_x | flip_y):
        vx = np.where(flip_x, -vx, vx)
        vy = np.where(flip_y, -vy, vy)
        hd = np.where(flip_x | flip_y, np.arctan2(vy, vx) % TWO_PI, hd)
    return pos, hd


def _steer(headings, desired, has_target, max_turn):
    delta = np.clip(wrap_angle(desired - headings), -max_turn, max_turn)
    return np.where(has_target, headings + delta, headings)


def _neighbour_mask(dist, radius):
    mask = dist < radius
    np.fill_diagonal(mask, False)
    return mask


def _rule_ballistic(state, params, arena, rng):
    return state.headings


def _rule_brownian(state, params, arena, rng):
    return state.headings + rng.normal(0.0, params.turn_sigma, size=state.n_agents)


def _rule_vicsek(state, params, arena, rng):
    dist = pairwise_distances(state.positions, arena)
    within = dist < params.interaction_radius  # includes self
    s = within @ np.sin(state.headings)
    c = within @ np.cos(state.headings)
    noise = rng.uniform(-params.noise_eta / 2, params.noise_eta / 2, size=state.n_agents)
    return np.arctan2(s, c) + noise


def _rule_aggregation(state, params, arena, rng):
    d = pairwise_offsets(state.positions, arena)
    mask = _neighbour_mask(np.linalg.norm(d, axis=-1), params.interaction_radius)
    count = mask.sum(axis=1)
    to_centroid = (d * mask[..., None]).sum(axis=1) / np.maximum(count, 1)[:, None]
    desired = np.arctan2(to_centroid[:, 1], to_centroid[:, 0])
    return _steer(state.headings, desired, count > 0, params.max_turn)


def _rule_dispersion(state, params, arena, rng):
    d = pairwise_offsets(state.positions, arena)
    dist = np.linalg.norm(d, axis=-1)
    np.fill_diagonal(dist, np.inf)
    nearest = np.argmin(dist, axis=1)  # first index on ties
    idx = np.arange(state.n_agents)
    has = dist[idx, nearest] < params.interaction_radius
    away = -d[idx, nearest]
    desired = np.arctan2(away[:, 1], away[:, 0])
    return _steer(state.headings, desired, has, params.max_turn)


def _unit_rows(v):
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, norm, out=np.zeros_like(v), where=norm > 0)


def _rule_reynolds(state, params, arena, rng):
    d = pairwise_offsets(state.positions, arena)
    dist = np.linalg.norm(d, axis=-1)
    near = _neighbour_mask(dist, params.interaction_radius)
    close = _neighbour_mask(dist, params.separation_radius)
    count = near.sum(axis=1)

    unit_d = np.divide(d, dist[..., None], out=np.zeros_like(d), where=dist[..., None] > 0)
    separation = _unit_rows(-(unit_d * close[..., None]).sum(axis=1))
    heading_vec = np.column_stack((np.cos(state.headings), np.sin(state.headings)))
    alignment = _unit_rows(near.astype(float) @ heading_vec)
    cohesion = _unit_rows((d * near[..., None]).sum(axis=1))

    steer = params.w_sep * separation + params.w_align * alignment + params.w_coh * cohesion
    has = (count > 0) & (np.linalg.norm(steer, axis=1) > 0)
    desired = np.arctan2(steer[:, 1], steer[:, 0])
    return _steer(state.headings, desired, has, params.max_turn)


RULES: dict[str, Callable] = {
    "reynolds": _rule_reynolds,
    "vicsek": _rule_vicsek,
    "aggregation": _rule_aggregation,
    "dispersion": _rule_dispersion,
    "ballistic": _rule_ballistic,
    "brownian": _rule_brownian,
}


def step(state: SwarmState, params: BehaviourParams, arena: ArenaConfig, rng: np.random.Generator) -> SwarmState:
    """Advance one step: heading rule, then move by ``speed``, then boundary."""
    headings = np.mod(RULES[params.behaviour_id](state, params, arena, rng), TWO_PI)
    moved = state.positions + state.speed * np.column_stack((np.cos(headings), np.sin(headings)))
    positions, headings = apply_boundary(moved, headings, arena)
    return SwarmState(state.step_index + 1, positions, headings, state.speed)


def simulate(
    behaviour_id: str,
    setting: str,
    replicate_index: int,
    base_seed: int,
    total_steps: int = 1250,
    config: SimConfig | None = None,
) -> Trajectory:
    config = config or SimConfig()
    if total_steps < config.transient + 1:
        raise ConfigError(f"total_steps must be >= {config.transient + 1}, got {total_steps}")
    params = config.params(behaviour_id)
    arena = config.arena(setting)
    state = init_swarm(behaviour_id, setting, replicate_index, base_seed, config.side, config.speed)
    rng = make_rng(run_seed(base_seed, behaviour_id, setting, replicate_index))

    positions = np.empty((total_steps, state.n_agents, 2))
    headings = np.empty((total_steps, state.n_agents))
    positions[0], headings[0] = state.positions, state.headings
    for t in range(1, total_steps):
        state = step(state, params, arena, rng)
        positions[t], headings[t] = state.positions, state.headings
    positions.setflags(write=False)
    headings.setflags(write=False)
    return Trajectory(
        behaviour_id, setting, replicate_index, base_seed, config.speed, config.side, positions, headings
    )


def order_parameter(headings: np.ndarray) -> np.ndarray:
    """|mean unit heading| along the last axis."""
    return np.hypot(np.cos(headings).mean(axis=-1), np.sin(headings).mean(axis=-1))


def mean_nn_distance(positions: np.ndarray, arena: ArenaConfig) -> float:
    dist = pairwise_distances(positions, arena)
    np.fill_diagonal(dist, np.inf)
    return float(dist.min(axis=1).mean())
