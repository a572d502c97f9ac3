"""On-disk formats: trajectory/feature CSVs with JSON sidecars, SOM models, PGM maps."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .config import BOUNDS_VERSION, PRNG_NAME, SimConfig
from .features import FeatureSeries
from .sim import Trajectory
from .som import SomModel

TRAJECTORY_HEADER = "step,agent,x,y,heading"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path: str | Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def trajectory_path(root: str | Path, setting: str, behaviour: str, replicate: int) -> Path:
    return Path(root) / "data" / setting / behaviour / f"run_{replicate}.csv"


def _atomic_savetxt(path: Path, array, fmt, header: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    np.savetxt(tmp, array, fmt=fmt, delimiter=",", header=header, comments="")
    tmp.replace(path)


def save_trajectory(trajectory: Trajectory, path: str | Path, sim_config: SimConfig | None = None) -> None:
    """CSV of ``step,agent,x,y,heading`` rows plus a ``.json`` metadata sidecar."""
    path = Path(path)
    T, N = trajectory.n_steps, trajectory.n_agents
    steps = np.repeat(np.arange(T), N)
    agents = np.tile(np.arange(N), T)
    rows = np.column_stack(
        (steps, agents, trajectory.positions.reshape(-1, 2), trajectory.headings.reshape(-1))
    )
    _atomic_savetxt(path, rows, ["%d", "%d", "%.17g", "%.17g", "%.17g"], TRAJECTORY_HEADER)
    meta = {
        "behaviour": trajectory.behaviour_id,
        "setting": trajectory.setting,
        "replicate": trajectory.replicate,
        "base_seed": trajectory.base_seed,
        "speed": trajectory.speed,
        "side": trajectory.side,
        "n_steps": T,
        "n_agents": N,
        "prng": PRNG_NAME,
    }
    if sim_config is not None:
        meta["params"] = dataclasses.asdict(sim_config.params(trajectory.behaviour_id))
    write_json(path.with_suffix(".json"), meta)


def load_trajectory(path: str | Path) -> Trajectory:
    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    T, N = meta["n_steps"], meta["n_agents"]
    if rows.shape != (T * N, 5):
        raise ValueError(f"{path}: expected {T * N} rows, found {rows.shape[0]}")
    positions = rows[:, 2:4].reshape(T, N, 2)
    headings = rows[:, 4].reshape(T, N)
    positions.setflags(write=False)
    headings.setflags(write=False)
    return Trajectory(
        meta["behaviour"], meta["setting"], meta["replicate"], meta["base_seed"],
        meta["speed"], meta["side"], positions, headings,
    )


def save_features(series: FeatureSeries, path: str | Path, source_checksum: str | None = None) -> None:
    path = Path(path)
    header = "step," + ",".join(f"f{i}" for i in range(series.dim))
    rows = np.column_stack((series.steps, series.values))
    _atomic_savetxt(path, rows, ["%d"] + ["%.17g"] * series.dim, header)
    write_json(
        path.with_suffix(".json"),
        {
            "feature_set": series.feature_set,
            "meta": series.meta,
            "names": series.names,
            "agent_dim": series.agent_dim,
            "subsample": series.subsample,
            "bounds_version": series.bounds_version,
            "source_checksum": source_checksum,
        },
    )


def load_features(path: str | Path) -> FeatureSeries:
    path = Path(path)
    side = read_json(path.with_suffix(".json"))
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return FeatureSeries(
        feature_set=side["feature_set"],
        meta=side["meta"],
        steps=rows[:, 0].astype(int),
        values=rows[:, 1:],
        names=side["names"],
        agent_dim=side["agent_dim"],
        subsample=side["subsample"],
        bounds_version=side.get("bounds_version", BOUNDS_VERSION),
        extra={"source_checksum": side.get("source_checksum")},
    )


def save_model(model: SomModel, prefix: str | Path) -> None:
    """``<prefix>.json`` header and ``<prefix>.bin`` little-endian float64 prototypes."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    model.prototypes.astype("<f8").tofile(prefix.with_suffix(".bin"))
    write_json(
        prefix.with_suffix(".json"),
        {
            "rows": model.rows,
            "cols": model.cols,
            "dim": model.dim,
            "seed": model.seed,
            "learning_rate": model.learning_rate,
            "sigma0": model.sigma0,
            "steps": model.steps,
            "decay": "x0 / (1 + 2 t / T)",
            "neighbourhood": "gaussian",
            "labels": None if model.labels is None else model.labels.tolist(),
            "hits": None if model.hits is None else model.hits.tolist(),
            "extra": model.extra,
        },
    )


def load_model(prefix: str | Path) -> SomModel:
    prefix = Path(prefix)
    head = read_json(prefix.with_suffix(".json"))
    protos = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8").reshape(head["rows"] * head["cols"], head["dim"])
    return SomModel(
        head["rows"], head["cols"], protos, head["seed"], head["learning_rate"], head["sigma0"], head["steps"],
        None if head["labels"] is None else np.array(head["labels"]),
        None if head["hits"] is None else np.array(head["hits"]),
        head.get("extra", {}),
    )


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Binary 8-bit greyscale PGM (P5)."""
    img = np.asarray(image, dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def minmax_grey(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    span = v.max() - v.min()
    if span == 0:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.round(255 * (v - v.min()) / span).astype(np.uint8)


def label_grey(labels: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(labels) * 36, 0, 255).astype(np.uint8)
