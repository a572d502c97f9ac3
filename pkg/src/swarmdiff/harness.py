"""End-to-end experiment orchestration and artifact layout.

Layout under the output directory::

    config.json                                  effective configuration
    manifest.json                                trajectory inventory + checksums
    data/<setting>/<behaviour>/run_<k>.csv/.json trajectories
    features/<setting>/<behaviour>/run_<k>.<set>.csv/.json
    similarity/<setting>__<set>__<measure>.csv
    classification/accuracy.csv, accuracy.json, split.json, <set>/...
    summary.json, summary.txt
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .config import BEHAVIOURS, BOUNDS_VERSION, FEATURE_SETS, PRNG_NAME, ConfigError, ExperimentConfig
from .features import FeatureSeries, extract
from .similarity import MissingRunError, pairwise_matrix
from .sim import simulate
from .som import assign_labels, bmu_indices, build_samples, evaluate, init_som, label_map, train, u_matrix

log = logging.getLogger(__name__)

WORKERS_ENV = "SWARMDIFF_WORKERS"
SIMILARITY_HEADER = ["setting", "feature_set", "measure", "behaviour_a", "behaviour_b", "mean", "std", "n"]
ACCURACY_HEADER = ["feature_set", "train_mean", "train_std", "test_mean", "test_std", "n_models"]

_SPLIT_TAG = 0x5B117
_MODEL_TAG = 0x30DE1


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, items, workers: int | None = None):
    """Order-preserving map, optionally over a bounded process pool."""
    workers = worker_count() if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(x: float) -> str:
    return repr(float(x))


def run_keys(config: ExperimentConfig):
    return [
        (s, b, r)
        for s in config.settings
        for b in config.behaviours
        for r in range(config.replicates)
    ]


def sim_digest(config: ExperimentConfig) -> str:
    blob = json.dumps({"base_seed": config.base_seed, "sim": config.to_dict()["sim"]}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# dataset


def _simulate_job(job):
    config, root, (setting, behaviour, rep) = job
    path = io.trajectory_path(root, setting, behaviour, rep)
    traj = simulate(behaviour, setting, rep, config.base_seed, config.sim.total_steps, config.sim)
    io.save_trajectory(traj, path, config.sim)
    return io.sha256_file(path), io.sha256_file(path.with_suffix(".json"))


def _relpath(root: Path, path: Path) -> str:
    return path.relative_to(root).as_posix()


def load_manifest(root: str | Path) -> dict:
    path = Path(root) / "manifest.json"
    return io.read_json(path) if path.exists() else {}


def generate_dataset(config: ExperimentConfig, root: str | Path, workers: int | None = None) -> dict:
    """Simulate every (setting, behaviour, replicate) run not already on disk.

    A run is skipped when its CSV and sidecar match the checksums recorded in
    the manifest for the same simulation configuration.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    io.write_json(root / "config.json", config.to_dict())
    digest = sim_digest(config)
    manifest = load_manifest(root)
    files = manifest.get("files", {}) if manifest.get("sim_digest") == digest else {}

    todo = []
    for key in run_keys(config):
        path = io.trajectory_path(root, *key)
        rel, rel_meta = _relpath(root, path), _relpath(root, path.with_suffix(".json"))
        ok = (
            rel in files
            and rel_meta in files
            and path.exists()
            and path.with_suffix(".json").exists()
            and io.sha256_file(path) == files[rel]
            and io.sha256_file(path.with_suffix(".json")) == files[rel_meta]
        )
        if not ok:
            todo.append(key)

    results = _map(_simulate_job, [(config, root, key) for key in todo], workers)
    for key, (h_csv, h_json) in zip(todo, results):
        path = io.trajectory_path(root, *key)
        files[_relpath(root, path)] = h_csv
        files[_relpath(root, path.with_suffix(".json"))] = h_json

    manifest = {
        "config_hash": config.digest(),
        "sim_digest": digest,
        "tool_version": __version__,
        "prng": PRNG_NAME,
        "files": dict(sorted(files.items())),
    }
    io.write_json(root / "manifest.json", manifest)
    log.info("simulated %d runs, %d already present", len(todo), len(run_keys(config)) - len(todo))
    return {"simulated": len(todo), "skipped": len(run_keys(config)) - len(todo), "total": len(run_keys(config))}


def verify_manifest(root: str | Path) -> list[str]:
    """Paths whose checksum no longer matches the manifest."""
    root = Path(root)
    bad = []
    for rel, digest in load_manifest(root).get("files", {}).items():
        path = root / rel
        if not path.exists() or io.sha256_file(path) != digest:
            bad.append(rel)
    return bad


def _require_runs(config: ExperimentConfig, root: Path) -> None:
    missing = [k for k in run_keys(config) if not io.trajectory_path(root, *k).exists()]
    if missing:
        names = [f"{s}/{b}/run_{r}" for s, b, r in missing[:10]]
        raise MissingRunError(f"{len(missing)} trajectories missing, e.g. {names}")


# ---------------------------------------------------------------------------
# features


def feature_path(root: Path, setting: str, behaviour: str, rep: int, feature_set: str) -> Path:
    return root / "features" / setting / behaviour / f"run_{rep}.{feature_set}.csv"


def feature_cache_key(config: ExperimentConfig, trajectory_checksum: str) -> str:
    """Cache key of a run's features: trajectory bytes plus extraction settings."""
    blob = json.dumps(
        {"trajectory": trajectory_checksum, "features": config.to_dict()["features"], "transient": config.sim.transient},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def _features_job(job):
    config, root, (setting, behaviour, rep) = job
    traj_path = io.trajectory_path(root, setting, behaviour, rep)
    checksum = feature_cache_key(config, io.sha256_file(traj_path))
    stale = []
    for fs in config.feature_sets:
        path = feature_path(root, setting, behaviour, rep, fs)
        side = path.with_suffix(".json")
        if path.exists() and side.exists():
            meta = io.read_json(side)
            if meta.get("bounds_version") == BOUNDS_VERSION and meta.get("source_checksum") == checksum:
                continue
        stale.append(fs)
    if stale:
        traj = io.load_trajectory(traj_path)
        for fs in stale:
            series = extract(traj, fs, config.features, config.sim.transient)
            io.save_features(series, feature_path(root, setting, behaviour, rep, fs), checksum)
    return len(stale)


def compute_features(config: ExperimentConfig, root: str | Path, workers: int | None = None) -> dict:
    """Extract (or reuse cached) feature series for every run and feature set."""
    root = Path(root)
    _require_runs(config, root)
    counts = _map(_features_job, [(config, root, key) for key in run_keys(config)], workers)
    total = len(run_keys(config)) * len(config.feature_sets)
    return {"computed": int(sum(counts)), "cached": total - int(sum(counts)), "total": total}


def load_setting_features(config: ExperimentConfig, root: Path, setting: str, feature_set: str) -> dict:
    out = {}
    for b in config.behaviours:
        for r in range(config.replicates):
            path = feature_path(root, setting, b, r, feature_set)
            if path.exists():
                out[b, r] = io.load_features(path)
    return out


# ---------------------------------------------------------------------------
# similarity


def similarity_path(root: Path, setting: str, feature_set: str, measure: str) -> Path:
    return root / "similarity" / f"{setting}__{feature_set}__{measure}.csv"


def similarity_rows(setting, scores) -> list[list[str]]:
    return [
        [setting, s.feature_set, s.measure, s.behaviour_a, s.behaviour_b, _fmt(s.mean), _fmt(s.std), str(s.n)]
        for s in scores
    ]


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def run_similarity(config: ExperimentConfig, root: str | Path, workers: int | None = None) -> list[Path]:
    """One report per (setting, feature set, measure) with a row per behaviour pair."""
    root = Path(root)
    compute_features(config, root, workers)
    written = []
    reps = list(range(config.replicates))
    for setting in config.settings:
        for fs in config.feature_sets:
            dataset = load_setting_features(config, root, setting, fs)
            for measure in config.measures:
                scores = pairwise_matrix(dataset, fs, measure, config.behaviours, reps, config.measure)
                path = similarity_path(root, setting, fs, measure)
                _write_csv(path, SIMILARITY_HEADER, similarity_rows(setting, scores))
                written.append(path)
    return written


# ---------------------------------------------------------------------------
# classification


def split_replicates(config: ExperimentConfig) -> dict[tuple[str, str], dict[str, list[int]]]:
    """Trajectory-level split, stratified by (setting, behaviour)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([_SPLIT_TAG, config.base_seed])))
    out = {}
    n = config.replicates
    n_train = int(round(config.som.split * n))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    for setting in config.settings:
        for behaviour in config.behaviours:
            perm = rng.permutation(n)
            out[setting, behaviour] = {
                "train": sorted(perm[:n_train].tolist()),
                "test": sorted(perm[n_train:].tolist()),
            }
    return out


def class_label(behaviour: str) -> int:
    return BEHAVIOURS.index(behaviour) + 1


def model_seed(base_seed: int, feature_set: str, index: int) -> int:
    ss = np.random.SeedSequence([_MODEL_TAG, base_seed, FEATURE_SETS.index(feature_set), index])
    return int(ss.generate_state(1, np.uint32)[0])


def _collect(config, root, feature_set, split, part):
    items = []
    for setting in config.settings:
        for behaviour in config.behaviours:
            for r in split[setting, behaviour][part]:
                series = io.load_features(feature_path(root, setting, behaviour, r, feature_set))
                items.append((series, class_label(behaviour)))
    return build_samples(items, config.som.sample_window)


def _train_job(job):
    config, fs, index, x_train, y_train = job
    som = config.som
    model = init_som(som.rows, som.cols, x_train.shape[1], x_train, model_seed(config.base_seed, fs, index))
    train(model, x_train, som.steps, som.learning_rate, som.initial_sigma)
    assign_labels(model, bmu_indices(model, x_train), y_train)
    return model


def export_maps(model, directory: Path, index: int) -> None:
    um = u_matrix(model)
    lm = label_map(model)
    np.savetxt(directory / f"umatrix_{index}.csv", um, delimiter=",", fmt="%.17g")
    np.savetxt(directory / f"labels_{index}.csv", lm, delimiter=",", fmt="%d")
    np.savetxt(directory / f"hits_{index}.csv", model.hits.reshape(model.rows, model.cols), delimiter=",", fmt="%d")
    io.write_pgm(directory / f"umatrix_{index}.pgm", io.minmax_grey(um))
    io.write_pgm(directory / f"labels_{index}.pgm", io.label_grey(lm))


def run_classification(config: ExperimentConfig, root: str | Path, workers: int | None = None) -> dict:
    """Train ``config.som.models`` SOMs per feature set and report accuracies."""
    root = Path(root)
    compute_features(config, root, workers)
    split = split_replicates(config)
    out_dir = root / "classification"
    io.write_json(out_dir / "split.json", {f"{s}/{b}": v for (s, b), v in split.items()})
    results = {}
    for fs in config.feature_sets:
        x_train, y_train, _ = _collect(config, root, fs, split, "train")
        x_test, y_test, _ = _collect(config, root, fs, split, "test")
        if len(y_train) == 0 or len(y_test) == 0:
            raise ConfigError(f"empty train or test split for {fs}")
        jobs = [(config, fs, i, x_train, y_train) for i in range(config.som.models)]
        models = _map(_train_job, jobs, workers)
        report = evaluate(models, (x_train, y_train), (x_test, y_test))
        report["n_train"] = int(len(y_train))
        report["n_test"] = int(len(y_test))
        report["seeds"] = [m.seed for m in models]
        results[fs] = report
        fs_dir = out_dir / fs
        for i, model in enumerate(models):
            io.save_model(model, fs_dir / f"model_{i}")
            export_maps(model, fs_dir, i)
        log.info("%s: train %.3f test %.3f", fs, report["train_mean"], report["test_mean"])
    rows = [
        [fs, _fmt(r["train_mean"]), _fmt(r["train_std"]), _fmt(r["test_mean"]), _fmt(r["test_std"]), str(len(r["test"]))]
        for fs, r in results.items()
    ]
    _write_csv(out_dir / "accuracy.csv", ACCURACY_HEADER, rows)
    io.write_json(out_dir / "accuracy.json", results)
    return results


# ---------------------------------------------------------------------------
# report


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(root: str | Path) -> dict:
    """Collect similarity matrices and the accuracy table into ``summary.json``/``summary.txt``."""
    root = Path(root)
    if not root.is_dir() or not any(root.iterdir()):
        raise ConfigError(f"no artifacts in {root}")
    cfg_path = root / "config.json"
    config = ExperimentConfig.from_dict(io.read_json(cfg_path)) if cfg_path.exists() else ExperimentConfig()
    expected_pairs = list(itertools.combinations(config.behaviours, 2))

    summary = {"similarity": {}, "classification": None, "missing": [], "sources": []}
    for setting in config.settings:
        for fs in config.feature_sets:
            for measure in config.measures:
                path = similarity_path(root, setting, fs, measure)
                rel = _relpath(root, path)
                if not path.exists():
                    summary["missing"].append(rel)
                    continue
                rows = {(r["behaviour_a"], r["behaviour_b"]): r for r in _read_csv(path)}
                gaps = [p for p in expected_pairs if p not in rows]
                if gaps:
                    raise MissingRunError(f"{rel} lacks pairs {gaps}")
                summary["sources"].append(rel)
                summary["similarity"].setdefault(setting, {}).setdefault(fs, {})[measure] = {
                    f"{a}|{b}": {"mean": float(rows[a, b]["mean"]), "std": float(rows[a, b]["std"]), "n": int(rows[a, b]["n"])}
                    for a, b in expected_pairs
                }
    acc_path = root / "classification" / "accuracy.csv"
    if acc_path.exists():
        summary["sources"].append(_relpath(root, acc_path))
        summary["classification"] = {
            r["feature_set"]: {k: float(v) for k, v in r.items() if k != "feature_set"} for r in _read_csv(acc_path)
        }
    else:
        summary["missing"].append(_relpath(root, acc_path))
    if not summary["sources"]:
        raise ConfigError(f"no similarity or classification reports in {root}")

    io.write_json(root / "summary.json", summary)
    (root / "summary.txt").write_text(render_summary(summary, config))
    return summary


def render_summary(summary: dict, config: ExperimentConfig) -> str:
    lines = []
    short = {b: b[:5] for b in config.behaviours}
    for setting, by_fs in summary["similarity"].items():
        for fs, by_measure in by_fs.items():
            for measure, cells in by_measure.items():
                lines.append(f"[{setting}] {fs} / {measure}")
                lines.append("        " + " ".join(f"{short[b]:>13}" for b in config.behaviours))
                for a in config.behaviours:
                    row = []
                    for b in config.behaviours:
                        key = f"{a}|{b}" if f"{a}|{b}" in cells else f"{b}|{a}"
                        c = cells.get(key)
                        row.append(f"{c['mean']:6.3f}±{c['std']:5.3f}" if c else " " * 13)
                    lines.append(f"{short[a]:>7} " + " ".join(row))
                lines.append("")
    if summary["classification"]:
        lines.append("classification accuracy (mean ± std over models)")
        for fs, r in summary["classification"].items():
            lines.append(
                f"  {fs:<13} train {r['train_mean']:.3f}±{r['train_std']:.3f}  test {r['test_mean']:.3f}±{r['test_std']:.3f}"
            )
    if summary["missing"]:
        lines.append("")
        lines.append("missing sections:")
        lines.extend(f"  {m}" for m in summary["missing"])
    return "\n".join(lines) + "\n"
