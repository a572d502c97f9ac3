import csv
import json

import numpy as np
import pytest

from swarmdiff import harness, io
from swarmdiff.cli import main
from swarmdiff.config import ConfigError, ExperimentConfig, load_config
from swarmdiff.features import extract
from swarmdiff.sim import simulate
from swarmdiff.similarity import MissingRunError
from swarmdiff.som import init_som, label_nodes, train

TINY = {
    "base_seed": 3,
    "replicates": 2,
    "settings": ["40b", "30b"],
    "sim": {"total_steps": 270},
    "som": {"rows": 5, "cols": 5, "steps": 400, "models": 2},
}


@pytest.fixture(scope="module")
def tiny_config():
    return ExperimentConfig.from_dict(TINY)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, tiny_config):
    root = tmp_path_factory.mktemp("run")
    harness.generate_dataset(tiny_config, root)
    harness.run_similarity(tiny_config, root)
    results = harness.run_classification(tiny_config, root)
    summary = harness.report(root)
    return root, results, summary


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.replicates == 50 and cfg.sim.total_steps == 1250 and cfg.sim.transient == 250
    assert cfg.measure.state_threshold == 1e-2 and cfg.measure.window == 10
    assert cfg.features.mode_threshold == 0.5
    assert (cfg.som.rows, cfg.som.cols, cfg.som.steps, cfg.som.learning_rate) == (46, 46, 180000, 0.1)
    assert cfg.som.split == 0.8 and cfg.som.models == 3 and cfg.som.initial_sigma == 23
    assert len(harness.run_keys(cfg)) == 900


@pytest.mark.parametrize(
    "bad",
    [{"replicates": 0}, {"sim": {"transient": 2000}}, {"som": {"split": 1.0}}, {"settings": ["50x"]}, {"nope": 1}],
)
def test_config_validation(bad):
    with pytest.raises((ConfigError, TypeError)):
        ExperimentConfig.from_dict(bad)


def test_trajectory_roundtrip(tmp_path):
    tr = simulate("vicsek", "40u", 1, 2, total_steps=260)
    path = tmp_path / "run_1.csv"
    io.save_trajectory(tr, path)
    assert path.read_text().splitlines()[0] == "step,agent,x,y,heading"
    back = io.load_trajectory(path)
    assert back.positions.tobytes() == tr.positions.tobytes()
    assert back.headings.tobytes() == tr.headings.tobytes()
    meta = io.read_json(path.with_suffix(".json"))
    assert {"behaviour", "setting", "replicate", "base_seed", "speed", "prng"} <= set(meta)


def test_features_roundtrip(tmp_path):
    s = extract(simulate("reynolds", "40b", 0, 0, total_steps=260), "gomes2013")
    io.save_features(s, tmp_path / "f.csv", "abc")
    assert (tmp_path / "f.csv").read_text().startswith("step,f0,f1,")
    back = io.load_features(tmp_path / "f.csv")
    assert np.array_equal(back.values, s.values) and back.subsample == s.subsample
    assert back.agent_dim == 4 and back.bounds_version == s.bounds_version


def test_model_roundtrip_and_pgm(tmp_path):
    x = np.random.default_rng(0).random((20, 3))
    m = label_nodes(train(init_som(3, 4, 3, x, 1), x, steps=50), x, np.arange(20) % 3 + 1)
    io.save_model(m, tmp_path / "model_0")
    back = io.load_model(tmp_path / "model_0")
    assert np.array_equal(back.prototypes, m.prototypes)
    assert np.array_equal(back.labels, m.labels)
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    io.write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(io.read_pgm(tmp_path / "a.pgm"), img)
    assert io.label_grey(np.array([1, 6])).tolist() == [36, 216]


def test_dataset_layout_and_manifest(pipeline, tiny_config):
    root, _, _ = pipeline
    assert io.trajectory_path(root, "30b", "brownian", 1).exists()
    manifest = io.read_json(root / "manifest.json")
    assert len(manifest["files"]) == 2 * len(harness.run_keys(tiny_config))
    assert manifest["prng"].startswith("numpy.random.PCG64")
    assert harness.verify_manifest(root) == []


def test_dataset_resume_and_regenerate(pipeline, tiny_config):
    root, _, _ = pipeline
    assert harness.generate_dataset(tiny_config, root)["simulated"] == 0
    path = io.trajectory_path(root, "40b", "aggregation", 0)
    original = path.read_bytes()
    path.unlink()
    stats = harness.generate_dataset(tiny_config, root)
    assert stats["simulated"] == 1
    assert path.read_bytes() == original


def test_tampered_file_detected(tmp_path, tiny_config):
    cfg = ExperimentConfig.from_dict({**TINY, "replicates": 1, "settings": ["30b"], "behaviours": ["ballistic"]})
    harness.generate_dataset(cfg, tmp_path)
    path = io.trajectory_path(tmp_path, "30b", "ballistic", 0)
    path.write_text(path.read_text().replace("0,0,", "0,0,1", 1))
    assert harness.verify_manifest(tmp_path) == ["data/30b/ballistic/run_0.csv"]
    assert harness.generate_dataset(cfg, tmp_path)["simulated"] == 1
    assert harness.verify_manifest(tmp_path) == []


def test_similarity_reports(pipeline, tiny_config):
    root, _, _ = pipeline
    files = sorted((root / "similarity").glob("*.csv"))
    assert len(files) == 2 * 4 * 4
    for f in files:
        with open(f) as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == harness.SIMILARITY_HEADER
        assert len(rows) == 15
        if "__cosine" in f.name:
            assert all(0 <= float(r["mean"]) <= 1 for r in rows)
        assert all(int(r["n"]) == 2 and float(r["std"]) >= 0 for r in rows)


def test_similarity_rerun_identical(pipeline, tiny_config):
    root, _, _ = pipeline
    before = {f.name: f.read_bytes() for f in (root / "similarity").glob("*.csv")}
    harness.run_similarity(tiny_config, root)
    after = {f.name: f.read_bytes() for f in (root / "similarity").glob("*.csv")}
    assert before == after


def test_feature_cache_reused(pipeline, tiny_config):
    root, _, _ = pipeline
    stats = harness.compute_features(tiny_config, root)
    assert stats["computed"] == 0 and stats["cached"] == stats["total"]


def test_classification_outputs(pipeline, tiny_config):
    root, results, _ = pipeline
    assert set(results) == set(tiny_config.feature_sets)
    for fs, r in results.items():
        assert len(r["train"]) == len(r["test"]) == 2
        d = root / "classification" / fs
        for i in range(2):
            for name in (f"model_{i}.json", f"model_{i}.bin", f"umatrix_{i}.csv", f"umatrix_{i}.pgm", f"labels_{i}.pgm"):
                assert (d / name).exists()
        assert io.read_pgm(d / "umatrix_0.pgm").shape == (5, 5)
    with open(root / "classification" / "accuracy.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["feature_set"] for r in rows] == list(tiny_config.feature_sets)
    assert list(rows[0]) == harness.ACCURACY_HEADER


def test_split_is_trajectory_level(tiny_config):
    split = harness.split_replicates(ExperimentConfig.from_dict({**TINY, "replicates": 10}))
    for v in split.values():
        assert len(v["train"]) == 8 and len(v["test"]) == 2
        assert not set(v["train"]) & set(v["test"])


def test_report_summary(pipeline):
    root, _, summary = pipeline
    assert len(summary["sources"]) == 2 * 16 + 1
    assert summary["missing"] == []
    assert (root / "summary.txt").read_text().count("classification accuracy") == 1
    again = harness.report(root)
    assert again == summary


def test_report_flags_missing_and_refuses_gaps(tmp_path, pipeline):
    root, _, _ = pipeline
    partial = tmp_path / "partial"
    (partial / "similarity").mkdir(parents=True)
    (partial / "config.json").write_text((root / "config.json").read_text())
    src = root / "similarity" / "40b__yang2023__cosine.csv"
    (partial / "similarity" / src.name).write_bytes(src.read_bytes())
    summary = harness.report(partial)
    assert "classification/accuracy.csv" in summary["missing"]
    assert len(summary["missing"]) == 2 * 16 - 1 + 1

    lines = src.read_text().splitlines()
    (partial / "similarity" / src.name).write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(MissingRunError):
        harness.report(partial)


def test_report_empty_dir(tmp_path):
    with pytest.raises(ConfigError):
        harness.report(tmp_path)


def test_similarity_requires_dataset(tmp_path, tiny_config):
    with pytest.raises(MissingRunError, match="trajectories missing"):
        harness.run_similarity(tiny_config, tmp_path)


# --- CLI --------------------------------------------------------------------


def test_cli_pipeline(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**TINY, "settings": ["30b"], "feature_sets": ["yang2023"]}))
    out = tmp_path / "out"
    for cmd in ("simulate", "features", "similarity", "classify", "report"):
        assert main([cmd, "--config", str(cfg), "--out", str(out)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert json.loads(lines[0])["simulated"] == 12
    assert json.loads(lines[-1])["missing"] == []


def test_cli_error_json(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"replicates": 0}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and err["command"] == "simulate"


def test_cli_missing_dataset(tmp_path, capsys):
    assert main(["similarity", "--out", str(tmp_path / "none")]) != 0
    assert "missing" in json.loads(capsys.readouterr().err)["message"]


def test_load_config_defaults():
    assert load_config(None) == ExperimentConfig()
