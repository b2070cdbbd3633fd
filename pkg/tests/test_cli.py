import json
import os
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from diestudy.cli import main
from diestudy.clustering import read_partition_csv, read_sweep_csv
from diestudy.corpus import load_manifest, read_match_dir
from diestudy.metrics import MetricsReport
from diestudy.pipeline import CACHE_ENV, PipelineConfig
from diestudy.simmatrix import read_matrix_csv


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, runner):
    """One synthetic corpus shared by the CLI tests, plus its matrix."""
    root = tmp_path_factory.mktemp("cliwork")
    res = runner.invoke(
        main,
        ["synth", "--out", str(root / "corpus"), "--die-sizes", "4,4,3,1",
         "--image-size", "192", "--seed", "11"],
    )
    assert res.exit_code == 0, res.output
    res = runner.invoke(
        main,
        ["matrix", str(root / "corpus" / "manifest.csv"), "--out", str(root / "matrix.csv"),
         "--top-k", "500", "--workers", "2", "--cache", str(root / "cache"), "--seed", "0"],
    )
    assert res.exit_code == 0, res.output
    return root


def test_synth_writes_standard_files(workdir):
    corpus = load_manifest(workdir / "corpus" / "manifest.csv")
    assert len(corpus) == 12
    assert (workdir / "corpus" / "ground_truth.csv").exists()


def test_matrix_cache_hits_on_rerun(workdir, runner):
    res = runner.invoke(
        main,
        ["matrix", str(workdir / "corpus" / "manifest.csv"), "--out", str(workdir / "matrix2.csv"),
         "--top-k", "500", "--workers", "2", "--cache", str(workdir / "cache"), "--seed", "0"],
    )
    assert res.exit_code == 0
    assert "0 computed" in res.output
    assert (workdir / "matrix.csv").read_bytes() == (workdir / "matrix2.csv").read_bytes()


def test_match_filter_matrix_pipeline_stages(workdir, runner, tmp_path):
    manifest = workdir / "corpus" / "manifest.csv"
    res = runner.invoke(
        main, ["match", str(manifest), "--out", str(tmp_path / "cand"), "--top-k", "500"]
    )
    assert res.exit_code == 0, res.output
    corpus = load_manifest(manifest)
    records = read_match_dir(tmp_path / "cand", corpus)
    assert len(records) == 12 * 11 // 2
    assert all(not r.filtered for r in records.values())

    res = runner.invoke(
        main,
        ["filter", str(tmp_path / "cand"), "--manifest", str(manifest), "--out", str(tmp_path / "filt")],
    )
    assert res.exit_code == 0, res.output
    filtered = read_match_dir(tmp_path / "filt", corpus)
    assert all(r.filtered for r in filtered.values())
    for pair, rec in filtered.items():
        assert len(rec.correspondences) <= len(records[pair].correspondences)

    # matrix from the filtered files without re-filtering must equal
    # a matrix built from candidates with filtering on
    res = runner.invoke(
        main,
        ["matrix", str(manifest), "--source", str(tmp_path / "cand"), "--out", str(tmp_path / "mf.csv"),
         "--seed", "0"],
    )
    assert res.exit_code == 0, res.output
    m_filtered = read_matrix_csv(tmp_path / "mf.csv")
    counts = {p: len(r.correspondences) for p, r in filtered.items()}
    ids = m_filtered.ids
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            a, b = sorted((ids[i], ids[j]))
            assert m_filtered.m[i, j] == counts[(a, b)]


def test_cluster_and_sweep_and_eval(workdir, runner, tmp_path):
    res = runner.invoke(
        main,
        ["sweep", str(workdir / "matrix.csv"), "--out", str(tmp_path / "sweep.csv"),
         "--partition-out", str(tmp_path / "part.csv"),
         "--ground-truth", str(workdir / "corpus" / "ground_truth.csv")],
    )
    assert res.exit_code == 0, res.output
    rows = read_sweep_csv(tmp_path / "sweep.csv")
    assert rows and "ami" in rows[0]
    ids, labels = read_partition_csv(tmp_path / "part.csv")
    assert len(ids) == 12

    tau = int(res.output.split("tau*=")[1].split()[0])
    res = runner.invoke(
        main,
        ["cluster", str(workdir / "matrix.csv"), "--tau", str(tau), "--out", str(tmp_path / "part2.csv")],
    )
    assert res.exit_code == 0
    _, labels2 = read_partition_csv(tmp_path / "part2.csv")
    np.testing.assert_array_equal(labels, labels2)

    res = runner.invoke(
        main,
        ["eval", str(tmp_path / "part.csv"), str(workdir / "corpus" / "ground_truth.csv"),
         "--out", str(tmp_path / "metrics.json")],
    )
    assert res.exit_code == 0, res.output
    report = MetricsReport.from_json((tmp_path / "metrics.json").read_text())
    assert report.ari > 0.9


def test_baseline_oracle(workdir, runner, tmp_path):
    res = runner.invoke(
        main,
        ["baseline", str(workdir / "matrix.csv"),
         "--ground-truth", str(workdir / "corpus" / "ground_truth.csv"),
         "--dendrogram-out", str(tmp_path / "dend.csv"),
         "--partition-out", str(tmp_path / "bpart.csv")],
    )
    assert res.exit_code == 0, res.output
    assert "oracle best cut" in res.output
    assert (tmp_path / "dend.csv").exists()


def test_run_end_to_end_and_determinism(workdir, runner, tmp_path):
    manifest = workdir / "corpus" / "manifest.csv"
    gt = workdir / "corpus" / "ground_truth.csv"
    args = [
        "run", str(manifest), "--ground-truth", str(gt), "--top-k", "500",
        "--workers", "2", "--seed", "3", "--cache", str(tmp_path / "cache"),
    ]
    r1 = runner.invoke(main, args + ["--out", str(tmp_path / "out1")])
    assert r1.exit_code == 0, r1.output
    r2 = runner.invoke(main, args + ["--out", str(tmp_path / "out2")])
    assert r2.exit_code == 0
    for name in ("partition.csv", "sweep.csv", "metrics.json", "matrix.csv"):
        assert (tmp_path / "out1" / name).read_bytes() == (tmp_path / "out2" / name).read_bytes()
    sidecar = json.loads((tmp_path / "out2" / "sidecar.json").read_text())
    assert sidecar["pairs_computed"] == 0  # second run fully cache-hit


def test_match_rejects_unreadable_images(runner, tmp_path):
    (tmp_path / "m.csv").write_text("coin_id,image_path\nc1,missing.png\nc2,also_missing.png\n")
    res = runner.invoke(main, ["match", str(tmp_path / "m.csv"), "--out", str(tmp_path / "out")])
    assert res.exit_code != 0
    assert "unreadable" in res.output


def test_run_single_coin_exits_nonzero(runner, tmp_path):
    res = runner.invoke(
        main, ["synth", "--out", str(tmp_path / "one"), "--die-sizes", "1", "--image-size", "128"]
    )
    assert res.exit_code == 0
    res = runner.invoke(
        main,
        ["run", str(tmp_path / "one" / "manifest.csv"), "--out", str(tmp_path / "out")],
    )
    assert res.exit_code != 0


def test_config_file_and_env_cache_override(workdir, runner, tmp_path, monkeypatch):
    cfg = PipelineConfig(top_k=500, seed=0, workers=2)
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(cfg.to_json())
    env_cache = tmp_path / "envcache"
    monkeypatch.setenv(CACHE_ENV, str(env_cache))
    res = runner.invoke(
        main,
        ["matrix", str(workdir / "corpus" / "manifest.csv"), "--out", str(tmp_path / "m.csv"),
         "--config", str(cfg_path)],
    )
    assert res.exit_code == 0, res.output
    assert (env_cache / "pairs.ndjson").exists()
    assert (tmp_path / "m.csv").read_bytes() == (workdir / "matrix.csv").read_bytes()


def test_config_round_trip_and_unknown_key():
    cfg = PipelineConfig(top_k=123, filter=False, algorithm="connected")
    again = PipelineConfig.from_json(cfg.to_json())
    assert again == cfg
    with pytest.raises(ValueError):
        PipelineConfig.from_json('{"nonsense": 1}')


def test_keypoint_dump_option(workdir, runner, tmp_path):
    from diestudy.matcher import read_keypoint_file

    res = runner.invoke(
        main,
        ["match", str(workdir / "corpus" / "manifest.csv"), "--out", str(tmp_path / "m"),
         "--top-k", "300", "--dump-keypoints", str(tmp_path / "kps.ndjson")],
    )
    assert res.exit_code == 0, res.output
    dumped = read_keypoint_file(tmp_path / "kps.ndjson")
    assert len(dumped) == 12
    assert all(len(kp) <= 300 for _, kp in dumped)
