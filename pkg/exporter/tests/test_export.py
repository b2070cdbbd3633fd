import json

import numpy as np
import pytest
from click.testing import CliRunner

from coinmatch_export.backends import NccBackend, make_backend
from coinmatch_export.cli import main
from coinmatch_export.export import ExportJob, export_matches
from coinmatch_export.manifest import read_manifest

from conftest import texture, write_corpus


def read_all_records(out_dir):
    records = {}
    for shard in sorted(out_dir.glob("matches_*.ndjson")):
        with open(shard) as fh:
            for line in fh:
                obj = json.loads(line)
                records[(obj["a"], obj["b"])] = obj
    return records


class TestManifest:
    def test_reads_and_resolves(self, toy_corpus):
        manifest, _ = toy_corpus
        entries = read_manifest(manifest)
        assert [e.coin_id for e in entries] == ["a0", "a1", "a2", "b0", "b1"]
        assert all(e.image_path.exists() for e in entries)

    def test_rejects_duplicates(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("coin_id,image_path\nc1,a.png\nc1,b.png\n")
        with pytest.raises(ValueError):
            read_manifest(p)


class TestNccBackend:
    def test_identical_images_match_strongly(self):
        backend = NccBackend(top_k=500)
        img = texture(7)
        fa = backend.features(img)
        matches = backend.match(fa, fa)
        assert len(matches) > 50
        np.testing.assert_allclose(matches[:, :2], matches[:, 2:])

    def test_unrelated_images_match_weakly(self):
        backend = NccBackend(top_k=500)
        strong = backend.match(backend.features(texture(7)), backend.features(texture(7)))
        weak = backend.match(backend.features(texture(7)), backend.features(texture(8)))
        assert len(weak) < len(strong) / 3

    def test_deterministic(self):
        backend = NccBackend(top_k=300)
        img = texture(9)
        a = backend.match(backend.features(img), backend.features(texture(10)))
        b = backend.match(backend.features(img), backend.features(texture(10)))
        np.testing.assert_array_equal(a, b)

    def test_top_k_cap(self):
        backend = NccBackend(top_k=40)
        pts, desc = backend.features(texture(11))
        assert len(pts) <= 40 and len(desc) == len(pts)


class TestExport:
    def test_three_coin_corpus_three_records(self, tmp_path):
        manifest = write_corpus(tmp_path / "c", [("x", texture(1)), ("y", texture(2)), ("z", texture(3))])
        out = tmp_path / "out"
        export_matches(ExportJob(manifest, out, top_k=300, backend="ncc"))
        records = read_all_records(out)
        assert set(records) == {("x", "y"), ("x", "z"), ("y", "z")}
        assert all(rec["filtered"] is False for rec in records.values())

    def test_duplicated_image_matches(self, tmp_path):
        img = texture(4)
        manifest = write_corpus(tmp_path / "c", [("p", img), ("q", img), ("r", texture(5))])
        out = tmp_path / "out"
        export_matches(ExportJob(manifest, out, top_k=300, backend="ncc"))
        records = read_all_records(out)
        assert len(records[("p", "q")]["matches"]) > 0

    def test_sharding(self, toy_corpus, tmp_path):
        manifest, _ = toy_corpus
        out = tmp_path / "out"
        export_matches(ExportJob(manifest, out, top_k=200, backend="ncc", batch_size=3))
        shards = sorted(out.glob("matches_*.ndjson"))
        assert len(shards) == 4  # 10 pairs in shards of 3
        assert len(read_all_records(out)) == 10

    def test_resume_completes_missing_pairs(self, toy_corpus, tmp_path):
        manifest, _ = toy_corpus
        out = tmp_path / "out"
        export_matches(ExportJob(manifest, out, top_k=200, backend="ncc", batch_size=3))
        before = read_all_records(out)
        shards = sorted(out.glob("matches_*.ndjson"))
        shards[1].unlink()  # simulate an interrupted run
        partial = read_all_records(out)
        assert len(partial) == 7
        result = export_matches(ExportJob(manifest, out, top_k=200, backend="ncc", batch_size=3, resume=True))
        assert result.written == 3
        assert result.resumed == 7
        after = read_all_records(out)
        assert set(after) == set(before)
        for pair, rec in before.items():
            assert after[pair]["matches"] == rec["matches"]

    def test_resume_never_clobbers_kept_shards(self, toy_corpus, tmp_path):
        manifest, _ = toy_corpus
        out = tmp_path / "out"
        export_matches(ExportJob(manifest, out, top_k=200, backend="ncc", batch_size=2))
        before = read_all_records(out)
        shards = sorted(out.glob("matches_*.ndjson"))
        assert len(shards) == 5
        shards[0].unlink()
        shards[2].unlink()  # two non-adjacent gaps: rewrites span multiple shards
        result = export_matches(ExportJob(manifest, out, top_k=200, backend="ncc", batch_size=2, resume=True))
        assert result.written == 4
        after = read_all_records(out)
        assert set(after) == set(before)
        for pair, rec in before.items():
            assert after[pair]["matches"] == rec["matches"]

    def test_resume_on_complete_output_writes_nothing(self, toy_corpus, tmp_path):
        manifest, _ = toy_corpus
        out = tmp_path / "out"
        export_matches(ExportJob(manifest, out, top_k=200, backend="ncc"))
        result = export_matches(ExportJob(manifest, out, top_k=200, backend="ncc", resume=True))
        assert result.written == 0
        assert result.resumed == 10

    def test_unreadable_image_skipped_with_manifest(self, tmp_path):
        manifest = write_corpus(tmp_path / "c", [("x", texture(1)), ("y", texture(2))])
        bad = tmp_path / "c" / "ghost.png"
        bad.write_text("not an image")
        with open(manifest, "a") as fh:
            fh.write("z,ghost.png\n")
        out = tmp_path / "out"
        result = export_matches(ExportJob(manifest, out, top_k=200, backend="ncc"))
        assert result.skipped_images == ["z"]
        assert set(read_all_records(out)) == {("x", "y")}
        skipped = json.loads((out / "skipped.json").read_text())
        assert skipped["images"] == ["z"]
        assert sorted(map(tuple, skipped["pairs"])) == [("x", "z"), ("y", "z")]

    def test_resolutions_sidecar(self, toy_corpus, tmp_path):
        manifest, _ = toy_corpus
        out = tmp_path / "out"
        export_matches(ExportJob(manifest, out, top_k=100, backend="ncc"))
        res = json.loads((out / "resolutions.json").read_text())
        assert res["a0"] == [160, 160]

    def test_invalid_job(self, toy_corpus, tmp_path):
        manifest, _ = toy_corpus
        with pytest.raises(ValueError):
            ExportJob(manifest, tmp_path, top_k=0)


class TestCli:
    def test_cli_end_to_end(self, toy_corpus, tmp_path):
        manifest, _ = toy_corpus
        out = tmp_path / "out"
        runner = CliRunner()
        res = runner.invoke(
            main, [str(manifest), "--out", str(out), "--backend", "ncc", "--top-k", "300"]
        )
        assert res.exit_code == 0, res.output
        assert "wrote 10 pair records" in res.output
        assert len(read_all_records(out)) == 10

    def test_unknown_backend_rejected(self, toy_corpus, tmp_path):
        manifest, _ = toy_corpus
        res = CliRunner().invoke(main, [str(manifest), "--out", str(tmp_path), "--backend", "nope"])
        assert res.exit_code != 0


def test_make_backend_ncc():
    assert make_backend("ncc", 100).top_k == 100
    with pytest.raises(ValueError):
        make_backend("bogus", 100)
