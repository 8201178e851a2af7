import json

import numpy as np
import pytest

from hallucinate.cli import main
from hallucinate.imgcore import load_image, save_image
from hallucinate.pipeline import compute_schedule
from tests.conftest import synth_photo


@pytest.fixture
def workdir(tmp_path):
    save_image(tmp_path / "input.png", synth_photo(24, 32, seed=0))
    samples = tmp_path / "samples"
    samples.mkdir()
    for i in range(2):
        save_image(samples / f"s{i}.png", synth_photo(48, 64, seed=10 + i))
    return tmp_path


def run_upsample(workdir, *extra, scale="2"):
    return main([
        "upsample", "--input", str(workdir / "input.png"),
        "--scale", scale, "--samples", str(workdir / "samples"),
        "--out", str(workdir / "out.png"),
        "--patch-size", "8", *extra])


class TestUpsample:
    def test_writes_scaled_output(self, workdir):
        assert run_upsample(workdir) == 0
        out = load_image(workdir / "out.png")
        assert out.shape == (48, 64, 3)

    def test_scale_one_is_usage_error(self, workdir):
        assert run_upsample(workdir, scale="1") == 1

    def test_missing_required_flag_is_usage_error(self):
        assert main(["upsample", "--scale", "2"]) == 1

    def test_empty_samples_dir_is_exit_two(self, workdir):
        empty = workdir / "empty"
        empty.mkdir()
        code = main([
            "upsample", "--input", str(workdir / "input.png"),
            "--scale", "2", "--samples", str(empty),
            "--out", str(workdir / "out.png"), "--patch-size", "8"])
        assert code == 2

    def test_pipeline_failure_is_exit_three(self, workdir):
        code = main([
            "upsample", "--input", str(workdir / "input.png"),
            "--scale", "2", "--samples", str(workdir / "samples"),
            "--out", str(workdir / "missing_dir" / "out.png"),
            "--patch-size", "8"])
        assert code == 3

    def test_both_sample_sources_rejected(self, workdir):
        manifest = workdir / "m.json"
        manifest.write_text(json.dumps({"entries": []}))
        code = main([
            "upsample", "--input", str(workdir / "input.png"),
            "--scale", "2", "--samples", str(workdir / "samples"),
            "--manifest", str(manifest),
            "--out", str(workdir / "out.png"), "--patch-size", "8"])
        assert code == 1

    def test_manifest_source(self, workdir):
        manifest = workdir / "m.json"
        manifest.write_text(json.dumps({
            "keyword": "", "query_time": "",
            "entries": [{"rank": 1, "path": "samples/s0.png",
                         "source_url": None}]}))
        code = main([
            "upsample", "--input", str(workdir / "input.png"),
            "--scale", "2", "--manifest", str(manifest),
            "--out", str(workdir / "out.png"), "--patch-size", "8"])
        assert code == 0

    def test_dump_intermediate_one_per_scale(self, workdir):
        dump = workdir / "inter"
        assert run_upsample(workdir, "--dump-intermediate", str(dump)) == 0
        n = compute_schedule(2.0, 32, 24, 8).n
        assert len(list(dump.glob("scale_*.png"))) == n

    def test_print_config(self, workdir, capsys):
        assert run_upsample(workdir, "--print-config") == 0
        out = capsys.readouterr().out
        assert "patch_size=8" in out
        assert "lam=5.0" in out

    def test_deterministic_outputs(self, workdir):
        run_upsample(workdir, "--seed", "3")
        first = load_image(workdir / "out.png")
        run_upsample(workdir, "--seed", "3")
        assert np.array_equal(load_image(workdir / "out.png"), first)


class TestRestore:
    def test_output_dims_match_input(self, workdir):
        code = main([
            "restore", "--input", str(workdir / "input.png"),
            "--shrink", "2", "--samples", str(workdir / "samples"),
            "--out", str(workdir / "restored.png"), "--patch-size", "8"])
        assert code == 0
        assert load_image(workdir / "restored.png").shape == (24, 32, 3)

    @pytest.mark.slow
    def test_restore_improves_over_degraded(self, tmp_path):
        from hallucinate.evaluation import degrade, psnr
        clean = synth_photo(48, 48, seed=50)
        noisy = degrade(clean, "noise", sigma=25.0, seed=1)
        save_image(tmp_path / "noisy.png", noisy)
        samples = tmp_path / "samples"
        samples.mkdir()
        save_image(samples / "original.png", clean)
        code = main([
            "restore", "--input", str(tmp_path / "noisy.png"),
            "--shrink", "4", "--samples", str(samples),
            "--out", str(tmp_path / "restored.png"), "--patch-size", "8"])
        assert code == 0
        restored = load_image(tmp_path / "restored.png")
        noisy_disk = load_image(tmp_path / "noisy.png")
        assert psnr(restored, clean) > psnr(noisy_disk, clean)

    def test_shrink_one_is_usage_error(self, workdir):
        code = main([
            "restore", "--input", str(workdir / "input.png"),
            "--shrink", "1", "--samples", str(workdir / "samples"),
            "--out", str(workdir / "restored.png")])
        assert code == 1


class TestBtRank:
    def test_score_table(self, tmp_path, capsys):
        src = tmp_path / "prefs.csv"
        src.write_text("winner,loser,count\n"
                       "ours,bicubic,86\n"
                       "bicubic,ours,14\n")
        assert main(["bt-rank", "--input", str(src),
                     "--baseline", "bicubic"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        table = dict(line.split(",") for line in out[1:])
        assert float(table["bicubic"]) == 0.0
        assert float(table["ours"]) > 0.0

    def test_output_file(self, tmp_path):
        src = tmp_path / "prefs.csv"
        src.write_text("a,b,30\nb,a,10\n")
        dst = tmp_path / "scores.csv"
        assert main(["bt-rank", "--input", str(src), "--out",
                     str(dst)]) == 0
        assert dst.read_text().startswith("method,score")

    def test_disconnected_graph_fails(self, tmp_path):
        src = tmp_path / "prefs.csv"
        src.write_text("a,b,5\nc,d,5\n")
        assert main(["bt-rank", "--input", str(src)]) == 3

    def test_empty_csv_usage_error(self, tmp_path):
        src = tmp_path / "prefs.csv"
        src.write_text("winner,loser,count\n")
        assert main(["bt-rank", "--input", str(src)]) == 1
