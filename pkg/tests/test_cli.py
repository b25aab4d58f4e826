import subprocess
import sys

import numpy as np
import pytest
import yaml

from alonemri import load_volume
from alonemri.solvers import load_trace_csv

CONFIG = {
    "phantom": {"nx": 16, "ny": 16, "nt": 4},
    "trajectory": {"n_coils": 2, "samples_per_spoke": 32,
                   "spokes_per_frame": 8, "acceleration": None},
    "noise": {"std": 0.0, "snr_db": None},
    "alone": {"iters": 1, "n_backprops": 20, "filters": 4,
              "patch": [4, 4, 2], "stride": [2, 2, 1], "lam": 0.3},
    "tv": {"outer_iters": 3},
    "dic": {"outer_iters": 1, "sparsity": 4, "n_atoms": 16, "itkrm_iters": 2,
            "patch": [4, 4, 2], "stride": [2, 2, 1]},
    "crop_fraction": 1.0,
    "seed": 3,
}


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "alonemri", *args],
        capture_output=True, text=True,
    )


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    cfg_path = out / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(CONFIG))
    result = run_cli("simulate", "--config", str(cfg_path), "--out", str(out))
    assert result.returncode == 0, result.stderr
    return out, cfg_path


class TestSimulate:
    def test_outputs_exist_with_expected_kspace_size(self, sim_dir):
        out, _ = sim_dir
        assert (out / "ground_truth.vol").exists()
        assert (out / "trajectory.csv").exists()
        from alonemri import load_kspace

        y = load_kspace(out / "kspace.ksp")
        assert y.m == 8 * 32 * 4 * 2  # spokes * samples * frames * coils

    def test_resolved_config_written(self, sim_dir):
        out, _ = sim_dir
        resolved = yaml.safe_load((out / "config.resolved.yaml").read_text())
        assert resolved["noise"]["std"] == 0.0
        assert resolved["trajectory"]["spokes_per_frame"] == 8

    def test_same_seed_byte_identical(self, sim_dir, tmp_path):
        out, cfg_path = sim_dir
        second = tmp_path / "again"
        result = run_cli("simulate", "--config", str(cfg_path), "--out", str(second))
        assert result.returncode == 0
        assert (second / "kspace.ksp").read_bytes() == (out / "kspace.ksp").read_bytes()
        assert (second / "ground_truth.vol").read_bytes() == (
            out / "ground_truth.vol"
        ).read_bytes()


class TestReconstruct:
    def test_adjoint_single_record(self, sim_dir):
        out, cfg_path = sim_dir
        result = run_cli("reconstruct", "--config", str(cfg_path), "--out", str(out),
                         "--method", "adjoint")
        assert result.returncode == 0, result.stderr
        trace = load_trace_csv(out / "trace_adjoint.csv")
        assert len(trace["iteration"]) == 1
        assert (out / "recon_adjoint.vol").exists()

    def test_alone_single_iteration_trace(self, sim_dir):
        out, cfg_path = sim_dir
        result = run_cli("reconstruct", "--config", str(cfg_path), "--out", str(out),
                         "--method", "alone",
                         "--reference", str(out / "ground_truth.vol"))
        assert result.returncode == 0, result.stderr
        trace = load_trace_csv(out / "trace_alone.csv")
        assert len(trace["iteration"]) == 1
        assert (out / "network_alone.net").exists()
        assert not np.isnan(trace["nrmse"][0])

    def test_tv_runs(self, sim_dir):
        out, cfg_path = sim_dir
        result = run_cli("reconstruct", "--config", str(cfg_path), "--out", str(out),
                         "--method", "tv")
        assert result.returncode == 0, result.stderr
        trace = load_trace_csv(out / "trace_tv.csv")
        assert len(trace["iteration"]) == 3

    def test_missing_kspace_exits_3(self, sim_dir, tmp_path):
        out, cfg_path = sim_dir
        result = run_cli("reconstruct", "--config", str(cfg_path),
                         "--out", str(tmp_path / "nowhere"), "--method", "adjoint")
        assert result.returncode == 3


class TestEvaluate:
    def test_identical_volumes(self, sim_dir):
        out, cfg_path = sim_dir
        gt = str(out / "ground_truth.vol")
        result = run_cli("evaluate", "--config", str(cfg_path), "--out", str(out),
                         "--recon", gt, "--reference", gt, "--crop", "1.0")
        assert result.returncode == 0, result.stderr
        text = (out / "metrics.csv").read_text().splitlines()
        values = dict(zip(text[0].split(","), text[1].split(",")))
        assert float(values["nrmse"]) == 0.0
        assert float(values["ssim"]) == pytest.approx(1.0)
        assert float(values["psnr"]) == 999.0

    def test_missing_file_exits_3(self, sim_dir, tmp_path):
        out, cfg_path = sim_dir
        result = run_cli("evaluate", "--config", str(cfg_path), "--out", str(out),
                         "--recon", str(tmp_path / "missing.vol"),
                         "--reference", str(out / "ground_truth.vol"))
        assert result.returncode == 3

    def test_dim_mismatch_exits_2(self, sim_dir, tmp_path):
        import alonemri

        out, cfg_path = sim_dir
        other = tmp_path / "small.vol"
        alonemri.save_volume(other, alonemri.ComplexVolume.zeros((8, 8, 2)))
        result = run_cli("evaluate", "--config", str(cfg_path), "--out", str(out),
                         "--recon", str(other),
                         "--reference", str(out / "ground_truth.vol"))
        assert result.returncode == 2


class TestExportFrames:
    def test_frame_count_and_determinism(self, sim_dir, tmp_path):
        out, cfg_path = sim_dir
        frames_dir = tmp_path / "frames"
        result = run_cli("export-frames", "--config", str(cfg_path),
                         "--out", str(frames_dir),
                         "--volume", str(out / "ground_truth.vol"))
        assert result.returncode == 0, result.stderr
        pgms = sorted(frames_dir.glob("*.pgm"))
        assert len(pgms) == 4 + 1  # one per frame plus the x-t profile
        first = {p.name: p.read_bytes() for p in pgms}
        result = run_cli("export-frames", "--config", str(cfg_path),
                         "--out", str(frames_dir),
                         "--volume", str(out / "ground_truth.vol"))
        assert result.returncode == 0
        for p in sorted(frames_dir.glob("*.pgm")):
            assert p.read_bytes() == first[p.name]


class TestConfigHandling:
    def test_unknown_key_exits_2(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("phantom:\n  nx: 16\n  bogus_key: 3\n")
        result = run_cli("simulate", "--config", str(bad), "--out", str(tmp_path))
        assert result.returncode == 2
        assert "bogus_key" in result.stderr

    def test_resolved_config_reruns_identically(self, sim_dir, tmp_path):
        out, _ = sim_dir
        resolved = out / "config.resolved.yaml"
        rerun = tmp_path / "rerun"
        result = run_cli("simulate", "--config", str(resolved), "--out", str(rerun))
        assert result.returncode == 0, result.stderr
        assert (rerun / "kspace.ksp").read_bytes() == (out / "kspace.ksp").read_bytes()


class TestSweep:
    def test_lambda_grid(self, sim_dir, tmp_path):
        out, cfg_path = sim_dir
        result = run_cli("sweep", "--config", str(cfg_path), "--out", str(out),
                         "--method", "tv", "--lams", "0.01,0.1",
                         "--reference", str(out / "ground_truth.vol"),
                         "--kspace", str(out / "kspace.ksp"))
        assert result.returncode == 0, result.stderr
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "lam,psnr,ssim,nrmse"
        assert len(lines) == 3
