import math

import numpy as np
import pytest

from alonemri import (
    CartesianMaskedOp,
    ComplexVolume,
    PhantomSpec,
    build_golden_angle_trajectory,
    crop_center,
    evaluate,
    make_phantom,
    noise_std_for_snr,
    nrmse,
    psnr,
    RadialNDFTOp,
    retrospective_sample,
    ssim,
)
from alonemri.errors import PreconditionError
from alonemri.metrics import save_metrics_csv
from alonemri.phantom import disk_radius


class TestPhantom:
    def test_zero_amplitude_freezes_motion(self):
        spec = PhantomSpec(dims=(32, 32, 8), disk_radius_amplitude=0.0, seed=0)
        vol = make_phantom(spec)
        first = vol.data[:, :, 0]
        for t in range(1, 8):
            assert np.array_equal(vol.data[:, :, t], first)

    def test_disk_radius_sine_values(self):
        spec = PhantomSpec(dims=(32, 32, 8), seed=0)
        assert disk_radius(spec, 0) == pytest.approx(spec.disk_base_radius)
        assert disk_radius(spec, 2) == pytest.approx(
            spec.disk_base_radius + spec.disk_radius_amplitude
        )  # Nt/4 with Nt=8

    def test_magnitude_bounded_by_one(self):
        vol = make_phantom(PhantomSpec(seed=3))
        assert vol.magnitude().max() <= 1.0

    def test_deterministic_per_seed(self):
        a = make_phantom(PhantomSpec(seed=11))
        b = make_phantom(PhantomSpec(seed=11))
        assert np.array_equal(a.data, b.data)

    def test_motion_present_with_amplitude(self):
        vol = make_phantom(PhantomSpec(dims=(32, 32, 8), seed=0))
        assert np.abs(vol.data[:, :, 2] - vol.data[:, :, 0]).max() > 1e-3

    def test_incompatible_dims_rejected(self):
        with pytest.raises(PreconditionError):
            PhantomSpec(dims=(30, 30, 7))


class TestRetrospectiveSampling:
    def test_noise_free_full_cartesian_recovers(self):
        dims = (32, 32, 8)
        gt = make_phantom(PhantomSpec(dims=dims, seed=1))
        op = CartesianMaskedOp.full(dims)
        y = retrospective_sample(gt, op, noise_std=0.0)
        back = op.adjoint(y)
        assert np.abs(back.data - gt.data).max() < 1e-10

    def test_noise_energy_matches_expectation(self):
        dims = (16, 16, 4)
        gt = make_phantom(PhantomSpec(dims=dims, seed=2))
        traj = build_golden_angle_trajectory(4, 32, dims[2])
        op = RadialNDFTOp(dims, traj)
        clean = op.forward(gt)
        std = 0.05
        total = 0.0
        n_seeds = 100
        for seed in range(n_seeds):
            y = retrospective_sample(gt, op, noise_std=std, seed=seed)
            total += float(np.sum(np.abs(y.samples - clean.samples) ** 2))
        expected = 2.0 * clean.m * std**2
        assert total / n_seeds == pytest.approx(expected, rel=0.05)

    def test_snr_helper_hits_target(self):
        dims = (16, 16, 4)
        gt = make_phantom(PhantomSpec(dims=dims, seed=3))
        op = CartesianMaskedOp.full(dims)
        clean = op.forward(gt)
        std = noise_std_for_snr(clean, 30.0)
        power = float(np.sum(np.abs(clean.samples) ** 2))
        snr = 10.0 * math.log10(power / (2.0 * clean.m * std**2))
        assert snr == pytest.approx(30.0, abs=1e-9)


class TestCrop:
    def test_fraction_one_is_identity(self):
        v = make_phantom(PhantomSpec(seed=4))
        assert crop_center(v, 1.0) is v

    def test_production_scale_half_crop(self):
        v = ComplexVolume.zeros((320, 320, 2))
        assert crop_center(v, 0.5).dims == (160, 160, 2)

    def test_desk_scale_half_crop(self):
        v = ComplexVolume.zeros((64, 64, 16))
        assert crop_center(v, 0.5).dims == (32, 32, 16)

    def test_degenerate_crop_rejected(self):
        v = ComplexVolume.zeros((4, 4, 2))
        with pytest.raises(PreconditionError):
            crop_center(v, 0.01)


def _pair(seed=0, dims=(24, 24, 3)):
    rng = np.random.default_rng(seed)
    ref = ComplexVolume(rng.random(dims) + 1j * rng.random(dims))
    x = ComplexVolume(ref.data + 0.05 * rng.standard_normal(dims))
    return x, ref


class TestMetrics:
    def test_identical_inputs(self):
        _, ref = _pair(1)
        assert nrmse(ref, ref) == 0.0
        assert psnr(ref, ref) == math.inf
        assert ssim(ref, ref) == pytest.approx(1.0)

    def test_hand_computed_psnr(self):
        # |x| = |ref| + 0.1 on an all-0.5 reference: rmse 0.1, peak 0.5
        ref = ComplexVolume(np.full((4, 4, 1), 0.5, dtype=complex))
        x = ComplexVolume(np.full((4, 4, 1), 0.6, dtype=complex))
        assert psnr(x, ref) == pytest.approx(20.0 * math.log10(0.5 / 0.1), abs=1e-9)
        assert psnr(x, ref) == pytest.approx(13.979, abs=1e-3)

    def test_nrmse_definition(self):
        x, ref = _pair(2)
        expected = np.linalg.norm(np.abs(x.data) - np.abs(ref.data)) / np.linalg.norm(
            np.abs(ref.data)
        )
        assert nrmse(x, ref) == pytest.approx(float(expected))

    def test_nrmse_zero_reference_rejected(self):
        x, _ = _pair(3)
        with pytest.raises(PreconditionError):
            nrmse(x, ComplexVolume.zeros(x.dims))

    def test_ssim_symmetric_with_fixed_range(self):
        rng = np.random.default_rng(4)
        for seed in range(5):
            x, ref = _pair(seed + 10)
            val_a = ssim(x, ref, data_range=1.0)
            val_b = ssim(ref, x, data_range=1.0)
            assert val_a == pytest.approx(val_b, abs=1e-12)

    def test_psnr_decreases_with_growing_noise(self):
        dims = (24, 24, 3)
        ref = make_phantom(PhantomSpec(dims=(32, 32, 8), seed=5))
        for seed in range(10):
            rng = np.random.default_rng(seed)
            values = []
            for std in (0.01, 0.05, 0.2):
                noisy = ComplexVolume(ref.data + std * rng.standard_normal(ref.dims))
                values.append(psnr(noisy, ref))
            assert values[0] > values[1] > values[2]

    def test_record_and_csv(self, tmp_path):
        x, ref = _pair(6, dims=(24, 24, 2))
        record = evaluate(x, ref, crop_fraction=1.0)
        assert 0 < record.ssim <= 1
        assert record.nrmse > 0
        assert len(record.per_frame_psnr) == 2
        path = tmp_path / "metrics.csv"
        save_metrics_csv(path, record)
        header, values = path.read_text().strip().splitlines()
        assert header.split(",")[:4] == ["psnr", "ssim", "nrmse", "crop_fraction"]
        assert "psnr_f1" in header
        assert len(values.split(",")) == len(header.split(","))
