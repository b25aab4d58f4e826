import math

import numpy as np
import pytest

from alonemri import (
    CartesianMaskedOp,
    ComplexVolume,
    PatchGeometry,
    RadialNDFTOp,
    apply_normal_system,
    build_golden_angle_trajectory,
    build_golden_angle_trajectory_total,
    inner_product,
    make_gaussian_coil_maps,
    nyquist_spokes,
    spokes_for_acceleration,
)
from alonemri.errors import DimensionError, PreconditionError
from alonemri.operators import GOLDEN_ANGLE, export_trajectory_csv

DIMS = (12, 12, 3)


def random_volume(dims=DIMS, seed=0):
    rng = np.random.default_rng(seed)
    return ComplexVolume(rng.standard_normal(dims) + 1j * rng.standard_normal(dims))


def random_data_like(op, seed=0):
    rng = np.random.default_rng(seed)
    template = op.empty_data()
    return template.with_samples(
        rng.standard_normal(template.m) + 1j * rng.standard_normal(template.m)
    )


def make_ops():
    rng = np.random.default_rng(99)
    mask = rng.random(DIMS) < 0.4
    mask[0, 0, :] = True
    cart = CartesianMaskedOp(DIMS, mask)
    traj = build_golden_angle_trajectory(6, 24, DIMS[2])
    radial = RadialNDFTOp(DIMS, traj)
    maps = make_gaussian_coil_maps(DIMS[0], DIMS[1], 4, seed=5)
    multicoil = RadialNDFTOp(DIMS, traj, maps)
    return {"cartesian": cart, "radial": radial, "multicoil": multicoil}


class TestAdjointness:
    @pytest.mark.parametrize("name", ["cartesian", "radial", "multicoil"])
    def test_adjoint_identity_20_probes(self, name):
        op = make_ops()[name]
        for probe in range(20):
            x = random_volume(seed=100 + probe)
            y = random_data_like(op, seed=200 + probe)
            ax = op.forward(x)
            aty = op.adjoint(y)
            lhs = inner_product(ax.samples, y.samples)
            rhs = inner_product(x.data.ravel(), aty.data.ravel())
            scale = np.linalg.norm(ax.samples) * np.linalg.norm(y.samples)
            assert abs(lhs - rhs) / scale < 1e-10

    @pytest.mark.parametrize("name", ["cartesian", "radial", "multicoil"])
    def test_linearity(self, name):
        op = make_ops()[name]
        x1, x2 = random_volume(seed=1), random_volume(seed=2)
        a, b = 1.3 - 0.2j, -0.7 + 2.1j
        lhs = op.forward(ComplexVolume(a * x1.data + b * x2.data)).samples
        rhs = a * op.forward(x1).samples + b * op.forward(x2).samples
        assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) < 1e-10


class TestCartesian:
    def test_zero_maps_to_zero(self):
        op = CartesianMaskedOp.full(DIMS)
        y = op.forward(ComplexVolume.zeros(DIMS))
        assert np.all(y.samples == 0)

    def test_delta_gives_flat_spectrum(self):
        op = CartesianMaskedOp.full(DIMS)
        data = np.zeros(DIMS, dtype=complex)
        data[0, 0, :] = 1.0
        y = op.forward(ComplexVolume(data))
        expected = 1.0 / math.sqrt(DIMS[0] * DIMS[1])
        assert np.allclose(np.abs(y.samples), expected, atol=1e-12)

    def test_full_mask_isometry_and_roundtrip(self):
        op = CartesianMaskedOp.full(DIMS)
        x = random_volume(seed=3)
        y = op.forward(x)
        assert abs(np.linalg.norm(y.samples) - x.norm()) / x.norm() < 1e-10
        back = op.adjoint(y)
        assert np.abs(back.data - x.data).max() / x.norm() < 1e-10

    def test_dim_mismatch(self):
        op = CartesianMaskedOp.full(DIMS)
        with pytest.raises(DimensionError):
            op.forward(random_volume((8, 8, 3)))


class TestRadial:
    def test_zero_adjoint(self):
        op = make_ops()["radial"]
        x = op.adjoint(op.empty_data())
        assert np.all(x.data == 0)

    def test_normal_operator_psd_on_probes(self):
        op = make_ops()["multicoil"]
        for probe in range(5):
            x = random_volume(seed=300 + probe)
            hx = op.adjoint(op.forward(x))
            val = inner_product(hx.data.ravel(), x.data.ravel())
            assert abs(val.imag) / abs(val.real) < 1e-10
            assert val.real >= 0

    def test_frame_locality(self):
        op = make_ops()["radial"]
        x = ComplexVolume.zeros(DIMS)
        data = x.data.copy()
        data[:, :, 1] = np.random.default_rng(0).standard_normal(DIMS[:2])
        y = op.forward(ComplexVolume(data))
        sizes = op.frame_sizes
        f0 = y.samples[: sizes[0]]
        f1 = y.samples[sizes[0] : sizes[0] + sizes[1]]
        f2 = y.samples[sizes[0] + sizes[1] :]
        assert np.all(f0 == 0) and np.all(f2 == 0)
        assert np.linalg.norm(f1) > 0

    def test_layout_mismatch_rejected(self):
        ops = make_ops()
        y = ops["multicoil"].empty_data()
        with pytest.raises(DimensionError):
            ops["radial"].adjoint(y)


class TestCoilMaps:
    def test_sum_of_squares_normalized(self):
        maps = make_gaussian_coil_maps(16, 16, 4, seed=2)
        sos = np.sum(np.abs(maps.maps) ** 2, axis=0)
        assert np.abs(sos - 1.0).max() < 1e-8

    def test_deterministic(self):
        a = make_gaussian_coil_maps(8, 8, 3, seed=4)
        b = make_gaussian_coil_maps(8, 8, 3, seed=4)
        assert np.array_equal(a.maps, b.maps)


class TestGoldenAngle:
    def test_first_spoke_angle_zero(self):
        traj = build_golden_angle_trajectory(2, 8, 1)
        assert traj.spoke_angles[0][0] == 0.0

    def test_second_spoke_angle(self):
        traj = build_golden_angle_trajectory(2, 8, 1)
        assert traj.spoke_angles[0][1] == pytest.approx(1.9416, abs=1e-4)
        assert GOLDEN_ANGLE == pytest.approx(math.radians(111.2461), abs=1e-4)

    def test_global_indexing_across_frames(self):
        traj = build_golden_angle_trajectory(3, 8, 2)
        # spoke 3 (first of frame 1) continues the global golden-angle series
        assert traj.spoke_angles[1][0] == pytest.approx((3 * GOLDEN_ANGLE) % math.pi)

    def test_every_spoke_passes_through_origin(self):
        for spp in (8, 9):
            traj = build_golden_angle_trajectory(4, spp, 2)
            for f in range(2):
                coords = traj.frame_coords(f).reshape(4, spp, 2)
                mags = np.hypot(coords[..., 0], coords[..., 1])
                assert np.all(mags.min(axis=1) == 0.0)

    def test_radius_span(self):
        traj = build_golden_angle_trajectory(1, 16, 1)
        r = traj.radii()
        assert r.min() == pytest.approx(-math.pi)
        assert r.max() < math.pi

    def test_total_split_remainder_to_early_frames(self):
        traj = build_golden_angle_trajectory_total(10, 8, 3)
        assert traj.spokes_per_frame == (4, 3, 3)

    def test_counts_validated(self):
        with pytest.raises(PreconditionError):
            build_golden_angle_trajectory(0, 8, 2)

    def test_acceleration_bookkeeping(self):
        nyq = nyquist_spokes(64)
        for accel in (3.0, 9.0):
            spokes = spokes_for_acceleration(64, accel)
            assert abs(nyq / spokes - accel) / accel < 0.05

    def test_trajectory_csv(self, tmp_path):
        traj = build_golden_angle_trajectory(2, 4, 2)
        path = tmp_path / "traj.csv"
        export_trajectory_csv(path, traj)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "spoke,frame,angle,kx,ky"
        assert len(lines) == 1 + 2 * 2 * 4


class TestNormalSystem:
    def test_lam_zero_reduces_to_gram(self):
        op = make_ops()["multicoil"]
        geom = PatchGeometry((4, 4, 1), (2, 2, 1), DIMS)
        x = random_volume(seed=8)
        hx = apply_normal_system(op, geom, 0.0, x)
        gram = op.adjoint(op.forward(x))
        assert np.abs(hx.data - gram.data).max() < 1e-12

    def test_identity_like_case(self):
        # full Cartesian mask + non-overlapping full-coverage patches:
        # H x = (1 + lam) x
        op = CartesianMaskedOp.full(DIMS)
        geom = PatchGeometry((4, 4, 3), (4, 4, 3), DIMS)
        x = random_volume(seed=9)
        lam = 0.7
        hx = apply_normal_system(op, geom, lam, x)
        assert np.abs(hx.data - (1 + lam) * x.data).max() < 1e-10

    def test_brute_force_patch_term(self):
        from tests_helpers import brute_force_gram

        op = make_ops()["radial"]
        geom = PatchGeometry((4, 4, 2), (2, 2, 1), DIMS)
        x = random_volume(seed=10)
        lam = 0.3
        hx = apply_normal_system(op, geom, lam, x)
        expected = op.adjoint(op.forward(x)).data + lam * brute_force_gram(x.data, geom)
        assert np.abs(hx.data - expected).max() < 1e-12

    def test_hermitian_on_probes(self):
        op = make_ops()["multicoil"]
        geom = PatchGeometry((4, 4, 1), (2, 2, 1), DIMS)
        lam = 0.5
        for probe in range(5):
            u = random_volume(seed=400 + probe)
            v = random_volume(seed=500 + probe)
            hu = apply_normal_system(op, geom, lam, u)
            hv = apply_normal_system(op, geom, lam, v)
            lhs = inner_product(hu.data.ravel(), v.data.ravel())
            rhs = inner_product(u.data.ravel(), hv.data.ravel())
            assert abs(lhs - rhs) / abs(lhs) < 1e-10
