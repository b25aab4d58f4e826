import numpy as np
import pytest

from alonemri import (
    ComplexVolume,
    KSpaceData,
    inner_product,
    load_kspace,
    load_volume,
    save_kspace,
    save_volume,
)
from alonemri.errors import DimensionError, FormatError
from alonemri.volume import export_magnitude_csv


def random_volume(dims, seed=0):
    rng = np.random.default_rng(seed)
    return ComplexVolume(rng.standard_normal(dims) + 1j * rng.standard_normal(dims))


class TestInnerProduct:
    def test_unit_vector_identity(self):
        e1 = np.zeros(4, dtype=np.complex128)
        e1[0] = 1.0
        assert inner_product(e1, e1) == 1.0 + 0.0j

    def test_hand_computed_case(self):
        a = np.array([1.0 + 1.0j, 0.0])
        b = np.array([1.0 - 1.0j, 0.0])
        assert inner_product(a, b) == pytest.approx(2.0j)

    def test_conjugate_symmetry(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            a = rng.standard_normal(16) + 1j * rng.standard_normal(16)
            b = rng.standard_normal(16) + 1j * rng.standard_normal(16)
            assert inner_product(a, b) == pytest.approx(np.conj(inner_product(b, a)))

    def test_self_inner_product_is_squared_norm(self):
        rng = np.random.default_rng(3)
        v = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        ip = inner_product(v, v)
        assert ip.imag == pytest.approx(0.0)
        assert ip.real == pytest.approx(np.linalg.norm(v) ** 2)
        assert ip.real >= 0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            inner_product(np.zeros(3, dtype=complex), np.zeros(4, dtype=complex))


class TestVolumeRoundTrip:
    def test_zero_volume_size_and_roundtrip(self, tmp_path):
        v = ComplexVolume.zeros((4, 4, 2))
        path = tmp_path / "zero.vol"
        save_volume(path, v)
        assert path.stat().st_size == 8 + 12 + 4 * 4 * 2 * 8
        v2 = load_volume(path)
        assert v2.dims == (4, 4, 2)
        assert np.array_equal(v2.data, v.data)

    def test_random_volume_exact_at_float32(self, tmp_path):
        v = random_volume((8, 8, 3), seed=7)
        path = tmp_path / "r.vol"
        save_volume(path, v)
        v2 = load_volume(path)
        stored = v.data.astype(np.complex64)
        assert np.abs(v2.data - stored.astype(np.complex128)).max() == 0.0

    def test_truncated_file_rejected(self, tmp_path):
        v = random_volume((4, 4, 2))
        path = tmp_path / "t.vol"
        save_volume(path, v)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(FormatError):
            load_volume(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.vol"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(FormatError):
            load_volume(path)

    def test_flattening_is_x_fastest(self):
        data = np.arange(2 * 3 * 2).reshape(2, 3, 2, order="F").astype(complex)
        v = ComplexVolume(data)
        flat = v.ravel()
        # x index advances first in the flat layout
        assert flat[0] == data[0, 0, 0]
        assert flat[1] == data[1, 0, 0]
        assert flat[2] == data[0, 1, 0]

    def test_non_finite_rejected(self):
        data = np.zeros((2, 2, 2), dtype=complex)
        data[0, 0, 0] = np.nan
        with pytest.raises(DimensionError):
            ComplexVolume(data)


class TestKSpaceData:
    def test_layout_validation(self):
        with pytest.raises(DimensionError):
            KSpaceData(np.zeros(10, dtype=complex), n_coils=2, frame_sizes=(3, 3))

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        y = KSpaceData(rng.standard_normal(12) + 1j * rng.standard_normal(12),
                       n_coils=2, frame_sizes=(2, 4))
        path = tmp_path / "y.ksp"
        save_kspace(path, y)
        y2 = load_kspace(path)
        assert y2.n_coils == 2 and y2.frame_sizes == (2, 4)
        assert np.array_equal(y2.samples, y.samples)

    def test_truncated_kspace_rejected(self, tmp_path):
        y = KSpaceData(np.zeros(6, dtype=complex), n_coils=1, frame_sizes=(2, 4))
        path = tmp_path / "y.ksp"
        save_kspace(path, y)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError):
            load_kspace(path)


def test_magnitude_csv_export(tmp_path):
    v = random_volume((3, 2, 2), seed=1)
    path = tmp_path / "mag.csv"
    export_magnitude_csv(path, v)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,y,frame0,frame1"
    assert len(lines) == 1 + 3 * 2
