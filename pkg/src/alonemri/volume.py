"""Complex dynamic-image containers and their binary serialization.

A dynamic image is stored as a complex array of shape (Nx, Ny, Nt).  The
documented linear ordering of voxels is x fastest, then y, then t, which
corresponds to Fortran-order flattening of that array.  Internal compute
precision is float64/complex128; the on-disk format stores float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError

VOLUME_MAGIC = b"ALNEVOL1"

_MAX_DIM = 2**31 - 1


@dataclass(frozen=True)
class ComplexVolume:
    """A complex dynamic image x of shape (Nx, Ny, Nt)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise DimensionError(f"volume must be 3-dimensional, got shape {arr.shape}")
        if any(n < 1 for n in arr.shape):
            raise DimensionError(f"volume dims must be positive, got {arr.shape}")
        if arr.dtype != np.complex128:
            arr = arr.astype(np.complex128)
        if not np.isfinite(arr).all():
            raise DimensionError("volume contains non-finite samples")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def n_voxels(self) -> int:
        return self.data.size

    @classmethod
    def zeros(cls, dims: tuple[int, int, int]) -> "ComplexVolume":
        return cls(np.zeros(dims, dtype=np.complex128))

    def ravel(self) -> np.ndarray:
        """Voxels in the documented order: x fastest, then y, then t."""
        return self.data.ravel(order="F")

    @classmethod
    def from_ravel(cls, vec: np.ndarray, dims: tuple[int, int, int]) -> "ComplexVolume":
        vec = np.asarray(vec)
        if vec.size != int(np.prod(dims)):
            raise DimensionError(f"vector of length {vec.size} does not fill dims {dims}")
        return cls(vec.reshape(dims, order="F"))

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)


def inner_product(a: np.ndarray, b: np.ndarray) -> complex:
    """Return sum_i a_i * conj(b_i) over two equal-length complex arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"inner_product shapes differ: {a.shape} vs {b.shape}")
    return complex(np.sum(a * np.conj(b)))


def save_volume(path, volume: ComplexVolume) -> None:
    """Write a volume: magic, three little-endian u32 dims, interleaved
    float32 (re, im) with x fastest, then y, then t."""
    nx, ny, nt = volume.dims
    if max(nx, ny, nt) > _MAX_DIM:
        raise FormatError("volume dims overflow the file format")
    flat = volume.ravel().astype(np.complex64)
    payload = np.empty(2 * flat.size, dtype="<f4")
    payload[0::2] = flat.real
    payload[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(VOLUME_MAGIC)
        fh.write(struct.pack("<III", nx, ny, nt))
        fh.write(payload.tobytes())


def load_volume(path) -> ComplexVolume:
    """Read a volume written by save_volume.  Raises FormatError on bad
    magic, truncated payload, or overflowing dims."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != VOLUME_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        header = fh.read(12)
        if len(header) != 12:
            raise FormatError("truncated header")
        nx, ny, nt = struct.unpack("<III", header)
        if min(nx, ny, nt) < 1 or max(nx, ny, nt) > _MAX_DIM:
            raise FormatError(f"bad dims ({nx}, {ny}, {nt})")
        n = nx * ny * nt
        raw = fh.read(8 * n + 1)
        if len(raw) != 8 * n:
            raise FormatError(f"payload has {len(raw)} bytes, expected {8 * n}")
    payload = np.frombuffer(raw, dtype="<f4")
    flat = payload[0::2].astype(np.float64) + 1j * payload[1::2].astype(np.float64)
    return ComplexVolume.from_ravel(flat, (nx, ny, nt))


def export_magnitude_csv(path, volume: ComplexVolume) -> None:
    """Debug export: one CSV row per (x, y) position and frame column."""
    nx, ny, nt = volume.dims
    mag = volume.magnitude()
    with open(path, "w") as fh:
        header = ",".join(["x", "y"] + [f"frame{t}" for t in range(nt)])
        fh.write(header + "\n")
        for y in range(ny):
            for x in range(nx):
                vals = ",".join(f"{mag[x, y, t]:.9g}" for t in range(nt))
                fh.write(f"{x},{y},{vals}\n")


@dataclass(frozen=True)
class KSpaceData:
    """Measured Fourier samples plus the layout needed to interpret them.

    samples are ordered coil-major, then frame, then within-frame sample
    index; frame_sizes lists the per-frame sample count of a single coil.
    """

    samples: np.ndarray
    n_coils: int
    frame_sizes: tuple[int, ...]

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 1:
            raise DimensionError("k-space samples must be a flat vector")
        if arr.dtype != np.complex128:
            arr = arr.astype(np.complex128)
        expected = self.n_coils * sum(self.frame_sizes)
        if arr.size != expected:
            raise DimensionError(
                f"k-space vector has {arr.size} samples, layout implies {expected}"
            )
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "frame_sizes", tuple(int(s) for s in self.frame_sizes))

    @property
    def n_frames(self) -> int:
        return len(self.frame_sizes)

    @property
    def m(self) -> int:
        return self.samples.size

    def per_coil(self) -> np.ndarray:
        """View the sample vector as (n_coils, samples-per-coil)."""
        return self.samples.reshape(self.n_coils, -1)

    def same_layout(self, other: "KSpaceData") -> bool:
        return self.n_coils == other.n_coils and self.frame_sizes == other.frame_sizes

    def with_samples(self, samples: np.ndarray) -> "KSpaceData":
        return KSpaceData(samples, self.n_coils, self.frame_sizes)


KSPACE_MAGIC = b"ALNEKSP1"


def save_kspace(path, data: KSpaceData) -> None:
    """Write k-space samples at full float64 precision: magic, u32 coil and
    frame counts, u32 per-frame sizes, then interleaved (re, im) float64."""
    payload = np.empty(2 * data.m, dtype="<f8")
    payload[0::2] = data.samples.real
    payload[1::2] = data.samples.imag
    with open(path, "wb") as fh:
        fh.write(KSPACE_MAGIC)
        fh.write(struct.pack("<II", data.n_coils, data.n_frames))
        fh.write(np.asarray(data.frame_sizes, dtype="<u4").tobytes())
        fh.write(payload.tobytes())


def load_kspace(path) -> KSpaceData:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != KSPACE_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError("truncated header")
        n_coils, n_frames = struct.unpack("<II", header)
        if n_coils < 1 or n_frames < 1 or n_coils > _MAX_DIM or n_frames > _MAX_DIM:
            raise FormatError(f"bad layout counts ({n_coils}, {n_frames})")
        sizes_raw = fh.read(4 * n_frames)
        if len(sizes_raw) != 4 * n_frames:
            raise FormatError("truncated frame-size table")
        frame_sizes = tuple(int(s) for s in np.frombuffer(sizes_raw, dtype="<u4"))
        m = n_coils * sum(frame_sizes)
        raw = fh.read(16 * m + 1)
        if len(raw) != 16 * m:
            raise FormatError(f"payload has {len(raw)} bytes, expected {16 * m}")
    payload = np.frombuffer(raw, dtype="<f8")
    samples = payload[0::2] + 1j * payload[1::2]
    return KSpaceData(samples, n_coils, frame_sizes)
