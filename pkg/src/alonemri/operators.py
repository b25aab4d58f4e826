"""Frame-wise Fourier encoding operators and their adjoints.

Two forward models are provided: a Cartesian operator (unitary 2D FFT per
frame followed by binary mask selection, single coil) and a radial
operator that evaluates an exact non-uniform DFT at arbitrary k-space
locations, optionally composed with coil-sensitivity weighting.  Both are
linear, immutable after construction, and expose exact adjoints.

The radial transform of a frame x is
    y(k) = sum_r x(r) * exp(-i k . r) / sqrt(Nx * Ny)
with r the pixel index centered at (Nx // 2, Ny // 2) and k in [-pi, pi)^2;
the direct summation is evaluated separably with one complex matmul per
frame so that no gridding interpolation enters the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, PreconditionError
from .volume import ComplexVolume, KSpaceData

GOLDEN_ANGLE = math.pi * (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class RadialTrajectory:
    """Golden-angle spoke layout: per-frame spoke angles and sample coords.

    Spokes are indexed globally across frames (continuous acquisition);
    spoke s has angle (s * golden_angle) mod pi.  Every spoke holds
    samples_per_spoke points with radii (i - spp // 2) * (2 pi / spp),
    spanning [-pi, pi) through the k-space origin.
    """

    n_frames: int
    samples_per_spoke: int
    spoke_angles: tuple[np.ndarray, ...]  # one angle array per frame

    @property
    def spokes_per_frame(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.spoke_angles)

    @property
    def frame_sizes(self) -> tuple[int, ...]:
        return tuple(len(a) * self.samples_per_spoke for a in self.spoke_angles)

    def radii(self) -> np.ndarray:
        spp = self.samples_per_spoke
        return (np.arange(spp) - spp // 2) * (2.0 * math.pi / spp)

    def frame_coords(self, frame: int) -> np.ndarray:
        """Sample coordinates of one frame, shape (spokes * spp, 2)."""
        angles = self.spoke_angles[frame]
        r = self.radii()
        kx = np.cos(angles)[:, None] * r[None, :]
        ky = np.sin(angles)[:, None] * r[None, :]
        return np.stack([kx.ravel(), ky.ravel()], axis=-1)


def build_golden_angle_trajectory(
    n_spokes_per_frame: int, samples_per_spoke: int, n_frames: int
) -> RadialTrajectory:
    if min(n_spokes_per_frame, samples_per_spoke, n_frames) < 1:
        raise PreconditionError("trajectory counts must all be >= 1")
    total = n_spokes_per_frame * n_frames
    angles = np.mod(np.arange(total) * GOLDEN_ANGLE, math.pi)
    per_frame = tuple(
        angles[f * n_spokes_per_frame : (f + 1) * n_spokes_per_frame]
        for f in range(n_frames)
    )
    return RadialTrajectory(n_frames, samples_per_spoke, per_frame)


def build_golden_angle_trajectory_total(
    total_spokes: int, samples_per_spoke: int, n_frames: int
) -> RadialTrajectory:
    """Distribute a total spoke budget over frames: even split, remainder
    spokes assigned to the earliest frames."""
    if min(total_spokes, samples_per_spoke, n_frames) < 1:
        raise PreconditionError("trajectory counts must all be >= 1")
    base, rem = divmod(total_spokes, n_frames)
    counts = [base + (1 if f < rem else 0) for f in range(n_frames)]
    angles = np.mod(np.arange(total_spokes) * GOLDEN_ANGLE, math.pi)
    per_frame, start = [], 0
    for c in counts:
        per_frame.append(angles[start : start + c])
        start += c
    return RadialTrajectory(n_frames, samples_per_spoke, tuple(per_frame))


def nyquist_spokes(nx: int) -> int:
    """Spokes per frame needed for an unaliased radial acquisition."""
    return int(math.ceil(math.pi / 2.0 * nx))


def spokes_for_acceleration(nx: int, acceleration: float) -> int:
    """Per-frame spoke count giving the requested undersampling factor."""
    if acceleration <= 0:
        raise PreconditionError("acceleration must be positive")
    return max(1, round(nyquist_spokes(nx) / acceleration))


def export_trajectory_csv(path, trajectory: RadialTrajectory) -> None:
    """One row per sample: spoke index (global), frame, angle, kx, ky."""
    with open(path, "w") as fh:
        fh.write("spoke,frame,angle,kx,ky\n")
        spoke = 0
        for f in range(trajectory.n_frames):
            r = trajectory.radii()
            for angle in trajectory.spoke_angles[f]:
                kx = math.cos(angle) * r
                ky = math.sin(angle) * r
                for i in range(trajectory.samples_per_spoke):
                    fh.write(f"{spoke},{f},{angle:.12g},{kx[i]:.12g},{ky[i]:.12g}\n")
                spoke += 1


# ---------------------------------------------------------------------------
# coil maps


@dataclass(frozen=True)
class CoilMaps:
    """n_c complex sensitivity maps of shape (Nx, Ny), shared by all frames,
    normalized so the pixelwise sum of squared magnitudes is 1."""

    maps: np.ndarray  # (n_c, Nx, Ny) complex128

    def __post_init__(self):
        arr = np.asarray(self.maps, dtype=np.complex128)
        if arr.ndim != 3:
            raise DimensionError("coil maps must have shape (n_c, Nx, Ny)")
        sos = np.sum(np.abs(arr) ** 2, axis=0)
        if not np.allclose(sos, 1.0, atol=1e-8):
            raise PreconditionError("coil maps are not sum-of-squares normalized")
        object.__setattr__(self, "maps", arr)

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]


def make_gaussian_coil_maps(nx: int, ny: int, n_coils: int, seed: int = 0) -> CoilMaps:
    """Synthetic smooth sensitivities: Gaussian magnitude bumps placed around
    the field of view with smooth phase ramps, SOS-normalized pixelwise."""
    rng = np.random.default_rng(seed)
    x = np.linspace(-1.0, 1.0, nx)[:, None]
    y = np.linspace(-1.0, 1.0, ny)[None, :]
    maps = np.empty((n_coils, nx, ny), dtype=np.complex128)
    for c in range(n_coils):
        phi = 2.0 * math.pi * c / n_coils
        cx = 0.9 * math.cos(phi) + rng.uniform(-0.05, 0.05)
        cy = 0.9 * math.sin(phi) + rng.uniform(-0.05, 0.05)
        sigma = 0.8 + rng.uniform(-0.1, 0.1)
        mag = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2)) + 0.05
        phase = (
            rng.uniform(-0.5, 0.5) * x
            + rng.uniform(-0.5, 0.5) * y
            + rng.uniform(0, 2 * math.pi)
        )
        maps[c] = mag * np.exp(1j * phase)
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return CoilMaps(maps / sos)


# ---------------------------------------------------------------------------
# Cartesian masked operator


class CartesianMaskedOp:
    """Single-coil Cartesian encoding: per-frame unitary 2D FFT followed by
    selection of the masked frequency locations."""

    def __init__(self, dims: tuple[int, int, int], mask: np.ndarray):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != tuple(dims):
            raise DimensionError(f"mask shape {mask.shape} does not match dims {dims}")
        self.dims = tuple(dims)
        self.mask = mask
        self._frame_sizes = tuple(
            int(mask[:, :, t].sum()) for t in range(self.dims[2])
        )
        if min(self._frame_sizes) == 0:
            raise PreconditionError("each frame must retain at least one sample")

    @classmethod
    def full(cls, dims: tuple[int, int, int]) -> "CartesianMaskedOp":
        return cls(dims, np.ones(dims, dtype=bool))

    @property
    def n_coils(self) -> int:
        return 1

    @property
    def frame_sizes(self) -> tuple[int, ...]:
        return self._frame_sizes

    def empty_data(self) -> KSpaceData:
        total = sum(self._frame_sizes)
        return KSpaceData(np.zeros(total, dtype=np.complex128), 1, self._frame_sizes)

    def forward(self, x: ComplexVolume) -> KSpaceData:
        if x.dims != self.dims:
            raise DimensionError(f"volume dims {x.dims} do not match op dims {self.dims}")
        spectra = np.fft.fft2(x.data, axes=(0, 1), norm="ortho")
        chunks = [
            spectra[:, :, t][self.mask[:, :, t]] for t in range(self.dims[2])
        ]
        return KSpaceData(np.concatenate(chunks), 1, self._frame_sizes)

    def adjoint(self, y: KSpaceData) -> ComplexVolume:
        self._check_layout(y)
        spectra = np.zeros(self.dims, dtype=np.complex128)
        start = 0
        for t, size in enumerate(self._frame_sizes):
            frame = np.zeros(self.dims[:2], dtype=np.complex128)
            frame[self.mask[:, :, t]] = y.samples[start : start + size]
            spectra[:, :, t] = frame
            start += size
        return ComplexVolume(np.fft.ifft2(spectra, axes=(0, 1), norm="ortho"))

    def embed(self, y: KSpaceData) -> np.ndarray:
        """Mask-embed samples onto the full frequency grid (zeros elsewhere)."""
        self._check_layout(y)
        grid = np.zeros(self.dims, dtype=np.complex128)
        start = 0
        for t, size in enumerate(self._frame_sizes):
            frame = np.zeros(self.dims[:2], dtype=np.complex128)
            frame[self.mask[:, :, t]] = y.samples[start : start + size]
            grid[:, :, t] = frame
            start += size
        return grid

    def _check_layout(self, y: KSpaceData) -> None:
        if y.n_coils != 1 or y.frame_sizes != self._frame_sizes:
            raise DimensionError("k-space layout does not match this operator")


# ---------------------------------------------------------------------------
# radial NDFT operator


class RadialNDFTOp:
    """Frame-wise exact non-uniform DFT along a radial trajectory, with
    optional multi-coil sensitivity weighting.

    Frame f of the volume only contributes to (and is only filled from)
    frame f of the data.  The per-frame phase factors are cached in
    separable form so each application reduces to one complex matmul per
    frame plus elementwise products.
    """

    def __init__(
        self,
        dims: tuple[int, int, int],
        trajectory: RadialTrajectory,
        coil_maps: CoilMaps | None = None,
    ):
        nx, ny, nt = dims
        if trajectory.n_frames != nt:
            raise DimensionError(
                f"trajectory has {trajectory.n_frames} frames, dims imply {nt}"
            )
        if coil_maps is not None and coil_maps.maps.shape[1:] != (nx, ny):
            raise DimensionError("coil map shape does not match image dims")
        self.dims = tuple(dims)
        self.trajectory = trajectory
        self.coil_maps = coil_maps
        self._scale = 1.0 / math.sqrt(nx * ny)
        rx = np.arange(nx) - nx // 2
        ry = np.arange(ny) - ny // 2
        self._u = []  # exp(-i kx rx), (m_f, Nx)
        self._v = []  # exp(-i ky ry), (m_f, Ny)
        for f in range(nt):
            coords = trajectory.frame_coords(f)
            self._u.append(np.exp(-1j * coords[:, 0:1] * rx[None, :]))
            self._v.append(np.exp(-1j * coords[:, 1:2] * ry[None, :]))

    @property
    def n_coils(self) -> int:
        return 1 if self.coil_maps is None else self.coil_maps.n_coils

    @property
    def frame_sizes(self) -> tuple[int, ...]:
        return self.trajectory.frame_sizes

    def empty_data(self) -> KSpaceData:
        total = self.n_coils * sum(self.frame_sizes)
        return KSpaceData(np.zeros(total, dtype=np.complex128), self.n_coils, self.frame_sizes)

    def _coil_images(self, frame: np.ndarray) -> np.ndarray:
        if self.coil_maps is None:
            return frame[None, :, :]
        return self.coil_maps.maps * frame[None, :, :]

    def forward(self, x: ComplexVolume) -> KSpaceData:
        if x.dims != self.dims:
            raise DimensionError(f"volume dims {x.dims} do not match op dims {self.dims}")
        nc = self.n_coils
        per_frame = []
        for f in range(self.dims[2]):
            xc = self._coil_images(x.data[:, :, f])  # (nc, Nx, Ny)
            u, v = self._u[f], self._v[f]
            # inner = sum_ry V[s, ry] * xc[c, rx, ry]  -> (nc, Nx, m_f)
            inner = xc @ v.T
            yf = np.sum(u.T[None, :, :] * inner, axis=1) * self._scale  # (nc, m_f)
            per_frame.append(yf)
        # coil-major ordering: concatenate frames within each coil
        samples = np.concatenate([np.concatenate([pf[c] for pf in per_frame]) for c in range(nc)])
        return KSpaceData(samples, nc, self.frame_sizes)

    def adjoint(self, y: KSpaceData) -> ComplexVolume:
        self._check_layout(y)
        nc = self.n_coils
        nx, ny, nt = self.dims
        per_coil = y.per_coil()  # (nc, sum frame_sizes)
        out = np.zeros(self.dims, dtype=np.complex128)
        start = 0
        for f, size in enumerate(self.frame_sizes):
            u, v = self._u[f], self._v[f]
            uc, vc = np.conj(u), np.conj(v)
            yf = per_coil[:, start : start + size]  # (nc, m_f)
            frame = np.zeros((nx, ny), dtype=np.complex128)
            for c in range(nc):
                g = uc * yf[c][:, None]  # (m_f, Nx)
                img = g.T @ vc  # (Nx, Ny)
                if self.coil_maps is None:
                    frame += img
                else:
                    frame += np.conj(self.coil_maps.maps[c]) * img
            out[:, :, f] = frame * self._scale
            start += size
        return ComplexVolume(out)

    def _check_layout(self, y: KSpaceData) -> None:
        if y.n_coils != self.n_coils or y.frame_sizes != self.frame_sizes:
            raise DimensionError("k-space layout does not match this operator")


# ---------------------------------------------------------------------------
# normal operator


def apply_normal_system(op, geometry, lam: float, x: ComplexVolume) -> ComplexVolume:
    """Apply H = A^H A + lam * sum_j E_j^T E_j, with the patch Gram operator
    realized as its diagonal coverage-weight map."""
    if lam < 0:
        raise PreconditionError("lam must be >= 0")
    if x.dims != op.dims:
        raise DimensionError(f"volume dims {x.dims} do not match op dims {op.dims}")
    out = op.adjoint(op.forward(x)).data
    if lam > 0:
        from .patches import coverage_weights

        if geometry.dims != op.dims:
            raise DimensionError("patch geometry dims do not match operator dims")
        out = out + lam * coverage_weights(geometry) * x.data
    return ComplexVolume(out)


def make_normal_map(op, geometry, lam: float):
    """Array-level closure applying H, for use inside iterative solvers.

    Shared by every reconstruction method that solves the regularized
    normal equations, so all of them exercise the identical operator code.
    """
    if lam > 0:
        from .patches import coverage_weights

        weights = lam * coverage_weights(geometry)
    else:
        weights = None

    def apply(arr: np.ndarray) -> np.ndarray:
        vol = ComplexVolume(arr)
        out = op.adjoint(op.forward(vol)).data
        if weights is not None:
            out = out + weights * arr
        return out

    return apply
