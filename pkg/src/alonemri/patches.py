"""Patch extraction and aggregation for dynamic complex images.

The extraction operator cuts overlapping 3D sub-blocks on a regular stride
grid; its transpose re-inserts blocks additively.  Geometries must tile the
image exactly, i.e. (N - p) is divisible by the stride on every axis, so
the Gram operator of extraction is a diagonal coverage-count map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, GeometryError
from .volume import ComplexVolume

_CONST_STD_EPS = 1e-12


@dataclass(frozen=True)
class PatchGeometry:
    """Patch shape, strides and the image dims they tile.

    Patch enumeration order is fixed: the x offset varies fastest, then y,
    then t.  Within a patch, voxels are flattened x fastest as well.
    """

    patch: tuple[int, int, int]
    stride: tuple[int, int, int]
    dims: tuple[int, int, int]

    def __post_init__(self):
        for a, (n, p, s) in enumerate(zip(self.dims, self.patch, self.stride)):
            if not (1 <= p <= n):
                raise GeometryError(f"axis {a}: patch size {p} not in [1, {n}]")
            if not (1 <= s <= p):
                raise GeometryError(f"axis {a}: stride {s} not in [1, {p}]")
            if (n - p) % s != 0:
                raise GeometryError(
                    f"axis {a}: (N - p) = {n - p} not divisible by stride {s}"
                )

    @property
    def n_positions(self) -> tuple[int, int, int]:
        return tuple(
            (n - p) // s + 1 for n, p, s in zip(self.dims, self.patch, self.stride)
        )  # type: ignore[return-value]

    @property
    def d(self) -> int:
        """Voxels per patch."""
        px, py, pt = self.patch
        return px * py * pt

    def offsets(self, axis: int) -> np.ndarray:
        n, p, s = self.dims[axis], self.patch[axis], self.stride[axis]
        return np.arange(0, n - p + 1, s)


def count_patches(geometry: PatchGeometry) -> int:
    nx, ny, nt = geometry.n_positions
    return nx * ny * nt


@dataclass(frozen=True)
class PatchSet:
    """Extracted patches as a (p, d) complex matrix plus the geometry.

    Normalization records (per-patch mean/std over the 2*d real scalars and
    a constant-patch flag) are attached by normalize(); raw extraction
    leaves them empty.
    """

    geometry: PatchGeometry
    patches: np.ndarray
    means: np.ndarray = field(default_factory=lambda: np.empty(0))
    stds: np.ndarray = field(default_factory=lambda: np.empty(0))
    const_flags: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))

    def __post_init__(self):
        if self.patches.shape != (count_patches(self.geometry), self.geometry.d):
            raise GeometryError(
                f"patch matrix shape {self.patches.shape} inconsistent with geometry"
            )

    @property
    def n_patches(self) -> int:
        return self.patches.shape[0]

    def blocks(self) -> np.ndarray:
        """Patches reshaped to (p, px, py, pt) blocks (x fastest layout)."""
        px, py, pt = self.geometry.patch
        return self.patches.reshape(-1, pt, py, px).transpose(0, 3, 2, 1)


def extract_patches(x: ComplexVolume, geometry: PatchGeometry) -> PatchSet:
    """Cut all patches of x in the documented enumeration order."""
    if x.dims != geometry.dims:
        raise GeometryError(f"volume dims {x.dims} do not match geometry {geometry.dims}")
    return PatchSet(geometry, _patch_matrix(x.data, geometry))


def _patch_matrix(arr: np.ndarray, geometry: PatchGeometry) -> np.ndarray:
    sx, sy, st = geometry.stride
    win = sliding_window_view(arr, geometry.patch)[::sx, ::sy, ::st]
    # position order: x fastest -> C-ravel over (t, y, x); within a patch the
    # same transposition yields x-fastest flattening.
    mat = win.transpose(2, 1, 0, 5, 4, 3).reshape(count_patches(geometry), geometry.d)
    return np.ascontiguousarray(mat)


def _iter_positions(geometry: PatchGeometry):
    """Yield (j, x0, y0, t0) in enumeration order (x offset fastest)."""
    ox, oy, ot = (geometry.offsets(a) for a in range(3))
    j = 0
    for t0 in ot:
        for y0 in oy:
            for x0 in ox:
                yield j, x0, y0, t0
                j += 1


def reassemble_patches(patchset: PatchSet, average: bool = True) -> ComplexVolume:
    """Aggregate patches back to a volume.

    average=True divides the additive sum by the per-voxel coverage count
    (the display-friendly inverse of extraction); average=False returns the
    raw transpose sum used inside the normal-equation right-hand side.
    """
    raw = reassemble_raw_sum(patchset)
    if not average:
        return ComplexVolume(raw)
    weights = coverage_weights(patchset.geometry)
    if np.any(weights == 0):
        raise GeometryError("zero coverage voxel encountered")
    return ComplexVolume(raw / weights)


def reassemble_raw_sum(patchset: PatchSet) -> np.ndarray:
    """Sum of per-patch transposed insertions, as a raw complex array."""
    geom = patchset.geometry
    px, py, pt = geom.patch
    out = np.zeros(geom.dims, dtype=np.complex128)
    blocks = patchset.blocks()
    for j, x0, y0, t0 in _iter_positions(geom):
        out[x0 : x0 + px, y0 : y0 + py, t0 : t0 + pt] += blocks[j]
    return out


def coverage_weights(geometry: PatchGeometry) -> np.ndarray:
    """Number of patches containing each voxel (the diagonal of the
    extraction Gram operator)."""
    out = np.zeros(geometry.dims, dtype=np.float64)
    px, py, pt = geometry.patch
    for _, x0, y0, t0 in _iter_positions(geometry):
        out[x0 : x0 + px, y0 : y0 + py, t0 : t0 + pt] += 1.0
    return out


def normalize_patch(patch: np.ndarray) -> tuple[np.ndarray, tuple[float, float, bool]]:
    """Zero-mean/unit-std a single patch.

    For complex patches the statistics are taken jointly over real and
    imaginary parts (2*d real scalars, population std); real patches use
    their d scalars directly.  Constant patches pass through unscaled and
    are flagged so denormalization is exact.
    """
    if np.iscomplexobj(patch):
        patch = np.ascontiguousarray(patch, dtype=np.complex128)
        reim = patch.view(np.float64)
        mean = float(reim.mean())
        std = float(reim.std())
        if std < _CONST_STD_EPS:
            return patch.copy(), (mean, 1.0, True)
        return (patch - (mean + 1j * mean)) / std, (mean, std, False)
    patch = np.asarray(patch, dtype=np.float64)
    mean = float(patch.mean())
    std = float(patch.std())
    if std < _CONST_STD_EPS:
        return patch.copy(), (mean, 1.0, True)
    return (patch - mean) / std, (mean, std, False)


def denormalize_patch(patch: np.ndarray, record: tuple[float, float, bool]) -> np.ndarray:
    mean, std, const = record
    if const:
        return np.asarray(patch).copy()
    if np.iscomplexobj(patch):
        return np.asarray(patch, dtype=np.complex128) * std + (mean + 1j * mean)
    return np.asarray(patch, dtype=np.float64) * std + mean


def normalize_patchset(patchset: PatchSet) -> PatchSet:
    """Per-patch normalization of a whole set, batched."""
    pats = np.ascontiguousarray(patchset.patches)
    reim = pats.view(np.float64).reshape(pats.shape[0], -1)
    means = reim.mean(axis=1)
    stds = reim.std(axis=1)
    const = stds < _CONST_STD_EPS
    safe_std = np.where(const, 1.0, stds)
    shift = np.where(const, 0.0, means)
    normalized = (pats - (shift + 1j * shift)[:, None]) / safe_std[:, None]
    return PatchSet(patchset.geometry, normalized, means, safe_std, const)


def denormalize_patch_matrix(patches: np.ndarray, normalized_set: PatchSet) -> np.ndarray:
    """Invert normalize_patchset on a same-shape patch matrix."""
    if patches.shape != normalized_set.patches.shape:
        raise DimensionError("patch matrix shape mismatch on denormalization")
    shift = np.where(normalized_set.const_flags, 0.0, normalized_set.means)
    return patches * normalized_set.stds[:, None] + (shift + 1j * shift)[:, None]
