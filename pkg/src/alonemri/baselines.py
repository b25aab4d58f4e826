"""Comparison reconstructions: isotropic TV via ADMM, and adaptive
dictionary-learning regularization with ITKrM training and OMP coding.

Both baselines share the conjugate-gradient machinery and, for the
dictionary route, the identical regularized normal operator used by the
network-based method, so timing and quality differences isolate the
regularizers themselves.
"""

from __future__ import annotations

import logging
import math
import struct
import time
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, PreconditionError
from .operators import make_normal_map
from .patches import PatchGeometry, PatchSet, extract_patches, reassemble_raw_sum
from .solvers import IterationRecord, IterationTrace, pcg_solve
from .volume import ComplexVolume, KSpaceData

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# finite differences and shrinkage


def grad3d(x: np.ndarray) -> np.ndarray:
    """Forward differences along each axis with replicate-edge boundary
    (the last difference of every axis is zero).  Returns shape (3, ...)."""
    if x.ndim != 3:
        raise DimensionError("grad3d expects a 3D array")
    if min(x.shape) < 2:
        raise PreconditionError("grad3d needs at least 2 samples per axis")
    g = np.zeros((3,) + x.shape, dtype=x.dtype)
    g[0, :-1, :, :] = np.diff(x, axis=0)
    g[1, :, :-1, :] = np.diff(x, axis=1)
    g[2, :, :, :-1] = np.diff(x, axis=2)
    return g


def grad3d_transpose(g: np.ndarray) -> np.ndarray:
    """Exact adjoint of grad3d."""
    if g.ndim != 4 or g.shape[0] != 3:
        raise DimensionError("expected a (3, Nx, Ny, Nt) difference field")
    out = np.zeros(g.shape[1:], dtype=g.dtype)
    for axis in range(3):
        ga = np.moveaxis(g[axis], axis, 0)
        oa = np.moveaxis(out, axis, 0)
        oa[0] -= ga[0]
        oa[1:-1] += ga[:-2] - ga[1:-1]
        oa[-1] += ga[-2]
    return out


def div3d(g: np.ndarray) -> np.ndarray:
    """Discrete divergence, the negative adjoint of grad3d."""
    return -grad3d_transpose(g)


def tv_value(x: np.ndarray) -> float:
    g = grad3d(x)
    return float(np.sum(np.sqrt(np.sum(np.abs(g) ** 2, axis=0))))


def isotropic_shrinkage(g: np.ndarray, tau: float) -> np.ndarray:
    """Block soft threshold on the per-voxel difference magnitude."""
    if tau < 0:
        raise PreconditionError("tau must be >= 0")
    mag = np.sqrt(np.sum(np.abs(g) ** 2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(mag > 0.0, np.maximum(mag - tau, 0.0) / mag, 0.0)
    return g * factor[None]


# ---------------------------------------------------------------------------
# TV reconstruction


@dataclass(frozen=True)
class TvConfig:
    lam: float = 0.05
    rho: float = 1.0
    outer_iters: int = 16
    shrink_iters: int = 1
    pcg_iters: int = 4

    def __post_init__(self):
        if min(self.lam, self.rho) <= 0 and self.lam != 0.0:
            raise PreconditionError("lam must be >= 0 and rho > 0")
        if self.rho <= 0:
            raise PreconditionError("rho must be > 0")
        if min(self.outer_iters, self.shrink_iters, self.pcg_iters) < 1:
            raise PreconditionError("iteration counts must be >= 1")


def tv_admm_reconstruct(y: KSpaceData, op, config: TvConfig,
                        reference: ComplexVolume | None = None,
                        crop_fraction: float = 0.5) -> tuple[ComplexVolume, IterationTrace]:
    """ADMM splitting z = Gx with scaled dual u; the x-update runs a few
    conjugate-gradient steps on (A^H A + rho G^T G) x = A^H y + rho G^T (z - u)."""
    from .solvers import _make_metrics_fn

    xu = op.adjoint(y)
    x = xu.data.copy()
    z = np.zeros((3,) + x.shape, dtype=np.complex128)
    u = np.zeros_like(z)
    tau = config.lam / config.rho
    metrics_fn = _make_metrics_fn(reference, crop_fraction)

    def apply_h(arr: np.ndarray) -> np.ndarray:
        vol = ComplexVolume(arr)
        out = op.adjoint(op.forward(vol)).data
        return out + config.rho * grad3d_transpose(grad3d(arr))

    trace = IterationTrace()
    for k in range(config.outer_iters):
        gx = grad3d(x)
        for _ in range(config.shrink_iters):
            z = isotropic_shrinkage(gx + u, tau)
        rhs = xu.data + config.rho * grad3d_transpose(z - u)
        t0 = time.perf_counter()
        result = pcg_solve(apply_h, rhs, x0=x, n_iter=config.pcg_iters)
        t_pcg = time.perf_counter() - t0
        x = result.x
        gx = grad3d(x)
        u = u + gx - z
        fidelity = float(np.linalg.norm(op.forward(ComplexVolume(x)).samples - y.samples))
        record = IterationRecord(
            iteration=k + 1,
            fidelity=fidelity,
            t_pcg_s=t_pcg,
            extras={"tv": tv_value(x)},
        )
        if metrics_fn is not None:
            record.psnr, record.ssim, record.nrmse = metrics_fn(ComplexVolume(x))
        trace.records.append(record)
    return ComplexVolume(x), trace


# ---------------------------------------------------------------------------
# dictionary learning


@dataclass(frozen=True)
class Dictionary:
    """Real-valued dictionary with unit-norm atoms as columns of a
    (d, n_atoms) matrix."""

    atoms: np.ndarray
    sparsity: int

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        if atoms.ndim != 2:
            raise DimensionError("dictionary atoms must form a 2D matrix")
        norms = np.linalg.norm(atoms, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-10):
            raise PreconditionError("dictionary atoms must have unit norm")
        if not (1 <= self.sparsity <= atoms.shape[1]):
            raise PreconditionError("sparsity must lie in [1, n_atoms]")
        object.__setattr__(self, "atoms", atoms)

    @property
    def d(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


def random_dictionary(d: int, n_atoms: int, sparsity: int, seed: int = 0) -> Dictionary:
    rng = np.random.default_rng(seed)
    atoms = rng.standard_normal((d, n_atoms))
    atoms /= np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms, sparsity)


DICTIONARY_MAGIC = b"ALNEDIC1"


def save_dictionary(path, dico: Dictionary) -> None:
    """Binary format: magic, u32 d, u32 n_atoms, u32 sparsity, then atoms
    column by column as little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(DICTIONARY_MAGIC)
        fh.write(struct.pack("<III", dico.d, dico.n_atoms, dico.sparsity))
        fh.write(dico.atoms.T.astype("<f8").tobytes())


def load_dictionary(path) -> Dictionary:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != DICTIONARY_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        header = fh.read(12)
        if len(header) != 12:
            raise FormatError("truncated header")
        d, n_atoms, sparsity = struct.unpack("<III", header)
        raw = fh.read(8 * d * n_atoms + 1)
        if len(raw) != 8 * d * n_atoms:
            raise FormatError("truncated atom payload")
    atoms = np.frombuffer(raw, dtype="<f8").reshape(n_atoms, d).T.copy()
    return Dictionary(atoms, sparsity)


def omp_sparse_code(dico: Dictionary, signal: np.ndarray, sparsity: int | None = None) -> np.ndarray:
    """Orthogonal matching pursuit: greedily pick the atom most correlated
    with the residual and least-squares re-fit on the active set, until the
    sparsity budget is reached or the residual is (numerically) zero.

    A rank-deficient active set drops the offending atom, bans it for this
    signal, and continues.
    """
    s_max = dico.sparsity if sparsity is None else sparsity
    if s_max > dico.n_atoms:
        raise PreconditionError("sparsity exceeds the number of atoms")
    y = np.asarray(signal, dtype=np.float64)
    if y.shape != (dico.d,):
        raise DimensionError(f"signal length {y.shape} does not match atom length {dico.d}")
    atoms = dico.atoms
    gamma = np.zeros(dico.n_atoms)
    active: list[int] = []
    banned = np.zeros(dico.n_atoms, dtype=bool)
    residual = y
    coef = np.empty(0)
    while len(active) < s_max:
        if np.linalg.norm(residual) < 1e-10:
            break
        corr = atoms.T @ residual
        corr[banned] = 0.0
        pick = int(np.argmax(np.abs(corr)))
        if corr[pick] == 0.0:
            break
        active.append(pick)
        banned[pick] = True
        sub = atoms[:, active]
        try:
            coef_new = np.linalg.solve(sub.T @ sub, sub.T @ y)
        except np.linalg.LinAlgError:
            log.debug("omp: dropping rank-deficient atom %d", pick)
            active.pop()
            continue
        if not np.isfinite(coef_new).all():
            log.debug("omp: dropping ill-conditioned atom %d", pick)
            active.pop()
            continue
        coef = coef_new
        residual = y - sub @ coef
    if active:
        gamma[active] = coef
    return gamma


def omp_code_matrix(dico: Dictionary, signals: np.ndarray, sparsity: int | None = None) -> np.ndarray:
    """Sparse-code each column of a (d, N) signal matrix; returns (n_atoms, N)."""
    codes = np.zeros((dico.n_atoms, signals.shape[1]))
    for n in range(signals.shape[1]):
        codes[:, n] = omp_sparse_code(dico, signals[:, n], sparsity)
    return codes


def _batched_projection(atoms: np.ndarray, picks: np.ndarray, ip: np.ndarray):
    """Least-squares coefficients of each signal on its S selected atoms.

    picks: (S, N) atom indices, ip: (n_atoms, N) inner products.  Returns
    (S, N) coefficients; singular Gram systems get a 1e-10 ridge.
    """
    gram = atoms.T @ atoms
    n = picks.shape[1]
    g_sub = gram[picks.T[:, :, None], picks.T[:, None, :]]  # (N, S, S)
    rhs = np.take_along_axis(ip, picks, axis=0).T[:, :, None]  # (N, S, 1)
    try:
        coef = np.linalg.solve(g_sub, rhs)
    except np.linalg.LinAlgError:
        eye = 1e-10 * np.eye(picks.shape[0])
        coef = np.linalg.solve(g_sub + eye[None], rhs)
    return coef[:, :, 0].T  # (S, N)


def itkrm_train(dico: Dictionary, signals: np.ndarray, sparsity: int | None = None,
                n_iters: int = 10) -> Dictionary:
    """Iterative thresholding and residual means dictionary update.

    Per iteration: threshold each signal onto its S most correlated atoms,
    form the projection residuals, and replace every used atom by the
    normalized signed sum of (residual + its own rank-one contribution)
    over the signals using it.  Atoms that end up unused are re-seeded from
    the worst-approximated signals.
    """
    s = dico.sparsity if sparsity is None else sparsity
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 2 or signals.shape[0] != dico.d:
        raise DimensionError("signals must be a (d, N) matrix")
    n = signals.shape[1]
    if n < dico.n_atoms:
        raise PreconditionError("need at least n_atoms training signals")
    atoms = dico.atoms.copy()
    for _ in range(n_iters):
        ip = atoms.T @ signals  # (K, N)
        picks = np.argpartition(-np.abs(ip), s - 1, axis=0)[:s]  # (S, N)
        coef = _batched_projection(atoms, picks, ip)
        approx = np.zeros_like(signals)
        # accumulate D_In coef_n per signal
        for row in range(s):
            approx += atoms[:, picks[row]] * coef[row][None, :]
        res = signals - approx
        member = np.zeros_like(ip, dtype=bool)
        np.put_along_axis(member, picks, True, axis=0)
        signed = member * np.sign(ip)
        weights = (member * np.abs(ip)).sum(axis=1)
        new_atoms = res @ signed.T + atoms * weights[None, :]
        scale = np.linalg.norm(new_atoms, axis=0)
        used = (member.any(axis=1)) & (scale > 1e-12)
        atoms[:, used] = new_atoms[:, used] / scale[used]
        unused = np.flatnonzero(~used)
        if unused.size:
            worst = np.argsort(-np.linalg.norm(res, axis=0))
            for i, k in enumerate(unused):
                seed_sig = signals[:, worst[i % n]]
                nrm = np.linalg.norm(seed_sig)
                if nrm > 1e-12:
                    atoms[:, k] = seed_sig / nrm
                # zero training data: keep the previous atom
    return Dictionary(atoms, dico.sparsity)


# ---------------------------------------------------------------------------
# dictionary-regularized reconstruction


@dataclass(frozen=True)
class DicConfig:
    lam: float = 0.1
    outer_iters: int = 16
    sparsity: int = 16
    n_atoms: int = 64
    itkrm_iters: int = 10
    pcg_iters: int = 4
    geometry: PatchGeometry | None = None
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise PreconditionError("lam must be > 0")
        if min(self.outer_iters, self.sparsity, self.n_atoms,
               self.itkrm_iters, self.pcg_iters) < 1:
            raise PreconditionError("all counts must be >= 1")


def _patches_to_signals(patch_matrix: np.ndarray):
    """(p, d) complex patches -> (d, 2p) real mean-removed signals plus the
    per-signal means needed to undo the centering."""
    stacked = np.concatenate([patch_matrix.real, patch_matrix.imag], axis=0)  # (2p, d)
    means = stacked.mean(axis=1)
    return (stacked - means[:, None]).T.copy(), means


def _signals_to_patches(approx: np.ndarray, means: np.ndarray, p: int) -> np.ndarray:
    restored = approx.T + means[:, None]  # (2p, d)
    return restored[:p] + 1j * restored[p:]


def dic_reconstruct(y: KSpaceData, op, config: DicConfig,
                    dico0: Dictionary | None = None,
                    reference: ComplexVolume | None = None,
                    crop_fraction: float = 0.5) -> tuple[ComplexVolume, IterationTrace, Dictionary]:
    """Alternate dictionary training on the current patches, OMP sparse
    approximation, and the same regularized normal-equation update used by
    the network-based method."""
    from .solvers import _make_metrics_fn

    geometry = config.geometry
    if geometry is None:
        raise PreconditionError("DicConfig.geometry must be set")
    if geometry.dims != op.dims:
        raise DimensionError("patch geometry dims do not match operator dims")
    if config.sparsity > config.n_atoms:
        raise PreconditionError("sparsity exceeds n_atoms")

    xu = op.adjoint(y)
    x = xu
    dico = dico0 if dico0 is not None else random_dictionary(
        geometry.d, config.n_atoms, config.sparsity, config.seed
    )
    if dico.d != geometry.d:
        raise DimensionError("dictionary atom length does not match patch size")
    apply_h = make_normal_map(op, geometry, config.lam)
    metrics_fn = _make_metrics_fn(reference, crop_fraction)
    trace = IterationTrace()

    for k in range(config.outer_iters):
        patchset = extract_patches(x, geometry)
        p = patchset.n_patches
        signals, means = _patches_to_signals(patchset.patches)

        t0 = time.perf_counter()
        dico = itkrm_train(dico, signals, config.sparsity, config.itkrm_iters)
        t_train = time.perf_counter() - t0

        t0 = time.perf_counter()
        codes = omp_code_matrix(dico, signals, config.sparsity)
        approx = dico.atoms @ codes
        z = _signals_to_patches(approx, means, p)
        z_img = reassemble_raw_sum(PatchSet(geometry, z))
        c = xu.data + config.lam * z_img
        t_reg = time.perf_counter() - t0

        t0 = time.perf_counter()
        result = pcg_solve(apply_h, c, x0=x.data, n_iter=config.pcg_iters)
        t_pcg = time.perf_counter() - t0

        x = ComplexVolume(result.x)
        fidelity = float(np.linalg.norm(op.forward(x).samples - y.samples))
        approx_err = float(np.linalg.norm(signals - approx) / max(np.linalg.norm(signals), 1e-30))
        record = IterationRecord(
            iteration=k + 1,
            fidelity=fidelity,
            t_train_s=t_train,
            t_reg_s=t_reg,
            t_pcg_s=t_pcg,
            extras={"patch_approx_rel_err": approx_err},
        )
        if metrics_fn is not None:
            record.psnr, record.ssim, record.nrmse = metrics_fn(x)
        trace.records.append(record)
    return x, trace, dico
