"""Linear solvers and the alternating reconstruction driver.

The quadratic image update solves H x = c with H = A^H A + lam * E^T E via
conjugate gradients (identity preconditioner; H is well conditioned at the
sizes handled here because the patch term adds a positive diagonal).  For
a single-coil Cartesian operator with uniform patch coverage the same
system diagonalizes in k-space and is solved in closed form, which serves
as an independent cross-check of the iterative path.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, DivergenceError, PreconditionError
from .operators import CartesianMaskedOp, make_normal_map
from .patches import (
    PatchGeometry,
    coverage_weights,
    denormalize_patch_matrix,
    extract_patches,
    normalize_patchset,
    reassemble_raw_sum,
    PatchSet,
)
from .shallownet import (
    NetworkParams,
    TrainConfig,
    forward_batch,
    init_network_params,
    train,
)
from .volume import ComplexVolume, KSpaceData


# ---------------------------------------------------------------------------
# conjugate gradients


@dataclass(frozen=True)
class PcgResult:
    x: np.ndarray
    residual_norm: float
    iterations: int


def pcg_solve(apply_h, c: np.ndarray, x0: np.ndarray | None = None,
              n_iter: int = 4, tol: float = 0.0, precond=None) -> PcgResult:
    """Conjugate gradients on the Hermitian positive-definite system
    H x = c, run for at most n_iter steps or until the residual norm drops
    to tol.  apply_h maps an array to an array of the same shape."""
    if n_iter < 1:
        raise PreconditionError("n_iter must be >= 1")
    c = np.asarray(c, dtype=np.complex128)
    x = np.zeros_like(c) if x0 is None else np.array(x0, dtype=np.complex128)
    if x.shape != c.shape:
        raise DimensionError("x0 and right-hand side shapes differ")
    r = c - apply_h(x)
    z = r if precond is None else precond(r)
    p = z.copy()
    rz = np.real(np.vdot(r, z))
    res_norm = float(np.linalg.norm(r))
    done = 0
    for _ in range(n_iter):
        if not math.isfinite(res_norm):
            raise DivergenceError("non-finite residual in conjugate gradients")
        if res_norm <= tol or rz == 0.0:
            break
        hp = apply_h(p)
        denom = np.real(np.vdot(p, hp))
        if denom <= 0.0 or not math.isfinite(denom):
            raise DivergenceError("operator is not positive definite on the Krylov space")
        alpha = rz / denom
        x = x + alpha * p
        r = r - alpha * hp
        z = r if precond is None else precond(r)
        rz_new = np.real(np.vdot(r, z))
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
        res_norm = float(np.linalg.norm(r))
        done += 1
    if not math.isfinite(res_norm):
        raise DivergenceError("non-finite residual in conjugate gradients")
    return PcgResult(x, res_norm, done)


# ---------------------------------------------------------------------------
# closed-form solution in the isometry case


def closed_form_isometry(op: CartesianMaskedOp, y: KSpaceData, z_img: ComplexVolume,
                         lam: float, beta: float) -> ComplexVolume:
    """Solve (A^H A + lam * beta I) x = A^H y + lam * z_img exactly.

    Requires a single-coil Cartesian operator and uniform patch coverage
    beta (z_img is the raw transpose sum of the network-approximated
    patches).  In k-space, with zhat = F(z_img) / beta:
    sampled entries   xhat = (y + lam * beta * zhat) / (1 + lam * beta)
    unsampled entries xhat = zhat
    """
    if not isinstance(op, CartesianMaskedOp):
        raise PreconditionError("closed form requires a single-coil Cartesian operator")
    if lam <= 0 or beta <= 0:
        raise PreconditionError("lam and beta must be positive")
    if z_img.dims != op.dims:
        raise DimensionError("z_img dims do not match operator dims")
    zhat = np.fft.fft2(z_img.data, axes=(0, 1), norm="ortho") / beta
    ygrid = op.embed(y)
    lb = lam * beta
    xhat = np.where(op.mask, (ygrid + lb * zhat) / (1.0 + lb), zhat)
    return ComplexVolume(np.fft.ifft2(xhat, axes=(0, 1), norm="ortho"))


def uniform_coverage(geometry: PatchGeometry) -> float:
    """Coverage weight if uniform, else raises."""
    w = coverage_weights(geometry)
    beta = float(w.flat[0])
    if not np.all(w == beta):
        raise PreconditionError("patch coverage is not uniform")
    return beta


# ---------------------------------------------------------------------------
# iteration trace


TRACE_COLUMNS = (
    "iteration", "e_k", "fidelity", "train_loss", "psnr", "ssim", "nrmse",
    "t_train_s", "t_reg_s", "t_pcg_s",
)


@dataclass
class IterationRecord:
    iteration: int
    e_k: float = math.nan
    fidelity: float = math.nan
    train_loss: float = math.nan
    psnr: float = math.nan
    ssim: float = math.nan
    nrmse: float = math.nan
    t_train_s: float = math.nan
    t_reg_s: float = math.nan
    t_pcg_s: float = math.nan
    extras: dict = field(default_factory=dict)


@dataclass
class IterationTrace:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]


_PSNR_CSV_CAP = 999.0


def _csv_num(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    if isinstance(value, float) and math.isinf(value):
        return f"{_PSNR_CSV_CAP:.6g}"
    return f"{value:.9g}"


def save_trace_csv(path, trace: IterationTrace) -> None:
    """Write the trace with the documented column schema; any per-method
    extras are appended as additional columns."""
    extra_keys = sorted({k for r in trace.records for k in r.extras})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(TRACE_COLUMNS) + extra_keys)
        for r in trace.records:
            row = [r.iteration] + [
                _csv_num(getattr(r, c)) for c in TRACE_COLUMNS[1:]
            ] + [_csv_num(r.extras.get(k, math.nan)) for k in extra_keys]
            writer.writerow(row)


def load_trace_csv(path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        columns: dict[str, list[float]] = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for key, val in row.items():
                columns[key].append(float(val))
    return columns


# ---------------------------------------------------------------------------
# alternating driver


@dataclass(frozen=True)
class AloneConfig:
    lam: float = 0.1
    max_iters: int = 25
    eps: float = 0.0
    pcg_iters: int = 4
    n_filters: int = 16
    mode: str = "complex"
    warm_start: bool = True
    geometry: PatchGeometry | None = None
    train_config: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise PreconditionError("lam must be > 0")
        if self.max_iters < 1:
            raise PreconditionError("max_iters must be >= 1")
        if self.eps < 0:
            raise PreconditionError("eps must be >= 0")
        if self.pcg_iters < 1:
            raise PreconditionError("pcg_iters must be >= 1")


@dataclass
class AloneResult:
    x: ComplexVolume
    network: NetworkParams
    trace: IterationTrace
    stopped_degenerate: bool = False


def _network_patch_approximation(params: NetworkParams, patchset: PatchSet) -> np.ndarray:
    """Normalize, run the network over every patch, undo normalization.
    Returns the approximated patch matrix z as (p, d) complex."""
    normalized = normalize_patchset(patchset)
    geom = patchset.geometry
    if params.mode == "complex":
        out_blocks = forward_batch(params, normalized.blocks())
    else:
        blocks = normalized.blocks()
        out_re = forward_batch(params, np.ascontiguousarray(blocks.real))
        out_im = forward_batch(params, np.ascontiguousarray(blocks.imag))
        out_blocks = out_re + 1j * out_im
    out = out_blocks.transpose(0, 3, 2, 1).reshape(-1, geom.d)
    return denormalize_patch_matrix(out, normalized)


def _training_blocks(patchset: PatchSet, mode: str):
    normalized = normalize_patchset(patchset)
    blocks = normalized.blocks()
    if mode == "complex":
        return blocks
    # real mode: the two channels become independent single-channel samples
    return np.concatenate([blocks.real, blocks.imag], axis=0)


def alone_reconstruct(y: KSpaceData, op, config: AloneConfig,
                      theta0: NetworkParams | None = None,
                      freeze_network: bool = False,
                      reference: ComplexVolume | None = None,
                      crop_fraction: float = 0.5) -> AloneResult:
    """Alternate network training on patches of the current iterate with a
    conjugate-gradient update of the regularized normal equations.

    Stops after max_iters outer iterations or when the squared relative
    change of the iterate drops to eps.  When reference is given, image
    quality metrics are recorded per iteration.
    """
    geometry = config.geometry
    if geometry is None:
        raise PreconditionError("AloneConfig.geometry must be set")
    if geometry.dims != op.dims:
        raise DimensionError("patch geometry dims do not match operator dims")
    if freeze_network and theta0 is None:
        raise PreconditionError("freeze_network requires theta0")

    xu = op.adjoint(y)  # initialization A^H y, also the constant data term
    x = xu
    params = theta0 if theta0 is not None else init_network_params(
        config.n_filters, config.mode, config.seed
    )
    apply_h = make_normal_map(op, geometry, config.lam)
    trace = IterationTrace()
    metrics_fn = _make_metrics_fn(reference, crop_fraction)

    e_k = math.inf
    k = 0
    degenerate = False
    while k < config.max_iters and e_k > config.eps:
        record = IterationRecord(iteration=k + 1)
        x_norm = x.norm()
        if x_norm == 0.0:
            degenerate = True
            break

        patchset = extract_patches(x, geometry)

        t0 = time.perf_counter()
        if not freeze_network:
            # per-iteration shuffle seed, derived deterministically
            train_cfg = replace(config.train_config,
                                seed=config.train_config.seed + k)
            params = train(params, _training_blocks(patchset, config.mode),
                           config.lam, train_cfg)
            record.train_loss = _exit_training_loss(params, patchset, config)
        record.t_train_s = time.perf_counter() - t0

        t0 = time.perf_counter()
        z = _network_patch_approximation(params, patchset)
        z_img = reassemble_raw_sum(PatchSet(geometry, z))
        c = xu.data + config.lam * z_img
        record.t_reg_s = time.perf_counter() - t0

        t0 = time.perf_counter()
        result = pcg_solve(apply_h, c, x0=x.data, n_iter=config.pcg_iters)
        record.t_pcg_s = time.perf_counter() - t0

        x_new = ComplexVolume(result.x)
        e_k = float(np.sum(np.abs(x_new.data - x.data) ** 2)) / (x_norm**2)
        x = x_new
        record.e_k = e_k
        record.fidelity = float(np.linalg.norm(op.forward(x).samples - y.samples))
        if metrics_fn is not None:
            record.psnr, record.ssim, record.nrmse = metrics_fn(x)
        trace.records.append(record)
        k += 1
        if not freeze_network and not config.warm_start:
            params = init_network_params(config.n_filters, config.mode,
                                         config.seed + k)

    return AloneResult(x, params, trace, stopped_degenerate=degenerate)


def _exit_training_loss(params: NetworkParams, patchset: PatchSet, config: AloneConfig) -> float:
    from .shallownet import dataset_loss

    blocks = _training_blocks(patchset, config.mode)
    return dataset_loss(params, blocks, config.lam, config.train_config.penalty_weight)


def _make_metrics_fn(reference: ComplexVolume | None, crop_fraction: float):
    if reference is None:
        return None
    from .metrics import crop_center, nrmse, psnr, ssim

    ref_c = crop_center(reference, crop_fraction)

    def compute(x: ComplexVolume):
        xc = crop_center(x, crop_fraction)
        return psnr(xc, ref_c), ssim(xc, ref_c), nrmse(xc, ref_c)

    return compute
