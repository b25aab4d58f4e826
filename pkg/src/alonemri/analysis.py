"""Executable checks of the alternating scheme's fixed-point structure.

A network-adapted solution is an image that (i) reproduces the measured
data exactly and (ii) has every raw patch reproduced exactly by the
network.  Such pairs are fixed points of the alternating iteration and
partial minimizers of the joint objective; this module constructs an
explicit pair, measures both residuals, probes the partial-minimizer
property with random perturbations, and runs a data-perturbation
stability experiment on the full reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .patches import PatchGeometry, extract_patches
from .shallownet import NetworkParams, forward_batch, kernel_penalty
from .solvers import AloneConfig, alone_reconstruct
from .volume import ComplexVolume, KSpaceData


def objective_value(x: ComplexVolume, params: NetworkParams, y: KSpaceData, op,
                    geometry: PatchGeometry, lam: float,
                    penalty_weight: float = 1e-4) -> float:
    """Joint objective: 0.5 |A x - y|^2 + lam/2 sum_j |E_j x - f(E_j x)|^2
    + penalty_weight * R(theta), evaluated on raw (un-normalized) patches."""
    data = 0.5 * float(np.sum(np.abs(op.forward(x).samples - y.samples) ** 2))
    blocks = extract_patches(x, geometry).blocks()
    out = forward_batch(params, blocks)
    patch_term = 0.5 * lam * float(np.sum(np.abs(out - blocks) ** 2))
    return data + patch_term + penalty_weight * kernel_penalty(params)


@dataclass(frozen=True)
class FixedPointReport:
    data_residual: float
    adaptation_residual: float
    objective: float


def theta_adapted_residuals(x: ComplexVolume, params: NetworkParams, y: KSpaceData,
                            op, geometry: PatchGeometry, lam: float = 0.1,
                            penalty_weight: float = 1e-4) -> FixedPointReport:
    """Residuals of the two adaptation conditions plus the joint objective."""
    data_res = float(np.linalg.norm(op.forward(x).samples - y.samples))
    blocks = extract_patches(x, geometry).blocks()
    out = forward_batch(params, blocks)
    adapt_res = float(np.sqrt(np.sum(np.abs(out - blocks) ** 2)))
    obj = objective_value(x, params, y, op, geometry, lam, penalty_weight)
    return FixedPointReport(data_res, adapt_res, obj)


def build_identity_network() -> NetworkParams:
    """Hand-built parameters that reproduce every patch exactly.

    Each channel is routed through a +/- pair of centered-delta kernels, so
    relu(v) - relu(-v) = v recombines to the identity for inputs of either
    sign (normalized patches have negative entries)."""
    kernels = np.zeros((4, 2, 3, 3, 3))
    kernels[0, 0, 1, 1, 1] = 1.0
    kernels[1, 0, 1, 1, 1] = -1.0
    kernels[2, 1, 1, 1, 1] = 1.0
    kernels[3, 1, 1, 1, 1] = -1.0
    comb_w = np.array([[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]])
    return NetworkParams("complex", kernels, np.zeros(4), comb_w, np.zeros(2))


def build_adapted_pair(x_star: ComplexVolume, op) -> tuple[NetworkParams, KSpaceData]:
    """Construct (theta*, y) so x_star is an adapted solution of the data:
    y := A x_star and theta* the patch-reproducing network above."""
    params = build_identity_network()
    return params, op.forward(x_star)


@dataclass(frozen=True)
class PartialMinimizerReport:
    passed: bool
    base_objective: float
    worst_x_decrease: float
    worst_theta_decrease: float
    n_probes: int
    radius: float


def partial_minimizer_check(x_star: ComplexVolume, params: NetworkParams, y: KSpaceData,
                            op, geometry: PatchGeometry, lam: float,
                            n_probes: int = 100, radius: float = 1e-2,
                            seed: int = 0, penalty_weight: float = 1e-4,
                            slack: float = 1e-10) -> PartialMinimizerReport:
    """Probe the joint objective with seeded random perturbations of the
    image and of the parameters (L2 norm = radius each); passes when no
    probe beats the base objective by more than the slack."""
    if n_probes < 1:
        raise PreconditionError("n_probes must be >= 1")
    base = objective_value(x_star, params, y, op, geometry, lam, penalty_weight)
    rng = np.random.default_rng(seed)
    theta = params.to_vector()
    worst_x = 0.0
    worst_theta = 0.0
    for _ in range(n_probes):
        if radius > 0.0:
            dx = rng.standard_normal(x_star.dims) + 1j * rng.standard_normal(x_star.dims)
            dx *= radius / np.linalg.norm(dx)
            x_probe = ComplexVolume(x_star.data + dx)
        else:
            x_probe = x_star
        obj_x = objective_value(x_probe, params, y, op, geometry, lam, penalty_weight)
        worst_x = max(worst_x, base - obj_x)

        if radius > 0.0:
            dt = rng.standard_normal(theta.size)
            dt *= radius / np.linalg.norm(dt)
            probe_params = NetworkParams.from_vector(
                params.mode, params.n_filters, theta + dt
            )
        else:
            probe_params = params
        obj_t = objective_value(x_star, probe_params, y, op, geometry, lam, penalty_weight)
        worst_theta = max(worst_theta, base - obj_t)
    passed = worst_x <= slack and worst_theta <= slack
    return PartialMinimizerReport(passed, base, worst_x, worst_theta, n_probes, radius)


@dataclass(frozen=True)
class StabilityReport:
    noise_levels: tuple[float, ...]
    distances: tuple[float, ...]
    monotone_ok: bool
    reduction_ok: bool

    @property
    def passed(self) -> bool:
        return self.monotone_ok and self.reduction_ok


def stability_experiment(y: KSpaceData, noise_levels, op, config: AloneConfig,
                         seed: int = 0, monotone_slack: float = 0.1) -> StabilityReport:
    """Distance of the k-iteration reconstruction from perturbed data to
    the unperturbed one, for a strictly decreasing ladder of noise levels.

    One seeded noise direction is drawn and scaled per level, and all
    reconstructions share the configuration seed, so the iterate map is a
    deterministic function of the data.  Passes when the distances are
    non-increasing within the slack and the smallest level lands below
    half the largest level's distance.
    """
    levels = [float(v) for v in noise_levels]
    if len(levels) < 1:
        raise PreconditionError("need at least one noise level")
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise PreconditionError("noise levels must be strictly decreasing")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(y.m) + 1j * rng.standard_normal(y.m)

    base = alone_reconstruct(y, op, config).x
    distances = []
    for level in levels:
        y_pert = y.with_samples(y.samples + level * direction)
        x_pert = alone_reconstruct(y_pert, op, config).x
        distances.append(float(np.linalg.norm(x_pert.data - base.data)))

    monotone_ok = all(
        d_next <= (1.0 + monotone_slack) * d_prev
        for d_prev, d_next in zip(distances, distances[1:])
    )
    if all(d == 0.0 for d in distances):
        reduction_ok = True
    else:
        reduction_ok = distances[-1] < distances[0] / 2.0
    return StabilityReport(tuple(levels), tuple(distances), monotone_ok, reduction_ok)


def save_stability_csv(path, report: StabilityReport) -> None:
    with open(path, "w") as fh:
        fh.write("noise_level,distance\n")
        for level, dist in zip(report.noise_levels, report.distances):
            fh.write(f"{level:.9g},{dist:.9g}\n")


def format_stability_summary(report: StabilityReport) -> str:
    lines = ["data-perturbation stability:"]
    for level, dist in zip(report.noise_levels, report.distances):
        lines.append(f"  noise {level:.3e} -> iterate distance {dist:.6e}")
    lines.append(
        f"  monotone trend: {'ok' if report.monotone_ok else 'VIOLATED'}; "
        f"reduction: {'ok' if report.reduction_ok else 'VIOLATED'}"
    )
    return "\n".join(lines)
