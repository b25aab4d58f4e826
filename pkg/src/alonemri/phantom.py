"""Synthetic dynamic ground truth and retrospective undersampling.

The phantom is a cine-like scene: static background ellipses of varied
intensity, one disk whose radius oscillates sinusoidally over the frame
cycle, thin static bars for edge-preservation assessment, and a smooth
spatial phase map making the volume genuinely complex.  All structure is
drawn with soft (~1 pixel) edges so the scene is not dominated by
unresolvable frequency content.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .patches import PatchGeometry
from .volume import ComplexVolume, KSpaceData

DEFAULT_DIMS = (64, 64, 16)

# patch geometries the phantom dims must tile exactly (desk-scale analogs
# of the large- and small-patch reconstruction settings)
_DEFAULT_GEOMETRIES = (
    ((16, 16, 4), (8, 8, 2)),
    ((4, 4, 4), (2, 2, 2)),
)


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = DEFAULT_DIMS
    n_background_ellipses: int = 4
    disk_center: tuple[float, float] = (0.22, -0.18)
    disk_base_radius: float = 0.16
    disk_radius_amplitude: float = 0.06
    n_bars: int = 3
    phase_strength: float = 1.2
    texture_strength: float = 0.12
    fine_texture_strength: float = 0.1
    seed: int = 0

    def __post_init__(self):
        nx, ny, nt = self.dims
        if min(nx, ny, nt) < 4:
            raise PreconditionError(f"phantom dims {self.dims} too small")
        for patch, stride in _DEFAULT_GEOMETRIES:
            try:
                PatchGeometry(patch, stride, self.dims)
            except Exception as exc:
                raise PreconditionError(
                    f"dims {self.dims} do not tile the default patch geometry "
                    f"{patch}/{stride}: {exc}"
                ) from exc
        if self.disk_base_radius <= 0 or self.disk_base_radius + abs(
            self.disk_radius_amplitude
        ) >= 1.0:
            raise PreconditionError("disk radius parameters leave the field of view")


def _soft_ellipse(x, y, cx, cy, ax, ay, edge):
    """Soft indicator of an ellipse: 1 inside, 0 outside, ~edge-wide ramp."""
    rho = np.sqrt(((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2)
    return np.clip((1.0 - rho) / edge + 0.5, 0.0, 1.0)


def _soft_bar(x, y, cx, cy, hx, hy, edge):
    wx = np.clip((hx - np.abs(x - cx)) / edge + 0.5, 0.0, 1.0)
    wy = np.clip((hy - np.abs(y - cy)) / edge + 0.5, 0.0, 1.0)
    return wx * wy


def make_phantom(spec: PhantomSpec) -> ComplexVolume:
    """Deterministic phantom for a given spec; frame t carries a disk of
    radius r0 + a * sin(2 pi t / Nt).

    Intensities are smoothly shaded and lightly textured so the scene is
    not piecewise constant: generic edge-preserving priors must trade bias
    against noise on it, as they do on real anatomies.
    """
    nx, ny, nt = spec.dims
    rng = np.random.default_rng(spec.seed)
    x = np.linspace(-1.0, 1.0, nx)[:, None]
    y = np.linspace(-1.0, 1.0, ny)[None, :]
    edge = 3.0 / max(nx, ny)  # ~1.5 pixel ramp

    background = np.zeros((nx, ny))
    body = _soft_ellipse(x, y, 0.0, 0.0, 0.92, 0.88, edge)
    background = np.maximum(background, 0.55 * body)
    for i in range(spec.n_background_ellipses):
        cx = rng.uniform(-0.45, 0.45)
        cy = rng.uniform(-0.45, 0.45)
        ax = rng.uniform(0.12, 0.3)
        ay = rng.uniform(0.12, 0.3)
        intensity = 0.3 + 0.5 * (i + 1) / spec.n_background_ellipses
        shape = _soft_ellipse(x, y, cx, cy, ax, ay, edge)
        background = background * (1.0 - shape) + intensity * shape

    # smooth shading ramp plus multi-scale texture bumps inside the body
    shading = 1.0 + 0.25 * x + 0.15 * y - 0.2 * (x**2 + y**2)
    texture = np.zeros((nx, ny))
    for _ in range(24):
        bx, by = rng.uniform(-0.7, 0.7, size=2)
        sigma = rng.uniform(0.03, 0.15)
        texture += rng.uniform(-1.0, 1.0) * np.exp(
            -((x - bx) ** 2 + (y - by) ** 2) / (2.0 * sigma**2)
        )
    texture *= spec.texture_strength / max(np.abs(texture).max(), 1e-9)
    background = background * shading + texture * body

    # fine oriented gratings, static over time: structured content at the
    # spatial frequencies of the undersampling artifacts (learnable by
    # adaptive priors, expensive for an edge-preserving one)
    if spec.fine_texture_strength > 0:
        fine = np.zeros((nx, ny))
        for _ in range(8):
            theta = rng.uniform(0.0, math.pi)
            wavelength_px = rng.uniform(4.0, 10.0)
            k = 2.0 * math.pi * nx / (2.0 * wavelength_px)  # rad per unit coord
            phase0 = rng.uniform(0.0, 2.0 * math.pi)
            cx, cy = rng.uniform(-0.5, 0.5, size=2)
            win_sigma = rng.uniform(0.15, 0.4)
            window = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * win_sigma**2))
            fine += window * np.cos(k * (math.cos(theta) * x + math.sin(theta) * y) + phase0)
        fine *= spec.fine_texture_strength / max(np.abs(fine).max(), 1e-9)
        background = background + fine * body

    bars = np.zeros((nx, ny))
    for i in range(spec.n_bars):
        cx = -0.55 + 0.18 * i
        cy = 0.55
        w = _soft_bar(x, y, cx, cy, 1.5 / nx, 0.22, edge)
        bars = np.maximum(bars, w)
    background = background * (1.0 - bars) + 1.0 * bars

    phase = spec.phase_strength * (
        0.6 * np.exp(-((x - 0.2) ** 2 + (y + 0.1) ** 2) / 0.5)
        + 0.25 * x
        - 0.15 * y
    )

    # texture carried by the beating disk, advected with the contraction so
    # fine detail moves coherently like myocardium
    cx0, cy0 = spec.disk_center
    wave_params = [
        (rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
         rng.uniform(0.15, 0.5), rng.uniform(-1.0, 1.0))
        for _ in range(8)
    ]

    frames = np.empty((nx, ny, nt), dtype=np.complex128)
    r0 = spec.disk_base_radius
    for t in range(nt):
        r = r0 + spec.disk_radius_amplitude * math.sin(2.0 * math.pi * t / nt)
        disk = _soft_ellipse(x, y, cx0, cy0, r, r, edge)
        # radial advection: stretch the disk texture with the contraction
        scale = r0 / max(r, 1e-6)
        xs = cx0 + (x - cx0) * scale
        ys = cy0 + (y - cy0) * scale
        tex_t = np.zeros((nx, ny))
        for bx, by, sigma, amp in wave_params:
            tex_t += amp * np.cos(6.0 * ((xs - cx0) * bx + (ys - cy0) * by) + 4.0 * sigma)
        tex_t *= spec.texture_strength / max(np.abs(tex_t).max(), 1e-9)
        disk_shade = 0.9 - 0.2 * ((x - cx0) ** 2 + (y - cy0) ** 2) / max(r, 1e-6) ** 2
        mag = background * (1.0 - disk) + (disk_shade + tex_t) * disk
        frames[:, :, t] = np.clip(mag, 0.0, 1.0) * np.exp(1j * phase)
    return ComplexVolume(frames)


def disk_radius(spec: PhantomSpec, t: int) -> float:
    return spec.disk_base_radius + spec.disk_radius_amplitude * math.sin(
        2.0 * math.pi * t / spec.dims[2]
    )


def retrospective_sample(x_gt: ComplexVolume, op, noise_std: float = 0.0,
                         seed: int = 0) -> KSpaceData:
    """Forward-project the ground truth and add complex Gaussian noise with
    the given per-component standard deviation."""
    if noise_std < 0:
        raise PreconditionError("noise_std must be >= 0")
    y = op.forward(x_gt)
    if noise_std == 0.0:
        return y
    rng = np.random.default_rng(seed)
    noise = noise_std * (
        rng.standard_normal(y.m) + 1j * rng.standard_normal(y.m)
    )
    return y.with_samples(y.samples + noise)


def noise_std_for_snr(y: KSpaceData, snr_db: float) -> float:
    """Per-component noise std giving the requested data-domain SNR
    ||y||^2 / E||eta||^2 in dB."""
    power = float(np.sum(np.abs(y.samples) ** 2))
    if power == 0.0:
        raise PreconditionError("cannot set an SNR for zero data")
    return math.sqrt(power / (2.0 * y.m * 10.0 ** (snr_db / 10.0)))
