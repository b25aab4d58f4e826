"""Image quality measures on magnitude images.

All measures operate on the magnitudes of the (optionally center-cropped)
volumes: nrmse is the relative L2 error, psnr uses the maximum reference
magnitude as peak, and ssim is evaluated frame-wise in 2D with an 11x11
Gaussian window (sigma 1.5, K1 = 0.01, K2 = 0.03) and averaged over
frames.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import DimensionError, PreconditionError
from .volume import ComplexVolume

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def crop_center(v: ComplexVolume, fraction: float = 0.5) -> ComplexVolume:
    """Keep the central fraction of each spatial axis; all frames kept."""
    if not (0.0 < fraction <= 1.0):
        raise PreconditionError(f"crop fraction {fraction} not in (0, 1]")
    if fraction == 1.0:
        return v
    nx, ny, nt = v.dims
    cx, cy = int(round(nx * fraction)), int(round(ny * fraction))
    if cx < 1 or cy < 1:
        raise PreconditionError("crop would produce an empty volume")
    x0, y0 = (nx - cx) // 2, (ny - cy) // 2
    return ComplexVolume(v.data[x0 : x0 + cx, y0 : y0 + cy, :])


def _magnitudes(x: ComplexVolume, ref: ComplexVolume, crop_fraction: float | None):
    if x.dims != ref.dims:
        raise DimensionError(f"volume dims differ: {x.dims} vs {ref.dims}")
    if crop_fraction is not None:
        x = crop_center(x, crop_fraction)
        ref = crop_center(ref, crop_fraction)
    return x.magnitude(), ref.magnitude()


def nrmse(x: ComplexVolume, ref: ComplexVolume, crop_fraction: float | None = None) -> float:
    mx, mr = _magnitudes(x, ref, crop_fraction)
    denom = np.linalg.norm(mr)
    if denom == 0.0:
        raise PreconditionError("nrmse undefined for a zero reference")
    return float(np.linalg.norm(mx - mr) / denom)


def psnr(x: ComplexVolume, ref: ComplexVolume, crop_fraction: float | None = None) -> float:
    """20 log10(peak / rmse) with peak the maximum reference magnitude over
    the evaluated region; +inf for identical inputs."""
    mx, mr = _magnitudes(x, ref, crop_fraction)
    rmse = math.sqrt(float(np.mean((mx - mr) ** 2)))
    if rmse == 0.0:
        return math.inf
    peak = float(mr.max())
    return 20.0 * math.log10(peak / rmse)


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    coords = np.arange(SSIM_WINDOW) - half
    g = np.exp(-(coords[:, None] ** 2 + coords[None, :] ** 2) / (2.0 * SSIM_SIGMA**2))
    return g / g.sum()


def ssim_frame(a: np.ndarray, b: np.ndarray, data_range: float) -> float:
    """2D SSIM of one magnitude frame pair over the valid window region."""
    if min(a.shape) < SSIM_WINDOW:
        raise PreconditionError(
            f"frame {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    w = _ssim_window()
    mu_a = convolve2d(a, w, mode="valid")
    mu_b = convolve2d(b, w, mode="valid")
    var_a = convolve2d(a * a, w, mode="valid") - mu_a**2
    var_b = convolve2d(b * b, w, mode="valid") - mu_b**2
    cov = convolve2d(a * b, w, mode="valid") - mu_a * mu_b
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(x: ComplexVolume, ref: ComplexVolume, crop_fraction: float | None = None,
         data_range: float | None = None) -> float:
    """Frame-wise 2D SSIM averaged over frames.  The dynamic range defaults
    to the maximum reference magnitude; passing it explicitly makes the
    measure symmetric in its arguments."""
    mx, mr = _magnitudes(x, ref, crop_fraction)
    rng = float(mr.max()) if data_range is None else float(data_range)
    if rng <= 0.0:
        raise PreconditionError("ssim needs a positive dynamic range")
    vals = [ssim_frame(mx[:, :, t], mr[:, :, t], rng) for t in range(mx.shape[2])]
    return float(np.mean(vals))


@dataclass(frozen=True)
class MetricsRecord:
    psnr: float
    ssim: float
    nrmse: float
    crop_fraction: float
    per_frame_psnr: tuple[float, ...] = ()
    per_frame_ssim: tuple[float, ...] = ()
    per_frame_nrmse: tuple[float, ...] = ()


def evaluate(x: ComplexVolume, ref: ComplexVolume, crop_fraction: float = 0.5) -> MetricsRecord:
    """Aggregate and per-frame measures on the cropped magnitudes.  The
    per-frame psnr shares the global reference peak; per-frame nrmse uses
    the per-frame reference norm."""
    mx, mr = _magnitudes(x, ref, crop_fraction)
    total_nrmse = nrmse(x, ref, crop_fraction)
    total_psnr = psnr(x, ref, crop_fraction)
    total_ssim = ssim(x, ref, crop_fraction)
    peak = float(mr.max())
    pf_psnr, pf_ssim, pf_nrmse = [], [], []
    for t in range(mx.shape[2]):
        dx, dr = mx[:, :, t], mr[:, :, t]
        rmse = math.sqrt(float(np.mean((dx - dr) ** 2)))
        pf_psnr.append(math.inf if rmse == 0.0 else 20.0 * math.log10(peak / rmse))
        pf_ssim.append(ssim_frame(dx, dr, peak))
        denom = float(np.linalg.norm(dr))
        pf_nrmse.append(math.nan if denom == 0.0 else float(np.linalg.norm(dx - dr)) / denom)
    return MetricsRecord(
        total_psnr, total_ssim, total_nrmse, crop_fraction,
        tuple(pf_psnr), tuple(pf_ssim), tuple(pf_nrmse),
    )


_PSNR_CSV_CAP = 999.0


def _fmt(value: float) -> str:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return f"{_PSNR_CSV_CAP:.6g}"
    return f"{value:.9g}"


def save_metrics_csv(path, record: MetricsRecord) -> None:
    """Single-row CSV: aggregate columns followed by per-frame columns."""
    nt = len(record.per_frame_psnr)
    header = ["psnr", "ssim", "nrmse", "crop_fraction"]
    values = [_fmt(record.psnr), _fmt(record.ssim), _fmt(record.nrmse),
              f"{record.crop_fraction:g}"]
    for t in range(nt):
        header += [f"psnr_f{t}", f"ssim_f{t}", f"nrmse_f{t}"]
        values += [_fmt(record.per_frame_psnr[t]), _fmt(record.per_frame_ssim[t]),
                   _fmt(record.per_frame_nrmse[t])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerow(values)
