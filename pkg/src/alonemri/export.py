"""Magnitude frame export as 8-bit PGM (optionally PNG) images."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .volume import ComplexVolume

log = logging.getLogger(__name__)


def _scale_to_u8(mag: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.zeros(mag.shape, dtype=np.uint8)
    scaled = (mag - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def write_pgm(path, image_u8: np.ndarray) -> None:
    """Binary P5; the array's first axis is x, written as image columns."""
    rows = image_u8.T  # -> (height, width) raster order
    with open(path, "wb") as fh:
        fh.write(f"P5\n{rows.shape[1]} {rows.shape[0]}\n255\n".encode())
        fh.write(np.ascontiguousarray(rows).tobytes())


def export_frames(out_dir, volume: ComplexVolume, png: bool = False) -> list[str]:
    """One PGM per frame plus an x-t profile through the volume center,
    min-max scaled over the whole volume (scale factors logged).

    Returns the list of files written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mag = volume.magnitude()
    lo, hi = float(mag.min()), float(mag.max())
    log.info("frame export scaling: min=%.6g max=%.6g", lo, hi)
    written = []
    for t in range(volume.dims[2]):
        u8 = _scale_to_u8(mag[:, :, t], lo, hi)
        path = out / f"frame_{t:03d}.pgm"
        write_pgm(path, u8)
        written.append(str(path))
        if png:
            written.append(_write_png(out / f"frame_{t:03d}.png", u8))
    profile = _scale_to_u8(mag[:, volume.dims[1] // 2, :], lo, hi)
    path = out / "profile_xt.pgm"
    write_pgm(path, profile)
    written.append(str(path))
    if png:
        written.append(_write_png(out / "profile_xt.png", profile))
    return written


def _write_png(path, image_u8: np.ndarray) -> str:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError("PNG export requires Pillow") from exc
    Image.fromarray(image_u8.T, mode="L").save(path)
    return str(path)
