"""Shared brute-force oracles for the test suite."""

import numpy as np


def brute_force_gram(arr: np.ndarray, geom) -> np.ndarray:
    """sum_j E_j^T E_j x via explicit loops over all patch positions."""
    out = np.zeros_like(arr)
    px, py, pt = geom.patch
    sx, sy, st = geom.stride
    nx, ny, nt = geom.dims
    for t0 in range(0, nt - pt + 1, st):
        for y0 in range(0, ny - py + 1, sy):
            for x0 in range(0, nx - px + 1, sx):
                out[x0:x0 + px, y0:y0 + py, t0:t0 + pt] += arr[
                    x0:x0 + px, y0:y0 + py, t0:t0 + pt
                ]
    return out
