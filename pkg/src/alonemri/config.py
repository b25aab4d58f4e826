"""Run configuration: a strict, flat-file YAML schema shared by all CLI
commands.

Unknown keys are rejected everywhere.  Every command writes the fully
resolved configuration (defaults filled in, derived quantities such as the
spoke count or the noise std pinned to their concrete values) next to its
outputs, so a run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .errors import ConfigError

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "out_dir": "runs/out",
    "method": "alone",
    "crop_fraction": 0.5,
    "reference": None,
    "phantom": {
        "nx": 64,
        "ny": 64,
        "nt": 16,
        "n_background_ellipses": 4,
        "disk_center": [0.22, -0.18],
        "disk_base_radius": 0.16,
        "disk_radius_amplitude": 0.06,
        "n_bars": 3,
        "phase_strength": 1.2,
        "texture_strength": 0.12,
        "fine_texture_strength": 0.1,
    },
    "trajectory": {
        "n_coils": 4,
        "samples_per_spoke": 128,
        "spokes_per_frame": None,
        "acceleration": 9.0,
    },
    "noise": {
        "std": None,
        "snr_db": 30.0,
    },
    "alone": {
        "lam": 0.5,
        "iters": 25,
        "eps": 0.0,
        "pcg_iters": 4,
        "filters": 16,
        "mode": "complex",
        "warm_start": True,
        "patch": [16, 16, 4],
        "stride": [8, 8, 2],
        "n_backprops": 400,
        "learning_rate": 1.0e-3,
        "batch_size": 64,
        "penalty_weight": 1.0e-4,
    },
    "tv": {
        "lam": 0.02,
        "rho": 1.0,
        "outer_iters": 16,
        "shrink_iters": 1,
        "pcg_iters": 4,
    },
    "dic": {
        "lam": 0.5,
        "outer_iters": 16,
        "sparsity": 16,
        "n_atoms": 64,
        "itkrm_iters": 10,
        "pcg_iters": 4,
        "patch": [4, 4, 4],
        "stride": [2, 2, 2],
    },
}

METHODS = ("adjoint", "tv", "dic", "alone")


def _merge_strict(defaults: dict, overrides: dict, path: str = "") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(defaults[key], dict):
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"config section {path + '.' + key if path else key} "
                                  f"must be a mapping")
            merged[key] = _merge_strict(defaults[key], value, f"{path}.{key}" if path else key)
        else:
            merged[key] = value
    return merged


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Load a YAML config, fill defaults, reject unknown keys, then apply
    programmatic overrides (same schema)."""
    raw: dict = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must contain a mapping")
        raw = loaded
    cfg = _merge_strict(DEFAULT_CONFIG, raw)
    if overrides:
        cfg = _merge_strict(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg['method']!r}")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    if not (0.0 < float(cfg["crop_fraction"]) <= 1.0):
        raise ConfigError("crop_fraction must lie in (0, 1]")
    ph = cfg["phantom"]
    for key in ("nx", "ny", "nt"):
        if not isinstance(ph[key], int) or ph[key] < 4:
            raise ConfigError(f"phantom.{key} must be an integer >= 4")
    tr = cfg["trajectory"]
    if tr["spokes_per_frame"] is None and tr["acceleration"] is None:
        raise ConfigError("set trajectory.spokes_per_frame or trajectory.acceleration")
    for section in ("alone", "dic"):
        for key in ("patch", "stride"):
            val = cfg[section][key]
            if not (isinstance(val, (list, tuple)) and len(val) == 3):
                raise ConfigError(f"{section}.{key} must be a 3-element list")


def save_config(path, cfg: dict) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def resolve_config(cfg: dict) -> dict:
    """Pin derived quantities so the saved config reproduces the run."""
    from .operators import spokes_for_acceleration

    cfg = copy.deepcopy(cfg)
    tr = cfg["trajectory"]
    if tr["spokes_per_frame"] is None:
        tr["spokes_per_frame"] = spokes_for_acceleration(
            cfg["phantom"]["nx"], float(tr["acceleration"])
        )
    return cfg


# ---------------------------------------------------------------------------
# typed builders


def build_phantom_spec(cfg: dict):
    from .phantom import PhantomSpec

    ph = cfg["phantom"]
    return PhantomSpec(
        dims=(ph["nx"], ph["ny"], ph["nt"]),
        n_background_ellipses=ph["n_background_ellipses"],
        disk_center=tuple(ph["disk_center"]),
        disk_base_radius=ph["disk_base_radius"],
        disk_radius_amplitude=ph["disk_radius_amplitude"],
        n_bars=ph["n_bars"],
        phase_strength=ph["phase_strength"],
        texture_strength=ph["texture_strength"],
        fine_texture_strength=ph["fine_texture_strength"],
        seed=cfg["seed"],
    )


_COIL_SEED_OFFSET = 7919  # decorrelate coil-map randomness from the phantom


def build_operator(cfg: dict):
    """Radial multi-coil operator implied by the config (deterministic for
    a fixed seed)."""
    from .operators import (
        RadialNDFTOp,
        build_golden_angle_trajectory,
        make_gaussian_coil_maps,
    )

    cfg = resolve_config(cfg)
    ph, tr = cfg["phantom"], cfg["trajectory"]
    dims = (ph["nx"], ph["ny"], ph["nt"])
    traj = build_golden_angle_trajectory(
        int(tr["spokes_per_frame"]), int(tr["samples_per_spoke"]), ph["nt"]
    )
    maps = None
    if int(tr["n_coils"]) > 1:
        maps = make_gaussian_coil_maps(
            ph["nx"], ph["ny"], int(tr["n_coils"]), seed=cfg["seed"] + _COIL_SEED_OFFSET
        )
    return RadialNDFTOp(dims, traj, maps)


def build_alone_config(cfg: dict):
    from .patches import PatchGeometry
    from .shallownet import TrainConfig
    from .solvers import AloneConfig

    ph, al = cfg["phantom"], cfg["alone"]
    geometry = PatchGeometry(tuple(al["patch"]), tuple(al["stride"]),
                             (ph["nx"], ph["ny"], ph["nt"]))
    train_config = TrainConfig(
        n_backprops=int(al["n_backprops"]),
        learning_rate=float(al["learning_rate"]),
        penalty_weight=float(al["penalty_weight"]),
        batch_size=int(al["batch_size"]),
        seed=cfg["seed"],
    )
    return AloneConfig(
        lam=float(al["lam"]),
        max_iters=int(al["iters"]),
        eps=float(al["eps"]),
        pcg_iters=int(al["pcg_iters"]),
        n_filters=int(al["filters"]),
        mode=str(al["mode"]),
        warm_start=bool(al["warm_start"]),
        geometry=geometry,
        train_config=train_config,
        seed=cfg["seed"],
    )


def build_tv_config(cfg: dict):
    from .baselines import TvConfig

    tv = cfg["tv"]
    return TvConfig(
        lam=float(tv["lam"]),
        rho=float(tv["rho"]),
        outer_iters=int(tv["outer_iters"]),
        shrink_iters=int(tv["shrink_iters"]),
        pcg_iters=int(tv["pcg_iters"]),
    )


def build_dic_config(cfg: dict):
    from .baselines import DicConfig
    from .patches import PatchGeometry

    ph, dc = cfg["phantom"], cfg["dic"]
    geometry = PatchGeometry(tuple(dc["patch"]), tuple(dc["stride"]),
                             (ph["nx"], ph["ny"], ph["nt"]))
    return DicConfig(
        lam=float(dc["lam"]),
        outer_iters=int(dc["outer_iters"]),
        sparsity=int(dc["sparsity"]),
        n_atoms=int(dc["n_atoms"]),
        itkrm_iters=int(dc["itkrm_iters"]),
        pcg_iters=int(dc["pcg_iters"]),
        geometry=geometry,
        seed=cfg["seed"],
    )


def resolve_noise_std(cfg: dict, y) -> float:
    from .phantom import noise_std_for_snr

    noise = cfg["noise"]
    if noise["std"] is not None:
        return float(noise["std"])
    if noise["snr_db"] is None:
        return 0.0
    return noise_std_for_snr(y, float(noise["snr_db"]))


def output_dir(cfg: dict) -> Path:
    return Path(cfg["out_dir"])
