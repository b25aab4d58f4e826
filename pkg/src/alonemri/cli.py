"""Command-line interface.

Verbs: simulate, reconstruct, evaluate, export-frames, sweep.  Every
command is driven by a YAML config (see config.DEFAULT_CONFIG for the key
reference); --method, --out and --seed override the corresponding config
entries.  Exit codes: 2 config/usage error, 3 I/O or file-format error,
4 numerical failure.

--threads N pins the BLAS thread pools (the package's own code is single
threaded); when the interpreter has already initialized numpy, the process
re-executes itself once with the environment set so the pin is effective.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

_THREAD_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)
_REEXEC_FLAG = "_ALONEMRI_REEXEC"


def _ensure_thread_env(threads: int | None) -> None:
    if threads is None:
        return
    want = str(threads)
    if all(os.environ.get(var) == want for var in _THREAD_VARS):
        return
    for var in _THREAD_VARS:
        os.environ[var] = want
    if os.environ.get(_REEXEC_FLAG) == "1":
        return
    os.environ[_REEXEC_FLAG] = "1"
    os.execv(sys.executable, [sys.executable, "-m", "alonemri"] + sys.argv[1:])


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alonemri",
        description="Adaptive patch-regularized reconstruction for undersampled "
                    "dynamic Fourier imaging.",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="pin BLAS thread pools (1 = deterministic test mode)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed (overrides config)")

    p_sim = sub.add_parser("simulate", help="write phantom, trajectory and k-space data")
    common(p_sim)

    p_rec = sub.add_parser("reconstruct", help="run a reconstruction method")
    common(p_rec)
    p_rec.add_argument("--method", choices=("adjoint", "tv", "dic", "alone"), default=None)
    p_rec.add_argument("--kspace", default=None,
                       help="k-space file (default: <out>/kspace.ksp)")
    p_rec.add_argument("--reference", default=None,
                       help="reference volume for per-iteration trace metrics")

    p_eval = sub.add_parser("evaluate", help="compare a reconstruction to a reference")
    common(p_eval)
    p_eval.add_argument("--recon", required=True)
    p_eval.add_argument("--reference", required=True)
    p_eval.add_argument("--crop", type=float, default=None,
                        help="center crop fraction (overrides config)")

    p_exp = sub.add_parser("export-frames", help="write magnitude frames as PGM images")
    common(p_exp)
    p_exp.add_argument("--volume", required=True)
    p_exp.add_argument("--png", action="store_true", help="additionally write PNG files")

    p_sweep = sub.add_parser("sweep", help="run one method over a grid of lambda values")
    common(p_sweep)
    p_sweep.add_argument("--method", choices=("tv", "dic", "alone"), default=None)
    p_sweep.add_argument("--kspace", default=None)
    p_sweep.add_argument("--reference", required=True)
    p_sweep.add_argument("--lams", required=True,
                         help="comma-separated lambda values, e.g. 0.1,0.3,1.0")
    return parser


def _load_config(args) -> dict:
    from .config import load_config

    overrides: dict = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "method", None) is not None:
        overrides["method"] = args.method
    return load_config(args.config, overrides)


def cmd_simulate(args) -> int:
    from .config import (build_operator, build_phantom_spec, output_dir,
                         resolve_config, resolve_noise_std, save_config)
    from .operators import export_trajectory_csv
    from .phantom import make_phantom, retrospective_sample
    from .volume import save_kspace, save_volume

    cfg = resolve_config(_load_config(args))
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)

    spec = build_phantom_spec(cfg)
    gt = make_phantom(spec)
    op = build_operator(cfg)
    clean = op.forward(gt)
    std = resolve_noise_std(cfg, clean)
    y = retrospective_sample(gt, op, std, seed=cfg["seed"] + 104729)
    cfg["noise"]["std"] = float(std)

    save_volume(out / "ground_truth.vol", gt)
    save_kspace(out / "kspace.ksp", y)
    export_trajectory_csv(out / "trajectory.csv", op.trajectory)
    save_config(out / "config.resolved.yaml", cfg)
    print(f"simulate: wrote {out}/ground_truth.vol, kspace.ksp ({y.m} samples), "
          f"trajectory.csv")
    return 0


def cmd_reconstruct(args) -> int:
    import time

    from .config import (build_alone_config, build_dic_config, build_operator,
                         build_tv_config, output_dir, resolve_config, save_config)
    from .solvers import IterationRecord, IterationTrace, save_trace_csv
    from .volume import load_kspace, load_volume, save_volume

    cfg = resolve_config(_load_config(args))
    if args.reference is not None:
        cfg["reference"] = args.reference
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    method = cfg["method"]

    kspace_path = args.kspace or (out / "kspace.ksp")
    y = load_kspace(kspace_path)
    op = build_operator(cfg)
    expected = op.empty_data()
    if not y.same_layout(expected):
        raise _config_mismatch(y, expected)
    reference = load_volume(cfg["reference"]) if cfg["reference"] else None

    t0 = time.perf_counter()
    import numpy as np

    if method == "adjoint":
        x = op.adjoint(y)
        trace = IterationTrace([IterationRecord(
            iteration=1,
            fidelity=float(np.linalg.norm(op.forward(x).samples - y.samples)),
        )])
    elif method == "tv":
        from .baselines import tv_admm_reconstruct

        x, trace = tv_admm_reconstruct(
            y, op, build_tv_config(cfg), reference=reference,
            crop_fraction=float(cfg["crop_fraction"]),
        )
    elif method == "dic":
        from .baselines import dic_reconstruct, save_dictionary

        x, trace, dico = dic_reconstruct(
            y, op, build_dic_config(cfg), reference=reference,
            crop_fraction=float(cfg["crop_fraction"]),
        )
        save_dictionary(out / "dictionary_dic.dct", dico)
    else:
        from .shallownet import save_network
        from .solvers import alone_reconstruct

        result = alone_reconstruct(
            y, op, build_alone_config(cfg), reference=reference,
            crop_fraction=float(cfg["crop_fraction"]),
        )
        x, trace = result.x, result.trace
        save_network(out / "network_alone.net", result.network)
    elapsed = time.perf_counter() - t0

    save_volume(out / f"recon_{method}.vol", x)
    save_trace_csv(out / f"trace_{method}.csv", trace)
    save_config(out / "config.resolved.yaml", cfg)
    print(f"reconstruct[{method}]: {len(trace)} iteration(s) in {elapsed:.1f} s "
          f"-> {out}/recon_{method}.vol")
    return 0


def _config_mismatch(y, expected):
    from .errors import DimensionError

    return DimensionError(
        f"k-space layout (coils={y.n_coils}, frames={y.n_frames}) does not match "
        f"the configured operator (coils={expected.n_coils}, frames={expected.n_frames}); "
        f"check trajectory settings"
    )


def cmd_evaluate(args) -> int:
    from .config import output_dir, resolve_config, save_config
    from .metrics import evaluate, save_metrics_csv
    from .volume import load_volume

    cfg = resolve_config(_load_config(args))
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    crop = float(args.crop) if args.crop is not None else float(cfg["crop_fraction"])
    recon = load_volume(args.recon)
    reference = load_volume(args.reference)
    record = evaluate(recon, reference, crop)
    save_metrics_csv(out / "metrics.csv", record)
    save_config(out / "config.resolved.yaml", cfg)
    print(f"evaluate: psnr={record.psnr:.4f} dB ssim={record.ssim:.4f} "
          f"nrmse={record.nrmse:.4f} (crop {crop:g}) -> {out}/metrics.csv")
    return 0


def cmd_export_frames(args) -> int:
    from .config import output_dir, resolve_config
    from .export import export_frames
    from .volume import load_volume

    cfg = resolve_config(_load_config(args))
    out = output_dir(cfg)
    volume = load_volume(args.volume)
    written = export_frames(out, volume, png=args.png)
    print(f"export-frames: wrote {len(written)} file(s) to {out}")
    return 0


def cmd_sweep(args) -> int:
    from .config import output_dir, resolve_config, save_config
    from .metrics import evaluate
    from .volume import load_kspace, load_volume, save_volume

    cfg = resolve_config(_load_config(args))
    method = cfg["method"] if cfg["method"] != "adjoint" else "alone"
    if args.method is not None:
        method = args.method
    try:
        lams = [float(v) for v in args.lams.split(",") if v.strip()]
    except ValueError as exc:
        from .errors import ConfigError

        raise ConfigError(f"bad --lams value: {args.lams!r}") from exc
    if not lams:
        from .errors import ConfigError

        raise ConfigError("--lams must contain at least one value")

    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    kspace_path = args.kspace or (out / "kspace.ksp")
    y = load_kspace(kspace_path)
    reference = load_volume(args.reference)

    from .config import build_alone_config, build_dic_config, build_operator, build_tv_config

    op = build_operator(cfg)
    rows = []
    for lam in lams:
        sub_cfg = {**cfg, "method": method}
        sub_cfg = resolve_config(sub_cfg)
        sub_cfg[method] = {**sub_cfg[method], "lam": lam}
        if method == "tv":
            from .baselines import tv_admm_reconstruct

            x, _ = tv_admm_reconstruct(y, op, build_tv_config(sub_cfg))
        elif method == "dic":
            from .baselines import dic_reconstruct

            x, _, _ = dic_reconstruct(y, op, build_dic_config(sub_cfg))
        else:
            from .solvers import alone_reconstruct

            x = alone_reconstruct(y, op, build_alone_config(sub_cfg)).x
        rec = evaluate(x, reference, float(cfg["crop_fraction"]))
        save_volume(out / f"recon_{method}_lam{lam:g}.vol", x)
        rows.append((lam, rec.psnr, rec.ssim, rec.nrmse))
        print(f"sweep[{method}] lam={lam:g}: psnr={rec.psnr:.3f} ssim={rec.ssim:.4f} "
              f"nrmse={rec.nrmse:.4f}")

    with open(out / "sweep.csv", "w") as fh:
        fh.write("lam,psnr,ssim,nrmse\n")
        for lam, p, s, n in rows:
            fh.write(f"{lam:.9g},{p:.6f},{s:.6f},{n:.6f}\n")
    save_config(out / "config.resolved.yaml", cfg)
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "export-frames": cmd_export_frames,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _ensure_thread_env(args.threads)

    from .errors import (ConfigError, DimensionError, DivergenceError, FormatError,
                         GeometryError, PreconditionError)

    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, PreconditionError, GeometryError, DimensionError) as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO
    except (DivergenceError, ArithmeticError) as exc:
        print(f"error (numerical): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
