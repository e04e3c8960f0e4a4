"""Command-line front end.

Subcommands: simulate, estimate, spectrum, sysid, reconstruct, and
experiment {ou, lv, ablation}. Every command reads a YAML config (the
experiment commands fall back to built-in benchmark defaults) and honors
--seed, --out-dir, --method, --freq, and --trials overrides. Exit codes:
0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, baselines, resolvent, spectral, sysid
from .config import (
    default_out_dir,
    experiment_config_from_dict,
    load_config_file,
    pipeline_settings,
)
from .dictionary import monomials_up_to_degree
from .errors import ConfigError, KoopgenError, NumericalError
from .experiments import (
    METHODS,
    emit_ou_sysid_artifacts,
    run_filtered_resolvent_ablation,
    run_lv_experiment,
    run_ou_experiment,
    run_sweep,
)
from .generator import load_generator, save_generator
from .sde import SimConfig, ensemble_to_csv, save_ensemble, simulate_paths
from .spectral import spectrum_mae


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="koopgen", description=__doc__)
    parser.add_argument("--version", action="version", version=f"koopgen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required):
        p.add_argument(
            "--config", type=Path, required=config_required, help="YAML config file"
        )
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out-dir", type=Path, help="output directory")

    p = sub.add_parser("simulate", help="simulate a stopped trajectory ensemble")
    common(p, True)

    p = sub.add_parser("estimate", help="fit a generator matrix from simulated data")
    common(p, True)
    p.add_argument("--method", choices=METHODS, help="estimator to use")

    p = sub.add_parser("spectrum", help="eigenvalues + MAE report for a saved generator")
    common(p, True)
    p.add_argument("--generator", type=Path, required=True, help="generator matrix file")

    p = sub.add_parser("sysid", help="identify drift/diffusion coefficients")
    common(p, True)

    p = sub.add_parser("reconstruct", help="reconstruct paths under identical noise")
    common(p, True)
    p.add_argument("--identified", type=Path, help="identified_model.txt to reuse")

    p = sub.add_parser("experiment", help="run a benchmark experiment")
    p.add_argument("kind", choices=("ou", "lv", "ablation"))
    common(p, False)
    p.add_argument("--trials", type=int, help="trials per frequency")
    p.add_argument("--freq", type=float, help="restrict the sweep to one frequency")
    p.add_argument("--method", choices=METHODS, action="append", dest="methods")
    return parser


def _experiment_config(args, base: str):
    data = load_config_file(args.config) if args.config else {}
    config = experiment_config_from_dict(data, base=base, out_dir=args.out_dir)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "trials", None) is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        config = replace(config, trials=args.trials)
    if getattr(args, "freq", None) is not None:
        if args.freq not in config.frequencies:
            config = replace(config, frequencies=(args.freq,))
        else:
            config = replace(config, frequencies=(args.freq,))
    if getattr(args, "methods", None):
        config = replace(config, methods=tuple(args.methods))
    return config


def _single_run_pieces(args):
    """Config + ensemble for the single-shot commands."""
    data = load_config_file(args.config)
    base = "lv" if data.get("model", {}).get("kind") in ("lotka_volterra", "lv") else "ou"
    config = experiment_config_from_dict(data, base=base, out_dir=args.out_dir)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    settings = pipeline_settings(data)
    sim = SimConfig(
        horizon=config.horizon,
        observe_rate=settings["observe_rate"],
        substeps_per_observation=config.substeps_per_observation,
        seed=config.seed,
    )
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(0, 0, 1)))
    lo = np.array([b[0] for b in config.initial_bounds])
    hi = np.array([b[1] for b in config.initial_bounds])
    initials = rng.uniform(lo, hi, size=(config.n_initial, lo.size))
    return config, settings, sim, initials


def _cmd_simulate(args) -> int:
    config, settings, sim, initials = _single_run_pieces(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ensemble = simulate_paths(
        config.model, config.domain, initials, config.paths_per_initial, sim
    )
    ensemble_to_csv(ensemble, out / "ensemble.csv")
    save_ensemble(ensemble, out / "ensemble.npz")
    print(f"wrote {out / 'ensemble.csv'} and {out / 'ensemble.npz'}")
    print(f"exit fraction: {ensemble.exit_fraction:.4f}")
    return 0


def _fit_named_method(method, ensemble, config):
    from .experiments import fit_method

    return fit_method(method, ensemble, config.dictionary, config)


def _cmd_estimate(args) -> int:
    config, settings, sim, initials = _single_run_pieces(args)
    method = args.method or settings["method"]
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ensemble = simulate_paths(
        config.model, config.domain, initials, config.paths_per_initial, sim
    )
    matrix = _fit_named_method(method, ensemble, config)
    path = out / f"generator_{method}.txt"
    save_generator(matrix, path)
    print(f"wrote {path}")
    return 0


def _cmd_spectrum(args) -> int:
    data = load_config_file(args.config)
    base = "lv" if data.get("model", {}).get("kind") in ("lotka_volterra", "lv") else "ou"
    config = experiment_config_from_dict(data, base=base, out_dir=args.out_dir)
    if not args.generator.exists():
        raise ConfigError(f"generator file not found: {args.generator}")
    matrix = load_generator(args.generator)
    true_eigs = np.array(config.model.analytic_spectrum)
    n_match = min(config.n_match, matrix.size)
    result = spectrum_mae(matrix, true_eigs, n_match=n_match)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    settings = pipeline_settings(data)
    path = out / f"spectrum_{matrix.provenance}.csv"
    spectral.spectrum_to_csv(
        path,
        result,
        true_eigs,
        metadata={
            "method": matrix.provenance,
            "params": matrix.params or {},
            "frequency_hz": f"{settings['observe_rate']:g}",
            "mae": format(result.mae, ".17g"),
        },
    )
    mae_path = out / "mae.txt"
    with open(mae_path, "w") as fh:
        fh.write(f"{result.mae:.17g}\n")
    print(f"wrote {path} and {mae_path}")
    print(f"MAE: {result.mae:.6g}")
    return 0


def _cmd_sysid(args) -> int:
    config, settings, sim, initials = _single_run_pieces(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ensemble = simulate_paths(
        config.model, config.domain, initials, config.paths_per_initial, sim
    )
    sysid_dict = monomials_up_to_degree(
        config.model.dim, config.sysid_max_degree, include_constant=True
    )
    rt = resolvent.RtConfig(lam=config.lam, horizon=config.horizon)
    matrix = resolvent.rt_generator(ensemble, sysid_dict, rt)
    identified = sysid.identify(matrix)
    save_generator(matrix, out / "generator_rt.txt")
    sysid.save_identified_model(identified, out / "identified_model.txt")
    print(f"wrote {out / 'identified_model.txt'}")
    return 0


def _cmd_reconstruct(args) -> int:
    config, settings, sim, initials = _single_run_pieces(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.identified:
        if not args.identified.exists():
            raise ConfigError(f"identified model not found: {args.identified}")
        identified = sysid.load_identified_model(args.identified)
    else:
        ensemble = simulate_paths(
            config.model, config.domain, initials, config.paths_per_initial, sim
        )
        sysid_dict = monomials_up_to_degree(
            config.model.dim, config.sysid_max_degree, include_constant=True
        )
        rt = resolvent.RtConfig(lam=config.lam, horizon=config.horizon)
        identified = sysid.identify(resolvent.rt_generator(ensemble, sysid_dict, rt))
    recon_sim = SimConfig(
        horizon=config.reconstruct_horizon,
        observe_rate=sim.observe_rate,
        substeps_per_observation=sim.substeps_per_observation,
        seed=config.seed + 1,
    )
    pts = np.array(config.reconstruct_initials, dtype=float)
    truth = simulate_paths(config.model, config.domain, pts, 1, recon_sim)
    recon = sysid.reconstruct_paths(
        identified, config.domain, pts, recon_sim, noise_seed=recon_sim.seed
    )
    for i in range(pts.shape[0]):
        sysid.reconstruction_error_csv(
            out / f"reconstruction_{i}.csv",
            recon_sim.times,
            truth.paths[i, 0],
            recon.paths[i, 0],
        )
    print(f"wrote {pts.shape[0]} reconstruction CSVs to {out}")
    return 0


def _cmd_experiment(args) -> int:
    if args.kind == "ou":
        config = _experiment_config(args, "ou")
        report = run_ou_experiment(config)
    elif args.kind == "lv":
        config = _experiment_config(args, "lv")
        report = run_lv_experiment(config)
    else:
        config = _experiment_config(args, "ou")
        if args.config is None:
            from .experiments import ablation_config

            config = ablation_config(
                seed=config.seed, out_dir=config.out_dir, trials=config.trials
            )
        report = run_filtered_resolvent_ablation(config)
        print(
            "ablation: exit fraction "
            f"{report.exit_fraction:.3f}; stopped errors {report.stopped_errors}; "
            f"filtered errors {report.filtered_errors}"
        )
        return 0
    for method in config.methods:
        for freq in config.frequencies:
            vals = report.maes(method, freq)
            if vals.size:
                print(
                    f"{method} @ {freq:g} Hz: median MAE {np.median(vals):.6g} "
                    f"({vals.size} trial(s))"
                )
    failures = report.failures()
    if failures:
        print(f"{len(failures)} trial(s) failed and were quarantined:")
        for r in failures[:10]:
            print(f"  {r.method} @ {r.frequency:g} Hz trial {r.trial}: {r.error}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "estimate": _cmd_estimate,
        "spectrum": _cmd_spectrum,
        "sysid": _cmd_sysid,
        "reconstruct": _cmd_reconstruct,
        "experiment": _cmd_experiment,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except KoopgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
