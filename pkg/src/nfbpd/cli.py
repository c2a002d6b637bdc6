"""Command-line interface.

Subcommands:
  simulate            run an NMSE sweep and write CSV/JSON (+ figure)
  pattern dump        dump drift tables and the coherence heatmap
  export-dictionary   write the polar dictionary as a binary matrix file

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError
from .harness import (ESTIMATOR_NAMES, PRESETS, SWEEP_AXES, ExperimentConfig,
                      apply_preset, emit_per_trial, emit_results, run_sweep)
from .pattern import build_pattern_tables, coherence_heatmap
from .polar import build_dictionary, build_grid, save_dictionary

_CONFIG_FIELD_TYPES = {
    "num_antennas": int, "num_rf": int, "num_subcarriers": int,
    "carrier_freq": float, "bandwidth": float, "num_angles": int,
    "num_rings": int, "oversample": float, "num_paths": int, "num_detect": int,
    "r_min": float, "r_max": float, "snr_db": float, "num_slots": int,
    "trials": int, "seed": int, "combiner": str, "snr_convention": str,
    "per_subcarrier_gains": lambda s: s.lower() in ("1", "true", "yes", "on"),
    "estimators": lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
}


def _load_config_file(path: str) -> dict:
    """Read key = value pairs (any [section] headers allowed) into cfg fields."""
    import configparser

    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    overrides = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key not in _CONFIG_FIELD_TYPES:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            try:
                overrides[key] = _CONFIG_FIELD_TYPES[key](value)
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {key}: {value!r}") from exc
    return overrides


def _add_simulate_parser(sub):
    p = sub.add_parser("simulate", help="run a Monte Carlo NMSE sweep")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="pin the fixed parameters of one reference experiment")
    p.add_argument("--axis", choices=SWEEP_AXES,
                   help="sweep axis (required unless --preset is given)")
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output CSV/JSON path")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--paper-scale", action="store_true",
                   help="run at the full reference scale instead of desk scale")
    p.add_argument("--estimators", help="comma-separated estimator names "
                   f"(default all: {','.join(ESTIMATOR_NAMES)})")
    p.add_argument("--per-trial", action="store_true",
                   help="also dump a per-trial log next to the output")
    p.add_argument("--config", help="key = value config file (flags win)")
    p.add_argument("--no-plot", action="store_true",
                   help="skip rendering the NMSE figure next to the output")
    for flag, key, typ in (
        ("--snr-db", "snr_db", float), ("--bandwidth", "bandwidth", float),
        ("--pilot-slots", "num_slots", int), ("--num-paths", "num_paths", int),
        ("--num-detect", "num_detect", int), ("--r-min", "r_min", float),
        ("--r-max", "r_max", float), ("--combiner", "combiner", str),
    ):
        p.add_argument(flag, dest=f"cfg_{key}", type=typ)
    return p


def _build_experiment(args) -> tuple[ExperimentConfig, str, list]:
    overrides = dict(_load_config_file(args.config)) if args.config else {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.estimators:
        overrides["estimators"] = tuple(
            x.strip() for x in args.estimators.split(",") if x.strip())
    try:
        if args.paper_scale:
            cfg = ExperimentConfig(**overrides)
        else:
            cfg = ExperimentConfig.desk_scale(**overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if args.preset:
        cfg, axis, values = apply_preset(cfg, args.preset, args.paper_scale)
    else:
        if not args.axis:
            raise ConfigError("either --preset or --axis is required")
        axis, values = args.axis, None
    if args.values:
        try:
            values = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --values list: {args.values!r}") from exc
    if values is None:
        raise ConfigError("--values is required when no preset supplies them")
    flag_overrides = {key: getattr(args, f"cfg_{key}")
                      for key in ("snr_db", "bandwidth", "num_slots", "num_paths",
                                  "num_detect", "r_min", "r_max", "combiner")
                      if getattr(args, f"cfg_{key}") is not None}
    if flag_overrides:
        cfg = cfg.updated(**flag_overrides)
    return cfg, axis, list(values)


def _cmd_simulate(args) -> int:
    cfg, axis, values = _build_experiment(args)
    per_trial = [] if args.per_trial else None
    rows = run_sweep(cfg, axis, values, per_trial_log=per_trial)
    emit_results(rows, args.format, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    out = Path(args.out)
    if per_trial is not None:
        trial_path = out.with_name(out.stem + "_trials.csv")
        emit_per_trial(per_trial, trial_path)
        print(f"wrote per-trial log to {trial_path}")
    if not args.no_plot:
        from .plotting import render_sweep_figure

        fig_path = out.with_suffix(".png")
        render_sweep_figure(rows, fig_path)
        print(f"wrote figure to {fig_path}")
    return 0


def _add_pattern_parser(sub):
    p = sub.add_parser("pattern", help="drift-pattern utilities")
    psub = p.add_subparsers(dest="pattern_cmd", required=True)
    d = psub.add_parser("dump", help="dump drift tables and coherence heatmap")
    d.add_argument("--out", required=True,
                   help="heatmap CSV path; tables land next to it")
    d.add_argument("--paper-scale", action="store_true")
    d.add_argument("--gamma-max", type=float, default=4.0)
    d.add_argument("--zeta-max", type=float, default=15.0)
    d.add_argument("--gamma-steps", type=int, default=161)
    d.add_argument("--zeta-steps", type=int, default=121)
    d.add_argument("--no-plot", action="store_true")
    return p


def _write_table_csv(table: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("index", "m", "mapped_index"))
        for idx in range(table.shape[0]):
            for m in range(table.shape[1]):
                writer.writerow((idx, m, int(table[idx, m])))


def _cmd_pattern_dump(args) -> int:
    cfg = (ExperimentConfig() if args.paper_scale else ExperimentConfig.desk_scale())
    system = cfg.system()
    grid = build_grid(system, cfg.num_angles, cfg.num_rings, cfg.oversample)
    tables = build_pattern_tables(system, grid)
    out = Path(args.out)
    gammas = np.linspace(-args.gamma_max, args.gamma_max, args.gamma_steps)
    zetas = np.linspace(-args.zeta_max, args.zeta_max, args.zeta_steps)
    values = coherence_heatmap(gammas, zetas)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("gamma", "zeta", "value"))
        for zi, zeta in enumerate(zetas):
            for gi, gamma in enumerate(gammas):
                writer.writerow((repr(float(gamma)), repr(float(zeta)),
                                 repr(float(values[zi, gi]))))
    angle_path = out.with_name(out.stem + "_gamma.csv")
    dist_path = out.with_name(out.stem + "_lambda.csv")
    _write_table_csv(tables.angle, angle_path)
    _write_table_csv(tables.distance, dist_path)
    print(f"wrote heatmap to {out}, tables to {angle_path} and {dist_path}")
    if not args.no_plot:
        from .plotting import render_coherence_heatmap

        fig_path = out.with_suffix(".png")
        render_coherence_heatmap(gammas, zetas, values, fig_path)
        print(f"wrote figure to {fig_path}")
    return 0


def _add_export_parser(sub):
    p = sub.add_parser("export-dictionary",
                       help="write the polar dictionary as a PDIC binary file")
    p.add_argument("--out", required=True)
    p.add_argument("--paper-scale", action="store_true")
    return p


def _cmd_export_dictionary(args) -> int:
    cfg = (ExperimentConfig() if args.paper_scale else ExperimentConfig.desk_scale())
    system = cfg.system()
    grid = build_grid(system, cfg.num_angles, cfg.num_rings, cfg.oversample)
    pdict = build_dictionary(system, grid)
    save_dictionary(pdict, args.out)
    print(f"wrote {pdict.matrix.shape[0]}x{pdict.matrix.shape[1]} dictionary "
          f"to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nfbpd",
        description="Near-field wideband channel estimation simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate_parser(sub)
    _add_pattern_parser(sub)
    _add_export_parser(sub)
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "pattern":
            return _cmd_pattern_dump(args)
        if args.command == "export-dictionary":
            return _cmd_export_dictionary(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
