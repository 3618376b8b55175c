"""Command-line front end.

Subcommands: spectra | design | estimate | locate | sweep | heatmap.
Every command reads TOML inputs, writes CSV (or raw tensor) artifacts
into --out, and drops a manifest.json capturing the resolved
configuration and seed, so any output directory is reproducible from its
contents. Exit codes: 0 success, 2 configuration problems, 3 numerical
degeneracy surfaced by a single-shot design.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .channel import build_codebooks, channel_tensor, save_tensor, synthesize_received, ula_steering
from .configio import (
    ConfigError,
    RunManifest,
    build_spoof_target,
    build_trial_config,
    load_experiment,
    load_scenario,
)
from .estimate import RESULT_CSV_HEADER, delay_periodogram, flex_estimate, mf_spectrum
from .geometry import DegenerateGeometryError, forward_params, path_gains
from .harness import (
    METHODS,
    dais_baseline,
    design_method_pilot,
    measurement_deviation_sweep,
    power_sweep,
    uncertainty_sweep,
    write_summary_csv,
    write_trials_csv,
)
from .locate_comm import (
    HEATMAP_CSV_HEADER,
    POSITION_CSV_HEADER,
    estimate_position,
    rate_heatmap,
)
from .spoof_oracle import SpoofDesignError

__all__ = ["main", "SPECTRUM_CSV_HEADER", "DESIGN_CSV_HEADER"]

SPECTRUM_CSV_HEADER = ("series", "grid", "power")
DESIGN_CSV_HEADER = ("field", "value")

DESIGN_METHODS = ("oracle", "blind", "blind_angles")

# Same scan resolution the estimator's grid fallback uses.
ANGLE_GRID_STEP_RAD = 1e-3


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _frame(scenario, target, method, cfg, seed):
    """One synthesized frame under the harness's stream discipline."""
    ss = np.random.SeedSequence([seed, 0])
    rng_gain, rng_noise, _ = (np.random.default_rng(s) for s in ss.spawn(3))
    books = build_codebooks(cfg.system)
    gains = path_gains(scenario, cfg.gain_model, rng_gain)
    params = forward_params(scenario).with_gains(gains)
    pilot = design_method_pilot(method, params, gains, target, books, cfg)
    y = synthesize_received(channel_tensor(params, books, cfg.system), pilot, cfg.system, rng_noise)
    return books, params, pilot, y


def _angle_grid() -> np.ndarray:
    return np.arange(-np.pi / 2 + 5e-4, np.pi / 2, ANGLE_GRID_STEP_RAD)


def _spectra_for(y, books, cfg):
    ent = np.asarray(y.entries)
    m, s, _ = ent.shape
    grid = _angle_grid()
    aoa = mf_spectrum(
        ent.reshape(m, -1),
        lambda a: books.combiners.conj().T @ ula_steering(cfg.system.n_rx, a),
        grid,
    )
    aod = mf_spectrum(
        ent.transpose(1, 0, 2).reshape(s, -1),
        lambda a: books.precoders.conj().T @ ula_steering(cfg.system.n_tx, a),
        grid,
    )
    delay = delay_periodogram(ent, cfg.system)
    return {"aoa_spectrum": aoa, "aod_spectrum": aod, "delay_spectrum": delay}


def _scenario_snapshot(args, spec, cfg) -> dict:
    return {
        "scenario_file": str(args.scenario),
        "full_scale": bool(args.full),
        "n_subcarriers": cfg.system.n_subcarriers,
        "tx_power_dbm": spec.tx_power_dbm,
    }


def cmd_spectra(args) -> None:
    spec = load_scenario(args.scenario)
    cfg = build_trial_config(spec, args.full)
    target = None
    if args.method not in ("no_spoof", "dais"):
        target = build_spoof_target(spec)

    books, _, _, y0 = _frame(spec.geometry, target, "no_spoof", cfg, args.seed)
    series = {"no_spoof": _spectra_for(y0, books, cfg)}
    if args.method != "no_spoof":
        _, _, _, y1 = _frame(spec.geometry, target, args.method, cfg, args.seed)
        series[args.method] = _spectra_for(y1, books, cfg)

    for kind in ("aoa_spectrum", "aod_spectrum", "delay_spectrum"):
        rows = []
        for name, table in series.items():
            sp = table[kind]
            rows.extend((name, float(g), float(p)) for g, p in zip(sp.grid, sp.power))
        _write_csv(os.path.join(args.out, f"{kind}.csv"), SPECTRUM_CSV_HEADER, rows)
    RunManifest(
        "spectra", args.seed, str(args.out),
        {**_scenario_snapshot(args, spec, cfg), "method": args.method},
    ).write(os.path.join(args.out, "manifest.json"))


def cmd_design(args) -> None:
    spec = load_scenario(args.scenario)
    cfg = build_trial_config(spec, args.full)
    target = build_spoof_target(spec)
    _, params, pilot, _ = _frame(spec.geometry, target, args.method, cfg, args.seed)

    save_tensor(os.path.join(args.out, "pilot.tns"), pilot.entries)
    rows = [
        ("method", args.method),
        ("n_combiners", cfg.system.n_combiners),
        ("n_precoders", cfg.system.n_precoders),
        ("n_subcarriers", cfg.system.n_subcarriers),
        ("pilot_energy", float(np.vdot(pilot.entries, pilot.entries).real)),
        ("true_paths", params.n_paths),
        ("target_paths", target.target_params.n_paths),
    ]
    _write_csv(os.path.join(args.out, "design.csv"), DESIGN_CSV_HEADER, rows)
    RunManifest(
        "design", args.seed, str(args.out),
        {**_scenario_snapshot(args, spec, cfg), "method": args.method},
    ).write(os.path.join(args.out, "manifest.json"))


def _estimate_once(args):
    spec = load_scenario(args.scenario)
    cfg = build_trial_config(spec, args.full)
    target = None
    if args.method not in ("no_spoof", "dais"):
        target = build_spoof_target(spec)
    books, _, _, y = _frame(spec.geometry, target, args.method, cfg, args.seed)
    est = flex_estimate(y, books, cfg.system, cfar=cfg.cfar, max_paths=cfg.max_paths)
    if args.method == "dais":
        est = dais_baseline(est, cfg.dais_delay_shift_s, cfg.dais_angle_shift_rad)
    return spec, cfg, est


def cmd_estimate(args) -> None:
    spec, cfg, est = _estimate_once(args)
    _write_csv(os.path.join(args.out, "estimates.csv"), RESULT_CSV_HEADER, est.csv_rows(0))
    RunManifest(
        "estimate", args.seed, str(args.out),
        {**_scenario_snapshot(args, spec, cfg), "method": args.method},
    ).write(os.path.join(args.out, "manifest.json"))


def cmd_locate(args) -> None:
    spec, cfg, est = _estimate_once(args)
    pos = estimate_position(est, spec.geometry.bs, max_range_m=cfg.max_range_m)
    _write_csv(os.path.join(args.out, "estimates.csv"), RESULT_CSV_HEADER, est.csv_rows(0))
    _write_csv(os.path.join(args.out, "position.csv"), POSITION_CSV_HEADER, [pos.csv_row(0)])
    RunManifest(
        "locate", args.seed, str(args.out),
        {**_scenario_snapshot(args, spec, cfg), "method": args.method},
    ).write(os.path.join(args.out, "manifest.json"))


def cmd_sweep(args) -> None:
    spec = load_scenario(args.scenario)
    exp = load_experiment(args.experiment)
    cfg = build_trial_config(spec, args.full)
    target = build_spoof_target(spec)
    n_trials = exp.trial_count(args.full)

    if exp.kind == "power":
        report = power_sweep(
            spec.geometry, target, exp.methods, exp.p_t_dbm, n_trials, cfg,
            master_seed=args.seed, max_workers=args.threads,
        )
    elif exp.kind == "deviation":
        report = measurement_deviation_sweep(
            spec.geometry, target, exp.methods, exp.p_t_dbm, n_trials, cfg,
            master_seed=args.seed, max_workers=args.threads,
        )
    else:
        report = uncertainty_sweep(
            spec.geometry, target, exp.sigma_ue_m, n_trials, cfg,
            sigma_sp_m=exp.sigma_sp_m, methods=exp.methods,
            master_seed=args.seed, max_workers=args.threads,
        )

    write_trials_csv(os.path.join(args.out, "trials.csv"), report)
    write_summary_csv(os.path.join(args.out, "summary.csv"), report)
    RunManifest(
        "sweep", args.seed, str(args.out),
        {
            **_scenario_snapshot(args, spec, cfg),
            "experiment_file": str(args.experiment),
            "kind": exp.kind,
            "methods": list(exp.methods),
            "trials": n_trials,
            "threads": args.threads,
        },
    ).write(os.path.join(args.out, "manifest.json"))


def cmd_heatmap(args) -> None:
    spec = load_scenario(args.scenario)
    cfg = build_trial_config(spec, args.full)
    if args.step <= 0 or args.radius <= 0:
        raise ConfigError("heatmap radius and step must be positive")
    books = build_codebooks(cfg.system)
    half_angle = np.deg2rad(args.half_angle_deg)
    grid = np.arange(-args.radius, args.radius + args.step / 2, args.step)
    rates = rate_heatmap(
        spec.geometry, cfg.gain_model, books, cfg.system, grid, grid,
        sector_half_angle_rad=half_angle, max_radius_m=args.radius,
    )
    rows = [
        (float(grid[i]), float(grid[j]), float(rates[i, j]))
        for i in range(grid.size)
        for j in range(grid.size)
        if np.isfinite(rates[i, j])
    ]
    _write_csv(os.path.join(args.out, "heatmap.csv"), HEATMAP_CSV_HEADER, rows)
    RunManifest(
        "heatmap", args.seed, str(args.out),
        {
            **_scenario_snapshot(args, spec, cfg),
            "radius_m": args.radius,
            "step_m": args.step,
            "half_angle_deg": args.half_angle_deg,
        },
    ).write(os.path.join(args.out, "manifest.json"))


def _add_common(sub) -> None:
    sub.add_argument("--out", required=True, help="output directory (created if missing)")
    sub.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    sub.add_argument("--full", action="store_true",
                     help="full scale: 3300 subcarriers and 250 trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mirage",
        description="Pilot-spoofing designs, estimation, localization, and sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectra", help="matched-filter angle and delay spectra CSVs")
    sp.add_argument("scenario")
    sp.add_argument("--method", choices=METHODS, default="oracle")
    _add_common(sp)
    sp.set_defaults(func=cmd_spectra)

    de = sub.add_parser("design", help="write one spoofed pilot tensor")
    de.add_argument("scenario")
    de.add_argument("--method", choices=DESIGN_METHODS, default="oracle")
    _add_common(de)
    de.set_defaults(func=cmd_design)

    es = sub.add_parser("estimate", help="run the estimator on one synthesized frame")
    es.add_argument("scenario")
    es.add_argument("--method", choices=METHODS, default="no_spoof")
    _add_common(es)
    es.set_defaults(func=cmd_estimate)

    lo = sub.add_parser("locate", help="estimate then localize one frame")
    lo.add_argument("scenario")
    lo.add_argument("--method", choices=METHODS, default="no_spoof")
    _add_common(lo)
    lo.set_defaults(func=cmd_locate)

    sw = sub.add_parser("sweep", help="Monte Carlo sweep from an experiment file")
    sw.add_argument("scenario")
    sw.add_argument("experiment")
    sw.add_argument("--threads", type=int, default=None,
                    help="worker threads (results are independent of this)")
    _add_common(sw)
    sw.set_defaults(func=cmd_sweep)

    hm = sub.add_parser("heatmap", help="rate-after-spoofing heatmap over the sector")
    hm.add_argument("scenario")
    hm.add_argument("--radius", type=float, default=50.0, help="sector radius in meters")
    hm.add_argument("--step", type=float, default=2.5, help="grid step in meters")
    hm.add_argument("--half-angle-deg", type=float, default=60.0,
                    help="sector half angle in degrees")
    _add_common(hm)
    hm.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        os.makedirs(args.out, exist_ok=True)
        args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (SpoofDesignError, DegenerateGeometryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
