"""Monte Carlo experiment engine.

Runs matched trials of the competing pilot strategies over a common
random state, aggregates position and measurement errors into RMSE
curves, and serializes everything as CSV. The per-trial seeding contract
is the load-bearing part: for a fixed (master_seed, trial_id) every
method observes identical path-gain phases and noise, so the only thing
that differs between method curves is the pilot itself.

Methods
-------
``no_spoof``      all-ones pilot, honest transmission
``oracle``        gain-aware closed-form spoofing pilot
``blind``         gain-blind angle surrogate plus fake delay paths
``blind_angles``  gain-blind angle surrogate only, flat in frequency
``dais``          honest pilot, then a fixed secret delay/AoD shift
                  applied to the measurements before localization
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import (
    PilotTensor,
    SystemConfig,
    build_codebooks,
    channel_tensor,
    synthesize_received,
    thermal_noise_psd,
)
from .estimate import CfarConfig, EstimationResult, flex_estimate
from .geometry import (
    SPEED_OF_LIGHT,
    GainModelConfig,
    ScenarioGeometry,
    forward_params,
    path_gains,
    perturb,
    wrap_angle,
)
from .locate_comm import achievable_rate, estimate_position, select_beam_pair
from .spoof_blind import design_blind_full
from .spoof_oracle import SpoofDesignError, SpoofTarget, design_full_pilot_tensor

__all__ = [
    "METHODS",
    "DESK_TRIALS",
    "FULL_TRIALS",
    "TRIAL_CSV_HEADER",
    "SUMMARY_CSV_HEADER",
    "TrialConfig",
    "TrialOutcome",
    "SweepReport",
    "make_trial_config",
    "design_method_pilot",
    "dais_baseline",
    "run_trial",
    "power_sweep",
    "measurement_deviation_sweep",
    "uncertainty_sweep",
    "rmse",
    "write_trials_csv",
    "write_summary_csv",
]

METHODS = ("no_spoof", "oracle", "blind", "blind_angles", "dais")

DESK_TRIALS = 50
FULL_TRIALS = 250

TRIAL_CSV_HEADER = (
    "axis_value", "trial_id", "method", "valid", "reason", "x_m", "y_m",
    "eps_est_m", "eps_dev_m", "aoa_dev_rad", "aod_dev_rad", "tau_dev_s",
    "rate_bps", "detected",
)
SUMMARY_CSV_HEADER = (
    "sweep", "axis_value", "method", "metric", "value", "n_valid", "n_trials",
)


@dataclass(frozen=True)
class TrialConfig:
    """Everything a single trial needs besides the scene and the seed."""

    system: SystemConfig
    gain_model: GainModelConfig
    cfar: CfarConfig = field(default_factory=CfarConfig)
    max_paths: int = 8
    max_range_m: float | None = 150.0
    dais_delay_shift_s: float = 15.0 / SPEED_OF_LIGHT
    dais_angle_shift_rad: float = 0.17

    def with_power_dbm(self, p_t_dbm: float) -> "TrialConfig":
        watts = 10.0 ** (p_t_dbm / 10.0) * 1e-3
        return replace(
            self,
            system=replace(self.system, tx_power_w=watts),
            gain_model=replace(self.gain_model, tx_power_w=watts),
        )


def make_trial_config(
    p_t_dbm: float = 35.0,
    full_scale: bool = False,
    n_subcarriers: int | None = None,
    noise_figure_db: float = 0.0,
) -> TrialConfig:
    """Reference system: 24x16 arrays with square DFT books, 120 kHz
    spacing at 27.8 GHz. Desk scale keeps 256 subcarriers so the whole
    suite stays interactive; full scale restores all 3300."""
    k = n_subcarriers if n_subcarriers is not None else (3300 if full_scale else 256)
    watts = 10.0 ** (p_t_dbm / 10.0) * 1e-3
    system = SystemConfig(
        n_rx=24, n_tx=16, n_combiners=24, n_precoders=16, n_subcarriers=k,
        subcarrier_spacing_hz=120e3, carrier_hz=27.8e9,
        noise_psd_w_per_hz=thermal_noise_psd(noise_figure_db),
        tx_power_w=watts,
    )
    gain_model = GainModelConfig(
        tx_power_w=watts, g_bs_lin=10 ** 0.7, g_ue_lin=10 ** 0.3,
        rcs_m2=50.0, carrier_hz=27.8e9,
    )
    return TrialConfig(system=system, gain_model=gain_model)


@dataclass(frozen=True)
class TrialOutcome:
    """One trial's metrics.

    ``eps_est_m`` is the distance from the position estimate to the true
    UE, ``eps_dev_m`` to the attacker's intended position; both are NaN
    when no valid estimate was produced. The per-path deviation tuples
    compare matched estimated measurements against the target scene's.
    """

    trial_id: int
    method: str
    position: np.ndarray
    valid: bool
    reason: str
    eps_est_m: float
    eps_dev_m: float
    aoa_dev_rad: tuple
    aod_dev_rad: tuple
    tau_dev_s: tuple
    rate_bps: float
    detected: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        pos = np.asarray(self.position, dtype=float).reshape(2)
        if not self.valid and not (np.isnan(self.eps_est_m) and np.isnan(self.eps_dev_m)):
            raise ValueError("invalid trials must carry NaN position errors")
        object.__setattr__(self, "position", pos)

    def csv_row(self, axis_value: float) -> tuple:
        def scalar(devs):
            finite = [d for d in devs if np.isfinite(d)]
            return float(np.mean(finite)) if finite else float("nan")

        return (
            axis_value, self.trial_id, self.method, int(self.valid), self.reason,
            float(self.position[0]), float(self.position[1]),
            self.eps_est_m, self.eps_dev_m,
            scalar(self.aoa_dev_rad), scalar(self.aod_dev_rad), scalar(self.tau_dev_s),
            self.rate_bps, self.detected,
        )


@dataclass(frozen=True)
class SweepReport:
    """Aggregated curves over one sweep axis.

    ``curves`` maps (method, metric) to one value per axis point;
    ``valid_counts`` maps method to the number of trials that produced a
    usable position estimate at each point. Dropped trials are counted,
    never imputed. ``trials`` retains every outcome as (axis_value,
    outcome) pairs for the per-trial CSV.
    """

    axis_name: str
    axis_values: np.ndarray
    curves: dict
    valid_counts: dict
    n_trials: int
    offset_m: float | None = None
    trials: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.axis_values, dtype=float)
        for method, counts in self.valid_counts.items():
            arr = np.asarray(counts, dtype=int)
            if arr.shape != vals.shape:
                raise ValueError(f"count shape mismatch for {method!r}")
            if np.any(arr < 0) or np.any(arr > self.n_trials):
                raise ValueError("valid counts must lie in [0, n_trials]")
        for key, curve in self.curves.items():
            if np.asarray(curve).shape != vals.shape:
                raise ValueError(f"curve shape mismatch for {key!r}")
        object.__setattr__(self, "axis_values", vals)

    def curve(self, method: str, metric: str) -> np.ndarray:
        return np.asarray(self.curves[(method, metric)], dtype=float)


def rmse(errors) -> float:
    """Root mean square over the finite entries; NaN when none remain."""
    x = np.asarray(errors, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean(x * x)))


def dais_baseline(est: EstimationResult, dtau_s: float, dphi_rad: float) -> EstimationResult:
    """Apply the fixed secret delay and AoD shifts to the measurements.

    The delay shift moves every path equally (it models a transmit-time
    offset) and the angle shift rotates the departure frame; arrival
    angles are untouched. Localization downstream is invariant to both.
    """
    return EstimationResult(
        est.delays_s + dtau_s,
        est.aoa_rad,
        est.aod_rad + dphi_rad,
        est.peak_power,
        est.unreliable,
    )


def _match_deviations(est: EstimationResult, target_params):
    """Per-target-path measurement deviations via delay-nearest matching.

    Each target path is assigned a distinct estimated path minimizing the
    total absolute delay mismatch; unmatched target paths (too few
    detections) report NaN.
    """
    n_t = target_params.n_paths
    nan = tuple(float("nan") for _ in range(n_t))
    if est.detected_count == 0:
        return nan, nan, nan
    cost = np.abs(target_params.delays_s[:, None] - est.delays_s[None, :])
    rows, cols = linear_sum_assignment(cost)
    aoa = [float("nan")] * n_t
    aod = [float("nan")] * n_t
    tau = [float("nan")] * n_t
    for r, c in zip(rows, cols):
        aoa[r] = abs(float(wrap_angle(est.aoa_rad[c] - target_params.aoa_rad[r])))
        aod[r] = abs(float(wrap_angle(est.aod_rad[c] - target_params.aod_rad[r])))
        tau[r] = abs(float(est.delays_s[c] - target_params.delays_s[r]))
    return tuple(aoa), tuple(aod), tuple(tau)


def design_method_pilot(method, params, gains, target, books, cfg: TrialConfig):
    """Pilot tensor for one method tag; gains are only read by "oracle"."""
    if method in ("no_spoof", "dais"):
        return PilotTensor.nominal(cfg.system)
    if method == "oracle":
        return design_full_pilot_tensor(params, gains, target, books, cfg.system)
    if method == "blind":
        return design_blind_full(params, target, books, cfg.system).pilot
    if method == "blind_angles":
        return design_blind_full(params, target, books, cfg.system, angles_only=True).pilot
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def run_trial(
    scenario: ScenarioGeometry,
    method: str,
    target: SpoofTarget,
    cfg: TrialConfig,
    seed,
    trial_id: int = 0,
    design_sigmas: tuple | None = None,
) -> TrialOutcome:
    """Synthesize one uplink frame, estimate, localize, and score.

    ``seed`` is an integer or SeedSequence; three child streams are always
    drawn (gains, noise, design perturbation) so outcomes with and without
    ``design_sigmas`` stay stream-compatible. With ``design_sigmas`` =
    (sigma_ue_m, sigma_sp_m) the attacker designs from a Gaussian-perturbed
    copy of the scene while the channel itself stays true.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng_gain, rng_noise, rng_design = (np.random.default_rng(s) for s in ss.spawn(3))

    books = build_codebooks(cfg.system)
    gains = path_gains(scenario, cfg.gain_model, rng_gain)
    params = forward_params(scenario).with_gains(gains)

    design_scene = scenario
    if design_sigmas is not None:
        design_scene = perturb(scenario, design_sigmas[0], design_sigmas[1], rng_design)

    try:
        if design_sigmas is not None and method == "oracle":
            pilot = design_full_pilot_tensor(
                forward_params(design_scene).with_gains(gains), gains, target,
                books, cfg.system,
            )
        else:
            pilot = design_method_pilot(method, params, gains, target, books, cfg)
    except SpoofDesignError as err:
        nan2 = np.full(2, np.nan)
        n_t = target.target_params.n_paths
        nans = tuple(float("nan") for _ in range(n_t))
        return TrialOutcome(
            trial_id, method, nan2, False, f"design-error: {err}",
            float("nan"), float("nan"), nans, nans, nans, float("nan"), 0,
        )

    h = channel_tensor(params, books, cfg.system)
    y = synthesize_received(h, pilot, cfg.system, rng_noise)
    est = flex_estimate(y, books, cfg.system, cfar=cfg.cfar, max_paths=cfg.max_paths)
    if method == "dais":
        est = dais_baseline(est, cfg.dais_delay_shift_s, cfg.dais_angle_shift_rad)

    pos = estimate_position(est, scenario.bs, max_range_m=cfg.max_range_m)
    if pos.valid:
        eps_est = float(np.linalg.norm(pos.position - scenario.ue.position))
        eps_dev = float(np.linalg.norm(pos.position - target.target_geometry.ue.position))
    else:
        eps_est = eps_dev = float("nan")

    aoa_dev, aod_dev, tau_dev = _match_deviations(est, target.target_params)
    if cfg.system.noise_psd_w_per_hz > 0.0:
        rate = achievable_rate(params, select_beam_pair(y), books, cfg.system).rate_bps
    else:
        rate = float("nan")  # zero-noise diagnostics have no finite SNR
    return TrialOutcome(
        trial_id, method, pos.position, pos.valid, pos.reason,
        eps_est, eps_dev, aoa_dev, aod_dev, tau_dev, rate, est.detected_count,
    )


def _run_point(scenario, target, methods, cfg, n_trials, master_seed, max_workers, sigmas):
    def one(args):
        method, t = args
        return run_trial(
            scenario, method, target, cfg,
            np.random.SeedSequence([master_seed, t]), trial_id=t,
            design_sigmas=sigmas,
        )

    jobs = [(m, t) for m in methods for t in range(n_trials)]
    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            flat = list(pool.map(one, jobs))
    else:
        flat = [one(j) for j in jobs]
    per_method = {}
    for (m, _), out in zip(jobs, flat):
        per_method.setdefault(m, []).append(out)
    return per_method


def _position_metrics(curves, counts, trials, axis_value, per_method):
    for method, outs in per_method.items():
        est_errs = [o.eps_est_m for o in outs]
        dev_errs = [o.eps_dev_m for o in outs]
        curves.setdefault((method, "eps_est_rmse_m"), []).append(rmse(est_errs))
        curves.setdefault((method, "eps_dev_rmse_m"), []).append(rmse(dev_errs))
        curves.setdefault((method, "rate_mean_bps"), []).append(
            float(np.mean([o.rate_bps for o in outs]))
        )
        counts.setdefault(method, []).append(sum(o.valid for o in outs))
        trials.extend((axis_value, o) for o in outs)


def _offset_m(scenario, target) -> float:
    return float(np.linalg.norm(
        target.target_geometry.ue.position - scenario.ue.position
    ))


def power_sweep(
    scenario: ScenarioGeometry,
    target: SpoofTarget,
    methods,
    p_t_dbm_list,
    n_trials: int,
    cfg: TrialConfig,
    master_seed: int = 0,
    max_workers: int | None = None,
) -> SweepReport:
    """RMSE of both position errors (and mean rate) versus transmit power.

    Trial t at every power and under every method reuses the same random
    streams, so curves are paired samples of the same channel draws.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    curves, counts, trials = {}, {}, []
    for p_dbm in p_t_dbm_list:
        per_method = _run_point(
            scenario, target, methods, cfg.with_power_dbm(p_dbm),
            n_trials, master_seed, max_workers, None,
        )
        _position_metrics(curves, counts, trials, float(p_dbm), per_method)
    return SweepReport(
        "p_t_dbm", np.asarray(p_t_dbm_list, dtype=float), curves, counts,
        n_trials, offset_m=_offset_m(scenario, target), trials=tuple(trials),
    )


def measurement_deviation_sweep(
    scenario: ScenarioGeometry,
    target: SpoofTarget,
    methods,
    p_t_dbm_list,
    n_trials: int,
    cfg: TrialConfig,
    master_seed: int = 0,
    max_workers: int | None = None,
) -> SweepReport:
    """Per-path RMSE of the measurement-level deviations versus power.

    Scores how close the estimated AoA/AoD/delay of each matched path
    lands to the attacker's intended values, regardless of what the
    position solver then does with them.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    n_t = target.target_params.n_paths
    curves, counts, trials = {}, {}, []
    for p_dbm in p_t_dbm_list:
        per_method = _run_point(
            scenario, target, methods, cfg.with_power_dbm(p_dbm),
            n_trials, master_seed, max_workers, None,
        )
        for method, outs in per_method.items():
            for j in range(n_t):
                for name, attr in (
                    ("aoa_dev_rmse_rad", "aoa_dev_rad"),
                    ("aod_dev_rmse_rad", "aod_dev_rad"),
                    ("tau_dev_rmse_s", "tau_dev_s"),
                ):
                    vals = [getattr(o, attr)[j] for o in outs]
                    curves.setdefault((method, f"{name}_path{j}"), []).append(rmse(vals))
            counts.setdefault(method, []).append(sum(o.valid for o in outs))
            trials.extend((float(p_dbm), o) for o in outs)
    return SweepReport(
        "p_t_dbm", np.asarray(p_t_dbm_list, dtype=float), curves, counts,
        n_trials, offset_m=_offset_m(scenario, target), trials=tuple(trials),
    )


def uncertainty_sweep(
    scenario: ScenarioGeometry,
    target: SpoofTarget,
    sigma_ue_list,
    n_trials: int,
    cfg: TrialConfig,
    sigma_sp_m: float = 0.1,
    methods=("oracle",),
    master_seed: int = 0,
    max_workers: int | None = None,
) -> SweepReport:
    """Robustness of the gain-aware design to stale victim coordinates.

    Per trial the attacker's copy of the UE (and scatterer) positions is
    Gaussian-perturbed with the axis sigma; the channel, the target, and
    the scoring all stay pinned to the true scene.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    sigmas = np.asarray(sigma_ue_list, dtype=float)
    if np.any(sigmas < 0):
        raise ValueError("perturbation sigmas must be nonnegative")
    curves, counts, trials = {}, {}, []
    for sigma in sigmas:
        per_method = _run_point(
            scenario, target, methods, cfg, n_trials, master_seed,
            max_workers, (float(sigma), sigma_sp_m),
        )
        _position_metrics(curves, counts, trials, float(sigma), per_method)
    return SweepReport(
        "sigma_ue_m", sigmas, curves, counts, n_trials,
        offset_m=_offset_m(scenario, target), trials=tuple(trials),
    )


def write_trials_csv(path, report: SweepReport) -> None:
    """One row per trial; see TRIAL_CSV_HEADER for the column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIAL_CSV_HEADER)
        for axis_value, outcome in report.trials:
            writer.writerow(outcome.csv_row(axis_value))


def write_summary_csv(path, report: SweepReport) -> None:
    """One row per sweep point, method, and metric (long format)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_CSV_HEADER)
        for (method, metric) in sorted(report.curves):
            curve = report.curves[(method, metric)]
            for i, axis_value in enumerate(report.axis_values):
                writer.writerow((
                    report.axis_name, float(axis_value), method, metric,
                    float(curve[i]), int(report.valid_counts[method][i]),
                    report.n_trials,
                ))
