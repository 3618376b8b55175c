"""Scenario and experiment file parsing plus the run manifest.

Scenario files are TOML. The base schema carries the true scene and the
link budget (dB fields converted once on load); an optional [spoof] table
adds the attacker's claimed scene, and an optional [system] table
overrides array and waveform dimensions. Experiment files describe one
sweep. Manifests are deterministic JSON snapshots written next to every
output so a run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

from . import __version__
from .geometry import GainModelConfig, Pose2D, ScenarioGeometry
from .harness import DESK_TRIALS, FULL_TRIALS, METHODS, TrialConfig, make_trial_config
from .spoof_oracle import SpoofTarget

__all__ = [
    "ConfigError",
    "ScenarioSpec",
    "ExperimentSpec",
    "RunManifest",
    "db_to_linear",
    "load_scenario",
    "load_experiment",
    "build_trial_config",
    "build_spoof_target",
]

EXPERIMENT_KINDS = ("power", "deviation", "uncertainty")

SYSTEM_KEYS = (
    "n_rx", "n_tx", "n_combiners", "n_precoders", "n_subcarriers",
    "subcarrier_spacing_hz", "noise_figure_db",
)


class ConfigError(ValueError):
    """Raised for unreadable, unparsable, or schema-violating files."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (float(db) / 10.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """Parsed scenario file: scene, link budget, optional spoof scene."""

    geometry: ScenarioGeometry
    gain_model: GainModelConfig
    tx_power_dbm: float
    spoof_geometry: ScenarioGeometry | None = None
    spoof_phase_seed: int = 1
    system_overrides: dict = None

    def __post_init__(self):
        if self.system_overrides is None:
            object.__setattr__(self, "system_overrides", {})


@dataclass(frozen=True)
class ExperimentSpec:
    """Parsed experiment file: one sweep axis plus the methods to run."""

    kind: str
    methods: tuple
    p_t_dbm: tuple = ()
    sigma_ue_m: tuple = ()
    sigma_sp_m: float = 0.1
    trials: int | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(
                f"unknown experiment kind {self.kind!r}; expected one of {EXPERIMENT_KINDS}"
            )
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(
                    f"invalid method tag {m!r}; valid tags are {', '.join(METHODS)}"
                )
        if not self.methods:
            raise ConfigError("experiment needs at least one method")
        if self.kind in ("power", "deviation") and not self.p_t_dbm:
            raise ConfigError(f"{self.kind!r} experiment needs a nonempty p_t_dbm list")
        if self.kind == "uncertainty" and not len(self.sigma_ue_m):
            raise ConfigError("'uncertainty' experiment needs a nonempty sigma_ue_m list")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be a positive integer")

    def trial_count(self, full_scale: bool) -> int:
        if self.trials is not None:
            return self.trials
        return FULL_TRIALS if full_scale else DESK_TRIALS


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written alongside every command's output."""

    command: str
    seed: int
    out_dir: str
    config: dict
    version: str = __version__

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _parse_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomllib.TOMLDecodeError as err:  # message carries line/column
        raise ConfigError(f"{path}: {err}") from None


def _need(table: dict, key: str, path) -> object:
    if key not in table:
        raise ConfigError(f"{path}: missing required key {key!r}")
    return table[key]


def _pose(table: dict, name: str, path) -> Pose2D:
    sub = _need(table, name, path)
    if not isinstance(sub, dict):
        raise ConfigError(f"{path}: {name!r} must be a table")
    pos = _need(sub, "position", f"{path}:{name}")
    try:
        return Pose2D(np.asarray(pos, dtype=float), float(sub.get("orientation", 0.0)))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: bad {name} pose: {err}") from None


def _scatter(table: dict, path, required: bool) -> list:
    if "scatter_points" not in table:
        if required:
            raise ConfigError(f"{path}: missing required key 'scatter_points'")
        return []
    pts = table["scatter_points"]
    if not isinstance(pts, list):
        raise ConfigError(f"{path}: 'scatter_points' must be a list of [x, y] pairs")
    return [np.asarray(p, dtype=float) for p in pts]


def load_scenario(path) -> ScenarioSpec:
    """Parse and validate a scenario file; all errors name the file."""
    raw = _parse_toml(path)
    carrier = float(_need(raw, "carrier_hz", path))
    bs = _pose(raw, "bs", path)
    ue_table = _need(raw, "ue", path)
    ue = _pose(raw, "ue", path)
    clock_bias = float(ue_table.get("clock_bias_s", 0.0))

    gain = _need(raw, "gain", path)
    tx_power_dbm = float(_need(gain, "tx_power_dbm", f"{path}:gain"))
    try:
        gain_model = GainModelConfig(
            tx_power_w=db_to_linear(tx_power_dbm) * 1e-3,
            g_bs_lin=db_to_linear(_need(gain, "g_bs_dbi", f"{path}:gain")),
            g_ue_lin=db_to_linear(_need(gain, "g_ue_dbi", f"{path}:gain")),
            rcs_m2=float(_need(gain, "rcs_m2", f"{path}:gain")),
            carrier_hz=carrier,
            random_phase_seed=int(gain.get("phase_seed", 0)),
        )
        geometry = ScenarioGeometry(
            bs=bs, ue=ue, scatter_points=_scatter(raw, path, required=True),
            clock_bias_s=clock_bias,
        )
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from None

    spoof_geometry = None
    spoof_seed = 1
    if "spoof" in raw:
        spoof = raw["spoof"]
        try:
            spoof_geometry = ScenarioGeometry(
                bs=bs,
                ue=_pose(spoof, "ue", f"{path}:spoof"),
                scatter_points=_scatter(spoof, f"{path}:spoof", required=False),
            )
        except ValueError as err:
            raise ConfigError(f"{path}: spoof scene: {err}") from None
        spoof_seed = int(spoof.get("design_phase_seed", 1))

    system = raw.get("system", {})
    bad = set(system) - set(SYSTEM_KEYS)
    if bad:
        raise ConfigError(
            f"{path}: unknown system key(s) {sorted(bad)}; valid keys are {SYSTEM_KEYS}"
        )
    return ScenarioSpec(
        geometry=geometry, gain_model=gain_model, tx_power_dbm=tx_power_dbm,
        spoof_geometry=spoof_geometry, spoof_phase_seed=spoof_seed,
        system_overrides=dict(system),
    )


def load_experiment(path) -> ExperimentSpec:
    """Parse and validate an experiment file; all errors name the file."""
    raw = _parse_toml(path)
    kind = str(_need(raw, "kind", path))
    methods = _need(raw, "methods", path)
    if not isinstance(methods, list):
        raise ConfigError(f"{path}: 'methods' must be a list")
    try:
        return ExperimentSpec(
            kind=kind,
            methods=tuple(str(m) for m in methods),
            p_t_dbm=tuple(float(p) for p in raw.get("p_t_dbm", [])),
            sigma_ue_m=tuple(float(s) for s in raw.get("sigma_ue_m", [])),
            sigma_sp_m=float(raw.get("sigma_sp_m", 0.1)),
            trials=int(raw["trials"]) if "trials" in raw else None,
        )
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from None


def build_trial_config(spec: ScenarioSpec, full_scale: bool = False) -> TrialConfig:
    """Resolve a scenario into a runnable trial configuration.

    System dimensions start from the reference setup at the file's
    transmit power and scale, then apply any [system] overrides; the
    link-budget table replaces the reference gain model wholesale.
    """
    ov = dict(spec.system_overrides)
    cfg = make_trial_config(
        p_t_dbm=spec.tx_power_dbm,
        full_scale=full_scale,
        n_subcarriers=ov.pop("n_subcarriers", None),
        noise_figure_db=ov.pop("noise_figure_db", 0.0),
    )
    if ov:
        cfg = replace(cfg, system=replace(cfg.system, **ov))
    if spec.gain_model.carrier_hz != cfg.system.carrier_hz:
        cfg = replace(cfg, system=replace(cfg.system, carrier_hz=spec.gain_model.carrier_hz))
    return replace(cfg, gain_model=spec.gain_model)


def build_spoof_target(spec: ScenarioSpec) -> SpoofTarget:
    """Spoof target with link-budget design gains at the claimed scene."""
    if spec.spoof_geometry is None:
        raise ConfigError("scenario file has no [spoof] table")
    return SpoofTarget.from_geometry(
        spec.spoof_geometry,
        gain_cfg=replace(spec.gain_model, random_phase_seed=spec.spoof_phase_seed),
    )
