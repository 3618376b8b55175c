"""Ground-truth scene geometry and the forward map to path parameters.

The world is 2-D: one base station (BS) and one user (UE), each with a
uniform linear array at a known pose, plus zero or more point scatterers.
Propagation paths are the direct BS-UE line (index 0) and one single-bounce
path per scatterer. ``forward_params`` turns poses into per-path delay,
angle of arrival (AoA, measured in the BS array frame) and angle of
departure (AoD, UE array frame); ``path_gains`` attaches complex gains from
a free-space / radar-equation power model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SPEED_OF_LIGHT",
    "MIN_LEG_M",
    "DegenerateGeometryError",
    "Pose2D",
    "ScenarioGeometry",
    "PathParameterSet",
    "GainModelConfig",
    "wrap_angle",
    "forward_params",
    "path_gains",
    "perturb",
]

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Scene points closer than this are treated as coincident (degenerate).
MIN_LEG_M = 1e-6


class DegenerateGeometryError(ValueError):
    """Two scene points (nearly) coincide, so a path leg has no direction."""


def wrap_angle(x):
    """Wrap angles to the interval (-pi, pi].

    Accepts scalars or arrays; the output is congruent to the input modulo
    2*pi. The boundary maps as wrap(pi) = pi and wrap(-pi) = pi.
    """
    wrapped = np.pi - np.remainder(np.pi - np.asarray(x, dtype=float), 2.0 * np.pi)
    return wrapped.item() if wrapped.ndim == 0 else wrapped


@dataclass(frozen=True)
class Pose2D:
    """Position (meters) and array boresight orientation (radians)."""

    position: np.ndarray
    orientation: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(2).copy()
        if not (np.all(np.isfinite(pos)) and np.isfinite(self.orientation)):
            raise ValueError("pose position and orientation must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", wrap_angle(float(self.orientation)))


@dataclass(frozen=True)
class ScenarioGeometry:
    """BS and UE poses, scatterer positions, and the UE clock bias."""

    bs: Pose2D
    ue: Pose2D
    scatter_points: np.ndarray = ()
    clock_bias_s: float = 0.0
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        sps = np.asarray(self.scatter_points, dtype=float).reshape(-1, 2).copy()
        if not np.all(np.isfinite(sps)):
            raise ValueError("scatter points must be finite")
        if not np.isfinite(self.clock_bias_s):
            raise ValueError("clock bias must be finite")
        if self.speed_of_light <= 0:
            raise ValueError("speed of light must be positive")
        for i, sp in enumerate(sps):
            # Coincident scatterers break the bounce-path direction.
            if np.linalg.norm(sp - self.bs.position) < MIN_LEG_M:
                raise DegenerateGeometryError(f"scatter point {i} coincides with the BS")
            if np.linalg.norm(sp - self.ue.position) < MIN_LEG_M:
                raise DegenerateGeometryError(f"scatter point {i} coincides with the UE")
        object.__setattr__(self, "scatter_points", sps)
        object.__setattr__(self, "clock_bias_s", float(self.clock_bias_s))

    @property
    def n_paths(self) -> int:
        return 1 + len(self.scatter_points)


@dataclass(frozen=True)
class PathParameterSet:
    """Per-path delay / AoA / AoD arrays, optionally with complex gains.

    Index 0 is the direct path and carries the smallest delay; bounce paths
    follow in scatterer order. Angles are stored wrapped to (-pi, pi].
    """

    delays_s: np.ndarray
    aoa_rad: np.ndarray
    aod_rad: np.ndarray
    gains: np.ndarray | None = None

    def __post_init__(self):
        delays = np.atleast_1d(np.asarray(self.delays_s, dtype=float)).copy()
        aoa = wrap_angle(np.atleast_1d(np.asarray(self.aoa_rad, dtype=float)))
        aod = wrap_angle(np.atleast_1d(np.asarray(self.aod_rad, dtype=float)))
        if not (delays.shape == aoa.shape == aod.shape) or delays.ndim != 1:
            raise ValueError("delays, AoAs and AoDs must be 1-D arrays of equal length")
        if delays.size < 1:
            raise ValueError("at least one path is required")
        if not np.all(np.isfinite(delays)):
            raise ValueError("delays must be finite")
        if delays[0] > delays.min() + 1e-15:
            raise ValueError("path 0 must carry the smallest delay")
        object.__setattr__(self, "delays_s", delays)
        object.__setattr__(self, "aoa_rad", np.atleast_1d(aoa))
        object.__setattr__(self, "aod_rad", np.atleast_1d(aod))
        if self.gains is not None:
            g = np.atleast_1d(np.asarray(self.gains, dtype=complex)).copy()
            if g.shape != delays.shape:
                raise ValueError("gains must match the path count")
            object.__setattr__(self, "gains", g)

    @property
    def n_paths(self) -> int:
        return self.delays_s.size

    def with_gains(self, gains) -> "PathParameterSet":
        return PathParameterSet(self.delays_s, self.aoa_rad, self.aod_rad, gains)


@dataclass(frozen=True)
class GainModelConfig:
    """Link-budget inputs for the path gain model.

    ``tx_power_w`` is carried alongside the antenna gains for configuration
    completeness but deliberately does not enter the path gains: transmit
    power scales the signal exactly once, through the per-subcarrier energy
    of the system model.
    """

    tx_power_w: float
    g_bs_lin: float
    g_ue_lin: float
    rcs_m2: float
    carrier_hz: float
    random_phase_seed: int = 0

    def __post_init__(self):
        for name in ("tx_power_w", "g_bs_lin", "g_ue_lin", "rcs_m2", "carrier_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


def _bearing(origin, target, orientation):
    d = target - origin
    return wrap_angle(float(np.arctan2(d[1], d[0])) - orientation)


def forward_params(geom: ScenarioGeometry) -> PathParameterSet:
    """Map scene geometry to per-path delays and angles (gains unset).

    The direct path has delay ``|BS - UE|/c + b`` where ``b`` is the UE
    clock bias; each bounce path has the two-leg delay via its scatterer.
    AoAs are bearings seen from the BS toward the apparent source (UE, or
    the scatterer), AoDs bearings from the UE toward the target (BS, or the
    scatterer), each relative to the local array orientation.

    Raises
    ------
    DegenerateGeometryError
        If any path leg is shorter than ``MIN_LEG_M``.
    """
    c = geom.speed_of_light
    bias = geom.clock_bias_s
    p_bs, p_ue = geom.bs.position, geom.ue.position
    o_bs, o_ue = geom.bs.orientation, geom.ue.orientation

    d0 = float(np.linalg.norm(p_ue - p_bs))
    if d0 < MIN_LEG_M:
        raise DegenerateGeometryError("BS and UE positions coincide")
    delays = [d0 / c + bias]
    aoa = [_bearing(p_bs, p_ue, o_bs)]
    aod = [_bearing(p_ue, p_bs, o_ue)]

    for i, sp in enumerate(geom.scatter_points):
        d_ue = float(np.linalg.norm(sp - p_ue))
        d_bs = float(np.linalg.norm(sp - p_bs))
        if min(d_ue, d_bs) < MIN_LEG_M:
            raise DegenerateGeometryError(f"scatter point {i} lies on the BS or UE")
        delays.append((d_ue + d_bs) / c + bias)
        aoa.append(_bearing(p_bs, sp, o_bs))
        aod.append(_bearing(p_ue, sp, o_ue))

    return PathParameterSet(np.array(delays), np.array(aoa), np.array(aod))


def _eta_direct(d_m, carrier_hz, c):
    return (c / (4.0 * np.pi * carrier_hz * d_m)) ** 2


def _eta_bounce(d_ue_sp, d_sp_bs, rcs_m2, carrier_hz, c):
    return rcs_m2 * c**2 / ((4.0 * np.pi) ** 3 * carrier_hz**2 * d_ue_sp**2 * d_sp_bs**2)


def path_gains(geom: ScenarioGeometry, cfg: GainModelConfig, rng=None) -> np.ndarray:
    """Complex path gains: link-budget magnitudes with uniform random phases.

    The direct-path power follows free space, |a_0|^2 = eta_0 G_bs G_ue with
    eta_0 = (c / (4 pi f_c d_0))^2; bounce paths follow the two-leg radar
    equation with the scatterer's radar cross section. Phases are i.i.d.
    uniform on [0, 2 pi), drawn from ``rng`` when given and otherwise from a
    generator seeded with ``cfg.random_phase_seed`` (deterministic per seed).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.random_phase_seed)
    c = geom.speed_of_light
    p_bs, p_ue = geom.bs.position, geom.ue.position

    d0 = float(np.linalg.norm(p_ue - p_bs))
    if d0 < MIN_LEG_M:
        raise DegenerateGeometryError("BS and UE positions coincide")
    etas = [_eta_direct(d0, cfg.carrier_hz, c)]
    for i, sp in enumerate(geom.scatter_points):
        d_ue = float(np.linalg.norm(sp - p_ue))
        d_bs = float(np.linalg.norm(sp - p_bs))
        if min(d_ue, d_bs) < MIN_LEG_M:
            raise DegenerateGeometryError(f"scatter point {i} lies on the BS or UE")
        etas.append(_eta_bounce(d_ue, d_bs, cfg.rcs_m2, cfg.carrier_hz, c))

    amplitudes = np.sqrt(np.asarray(etas) * cfg.g_bs_lin * cfg.g_ue_lin)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=amplitudes.size)
    return amplitudes * np.exp(1j * phases)


def perturb(geom: ScenarioGeometry, sigma_ue_m: float, sigma_sp_m: float, rng) -> ScenarioGeometry:
    """Gaussian-perturbed copy of the geometry (positions only).

    The UE position receives an i.i.d. per-axis offset with standard
    deviation ``sigma_ue_m``; each scatterer one with ``sigma_sp_m``.
    Orientations and the clock bias are untouched. Zero sigmas reproduce the
    input values exactly (the generator is still advanced).
    """
    if sigma_ue_m < 0 or sigma_sp_m < 0:
        raise ValueError("perturbation sigmas must be nonnegative")
    ue = Pose2D(geom.ue.position + rng.normal(0.0, sigma_ue_m, size=2), geom.ue.orientation)
    sps = geom.scatter_points + rng.normal(0.0, sigma_sp_m, size=geom.scatter_points.shape)
    return ScenarioGeometry(geom.bs, ue, sps, geom.clock_bias_s, geom.speed_of_light)
