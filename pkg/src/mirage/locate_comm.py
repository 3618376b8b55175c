"""Single-anchor localization and communication-rate evaluation.

The position solver needs one LOS and one NLOS path. With the angle sums
at the BS and UE and the delay difference between the two paths, the
triangle BS-UE-scatterer is determined up to congruence, and the LOS
distance follows from the law of sines:

    d0 = c*dtau * sin(dtheta + dphi) / (sin dtheta + sin dphi - sin(dtheta + dphi))

Only the delay difference enters, so an unknown UE clock offset cancels
exactly. The same cancellation makes the construction blind to uniform
shifts of all delays and all AoDs, which is what the delay-and-AoD shift
baseline exploits.

Rates are always evaluated on the physical channel. Spoofing can steer
which beams the BS selects, but not the channel those beams then see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Codebooks, SystemConfig, channel_tensor, factor_matrices, ula_steering
from .geometry import (
    SPEED_OF_LIGHT,
    GainModelConfig,
    Pose2D,
    ScenarioGeometry,
    forward_params,
    path_gains,
    wrap_angle,
)
from .spoof_oracle import SpoofDesignError, SpoofTarget, design_full_pilot_tensor

__all__ = [
    "DEGENERATE_DENOMINATOR",
    "PositionEstimate",
    "BeamSelection",
    "RateReport",
    "estimate_position",
    "select_beam_pair",
    "achievable_rate",
    "perfect_csi_rate",
    "rate_heatmap",
]

DEGENERATE_DENOMINATOR = 1e-9

POSITION_CSV_HEADER = ("trial_id", "x_m", "y_m", "d0_m", "valid")
HEATMAP_CSV_HEADER = ("x_m", "y_m", "rate_bps")


@dataclass(frozen=True)
class PositionEstimate:
    """Localization output; ``reason`` says why ``valid`` is False.

    ``no-paths`` marks too few detected paths (no estimate attempted),
    as opposed to the numerical failures ``degenerate`` (vanishing
    law-of-sines denominator), ``nonpositive`` (d0 <= 0), and
    ``out-of-coverage`` (beyond the configured radius).
    """

    position: np.ndarray
    d0_m: float
    used_paths: tuple
    valid: bool
    reason: str = "ok"

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        if p.shape != (2,):
            raise ValueError("position must be a 2-vector")
        if self.valid and not (np.all(np.isfinite(p)) and np.isfinite(self.d0_m)):
            raise ValueError("a valid estimate must be finite")
        object.__setattr__(self, "position", p)

    @classmethod
    def failure(cls, reason: str, used_paths: tuple = ()) -> "PositionEstimate":
        return cls(np.full(2, np.nan), float("nan"), used_paths, False, reason)

    def csv_row(self, trial_id: int) -> tuple:
        return (
            trial_id,
            float(self.position[0]),
            float(self.position[1]),
            float(self.d0_m),
            int(self.valid),
        )


@dataclass(frozen=True)
class BeamSelection:
    combiner_index: int
    precoder_index: int

    def __post_init__(self):
        if self.combiner_index < 0 or self.precoder_index < 0:
            raise ValueError("beam indices must be nonnegative")


@dataclass(frozen=True)
class RateReport:
    """Sum rate and the per-subcarrier SNR sequence it was computed from."""

    rate_bps: float
    per_subcarrier_snr: np.ndarray

    def __post_init__(self):
        snr = np.asarray(self.per_subcarrier_snr, dtype=float)
        if not np.all(np.isfinite(snr)) or np.any(snr < 0):
            raise ValueError("per-subcarrier SNR must be finite and nonnegative")
        if not np.isfinite(self.rate_bps) or self.rate_bps < 0:
            raise ValueError("rate must be finite and nonnegative")
        object.__setattr__(self, "per_subcarrier_snr", snr)


def estimate_position(est, bs: Pose2D, max_range_m: float | None = None) -> PositionEstimate:
    """Two-path law-of-sines position solve in the global frame.

    Uses the two earliest detected paths (earliest = LOS candidate, next =
    NLOS). The output is invariant to any common delay offset.
    """
    delays = np.asarray(est.delays_s, dtype=float)
    if delays.size < 2:
        return PositionEstimate.failure("no-paths")
    order = np.argsort(delays, kind="stable")
    i0, i1 = int(order[0]), int(order[1])

    dtau = delays[i1] - delays[i0]
    dtheta = abs(wrap_angle(est.aoa_rad[i1] - est.aoa_rad[i0]))
    dphi = abs(wrap_angle(est.aod_rad[i1] - est.aod_rad[i0]))

    denom = np.sin(dtheta) + np.sin(dphi) - np.sin(dtheta + dphi)
    if abs(denom) < DEGENERATE_DENOMINATOR:
        return PositionEstimate.failure("degenerate", (i0, i1))
    d0 = SPEED_OF_LIGHT * dtau * np.sin(dtheta + dphi) / denom
    if not np.isfinite(d0) or d0 <= 0:
        return PositionEstimate.failure("nonpositive", (i0, i1))

    bearing = est.aoa_rad[i0] + bs.orientation
    pos = bs.position + d0 * np.array([np.cos(bearing), np.sin(bearing)])
    if max_range_m is not None and np.hypot(*(pos - bs.position)) > max_range_m:
        return PositionEstimate.failure("out-of-coverage", (i0, i1))
    return PositionEstimate(pos, float(d0), (i0, i1), True)


def select_beam_pair(y) -> BeamSelection:
    """Beam pair maximizing total received power; first (m, s) wins ties."""
    ent = np.asarray(getattr(y, "entries", y))
    power = np.sum(np.abs(ent) ** 2, axis=2)
    m, s = np.unravel_index(int(np.argmax(power)), power.shape)
    return BeamSelection(int(m), int(s))


def _beam_gains(params, sel: BeamSelection, books: Codebooks, cfg: SystemConfig):
    b, c, d = factor_matrices(params, books, cfg)
    g = params.gains * b[sel.combiner_index, :] * c[sel.precoder_index, :]
    return d @ g


def achievable_rate(params, sel: BeamSelection, books: Codebooks, cfg: SystemConfig) -> RateReport:
    """Sum rate over subcarriers for a fixed beam pair on the true channel."""
    amp = _beam_gains(params, sel, books, cfg)
    snr = (np.abs(amp) ** 2) * cfg.energy_per_subcarrier / cfg.noise_psd_w_per_hz
    rate = cfg.subcarrier_spacing_hz * float(np.sum(np.log2(1.0 + snr)))
    return RateReport(rate, snr)


def perfect_csi_rate(params, cfg: SystemConfig) -> RateReport:
    """Upper bound with ideal per-subcarrier MRT/MRC beams.

    The best unit-norm combiner/precoder pair achieves the top singular
    value of each subcarrier's channel matrix. Tall steering factors are
    QR-reduced first so the SVD runs on L x L cores only.
    """
    a_rx = np.stack([ula_steering(cfg.n_rx, t) for t in params.aoa_rad], axis=1)
    a_tx = np.stack([ula_steering(cfg.n_tx, t) for t in params.aod_rad], axis=1)
    _, r_rx = np.linalg.qr(a_rx)
    _, r_tx = np.linalg.qr(a_tx)
    k = np.arange(cfg.n_subcarriers)
    d = np.exp(
        -2j * np.pi * cfg.subcarrier_spacing_hz * np.outer(k, params.delays_s)
    )
    cores = np.einsum("il,kl,jl->kij", r_rx, params.gains * d, r_tx)
    sigma = np.linalg.svd(cores, compute_uv=False)[:, 0]
    snr = sigma**2 * cfg.energy_per_subcarrier / cfg.noise_psd_w_per_hz
    rate = cfg.subcarrier_spacing_hz * float(np.sum(np.log2(1.0 + snr)))
    return RateReport(rate, snr)


def rate_heatmap(
    true_geom: ScenarioGeometry,
    gain_cfg: GainModelConfig,
    books: Codebooks,
    cfg: SystemConfig,
    xs,
    ys,
    sector_half_angle_rad: float = np.pi / 2,
    max_radius_m: float | None = None,
) -> np.ndarray:
    """Rate after oracle spoofing toward each candidate position.

    For every grid cell the fictitious scene is the true scene rigidly
    translated (scatterers co-move with the claimed UE), the spoof design
    gains take the candidate geometry's magnitudes with the trial's true
    phase draw, the BS re-selects beams on the spoofed signal, and the
    rate is evaluated on the physical channel with those beams. Cells
    outside the BS sector, beyond ``max_radius_m``, at the BS itself, or
    with a degenerate design are NaN. The cell at the true position reproduces the no-spoof rate
    exactly (the design degenerates to the all-ones pilot).

    Returns an array of shape (len(xs), len(ys)); entry [i, j] is the
    rate for candidate position (xs[i], ys[j]).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    true_params = forward_params(true_geom).with_gains(path_gains(true_geom, gain_cfg))
    h_true = channel_tensor(true_params, books, cfg)
    scatter = np.asarray(true_geom.scatter_points, dtype=float)

    rates = np.full((xs.size, ys.size), np.nan)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            cand = np.array([x, y])
            rel = cand - true_geom.bs.position
            if np.hypot(*rel) < 1e-9:
                continue
            if max_radius_m is not None and np.hypot(*rel) > max_radius_m:
                continue
            bearing = wrap_angle(np.arctan2(rel[1], rel[0]) - true_geom.bs.orientation)
            if abs(bearing) > sector_half_angle_rad:
                continue
            delta = cand - true_geom.ue.position
            spoof_geom = ScenarioGeometry(
                bs=true_geom.bs,
                ue=Pose2D(cand, true_geom.ue.orientation),
                scatter_points=scatter + delta[None, :],
                clock_bias_s=true_geom.clock_bias_s,
            )
            target = SpoofTarget(
                target_geometry=spoof_geom,
                target_params=forward_params(spoof_geom),
                design_gains=path_gains(spoof_geom, gain_cfg),
            )
            try:
                pilot = design_full_pilot_tensor(
                    true_params, true_params.gains, target, books, cfg
                )
            except SpoofDesignError:
                continue
            sel = select_beam_pair(h_true * pilot.entries)
            rates[i, j] = achievable_rate(true_params, sel, books, cfg).rate_bps
    return rates
