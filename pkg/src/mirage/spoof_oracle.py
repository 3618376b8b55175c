"""Gain-aware spoofed pilot design.

A transmitter that knows both its true path parameters and the complex path
gains can pick pilot entries so that the noise-free received signal equals,
exactly, the signal of a fictitious scene. The designs divide the target
signal by the true signal entrywise; they exist whenever the true signal
has no zero entries, and the result is exact, not approximate.

Three granularities share one construction: a single N-dimensional factor
(AoA, AoD or delay subspace swap), the joint (combiner x precoder) angle
matrix, and the full (M, S, K) pilot tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Codebooks, PilotTensor, SystemConfig, channel_tensor, factor_matrices
from .geometry import GainModelConfig, PathParameterSet, ScenarioGeometry, forward_params, path_gains

__all__ = [
    "ZERO_DENOMINATOR",
    "SpoofDesignError",
    "SpoofTarget",
    "SpoofPilot",
    "SpoofResidual",
    "design_subspace_pilot",
    "design_joint_angle_pilot",
    "design_full_pilot_tensor",
    "spoof_residual",
]

# Entries of the true noise-free signal below this modulus make the
# entrywise division meaningless; designs fail hard instead of regularizing.
ZERO_DENOMINATOR = 1e-12


class SpoofDesignError(ValueError):
    """The requested pilot design does not exist for these inputs."""


@dataclass(frozen=True)
class SpoofTarget:
    """Fictitious scene the spoofed signal should appear to come from.

    ``design_gains`` play the role of the target's path gains; they are a
    free design choice (the victim cannot verify them) and only their
    relative values matter once the pilot energy is normalized.
    """

    target_geometry: ScenarioGeometry
    target_params: PathParameterSet
    design_gains: np.ndarray

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.design_gains, dtype=complex))
        if g.shape != (self.target_params.n_paths,):
            raise ValueError("design gains must match the target path count")
        if not np.any(g):
            raise ValueError("design gains must not all be zero")
        object.__setattr__(self, "design_gains", g)

    @classmethod
    def from_geometry(
        cls,
        geom: ScenarioGeometry,
        design_gains=None,
        gain_cfg: GainModelConfig | None = None,
        rng=None,
    ) -> "SpoofTarget":
        """Derive target parameters from a scene; gains from an explicit
        vector, from the link-budget model, or all-ones in that order."""
        params = forward_params(geom)
        if design_gains is None:
            if gain_cfg is not None:
                design_gains = path_gains(geom, gain_cfg, rng)
            else:
                design_gains = np.ones(params.n_paths, dtype=complex)
        return cls(geom, params, design_gains)


@dataclass(frozen=True)
class SpoofPilot(PilotTensor):
    """Pilot tensor plus the effective target gains after energy scaling.

    The spoofed noise-free signal equals the target-scene signal with gains
    ``effective_gains`` (the design gains times the normalization scale).
    """

    effective_gains: np.ndarray | None = None


@dataclass(frozen=True)
class SpoofResidual:
    """Squared distance between a spoofed signal and a candidate model."""

    value: float

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value >= 0):
            raise ValueError("residual must be finite and nonnegative")

    def __float__(self) -> float:
        return self.value


def _check_denominator(denom: np.ndarray, what: str) -> None:
    flat = np.abs(np.asarray(denom).reshape(-1))
    idx = int(np.argmin(flat))
    if flat[idx] < ZERO_DENOMINATOR:
        if np.ndim(denom) == 1:
            where = idx
        else:
            where = tuple(int(i) for i in np.unravel_index(idx, np.shape(denom)))
        raise SpoofDesignError(
            f"true {what} entry {where} has modulus {flat[idx]:.3e}; "
            "the entrywise design does not exist (re-draw codebooks or gains)"
        )


def _energy_scale(raw: np.ndarray, budget: float) -> float:
    energy = float(np.vdot(raw, raw).real)
    if energy <= 0:
        raise SpoofDesignError("designed pilot has zero energy")
    return float(np.sqrt(budget / energy))


def design_subspace_pilot(
    m_true: np.ndarray,
    gains: np.ndarray,
    m_spoof: np.ndarray,
    lam: np.ndarray,
    energy_budget: float | None = None,
    normalize: bool = True,
) -> np.ndarray:
    """Single-factor pilot: diag(pilot) @ m_true @ gains == m_spoof @ lam'.

    ``m_true`` / ``m_spoof`` are N x L dictionaries of the true and target
    responses in one domain (beamspace AoA, beamspace AoD, or delay), and
    lam' is ``lam`` times the energy normalization scale. The identity is
    exact by construction.
    """
    m_true = np.asarray(m_true, dtype=complex)
    denom = m_true @ np.asarray(gains, dtype=complex)
    _check_denominator(denom, "signal")
    raw = (np.asarray(m_spoof, dtype=complex) @ np.asarray(lam, dtype=complex)) / denom
    if not normalize:
        return raw
    budget = float(m_true.shape[0]) if energy_budget is None else float(energy_budget)
    return raw * _energy_scale(raw, budget)


def design_joint_angle_pilot(
    b_true: np.ndarray,
    c_true: np.ndarray,
    gains: np.ndarray,
    b_spoof: np.ndarray,
    c_spoof: np.ndarray,
    lam: np.ndarray,
    energy_budget: float | None = None,
    normalize: bool = True,
) -> np.ndarray:
    """Joint AoA/AoD pilot matrix: (b_spoof L c_spoof^T) / (b_true G c_true^T).

    Entrywise division of the two bilinear beamspace images (G, L carry the
    gains on their diagonals). Equivalent to the vectorized single-factor
    design on the column-wise Kronecker dictionary.
    """
    gains = np.asarray(gains, dtype=complex)
    lam = np.asarray(lam, dtype=complex)
    denom = (np.asarray(b_true, complex) * gains) @ np.asarray(c_true, complex).T
    _check_denominator(denom, "angle image")
    raw = (np.asarray(b_spoof, complex) * lam) @ np.asarray(c_spoof, complex).T / denom
    if not normalize:
        return raw
    budget = float(raw.size) if energy_budget is None else float(energy_budget)
    return raw * _energy_scale(raw, budget)


def design_full_pilot_tensor(
    true_params: PathParameterSet,
    gains: np.ndarray,
    target: SpoofTarget,
    books: Codebooks,
    cfg: SystemConfig,
    energy_budget: float | None = None,
    normalize: bool = True,
) -> SpoofPilot:
    """Full (M, S, K) pilot making the received tensor match the target scene.

    Computes the target and true noise-free tensors without the common
    per-subcarrier energy factor (it cancels) and divides entrywise, then
    scales to the energy budget (default: the nominal pilot energy M*S*K).
    The returned pilot satisfies H(true) o X == H(target, effective_gains)
    exactly in exact arithmetic.

    Raises
    ------
    SpoofDesignError
        If any true-signal entry is (near) zero, or the target path count
        differs from the true one (the closed-form design needs a
        one-to-one path correspondence; use the blind designs otherwise).
    """
    gains = np.atleast_1d(np.asarray(gains, dtype=complex))
    if target.target_params.n_paths != true_params.n_paths:
        raise SpoofDesignError(
            f"target has {target.target_params.n_paths} paths but the true scene has "
            f"{true_params.n_paths}; the gain-aware design requires equal counts"
        )
    b, c, d = factor_matrices(true_params, books, cfg)
    bs, cs, ds = factor_matrices(target.target_params, books, cfg)
    denom = np.einsum("l,ml,sl,kl->msk", gains, b, c, d, optimize=True)
    _check_denominator(denom, "tensor")
    numer = np.einsum("l,ml,sl,kl->msk", target.design_gains, bs, cs, ds, optimize=True)
    raw = numer / denom
    if normalize:
        budget = float(raw.size) if energy_budget is None else float(energy_budget)
        scale = _energy_scale(raw, budget)
    else:
        budget = float(np.vdot(raw, raw).real)
        scale = 1.0
    return SpoofPilot(
        entries=raw * scale,
        energy_budget=budget,
        effective_gains=target.design_gains * scale,
    )


def spoof_residual(
    pilot,
    true_params: PathParameterSet,
    gains: np.ndarray,
    candidate_params: PathParameterSet,
    candidate_gains: np.ndarray,
    books: Codebooks,
    cfg: SystemConfig,
) -> SpoofResidual:
    """Squared model mismatch of the spoofed signal at a candidate scene.

    Value is || H(true) o pilot - H(candidate) ||^2 where the candidate
    side uses the nominal all-ones pilot. Zero means the spoofed signal is
    indistinguishable from a genuine transmission at the candidate.
    """
    x = pilot.entries if isinstance(pilot, PilotTensor) else np.asarray(pilot, dtype=complex)
    h_true = channel_tensor(true_params.with_gains(gains), books, cfg)
    h_cand = channel_tensor(candidate_params.with_gains(candidate_gains), books, cfg)
    diff = h_true * x - h_cand
    return SpoofResidual(float(np.vdot(diff, diff).real))
