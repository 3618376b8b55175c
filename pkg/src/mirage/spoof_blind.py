"""Gain-blind spoofed pilot design.

Without knowledge of the complex path gains, exact spoofing is only
possible in special structures: a single path (entrywise ratio pilot), a
pure delay manipulation (adding delayed pilot replicas, which shifts or
multiplies delay peaks for every gain realization), or per-factor designs
composed as a Kronecker pilot. The multipath angle case is handled by a
bilinear alternating least-squares surrogate that is exact only when the
beam count is small relative to the path count; a solvability certificate
quantifies when that happens.

All designs here consume geometric parameters only; none take gains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import (
    Codebooks,
    PilotTensor,
    SystemConfig,
    delay_steering,
    factor_matrices,
    khatri_rao,
)
from .geometry import PathParameterSet
from .spoof_oracle import SpoofDesignError

__all__ = [
    "AlternatingConfig",
    "BlindAngleResult",
    "SolvabilityCertificate",
    "FakePathPlan",
    "BlindDesign",
    "blind_single_path_pilot",
    "blind_multipath_angle_pilot",
    "blind_impossibility_certificate",
    "fake_path_pilot",
    "make_tdoa_plan",
    "blind_kronecker_pilot",
    "design_blind_full",
]


@dataclass(frozen=True)
class AlternatingConfig:
    """Stopping rule for the bilinear alternating solver.

    Ten sweeps are plenty: the surrogate reaches its plateau within the
    first couple of iterations on well-conditioned instances.
    """

    max_iters: int = 10
    energy_budget: float | None = None
    convergence_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")


@dataclass(frozen=True)
class BlindAngleResult:
    """Alternating-solver output: pilot, path mixer, and convergence trace.

    ``mixer`` is the L x L matrix mapping target responses onto the spoofed
    signal; off-diagonal structure reports how the solver permuted or mixed
    paths (the solver does not enforce an ordering). ``residual_history``
    holds the surrogate cost after each full sweep, in pre-normalization
    units; ``zero_rows`` lists pilot entries forced to zero because the true
    dictionary row vanished.
    """

    pilot: np.ndarray
    mixer: np.ndarray
    residual_history: tuple
    zero_rows: tuple = ()


@dataclass(frozen=True)
class SolvabilityCertificate:
    """Exact-spoofability report for a blind multipath angle instance.

    The stacked homogeneous system has N*L equations in N + L*L unknowns
    (pilot entries plus mixer); a nontrivial exact solution is generically
    guaranteed iff N < L^2/(L-1). ``exact_*`` fields carry the null-space
    solution when one exists numerically; ``alternating_residual`` is the
    surrogate solver's floor on the same instance.
    """

    generically_solvable: bool
    null_space_dim: int
    min_singular_value: float
    alternating_residual: float
    exact_pilot: np.ndarray | None = None
    exact_mixer: np.ndarray | None = None
    exact_residual: float | None = None

    @property
    def residual(self) -> float:
        if self.exact_residual is not None:
            return min(self.exact_residual, self.alternating_residual)
        return self.alternating_residual


@dataclass(frozen=True)
class FakePathPlan:
    """Delayed pilot replicas: offsets and complex amplitudes.

    Applying this plan to a scene with L paths produces L * len(offsets)
    observable delay components at every true delay plus every offset.
    """

    delay_offsets_s: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        offs = np.atleast_1d(np.asarray(self.delay_offsets_s, dtype=float))
        amps = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        if offs.size < 1:
            raise ValueError("a fake-path plan needs at least one offset")
        if offs.size != amps.size:
            raise ValueError("offsets and amplitudes must have equal length")
        if np.unique(offs).size != offs.size:
            raise ValueError("delay offsets must be distinct")
        object.__setattr__(self, "delay_offsets_s", offs)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_replicas(self) -> int:
        return self.delay_offsets_s.size


@dataclass(frozen=True)
class BlindDesign:
    """Composed blind pilot plus per-factor solver diagnostics."""

    pilot: PilotTensor
    aoa_solve: BlindAngleResult | None = None
    aod_solve: BlindAngleResult | None = None
    joint_solve: BlindAngleResult | None = None
    plan: FakePathPlan | None = None


def blind_single_path_pilot(v_true: np.ndarray, v_spoof: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """Entrywise ratio pilot for a single path: diag(x) v_true = scale * v_spoof.

    Exact for every (unknown) gain since the scalar gain passes through the
    diagonal unchanged.
    """
    v_true = np.asarray(v_true, dtype=complex)
    mags = np.abs(v_true)
    if mags.min() < 1e-12:
        raise ValueError(
            f"true response entry {int(np.argmin(mags))} is zero; ratio pilot undefined"
        )
    return scale * np.asarray(v_spoof, dtype=complex) / v_true


def blind_multipath_angle_pilot(
    m_true: np.ndarray, m_spoof: np.ndarray, cfg: AlternatingConfig | None = None
) -> BlindAngleResult:
    """Alternating least squares on || m_spoof @ mixer - diag(x) m_true ||^2.

    Each sweep solves both blocks exactly: per-row closed form for the
    pilot given the mixer, then a normal-equations solve for the mixer
    given the pilot. The recorded residual is therefore non-increasing
    sweep over sweep. The mixer starts at identity. After convergence the
    pilot is scaled to the energy budget (default: its length), with the
    mixer scaled identically so the fitted relation is preserved.

    Rescaling inside each sweep would void the monotone guarantee (the
    rescaled pilot is not the constrained row optimum), so the positive
    scaling is applied exactly once, on return.
    """
    cfg = cfg or AlternatingConfig()
    b = np.asarray(m_true, dtype=complex)
    bs = np.asarray(m_spoof, dtype=complex)
    if b.shape != bs.shape or b.ndim != 2:
        raise ValueError("true and target dictionaries must share an (N, L) shape")
    n, l = b.shape
    if np.linalg.matrix_rank(bs) < l:
        raise ValueError("target dictionary must have full column rank")

    row_power = np.sum(np.abs(b) ** 2, axis=1)
    zero_rows = tuple(int(i) for i in np.nonzero(row_power == 0.0)[0])
    gram = bs.conj().T @ bs

    omega = np.eye(l, dtype=complex)
    history = []
    x = np.zeros(n, dtype=complex)
    for _ in range(cfg.max_iters):
        bo = bs @ omega
        with np.errstate(invalid="ignore", divide="ignore"):
            x = np.where(row_power > 0.0, np.sum(bo * b.conj(), axis=1) / row_power, 0.0)
        omega = np.linalg.solve(gram, bs.conj().T @ (x[:, None] * b))
        fitted = bs @ omega
        resid = float(np.linalg.norm(fitted - x[:, None] * b) ** 2)
        # An exact fit never satisfies a relative-change test, so floor it
        # against the fitted energy before the usual stagnation check.
        exact = resid <= 1e-26 * max(float(np.vdot(fitted, fitted).real), 1e-300)
        stalled = history and abs(history[-1] - resid) <= cfg.convergence_tol * max(
            history[-1], 1e-300
        )
        history.append(resid)
        if exact or stalled:
            break

    budget = float(n) if cfg.energy_budget is None else float(cfg.energy_budget)
    energy = float(np.vdot(x, x).real)
    if energy <= 0:
        raise ValueError("alternating solver produced a zero pilot (all rows zero?)")
    s = np.sqrt(budget / energy)
    return BlindAngleResult(x * s, omega * s, tuple(history), zero_rows)


def blind_impossibility_certificate(
    m_true: np.ndarray,
    m_spoof: np.ndarray,
    cfg: AlternatingConfig | None = None,
    rank_tol: float = 1e-9,
) -> SolvabilityCertificate:
    """Decide whether exact blind multipath spoofing exists for this instance.

    Stacks the bilinear constraints diag(x) m_true = m_spoof mixer into a
    homogeneous linear system in (x, vec(mixer)) and inspects its null
    space; any nonzero null vector has x != 0 when the target dictionary
    has full column rank, so a numerical null space certifies an exact
    pilot. Independently runs the alternating surrogate for its residual.
    """
    b = np.asarray(m_true, dtype=complex)
    bs = np.asarray(m_spoof, dtype=complex)
    n, l = b.shape

    # Row block for beam m: x_m * b[m, :] - mixer^T bs[m, :] = 0.
    a = np.zeros((n * l, n + l * l), dtype=complex)
    for m in range(n):
        rows = slice(m * l, (m + 1) * l)
        a[rows, m] = b[m, :]
        for j in range(l):
            # vec(mixer) is column-major: mixer[j, col] sits at n + col*l + j.
            for col in range(l):
                a[m * l + col, n + col * l + j] = -bs[m, j]

    svals = np.linalg.svd(a, compute_uv=False)
    smax = svals[0] if svals.size else 0.0
    n_unknown = n + l * l
    null_dim = int(np.sum(svals < rank_tol * max(smax, 1.0))) + max(0, n_unknown - n * l)

    alt = blind_multipath_angle_pilot(b, bs, cfg) if l >= 1 else None
    alt_resid = float(alt.residual_history[-1])

    exact_pilot = exact_mixer = exact_resid = None
    if null_dim >= 1:
        _, _, vh = np.linalg.svd(a)
        u = vh[-1].conj()
        exact_pilot = u[:n]
        exact_mixer = u[n:].reshape(l, l, order="F")
        exact_resid = float(
            np.linalg.norm(bs @ exact_mixer - exact_pilot[:, None] * b) ** 2
        )

    guaranteed = True if l == 1 else n < l * l / (l - 1)
    return SolvabilityCertificate(
        generically_solvable=bool(guaranteed),
        null_space_dim=null_dim,
        min_singular_value=float(svals[-1]) if svals.size else 0.0,
        alternating_residual=alt_resid,
        exact_pilot=exact_pilot,
        exact_mixer=exact_mixer,
        exact_residual=exact_resid,
    )


def fake_path_pilot(plan: FakePathPlan, k_count: int, spacing_hz: float) -> np.ndarray:
    """Subcarrier pilot that injects delayed copies of every true path.

    Sum of delay steering vectors at the plan offsets. Because delay
    steering vectors multiply into delay sums entrywise, the received delay
    profile becomes {tau_l + offset_i} with gains alpha_l * amplitude_i,
    whatever the unknown gains are. A single offset is a pure delay shift.
    """
    acc = np.zeros(k_count, dtype=complex)
    for off, amp in zip(plan.delay_offsets_s, plan.amplitudes):
        acc += amp * delay_steering(k_count, spacing_hz, off)
    return acc


def make_tdoa_plan(true_delays_s, target_delays_s) -> FakePathPlan:
    """Two-replica plan placing fake anchors at the target delay pair.

    Offsets are measured from the earliest true delay. The injected pair is
    only observable as the two earliest arrivals when its separation stays
    below the true path separation; a wider request is a hard error rather
    than a silently clamped plan.
    """
    true_sorted = np.sort(np.atleast_1d(np.asarray(true_delays_s, dtype=float)))
    tgt = np.sort(np.atleast_1d(np.asarray(target_delays_s, dtype=float)))
    if true_sorted.size < 2 or tgt.size != 2:
        raise ValueError("need two true delays and exactly two target anchors")
    sep_true = true_sorted[1] - true_sorted[0]
    sep_tgt = tgt[1] - tgt[0]
    if not sep_tgt < sep_true:
        raise ValueError(
            f"target anchor separation {sep_tgt:.3e} s must be smaller than the "
            f"true path separation {sep_true:.3e} s"
        )
    offsets = tgt - true_sorted[0]
    return FakePathPlan(offsets, np.full(2, 1.0 / np.sqrt(2.0), dtype=complex))


def blind_kronecker_pilot(x_b: np.ndarray, x_c: np.ndarray, x_d: np.ndarray) -> PilotTensor:
    """Rank-1 pilot tensor from per-factor designs (no rescaling applied).

    The spoofed signal then factors per path and per dimension, so each
    factor design acts independently of the others and of the gains.
    """
    x_b = np.asarray(x_b, dtype=complex)
    x_c = np.asarray(x_c, dtype=complex)
    x_d = np.asarray(x_d, dtype=complex)
    entries = x_b[:, None, None] * x_c[None, :, None] * x_d[None, None, :]
    return PilotTensor(entries, energy_budget=float(np.vdot(entries, entries).real))


def design_blind_full(
    true_params: PathParameterSet,
    target,
    books: Codebooks,
    cfg: SystemConfig,
    alt_cfg: AlternatingConfig | None = None,
    angles_only: bool = False,
    joint_angle: bool = False,
) -> BlindDesign:
    """Compose per-factor blind designs into a full pilot tensor.

    AoA and AoD factors use the exact ratio (single path) or the
    alternating surrogate (multipath); the delay factor injects fake
    anchors at the two earliest target delays (or a pure shift for a
    single path), or stays flat when ``angles_only`` is set. With
    ``joint_angle`` the two angle factors are replaced by one alternating
    solve over the combined (precoder x combiner) dictionary. The final
    tensor is scaled to the nominal energy budget M*S*K.

    ``target`` is a spoof target carrying the fictitious scene parameters;
    its design gains are ignored (this is the gain-blind path).
    """
    tgt_params: PathParameterSet = target.target_params
    l_true, l_tgt = true_params.n_paths, tgt_params.n_paths
    b, c, d = factor_matrices(true_params, books, cfg)
    bs, cs, ds = factor_matrices(tgt_params, books, cfg)

    aoa = aod = joint = None
    if l_true == 1 and l_tgt == 1:
        x_b = blind_single_path_pilot(b[:, 0], bs[:, 0])
        x_c = blind_single_path_pilot(c[:, 0], cs[:, 0])
        x_bc = None
    elif joint_angle:
        if l_tgt != l_true:
            raise SpoofDesignError("joint angle surrogate needs equal true/target path counts")
        joint = blind_multipath_angle_pilot(khatri_rao(c, b), khatri_rao(cs, bs), alt_cfg)
        x_bc = joint.pilot.reshape(cfg.n_precoders, cfg.n_combiners).T
        x_b = x_c = None
    else:
        if l_tgt != l_true:
            raise SpoofDesignError("blind angle surrogate needs equal true/target path counts")
        aoa = blind_multipath_angle_pilot(b, bs, alt_cfg)
        aod = blind_multipath_angle_pilot(c, cs, alt_cfg)
        x_b, x_c = aoa.pilot, aod.pilot
        x_bc = None

    plan = None
    if angles_only:
        x_d = np.ones(cfg.n_subcarriers, dtype=complex)
    elif l_true == 1 and l_tgt == 1:
        plan = FakePathPlan([tgt_params.delays_s[0] - true_params.delays_s[0]], [1.0])
        x_d = fake_path_pilot(plan, cfg.n_subcarriers, cfg.subcarrier_spacing_hz)
    else:
        anchors = np.sort(tgt_params.delays_s)[:2]
        plan = make_tdoa_plan(true_params.delays_s, anchors)
        x_d = fake_path_pilot(plan, cfg.n_subcarriers, cfg.subcarrier_spacing_hz)

    if x_bc is None:
        entries = x_b[:, None, None] * x_c[None, :, None] * x_d[None, None, :]
    else:
        entries = x_bc[:, :, None] * x_d[None, None, :]
    budget = float(entries.size)
    energy = float(np.vdot(entries, entries).real)
    if energy <= 0:
        raise ValueError("blind design produced a zero pilot")
    pilot = PilotTensor(entries * np.sqrt(budget / energy), energy_budget=budget)
    return BlindDesign(pilot=pilot, aoa_solve=aoa, aod_solve=aod, joint_solve=joint, plan=plan)
