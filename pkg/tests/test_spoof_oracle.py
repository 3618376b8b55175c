"""Gain-aware pilot designs: substitution oracles and exactness checks."""

import numpy as np
import pytest

from mirage.channel import (
    PilotTensor,
    SystemConfig,
    build_codebooks,
    channel_tensor,
    factor_matrices,
    khatri_rao,
    thermal_noise_psd,
    ula_steering,
)
from mirage.geometry import PathParameterSet, Pose2D, ScenarioGeometry, forward_params
from mirage.spoof_oracle import (
    SpoofDesignError,
    SpoofTarget,
    design_full_pilot_tensor,
    design_joint_angle_pilot,
    design_subspace_pilot,
    spoof_residual,
)

TRUE_SCENE = ScenarioGeometry(
    Pose2D([0.0, 0.0], 0.0), Pose2D([10.0, 5.0], -2 * np.pi / 3), [[7.0, -15.0]]
)
SPOOF_SCENE = ScenarioGeometry(
    Pose2D([0.0, 0.0], 0.0), Pose2D([30.0, -20.0], np.pi / 2), [[40.0, -10.0]]
)


def cfg_for(k=64, n_rx=24, n_tx=16):
    return SystemConfig(
        n_rx=n_rx, n_tx=n_tx, n_combiners=n_rx, n_precoders=n_tx, n_subcarriers=k,
        subcarrier_spacing_hz=120e3, carrier_hz=27.8e9,
        noise_psd_w_per_hz=thermal_noise_psd(), tx_power_w=10 ** (35 / 10 - 3),
    )


def random_instance(rng, n=16, n_paths=2):
    m_true = rng.standard_normal((n, n_paths)) + 1j * rng.standard_normal((n, n_paths))
    m_spoof = rng.standard_normal((n, n_paths)) + 1j * rng.standard_normal((n, n_paths))
    gains = rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)
    lam = rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)
    return m_true, m_spoof, gains, lam


def test_subspace_pilot_identity_on_random_instances():
    rng = np.random.default_rng(2)
    for _ in range(20):
        m_true, m_spoof, gains, lam = random_instance(rng)
        x = design_subspace_pilot(m_true, gains, m_spoof, lam)
        lhs = x * (m_true @ gains)
        rhs = m_spoof @ lam
        # Energy scaling multiplies lam by a single positive scalar.
        scale = np.vdot(rhs, lhs) / np.vdot(rhs, rhs)
        assert scale.imag == pytest.approx(0.0, abs=1e-10 * abs(scale))
        assert scale.real > 0
        np.testing.assert_allclose(lhs, scale * rhs, rtol=1e-10)
        assert np.vdot(x, x).real == pytest.approx(m_true.shape[0], rel=1e-12)


def test_subspace_pilot_trivial_is_all_ones():
    rng = np.random.default_rng(5)
    m_true, _, gains, _ = random_instance(rng)
    x = design_subspace_pilot(m_true, gains, m_true, gains)
    np.testing.assert_allclose(x, np.ones(m_true.shape[0]), rtol=1e-12)


def test_subspace_pilot_zero_entry_reports_index():
    m_true = np.ones((4, 1), dtype=complex)
    m_true[2, 0] = 0.0
    with pytest.raises(SpoofDesignError, match="entry 2"):
        design_subspace_pilot(m_true, [1.0], np.ones((4, 1)), [1.0])


def test_aoa_spoof_moves_mf_peak_and_suppresses_truth():
    # Beamspace AoA swap with the square 24-beam codebook: the matched
    # filter spectrum of the spoofed signal peaks at the target angles and
    # shows only sidelobe-level energy at the true ones.
    cfg = cfg_for()
    books = build_codebooks(cfg)
    true_p = forward_params(TRUE_SCENE)
    spoof_p = forward_params(SPOOF_SCENE)
    rng = np.random.default_rng(8)
    gains = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    b_true = books.combiners.conj().T @ np.stack(
        [ula_steering(cfg.n_rx, t) for t in true_p.aoa_rad], axis=1
    )
    b_spoof = books.combiners.conj().T @ np.stack(
        [ula_steering(cfg.n_rx, t) for t in spoof_p.aoa_rad], axis=1
    )
    x = design_subspace_pilot(b_true, gains, b_spoof, np.array([1.0, 0.8]))
    y = x * (b_true @ gains)

    grid = np.arange(-np.pi / 2, np.pi / 2, 1e-3)
    elem = np.exp(1j * np.pi * np.arange(cfg.n_rx)[:, None] * np.sin(grid)[None, :])
    dic = books.combiners.conj().T @ elem
    power = np.abs(dic.conj().T @ y) ** 2 / np.linalg.norm(dic, axis=0) ** 2
    peak = grid[np.argmax(power)]
    assert min(abs(peak - spoof_p.aoa_rad[0]), abs(peak - spoof_p.aoa_rad[1])) < 2e-3
    at_true = power[np.argmin(np.abs(grid - true_p.aoa_rad[0]))]
    assert at_true < 0.2 * power.max()


def test_joint_matrix_equals_vectorized_route():
    cfg = cfg_for(n_rx=6, n_tx=4)
    books = build_codebooks(cfg)
    rng = np.random.default_rng(3)
    true_p = forward_params(TRUE_SCENE)
    spoof_p = forward_params(SPOOF_SCENE)
    gains = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    lam = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    b, c, _ = factor_matrices(true_p.with_gains(gains), books, cfg)
    bs, cs, _ = factor_matrices(spoof_p, books, cfg)

    x_mat = design_joint_angle_pilot(b, c, gains, bs, cs, lam)
    x_vec = design_subspace_pilot(
        khatri_rao(c, b), gains, khatri_rao(cs, bs), lam,
        energy_budget=float(x_mat.size),
    )
    np.testing.assert_allclose(x_mat.T.reshape(-1), x_vec, rtol=1e-10)


def test_joint_design_grid_search_lands_on_target():
    cfg = cfg_for(n_rx=12, n_tx=8)
    books = build_codebooks(cfg)
    rng = np.random.default_rng(4)
    true_p = forward_params(TRUE_SCENE)
    spoof_p = forward_params(SPOOF_SCENE)
    gains = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    b, c, _ = factor_matrices(true_p, books, cfg)
    bs, cs, _ = factor_matrices(spoof_p, books, cfg)
    x = design_joint_angle_pilot(b, c, gains, bs, cs, np.array([1.0, 0.6]))
    y = x * ((b * gains) @ c.T)

    thetas = np.linspace(-1.5, 1.5, 121)
    phis = np.linspace(-1.5, 1.5, 121)
    best, best_cell = -1.0, None
    for th in thetas:
        bt = books.combiners.conj().T @ ula_steering(cfg.n_rx, th)
        for ph in phis:
            ct = books.precoders.conj().T @ ula_steering(cfg.n_tx, ph)
            val = np.abs(bt.conj() @ y @ ct.conj()) ** 2 / (
                np.linalg.norm(bt) ** 2 * np.linalg.norm(ct) ** 2
            )
            if val > best:
                best, best_cell = val, (th, ph)
    d_th = min(abs(best_cell[0] - spoof_p.aoa_rad[l]) for l in range(2))
    d_ph = min(abs(best_cell[1] - spoof_p.aod_rad[l]) for l in range(2))
    step = thetas[1] - thetas[0]
    assert d_th <= step and d_ph <= step


def test_full_tensor_design_is_exact():
    cfg = cfg_for(k=64)
    books = build_codebooks(cfg)
    rng = np.random.default_rng(12)
    true_p = forward_params(TRUE_SCENE)
    gains = 1e-4 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
    target = SpoofTarget.from_geometry(SPOOF_SCENE)
    pilot = design_full_pilot_tensor(true_p, gains, target, books, cfg)

    h_true = channel_tensor(true_p.with_gains(gains), books, cfg)
    h_target = channel_tensor(
        target.target_params.with_gains(pilot.effective_gains), books, cfg
    )
    np.testing.assert_allclose(h_true * pilot.entries, h_target, rtol=1e-10)
    assert pilot.energy == pytest.approx(float(np.prod(cfg.tensor_shape)), rel=1e-12)

    res = spoof_residual(
        pilot, true_p, gains, target.target_params, pilot.effective_gains, books, cfg
    )
    h_energy = float(np.vdot(h_target, h_target).real)
    assert res.value < 1e-9 * h_energy


def test_full_tensor_design_trivial_target():
    cfg = cfg_for(k=16, n_rx=8, n_tx=4)
    books = build_codebooks(cfg)
    rng = np.random.default_rng(21)
    true_p = forward_params(TRUE_SCENE)
    gains = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    target = SpoofTarget(TRUE_SCENE, true_p, gains)
    pilot = design_full_pilot_tensor(true_p, gains, target, books, cfg)
    np.testing.assert_allclose(pilot.entries, np.ones(cfg.tensor_shape), rtol=1e-12)


def test_full_tensor_design_scale_covariance():
    cfg = cfg_for(k=8, n_rx=6, n_tx=4)
    books = build_codebooks(cfg)
    rng = np.random.default_rng(31)
    true_p = forward_params(TRUE_SCENE)
    gains = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    t1 = SpoofTarget.from_geometry(SPOOF_SCENE, design_gains=[1.0, 0.5])
    t2 = SpoofTarget.from_geometry(SPOOF_SCENE, design_gains=[3.0, 1.5])
    p1 = design_full_pilot_tensor(true_p, gains, t1, books, cfg, normalize=False)
    p2 = design_full_pilot_tensor(true_p, gains, t2, books, cfg, normalize=False)
    np.testing.assert_allclose(p2.entries, 3.0 * p1.entries, rtol=1e-12)


def test_full_tensor_reduces_to_subspace_design():
    # K = 1 and S = 1 collapses the tensor design onto the AoA factor.
    cfg = SystemConfig(
        n_rx=8, n_tx=1, n_combiners=8, n_precoders=1, n_subcarriers=1,
        subcarrier_spacing_hz=120e3, carrier_hz=27.8e9,
        noise_psd_w_per_hz=0.0, tx_power_w=1.0,
    )
    books = build_codebooks(cfg)
    true_p = forward_params(TRUE_SCENE)
    rng = np.random.default_rng(41)
    gains = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    target = SpoofTarget.from_geometry(SPOOF_SCENE, design_gains=[1.0, 0.7])
    full = design_full_pilot_tensor(true_p, gains, target, books, cfg)

    b, c, d = factor_matrices(true_p, books, cfg)
    bs, cs, ds = factor_matrices(target.target_params, books, cfg)
    m_true = b * (c[0] * d[0])  # absorb the scalar S/K factors
    m_spoof = bs * (cs[0] * ds[0])
    x = design_subspace_pilot(m_true, gains, m_spoof, target.design_gains)
    np.testing.assert_allclose(full.entries.reshape(-1), x, rtol=1e-10)


def test_full_tensor_zero_denominator_reports_index():
    # sin(theta) = 1/12 puts the single path exactly on a 24-point DFT null
    # for every beam except one, so the division must fail loudly.
    cfg = cfg_for(k=4)
    books = build_codebooks(cfg)
    params = PathParameterSet([1e-7], [float(np.arcsin(1.0 / 12.0))], [0.3])
    target = SpoofTarget.from_geometry(SPOOF_SCENE, design_gains=[1.0, 1.0])
    with pytest.raises(SpoofDesignError):
        design_full_pilot_tensor(params, np.array([1.0]), target, books, cfg)


def test_path_count_mismatch_is_rejected():
    cfg = cfg_for(k=8, n_rx=6, n_tx=4)
    books = build_codebooks(cfg)
    one_sp = forward_params(TRUE_SCENE)
    no_sp = SpoofTarget.from_geometry(
        ScenarioGeometry(Pose2D([0.0, 0.0]), Pose2D([30.0, -20.0], np.pi / 2))
    )
    with pytest.raises(SpoofDesignError, match="path"):
        design_full_pilot_tensor(one_sp, np.ones(2), no_sp, books, cfg)


def test_spoof_residual_cases():
    cfg = cfg_for(k=16, n_rx=8, n_tx=4)
    books = build_codebooks(cfg)
    rng = np.random.default_rng(51)
    true_p = forward_params(TRUE_SCENE)
    gains = rng.standard_normal(2) + 1j * rng.standard_normal(2)

    ones = PilotTensor.nominal(cfg)
    assert spoof_residual(ones, true_p, gains, true_p, gains, books, cfg).value == 0.0

    wrong = forward_params(SPOOF_SCENE)
    val = spoof_residual(ones, true_p, gains, wrong, gains, books, cfg).value
    assert val > 0.0
