"""Geometry forward map: frozen fixtures, gain model oracle, invariances.

Expected values were computed independently with 40-digit mpmath arithmetic
from the scene coordinates and frozen here.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mirage.geometry import (
    MIN_LEG_M,
    SPEED_OF_LIGHT,
    DegenerateGeometryError,
    GainModelConfig,
    PathParameterSet,
    Pose2D,
    ScenarioGeometry,
    forward_params,
    path_gains,
    perturb,
    wrap_angle,
)

C = SPEED_OF_LIGHT

# Reference scene: BS at the origin, UE at (10, 5), one scatterer at (7, -15).
TRUE_SCENE = ScenarioGeometry(
    bs=Pose2D([0.0, 0.0], 0.0),
    ue=Pose2D([10.0, 5.0], -2.0 * np.pi / 3.0),
    scatter_points=[[7.0, -15.0]],
)
# Fictitious scene used as the spoofing target throughout the suite.
SPOOF_SCENE = ScenarioGeometry(
    bs=Pose2D([0.0, 0.0], 0.0),
    ue=Pose2D([30.0, -20.0], np.pi / 2.0),
    scatter_points=[[40.0, -10.0]],
)

# mpmath-frozen expectations (meters and radians).
TRUE_CDELAY = [11.180339887498948, 36.776693773403533]
TRUE_AOA = [0.46364760900080612, -1.1341691669813553]
TRUE_AOD = [-0.58354994219579163, 0.37470882798880162]
SPOOF_CDELAY = [36.055512754639893, 55.373191879907556]
SPOOF_AOA = [-0.58800260354756755, -0.24497866312686415]
SPOOF_AOD = [0.98279372324732907, -0.78539816339744831]

GAIN_CFG = GainModelConfig(
    tx_power_w=10 ** (35 / 10 - 3),
    g_bs_lin=10 ** 0.7,
    g_ue_lin=10 ** 0.3,
    rcs_m2=50.0,
    carrier_hz=27.8e9,
    random_phase_seed=7,
)
# eta values at d0 = sqrt(125) m, f_c = 27.8 GHz (arbitrary-precision oracle).
ETA_DIRECT = 5.8914483278748e-09
ETA_BOUNCE = 2.6146788593099036e-11


def test_reference_scene_parameters():
    p = forward_params(TRUE_SCENE)
    np.testing.assert_allclose(C * p.delays_s, TRUE_CDELAY, atol=1e-9)
    np.testing.assert_allclose(p.aoa_rad, TRUE_AOA, atol=1e-12)
    np.testing.assert_allclose(p.aod_rad, TRUE_AOD, atol=1e-12)


def test_spoof_scene_parameters():
    p = forward_params(SPOOF_SCENE)
    np.testing.assert_allclose(C * p.delays_s, SPOOF_CDELAY, atol=1e-9)
    np.testing.assert_allclose(p.aoa_rad, SPOOF_AOA, atol=1e-12)
    np.testing.assert_allclose(p.aod_rad, SPOOF_AOD, atol=1e-12)


def test_boresight_ue_without_scatterers():
    geom = ScenarioGeometry(Pose2D([0.0, 0.0], 0.0), Pose2D([1.0, 0.0], 0.0))
    p = forward_params(geom)
    assert p.n_paths == 1
    assert p.delays_s[0] == pytest.approx(1.0 / C, rel=1e-15)
    assert p.aoa_rad[0] == 0.0


def test_clock_bias_shifts_all_delays_uniformly():
    base = forward_params(TRUE_SCENE)
    shifted = forward_params(
        ScenarioGeometry(TRUE_SCENE.bs, TRUE_SCENE.ue, TRUE_SCENE.scatter_points, 3.7e-8)
    )
    np.testing.assert_allclose(shifted.delays_s - base.delays_s, 3.7e-8, rtol=1e-12)
    # Differences between paths are bias-free.
    np.testing.assert_allclose(
        np.diff(shifted.delays_s), np.diff(base.delays_s), rtol=0, atol=1e-22
    )


def test_orientation_only_moves_own_side():
    rot_ue = ScenarioGeometry(
        TRUE_SCENE.bs, Pose2D(TRUE_SCENE.ue.position, 0.4), TRUE_SCENE.scatter_points
    )
    rot_bs = ScenarioGeometry(
        Pose2D(TRUE_SCENE.bs.position, -0.9), TRUE_SCENE.ue, TRUE_SCENE.scatter_points
    )
    base = forward_params(TRUE_SCENE)
    np.testing.assert_allclose(forward_params(rot_ue).aoa_rad, base.aoa_rad, atol=1e-15)
    np.testing.assert_allclose(forward_params(rot_bs).aod_rad, base.aod_rad, atol=1e-15)


def test_degenerate_geometry_errors():
    with pytest.raises(DegenerateGeometryError):
        forward_params(ScenarioGeometry(Pose2D([0.0, 0.0]), Pose2D([0.0, MIN_LEG_M / 3])))
    with pytest.raises(DegenerateGeometryError):
        ScenarioGeometry(Pose2D([0.0, 0.0]), Pose2D([10.0, 5.0]), [[10.0, 5.0]])


def test_path_zero_must_have_smallest_delay():
    with pytest.raises(ValueError):
        PathParameterSet([2e-8, 1e-8], [0.1, 0.2], [0.3, 0.4])


@pytest.mark.parametrize(
    "x, expected",
    [
        (0.0, 0.0),
        (3.0 * np.pi / 2.0, -np.pi / 2.0),
        (-4.0 * np.pi / 3.0, 2.0 * np.pi / 3.0),
        (np.pi, np.pi),
        (-np.pi, np.pi),
        (2.0 * np.pi, 0.0),
    ],
)
def test_wrap_angle_fixed_points(x, expected):
    assert wrap_angle(x) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-50.0, 50.0))
def test_wrap_angle_is_congruent_mod_2pi(x):
    w = wrap_angle(x)
    assert -np.pi < w <= np.pi + 1e-12
    k = (x - w) / (2.0 * np.pi)
    assert abs(k - round(k)) < 1e-9


def test_gain_magnitudes_match_frozen_etas():
    g = path_gains(TRUE_SCENE, GAIN_CFG)
    expected = np.sqrt(
        np.array([ETA_DIRECT, ETA_BOUNCE]) * GAIN_CFG.g_bs_lin * GAIN_CFG.g_ue_lin
    )
    np.testing.assert_allclose(np.abs(g), expected, rtol=1e-12)


def test_gain_inverse_square_law():
    # Doubling the BS-UE distance quarters the direct-path power.
    far = ScenarioGeometry(TRUE_SCENE.bs, Pose2D([20.0, 10.0], 0.0), [[7.0, -15.0]])
    g_near = np.abs(path_gains(TRUE_SCENE, GAIN_CFG)[0]) ** 2
    g_far = np.abs(path_gains(far, GAIN_CFG)[0]) ** 2
    assert g_near / g_far == pytest.approx(4.0, rel=1e-12)


def test_gain_phases_deterministic_and_uniform():
    a = path_gains(TRUE_SCENE, GAIN_CFG)
    b = path_gains(TRUE_SCENE, GAIN_CFG)
    np.testing.assert_array_equal(a, b)
    # Phases over many independent draws fill [0, 2pi) roughly uniformly.
    rng = np.random.default_rng(123)
    phases = np.concatenate(
        [np.angle(path_gains(TRUE_SCENE, GAIN_CFG, rng)) for _ in range(2000)]
    )
    hist, _ = np.histogram(phases, bins=8, range=(-np.pi, np.pi))
    assert hist.min() > 0.8 * phases.size / 8
    assert hist.max() < 1.2 * phases.size / 8


def test_perturb_zero_sigma_is_identity():
    rng = np.random.default_rng(0)
    out = perturb(TRUE_SCENE, 0.0, 0.0, rng)
    np.testing.assert_array_equal(out.ue.position, TRUE_SCENE.ue.position)
    np.testing.assert_array_equal(out.scatter_points, TRUE_SCENE.scatter_points)


def test_perturb_reproducible_and_calibrated():
    a = perturb(TRUE_SCENE, 1.0, 0.1, np.random.default_rng(42))
    b = perturb(TRUE_SCENE, 1.0, 0.1, np.random.default_rng(42))
    np.testing.assert_array_equal(a.ue.position, b.ue.position)
    np.testing.assert_array_equal(a.scatter_points, b.scatter_points)

    rng = np.random.default_rng(3)
    offsets = np.array(
        [perturb(TRUE_SCENE, 1.0, 0.1, rng).ue.position - TRUE_SCENE.ue.position
         for _ in range(10_000)]
    )
    assert abs(offsets.std() - 1.0) < 0.05


@settings(max_examples=60, deadline=None)
@given(
    ue=st.tuples(st.floats(-80, 80), st.floats(-80, 80)),
    sp=st.tuples(st.floats(-80, 80), st.floats(-80, 80)),
)
def test_bounce_delay_never_beats_direct_delay(ue, sp):
    bs = np.zeros(2)
    ue = np.asarray(ue)
    sp = np.asarray(sp)
    if min(
        np.linalg.norm(ue - bs), np.linalg.norm(sp - bs), np.linalg.norm(sp - ue)
    ) < 1e-3:
        return
    p = forward_params(ScenarioGeometry(Pose2D(bs), Pose2D(ue), [sp]))
    assert p.delays_s[1] >= p.delays_s[0] - 1e-18
