import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.spatial import Delaunay

from palmsense.errors import InsufficientData
from palmsense.localization import (
    activation,
    betas,
    calibrate_baseline,
    detect_contact,
    estimate_position,
    estimate_positions,
)
from palmsense.simulator import ContactCommand, PalmSimulator, SimConfig
from palmsense.types import CalibrationProfile, TactileFrame, geometry_default

GEOM = geometry_default()


def frame_with(values):
    return TactileFrame.at(0, [int(round(v)) for v in values])


# -- calibration ------------------------------------------------------------

def test_identical_idle_frames_hit_sigma_floor():
    profile = calibrate_baseline([frame_with([500] * 16)] * 100)
    assert np.all(profile.baselines == 500)
    assert np.all(profile.variations == 1.0)
    assert profile.sample_count == 100


def test_two_point_alternation_gives_population_std():
    frames = [frame_with([498 if i % 2 else 502] * 16) for i in range(100)]
    profile = calibrate_baseline(frames)
    assert np.allclose(profile.baselines, 500.0)
    assert np.allclose(profile.variations, 2.0)


def test_too_few_idle_frames():
    with pytest.raises(InsufficientData):
        calibrate_baseline([frame_with([500] * 16)] * 49)


# -- activation -------------------------------------------------------------

def test_zero_deviation_is_exactly_zero(flat_profile):
    act = activation(frame_with([300] * 16), flat_profile)
    assert np.all(act.betas == 0.0)
    assert act.m == 0


def test_beta_at_one_sigma():
    profile = CalibrationProfile(np.full(16, 300.0), np.full(16, 4.0))
    b = betas(np.full(16, 304.0), profile)
    assert np.allclose(b, 1 - math.exp(-2), atol=1e-12, rtol=0)


def test_single_channel_far_above_gate(flat_profile):
    values = [300] * 16
    values[5] = 310
    act = activation(frame_with(values), flat_profile)
    assert act.activated == (5,)


def test_detect_contact(flat_profile):
    assert not detect_contact(frame_with([300] * 16), flat_profile)
    values = [300] * 16
    values[0] = 310
    assert detect_contact(frame_with(values), flat_profile)


def test_two_sigma_everywhere_stays_below_gate():
    profile = CalibrationProfile(np.full(16, 300.0), np.full(16, 2.0))
    assert not detect_contact(frame_with([304] * 16), profile)
    assert detect_contact(frame_with([307] + [300] * 15), profile)


@given(st.floats(0, 50), st.floats(0.01, 50), st.floats(0.5, 20))
def test_beta_monotone_in_deviation(d, extra, sigma):
    profile = CalibrationProfile(np.full(16, 2000.0), np.full(16, sigma))
    lo = betas(np.full(16, 2000.0 + d), profile)[0]
    hi = betas(np.full(16, 2000.0 + d + extra), profile)[0]
    assert 0.0 <= lo <= hi <= 1.0
    if 2 * (d + extra) ** 2 / sigma ** 2 < 30:
        assert hi < 1.0 and lo < hi


# -- position ---------------------------------------------------------------

def test_single_activated_electrode(flat_profile, geometry):
    values = [300] * 16
    values[6] = 320
    est = estimate_position(frame_with(values), flat_profile, geometry)
    assert est.position == geometry.sensing_positions[6]
    assert est.weights == (1.0,)


def test_equal_pair_gives_midpoint(flat_profile, geometry):
    values = [300] * 16
    values[5] = values[6] = 320
    est = estimate_position(frame_with(values), flat_profile, geometry)
    p5, p6 = np.array(geometry.sensing_positions[5]), np.array(geometry.sensing_positions[6])
    assert np.allclose(est.position, (p5 + p6) / 2, atol=1e-12)


def test_no_contact_is_explicit(flat_profile, geometry):
    est = estimate_position(frame_with([300] * 16), flat_profile, geometry)
    assert est.position is None and est.activated == () and not est.in_contact


def test_noiseless_press_on_grid_point(flat_profile, geometry):
    sim = PalmSimulator(SimConfig(noise_std=0.0))
    frame, _ = sim.simulate_frame(ContactCommand((5.0, 5.0), 1.0))
    est = estimate_position(frame, flat_profile, geometry)
    assert math.dist(est.position, (5.0, 5.0)) < 2.7


def test_vectorized_matches_scalar(flat_profile, geometry):
    sim = PalmSimulator(SimConfig(noise_std=2.0, rng_seed=3))
    rng = np.random.default_rng(4)
    frames = [sim.simulate_frame(ContactCommand(tuple(rng.uniform(-12, 12, 2)), rng.uniform(0, 0.3)), i)[0]
              for i in range(50)]
    block = np.array([f.channels for f in frames], dtype=float)
    vec = estimate_positions(block, flat_profile, geometry)
    for f, row in zip(frames, vec):
        est = estimate_position(f, flat_profile, geometry)
        if est.position is None:
            assert np.all(np.isnan(row))
        else:
            assert np.allclose(est.position, row, atol=1e-12)


deviations_st = st.lists(st.integers(-300, 2000), min_size=16, max_size=16)


def _frame_from_dev(dev):
    return frame_with([min(4095, max(0, 1000 + d)) for d in dev])


@pytest.fixture(scope="module")
def noisy_profile():
    return CalibrationProfile(np.full(16, 1000.0), np.full(16, 2.5))


@given(dev=deviations_st)
def test_weights_form_a_convex_combination(noisy_profile, dev):
    est = estimate_position(_frame_from_dev(dev), noisy_profile, GEOM)
    assume(est.in_contact)
    w = np.array(est.weights)
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-9
    pts = GEOM.positions[list(est.activated)]
    assert np.allclose(w @ pts, est.position, atol=1e-9)
    lo, hi = pts.min(axis=0) - 1e-9, pts.max(axis=0) + 1e-9
    assert np.all(est.position >= lo) and np.all(est.position <= hi)
    if len(est.activated) >= 3 and np.linalg.matrix_rank(pts - pts[0]) == 2:
        assert Delaunay(pts).find_simplex(np.array(est.position), tol=1e-9) >= 0


@given(dev=deviations_st, tx=st.floats(-5, 5), ty=st.floats(-5, 5))
def test_translation_equivariance(noisy_profile, dev, tx, ty):
    frame = _frame_from_dev(dev)
    base = estimate_position(frame, noisy_profile, GEOM)
    moved = estimate_position(frame, noisy_profile, GEOM.translated((tx, ty)))
    assume(base.in_contact)
    assert np.allclose(np.array(moved.position) - base.position, (tx, ty), atol=1e-9)


@given(dev=deviations_st, perm=st.permutations(range(16)))
def test_permutation_consistency(noisy_profile, dev, perm):
    frame = _frame_from_dev(dev)
    base = estimate_position(frame, noisy_profile, GEOM)
    permuted = estimate_position(
        TactileFrame.at(0, [frame.channels[i] for i in perm]),
        noisy_profile.permuted(perm),
        GEOM.permuted(perm),
    )
    assume(base.in_contact)
    assert np.allclose(permuted.position, base.position, atol=1e-9)


def test_symmetric_contacts_mirror(flat_profile, geometry):
    sim = PalmSimulator(SimConfig(noise_std=0.0))
    for x, y in itertools.product((-7.0, 3.0), (2.0, 11.0)):
        a = estimate_position(sim.simulate_frame(ContactCommand((x, y), 0.5))[0], flat_profile, geometry)
        b = estimate_position(sim.simulate_frame(ContactCommand((-x, -y), 0.5))[0], flat_profile, geometry)
        assert np.allclose(a.position, -np.array(b.position), atol=1e-9)
