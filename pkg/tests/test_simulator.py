import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palmsense.errors import PositionOutOfBoard
from palmsense.simulator import ContactCommand, PalmSimulator, SimConfig, run_calibration_protocol

QUIET = SimConfig(noise_std=0.0)


def test_no_contact_noiseless_is_baseline():
    frame, force = PalmSimulator(QUIET).simulate_frame(None)
    assert frame.channels == (300,) * 16
    assert np.all(force == 0)


def test_contact_on_electrode_hand_values():
    sim = PalmSimulator(QUIET)
    p5 = sim.config.geometry.sensing_positions[5]          # (-5, -5)
    frame, force = sim.simulate_frame(ContactCommand(p5, 1.0))
    assert frame.channels[5] == 1100
    # electrode 6 sits 10 mm away: 300 + 800 * exp(-100 / 72)
    expected = round(300 + 800 * math.exp(-100 / 72))
    assert frame.channels[6] == expected
    assert abs(frame.channels[6] - 500) <= 1
    assert tuple(force) == (0.0, 0.0, 1.0)


def test_saturation_clamps_at_full_scale():
    sim = PalmSimulator(QUIET)
    frame, _ = sim.simulate_frame(ContactCommand(sim.config.geometry.sensing_positions[0], 10.0))
    assert frame.channels[0] == 4095


def test_tangential_force_only_in_label():
    sim = PalmSimulator(QUIET)
    a, fa = sim.simulate_frame(ContactCommand((1.0, 2.0), 0.5))
    b, fb = sim.simulate_frame(ContactCommand((1.0, 2.0), 0.5, (0.3, -0.2)))
    assert a.channels == b.channels
    assert tuple(fb) == (0.3, -0.2, 0.5)


def test_out_of_board_contact():
    with pytest.raises(PositionOutOfBoard):
        PalmSimulator(QUIET).simulate_frame(ContactCommand((30.0, 0.0), 1.0))


def test_zero_depth_press_is_idle():
    pairs = PalmSimulator(QUIET).simulate_press((0.0, 0.0), [0.0] * 20)
    assert all(f.channels == (300,) * 16 for f, _ in pairs)
    assert all(np.all(force == 0) for _, force in pairs)


def test_linear_ramp_reaches_eight_newtons():
    pairs = PalmSimulator(QUIET).simulate_press((0.0, 0.0), np.linspace(0, 4, 700))
    assert len(pairs) == 700
    assert pairs[-1][1][2] == pytest.approx(8.0)
    # 700 samples at 5 ms spacing span 3.5 s
    assert len(pairs) / 200.0 == pytest.approx(3.5)
    assert pairs[1][0].timestamp - pairs[0][0].timestamp == pytest.approx(1 / 200)


def test_protocol_sizes():
    assert len(run_calibration_protocol(SimConfig(rng_seed=1))) == 98000
    assert len(run_calibration_protocol(SimConfig(rng_seed=2), n_points=10, repeats=1)) == 7000
    assert len(run_calibration_protocol(SimConfig(), n_points=3, repeats=0)) == 0


def test_protocol_final_depth_and_region():
    data = PalmSimulator(QUIET).run_calibration_protocol(n_points=4, repeats=2, samples_per_press=50)
    fz = data.force[:, 2].reshape(8, 50)
    assert np.allclose(fz[:, -1], 8.0)
    assert np.all(np.diff(fz, axis=1) > 0)
    assert np.all(np.abs(data.position) <= 15.0)
    # repeats of one point share its coordinates
    assert np.all(data.position[:100] == data.position[0])


def test_seeded_runs_reproduce():
    a = run_calibration_protocol(SimConfig(rng_seed=11), n_points=3, repeats=2, samples_per_press=40)
    b = run_calibration_protocol(SimConfig(rng_seed=11), n_points=3, repeats=2, samples_per_press=40)
    c = run_calibration_protocol(SimConfig(rng_seed=12), n_points=3, repeats=2, samples_per_press=40)
    assert np.array_equal(a.tactile, b.tactile) and np.array_equal(a.position, b.position)
    assert not np.array_equal(a.tactile, c.tactile)


def _mirror_x(index):
    row, col = divmod(index, 4)
    return row * 4 + (3 - col)


def _swap_xy(index):
    row, col = divmod(index, 4)
    return col * 4 + row


@given(st.floats(-15, 15), st.floats(-15, 15), st.floats(0, 6))
def test_grid_symmetries_permute_channels(x, y, force):
    sim = PalmSimulator(QUIET)
    base = sim.simulate_frame(ContactCommand((x, y), force))[0].channels
    mirrored = sim.simulate_frame(ContactCommand((-x, y), force))[0].channels
    swapped = sim.simulate_frame(ContactCommand((y, x), force))[0].channels
    assert all(base[i] == mirrored[_mirror_x(i)] for i in range(16))
    assert all(base[i] == swapped[_swap_xy(i)] for i in range(16))


def test_response_decreases_with_distance():
    sim = PalmSimulator(QUIET)
    d = np.linspace(0, 30, 61)
    pts = np.column_stack([-15 + d, np.full_like(d, -15.0)])
    k = sim.kernel(pts)[:, 0]
    assert np.all(np.diff(k) < 0)


@settings(max_examples=50)
@given(st.floats(-22.5, 22.5), st.floats(-22.5, 22.5), st.floats(0, 100), st.integers(0, 2**32))
def test_channels_always_in_adc_range(x, y, force, seed):
    sim = PalmSimulator(SimConfig(noise_std=50.0, rng_seed=seed))
    frame, _ = sim.simulate_frame(ContactCommand((x, y), force))
    assert all(0 <= c <= 4095 for c in frame.channels)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(footprint_radius=0)
    with pytest.raises(ValueError):
        SimConfig(noise_std=-1)
    with pytest.raises(ValueError):
        ContactCommand((0, 0), -1.0)
