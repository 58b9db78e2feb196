import itertools
import math

import numpy as np
import pytest

from palmsense.types import (
    CalibrationProfile,
    Dataset,
    LabeledSample,
    MixtureModel,
    PalmGeometry,
    TactileFrame,
    geometry_default,
)


def test_default_grid_corners_and_centroid():
    g = geometry_default()
    pts = g.positions
    assert pts.shape == (16, 2)
    for corner in itertools.product((-15.0, 15.0), repeat=2):
        assert corner in g.sensing_positions
    assert np.allclose(pts.mean(axis=0), 0.0)
    assert g.sensing_positions[0] == (-15.0, -15.0)
    assert g.sensing_positions[1] == (-5.0, -15.0)


def test_default_grid_min_pairwise_distance():
    pts = geometry_default().sensing_positions
    dmin = min(math.dist(a, b) for a, b in itertools.combinations(pts, 2))
    assert dmin == 10.0


def test_default_geometry_is_deterministic():
    a, b = geometry_default(), geometry_default()
    assert a == b and a.digest() == b.digest()
    assert np.all(np.abs(a.positions) <= 15.0)
    assert (a.board_width, a.board_height, a.grid_width, a.grid_height) == (45, 45, 30, 30)


def test_geometry_invariants():
    pts = list(geometry_default().sensing_positions)
    with pytest.raises(ValueError):
        PalmGeometry(45, 45, 30, 30, pts[:15])
    with pytest.raises(ValueError):
        PalmGeometry(45, 45, 30, 30, pts[:15] + [pts[0]])
    with pytest.raises(ValueError):
        PalmGeometry(45, 45, 30, 30, pts[:15] + [(20.0, 0.0)])
    with pytest.raises(ValueError):
        PalmGeometry(25, 45, 30, 30, pts)


def test_geometry_dict_round_trip():
    g = geometry_default().translated((1.5, -2.0))
    assert PalmGeometry.from_dict(g.as_dict()) == g


def test_frame_invariants():
    with pytest.raises(ValueError):
        TactileFrame.at(0, [0] * 15)
    f = TactileFrame.at(400, [4095] * 16)
    assert f.timestamp == 2.0


def test_profile_invariants():
    with pytest.raises(ValueError):
        CalibrationProfile(np.full(16, 300.0), np.zeros(16))
    with pytest.raises(ValueError):
        CalibrationProfile(np.full(16, 5000.0), np.ones(16))
    p = CalibrationProfile(np.full(16, 300.0), np.ones(16))
    with pytest.raises(ValueError):
        p.baselines[0] = 1.0


def test_mixture_model_invariants():
    eye = np.eye(4)[None]
    MixtureModel([1.0], np.zeros((1, 4)), eye, input_dim=3, output_dim=1)
    with pytest.raises(ValueError):
        MixtureModel([0.6, 0.6], np.zeros((2, 4)), np.repeat(eye, 2, 0), input_dim=3, output_dim=1)
    asym = eye.copy()
    asym[0, 0, 1] = 1e-3
    with pytest.raises(ValueError):
        MixtureModel([1.0], np.zeros((1, 4)), asym, input_dim=3, output_dim=1)
    with pytest.raises(ValueError):
        MixtureModel([1.0], np.zeros((1, 4)), -eye, input_dim=3, output_dim=1)
    with pytest.raises(ValueError):
        MixtureModel([1.0], np.zeros((1, 4)), eye)   # 16 + 3 != 4


def test_labeled_sample_dims():
    LabeledSample(tuple(range(16)), (0.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        LabeledSample(tuple(range(17)), (0.0, 0.0, 1.0))


def test_dataset_rows_and_concat():
    samples = [LabeledSample(tuple(float(i + j) for j in range(16)), (0.0, 0.1, float(i)), (1.0, 2.0))
               for i in range(3)]
    ds = Dataset.from_samples(samples)
    assert len(ds) == 3 and list(ds) == samples
    both = Dataset.concatenate([ds, ds])
    assert len(both) == 6 and both.position.shape == (6, 2)
