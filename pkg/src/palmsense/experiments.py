"""Scripted simulator experiments: localization accuracy, line traces and force regression."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .localization import DEFAULT_TAU, calibrate_baseline, estimate_positions
from .mixture import EmConfig, fit_force_model, gmr_predict_many, rmse, rmse_per_axis
from .simulator import PalmSimulator, SimConfig
from .types import CalibrationProfile

log = logging.getLogger(__name__)

# light enough that the footprint stays on the grid, firm enough to clear the 3-sigma gate
ACCURACY_FORCE = 0.2
HOLD_FRAMES = 10
IDLE_FRAMES = 200


def simulated_profile(sim: PalmSimulator, frames: int = IDLE_FRAMES) -> CalibrationProfile:
    return calibrate_baseline(sim.idle_frames(frames))


@dataclass
class AccuracyReport:
    errors: np.ndarray
    missed: int = 0
    truths: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    estimates: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors)) if self.errors.size else float("nan")

    @property
    def max(self) -> float:
        return float(np.max(self.errors)) if self.errors.size else float("nan")

    def summary(self) -> dict:
        return {
            "contacts": int(self.errors.size + self.missed),
            "missed": int(self.missed),
            "mean_error_mm": self.mean,
            "max_error_mm": self.max,
            "median_error_mm": float(np.median(self.errors)) if self.errors.size else float("nan"),
        }


def _held_estimates(sim, profile, points, force, hold, tau):
    """Mean contact estimate over ``hold`` frames at each point; NaN rows when never detected."""
    out = np.full((len(points), 2), np.nan)
    for i, p in enumerate(points):
        channels, _ = sim.press_block(p, np.full(hold, force / sim.config.force_per_mm))
        est = estimate_positions(channels, profile, sim.config.geometry, tau)
        hit = ~np.isnan(est[:, 0])
        if hit.any():
            out[i] = est[hit].mean(axis=0)
    return out


def _report(points, estimates) -> AccuracyReport:
    hit = ~np.isnan(estimates[:, 0])
    errors = np.linalg.norm(estimates[hit] - points[hit], axis=1)
    return AccuracyReport(errors, int((~hit).sum()), points, estimates)


def point_accuracy(config: SimConfig | None = None, n_contacts: int = 100, half_width: float = 10.0,
                   force: float = ACCURACY_FORCE, hold: int = HOLD_FRAMES, tau: float = DEFAULT_TAU,
                   profile: CalibrationProfile | None = None) -> AccuracyReport:
    """Random contacts uniform over the central ``2*half_width`` square, scored against the truth."""
    sim = PalmSimulator(config)
    if profile is None:
        profile = simulated_profile(sim)
    c = np.asarray(sim.config.geometry.center, dtype=float)
    points = c + sim.rng.uniform(-half_width, half_width, size=(n_contacts, 2))
    return _report(points, _held_estimates(sim, profile, points, force, hold, tau))


def electrode_targets(config: SimConfig | None = None, n_contacts: int = 100, midpoints: bool = False,
                      seed: int = 0) -> np.ndarray:
    """Contacts drawn from electrode centres, or from midpoints of horizontally/vertically adjacent pairs."""
    geom = (config or SimConfig()).geometry
    pos = geom.positions
    if midpoints:
        d = np.linalg.norm(pos[:, None] - pos[None], axis=2)
        spacing = d[d > 0].min()
        i, j = np.nonzero(np.triu(np.isclose(d, spacing)))
        pool = (pos[i] + pos[j]) / 2
    else:
        pool = pos
    return pool[np.random.default_rng(seed).integers(len(pool), size=n_contacts)]


def electrode_accuracy(config: SimConfig | None = None, n_contacts: int = 100, midpoints: bool = False,
                       force_range=(0.008, 0.015), seed: int = 0) -> AccuracyReport:
    """Light single-frame presses on electrode centres or pair midpoints.

    Forces are small enough that only the pressed electrode (or pair)
    clears the gate, so on a noiseless board the centroid is exact.
    """
    config = config or SimConfig(noise_std=0.0)
    sim = PalmSimulator(config)
    profile = simulated_profile(sim)
    points = electrode_targets(config, n_contacts, midpoints, seed)
    forces = np.random.default_rng([seed, 1]).uniform(*force_range, size=n_contacts)
    channels = sim.respond(points, forces)
    return _report(points, estimate_positions(channels, profile, config.geometry))


def line_trace(config: SimConfig | None = None, start=(-10.0, -10.0), end=(10.0, 10.0), steps: int = 200,
               trials: int = 3, force: float = ACCURACY_FORCE, tau: float = DEFAULT_TAU) -> list[tuple]:
    """Slide a contact along a straight segment; one row per frame:
    (trial, seq, time, true_x, true_y, est_x, est_y, error)."""
    sim = PalmSimulator(config)
    profile = simulated_profile(sim)
    path = np.linspace(start, end, steps)
    rate = sim.config.sample_rate
    rows = []
    for trial in range(trials):
        for seq, p in enumerate(path):
            channels = sim.respond([p], [force])
            est = estimate_positions(channels, profile, sim.config.geometry, tau)[0]
            err = float(np.linalg.norm(est - p)) if not np.isnan(est[0]) else float("nan")
            rows.append((trial, seq, seq / rate, float(p[0]), float(p[1]), float(est[0]), float(est[1]), err))
    return rows


@dataclass
class ForceExperiment:
    k: int
    rmse: float
    rmse_axis: np.ndarray
    reports: list
    train_size: int
    test_size: int

    def summary(self) -> dict:
        return {
            "selected_k": self.k,
            "rmse": self.rmse,
            "rmse_axis": [float(v) for v in self.rmse_axis],
            "train_size": self.train_size,
            "test_size": self.test_size,
            "bic": {str(r.k): float(r.bic) for r in self.reports},
        }


def force_experiment(config: SimConfig | None = None, k_range=(1, 10), em: EmConfig | None = None,
                     train_points: int = 28, repeats: int = 5, test_points: int = 10,
                     samples_per_press: int = 700) -> ForceExperiment:
    """Train on the calibration protocol, test on a fresh protocol run with a different seed."""
    config = config or SimConfig()
    train_sim = PalmSimulator(config)
    profile = simulated_profile(train_sim)
    train = train_sim.run_calibration_protocol(train_points, repeats, samples_per_press)
    test = PalmSimulator(config.with_overrides(rng_seed=config.rng_seed + 1)).run_calibration_protocol(
        test_points, 1, samples_per_press)
    log.info("training on %d samples, testing on %d", len(train), len(test))
    model, reports = fit_force_model(train.tactile, train.force, k_range, em,
                                     baselines=profile.baselines, geometry_hash=train.geometry_hash)
    pred, _ = gmr_predict_many(model, test.tactile)
    return ForceExperiment(model.n_components, rmse(pred, test.force), rmse_per_axis(pred, test.force),
                           reports, len(train), len(test))
