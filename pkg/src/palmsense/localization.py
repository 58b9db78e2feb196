"""Baseline calibration and weighted-centroid contact localization.

Each electrode gets an activation weight

    beta_i = 1 - exp(-2 (S_i - S_bi)^2 / sigma_i^2)

and the contact point is the beta-normalized average of the positions of the
activated electrodes. An electrode counts as activated when its deviation
from baseline exceeds ``tau * sigma_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientData
from .types import CalibrationProfile, ContactEstimate, PalmGeometry, TactileFrame

MIN_IDLE_FRAMES = 50
SIGMA_FLOOR = 1.0
DEFAULT_TAU = 3.0


@dataclass(frozen=True)
class ActivationVector:
    betas: np.ndarray
    activated: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.activated)


def _channels(frame) -> np.ndarray:
    if isinstance(frame, TactileFrame):
        return frame.as_array()
    return np.asarray(frame, dtype=float)


def calibrate_baseline(idle_frames: Sequence[TactileFrame], sigma_floor: float = SIGMA_FLOOR,
                       min_frames: int = MIN_IDLE_FRAMES) -> CalibrationProfile:
    """Per-channel mean and (population) standard deviation of no-contact frames."""
    if len(idle_frames) < min_frames:
        raise InsufficientData(f"need at least {min_frames} idle frames, got {len(idle_frames)}")
    data = np.array([_channels(f) for f in idle_frames], dtype=float)
    baselines = data.mean(axis=0)
    variations = np.maximum(data.std(axis=0), sigma_floor)
    return CalibrationProfile(baselines, variations, len(idle_frames))


def betas(channels, profile: CalibrationProfile) -> np.ndarray:
    dev = _channels(channels) - profile.baselines
    return -np.expm1(-2.0 * dev ** 2 / profile.variations ** 2)


def activation(frame, profile: CalibrationProfile, tau: float = DEFAULT_TAU) -> ActivationVector:
    s = _channels(frame)
    dev = np.abs(s - profile.baselines)
    active = np.flatnonzero(dev > tau * profile.variations)
    return ActivationVector(betas(s, profile), tuple(int(i) for i in active))


def detect_contact(frame, profile: CalibrationProfile, tau: float = DEFAULT_TAU) -> bool:
    return activation(frame, profile, tau).m >= 1


def estimate_position(frame, profile: CalibrationProfile, geometry: PalmGeometry,
                      tau: float = DEFAULT_TAU) -> ContactEstimate:
    act = activation(frame, profile, tau)
    if act.m == 0:
        return ContactEstimate(None)
    idx = list(act.activated)
    b = act.betas[idx]
    alpha = b / b.sum()
    p = alpha @ geometry.positions[idx]
    return ContactEstimate((float(p[0]), float(p[1])), act.activated, tuple(float(a) for a in alpha))


def estimate_positions(channels: np.ndarray, profile: CalibrationProfile, geometry: PalmGeometry,
                       tau: float = DEFAULT_TAU) -> np.ndarray:
    """Vectorized localization of an (n, 16) block. Rows without contact are NaN."""
    s = np.atleast_2d(np.asarray(channels, dtype=float))
    dev = s - profile.baselines
    b = -np.expm1(-2.0 * dev ** 2 / profile.variations ** 2)
    b = np.where(np.abs(dev) > tau * profile.variations, b, 0.0)
    total = b.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (b / total) @ geometry.positions
    out[total[:, 0] == 0] = np.nan
    return out
