"""Phenomenological palm model used as data source and ground-truth oracle.

A contact of normal force F at point p raises electrode i by

    A * F * exp(-|p - P_i|^2 / (2 rho^2))

ADC counts above a flat baseline, plus Gaussian read noise; the result is
rounded and clamped to the 12-bit range. Tangential force components are
carried in the labels only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .errors import PositionOutOfBoard
from .types import ADC_MAX, Dataset, PalmGeometry, TactileFrame, geometry_default

TRAINING_RATE_HZ = 100.0


@dataclass(frozen=True)
class SimConfig:
    geometry: PalmGeometry = field(default_factory=geometry_default)
    footprint_radius: float = 6.0
    gain: float = 800.0
    force_per_mm: float = 2.0
    baseline_level: float = 300.0
    noise_std: float = 2.0
    rng_seed: int = 0
    sample_rate: float = 200.0

    def __post_init__(self):
        if not self.footprint_radius > 0:
            raise ValueError("footprint_radius must be positive")
        if not self.gain > 0:
            raise ValueError("gain must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    def with_overrides(self, **kw) -> "SimConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class ContactCommand:
    position: tuple[float, float]
    normal_force: float
    tangential: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.normal_force < 0:
            raise ValueError("normal_force must be nonnegative")


class PalmSimulator:
    """Owns the noise RNG; not meant to be shared between threads."""

    def __init__(self, config: SimConfig | None = None):
        self.config = config if config is not None else SimConfig()
        self.rng = np.random.default_rng(self.config.rng_seed)
        self._positions = self.config.geometry.positions

    def kernel(self, points) -> np.ndarray:
        """(n, 16) spatial response of each electrode to unit force at each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d2 = ((pts[:, None, :] - self._positions[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-d2 / (2.0 * self.config.footprint_radius ** 2))

    def respond(self, points, normal_forces) -> np.ndarray:
        """Raw channel block for a batch of contacts; one noise draw per value."""
        cfg = self.config
        forces = np.atleast_1d(np.asarray(normal_forces, dtype=float))
        values = cfg.baseline_level + cfg.gain * forces[:, None] * self.kernel(points)
        if cfg.noise_std > 0:
            values = values + self.rng.normal(0.0, cfg.noise_std, size=values.shape)
        return np.clip(np.rint(values), 0, ADC_MAX).astype(np.int64)

    def _check_position(self, position):
        if not self.config.geometry.contains(position):
            raise PositionOutOfBoard(f"contact {tuple(position)} lies outside the board")

    def simulate_frame(self, cmd: ContactCommand | None, seq: int = 0) -> tuple[TactileFrame, np.ndarray]:
        """One frame and its true force label (fx, fy, fz). ``None`` means no contact."""
        if cmd is None:
            channels = self.respond(np.zeros((1, 2)), [0.0])[0]
            force = np.zeros(3)
        else:
            self._check_position(cmd.position)
            channels = self.respond([cmd.position], [cmd.normal_force])[0]
            force = np.array([cmd.tangential[0], cmd.tangential[1], cmd.normal_force], dtype=float)
        return TactileFrame(seq, seq / self.config.sample_rate, tuple(channels)), force

    def idle_frames(self, count: int, start_seq: int = 0) -> list[TactileFrame]:
        block = self.respond(np.zeros((count, 2)), np.zeros(count))
        rate = self.config.sample_rate
        return [TactileFrame(start_seq + i, (start_seq + i) / rate, tuple(row)) for i, row in enumerate(block)]

    def press_block(self, position, depths) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized press: (n, 16) channels and (n, 3) force labels."""
        self._check_position(position)
        depths = np.asarray(depths, dtype=float)
        if np.any(depths < 0):
            raise ValueError("press depths must be nonnegative")
        fz = self.config.force_per_mm * depths
        pts = np.broadcast_to(np.asarray(position, dtype=float), (len(depths), 2))
        channels = self.respond(pts, fz)
        forces = np.column_stack([np.zeros_like(fz), np.zeros_like(fz), fz])
        return channels, forces

    def simulate_press(self, position, depth_profile, start_seq: int = 0) -> list[tuple[TactileFrame, np.ndarray]]:
        """One frame per depth sample, spaced at the sample rate."""
        channels, forces = self.press_block(position, depth_profile)
        rate = self.config.sample_rate
        return [(TactileFrame(start_seq + i, (start_seq + i) / rate, tuple(row)), forces[i])
                for i, row in enumerate(channels)]

    def contact_points(self, n_points: int) -> np.ndarray:
        """Scrambled-Halton points spread over the sensing grid region."""
        if n_points <= 0:
            return np.empty((0, 2))
        geom = self.config.geometry
        unit = qmc.Halton(d=2, scramble=True, seed=self.rng).random(n_points)
        half = np.array([geom.grid_width, geom.grid_height]) / 2
        return np.asarray(geom.center) - half + unit * 2 * half

    def run_calibration_protocol(self, n_points: int = 28, repeats: int = 5, samples_per_press: int = 700,
                                 depth: float = 4.0, training_rate: float = TRAINING_RATE_HZ) -> Dataset:
        """Press each sampled point ``repeats`` times along a linear 0..depth ramp.

        Presses are generated at the sensor rate and decimated to
        ``training_rate``; each press contributes ``samples_per_press`` rows.
        """
        if n_points < 1:
            raise ValueError("n_points must be at least 1")
        decim = max(1, int(round(self.config.sample_rate / training_rate)))
        n_raw = samples_per_press * decim
        ramp = np.linspace(0.0, depth, n_raw) if n_raw > 1 else np.full(n_raw, depth)
        keep = slice(decim - 1, None, decim)
        points = self.contact_points(n_points)
        tactile, force, pos = [], [], []
        for p in points:
            for _ in range(repeats):
                s, f = self.press_block(p, ramp)
                tactile.append(s[keep])
                force.append(f[keep])
                pos.append(np.tile(p, (samples_per_press, 1)))
        if not tactile:
            return Dataset(np.empty((0, 16)), np.empty((0, 3)), np.empty((0, 2)),
                           sample_rate=training_rate, geometry_hash=self.config.geometry.digest())
        return Dataset(np.vstack(tactile), np.vstack(force), np.vstack(pos),
                       sample_rate=training_rate, geometry_hash=self.config.geometry.digest())


def simulate_frame(cmd: ContactCommand | None, config: SimConfig, seq: int = 0):
    return PalmSimulator(config).simulate_frame(cmd, seq)


def simulate_press(position, depth_profile, config: SimConfig):
    return PalmSimulator(config).simulate_press(position, depth_profile)


def run_calibration_protocol(config: SimConfig, n_points: int = 28, repeats: int = 5,
                             samples_per_press: int = 700) -> Dataset:
    return PalmSimulator(config).run_calibration_protocol(n_points, repeats, samples_per_press)
