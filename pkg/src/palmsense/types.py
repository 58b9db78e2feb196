"""Domain types shared by the codec, estimators, simulator and I/O layers.

All types are immutable after construction. Arrays held by the numeric
types are copied and flagged read-only, so instances can be shared freely.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ChannelOutOfRange

N_CHANNELS = 16
FORCE_DIM = 3
ADC_MAX = 4095
SAMPLE_RATE_HZ = 200.0


def _frozen_array(values, dtype=float, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PalmGeometry:
    """Electrode layout of the palm board, in mm.

    ``center`` is the middle of the board; the sensing grid is centered on it.
    Positions are ordered; channel ``i`` of a frame belongs to
    ``sensing_positions[i]``.
    """

    board_width: float
    board_height: float
    grid_width: float
    grid_height: float
    sensing_positions: tuple[tuple[float, float], ...]
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.sensing_positions)
        object.__setattr__(self, "sensing_positions", pts)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if len(pts) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} sensing positions, got {len(pts)}")
        if self.grid_width > self.board_width or self.grid_height > self.board_height:
            raise ValueError("sensing grid does not fit on the board")
        cx, cy = self.center
        tol = 1e-9
        for x, y in pts:
            if abs(x - cx) > self.grid_width / 2 + tol or abs(y - cy) > self.grid_height / 2 + tol:
                raise ValueError(f"electrode ({x}, {y}) lies outside the sensing grid")
        if len(set(pts)) != len(pts):
            raise ValueError("sensing positions must be pairwise distinct")

    @property
    def positions(self) -> np.ndarray:
        """(16, 2) array of electrode coordinates."""
        return np.array(self.sensing_positions, dtype=float)

    def contains(self, point: Sequence[float]) -> bool:
        cx, cy = self.center
        return (abs(point[0] - cx) <= self.board_width / 2
                and abs(point[1] - cy) <= self.board_height / 2)

    def translated(self, offset: Sequence[float]) -> "PalmGeometry":
        dx, dy = float(offset[0]), float(offset[1])
        return PalmGeometry(
            self.board_width, self.board_height, self.grid_width, self.grid_height,
            tuple((x + dx, y + dy) for x, y in self.sensing_positions),
            (self.center[0] + dx, self.center[1] + dy),
        )

    def permuted(self, order: Sequence[int]) -> "PalmGeometry":
        return PalmGeometry(
            self.board_width, self.board_height, self.grid_width, self.grid_height,
            tuple(self.sensing_positions[i] for i in order), self.center,
        )

    def as_dict(self) -> dict:
        return {
            "board_width": self.board_width,
            "board_height": self.board_height,
            "grid_width": self.grid_width,
            "grid_height": self.grid_height,
            "center": list(self.center),
            "sensing_positions": [list(p) for p in self.sensing_positions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PalmGeometry":
        return cls(
            float(d["board_width"]), float(d["board_height"]),
            float(d["grid_width"]), float(d["grid_height"]),
            tuple(tuple(p) for p in d["sensing_positions"]),
            tuple(d.get("center", (0.0, 0.0))),
        )

    def digest(self) -> str:
        """Short stable hash of the layout, stored alongside datasets and models."""
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def geometry_default() -> PalmGeometry:
    """4x4 electrode grid at 10 mm pitch on a 45x45 mm board, row-major from (-15, -15)."""
    coords = (-15.0, -5.0, 5.0, 15.0)
    positions = tuple((x, y) for y in coords for x in coords)
    return PalmGeometry(45.0, 45.0, 30.0, 30.0, positions)


@dataclass(frozen=True)
class TactileFrame:
    """One 16-channel reading. Channels are raw 12-bit ADC counts."""

    sequence: int
    timestamp: float
    channels: tuple[int, ...]

    def __post_init__(self):
        ch = tuple(int(c) for c in self.channels)
        object.__setattr__(self, "channels", ch)
        if len(ch) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} channels, got {len(ch)}")
        if any(c < 0 or c > ADC_MAX for c in ch):
            raise ChannelOutOfRange(f"channel values must lie in [0, {ADC_MAX}]: {ch}")

    @classmethod
    def at(cls, sequence: int, channels: Sequence[int], rate: float = SAMPLE_RATE_HZ) -> "TactileFrame":
        """Frame whose timestamp follows the stream clock (sequence / rate)."""
        return cls(sequence, sequence / rate, tuple(channels))

    def as_array(self) -> np.ndarray:
        return np.array(self.channels, dtype=float)


@dataclass(frozen=True)
class CalibrationProfile:
    """Per-electrode idle baseline and variation scale, both in ADC counts."""

    baselines: np.ndarray
    variations: np.ndarray
    sample_count: int = 0

    def __post_init__(self):
        b = _frozen_array(self.baselines, shape=(N_CHANNELS,))
        v = _frozen_array(self.variations, shape=(N_CHANNELS,))
        if np.any(v <= 0):
            raise ValueError("variations must be strictly positive")
        if np.any(b < 0) or np.any(b > ADC_MAX):
            raise ValueError(f"baselines must lie in [0, {ADC_MAX}]")
        object.__setattr__(self, "baselines", b)
        object.__setattr__(self, "variations", v)

    def permuted(self, order: Sequence[int]) -> "CalibrationProfile":
        idx = list(order)
        return CalibrationProfile(self.baselines[idx], self.variations[idx], self.sample_count)


@dataclass(frozen=True)
class ContactEstimate:
    """Result of localizing one frame.

    ``position`` is ``None`` when no electrode is activated. ``activated``
    holds 0-based electrode indices and ``weights`` the matching centroid
    coefficients.
    """

    position: tuple[float, float] | None
    activated: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()
    force: tuple[float, float, float] | None = None

    @property
    def in_contact(self) -> bool:
        return self.position is not None


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Gaussian mixture over a joint (input, output) space.

    Parameters live in the model's working coordinates. Raw inputs are mapped
    there by ``(s - input_shift) / input_scale``; outputs are never rescaled.
    """

    priors: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    input_dim: int = N_CHANNELS
    output_dim: int = FORCE_DIM
    input_shift: np.ndarray | None = None
    input_scale: float = 1.0
    geometry_hash: str | None = None

    def __post_init__(self):
        priors = _frozen_array(self.priors)
        means = _frozen_array(self.means)
        covs = _frozen_array(self.covariances)
        if priors.ndim != 1 or means.ndim != 2 or covs.ndim != 3:
            raise ValueError("priors, means, covariances must be 1-, 2- and 3-dimensional")
        k, d = means.shape
        if priors.shape != (k,) or covs.shape != (k, d, d):
            raise ValueError("inconsistent mixture parameter shapes")
        if self.input_dim + self.output_dim != d:
            raise ValueError(f"input_dim + output_dim must equal {d}")
        if np.any(priors <= 0) or abs(priors.sum() - 1.0) > 1e-9:
            raise ValueError("priors must be positive and sum to 1")
        if np.max(np.abs(covs - np.swapaxes(covs, 1, 2)), initial=0.0) > 1e-9:
            raise ValueError("covariances must be symmetric")
        for c in covs:
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                raise ValueError("covariances must be positive definite") from None
        shift = np.zeros(self.input_dim) if self.input_shift is None else self.input_shift
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "input_shift", _frozen_array(shift, shape=(self.input_dim,)))
        object.__setattr__(self, "input_scale", float(self.input_scale))
        if not self.input_scale > 0:
            raise ValueError("input_scale must be positive")

    @property
    def n_components(self) -> int:
        return self.priors.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_working(self, x: np.ndarray) -> np.ndarray:
        """Map raw joint vectors (..., dim) into working coordinates."""
        x = np.asarray(x, dtype=float)
        out = x.copy()
        out[..., :self.input_dim] = (x[..., :self.input_dim] - self.input_shift) / self.input_scale
        return out


@dataclass(frozen=True)
class LabeledSample:
    tactile: tuple[float, ...]
    force: tuple[float, float, float]
    contact_position: tuple[float, float] | None = None

    def __post_init__(self):
        if len(self.tactile) != N_CHANNELS or len(self.force) != FORCE_DIM:
            raise ValueError("labeled sample needs 16 tactile and 3 force values")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column store of labeled samples; iterating yields :class:`LabeledSample` rows."""

    tactile: np.ndarray
    force: np.ndarray
    position: np.ndarray | None = None
    sample_rate: float = 100.0
    geometry_hash: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = _frozen_array(self.tactile).reshape(-1, N_CHANNELS)
        f = _frozen_array(self.force).reshape(-1, FORCE_DIM)
        if s.shape[0] != f.shape[0]:
            raise ValueError("tactile and force row counts differ")
        object.__setattr__(self, "tactile", s)
        object.__setattr__(self, "force", f)
        if self.position is not None:
            p = _frozen_array(self.position).reshape(-1, 2)
            if p.shape[0] != s.shape[0]:
                raise ValueError("position row count differs")
            object.__setattr__(self, "position", p)

    def __len__(self) -> int:
        return self.tactile.shape[0]

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            pos = None if self.position is None else tuple(self.position[i])
            yield LabeledSample(tuple(self.tactile[i]), tuple(self.force[i]), pos)

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample], **kw) -> "Dataset":
        samples = list(samples)
        has_pos = bool(samples) and all(s.contact_position is not None for s in samples)
        return cls(
            np.array([s.tactile for s in samples], dtype=float).reshape(-1, N_CHANNELS),
            np.array([s.force for s in samples], dtype=float).reshape(-1, FORCE_DIM),
            np.array([s.contact_position for s in samples], dtype=float) if has_pos else None,
            **kw,
        )

    @classmethod
    def concatenate(cls, parts: Sequence["Dataset"]) -> "Dataset":
        parts = list(parts)
        if not parts:
            return cls(np.empty((0, N_CHANNELS)), np.empty((0, FORCE_DIM)))
        pos = None
        if all(p.position is not None for p in parts):
            pos = np.vstack([p.position for p in parts])
        return cls(
            np.vstack([p.tactile for p in parts]),
            np.vstack([p.force for p in parts]),
            pos,
            sample_rate=parts[0].sample_rate,
            geometry_hash=parts[0].geometry_hash,
        )
