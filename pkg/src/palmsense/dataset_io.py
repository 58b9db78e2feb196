"""Persistence for labeled datasets, raw stream recordings, calibration profiles and models.

Datasets are CSV, recordings are the raw wire octets, everything else is
versioned JSON. File layouts are described in docs/FORMATS.md.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from typing import Iterable, Iterator

import numpy as np

from .errors import FormatError, VersionMismatch
from .types import FORCE_DIM, N_CHANNELS, CalibrationProfile, Dataset, MixtureModel, PalmGeometry, TactileFrame
from .wire import DecoderState, decode_stream, encode_frame

DATASET_FORMAT = "palmsense-dataset-v1"
MODEL_FORMAT = "palmsense-gmm-v1"
PROFILE_FORMAT = "palmsense-profile-v1"
GEOMETRY_FORMAT = "palmsense-geometry-v1"

TACTILE_COLUMNS = [f"s{i:02d}" for i in range(1, N_CHANNELS + 1)]
FORCE_COLUMNS = ["fx", "fy", "fz"]
POSITION_COLUMNS = ["px", "py"]

PathLike = str | os.PathLike


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def write_dataset(dataset: Dataset, path: PathLike) -> None:
    columns = TACTILE_COLUMNS + FORCE_COLUMNS
    has_pos = dataset.position is not None
    if has_pos:
        columns = columns + POSITION_COLUMNS
    meta = [DATASET_FORMAT, f"sample_rate={float(dataset.sample_rate)!r}"]
    if dataset.geometry_hash:
        meta.append(f"geometry={dataset.geometry_hash}")
    block = np.hstack([dataset.tactile, dataset.force] + ([dataset.position] if has_pos else []))
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(meta) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in block.tolist():
            fh.write(_fmt(row) + "\n")


def _parse_meta(line: str, path: str) -> dict:
    parts = line.lstrip("#").split()
    if not parts or parts[0] != DATASET_FORMAT:
        raise FormatError(f"unrecognized dataset format {parts[0] if parts else ''!r}", 1, path)
    meta = {}
    for item in parts[1:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise FormatError(f"malformed metadata item {item!r}", 1, path)
        meta[key] = value
    return meta


def read_dataset(path: PathLike) -> Dataset:
    path = str(path)
    meta: dict = {}
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            lineno = reader.line_num
            if header is None:
                if row and row[0].startswith("#"):
                    meta = _parse_meta(",".join(row), path)
                    continue
                header = [c.strip() for c in row]
                _check_header(header, lineno, path)
                continue
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} values, got {len(row)}", lineno, path)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"non-numeric value: {exc}", lineno, path) from None
    if header is None:
        raise FormatError("missing header line", 1, path)
    width = len(header)
    block = np.array(rows, dtype=float).reshape(-1, width)
    position = block[:, 19:21] if width == 21 else None
    return Dataset(block[:, :16], block[:, 16:19], position,
                   sample_rate=float(meta.get("sample_rate", 100.0)),
                   geometry_hash=meta.get("geometry"))


def _check_header(header: list[str], lineno: int, path: str) -> None:
    expected = TACTILE_COLUMNS + FORCE_COLUMNS
    if len(header) == len(expected) + len(POSITION_COLUMNS):
        expected = expected + POSITION_COLUMNS
    for i, (got, want) in enumerate(zip(header, expected)):
        if got != want:
            raise FormatError(f"column {i + 1}: unexpected header {got!r} (expected {want!r})", lineno, path)
    if len(header) != len(expected):
        extra = header[len(expected):] if len(header) > len(expected) else []
        detail = f"unexpected header {extra[0]!r}" if extra else f"missing column {expected[len(header)]!r}"
        raise FormatError(f"{detail}; columns must be s01..s16,fx,fy,fz[,px,py]", lineno, path)


def record_stream(frames: Iterable[TactileFrame], path: PathLike) -> int:
    """Write frames as raw wire octets; returns the number of frames written."""
    count = 0
    with open(path, "wb") as fh:
        for frame in frames:
            fh.write(encode_frame(frame))
            count += 1
    return count


def replay_stream(path: PathLike, state: DecoderState | None = None, chunk_size: int = 4096
                  ) -> Iterator[TactileFrame]:
    """Re-decode a recording. Pass a ``DecoderState`` to read corruption statistics afterwards."""
    if state is None:
        state = DecoderState()
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(chunk_size)
            if not chunk:
                break
            frames, state = decode_stream(chunk, state)
            yield from frames


def read_stream(path: PathLike) -> tuple[list[TactileFrame], DecoderState]:
    state = DecoderState()
    frames = list(replay_stream(path, state))
    return frames, state


def _check_format(doc, expected: str, path) -> None:
    if not isinstance(doc, dict) or "format" not in doc:
        raise FormatError("missing 'format' field", path=str(path))
    if doc["format"] != expected:
        raise VersionMismatch(f"{path}: unsupported format {doc['format']!r} (expected {expected!r})")


def _load_json(path: PathLike):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", exc.lineno, str(path)) from None


def _dump_json(doc: dict, path: PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def model_to_dict(model: MixtureModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "n_components": model.n_components,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "priors": model.priors.tolist(),
        "means": model.means.tolist(),
        "covariances": model.covariances.tolist(),
        "standardization": {"shift": model.input_shift.tolist(), "scale": model.input_scale},
        "geometry_hash": model.geometry_hash,
    }


def model_from_dict(doc: dict, path: PathLike = "<model>") -> MixtureModel:
    _check_format(doc, MODEL_FORMAT, path)
    try:
        std = doc.get("standardization") or {}
        model = MixtureModel(
            np.array(doc["priors"], dtype=float),
            np.array(doc["means"], dtype=float),
            np.array(doc["covariances"], dtype=float),
            input_dim=int(doc.get("input_dim", N_CHANNELS)),
            output_dim=int(doc.get("output_dim", FORCE_DIM)),
            input_shift=std.get("shift"),
            input_scale=float(std.get("scale", 1.0)),
            geometry_hash=doc.get("geometry_hash"),
        )
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}", path=str(path)) from None
    except ValueError as exc:
        raise FormatError(str(exc), path=str(path)) from None
    if "n_components" in doc and doc["n_components"] != model.n_components:
        raise FormatError("n_components does not match the parameter arrays", path=str(path))
    return model


def save_model(model: MixtureModel, path: PathLike) -> None:
    _dump_json(model_to_dict(model), path)


def load_model(path: PathLike) -> MixtureModel:
    return model_from_dict(_load_json(path), path)


def save_profile(profile: CalibrationProfile, path: PathLike) -> None:
    _dump_json({
        "format": PROFILE_FORMAT,
        "baselines": profile.baselines.tolist(),
        "variations": profile.variations.tolist(),
        "sample_count": profile.sample_count,
    }, path)


def load_profile(path: PathLike) -> CalibrationProfile:
    doc = _load_json(path)
    _check_format(doc, PROFILE_FORMAT, path)
    try:
        return CalibrationProfile(doc["baselines"], doc["variations"], int(doc.get("sample_count", 0)))
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}", path=str(path)) from None
    except ValueError as exc:
        raise FormatError(str(exc), path=str(path)) from None


def save_geometry(geometry: PalmGeometry, path: PathLike) -> None:
    _dump_json({"format": GEOMETRY_FORMAT, **geometry.as_dict()}, path)


def load_geometry(path: PathLike) -> PalmGeometry:
    doc = _load_json(path)
    _check_format(doc, GEOMETRY_FORMAT, path)
    try:
        return PalmGeometry.from_dict(doc)
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}", path=str(path)) from None
    except ValueError as exc:
        raise FormatError(str(exc), path=str(path)) from None


def write_csv(path: PathLike | None, header: list[str], rows: Iterable) -> None:
    """Plain CSV writer for reports; ``None`` or '-' means stdout."""
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
    finally:
        if fh is not sys.stdout:
            fh.close()

