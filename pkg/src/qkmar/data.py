"""Chip datasets: manifest CSV, SARC chip files, filtering, sampling, synthesis.

SARC layout (little-endian)::

    magic   4 bytes  b"SARC"
    version u8       1
    dtype   u8       0 = real uint16, 1 = complex int16 (re, im interleaved)
    rows    u16
    cols    u16
    payload row-major pixels
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .rng import stream

SARC_MAGIC = b"SARC"
SARC_VERSION = 1
_HEADER = struct.Struct("<4sBBHH")

CHIP_VARIANTS = {
    "grd16": ("GRD", (16, 16)),
    "slc16": ("SLC", (16, 16)),
    "slc70x12": ("SLC", (70, 12)),
}
CONFIDENCE_LEVELS = ("HIGH", "MEDIUM", "LOW")
MANIFEST_HEADER = ["chip_path", "is_vessel", "is_fishing", "confidence"]
LABEL_FIELDS = ("is_vessel", "is_fishing")


@dataclass
class Chip:
    """A chip image. ``pixels`` is float64 (GRD) or complex128 (SLC)."""

    pixels: np.ndarray
    product: str

    def __post_init__(self):
        if self.product not in ("GRD", "SLC"):
            raise DataError(f"unknown product {self.product!r}")
        dtype = np.complex128 if self.product == "SLC" else np.float64
        self.pixels = np.asarray(self.pixels, dtype=dtype)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise DataError(f"chip pixels must be a non-empty matrix, got shape {self.pixels.shape}")
        if self.product == "GRD" and np.any(self.pixels < 0):
            raise DataError("GRD pixels must be non-negative")

    @property
    def shape(self) -> tuple:
        return self.pixels.shape


@dataclass
class ChipRecord:
    chip_path: str
    is_vessel: Optional[bool]
    is_fishing: Optional[bool]
    confidence: str

    def label(self, field_name: str) -> Optional[bool]:
        return getattr(self, field_name)


# --- SARC chips --------------------------------------------------------------


def write_chip(path, chip: Chip) -> None:
    rows, cols = chip.shape
    if chip.product == "GRD":
        px = chip.pixels
        if np.any(px != np.round(px)) or px.max() > 65535:
            raise DataError("GRD pixels must be integers in 0..65535")
        payload = px.astype("<u2").tobytes()
        dtype = 0
    else:
        px = np.stack([chip.pixels.real, chip.pixels.imag], axis=-1)
        if np.any(px != np.round(px)) or px.min() < -32768 or px.max() > 32767:
            raise DataError("SLC pixel components must be integers in -32768..32767")
        payload = px.astype("<i2").tobytes()
        dtype = 1
    Path(path).write_bytes(_HEADER.pack(SARC_MAGIC, SARC_VERSION, dtype, rows, cols) + payload)


def read_chip(path) -> Chip:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read chip {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, dtype, rows, cols = _HEADER.unpack_from(data)
    if magic != SARC_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SARC_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype not in (0, 1):
        raise FormatError(f"{path}: unknown dtype code {dtype}")
    if rows == 0 or cols == 0:
        raise FormatError(f"{path}: empty shape {rows}x{cols}")
    expected = rows * cols * (2 if dtype == 0 else 4)
    actual = len(data) - _HEADER.size
    if actual != expected:
        raise FormatError(f"{path}: expected {expected} payload bytes, found {actual}")
    if dtype == 0:
        px = np.frombuffer(data, dtype="<u2", offset=_HEADER.size).reshape(rows, cols)
        return Chip(px.astype(np.float64), "GRD")
    raw = np.frombuffer(data, dtype="<i2", offset=_HEADER.size).reshape(rows, cols, 2).astype(np.float64)
    return Chip(raw[..., 0] + 1j * raw[..., 1], "SLC")


# --- manifest ----------------------------------------------------------------


def _parse_bool(cell: str, row: int, name: str) -> Optional[bool]:
    if cell == "":
        return None
    if cell == "true":
        return True
    if cell == "false":
        return False
    raise DataError(f"manifest row {row}: {name} must be true, false or empty, got {cell!r}")


def read_manifest(path) -> list[ChipRecord]:
    """Parse a manifest CSV (header ``chip_path,is_vessel,is_fishing,confidence``).

    Booleans are lowercase ``true``/``false`` (empty = absent) and confidence
    is an exact uppercase match; anything else raises with the row number.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open manifest {path}: {exc}") from exc
    records = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DataError(f"manifest header must be {','.join(MANIFEST_HEADER)}, got {header}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"manifest row {row_no}: expected 4 fields, got {len(row)}")
            chip_path, vessel, fishing, confidence = row
            if not chip_path:
                raise DataError(f"manifest row {row_no}: empty chip_path")
            if confidence not in CONFIDENCE_LEVELS:
                raise DataError(f"manifest row {row_no}: unknown confidence {confidence!r}")
            records.append(
                ChipRecord(
                    chip_path,
                    _parse_bool(vessel, row_no, "is_vessel"),
                    _parse_bool(fishing, row_no, "is_fishing"),
                    confidence,
                )
            )
    return records


def _fmt_bool(v: Optional[bool]) -> str:
    return "" if v is None else ("true" if v else "false")


def write_manifest(path, records: list[ChipRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in records:
            writer.writerow([r.chip_path, _fmt_bool(r.is_vessel), _fmt_bool(r.is_fishing), r.confidence])


def filter_high_confidence(records: list[ChipRecord]) -> list[ChipRecord]:
    return [r for r in records if r.confidence == "HIGH"]


def balanced_sample(records: list[ChipRecord], label_field: str, per_class: int, seed: int) -> list[ChipRecord]:
    """Draw ``per_class`` records of each class without replacement.

    Records lacking the label are ignored. The output lists the positive
    class draw first, then the negative one.
    """
    if label_field not in LABEL_FIELDS:
        raise ConfigError(f"unknown label field {label_field!r}")
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}")
    pos = [r for r in records if r.label(label_field) is True]
    neg = [r for r in records if r.label(label_field) is False]
    if len(pos) < per_class or len(neg) < per_class:
        raise DataError(
            f"need {per_class} records per class for {label_field}; "
            f"available: {len(pos)} true, {len(neg)} false"
        )
    rng = stream(seed, "balanced_sample")
    out = []
    for group in (pos, neg):
        pick = np.sort(rng.choice(len(group), size=per_class, replace=False))
        out.extend(group[i] for i in pick)
    return out


# --- synthetic chips ---------------------------------------------------------


@dataclass
class ClassParams:
    """Brightness of the central object and background speckle scale for one class."""

    mean: float
    spread: float
    phase_slope: float = 0.0


@dataclass
class SynthSpec:
    samples_per_class: int = 50
    shape: tuple = (16, 16)
    product: str = "GRD"
    positive: ClassParams = field(default_factory=lambda: ClassParams(2500.0, 60.0, 0.6))
    negative: ClassParams = field(default_factory=lambda: ClassParams(300.0, 60.0, -0.6))
    blob_sigma: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")
        if self.product not in ("GRD", "SLC"):
            raise ConfigError(f"unknown product {self.product!r}")
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise ConfigError(f"invalid chip shape {self.shape}")
        for p in (self.positive, self.negative):
            if not (p.spread > 0 and p.mean >= 0):
                raise ConfigError("class spreads must be > 0 and means >= 0")
        if self.blob_sigma <= 0:
            raise ConfigError("blob_sigma must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        for key in ("positive", "negative"):
            if key in d:
                d[key] = ClassParams(**d[key])
        if "shape" in d:
            d["shape"] = tuple(d["shape"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth fields {sorted(unknown)}")
        return cls(**d)


def _synth_chip(spec: SynthSpec, params: ClassParams, rng: np.random.Generator) -> Chip:
    rows, cols = spec.shape
    cy, cx = (rows - 1) / 2 + rng.uniform(-1, 1), (cols - 1) / 2 + rng.uniform(-1, 1)
    yy, xx = np.mgrid[0:rows, 0:cols]
    blob = params.mean * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * spec.blob_sigma**2))
    speckle = np.abs(rng.normal(0.0, params.spread, size=spec.shape) + 1j * rng.normal(0.0, params.spread, size=spec.shape))
    amplitude = blob + speckle
    if spec.product == "GRD":
        return Chip(np.clip(np.round(amplitude), 0, 65535), "GRD")
    phase = params.phase_slope * (xx - cx) + rng.normal(0.0, 0.3, size=spec.shape)
    z = np.clip(amplitude, 0, 32767) * np.exp(1j * phase)
    z = np.clip(np.round(z.real), -32768, 32767) + 1j * np.clip(np.round(z.imag), -32768, 32767)
    return Chip(z, "SLC")


def synth_generate(spec: SynthSpec) -> tuple[list[Chip], list[bool]]:
    """Class-conditional chips: a bright blob over speckle, labels alternating True/False.

    SLC chips additionally carry a class-dependent horizontal phase ramp.
    """
    spec.validate()
    rng = stream(spec.seed, "synth")
    chips, labels = [], []
    for _ in range(spec.samples_per_class):
        for label, params in ((True, spec.positive), (False, spec.negative)):
            chips.append(_synth_chip(spec, params, rng))
            labels.append(label)
    return chips, labels


def write_dataset(out_dir, chips: list[Chip], labels: list[bool]) -> list[ChipRecord]:
    """Write chips as ``chips/NNNNN.sarc`` plus ``manifest.csv`` (all HIGH confidence)."""
    out = Path(out_dir)
    (out / "chips").mkdir(parents=True, exist_ok=True)
    records = []
    for i, (chip, label) in enumerate(zip(chips, labels)):
        rel = f"chips/{i:05d}.sarc"
        write_chip(out / rel, chip)
        records.append(ChipRecord(rel, label, label, "HIGH"))
    write_manifest(out / "manifest.csv", records)
    return records
