"""On-disk formats: features, packed codes, labels, and config files.

Binary layouts are little-endian with 4-byte magics. Features are float32
row-major; codes are column-packed bytes, one ceil(m/8)-byte group per
example with zero padding bits.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import BitMatrix, FeatureMatrix, words_per_code
from .errors import FileFormatError
from .trainer import TrainConfig

FEATURES_MAGIC = b"FHFM"
CODES_MAGIC = b"FHBC"
FORMAT_VERSION = 1


def _read_exact(fh, size: int, what: str) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise FileFormatError(f"{what}: truncated (wanted {size} bytes, got {len(data)})")
    return data


def write_features(path, features: FeatureMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(
            struct.pack("<III", FORMAT_VERSION, features.n_examples, features.n_dims)
        )
        fh.write(np.ascontiguousarray(features.values, dtype="<f4").tobytes())


def read_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURES_MAGIC:
            raise FileFormatError(f"{path}: not a feature file (magic {magic!r})")
        version, n, d = struct.unpack("<III", _read_exact(fh, 12, str(path)))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported feature file version {version}")
        raw = _read_exact(fh, 4 * n * d, str(path))
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after feature payload")
    values = np.frombuffer(raw, dtype="<f4").reshape(n, d)
    try:
        return FeatureMatrix(values.astype(np.float64))
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


def write_codes(path, codes: BitMatrix) -> None:
    bytes_per_code = (codes.bit_count + 7) // 8
    byte_view = codes.words.reshape(codes.n_examples, -1).view(np.uint8)
    with open(path, "wb") as fh:
        fh.write(CODES_MAGIC)
        fh.write(struct.pack("<II", codes.bit_count, codes.n_examples))
        fh.write(np.ascontiguousarray(byte_view[:, :bytes_per_code]).tobytes())


def read_codes(path) -> BitMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CODES_MAGIC:
            raise FileFormatError(f"{path}: not a codes file (magic {magic!r})")
        m, n = struct.unpack("<II", _read_exact(fh, 8, str(path)))
        if m < 1:
            raise FileFormatError(f"{path}: bit count must be >= 1")
        bytes_per_code = (m + 7) // 8
        raw = _read_exact(fh, n * bytes_per_code, str(path))
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes after code payload")
    padded = np.zeros((n, words_per_code(m) * 8), dtype=np.uint8)
    padded[:, :bytes_per_code] = np.frombuffer(raw, dtype=np.uint8).reshape(
        n, bytes_per_code
    )
    try:
        return BitMatrix(padded.view("<u8"), m)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


def read_labels(path, mode: str = "multiclass"):
    """Class labels (one int per line) or tag sets (comma-separated)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise FileFormatError(f"{path}: empty label file")
    if mode == "multiclass":
        labels = np.empty(len(lines), dtype=np.int64)
        for idx, line in enumerate(lines):
            try:
                labels[idx] = int(line.strip())
            except ValueError:
                raise FileFormatError(
                    f"{path}: line {idx + 1}: expected an integer label"
                ) from None
        return labels
    if mode == "multilabel":
        out = []
        for idx, line in enumerate(lines):
            tags = frozenset(t.strip() for t in line.split(",") if t.strip())
            if not tags:
                raise FileFormatError(f"{path}: line {idx + 1}: no tags")
            out.append(tags)
        return out
    raise ValueError(f"unknown label mode {mode!r}")


def write_labels(path, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label in labels:
            if isinstance(label, (frozenset, set)):
                fh.write(",".join(sorted(label)) + "\n")
            else:
                fh.write(f"{int(label)}\n")


def read_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return TrainConfig.from_text(fh.read())
