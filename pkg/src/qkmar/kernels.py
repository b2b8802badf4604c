"""Classical and quantum kernels, Gram matrices and the QKGM file format."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from . import qsim
from .errors import ConfigError, FormatError
from .qsim import EncodingSpec, Family

CLASSICAL = ("linear", "rbf", "laplacian")


@dataclass(frozen=True)
class KernelSpec:
    """One of ``linear``, ``rbf``, ``laplacian`` or ``quantum``."""

    variant: str
    gamma: Optional[float] = None
    encoding: Optional[EncodingSpec] = None

    def __post_init__(self):
        if self.variant not in CLASSICAL + ("quantum",):
            raise ConfigError(f"unknown kernel variant {self.variant!r}")
        if self.variant in ("rbf", "laplacian"):
            if self.gamma is None or not (math.isfinite(self.gamma) and self.gamma > 0):
                raise ConfigError(f"{self.variant} kernel needs a finite gamma > 0")
            object.__setattr__(self, "gamma", float(self.gamma))
        if self.variant == "quantum" and self.encoding is None:
            raise ConfigError("quantum kernel needs an EncodingSpec")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def rbf(cls, gamma: float) -> "KernelSpec":
        return cls("rbf", gamma=gamma)

    @classmethod
    def laplacian(cls, gamma: float) -> "KernelSpec":
        return cls("laplacian", gamma=gamma)

    @classmethod
    def quantum(cls, family, qubits: int, layers: int, bandwidth: float) -> "KernelSpec":
        return cls("quantum", encoding=EncodingSpec(Family(family), qubits, layers, bandwidth))

    @property
    def unit_diagonal(self) -> bool:
        return self.variant != "linear"

    def to_dict(self) -> dict:
        d: dict = {"variant": self.variant}
        if self.gamma is not None:
            d["gamma"] = self.gamma
        if self.encoding is not None:
            d["encoding"] = self.encoding.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        enc = d.get("encoding")
        return cls(
            d["variant"],
            gamma=d.get("gamma"),
            encoding=None if enc is None else EncodingSpec(**enc),
        )


@dataclass
class GramMatrix:
    matrix: np.ndarray
    kernel: KernelSpec
    sample_ids: list = field(default_factory=list)


def _real_pair(x, x_prime) -> tuple[np.ndarray, np.ndarray]:
    x, x_prime = np.asarray(x), np.asarray(x_prime)
    if np.iscomplexobj(x) or np.iscomplexobj(x_prime):
        raise ConfigError("classical kernels accept real features only")
    if x.shape != x_prime.shape:
        raise ConfigError(f"length mismatch: {x.shape} vs {x_prime.shape}")
    return x.astype(float), x_prime.astype(float)


def linear(x, x_prime) -> float:
    x, x_prime = _real_pair(x, x_prime)
    return float(np.dot(x, x_prime))


def rbf(x, x_prime, gamma: float) -> float:
    x, x_prime = _real_pair(x, x_prime)
    d = x - x_prime
    return float(np.exp(-gamma * np.dot(d, d)))


def laplacian(x, x_prime, gamma: float) -> float:
    x, x_prime = _real_pair(x, x_prime)
    return float(np.exp(-gamma * np.sum(np.abs(x - x_prime))))


def bandwidth_scale(x, beta: float) -> np.ndarray:
    """Scale features by a positive real bandwidth (phases are unchanged)."""
    if not (math.isfinite(beta) and beta > 0):
        raise ConfigError(f"bandwidth must be finite and > 0, got {beta}")
    return beta * np.asarray(x)


def kernel_value(spec: KernelSpec, x, x_prime) -> float:
    if spec.variant == "linear":
        return linear(x, x_prime)
    if spec.variant == "rbf":
        return rbf(x, x_prime, spec.gamma)
    if spec.variant == "laplacian":
        return laplacian(x, x_prime, spec.gamma)
    return qsim.kernel_value(spec.encoding, x, x_prime)


def _as_samples(spec: KernelSpec, X) -> np.ndarray:
    try:
        X = np.asarray(X)
    except ValueError as exc:
        raise ConfigError("samples have mixed dimensions") from exc
    if X.ndim == 1 and X.dtype == object:
        raise ConfigError("samples have mixed dimensions")
    if X.ndim != 2:
        raise ConfigError(f"expected a 2-D sample array, got shape {X.shape}")
    if spec.variant in CLASSICAL and np.iscomplexobj(X):
        raise ConfigError("classical kernels accept real features only")
    return X


def _block(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[1] != B.shape[1]:
        raise ConfigError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.variant == "linear":
        return np.asarray(A, dtype=float) @ np.asarray(B, dtype=float).T
    if spec.variant == "rbf":
        return np.exp(-spec.gamma * cdist(A, B, "sqeuclidean"))
    if spec.variant == "laplacian":
        return np.exp(-spec.gamma * cdist(A, B, "cityblock"))
    sa = qsim.encode_batch(spec.encoding, A)
    sb = sa if B is A else qsim.encode_batch(spec.encoding, B)
    return np.clip(np.abs(sa.conj() @ sb.T) ** 2, 0.0, 1.0)


def gram(spec: KernelSpec, X, sample_ids: Optional[Sequence] = None) -> GramMatrix:
    """Training kernel matrix ``K[i, j] = k(x_i, x_j)``.

    Quantum kernels encode each sample once and take pairwise overlaps of the
    cached states. The upper triangle is mirrored so the result is exactly
    symmetric.
    """
    X = _as_samples(spec, X)
    K = _block(spec, X, X)
    upper = np.triu(K)
    K = upper + np.triu(K, 1).T
    if spec.unit_diagonal:
        np.fill_diagonal(K, 1.0)
    ids = list(range(X.shape[0])) if sample_ids is None else list(sample_ids)
    return GramMatrix(matrix=K, kernel=spec, sample_ids=ids)


def cross_gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel values between every row of ``A`` and every row of ``B``."""
    A = _as_samples(spec, A)
    B = _as_samples(spec, B)
    return _block(spec, A, B)


# --- QKGM binary format ------------------------------------------------------

QKGM_MAGIC = b"QKGM"
QKGM_VERSION = 1


def write_gram(path, matrix: np.ndarray, kernel: KernelSpec) -> None:
    """Write ``matrix`` as QKGM: magic, version, u32 rows/cols, JSON blob, f64 LE."""
    matrix = np.asarray(matrix, dtype="<f8")
    rows, cols = matrix.shape
    blob = json.dumps(kernel.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(QKGM_MAGIC)
        fh.write(struct.pack("<BIII", QKGM_VERSION, rows, cols, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(matrix).tobytes())


def read_gram(path) -> tuple[np.ndarray, KernelSpec]:
    data = Path(path).read_bytes()
    if data[:4] != QKGM_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    head = struct.calcsize("<BIII")
    if len(data) < 4 + head:
        raise FormatError(f"{path}: truncated header")
    version, rows, cols, blob_len = struct.unpack_from("<BIII", data, 4)
    if version != QKGM_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    start = 4 + head + blob_len
    expected = start + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    kernel = KernelSpec.from_dict(json.loads(data[4 + head : start].decode("utf-8")))
    matrix = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=start).reshape(rows, cols)
    return matrix.astype(float), kernel
