"""Chip preprocessing: log-modulus transform, flattening, stratified split, PCA.

PCA works on real or complex samples. The covariance is the Hermitian form
``sum (x - mu)(x - mu)^H / (M - 1)``; components are its leading eigenvectors,
each rotated so that its largest-modulus entry is real and positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .numerics import hermitian_eig
from .rng import stream


def h_transform(z):
    """``ln(1 + |z|) * exp(i arg z)`` elementwise.

    Real input must be non-negative (GRD pixels) and yields real output equal
    to ``log1p``. Complex input keeps its phase; ``h(0) = 0``.
    """
    z = np.asarray(z)
    if not np.all(np.isfinite(z)):
        raise DataError("h_transform input must be finite")
    if not np.iscomplexobj(z):
        if np.any(z < 0):
            raise DataError("real pixel values must be non-negative")
        return np.log1p(z.astype(float))
    mod = np.abs(z)
    # z / |z| is the unit phasor; zero entries stay zero
    with np.errstate(invalid="ignore", divide="ignore"):
        phasor = np.where(mod > 0, z / np.where(mod > 0, mod, 1.0), 0.0)
    return np.log1p(mod) * phasor


def flatten(chip) -> np.ndarray:
    chip = np.asarray(chip)
    if chip.size == 0:
        raise DataError("cannot flatten an empty chip")
    return chip.reshape(-1).copy()


@dataclass(frozen=True)
class SplitIndices:
    train: list
    test: list
    seed: int


def stratified_split(labels, train_fraction: float, seed: int) -> SplitIndices:
    """Per-class seeded shuffle; the first ``floor(n_c * fraction)`` go to train."""
    labels = np.asarray(labels)
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DataError("stratified split needs both classes present")
    rng = stream(seed, "split")
    train, test = [], []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_train = math.floor(len(idx) * train_fraction + 1e-9)
        train.extend(idx[:n_train].tolist())
        test.extend(idx[n_train:].tolist())
    return SplitIndices(train=sorted(train), test=sorted(test), seed=seed)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # d x k, orthonormal columns
    explained_variance: np.ndarray
    fitted_on: int

    @property
    def k(self) -> int:
        return self.components.shape[1]

    @property
    def d(self) -> int:
        return self.components.shape[0]

    def truncate(self, k: int) -> "PcaModel":
        """The model restricted to its first ``k`` components.

        Identical to refitting with ``k`` components, since the fit keeps
        eigenvectors in descending eigenvalue order.
        """
        if not 1 <= k <= self.k:
            raise ConfigError(f"cannot truncate {self.k} components to {k}")
        return PcaModel(self.mean, self.components[:, :k], self.explained_variance[:k], self.fitted_on)

    def to_dict(self) -> dict:
        return {
            "domain": "complex" if np.iscomplexobj(self.components) else "real",
            "k": self.k,
            "d": self.d,
            "fitted_on": self.fitted_on,
            "mean": _interleave(self.mean),
            "components": _interleave(self.components),
            "explained_variance": self.explained_variance.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        cplx = d["domain"] == "complex"
        mean = _deinterleave(d["mean"], (d["d"],), cplx)
        comps = _deinterleave(d["components"], (d["d"], d["k"]), cplx)
        return cls(mean, comps, np.asarray(d["explained_variance"], dtype=float), d["fitted_on"])


def _interleave(a: np.ndarray) -> list:
    a = np.asarray(a, dtype=np.complex128).reshape(-1)
    return np.column_stack([a.real, a.imag]).reshape(-1).tolist()


def _deinterleave(values, shape, cplx: bool) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1, 2)
    out = (v[:, 0] + 1j * v[:, 1]).reshape(shape)
    return out if cplx else out.real.copy()


def _fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-modulus entry (lowest index on ties) is real positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        mod = np.abs(col)
        i = int(np.flatnonzero(mod >= mod.max() * (1 - 1e-12))[0])
        phase = col[i] / mod[i]
        out[:, j] = col / phase
        if np.iscomplexobj(out):
            out[i, j] = mod[i]
    return out


def pca_fit(X_train, k: int) -> PcaModel:
    """Fit a k-component PCA on the rows of ``X_train`` (real or complex)."""
    X = np.asarray(X_train)
    if X.ndim != 2:
        raise ConfigError(f"expected a 2-D sample array, got shape {X.shape}")
    m, d = X.shape
    if m < 2:
        raise ConfigError("PCA needs at least two samples")
    if not 1 <= k <= min(d, m):
        raise ConfigError(f"component count {k} outside 1..{min(d, m)}")
    mean = X.mean(axis=0)
    Xc = X - mean
    # E[(x - mu)(x - mu)^H]
    cov = (Xc.T @ Xc.conj()) / (m - 1)
    cov = 0.5 * (cov + cov.conj().T)
    eig = hermitian_eig(cov)
    comps = _fix_phase(eig.eigenvectors[:, :k])
    variance = np.clip(eig.eigenvalues[:k], 0.0, None)
    return PcaModel(mean=mean, components=comps, explained_variance=variance, fitted_on=m)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    """Project rows of ``X``: ``components^H (x - mean)``."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ConfigError(f"expected samples of dimension {model.d}, got shape {X.shape}")
    return (X - model.mean) @ model.components.conj()
