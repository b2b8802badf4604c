"""Kernel learners on precomputed Gram matrices: soft-margin SVC (SMO) and KRC.

The SVC solver follows Platt's SMO: an outer loop alternating full sweeps and
sweeps over non-bound multipliers, with the second multiplier picked to
maximise ``|E1 - E2|``. Once Platt's loop satisfies the KKT conditions at
``tol`` a short maximal-violating-pair phase tightens the dual solution so
the returned multipliers are accurate well beyond ``tol``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .kernels import GramMatrix, KernelSpec
from .numerics import solve_spd

log = logging.getLogger(__name__)

POLISH_GAP = 1e-9
_EPS = 1e-12


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class SvcModel:
    alphas: np.ndarray
    bias: float
    labels: np.ndarray
    C: float
    kernel: Optional[KernelSpec] = None
    sample_ids: list = field(default_factory=list)
    converged: bool = True
    iterations: int = 0

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alphas > 0)

    def to_dict(self) -> dict:
        return {
            "algorithm": "svc",
            "kernel": None if self.kernel is None else self.kernel.to_dict(),
            "hyperparameters": {"C": self.C},
            "alphas": self.alphas.tolist(),
            "bias": self.bias,
            "labels": self.labels.astype(int).tolist(),
            "sample_ids": list(self.sample_ids),
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvcModel":
        return cls(
            alphas=np.asarray(d["alphas"], dtype=float),
            bias=float(d["bias"]),
            labels=np.asarray(d["labels"], dtype=float),
            C=float(d["hyperparameters"]["C"]),
            kernel=None if d["kernel"] is None else KernelSpec.from_dict(d["kernel"]),
            sample_ids=list(d["sample_ids"]),
            converged=bool(d["converged"]),
        )


@dataclass
class KrcModel:
    alphas: np.ndarray
    lam: float
    kernel: Optional[KernelSpec] = None
    sample_ids: list = field(default_factory=list)
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "algorithm": "krc",
            "kernel": None if self.kernel is None else self.kernel.to_dict(),
            "hyperparameters": {"lambda": self.lam},
            "alphas": self.alphas.tolist(),
            "sample_ids": list(self.sample_ids),
            "converged": True,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KrcModel":
        return cls(
            alphas=np.asarray(d["alphas"], dtype=float),
            lam=float(d["hyperparameters"]["lambda"]),
            kernel=None if d["kernel"] is None else KernelSpec.from_dict(d["kernel"]),
            sample_ids=list(d["sample_ids"]),
        )


def model_from_dict(d: dict):
    return SvcModel.from_dict(d) if d["algorithm"] == "svc" else KrcModel.from_dict(d)


def _unpack(K, y) -> tuple[np.ndarray, np.ndarray, Optional[KernelSpec], list]:
    if isinstance(K, GramMatrix):
        mat, spec, ids = K.matrix, K.kernel, list(K.sample_ids)
    else:
        mat, spec, ids = np.asarray(K, dtype=float), None, []
    y = np.asarray(y, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"Gram matrix must be square, got {mat.shape}")
    if y.shape != (mat.shape[0],):
        raise ConfigError(f"{len(y)} labels for a {mat.shape[0]}x{mat.shape[0]} Gram matrix")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DataError("labels must be +1 or -1")
    if not ids:
        ids = list(range(len(y)))
    return mat, y, spec, ids


def dual_objective(alphas, y, K) -> float:
    """SVC dual objective ``sum(a) - 1/2 a^T Q a`` (to be maximised)."""
    ay = np.asarray(alphas) * np.asarray(y)
    return float(np.sum(alphas) - 0.5 * ay @ np.asarray(K) @ ay)


class _Smo:
    def __init__(self, K: np.ndarray, y: np.ndarray, C: float, tol: float):
        self.K, self.y, self.C, self.tol = K, y, C, tol
        self.m = len(y)
        self.alpha = np.zeros(self.m)
        self.F = np.zeros(self.m)  # F_i = sum_j alpha_j y_j K_ij
        self.b = 0.0
        self.steps = 0

    def error(self, i: int) -> float:
        return self.F[i] + self.b - self.y[i]

    def _snap(self, a: float) -> float:
        if a < _EPS * self.C:
            return 0.0
        if a > self.C * (1 - _EPS):
            return self.C
        return a

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        K, y, C = self.K, self.y, self.C
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = y[i1], y[i2]
        E1, E2 = self.error(i1), self.error(i2)
        s = y1 * y2
        if y1 != y2:
            lo, hi = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            lo, hi = max(0.0, a2 + a1 - C), min(C, a2 + a1)
        if hi - lo < _EPS * max(1.0, C):
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2 * k12
        if eta > _EPS:
            a2n = min(max(a2 + y2 * (E1 - E2) / eta, lo), hi)
        else:
            # objective at both ends of the segment
            f1 = y1 * (E1 - self.b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (E2 - self.b) - s * a1 * k12 - a2 * k22
            l1 = a1 + s * (a2 - lo)
            h1 = a1 + s * (a2 - hi)
            obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12
            obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12
            if obj_lo < obj_hi - 1e-12:
                a2n = lo
            elif obj_lo > obj_hi + 1e-12:
                a2n = hi
            else:
                a2n = a2
        a2n = self._snap(a2n)
        if abs(a2n - a2) < 1e-12 * (a2n + a2 + 1e-12):
            return False
        a1n = a1 + s * (a2 - a2n)
        if a1n < 0:
            a2n += s * a1n
            a1n = 0.0
        elif a1n > C:
            a2n += s * (a1n - C)
            a1n = C
        a1n = self._snap(a1n)
        d1, d2 = y1 * (a1n - a1), y2 * (a2n - a2)
        b1 = self.b - E1 - d1 * k11 - d2 * k12
        b2 = self.b - E2 - d1 * k12 - d2 * k22
        if 0 < a1n < C:
            b_new = b1
        elif 0 < a2n < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        self.F += d1 * K[:, i1] + d2 * K[:, i2]
        self.b = b_new
        self.alpha[i1], self.alpha[i2] = a1n, a2n
        self.steps += 1
        return True

    def examine(self, i2: int) -> int:
        y2, a2 = self.y[i2], self.alpha[i2]
        E2 = self.error(i2)
        r2 = E2 * y2
        if not ((r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0)):
            return 0
        free = np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))
        if len(free) > 1:
            E = self.F[free] + self.b - self.y[free]
            i1 = int(free[np.argmin(E)] if E2 > 0 else free[np.argmax(E)])
            if self.take_step(i1, i2):
                return 1
        for i1 in np.roll(free, -(i2 % max(len(free), 1))):
            if self.take_step(int(i1), i2):
                return 1
        for i1 in np.roll(np.arange(self.m), -(i2 + 1)):
            if self.take_step(int(i1), i2):
                return 1
        return 0

    def platt_loop(self, max_passes: int) -> bool:
        changed, examine_all, passes = 0, True, 0
        while changed > 0 or examine_all:
            # a single running threshold can cycle on rank-deficient K; the
            # pair gap certifies KKT at tol for the best bias directly
            if self.kkt_gap() <= 2 * self.tol:
                return True
            if passes >= max_passes:
                return False
            changed = 0
            if examine_all:
                for i in range(self.m):
                    changed += self.examine(i)
            else:
                for i in np.flatnonzero((self.alpha > 0) & (self.alpha < self.C)):
                    changed += self.examine(int(i))
            passes += 1
            if examine_all:
                examine_all = False
            elif changed == 0:
                examine_all = True
        return True

    def _violation_sets(self) -> tuple[np.ndarray, np.ndarray]:
        a, y, C = self.alpha, self.y, self.C
        up = ((a < C) & (y > 0)) | ((a > 0) & (y < 0))
        low = ((a < C) & (y < 0)) | ((a > 0) & (y > 0))
        return up, low

    def kkt_gap(self) -> float:
        v = self.y - self.F
        up, low = self._violation_sets()
        if not up.any() or not low.any():
            return 0.0
        return float(v[up].max() - v[low].min())

    def polish(self, max_iter: int) -> bool:
        """Maximal-violating-pair SMO steps until the KKT gap is below POLISH_GAP."""
        K, y, C = self.K, self.y, self.C
        for _ in range(max_iter):
            v = y - self.F
            up, low = self._violation_sets()
            if not up.any() or not low.any():
                return True
            i = int(np.flatnonzero(up)[np.argmax(v[up])])
            j = int(np.flatnonzero(low)[np.argmin(v[low])])
            gap = v[i] - v[j]
            if gap <= POLISH_GAP:
                return True
            eta = max(K[i, i] + K[j, j] - 2 * K[i, j], 1e-12)
            room_i = C - self.alpha[i] if y[i] > 0 else self.alpha[i]
            room_j = self.alpha[j] if y[j] > 0 else C - self.alpha[j]
            t = min(gap / eta, room_i, room_j)
            self.alpha[i] = self._snap(self.alpha[i] + y[i] * t)
            self.alpha[j] = self._snap(self.alpha[j] - y[j] * t)
            self.F += t * (K[:, i] - K[:, j])
            self.steps += 1
        return False

    def bias(self) -> float:
        v = self.y - self.F
        free = (self.alpha > 0) & (self.alpha < self.C)
        if free.any():
            return float(np.mean(v[free]))
        up, low = self._violation_sets()
        lower = v[up].max() if up.any() else None
        upper = v[low].min() if low.any() else None
        if lower is None:
            return float(upper)
        if upper is None:
            return float(lower)
        return float(0.5 * (lower + upper))


def train_svc(K, y, C: float, tol: float = 1e-3, max_passes: Optional[int] = None) -> SvcModel:
    """Train a soft-margin SVC on a precomputed Gram matrix.

    Args:
        K: ``GramMatrix`` or square array of training kernel values.
        y: labels in {+1, -1}; both classes must be present.
        C: box constraint, > 0.
        tol: KKT tolerance of the SMO outer loop.
        max_passes: cap on outer-loop sweeps (default ``10 * M``).

    On hitting an iteration cap the current (always feasible) iterate is
    returned with ``converged=False`` and a ``ConvergenceWarning``.
    """
    mat, y, spec, ids = _unpack(K, y)
    if not (np.isfinite(C) and C > 0):
        raise ConfigError(f"C must be finite and > 0, got {C}")
    if len(np.unique(y)) < 2:
        raise DataError("SVC training needs both classes present")
    m = len(y)
    smo = _Smo(mat, y, float(C), tol)
    if not smo.platt_loop(max_passes if max_passes is not None else 10 * m):
        log.debug("SMO outer loop hit its pass cap (M=%d, C=%g)", m, C)
    ok = smo.polish(max(20_000, 50 * m))
    if not ok:
        warnings.warn(f"SMO did not converge (M={m}, C={C})", ConvergenceWarning, stacklevel=2)
    return SvcModel(
        alphas=smo.alpha.copy(),
        bias=smo.bias(),
        labels=y.copy(),
        C=float(C),
        kernel=spec,
        sample_ids=ids,
        converged=ok,
        iterations=smo.steps,
    )


def _signs(scores: np.ndarray) -> np.ndarray:
    return np.where(scores >= 0, 1, -1)


def _check_cross(cross_k, m: int) -> np.ndarray:
    cross_k = np.asarray(cross_k, dtype=float)
    if cross_k.ndim != 2 or cross_k.shape[1] != m:
        raise ConfigError(f"cross-kernel matrix shape {cross_k.shape} does not match {m} training samples")
    return cross_k


def svc_decision(model: SvcModel, cross_k) -> tuple[np.ndarray, np.ndarray]:
    cross_k = _check_cross(cross_k, len(model.alphas))
    scores = cross_k @ (model.alphas * model.labels) + model.bias
    return scores, _signs(scores)


def train_krc(K, y, lam: float) -> KrcModel:
    """Kernel ridge classifier: solve ``(K + lam I) alpha = y``."""
    mat, y, spec, ids = _unpack(K, y)
    if not (np.isfinite(lam) and lam > 0):
        raise ConfigError(f"lambda must be finite and > 0, got {lam}")
    alphas = solve_spd(mat + lam * np.eye(len(y)), y)
    return KrcModel(alphas=alphas, lam=float(lam), kernel=spec, sample_ids=ids)


def krc_decision(model: KrcModel, cross_k) -> tuple[np.ndarray, np.ndarray]:
    cross_k = _check_cross(cross_k, len(model.alphas))
    scores = cross_k @ model.alphas
    return scores, _signs(scores)


def train(algorithm: str, K, y, reg: float, **kwargs):
    if algorithm == "svc":
        return train_svc(K, y, reg, **kwargs)
    if algorithm == "krc":
        return train_krc(K, y, reg)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def decision(model, cross_k) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(model, SvcModel):
        return svc_decision(model, cross_k)
    return krc_decision(model, cross_k)
