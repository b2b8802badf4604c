"""Noiseless statevector simulation of the three data-encoding circuit families.

Conventions:

* ``R_Y(t) = [[cos(t/2), -sin(t/2)], [sin(t/2), cos(t/2)]]``
* ``R_Z(t) = diag(exp(-i t/2), exp(i t/2))``
* amplitude index ``i`` encodes the basis state with qubit 0 as the most
  significant bit (qubit 0 is the top wire of a circuit diagram).

Gates act by pairwise amplitude updates on a ``(batch, 2**n)`` array so a
whole sample set is encoded at once. The dense-matrix path in
:func:`unitary_of` exists only as an independent reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigError

MAX_QUBITS = 16
ORACLE_MAX_QUBITS = 6


class Family(str, Enum):
    RY_1D_ST = "Ry1DSt"
    RYRZ_1D_ALT = "RyRz1DAlt"
    CRYRZ_1D_ST = "CRyRz1DSt"

    @property
    def complex_input(self) -> bool:
        return self is Family.CRYRZ_1D_ST


@dataclass(frozen=True)
class EncodingSpec:
    family: Family
    qubits: int
    layers: int = 2
    bandwidth: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", Family(self.family))
        except ValueError:
            raise ConfigError(f"unknown circuit family {self.family!r}") from None
        if not 1 <= int(self.qubits) <= MAX_QUBITS:
            raise ConfigError(f"qubits must be in 1..{MAX_QUBITS}, got {self.qubits}")
        if int(self.layers) < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigError(f"bandwidth must be finite and > 0, got {self.bandwidth}")
        object.__setattr__(self, "qubits", int(self.qubits))
        object.__setattr__(self, "layers", int(self.layers))
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "qubits": self.qubits,
            "layers": self.layers,
            "bandwidth": self.bandwidth,
        }


@dataclass(frozen=True)
class GateEvent:
    kind: str  # "RY", "RZ" or "CNOT"
    target: int
    control: Optional[int] = None
    angle: Optional[float] = None


@dataclass(frozen=True)
class GateTemplate:
    """A gate whose angle is a function of one input feature.

    ``source`` is ``"scaled"`` (bandwidth * x), ``"modulus"``
    (bandwidth * |z|) or ``"phase"`` (arg z, independent of bandwidth).
    """

    kind: str
    target: int
    control: Optional[int] = None
    feature: Optional[int] = None
    source: Optional[str] = None

    def bind(self, x: np.ndarray, bandwidth: float) -> GateEvent:
        return GateEvent(self.kind, self.target, self.control, _angles(self, x, bandwidth))


@dataclass(frozen=True)
class StateVector:
    qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.qubits,):
            raise ConfigError(f"expected {2**self.qubits} amplitudes, got shape {amps.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, qubits: int) -> "StateVector":
        amps = np.zeros(2**qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(qubits, amps)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


# --- batched in-place gate kernels on arrays of shape (batch, 2**n) ---------


def _ry_inplace(states: np.ndarray, n: int, q: int, theta: np.ndarray) -> None:
    v = states.reshape(states.shape[0], 2**q, 2, 2 ** (n - q - 1))
    c = np.cos(theta / 2.0)[:, None, None]
    s = np.sin(theta / 2.0)[:, None, None]
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    v[:, :, 0, :] = c * a0 - s * a1
    v[:, :, 1, :] = s * a0 + c * a1


def _rz_inplace(states: np.ndarray, n: int, q: int, theta: np.ndarray) -> None:
    v = states.reshape(states.shape[0], 2**q, 2, 2 ** (n - q - 1))
    v[:, :, 0, :] *= np.exp(-0.5j * theta)[:, None, None]
    v[:, :, 1, :] *= np.exp(0.5j * theta)[:, None, None]


def _cnot_inplace(states: np.ndarray, n: int, control: int, target: int) -> None:
    v = states.reshape((states.shape[0],) + (2,) * n)
    index = [slice(None)] * (n + 1)
    index[1 + control] = 1
    sub = v[tuple(index)]
    axis = target if target < control else target - 1
    sub[...] = np.flip(sub, axis=1 + axis).copy()


def _check_qubit(state: StateVector, q: int) -> None:
    if not 0 <= q < state.qubits:
        raise IndexError(f"qubit {q} out of range for {state.qubits}-qubit state")


def apply_ry(state: StateVector, q: int, theta: float) -> StateVector:
    _check_qubit(state, q)
    amps = state.amplitudes[None, :].copy()
    _ry_inplace(amps, state.qubits, q, np.array([theta], dtype=float))
    return StateVector(state.qubits, amps[0])


def apply_rz(state: StateVector, q: int, theta: float) -> StateVector:
    _check_qubit(state, q)
    amps = state.amplitudes[None, :].copy()
    _rz_inplace(amps, state.qubits, q, np.array([theta], dtype=float))
    return StateVector(state.qubits, amps[0])


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_qubit(state, control)
    _check_qubit(state, target)
    if control == target:
        raise IndexError("CNOT control and target must differ")
    amps = state.amplitudes[None, :].copy()
    _cnot_inplace(amps, state.qubits, control, target)
    return StateVector(state.qubits, amps[0])


# --- circuit families --------------------------------------------------------


def _staircase(n: int) -> list[GateTemplate]:
    return [GateTemplate("CNOT", target=i + 1, control=i) for i in range(n - 1)]


def _layer(spec: EncodingSpec, k: int) -> list[GateTemplate]:
    n = spec.qubits
    gates: list[GateTemplate] = []
    if spec.family is Family.RY_1D_ST:
        gates += [GateTemplate("RY", target=i, feature=i, source="scaled") for i in range(n)]
        gates += _staircase(n)
    elif spec.family is Family.RYRZ_1D_ALT:
        for i in range(n):
            gates.append(GateTemplate("RY", target=i, feature=i, source="scaled"))
            gates.append(GateTemplate("RZ", target=i, feature=i, source="scaled"))
        gates += [GateTemplate("CNOT", target=c + 1, control=c) for c in range(k % 2, n - 1, 2)]
    else:
        for i in range(n):
            gates.append(GateTemplate("RY", target=i, feature=i, source="modulus"))
            gates.append(GateTemplate("RZ", target=i, feature=i, source="phase"))
        gates += _staircase(n)
    return gates


def layout(spec: EncodingSpec) -> list[GateTemplate]:
    """Gate sequence of the encoding circuit, base layer repeated ``spec.layers`` times.

    Within a layer all rotations precede the entangling CNOTs. RyRz1DAlt
    controls its CNOTs on even qubits (0, 2, ...) in even layers and on odd
    qubits in odd layers.
    """
    gates: list[GateTemplate] = []
    for k in range(spec.layers):
        gates += _layer(spec, k)
    return gates


def _angles(template: GateTemplate, x: np.ndarray, bandwidth: float):
    """Rotation angle(s) for one template; ``x`` may be 1-D or (batch, n)."""
    if template.kind == "CNOT":
        return None
    col = x[..., template.feature]
    if template.source == "scaled":
        return bandwidth * np.real(col)
    if template.source == "modulus":
        return bandwidth * np.abs(col)
    # np.angle(0) == 0, so zero features give an identity RZ
    return np.angle(col)


def _validate_inputs(spec: EncodingSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != spec.qubits:
        raise ConfigError(f"feature dimension {x.shape[-1]} does not match {spec.qubits} qubits")
    if np.iscomplexobj(x):
        if not spec.family.complex_input:
            if np.any(np.imag(x) != 0):
                raise ConfigError(f"{spec.family.value} requires real features")
            x = np.real(x)
    elif spec.family.complex_input:
        x = x.astype(np.complex128)
    if not np.all(np.isfinite(x)):
        raise ConfigError("features must be finite")
    return x


def bind(spec: EncodingSpec, x: np.ndarray) -> list[GateEvent]:
    """Instantiate the layout of ``spec`` with the angles for sample ``x``."""
    x = _validate_inputs(spec, x)
    if x.ndim != 1:
        raise ConfigError("bind expects a single feature vector")
    out = []
    for t in layout(spec):
        angle = _angles(t, x, spec.bandwidth)
        out.append(GateEvent(t.kind, t.target, t.control, None if angle is None else float(angle)))
    return out


def encode_batch(spec: EncodingSpec, X: np.ndarray) -> np.ndarray:
    """Encoded states ``U(x)|0>`` for every row of ``X``; shape ``(M, 2**n)``."""
    X = _validate_inputs(spec, X)
    if X.ndim != 2:
        raise ConfigError("encode_batch expects a 2-D sample array")
    n = spec.qubits
    states = np.zeros((X.shape[0], 2**n), dtype=np.complex128)
    states[:, 0] = 1.0
    for t in layout(spec):
        if t.kind == "RY":
            _ry_inplace(states, n, t.target, _angles(t, X, spec.bandwidth))
        elif t.kind == "RZ":
            _rz_inplace(states, n, t.target, _angles(t, X, spec.bandwidth))
        else:
            _cnot_inplace(states, n, t.control, t.target)
    return states


def encode(spec: EncodingSpec, x: np.ndarray) -> StateVector:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ConfigError("encode expects a single feature vector")
    return StateVector(spec.qubits, encode_batch(spec, x[None, :])[0])


def kernel_value(spec: EncodingSpec, x: np.ndarray, x_prime: np.ndarray) -> float:
    """Fidelity kernel ``|<0|U(x')^dagger U(x)|0>|^2`` via two encoded states."""
    a = encode(spec, x).amplitudes
    b = encode(spec, x_prime).amplitudes
    return fidelity(a, b)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    value = abs(np.vdot(b, a)) ** 2
    return float(min(max(value, 0.0), 1.0))


# --- dense reference ---------------------------------------------------------

_I2 = np.eye(2, dtype=np.complex128)
_P0 = np.diag([1.0, 0.0]).astype(np.complex128)
_P1 = np.diag([0.0, 1.0]).astype(np.complex128)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def _embed(ops: dict[int, np.ndarray], n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for q in range(n):
        out = np.kron(out, ops.get(q, _I2))
    return out


def _dense_gate(event: GateEvent, n: int) -> np.ndarray:
    if event.kind == "RY":
        c, s = np.cos(event.angle / 2), np.sin(event.angle / 2)
        return _embed({event.target: np.array([[c, -s], [s, c]], dtype=np.complex128)}, n)
    if event.kind == "RZ":
        rz = np.diag([np.exp(-0.5j * event.angle), np.exp(0.5j * event.angle)])
        return _embed({event.target: rz}, n)
    return _embed({event.control: _P0}, n) + _embed({event.control: _P1, event.target: _X}, n)


def unitary_of(spec: EncodingSpec, x: np.ndarray) -> np.ndarray:
    """Dense ``2**n x 2**n`` encoding unitary built from Kronecker products.

    Intended as a small-scale reference only (``n <= 6``).
    """
    if spec.qubits > ORACLE_MAX_QUBITS:
        raise ConfigError(f"unitary_of is limited to {ORACLE_MAX_QUBITS} qubits")
    n = spec.qubits
    u = np.eye(2**n, dtype=np.complex128)
    for event in bind(spec, x):
        u = _dense_gate(event, n) @ u
    return u
