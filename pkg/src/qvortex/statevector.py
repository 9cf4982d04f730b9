"""Dense statevector simulator.

Ordering convention (used everywhere in the package): qubit 0 is the least
significant bit of the amplitude index. For a dense gate acting on
``targets = (t0, t1, ...)``, ``t0`` is the least significant bit of the gate
matrix index. The spacetime circuit puts the spatial register on the low
qubits and the temporal register on the high qubits, so temporal basis index
``i`` selects the contiguous block ``[i * 2**n_p, (i+1) * 2**n_p)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, NonUnitaryError

ORDERING_NOTE = (
    "qubit 0 is the least-significant bit of the amplitude index; "
    "temporal qubits occupy the high bits, spatial qubits the low bits"
)

UNITARY_TOL = 1e-10

_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)
PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """``exp(-i angle P / 2)`` for a single Pauli axis."""
    p = PAULI[axis.upper()]
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * p


def check_unitary(m: np.ndarray, tol: float = UNITARY_TOL) -> None:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] & (m.shape[0] - 1):
        raise DimensionError(f"gate matrix must be square with power-of-two size, got {m.shape}")
    err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
    if err > tol:
        raise NonUnitaryError(f"matrix deviates from unitarity by {err:.3e}")


@dataclass(frozen=True)
class GateOp:
    """One circuit element.

    ``kind`` is one of ``h``, ``x``, ``y``, ``z``, ``rx``, ``ry``, ``rz``,
    ``u`` (dense matrix). ``controls`` turns any kind into its controlled
    version (all controls must read 1).
    """

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None
    matrix: np.ndarray | None = field(default=None, repr=False, compare=False)
    controls: tuple[int, ...] = ()
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        object.__setattr__(self, "controls", tuple(int(q) for q in self.controls))
        if len(set(self.targets)) != len(self.targets):
            raise DimensionError(f"repeated target qubits {self.targets}")
        if set(self.targets) & set(self.controls) or len(set(self.controls)) != len(self.controls):
            raise DimensionError("controls must be distinct and disjoint from targets")
        if self.kind == "u":
            m = np.asarray(self.matrix, dtype=np.complex128)
            if m.shape != (2 ** len(self.targets),) * 2:
                raise DimensionError(
                    f"matrix {m.shape} does not match {len(self.targets)} target qubits"
                )
            check_unitary(m)
            object.__setattr__(self, "matrix", m)
        elif self.kind in ("rx", "ry", "rz"):
            if self.angle is None:
                raise DimensionError(f"{self.kind} needs an angle")
        elif self.kind not in ("h", "x", "y", "z"):
            raise DimensionError(f"unknown gate kind {self.kind!r}")
        if self.kind != "u" and len(self.targets) != 1:
            raise DimensionError(f"{self.kind} acts on exactly one qubit")

    @property
    def support(self) -> tuple[int, ...]:
        """Targets followed by controls (LSB first in ``support_matrix``)."""
        return self.targets + self.controls

    @property
    def is_cz(self) -> bool:
        return self.kind == "z" and len(self.controls) == 1

    def target_matrix(self) -> np.ndarray:
        if self.kind == "u":
            return self.matrix
        if self.kind == "h":
            return _H
        if self.kind in ("x", "y", "z"):
            return PAULI[self.kind.upper()]
        return rotation_matrix(self.kind[1], self.angle)

    def support_matrix(self) -> np.ndarray:
        """Full unitary on ``support`` including the control structure."""
        inner = self.target_matrix()
        if not self.controls:
            return inner
        dt = inner.shape[0]
        full = np.eye(dt * 2 ** len(self.controls), dtype=np.complex128)
        # controls are the high bits of the support index; all-ones is the last block
        full[-dt:, -dt:] = inner
        return full

    def dagger(self) -> "GateOp":
        if self.kind == "u":
            return GateOp("u", self.targets, matrix=self.matrix.conj().T,
                          controls=self.controls, label=self.label + "^dag")
        if self.kind in ("rx", "ry", "rz"):
            return GateOp(self.kind, self.targets, -self.angle, controls=self.controls, label=self.label)
        return self


def hadamard(q: int) -> GateOp:
    return GateOp("h", (q,))


def pauli(axis: str, q: int) -> GateOp:
    return GateOp(axis.lower(), (q,))


def rotation(axis: str, angle: float, q: int) -> GateOp:
    return GateOp("r" + axis.lower(), (q,), angle=float(angle))


def dense(matrix: np.ndarray, targets: Sequence[int], label: str = "") -> GateOp:
    return GateOp("u", tuple(targets), matrix=matrix, label=label)


def controlled(op: GateOp, controls: Sequence[int]) -> GateOp:
    return GateOp(op.kind, op.targets, op.angle, op.matrix,
                  tuple(op.controls) + tuple(controls), op.label)


def cz(a: int, b: int) -> GateOp:
    return GateOp("z", (b,), controls=(a,), label="CZ")


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self) -> None:
        a = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if a.size != 2 ** self.n_qubits:
            raise DimensionError(f"{a.size} amplitudes for {self.n_qubits} qubits")
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        a = np.zeros(2 ** n_qubits, dtype=np.complex128)
        a[0] = 1.0
        return cls(a, n_qubits)

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence[complex]) -> "StateVector":
        a = np.asarray(amplitudes, dtype=np.complex128)
        n = int(round(math.log2(a.size)))
        if 2 ** n != a.size:
            raise DimensionError(f"length {a.size} is not a power of two")
        return cls(a, n)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _apply_on_axes(tensor: np.ndarray, mat: np.ndarray, axes: list[int]) -> np.ndarray:
    """Contract ``mat`` (2^m x 2^m, LSB = axes[0]) into the listed tensor axes."""
    m = len(axes)
    u = mat.reshape((2,) * (2 * m))
    # matrix tensor axes are MSB first: input axis m+i pairs with qubit axes[m-1-i]
    in_axes = [axes[m - 1 - i] for i in range(m)]
    out = np.tensordot(u, tensor, axes=(list(range(m, 2 * m)), in_axes))
    return np.moveaxis(out, list(range(m)), in_axes)


def _validate(op: GateOp, n: int) -> None:
    for q in op.support:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n}-qubit register")


def apply_array(amps: np.ndarray, op: GateOp, n: int) -> np.ndarray:
    """Apply ``op`` to a raw amplitude array (batched leading axes not supported)."""
    _validate(op, n)
    tensor = amps.reshape((2,) * n)
    mat = op.target_matrix()
    if not op.controls:
        out = _apply_on_axes(tensor, mat, [n - 1 - q for q in op.targets])
        return out.reshape(-1)
    # block masking: only the slice with every control bit set is transformed
    idx: list = [slice(None)] * n
    for c in op.controls:
        idx[n - 1 - c] = 1
    idx = tuple(idx)
    sub = tensor[idx]
    removed = sorted(n - 1 - c for c in op.controls)
    sub_axes = [(n - 1 - q) - sum(1 for r in removed if r < n - 1 - q) for q in op.targets]
    out = tensor.copy()
    out[idx] = _apply_on_axes(sub, mat, sub_axes)
    return out.reshape(-1)


def apply(state: StateVector, op: GateOp) -> StateVector:
    return StateVector(apply_array(state.amplitudes, op, state.n_qubits), state.n_qubits)


def run_circuit(state: StateVector, ops: Iterable[GateOp]) -> StateVector:
    amps = state.amplitudes
    for op in ops:
        amps = apply_array(amps, op, state.n_qubits)
    return StateVector(amps, state.n_qubits)


def circuit_unitary(ops: Iterable[GateOp], n_qubits: int) -> np.ndarray:
    """Brute-force matrix of a circuit by acting on every basis column."""
    ops = list(ops)
    dim = 2 ** n_qubits
    cols = np.eye(dim, dtype=np.complex128)
    out = np.empty_like(cols)
    for j in range(dim):
        amps = cols[:, j]
        for op in ops:
            amps = apply_array(amps, op, n_qubits)
        out[:, j] = amps
    return out


def expectation_z(state: StateVector, qubit: int) -> float:
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits}-qubit register")
    probs = np.abs(state.amplitudes) ** 2
    bits = (np.arange(probs.size) >> qubit) & 1
    return float(np.sum(probs * (1 - 2 * bits)))


def save_statevector_json(state: StateVector, path: str | Path) -> None:
    doc = {
        "n_qubits": state.n_qubits,
        "ordering": ORDERING_NOTE,
        "amplitudes": [[float(z.real), float(z.imag)] for z in state.amplitudes],
    }
    Path(path).write_text(json.dumps(doc))


def load_statevector_json(path: str | Path) -> StateVector:
    doc = json.loads(Path(path).read_text())
    return StateVector(np.array([complex(a, b) for a, b in doc["amplitudes"]]), doc["n_qubits"])
