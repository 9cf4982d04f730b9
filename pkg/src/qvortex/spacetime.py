"""Spatiotemporal encoding circuit.

Spatial qubits ``0 .. n_p-1`` hold the wave state, temporal qubits
``n_p .. n_p+n_t-1`` are put in uniform superposition and temporal qubit
``k-1`` controls ``F_k = F**(2**(k-1))``. After the ``n_t`` controlled gates
the temporal block ``i`` holds ``F**i |psi0> / sqrt(N_t)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoding import WaveState
from .errors import BlockWeightError, ConfigError, DimensionError
from .statevector import (
    GateOp,
    StateVector,
    check_unitary,
    controlled,
    dense,
    hadamard,
    run_circuit,
)

BLOCK_WEIGHT_TOL = 1e-6


def n_qubits_for(dim: int) -> int:
    return max(1, math.ceil(math.log2(dim))) if dim > 1 else 1


def householder_prep(psi: np.ndarray) -> np.ndarray:
    """Unitary whose first column is ``psi`` (a complex Householder reflection
    times a phase)."""
    psi = np.asarray(psi, dtype=np.complex128)
    psi = psi / np.linalg.norm(psi)
    phase = psi[0] / abs(psi[0]) if abs(psi[0]) > 1e-15 else 1.0
    u = np.conj(phase) * psi
    w = -u.copy()
    w[0] += 1.0
    nw = np.linalg.norm(w)
    dim = psi.size
    if nw < 1e-14:
        return phase * np.eye(dim, dtype=np.complex128)
    w /= nw
    return phase * (np.eye(dim, dtype=np.complex128) - 2.0 * np.outer(w, w.conj()))


def embed(matrix: np.ndarray, dim: int) -> np.ndarray:
    """Block-embed ``matrix`` into ``dim`` dimensions with identity on the padding."""
    m = np.asarray(matrix, dtype=np.complex128)
    if m.shape[0] == dim:
        return m
    if m.shape[0] > dim:
        raise DimensionError(f"cannot embed {m.shape[0]}-dim operator in {dim} dims")
    out = np.eye(dim, dtype=np.complex128)
    out[: m.shape[0], : m.shape[0]] = m
    return out


def pad(amplitudes: np.ndarray, dim: int) -> np.ndarray:
    a = np.zeros(dim, dtype=np.complex128)
    a[: len(amplitudes)] = amplitudes
    return a


@dataclass(frozen=True)
class SpacetimePlan:
    n_p: int
    n_t: int
    initial: np.ndarray
    prep_unitary: np.ndarray
    step_unitary: np.ndarray
    f_k: tuple[np.ndarray, ...] = field(repr=False)
    n_vortices: int = 0

    @property
    def n_steps(self) -> int:
        return 2**self.n_t

    @property
    def n_qubits(self) -> int:
        return self.n_p + self.n_t

    @property
    def spatial(self) -> tuple[int, ...]:
        return tuple(range(self.n_p))

    def temporal_qubit(self, k: int) -> int:
        """Qubit index controlling F_k (k = 1..n_t)."""
        return self.n_p + k - 1

    def circuit(self) -> list[GateOp]:
        ops = [dense(self.prep_unitary, self.spatial, label="U_R0")]
        ops += [hadamard(self.temporal_qubit(k)) for k in range(1, self.n_t + 1)]
        for k in range(1, self.n_t + 1):
            ops.append(controlled(dense(self.f_k[k - 1], self.spatial, label=f"F_{k}"),
                                  [self.temporal_qubit(k)]))
        return ops


def build_plan(n_t: int, initial: WaveState | np.ndarray, F: np.ndarray,
               f_k: list[np.ndarray] | None = None) -> SpacetimePlan:
    """Assemble the circuit data; ``f_k`` overrides the repeated-squaring ladder."""
    if n_t < 1:
        raise ConfigError("n_t must be >= 1")
    amps = initial.amplitudes if isinstance(initial, WaveState) else np.asarray(initial, complex)
    n_vortices = amps.size
    F = np.asarray(F, dtype=np.complex128)
    n_p = n_qubits_for(max(n_vortices, F.shape[0]))
    dim = 2**n_p
    if F.shape[0] not in (n_vortices, dim):
        raise DimensionError(f"F has size {F.shape[0]}, state has {n_vortices} components")
    F = embed(F, dim)
    check_unitary(F)
    psi0 = pad(amps, dim)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise DimensionError("initial state is not normalized")
    if f_k is None:
        ladder = [F]
        for _ in range(1, n_t):
            ladder.append(ladder[-1] @ ladder[-1])
    else:
        if len(f_k) != n_t:
            raise DimensionError(f"expected {n_t} F_k matrices, got {len(f_k)}")
        ladder = [embed(m, dim) for m in f_k]
        for m in ladder:
            check_unitary(m)
    return SpacetimePlan(n_p, n_t, psi0, householder_prep(psi0), F, tuple(ladder), n_vortices)


def plan_from_hamiltonian(h, n_t: int, initial: WaveState | np.ndarray) -> SpacetimePlan:
    """Plan whose F_k are exact exponentials ``exp(-i H 2**(k-1) dt_predict)``."""
    from .hamiltonian import propagator

    ladder = [propagator(h, 2 ** (k - 1)) for k in range(1, n_t + 1)]
    return build_plan(n_t, initial, ladder[0], f_k=ladder)


@dataclass(frozen=True)
class SpacetimeState:
    state: StateVector
    n_p: int
    n_t: int
    n_vortices: int
    controlled_applications: int = 0

    @property
    def blocks(self) -> np.ndarray:
        """Raw (unnormalized) temporal blocks, shape ``(N_t, 2**n_p)``."""
        return self.state.amplitudes.reshape(2**self.n_t, 2**self.n_p)


def run(plan: SpacetimePlan) -> SpacetimeState:
    ops = plan.circuit()
    n_ctrl = sum(1 for op in ops if op.controls)
    final = run_circuit(StateVector.zero(plan.n_qubits), ops)
    return SpacetimeState(final, plan.n_p, plan.n_t, plan.n_vortices, n_ctrl)


def extract_block(st: SpacetimeState, i: int,
                  tol: float = BLOCK_WEIGHT_TOL) -> tuple[WaveState, float]:
    """Renormalized temporal block ``i`` and its raw weight (ideally 1/N_t)."""
    n_steps = 2**st.n_t
    if not 0 <= i < n_steps:
        raise IndexError(f"block {i} outside 0..{n_steps - 1}")
    block = st.blocks[i]
    weight = float(np.vdot(block, block).real)
    if abs(weight - 1.0 / n_steps) > tol:
        raise BlockWeightError(f"block {i} weight {weight:.6g} differs from 1/{n_steps}")
    amps = block / math.sqrt(weight)
    return WaveState(amps[: st.n_vortices]), weight


def extract_all(st: SpacetimeState, tol: float = BLOCK_WEIGHT_TOL) -> tuple[list[WaveState], np.ndarray]:
    states, weights = zip(*(extract_block(st, i, tol) for i in range(2**st.n_t)))
    return list(states), np.array(weights)


def block_operator(plan: SpacetimePlan) -> np.ndarray:
    """Explicit product of the block-diagonal factors P_k (one per temporal bit)."""
    n_steps, dim = plan.n_steps, 2**plan.n_p
    total = np.eye(n_steps * dim, dtype=np.complex128)
    for k in range(1, plan.n_t + 1):
        p_k = np.zeros_like(total)
        for i in range(n_steps):
            blk = plan.f_k[k - 1] if (i % 2**k) >= 2 ** (k - 1) else np.eye(dim)
            p_k[i * dim:(i + 1) * dim, i * dim:(i + 1) * dim] = blk
        total = p_k @ total
    return total


def save_plan_json(plan: SpacetimePlan, path: str | Path) -> None:
    doc = {
        "n_p": plan.n_p,
        "n_t": plan.n_t,
        "n_vortices": plan.n_vortices,
        "F": [[[float(z.real), float(z.imag)] for z in row] for row in plan.step_unitary],
        "initial": [[float(z.real), float(z.imag)] for z in plan.initial],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_plan_json(path: str | Path) -> SpacetimePlan:
    doc = json.loads(Path(path).read_text())
    F = np.array([[complex(a, b) for a, b in row] for row in doc["F"]])
    init = np.array([complex(a, b) for a, b in doc["initial"]])
    n_vort = doc.get("n_vortices", init.size)
    return build_plan(doc["n_t"], init[:n_vort], F[:n_vort, :n_vort] if n_vort < F.shape[0] else F)
