"""Lower dense spacetime-circuit gates to single-qubit rotations and CZ.

Only the pieces the noisy pipeline needs are covered: state preparation on
one or two qubits, and singly-controlled one- or two-qubit unitaries. The
two-qubit case goes through the canonical (KAK) form
``F = g (A1 x A0) exp(i(a XX + b YY + c ZZ)) (B1 x B0)``.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .errors import DimensionError
from .statevector import PAULI, GateOp, check_unitary, cz, dense, hadamard, rotation

_MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=np.complex128
) / math.sqrt(2)

_XX = np.kron(PAULI["X"], PAULI["X"])
_YY = np.kron(PAULI["Y"], PAULI["Y"])
_ZZ = np.kron(PAULI["Z"], PAULI["Z"])


def zyz_angles(u: np.ndarray) -> tuple[float, float, float, float]:
    """``(alpha, beta, gamma, delta)`` with ``u = e^{i alpha} Rz(beta) Ry(gamma) Rz(delta)``."""
    u = np.asarray(u, dtype=np.complex128)
    det = np.linalg.det(u)
    alpha = cmath.phase(det) / 2
    v = u * cmath.exp(-1j * alpha)
    gamma = 2 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    # v00 = e^{-i(b+d)/2} cos, v10 = e^{i(b-d)/2} sin
    if abs(v[0, 0]) > 1e-12 and abs(v[1, 0]) > 1e-12:
        s = -2 * cmath.phase(v[0, 0])
        d = 2 * cmath.phase(v[1, 0])
        beta, delta = (s + d) / 2, (s - d) / 2
    elif abs(v[1, 0]) <= 1e-12:
        beta, delta = -2 * cmath.phase(v[0, 0]), 0.0
    else:
        beta, delta = 2 * cmath.phase(v[1, 0]), 0.0
    return alpha, beta, gamma, delta


def single_qubit_ops(u: np.ndarray, q: int) -> list[GateOp]:
    """Rz Ry Rz sequence for ``u`` up to global phase (identity gives no gates)."""
    _, beta, gamma, delta = zyz_angles(u)
    ops = []
    for axis, ang in (("z", delta), ("y", gamma), ("z", beta)):
        if abs(math.remainder(ang, 4 * math.pi)) > 1e-13:
            ops.append(rotation(axis, ang, q))
    return ops


def cnot_ops(control: int, target: int) -> list[GateOp]:
    return [hadamard(target), cz(control, target), hadamard(target)]


def phase_op(q: int, angle: float) -> GateOp:
    return dense(np.diag([1.0, cmath.exp(1j * angle)]), (q,), label="P")


def controlled_single_qubit_ops(u: np.ndarray, control: int, target: int) -> list[GateOp]:
    """Exact controlled-``u`` with two CNOTs (ABC construction)."""
    alpha, beta, gamma, delta = zyz_angles(u)
    ops: list[GateOp] = []
    ops += [rotation("z", (delta - beta) / 2, target)]                    # C
    ops += cnot_ops(control, target)
    ops += [rotation("z", -(delta + beta) / 2, target), rotation("y", -gamma / 2, target)]  # B
    ops += cnot_ops(control, target)
    ops += [rotation("y", gamma / 2, target), rotation("z", beta, target)]  # A
    if abs(math.remainder(alpha, 2 * math.pi)) > 1e-13:
        ops.append(phase_op(control, alpha))
    return ops


def kron_factor(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a 4x4 product operator into ``(a, b)`` with ``m = kron(a, b)``, both unitary."""
    r = np.asarray(m).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    uu, s, vh = np.linalg.svd(r)
    if s[1] > 1e-8 * s[0]:
        raise DimensionError("operator is not a tensor product")
    a = (uu[:, 0] * math.sqrt(s[0])).reshape(2, 2)
    b = (vh[0, :] * math.sqrt(s[0])).reshape(2, 2)
    scale = math.sqrt(abs(np.linalg.det(a)))
    return a / scale, b * scale


def kak(u: np.ndarray, seed: int = 7) -> dict:
    """Canonical decomposition of a two-qubit unitary (high qubit first in kron)."""
    u = np.asarray(u, dtype=np.complex128)
    check_unitary(u)
    g = np.linalg.det(u) ** 0.25
    us = u / g
    up = _MAGIC.conj().T @ us @ _MAGIC
    m = up.T @ up
    rng = np.random.default_rng(seed)
    for _ in range(20):
        w = rng.normal()
        _, p = np.linalg.eigh(m.real + w * m.imag)
        d = p.T @ m @ p
        if np.max(np.abs(d - np.diag(np.diag(d)))) < 1e-10:
            break
    else:
        raise DimensionError("failed to diagonalise the magic-basis symmetric form")
    if np.linalg.det(p) < 0:
        p[:, 0] *= -1
    half = np.sqrt(np.diag(p.T @ m @ p))
    q1 = up @ p @ np.diag(1 / half)
    if np.linalg.det(q1).real < 0:
        half[0] *= -1
        q1[:, 0] *= -1
    k1 = _MAGIC @ q1 @ _MAGIC.conj().T
    k2 = _MAGIC @ p.T @ _MAGIC.conj().T
    # diagonal phases of exp(i(aXX+bYY+cZZ)) in the magic basis
    signs = np.real(np.array([np.diag(_MAGIC.conj().T @ op @ _MAGIC) for op in (_XX, _YY, _ZZ)]))
    theta = np.angle(half)
    system = np.column_stack([np.ones(4), signs.T])
    phi, a, b, c = np.linalg.solve(system, theta)
    a1, a0 = kron_factor(k1)
    b1, b0 = kron_factor(k2)
    return {"phase": g * cmath.exp(1j * phi), "a1": a1, "a0": a0, "b1": b1, "b0": b0,
            "coeffs": (float(a), float(b), float(c))}


def kak_matrix(parts: dict) -> np.ndarray:
    from scipy.linalg import expm

    a, b, c = parts["coeffs"]
    core = expm(1j * (a * _XX + b * _YY + c * _ZZ))
    return parts["phase"] * np.kron(parts["a1"], parts["a0"]) @ core @ np.kron(parts["b1"], parts["b0"])


def _controlled_zz(angle: float, control: int, s0: int, s1: int, basis: str) -> list[GateOp]:
    """Controlled ``exp(i angle P P)`` for P in X/Y/Z on qubits s0, s1."""
    pre: list[GateOp] = []
    post: list[GateOp] = []
    for q in (s0, s1):
        if basis == "X":
            pre.append(hadamard(q))
            post.append(hadamard(q))
        elif basis == "Y":
            # Rx(pi/2) maps Y to Z
            pre.append(rotation("x", math.pi / 2, q))
            post.append(rotation("x", -math.pi / 2, q))
    core = (cnot_ops(s0, s1)
            + controlled_single_qubit_ops(_rz(-2 * angle), control, s1)
            + cnot_ops(s0, s1))
    return pre + core + post


def _rz(angle: float) -> np.ndarray:
    return np.diag([cmath.exp(-0.5j * angle), cmath.exp(0.5j * angle)])


def controlled_two_qubit_ops(u: np.ndarray, control: int, s0: int, s1: int) -> list[GateOp]:
    """Exact controlled-``u`` for a 4x4 ``u`` acting on ``(s0, s1)``, ``s0`` the low bit.

    Uses ``C(A K B) = A . C(K) . A^dag . C(A B)`` so only the canonical core and
    two single-qubit factors need a control.
    """
    parts = kak(u)
    a1, a0, b1, b0 = parts["a1"], parts["a0"], parts["b1"], parts["b0"]
    a, b, c = parts["coeffs"]
    ops: list[GateOp] = []
    ops += controlled_single_qubit_ops(a1 @ b1, control, s1)
    ops += controlled_single_qubit_ops(a0 @ b0, control, s0)
    ops += single_qubit_ops(a1.conj().T, s1) + single_qubit_ops(a0.conj().T, s0)
    for basis, ang in (("X", a), ("Y", b), ("Z", c)):
        if abs(ang) > 1e-13:
            ops += _controlled_zz(ang, control, s0, s1, basis)
    ops += single_qubit_ops(a1, s1) + single_qubit_ops(a0, s0)
    ph = cmath.phase(parts["phase"])
    if abs(math.remainder(ph, 2 * math.pi)) > 1e-13:
        ops.append(phase_op(control, ph))
    return ops


def state_prep_ops(psi: np.ndarray, qubits: tuple[int, ...]) -> list[GateOp]:
    """Prepare ``psi`` from ``|0..0>`` up to global phase (one or two qubits)."""
    psi = np.asarray(psi, dtype=np.complex128)
    psi = psi / np.linalg.norm(psi)
    if len(qubits) == 1:
        u = np.column_stack([psi, [-np.conj(psi[1]), np.conj(psi[0])]])
        return single_qubit_ops(u, qubits[0])
    if len(qubits) != 2:
        raise DimensionError("gate-level state preparation supports at most two qubits")
    q0, q1 = qubits
    uu, s, vh = np.linalg.svd(psi.reshape(2, 2))
    ops = [rotation("y", 2 * math.atan2(s[1], s[0]), q1)]
    ops += cnot_ops(q1, q0)
    ops += single_qubit_ops(uu, q1) + single_qubit_ops(vh.T, q0)
    return ops


def lower_gate(op: GateOp) -> list[GateOp]:
    """Rewrite one dense or controlled gate into native gates; native gates pass through."""
    if op.is_cz or (not op.controls and op.kind != "u"):
        return [op]
    if not op.controls:
        if len(op.targets) == 1:
            return single_qubit_ops(op.matrix, op.targets[0])
        raise DimensionError("uncontrolled dense gates on several qubits must come from state prep")
    if len(op.controls) != 1:
        raise DimensionError("only singly-controlled gates can be lowered")
    ctrl = op.controls[0]
    m = op.target_matrix()
    if len(op.targets) == 1:
        return controlled_single_qubit_ops(m, ctrl, op.targets[0])
    if len(op.targets) == 2:
        return controlled_two_qubit_ops(m, ctrl, *op.targets)
    raise DimensionError("controlled gates with more than two targets are not supported")


def lower_spacetime(plan) -> list[GateOp]:
    """Native-gate version of ``plan.circuit()`` (equal up to global phase)."""
    if plan.n_p > 2:
        raise DimensionError("gate-level lowering is limited to n_p <= 2")
    ops = state_prep_ops(plan.initial, plan.spatial)
    for op in plan.circuit()[1:]:
        ops += lower_gate(op)
    return ops


def count_cz(ops) -> int:
    return sum(1 for op in ops if op.is_cz)


def merge_single_qubit_runs(ops) -> list[GateOp]:
    """Fuse consecutive single-qubit gates on each qubit into one dense gate.

    Mirrors hardware that executes one generic single-qubit rotation per slot;
    products equal to the identity up to phase are dropped.
    """
    pending: dict[int, np.ndarray] = {}
    out: list[GateOp] = []

    def flush(q: int) -> None:
        m = pending.pop(q, None)
        if m is None:
            return
        if abs(m[0, 1]) < 1e-13 and abs(m[1, 0]) < 1e-13 and abs(m[1, 1] / m[0, 0] - 1) < 1e-13:
            return
        out.append(dense(m, (q,), label="U"))

    for op in ops:
        if len(op.support) == 1 and not op.controls:
            q = op.targets[0]
            pending[q] = op.target_matrix() @ pending.get(q, np.eye(2, dtype=np.complex128))
            continue
        for q in op.support:
            flush(q)
        out.append(op)
    for q in sorted(pending):
        flush(q)
    return out
