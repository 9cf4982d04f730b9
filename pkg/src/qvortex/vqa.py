"""Variational propagator: ansatz, Hadamard-test cost and parameter-shift gradients.

The cost of one training pair is ``C = ||y - F_k(theta) x||^2`` with
``F_k = F(theta)**K``, ``K = 2**(k-1)``. For normalized states
``C = 2 - 2 <Z>`` where ``<Z> = Re <y|F_k x>`` is the ancilla expectation
of the Hadamard-test circuit.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path

import numpy as np
from scipy import optimize

from .encoding import WaveState
from .errors import ConfigError, DimensionError, NonConvergenceError
from .hamiltonian import TrainingSet
from .spacetime import householder_prep, pad
from .statevector import (
    GateOp,
    StateVector,
    controlled,
    cz,
    dense,
    expectation_z,
    hadamard,
    pauli,
    rotation,
    rotation_matrix,
    run_circuit,
)

log = logging.getLogger(__name__)

SHIFT = math.pi / 2
# C is linear in each exp(-i theta P / 2), i.e. a sinusoid of frequency 1/2 in
# theta, so the exact two-point rule at +-SHIFT carries 1 / (4 sin(SHIFT / 2)).
SHIFT_COEFF = 1.0 / (4.0 * math.sin(SHIFT / 2))


@dataclass(frozen=True)
class Ansatz:
    """Hardware-efficient ansatz on ``n_qubits`` spatial qubits.

    Each of ``depth + 1`` rotation layers applies ``RY`` then ``RZ`` to every
    qubit; consecutive rotation layers are separated by a CZ ring. All
    parameterised generators are single Paulis over two, so the two-term
    shift rule applies.
    """

    n_qubits: int
    depth: int = 2
    axes: tuple[str, ...] = ("Y", "Z")

    @property
    def n_params(self) -> int:
        return len(self.axes) * self.n_qubits * (self.depth + 1)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def descriptor(self) -> str:
        return f"hea(n={self.n_qubits},depth={self.depth},axes={''.join(self.axes)},ent=cz-ring)"

    def ring(self) -> list[tuple[int, int]]:
        n = self.n_qubits
        if n == 1:
            return []
        if n == 2:
            return [(0, 1)]
        return [(q, (q + 1) % n) for q in range(n)]

    def _entangler(self) -> np.ndarray:
        idx = np.arange(self.dim)
        phase = np.ones(self.dim)
        for a, b in self.ring():
            phase *= 1 - 2 * (((idx >> a) & 1) & ((idx >> b) & 1))
        return phase

    def _rotation_layer(self, angles: np.ndarray, axis: str) -> np.ndarray:
        # kron ordering: highest qubit first so qubit 0 is the LSB
        mats = [rotation_matrix(axis, angles[q]) for q in reversed(range(self.n_qubits))]
        return reduce(np.kron, mats)

    def unitary(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise DimensionError(f"ansatz expects {self.n_params} parameters, got {theta.size}")
        per = self.n_qubits
        ent = self._entangler()
        u = np.eye(self.dim, dtype=np.complex128)
        pos = 0
        for layer in range(self.depth + 1):
            if layer:
                u = ent[:, None] * u
            for axis in self.axes:
                u = self._rotation_layer(theta[pos:pos + per], axis) @ u
                pos += per
        return u

    def gates(self, theta: np.ndarray, offset: int = 0) -> list[GateOp]:
        """Gate list equivalent to ``unitary(theta)`` on qubits ``offset..``."""
        ops: list[GateOp] = []
        pos = 0
        for layer in range(self.depth + 1):
            if layer:
                ops += [cz(a + offset, b + offset) for a, b in self.ring()]
            for axis in self.axes:
                for q in range(self.n_qubits):
                    ops.append(rotation(axis, theta[pos], q + offset))
                    pos += 1
        return ops

    def init_params(self, seed: int | None = 0, scale: float = 0.1) -> np.ndarray:
        return np.random.default_rng(seed).uniform(-scale, scale, self.n_params)


@dataclass
class CostReport:
    value: float
    z_expectation: float
    gradient: np.ndarray | None = None


def _power(u: np.ndarray, k: int) -> np.ndarray:
    if k < 1:
        raise ConfigError("k must be >= 1")
    return np.linalg.matrix_power(u, 2 ** (k - 1))


def _pair_arrays(pair, dim: int) -> tuple[np.ndarray, np.ndarray]:
    x, y = pair
    x = x.amplitudes if isinstance(x, WaveState) else np.asarray(x, dtype=np.complex128)
    y = y.amplitudes if isinstance(y, WaveState) else np.asarray(y, dtype=np.complex128)
    if x.size > dim or y.size > dim or x.size != y.size:
        raise DimensionError(f"pair sizes {x.size}, {y.size} do not fit a {dim}-dim ansatz")
    return pad(x, dim), pad(y, dim)


def cost_direct(ansatz: Ansatz, theta: np.ndarray, pair, k: int = 1) -> CostReport:
    x, y = _pair_arrays(pair, ansatz.dim)
    pred = _power(ansatz.unitary(theta), k) @ x
    r = y - pred
    return CostReport(float(np.vdot(r, r).real), float(np.vdot(y, pred).real))


def hadamard_test_circuit(prep_i: np.ndarray, prep_ik: np.ndarray, f_k: np.ndarray,
                          n_qubits: int) -> list[GateOp]:
    """Ancilla on qubit ``n_qubits``: branch 0 prepares the target, branch 1 the
    prediction; the final Hadamard interferes them."""
    anc = n_qubits
    sp = tuple(range(n_qubits))
    return [
        hadamard(anc),
        pauli("x", anc),
        controlled(dense(prep_ik, sp, label="U_R^{i+K}"), [anc]),
        pauli("x", anc),
        controlled(dense(prep_i, sp, label="U_R^i"), [anc]),
        controlled(dense(f_k, sp, label="F_k"), [anc]),
        hadamard(anc),
    ]


def cost_hadamard(ansatz: Ansatz, theta: np.ndarray, prep_i: np.ndarray,
                  prep_ik: np.ndarray, k: int = 1) -> CostReport:
    f_k = _power(ansatz.unitary(theta), k)
    ops = hadamard_test_circuit(prep_i, prep_ik, f_k, ansatz.n_qubits)
    final = run_circuit(StateVector.zero(ansatz.n_qubits + 1), ops)
    z = expectation_z(final, ansatz.n_qubits)
    return CostReport(2.0 - 2.0 * z, z)


def preps_for_pair(pair, dim: int) -> tuple[np.ndarray, np.ndarray]:
    x, y = _pair_arrays(pair, dim)
    return householder_prep(x), householder_prep(y)


def _shifted_costs(ansatz: Ansatz, theta: np.ndarray, x: np.ndarray, y: np.ndarray,
                   k: int, l: int) -> float:
    """d C / d theta_l from the two-term shift rule applied to every copy of
    theta_l inside F**K (product rule over occurrences)."""
    K = 2 ** (k - 1)
    base = ansatz.unitary(theta)
    e = np.zeros_like(theta)
    e[l] = SHIFT
    up, down = ansatz.unitary(theta + e), ansatz.unitary(theta - e)
    total = 0.0
    for m in range(K):
        left = np.linalg.matrix_power(base, K - 1 - m)
        right = np.linalg.matrix_power(base, m)
        for sign, mid in ((1.0, up), (-1.0, down)):
            r = y - left @ mid @ right @ x
            total += SHIFT_COEFF * sign * float(np.real(np.vdot(r, r).sum()))
    return total


def gradient_parameter_shift(ansatz: Ansatz, theta: np.ndarray, pair, k: int = 1,
                             use_hadamard: bool = False) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    x, y = _pair_arrays(pair, ansatz.dim)
    if use_hadamard:
        if k != 1:
            raise ConfigError("Hadamard-test gradients are implemented for k = 1 only")
        pi, pik = householder_prep(x), householder_prep(y)
        grad = np.empty(theta.size)
        for l in range(theta.size):
            e = np.zeros_like(theta)
            e[l] = SHIFT
            grad[l] = SHIFT_COEFF * (cost_hadamard(ansatz, theta + e, pi, pik).value
                             - cost_hadamard(ansatz, theta - e, pi, pik).value)
        return grad
    return np.array([_shifted_costs(ansatz, theta, x[:, None], y[:, None], k, l)
                     for l in range(theta.size)])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _k_of_steps(steps: np.ndarray) -> np.ndarray:
    ks = np.log2(steps)
    if not np.allclose(ks, np.round(ks)):
        raise ConfigError("VQA pair separations must be powers of two (K = 2**(k-1))")
    return np.round(ks).astype(int) + 1


def total_cost(ansatz: Ansatz, theta: np.ndarray, training: TrainingSet) -> float:
    u = ansatz.unitary(theta)
    ks = _k_of_steps(training.steps)
    dim = ansatz.dim
    total = 0.0
    for k in np.unique(ks):
        sel = ks == k
        x = _pad_rows(training.inputs[sel], dim)
        y = _pad_rows(training.targets[sel], dim)
        r = y.T - _power(u, int(k)) @ x.T
        total += float(np.vdot(r, r).real)
    return total


def total_gradient(ansatz: Ansatz, theta: np.ndarray, training: TrainingSet) -> np.ndarray:
    ks = _k_of_steps(training.steps)
    dim = ansatz.dim
    grad = np.zeros(theta.size)
    for k in np.unique(ks):
        sel = ks == k
        x = _pad_rows(training.inputs[sel], dim).T
        y = _pad_rows(training.targets[sel], dim).T
        for l in range(theta.size):
            grad[l] += _shifted_costs(ansatz, theta, x, y, int(k), l)
    return grad


def _pad_rows(a: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((a.shape[0], dim), dtype=np.complex128)
    out[:, : a.shape[1]] = a
    return out


@dataclass
class TrainOptions:
    optimizer: str = "adam"  # "adam" | "linesearch"
    lr: float = 0.05
    max_iters: int = 5000
    tol: float = 1e-10
    seed: int = 0
    init_scale: float = 0.1
    polish: bool = False
    snapshot_every: int = 50
    raise_on_nonconvergence: bool = False


@dataclass
class TrainResult:
    theta: np.ndarray
    history: list[float]
    seed: int
    descriptor: str
    snapshots: list[tuple[int, list[float]]] = field(default_factory=list)

    @property
    def loss(self) -> float:
        return self.history[-1] if self.history else float("nan")


def train(ansatz: Ansatz, training: TrainingSet, options: TrainOptions | None = None,
          theta0: np.ndarray | None = None) -> TrainResult:
    """Minimise the summed pair cost with parameter-shift gradients."""
    opts = options or TrainOptions()
    theta = ansatz.init_params(opts.seed, opts.init_scale) if theta0 is None else np.array(theta0, float)
    loss = total_cost(ansatz, theta, training)
    history = [loss]
    snaps = [(0, theta.tolist())]
    best_theta, best = theta.copy(), loss
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    step = opts.lr
    for it in range(1, opts.max_iters + 1):
        if loss <= opts.tol:
            break
        g = total_gradient(ansatz, theta, training)
        if opts.optimizer == "adam":
            m1 = 0.9 * m1 + 0.1 * g
            m2 = 0.999 * m2 + 0.001 * g * g
            theta = theta - opts.lr * (m1 / (1 - 0.9**it)) / (np.sqrt(m2 / (1 - 0.999**it)) + 1e-12)
            loss = total_cost(ansatz, theta, training)
        elif opts.optimizer == "linesearch":
            gg = float(g @ g)
            if gg == 0.0:
                break
            step = min(step * 2.0, 10.0)
            while True:
                trial = theta - step * g
                trial_loss = total_cost(ansatz, trial, training)
                if trial_loss <= loss - 1e-4 * step * gg:
                    break
                step *= 0.5
                if step < 1e-14:
                    trial, trial_loss = theta, loss
                    break
            if trial_loss >= loss:
                break
            theta, loss = trial, trial_loss
        else:
            raise ConfigError(f"unknown optimizer {opts.optimizer!r}")
        history.append(loss)
        if loss < best:
            best_theta, best = theta.copy(), loss
        if opts.snapshot_every and it % opts.snapshot_every == 0:
            snaps.append((it, theta.tolist()))
    if opts.polish and best > opts.tol:
        res = optimize.minimize(
            lambda t: (total_cost(ansatz, t, training), total_gradient(ansatz, t, training)),
            best_theta, jac=True, method="L-BFGS-B",
            options={"maxiter": 2000, "ftol": 1e-30, "gtol": 1e-14},
        )
        if res.fun < best:
            best_theta, best = res.x, float(res.fun)
            history.append(best)
    result = TrainResult(best_theta, history, opts.seed, ansatz.descriptor, snaps)
    if opts.raise_on_nonconvergence and best > opts.tol:
        raise NonConvergenceError(f"VQA loss {best:.3e} above tol {opts.tol:g}", result, best)
    return result


def save_train_log(result: TrainResult, path: str | Path) -> None:
    doc = {
        "ansatz": result.descriptor,
        "seed": result.seed,
        "loss": result.history,
        "snapshots": [{"iteration": i, "theta": t} for i, t in result.snapshots],
        "theta": result.theta.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_train_log(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def ansatz_from_descriptor(desc: str) -> Ansatz:
    inner = desc[desc.index("(") + 1: desc.rindex(")")]
    kv = dict(item.split("=") for item in inner.split(","))
    return Ansatz(int(kv["n"]), int(kv["depth"]), tuple(kv.get("axes", "YZ")))
