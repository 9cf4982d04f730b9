"""Fit a Hermitian effective generator to pairs of wave states.

The loss is ``L(H) = sum_i || y_i - exp(-i H dt) x_i ||^2`` with ``H``
parameterised by its N_p**2 real degrees of freedom (diagonal reals, then the
real and imaginary parts of the strict upper triangle).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize

from .encoding import WaveState
from .errors import ConfigError, InsufficientDataError, NonConvergenceError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    matrix: np.ndarray
    dt_train: float
    dt_predict: float
    loss: float = float("nan")
    iterations: int = 0

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError(f"Hamiltonian must be square, got {m.shape}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-12:
            raise ConfigError("Hamiltonian is not Hermitian")
        if not (self.dt_train > 0 and self.dt_predict > 0):
            raise ConfigError("dt_train and dt_predict must be positive")
        object.__setattr__(self, "matrix", 0.5 * (m + m.conj().T))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class TrainingSet:
    """State pairs ``(x_i, y_i)``; ``y_i`` sits ``steps[i]`` frames after ``x_i``."""

    inputs: np.ndarray
    targets: np.ndarray
    steps: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        x = np.asarray(self.inputs, dtype=np.complex128)
        y = np.asarray(self.targets, dtype=np.complex128)
        if x.shape != y.shape or x.ndim != 2:
            raise ConfigError(f"pair arrays must share shape (N_train, N_p): {x.shape} vs {y.shape}")
        steps = np.ones(x.shape[0], dtype=int) if self.steps is None else np.asarray(self.steps, dtype=int)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "steps", steps)
        n_p = x.shape[1]
        if x.shape[0] < n_p**2:
            raise InsufficientDataError(
                f"{x.shape[0]} training pairs is below the N_p^2 = {n_p**2} bound"
            )

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def pairs(self) -> list[tuple[WaveState, WaveState]]:
        return [(WaveState(a), WaveState(b)) for a, b in zip(self.inputs, self.targets)]


def _amps(states) -> np.ndarray:
    if isinstance(states, np.ndarray):
        return np.asarray(states, dtype=np.complex128)
    return np.array([s.amplitudes for s in states], dtype=np.complex128)


def build_training_set(
    trajectory: Sequence[WaveState] | np.ndarray,
    stride: int = 1,
    starts: Sequence[int] | None = None,
) -> TrainingSet:
    """Pairs ``(state[i], state[i + stride])`` for every admissible ``i`` (or ``starts``)."""
    amps = _amps(trajectory)
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if starts is None:
        starts = range(0, amps.shape[0] - stride)
    starts = np.asarray(list(starts), dtype=int)
    if amps.shape[0] <= stride or np.any(starts + stride >= amps.shape[0]) or starts.size == 0:
        raise InsufficientDataError(
            f"trajectory of {amps.shape[0]} frames cannot supply pairs at stride {stride}"
        )
    return TrainingSet(amps[starts], amps[starts + stride], np.full(starts.size, stride))


def build_multiscale_training_set(
    trajectory: Sequence[WaveState] | np.ndarray, strides: Sequence[int]
) -> TrainingSet:
    """All pairs at each of several frame separations (e.g. 1 and 2)."""
    amps = _amps(trajectory)
    xs, ys, ks = [], [], []
    for s in strides:
        for i in range(amps.shape[0] - s):
            xs.append(amps[i])
            ys.append(amps[i + s])
            ks.append(s)
    if not xs:
        raise InsufficientDataError("no pairs available at the requested strides")
    return TrainingSet(np.array(xs), np.array(ys), np.array(ks))


# ---------------------------------------------------------------------------
# parameterisation
# ---------------------------------------------------------------------------

def params_to_matrix(theta: np.ndarray, n: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    h = np.diag(theta[:n]).astype(np.complex128)
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    h[iu] = theta[n:n + m] + 1j * theta[n + m:n + 2 * m]
    h[(iu[1], iu[0])] = np.conj(h[iu])
    return h


def matrix_to_params(h: np.ndarray) -> np.ndarray:
    n = h.shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate([np.real(np.diag(h)), h[iu].real, h[iu].imag])


def _grad_matrix_to_params(g: np.ndarray) -> np.ndarray:
    """Map dL/dH (as the complex matrix G with dL = Re tr(G^H dH)) onto theta."""
    n = g.shape[0]
    iu = np.triu_indices(n, 1)
    lower = (iu[1], iu[0])
    d_re = np.real(g[iu] + g[lower])
    d_im = np.real(1j * np.conj(g[iu]) - 1j * np.conj(g[lower]))
    return np.concatenate([np.real(np.diag(g)), d_re, d_im])


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h`` through its eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def loss_and_grad(theta: np.ndarray, x: np.ndarray, y: np.ndarray, dt: float,
                  steps: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Loss and its exact gradient via the Daleckii-Krein form of the
    Frechet derivative of the matrix exponential."""
    n = x.shape[1]
    h = params_to_matrix(theta, n)
    w, v = np.linalg.eigh(h)
    steps = np.ones(x.shape[0], dtype=int) if steps is None else steps
    loss = 0.0
    grad_h = np.zeros((n, n), dtype=np.complex128)
    for s in np.unique(steps):
        sel = steps == s
        tau = s * dt
        a = -1j * w * tau
        ea = np.exp(a)
        u = (v * ea) @ v.conj().T
        xs, ys = x[sel].T, y[sel].T
        r = ys - u @ xs
        loss += float(np.real(np.vdot(r, r)))
        # dL = Re tr(M^H dU), M = -2 R X^H
        m = -2.0 * r @ xs.conj().T
        diff = a[:, None] - a[None, :]
        same = np.abs(diff) < 1e-12
        phi = np.where(same, ea[:, None], (ea[:, None] - ea[None, :]) / np.where(same, 1.0, diff))
        g_tilde = (v.conj().T @ m @ v) * np.conj(phi)
        g_a = v @ g_tilde @ v.conj().T
        grad_h += 1j * tau * g_a
    return loss, _grad_matrix_to_params(grad_h)


def procrustes_unitary(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Closed-form unitary minimising sum ||y_i - U x_i||^2."""
    w, _, vh = np.linalg.svd(y.T @ x.conj())
    return w @ vh


def unitary_log_hermitian(u: np.ndarray, dt: float) -> np.ndarray:
    """Hermitian ``H`` with ``exp(-i H dt) = u`` using principal eigenphases."""
    # Schur form of a normal matrix is diagonal with a unitary basis
    from scipy.linalg import schur

    t, z = schur(u, output="complex")
    phases = np.angle(np.diag(t))
    h = (z * (-phases / dt)) @ z.conj().T
    return 0.5 * (h + h.conj().T)


@dataclass
class FitOptions:
    max_iters: int = 2000
    lr: float = 0.05
    tol: float = 1e-24
    init: str = "procrustes"  # "procrustes" | "zero" | "random"
    polish: bool = True
    seed: int = 0
    raise_on_nonconvergence: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-12


def fit(training: TrainingSet, dt_train: float, options: FitOptions | None = None,
        dt_predict: float | None = None) -> EffectiveHamiltonian:
    """Minimise the propagator loss with Adam, then optionally polish with L-BFGS.

    ``init="procrustes"`` starts from the closed-form best unitary for the
    single-stride data, which is already the global minimiser when all pairs
    share one stride.
    """
    opts = options or FitOptions()
    if not dt_train > 0:
        raise ConfigError("dt_train must be positive")
    x, y, steps = training.inputs, training.targets, training.steps
    n = x.shape[1]
    if opts.init == "procrustes" and np.all(steps == steps[0]):
        u = procrustes_unitary(x, y)
        theta = matrix_to_params(unitary_log_hermitian(u, dt_train * steps[0]))
    elif opts.init == "random":
        theta = np.random.default_rng(opts.seed).uniform(-0.1, 0.1, n * n)
    else:
        theta = np.zeros(n * n)

    best_theta, best_loss = theta.copy(), np.inf
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    it = 0
    for it in range(1, opts.max_iters + 1):
        loss, g = loss_and_grad(theta, x, y, dt_train, steps)
        if loss < best_loss:
            best_theta, best_loss = theta.copy(), loss
        if loss <= opts.tol:
            break
        m1 = opts.beta1 * m1 + (1 - opts.beta1) * g
        m2 = opts.beta2 * m2 + (1 - opts.beta2) * g * g
        mhat = m1 / (1 - opts.beta1**it)
        vhat = m2 / (1 - opts.beta2**it)
        theta = theta - opts.lr * mhat / (np.sqrt(vhat) + opts.eps)
    if opts.polish and best_loss > opts.tol:
        res = optimize.minimize(
            loss_and_grad, best_theta, args=(x, y, dt_train, steps), jac=True,
            method="L-BFGS-B", options={"maxiter": 5000, "ftol": 1e-30, "gtol": 1e-14},
        )
        if res.fun < best_loss:
            best_theta, best_loss = res.x, float(res.fun)
    log.debug("fit finished after %d Adam iterations, loss %.3e", it, best_loss)
    ham = EffectiveHamiltonian(
        params_to_matrix(best_theta, n), dt_train,
        dt_train if dt_predict is None else dt_predict, best_loss, it,
    )
    if opts.raise_on_nonconvergence and best_loss > opts.tol:
        raise NonConvergenceError(f"loss {best_loss:.3e} above tol {opts.tol:g}", ham, best_loss)
    return ham


def training_loss(h: EffectiveHamiltonian, training: TrainingSet) -> float:
    return loss_and_grad(matrix_to_params(h.matrix), training.inputs, training.targets,
                         h.dt_train, training.steps)[0]


def propagator(h: EffectiveHamiltonian, n_steps: int = 1) -> np.ndarray:
    """``exp(-i H n_steps dt_predict)``; the circuit's F_k is ``propagator(h, 2**(k-1))``."""
    if n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    return expm_hermitian(h.matrix, n_steps * h.dt_predict)


def save_hamiltonian_json(h: EffectiveHamiltonian, path: str | Path) -> None:
    doc = {
        "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in h.matrix],
        "dt_train": h.dt_train,
        "dt_predict": h.dt_predict,
        "loss": h.loss,
        "iterations": h.iterations,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_hamiltonian_json(path: str | Path) -> EffectiveHamiltonian:
    doc = json.loads(Path(path).read_text())
    m = np.array([[complex(a, b) for a, b in row] for row in doc["matrix"]])
    return EffectiveHamiltonian(m, doc["dt_train"], doc["dt_predict"],
                                doc.get("loss", float("nan")), doc.get("iterations", 0))
