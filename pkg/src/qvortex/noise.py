"""Density-matrix emulation of the hardware pipeline.

Gate noise is depolarizing on each gate's support, optionally followed by
amplitude and phase damping for the gate duration. Readout is a per-qubit
confusion matrix, undone by inverting that matrix when ``mitigate`` is set.
Tomography is linear inversion of Pauli expectations followed by eigenvalue
clipping.
"""

from __future__ import annotations

import itertools
import json
import math
import sys
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .encoding import WaveState
from .errors import (
    ConfigError,
    DegenerateSpectrumError,
    DimensionError,
    NoTwirlableGateError,
    ZeroProbabilityError,
)
from .statevector import PAULI, GateOp, StateVector, _apply_on_axes, pauli

MAX_QUBITS = 10
TRACE_TOL = 1e-9
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
DEGENERACY_TOL = 1e-9
ZERO_PROB = 1e-12


# ---------------------------------------------------------------------------
# density matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    n_qubits: int

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.shape != (2**self.n_qubits,) * 2:
            raise DimensionError(f"density matrix shape {m.shape} does not match {self.n_qubits} qubits")
        if self.n_qubits > MAX_QUBITS:
            raise DimensionError(f"density matrices are capped at {MAX_QUBITS} qubits")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_state(cls, state: StateVector | np.ndarray) -> "DensityMatrix":
        a = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, complex)
        n = int(round(math.log2(a.size)))
        return cls(np.outer(a, a.conj()), n)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        return cls(np.eye(d) / d, n_qubits)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def validate(self) -> None:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise DimensionError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > TRACE_TOL:
            raise DimensionError(f"trace {np.trace(m).real:.12g} differs from 1")
        if np.min(np.linalg.eigvalsh(m)) < -PSD_TOL:
            raise DimensionError("density matrix has negative eigenvalues")

    def fidelity(self, psi: np.ndarray) -> float:
        psi = np.asarray(psi, dtype=np.complex128)
        return float(np.real(np.vdot(psi, self.matrix @ psi)))


# ---------------------------------------------------------------------------
# noise model
# ---------------------------------------------------------------------------

def depolarizing_from_pauli_error(error: float, n_qubits: int) -> float:
    """Depolarizing parameter whose Pauli error (1 - process fidelity) is ``error``."""
    d2 = 4**n_qubits
    return error * d2 / (d2 - 1)


@dataclass(frozen=True)
class NoiseModel:
    """``p1``/``p2`` are depolarizing parameters; ``f0``/``f1`` readout fidelities per qubit.

    Times are in microseconds (``t1``, ``t2``) and nanoseconds (gate lengths).
    Damping only acts when ``damping`` is set and ``t1`` is given.
    """

    p1: float = 0.0
    p2: float = 0.0
    f0: tuple[float, ...] = ()
    f1: tuple[float, ...] = ()
    t1: tuple[float, ...] = ()
    t2: tuple[float, ...] = ()
    gate_ns_1q: float = 24.0
    gate_ns_2q: float = 40.0
    damping: bool = False

    def __post_init__(self) -> None:
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        for name in ("f0", "f1", "t1", "t2"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for v in self.f0 + self.f1:
            if not 0.5 < v <= 1.0:
                raise ConfigError(f"readout fidelity {v} outside (0.5, 1]")
        if len(self.f0) != len(self.f1):
            raise ConfigError("f0 and f1 need one entry per qubit")
        for a, b in zip(self.t1, self.t2):
            if a <= 0 or b <= 0 or b > 2 * a:
                raise ConfigError(f"need 0 < T2 <= 2 T1, got T1={a}, T2={b}")

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls()

    @classmethod
    def from_gate_errors(cls, e1: float, e2: float, **kw) -> "NoiseModel":
        return cls(depolarizing_from_pauli_error(e1, 1), depolarizing_from_pauli_error(e2, 2), **kw)

    @classmethod
    def hardware_scale(cls, n_qubits: int = 8, damping: bool = True) -> "NoiseModel":
        """Gate errors 0.03 % / 0.24 %; readout and T1/T2 are representative
        transmon values supplied as configuration, not measured data."""
        return cls.from_gate_errors(
            3e-4, 2.4e-3,
            f0=(0.97,) * n_qubits, f1=(0.92,) * n_qubits,
            t1=(100.0,) * n_qubits, t2=(20.0,) * n_qubits,
            damping=damping,
        )

    def readout_error(self, q: int) -> float:
        if q >= len(self.f0):
            return 0.0
        return 1 - (self.f0[q] + self.f1[q]) / 2

    def confusion(self, q: int) -> np.ndarray:
        """Column ``b`` = distribution of the recorded bit given true bit ``b``."""
        if q >= len(self.f0):
            return np.eye(2)
        f0, f1 = self.f0[q], self.f1[q]
        return np.array([[f0, 1 - f1], [1 - f0, f1]])

    def damping_params(self, q: int, duration_ns: float) -> tuple[float, float]:
        """(amplitude-damping gamma, phase-damping lambda) for one gate on ``q``."""
        if not self.damping or q >= len(self.t1):
            return 0.0, 0.0
        t = duration_ns * 1e-3
        t1, t2 = self.t1[q], self.t2[q]
        gamma = 1 - math.exp(-t / t1)
        inv_tphi = max(1 / t2 - 1 / (2 * t1), 0.0)
        lam = 1 - math.exp(-2 * t * inv_tphi)
        return gamma, lam


def load_noise_toml(path: str | Path) -> NoiseModel:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return noise_from_mapping(doc.get("noise", doc))


def noise_from_mapping(doc: dict) -> NoiseModel:
    known = {"p1", "p2", "f0", "f1", "t1", "t2", "gate_ns_1q", "gate_ns_2q", "damping",
             "pauli_error_1q", "pauli_error_2q"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown noise keys {sorted(unknown)}")
    kw = {k: doc[k] for k in known - {"pauli_error_1q", "pauli_error_2q"} if k in doc}
    if "pauli_error_1q" in doc:
        kw["p1"] = depolarizing_from_pauli_error(doc["pauli_error_1q"], 1)
    if "pauli_error_2q" in doc:
        kw["p2"] = depolarizing_from_pauli_error(doc["pauli_error_2q"], 2)
    return NoiseModel(**kw)


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

def _row_axes(qubits: Iterable[int], n: int) -> list[int]:
    return [n - 1 - q for q in qubits]


def _conjugate(m: np.ndarray, u: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """``U rho U^dag`` with ``U`` acting on ``qubits`` (LSB first)."""
    t = m.reshape((2,) * (2 * n))
    t = _apply_on_axes(t, u, _row_axes(qubits, n))
    t = _apply_on_axes(t, u.conj(), [n + a for a in _row_axes(qubits, n)])
    return t.reshape(m.shape)


def _depolarize(m: np.ndarray, p: float, qubits: Sequence[int], n: int) -> np.ndarray:
    if p == 0.0:
        return m
    k = len(qubits)
    rows = _row_axes(qubits, n)
    cols = [n + a for a in rows]
    t = m.reshape((2,) * (2 * n))
    rest = [a for a in range(2 * n) if a not in rows + cols]
    moved = np.transpose(t, rest + rows + cols)
    lead = moved.shape[: len(rest)]
    blk = moved.reshape(lead + (2**k, 2**k))
    reduced = np.trace(blk, axis1=-2, axis2=-1)
    mixed = reduced[..., None, None] * (np.eye(2**k) / 2**k)
    blk = (1 - p) * blk + p * mixed
    out = np.transpose(blk.reshape(moved.shape), np.argsort(rest + rows + cols))
    return out.reshape(m.shape)


def _damping_superop(gamma: float, lam: float) -> np.ndarray:
    """Amplitude then phase damping as ``S[r, c, r', c']`` on one qubit."""
    amp = [np.array([[1, 0], [0, math.sqrt(1 - gamma)]]), np.array([[0, math.sqrt(gamma)], [0, 0]])]
    ph = [np.array([[1, 0], [0, math.sqrt(1 - lam)]]), np.array([[0, 0], [0, math.sqrt(lam)]])]
    kraus = [b @ a for a in amp for b in ph]
    return sum(np.einsum("ij,kl->ikjl", k, k.conj()) for k in kraus)


def _apply_superop(m: np.ndarray, sop: np.ndarray, q: int, n: int) -> np.ndarray:
    t = m.reshape((2,) * (2 * n))
    r, c = n - 1 - q, 2 * n - 1 - q
    out = np.tensordot(sop, t, axes=([2, 3], [r, c]))
    return np.moveaxis(out, [0, 1], [r, c]).reshape(m.shape)


def _amp_phase_damp(m: np.ndarray, gamma: float, lam: float, q: int, n: int) -> np.ndarray:
    if gamma == 0.0 and lam == 0.0:
        return m
    return _apply_superop(m, _damping_superop(gamma, lam), q, n)


def apply_channel(rho: DensityMatrix, gate: GateOp, model: NoiseModel | None = None) -> DensityMatrix:
    """Ideal gate, then depolarizing on its support, then optional damping."""
    n = rho.n_qubits
    for q in gate.support:
        if not 0 <= q < n:
            raise DimensionError(f"gate acts on qubit {q} of a {n}-qubit register")
    m = _conjugate(rho.matrix, gate.support_matrix(), gate.support, n)
    if model is not None:
        two = len(gate.support) >= 2
        m = _depolarize(m, model.p2 if two else model.p1, gate.support, n)
        if model.damping:
            dur = model.gate_ns_2q if two else model.gate_ns_1q
            for q in gate.support:
                m = _amp_phase_damp(m, *model.damping_params(q, dur), q, n)
    return DensityMatrix(m, n)


def run_noisy(ops: Iterable[GateOp], n_qubits: int, model: NoiseModel | None = None,
              initial: DensityMatrix | None = None) -> DensityMatrix:
    rho = initial or DensityMatrix.from_state(StateVector.zero(n_qubits))
    for op in ops:
        rho = apply_channel(rho, op, model)
    return rho


def depolarize(rho: DensityMatrix, p: float) -> DensityMatrix:
    """Global depolarizing ``(1-p) rho + p I / 2^N``."""
    d = 2**rho.n_qubits
    return DensityMatrix((1 - p) * rho.matrix + p * np.eye(d) / d, rho.n_qubits)


# ---------------------------------------------------------------------------
# eigen-extraction and post-selection
# ---------------------------------------------------------------------------

def top_eigenvector(rho: DensityMatrix, tol: float = DEGENERACY_TOL) -> tuple[np.ndarray, float]:
    """Dominant eigenpair; the vector is phase-fixed with the sum convention."""
    from .fields import fix_global_phase

    vals, vecs = np.linalg.eigh(rho.matrix)
    if vals.size > 1 and vals[-1] - vals[-2] < tol:
        raise DegenerateSpectrumError(
            f"top eigenvalues {vals[-1]:.12g} and {vals[-2]:.12g} are within {tol:g}"
        )
    vec = fix_global_phase(WaveState(vecs[:, -1])).state.amplitudes
    return vec, float(vals[-1])


def postselect_temporal(rho_or_state, temporal_index: int, n_p: int,
                        n_t: int) -> tuple[DensityMatrix, float]:
    """Project the high ``n_t`` qubits on ``|i>``; return the spatial state and its weight."""
    if not 0 <= temporal_index < 2**n_t:
        raise IndexError(f"temporal index {temporal_index} outside 0..{2**n_t - 1}")
    d = 2**n_p
    sl = slice(temporal_index * d, (temporal_index + 1) * d)
    if isinstance(rho_or_state, StateVector):
        blk = rho_or_state.amplitudes[sl]
        block = np.outer(blk, blk.conj())
    else:
        m = rho_or_state.matrix if isinstance(rho_or_state, DensityMatrix) else np.asarray(rho_or_state)
        block = m[sl, sl]
    prob = float(np.trace(block).real)
    if prob < ZERO_PROB:
        raise ZeroProbabilityError(f"post-selection weight {prob:.3e} for temporal index {temporal_index}")
    return DensityMatrix(block / prob, n_p), prob


# ---------------------------------------------------------------------------
# tomography
# ---------------------------------------------------------------------------

_BASIS_ROT = {
    "X": np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2),
    "Y": np.array([[1, -1j], [1, 1j]], dtype=np.complex128) / math.sqrt(2),
    "Z": np.eye(2, dtype=np.complex128),
}


def pauli_strings(n: int) -> list[str]:
    """All 4^n labels; character ``q`` acts on qubit ``q``."""
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n)]


def pauli_operator(label: str) -> np.ndarray:
    # label[q] is qubit q, kron wants the highest qubit first
    return reduce(np.kron, [PAULI[c] for c in reversed(label)])


def _setting_distribution(m: np.ndarray, setting: str, measured: Sequence[int], n: int) -> np.ndarray:
    """Outcome probabilities over all ``n`` qubits after rotating ``measured``."""
    for q, axis in zip(measured, setting):
        if axis != "Z":
            m = _conjugate(m, _BASIS_ROT[axis], (q,), n)
    return np.clip(np.diag(m).real, 0.0, None)


def _apply_per_qubit(probs: np.ndarray, mats: dict[int, np.ndarray], n: int) -> np.ndarray:
    t = probs.reshape((2,) * n)
    for q, mat in mats.items():
        t = _apply_on_axes(t, mat, [n - 1 - q])
    return t.reshape(-1)


def _measure(probs: np.ndarray, n: int, shots: int | None, rng, model: NoiseModel | None,
             mitigate: bool) -> np.ndarray:
    """Recorded (and optionally mitigated) outcome distribution."""
    conf = {q: model.confusion(q) for q in range(n)} if model is not None and model.f0 else {}
    if shots is None and mitigate:
        return probs
    noisy = _apply_per_qubit(probs, conf, n) if conf else probs
    if shots is not None:
        noisy = noisy / noisy.sum()
        noisy = rng.multinomial(shots, noisy) / shots
    if mitigate and conf:
        noisy = _apply_per_qubit(noisy, {q: np.linalg.inv(m) for q, m in conf.items()}, n)
    return noisy


def project_psd(m: np.ndarray) -> np.ndarray:
    """Hermitize, clip negative eigenvalues, renormalize the trace."""
    h = 0.5 * (m + m.conj().T)
    vals, vecs = np.linalg.eigh(h)
    vals = np.clip(vals, 0.0, None)
    if vals.sum() <= 0:
        vals = np.ones_like(vals)
    vals = vals / vals.sum()
    return (vecs * vals) @ vecs.conj().T


def _bits(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    return (idx[:, None] >> np.arange(n)) & 1


def _expectations(dist: np.ndarray, measured: Sequence[int], n: int,
                  labels: Sequence[str]) -> dict[str, float]:
    bits = _bits(n)
    out = {}
    for lab in labels:
        sign = np.ones(dist.size)
        for q, c in zip(measured, lab):
            if c != "I":
                sign = sign * (1 - 2 * bits[:, q])
        out[lab] = float(np.sum(dist * sign))
    return out


def _group_by_setting(n: int) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for lab in pauli_strings(n):
        groups.setdefault(lab.replace("I", "Z"), []).append(lab)
    return groups


def _basis_rng(seed, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([0 if seed is None else int(seed), index]))


def tomography(rho: DensityMatrix, shots_per_basis: int | None, seed: int | None = 0,
               model: NoiseModel | None = None, mitigate: bool = True) -> DensityMatrix:
    """Linear-inversion state tomography; ``shots_per_basis=None`` means exact expectations."""
    if shots_per_basis is not None and shots_per_basis < 1:
        raise ConfigError("shots_per_basis must be >= 1 or None")
    n = rho.n_qubits
    qubits = list(range(n))
    est = np.zeros_like(rho.matrix)
    for b, (setting, labels) in enumerate(sorted(_group_by_setting(n).items())):
        probs = _setting_distribution(rho.matrix, setting, qubits, n)
        dist = _measure(probs, n, shots_per_basis, _basis_rng(seed, b), model, mitigate)
        for lab, val in _expectations(dist, qubits, n, labels).items():
            est += val * pauli_operator(lab)
    est /= 2**n
    return DensityMatrix(project_psd(est), n)


def spacetime_tomography(rho: DensityMatrix, n_p: int, n_t: int, shots_per_basis: int | None,
                         seed: int | None = 0, model: NoiseModel | None = None,
                         mitigate: bool = True) -> tuple[list[DensityMatrix], np.ndarray]:
    """Tomography of the spatial register conditioned on every temporal outcome.

    Temporal qubits are read in Z alongside each spatial setting; readout
    errors hit both registers and are mitigated jointly before conditioning.
    """
    n = rho.n_qubits
    if n != n_p + n_t:
        raise DimensionError("register size does not match n_p + n_t")
    spatial = list(range(n_p))
    dim_s, n_steps = 2**n_p, 2**n_t
    est = np.zeros((n_steps, dim_s, dim_s), dtype=np.complex128)
    weight = np.zeros(n_steps)
    groups = sorted(_group_by_setting(n_p).items())
    for b, (setting, labels) in enumerate(groups):
        probs = _setting_distribution(rho.matrix, setting, spatial, n)
        dist = _measure(probs, n, shots_per_basis, _basis_rng(seed, b), model, mitigate)
        blocks = dist.reshape(n_steps, dim_s)
        weight += blocks.sum(axis=1) / len(groups)
        for i in range(n_steps):
            w = blocks[i].sum()
            if w <= 0:
                continue
            vals = _expectations(blocks[i] / w, spatial, n_p, labels)
            for lab, val in vals.items():
                est[i] += val * pauli_operator(lab)
    out = []
    for i in range(n_steps):
        if weight[i] < ZERO_PROB:
            raise ZeroProbabilityError(f"temporal outcome {i} never observed")
        out.append(DensityMatrix(project_psd(est[i] / dim_s), n_p))
    return out, weight


# ---------------------------------------------------------------------------
# Pauli twirling
# ---------------------------------------------------------------------------

_CZ = np.diag([1, 1, 1, -1]).astype(np.complex128)
_PAULI_LABELS = "IXYZ"


def _cz_pauli_partner(a: str, b: str) -> tuple[str, str]:
    """Labels ``(a', b')`` with ``CZ (P_b x P_a) CZ ~ P_b' x P_a'`` (qubit a = control, low bit)."""
    p = np.kron(PAULI[b], PAULI[a])
    q = _CZ @ p @ _CZ
    for a2, b2 in itertools.product(_PAULI_LABELS, repeat=2):
        cand = np.kron(PAULI[b2], PAULI[a2])
        ov = np.trace(cand.conj().T @ q) / 4
        if abs(abs(ov) - 1) < 1e-12:
            return a2, b2
    raise AssertionError("CZ does not map Paulis to Paulis")


TWIRL_SET: tuple[tuple[str, str, str, str], ...] = tuple(
    (a, b) + _cz_pauli_partner(a, b) for a, b in itertools.product(_PAULI_LABELS, repeat=2)
)


def _pauli_gate(label: str, q: int) -> list[GateOp]:
    return [] if label == "I" else [pauli(label, q)]


def twirl_cz(op: GateOp, choice: tuple[str, str, str, str]) -> list[GateOp]:
    a_pre, b_pre, a_post, b_post = choice
    ctrl, tgt = op.controls[0], op.targets[0]
    return (_pauli_gate(a_pre, ctrl) + _pauli_gate(b_pre, tgt) + [op]
            + _pauli_gate(a_post, ctrl) + _pauli_gate(b_post, tgt))


def pauli_twirl_variants(circuit: Sequence[GateOp], n_variants: int = 50,
                         seed: int | None = 0) -> list[list[GateOp]]:
    """Random twirled copies of ``circuit``; every CZ gets an independent Pauli frame."""
    if not any(op.is_cz for op in circuit):
        raise NoTwirlableGateError("circuit has no CZ gates")
    rng = np.random.default_rng(seed)
    variants = []
    for _ in range(n_variants):
        ops: list[GateOp] = []
        for op in circuit:
            if op.is_cz:
                ops += twirl_cz(op, TWIRL_SET[rng.integers(len(TWIRL_SET))])
            else:
                ops.append(op)
        variants.append(ops)
    return variants


def pauli_transfer_matrix(channel, n: int) -> np.ndarray:
    """``R[i, j] = Tr(P_i channel(P_j)) / 2^n`` over the ``pauli_strings`` order."""
    labels = pauli_strings(n)
    ops = [pauli_operator(l) for l in labels]
    d = 2**n
    return np.array([[np.trace(pi @ channel(pj)).real / d for pj in ops] for pi in ops])


def twirled_cz_error_ptm(error: np.ndarray, choices=TWIRL_SET) -> np.ndarray:
    """PTM of the effective error of ``error . CZ`` averaged over the twirl set.

    The ideal CZ is divided out, so a perfect twirl leaves a diagonal matrix.
    """
    def noisy_variant(rho, choice):
        a_pre, b_pre, a_post, b_post = choice
        pre = np.kron(PAULI[b_pre], PAULI[a_pre])
        post = np.kron(PAULI[b_post], PAULI[a_post])
        u = post @ error @ _CZ @ pre
        return u @ rho @ u.conj().T

    def effective(rho):
        # undo the ideal CZ first so only the error remains
        r = _CZ @ rho @ _CZ
        return sum(noisy_variant(r, c) for c in choices) / len(choices)

    return pauli_transfer_matrix(effective, 2)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def save_density_json(rho: DensityMatrix, path: str | Path) -> None:
    doc = {"n_qubits": rho.n_qubits,
           "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in rho.matrix]}
    Path(path).write_text(json.dumps(doc))


def load_density_json(path: str | Path) -> DensityMatrix:
    doc = json.loads(Path(path).read_text())
    m = np.array([[complex(a, b) for a, b in row] for row in doc["matrix"]])
    return DensityMatrix(m, doc["n_qubits"])
