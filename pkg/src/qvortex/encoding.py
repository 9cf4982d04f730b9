"""Map vortex positions to a normalized complex state and back.

The encoding is ``psi_j = lam * (phi_j - (int_0^t c + c0))``. The reference
drift ``c(t)`` is chosen so that ``sum |psi_j|^2`` is conserved along the
exact dynamics, which makes the state a legitimate quantum amplitude vector
at all times.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateEncodingError,
    DenominatorError,
    EmptySampleError,
    NormDriftError,
    SingularityError,
)
from .vortex import MIN_SEPARATION, Trajectory, VortexSystem, velocities

DENOMINATOR_GUARD = 1e-10
NORM_TOL = 1e-9
NORM_DRIFT_LIMIT = 1e-6


@dataclass(frozen=True)
class WaveState:
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1).copy()
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm2 - 1.0) <= tol

    def normalized(self) -> "WaveState":
        return WaveState(self.amplitudes / math.sqrt(self.norm2))

    def __len__(self) -> int:
        return int(self.amplitudes.size)


@dataclass(frozen=True)
class EncodingFrame:
    """Constants needed to invert the encoding.

    ``c_integral`` is the running value of the drift integral at time ``t``.
    """

    lam: float
    c0: complex
    strengths: np.ndarray
    c_integral: complex = 0j
    t: float = 0.0

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "strengths", np.asarray(self.strengths, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "c0", complex(self.c0))
        object.__setattr__(self, "c_integral", complex(self.c_integral))

    @property
    def reference(self) -> complex:
        """Current reference point ``int c + c0`` in physical coordinates."""
        return self.c0 + self.c_integral


def encode(system: VortexSystem, c0: complex) -> tuple[WaveState, EncodingFrame]:
    shifted = system.positions - complex(c0)
    s = float(np.sum(shifted.real**2 + shifted.imag**2))
    if s == 0.0:
        raise DegenerateEncodingError("all vortices sit on c0")
    lam = 1.0 / math.sqrt(s)
    return WaveState(lam * shifted), EncodingFrame(lam, c0, system.strengths.copy())


def encode_with_frame(positions: np.ndarray, frame: EncodingFrame) -> WaveState:
    """Encode positions with an existing frame (reference at ``frame.t``)."""
    return WaveState(frame.lam * (np.asarray(positions) - frame.reference))


def _pair_terms(amps: np.ndarray, min_sep: float):
    """Return (d, r2) for all ordered pairs along the last axis, diagonal = inf."""
    d = amps[..., :, None] - amps[..., None, :]
    r2 = d.real**2 + d.imag**2
    n = amps.shape[-1]
    idx = np.arange(n)
    r2[..., idx, idx] = np.inf
    if n > 1 and np.sqrt(np.min(r2)) <= min_sep:
        raise SingularityError("wave-state components closer than the separation guard")
    return d, r2


def c_values(amps: np.ndarray, lam: float, strengths: np.ndarray,
             guard: float = DENOMINATOR_GUARD, min_separation: float = MIN_SEPARATION) -> np.ndarray:
    """Drift c for a stack of states (last axis = vortex index)."""
    amps = np.asarray(amps, dtype=np.complex128)
    denom = np.sum(np.conj(amps), axis=-1)
    if np.any(np.abs(denom) <= guard):
        raise DenominatorError(f"|sum conj(psi)| = {np.min(np.abs(denom)):.3e} below guard {guard:g}")
    if amps.shape[-1] < 2:
        return np.zeros(amps.shape[:-1], dtype=np.complex128)
    _, r2 = _pair_terms(amps, min_separation * lam)
    # psi_j conj(psi_k) - psi_k conj(psi_j) for row j, column k
    outer = amps[..., :, None] * np.conj(amps[..., None, :])
    num = outer - np.swapaxes(outer, -1, -2)
    s = np.sum(strengths * num / r2, axis=(-2, -1))
    return 1j * lam / (4.0 * np.pi) * s / denom


def c_of_t(state: WaveState, frame: EncodingFrame, guard: float = DENOMINATOR_GUARD) -> complex:
    return complex(c_values(state.amplitudes, frame.lam, frame.strengths, guard))


def dpsi_dt(amps: np.ndarray, frame: EncodingFrame) -> np.ndarray:
    """Right-hand side of the nonlinear wave-state ODE: lam * (u_j(phi) - c)."""
    lam = frame.lam
    u = velocities(amps / lam, frame.strengths, MIN_SEPARATION)
    return lam * (u - c_values(amps, lam, frame.strengths))


def evolve_wavestate(
    state: WaveState, frame: EncodingFrame, dt: float, n_steps: int,
    drift_limit: float = NORM_DRIFT_LIMIT,
) -> tuple[list[WaveState], EncodingFrame]:
    """RK4-integrate the wave-state ODE.

    Returns ``n_steps + 1`` states (the first is ``state``) and a copy of
    ``frame`` whose ``c_integral`` has been advanced by the RK4 quadrature
    of ``c`` evaluated on the same stages.
    """
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    lam, gam = frame.lam, frame.strengths
    y = state.amplitudes.copy()
    out = [WaveState(y)]
    c_int = frame.c_integral

    def rhs(p):
        c = complex(c_values(p, lam, gam))
        return lam * (velocities(p / lam, gam, MIN_SEPARATION) - c), c

    for i in range(1, n_steps + 1):
        k1, c1 = rhs(y)
        k2, c2 = rhs(y + 0.5 * dt * k1)
        k3, c3 = rhs(y + 0.5 * dt * k2)
        k4, c4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        c_int += (dt / 6.0) * (c1 + 2 * c2 + 2 * c3 + c4)
        drift = abs(float(np.vdot(y, y).real) - 1.0)
        if drift > drift_limit:
            raise NormDriftError(f"norm drifted by {drift:.3e} at step {i}; reduce dt")
        out.append(WaveState(y))
    return out, replace(frame, c_integral=c_int, t=frame.t + n_steps * dt)


@dataclass
class DecodeResult:
    trajectory: Trajectory
    c_const: complex
    sample: np.ndarray
    seed: int | None
    c_history: np.ndarray = field(repr=False, default=None)


def decode(
    states: Sequence[WaveState] | np.ndarray,
    frame: EncodingFrame,
    sampling_proportion: float = 1.0,
    dt: float = 1.0,
    seed: int | None = 0,
    exact: bool = False,
    n_vortices: int | None = None,
) -> DecodeResult:
    """Reconstruct vortex positions from wave states at uniform spacing ``dt``.

    Frame ``i`` is at time ``frame.t + i*dt``. By default the drift integral
    is replaced by ``c_const * i*dt`` where ``c_const`` is the mean of ``c``
    over a random subset of ``ceil(sampling_proportion * n)`` frames.
    ``exact=True`` integrates the full ``c`` history with the trapezoidal
    rule instead.
    """
    if not 0.0 < sampling_proportion <= 1.0:
        raise ConfigError(f"sampling_proportion must lie in (0, 1], got {sampling_proportion}")
    amps = _stack(states, n_vortices or frame.strengths.size)
    n = amps.shape[0]
    k = math.ceil(sampling_proportion * n - 1e-12)
    if k < 1:
        raise EmptySampleError("sample rounds to zero frames")
    tau = dt * np.arange(n)
    if sampling_proportion < 1.0:
        rng = np.random.default_rng(seed)
        sample = np.sort(rng.choice(n, size=k, replace=False))
    else:
        sample = np.arange(n)
    if exact:
        c_hist = c_values(amps, frame.lam, frame.strengths)
        drift = np.concatenate([[0j], np.cumsum(0.5 * dt * (c_hist[1:] + c_hist[:-1]))])
        c_const = complex(np.mean(c_hist[sample]))
    else:
        c_hist = c_values(amps[sample], frame.lam, frame.strengths)
        c_const = complex(np.sum(c_hist) / sample.size)  # fixed index order
        drift = c_const * tau
    pos = amps / frame.lam + frame.c0 + frame.c_integral + drift[:, None]
    traj = Trajectory(
        frame.t + tau, pos, frame.strengths.copy(),
        meta={"c_const": c_const, "sampling_proportion": sampling_proportion,
              "seed": seed, "exact": exact},
    )
    return DecodeResult(traj, c_const, sample, seed, c_hist)


def _stack(states, n_vortices: int) -> np.ndarray:
    if isinstance(states, np.ndarray):
        amps = np.asarray(states, dtype=np.complex128)
    else:
        amps = np.array([s.amplitudes for s in states], dtype=np.complex128)
    return amps[:, :n_vortices]


def encode_trajectory(traj: Trajectory, c0: complex, c_integrals: np.ndarray | None = None):
    """Encode every frame of a trajectory with the t=0 scale.

    ``c_integrals`` supplies the reference drift per frame; without it only
    frame 0 is exactly normalized.
    """
    _, frame = encode(traj.frame(0), c0)
    ref = complex(c0) + (np.zeros(len(traj)) if c_integrals is None else np.asarray(c_integrals))
    amps = frame.lam * (traj.positions - ref[:, None])
    return [WaveState(a) for a in amps], frame


def reference_drift(traj: Trajectory, c0: complex) -> tuple[np.ndarray, EncodingFrame]:
    """Drift integral ``int_0^t c`` at every frame of an ideal-flow trajectory.

    ``c`` depends on the reference itself, so the integral is advanced frame
    by frame with Heun's method using only the recorded positions.
    """
    _, frame = encode(traj.frame(0), c0)
    lam, gam = frame.lam, frame.strengths
    dt = traj.dt if len(traj) > 1 else 0.0
    refs = np.empty(len(traj), dtype=np.complex128)
    refs[0] = 0j

    def c_at(i: int, integral: complex) -> complex:
        return complex(c_values(lam * (traj.positions[i] - c0 - integral), lam, gam))

    for i in range(len(traj) - 1):
        k1 = c_at(i, refs[i])
        k2 = c_at(i + 1, refs[i] + dt * k1)
        refs[i + 1] = refs[i] + 0.5 * dt * (k1 + k2)
    return refs, frame


def norm_preserving_reference(traj: Trajectory, c0: complex) -> tuple[np.ndarray, EncodingFrame]:
    """Reference path for data that does not follow ideal point-vortex dynamics.

    The reference sits on the fixed ray from the centroid through ``c0`` at the
    distance that keeps ``sum |phi_j - ref|^2`` at its initial value, so every
    encoded frame is exactly normalized. Returned values are offsets from ``c0``
    in the ``c_integral`` sense.
    """
    c0 = complex(c0)
    pos = traj.positions
    n = pos.shape[1]
    centroid = pos.mean(axis=1)
    spread = np.sum(np.abs(pos - centroid[:, None]) ** 2, axis=1)
    d0 = c0 - centroid[0]
    total = spread[0] + n * abs(d0) ** 2
    if total == 0:
        raise DegenerateEncodingError("all vortices sit on c0")
    slack = total - spread
    if np.any(slack < 0):
        bad = int(np.argmax(slack < 0))
        raise DegenerateEncodingError(
            f"frame {bad}: vortex spread exceeds the initial encoding budget; move c0 further out"
        )
    direction = d0 / abs(d0) if abs(d0) > 0 else 1.0
    refs = centroid + direction * np.sqrt(slack / n)
    _, frame = encode(traj.frame(0), c0)
    return refs - c0, frame


# ---------------------------------------------------------------------------
# JSON interface
# ---------------------------------------------------------------------------

def _c2(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _from_c2(v) -> complex:
    return complex(v[0], v[1])


def save_encoding_json(
    path: str | Path, states: Sequence[WaveState] | WaveState, frame: EncodingFrame,
    dt: float | None = None, seed: int | None = None, extra: dict | None = None,
) -> None:
    if isinstance(states, WaveState):
        amps = [_c2(z) for z in states.amplitudes]
    else:
        amps = [[_c2(z) for z in s.amplitudes] for s in states]
    doc = {
        "amplitudes": amps,
        "lambda": frame.lam,
        "c0": _c2(frame.c0),
        "c_integral": _c2(frame.c_integral),
        "t": frame.t,
        "strengths": frame.strengths.tolist(),
        "dt": dt,
        "seed": seed,
    }
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=1))


def load_encoding_json(path: str | Path) -> tuple[list[WaveState], EncodingFrame, dict]:
    doc = json.loads(Path(path).read_text())
    amps = doc["amplitudes"]
    if amps and isinstance(amps[0][0], (int, float)):
        amps = [amps]
    states = [WaveState([_from_c2(z) for z in a]) for a in amps]
    frame = EncodingFrame(
        doc["lambda"], _from_c2(doc["c0"]), doc["strengths"],
        _from_c2(doc.get("c_integral", [0.0, 0.0])), doc.get("t", 0.0),
    )
    core = {"amplitudes", "lambda", "c0", "c_integral", "t", "strengths"}
    return states, frame, {k: v for k, v in doc.items() if k not in core}
