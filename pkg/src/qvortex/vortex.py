"""Ground-truth 2D point-vortex dynamics.

Positions are complex numbers ``phi = x + i*y``. The velocity of vortex ``j``
is the Biot-Savart sum

    dphi_j/dt = i/(2*pi) * sum_{k != j} Gamma_k (phi_j - phi_k) / |phi_j - phi_k|**2

and trajectories are produced with fixed-step classical RK4. Sums run over
ascending vortex index so results are bitwise reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, SingularityError

MIN_SEPARATION = 1e-8


@dataclass(frozen=True)
class VortexSystem:
    """N_p point vortices with complex positions and real strengths."""

    positions: np.ndarray
    strengths: np.ndarray
    min_separation: float = MIN_SEPARATION

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=np.complex128).reshape(-1)
        gam = np.asarray(self.strengths, dtype=np.float64).reshape(-1)
        if pos.size < 1:
            raise ConfigError("a vortex system needs at least one vortex")
        if pos.shape != gam.shape:
            raise ConfigError(f"{pos.size} positions but {gam.size} strengths")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(gam))):
            raise ConfigError("positions and strengths must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "strengths", gam)
        _check_separation(pos, self.min_separation)

    @property
    def n(self) -> int:
        return int(self.positions.size)

    def with_positions(self, positions: np.ndarray) -> "VortexSystem":
        return VortexSystem(positions, self.strengths, self.min_separation)


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled vortex positions; strengths are constant in time.

    ``positions`` has shape ``(n_frames, N_p)``.
    """

    times: np.ndarray
    positions: np.ndarray
    strengths: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=np.float64).reshape(-1)
        pos = np.asarray(self.positions, dtype=np.complex128)
        gam = np.asarray(self.strengths, dtype=np.float64).reshape(-1)
        if pos.ndim != 2 or pos.shape[0] != t.size or pos.shape[1] != gam.size:
            raise DataError(
                f"trajectory shape mismatch: times {t.shape}, positions {pos.shape}, "
                f"strengths {gam.shape}"
            )
        if t.size >= 2:
            steps = np.diff(t)
            if np.any(steps <= 0):
                raise DataError("trajectory times must be strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise DataError("trajectory times must be uniformly spaced")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "strengths", gam)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def __len__(self) -> int:
        return int(self.times.size)

    def frame(self, i: int) -> VortexSystem:
        return VortexSystem(self.positions[i], self.strengths)

    @property
    def frames(self) -> list[VortexSystem]:
        return [self.frame(i) for i in range(len(self))]


def _check_separation(positions: np.ndarray, min_sep: float, step: int | None = None) -> None:
    if positions.size < 2:
        return
    d = np.abs(positions[:, None] - positions[None, :])
    np.fill_diagonal(d, np.inf)
    if d.min() <= min_sep:
        j, k = np.unravel_index(np.argmin(d), d.shape)
        raise SingularityError(
            f"vortices {j} and {k} are {d[j, k]:.3e} apart (guard {min_sep:g})", step
        )


def induced_velocity(
    system: VortexSystem, point: complex, exclude: int | None = None
) -> complex:
    """Complex velocity ``u + i*v`` induced at ``point`` by all vortices but ``exclude``."""
    total = 0j
    for k in range(system.n):
        if k == exclude:
            continue
        d = point - system.positions[k]
        r2 = d.real * d.real + d.imag * d.imag
        if math.sqrt(r2) <= system.min_separation:
            raise SingularityError(f"point {point} lies on vortex {k}")
        total += system.strengths[k] * d / r2
    return complex(1j * total / (2.0 * math.pi))


def velocities(
    positions: np.ndarray, strengths: np.ndarray, min_separation: float = MIN_SEPARATION
) -> np.ndarray:
    """Self-induced velocity of every vortex (vectorised ``induced_velocity``)."""
    d = positions[:, None] - positions[None, :]
    r2 = d.real**2 + d.imag**2
    np.fill_diagonal(r2, np.inf)
    if positions.size > 1 and np.sqrt(r2.min()) <= min_separation:
        raise SingularityError("vortices closer than the separation guard")
    # row j sums over k in ascending order
    return 1j / (2.0 * np.pi) * np.sum(strengths[None, :] * d / r2, axis=1)


def hamiltonian_hp(system: VortexSystem) -> float:
    """Kirchhoff-Routh function (1/4pi) sum_{j != k} G_j G_k log|phi_j - phi_k|^2."""
    pos, gam = system.positions, system.strengths
    total = 0.0
    for j in range(system.n):
        for k in range(system.n):
            if j == k:
                continue
            d = pos[j] - pos[k]
            r2 = d.real * d.real + d.imag * d.imag
            if math.sqrt(r2) <= system.min_separation:
                raise SingularityError(f"vortices {j} and {k} coincide")
            total += gam[j] * gam[k] * math.log(r2)
    return total / (4.0 * math.pi)


def linear_impulse(system: VortexSystem) -> complex:
    return complex(np.sum(system.strengths * system.positions))


def rk4_step(f, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system: VortexSystem, dt: float, n_steps: int, t0: float = 0.0) -> Trajectory:
    """Fixed-step RK4 trajectory with ``n_steps + 1`` frames; frame 0 is ``system``."""
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise ConfigError(f"n_steps must be non-negative, got {n_steps}")
    gam = system.strengths
    sep = system.min_separation
    out = np.empty((n_steps + 1, system.n), dtype=np.complex128)
    out[0] = y = system.positions.copy()
    f = lambda p: velocities(p, gam, sep)  # noqa: E731
    for i in range(1, n_steps + 1):
        try:
            y = rk4_step(f, y, dt)
        except SingularityError as exc:
            raise SingularityError("RK4 stage hit the separation guard", step=i) from exc
        out[i] = y
    times = t0 + dt * np.arange(n_steps + 1)
    return Trajectory(times, out, gam.copy(), meta={"integrator": "rk4", "dt": dt})


# ---------------------------------------------------------------------------
# CSV interface: header t,j,x,y,gamma; one row per (frame, vortex)
# ---------------------------------------------------------------------------

CSV_HEADER = ("t", "j", "x", "y", "gamma")


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, t in enumerate(traj.times):
            for j in range(traj.positions.shape[1]):
                p = traj.positions[i, j]
                w.writerow(
                    [f"{t:.17g}", j, f"{p.real:.17g}", f"{p.imag:.17g}", f"{traj.strengths[j]:.17g}"]
                )


def read_trajectory_csv(path: str | Path) -> Trajectory:
    """Load a trajectory written by ``write_trajectory_csv`` or an external tool."""
    rows: dict[float, dict[int, tuple[complex, float]]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames[:5]) != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            t = float(row["t"])
            rows.setdefault(t, {})[int(row["j"])] = (
                complex(float(row["x"]), float(row["y"])),
                float(row["gamma"]),
            )
    if not rows:
        raise DataError(f"{path}: no trajectory rows")
    times = sorted(rows)
    n = len(rows[times[0]])
    pos = np.empty((len(times), n), dtype=np.complex128)
    gam = np.array([rows[times[0]][j][1] for j in range(n)])
    for i, t in enumerate(times):
        frame = rows[t]
        if sorted(frame) != list(range(n)):
            raise DataError(f"{path}: frame t={t} does not list vortices 0..{n - 1}")
        pos[i] = [frame[j][0] for j in range(n)]
        if not np.allclose([frame[j][1] for j in range(n)], gam):
            raise DataError(f"{path}: strengths change at t={t}")
    return Trajectory(np.array(times), pos, gam)


def from_xy(xy: Sequence[Sequence[float]], strengths: Sequence[float]) -> VortexSystem:
    arr = np.asarray(xy, dtype=np.float64)
    return VortexSystem(arr[:, 0] + 1j * arr[:, 1], strengths)
