"""From recovered states back to vortex positions and velocity fields."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoding import DecodeResult, EncodingFrame, WaveState, decode
from .errors import ConfigError, DimensionError
from .vortex import MIN_SEPARATION, VortexSystem

PHASE_GUARD = 1e-10
DEFAULT_DELTA = 0.05
MAX_STREAMLINE_STEPS = 2000


@dataclass(frozen=True)
class PhaseFixed:
    state: WaveState
    fallback: bool


def fix_global_phase(state: WaveState, guard: float = PHASE_GUARD) -> PhaseFixed:
    """Rotate so that the amplitude sum is real and non-negative.

    If that sum vanishes the largest-magnitude component is made real positive
    instead and ``fallback`` is set.
    """
    a = state.amplitudes
    s = a.sum()
    if abs(s) > guard:
        return PhaseFixed(WaveState(a * (abs(s) / s)), False)
    big = a[np.argmax(np.abs(a))]
    if abs(big) == 0:
        return PhaseFixed(WaveState(a), True)
    return PhaseFixed(WaveState(a * (abs(big) / big)), True)


def fidelity(ideal: WaveState | np.ndarray, test: WaveState | np.ndarray) -> float:
    a = ideal.amplitudes if isinstance(ideal, WaveState) else np.asarray(ideal, complex)
    b = test.amplitudes if isinstance(test, WaveState) else np.asarray(test, complex)
    if a.shape != b.shape:
        raise DimensionError(f"state sizes {a.size} and {b.size} differ")
    f = abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)
    return float(min(max(f, 0.0), 1.0))


def deviation(ideal: VortexSystem | np.ndarray, test: VortexSystem | np.ndarray) -> float:
    """Sum over vortices of the Euclidean position error."""
    a = ideal.positions if isinstance(ideal, VortexSystem) else np.asarray(ideal, complex)
    b = test.positions if isinstance(test, VortexSystem) else np.asarray(test, complex)
    if a.shape != b.shape:
        raise DimensionError(f"vortex counts {a.size} and {b.size} differ")
    return float(np.sum(np.abs(a - b)))


def metrics(ideal_state, test_state, ideal_system, test_system) -> tuple[float, float]:
    return fidelity(ideal_state, test_state), deviation(ideal_system, test_system)


# ---------------------------------------------------------------------------
# velocity fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldGrid:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    nx: int
    ny: int
    velocities: np.ndarray  # shape (ny, nx), complex u + i v; NaN where masked
    delta: float

    def __post_init__(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("field grids need nx, ny >= 2")
        if self.delta < 0:
            raise ConfigError("delta must be non-negative")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(*self.x_range, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(*self.y_range, self.ny)

    @property
    def nodes(self) -> np.ndarray:
        x, y = np.meshgrid(self.xs, self.ys)
        return x + 1j * y

    @property
    def mask(self) -> np.ndarray:
        return ~np.isfinite(self.velocities)


def kernel_velocity(points: np.ndarray, positions: np.ndarray, strengths: np.ndarray,
                    delta: float = 0.0) -> np.ndarray:
    """Smoothed point-vortex velocity ``(1/2pi) sum G i (z - phi) / (|z - phi|^2 + delta^2)``."""
    z = np.asarray(points, dtype=np.complex128)
    d = z[..., None] - positions
    r2 = d.real**2 + d.imag**2 + delta**2
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.sum(strengths * 1j * d / r2, axis=-1) / (2 * np.pi)
    return u


def velocity_field(system: VortexSystem, x_range=(-2.0, 2.0), y_range=(-2.0, 2.0),
                   nx: int = 41, ny: int = 41, delta: float | None = None,
                   min_separation: float = MIN_SEPARATION) -> FieldGrid:
    """Grid velocities; ``delta=None`` picks 0.05 grid diagonals, ``delta=0`` masks near-vortex nodes."""
    if nx < 2 or ny < 2:
        raise ConfigError("field grids need nx, ny >= 2")
    if delta is None:
        hx = (x_range[1] - x_range[0]) / (nx - 1)
        hy = (y_range[1] - y_range[0]) / (ny - 1)
        delta = DEFAULT_DELTA * math.hypot(hx, hy)
    if delta < 0:
        raise ConfigError("delta must be non-negative")
    xs, ys = np.linspace(*x_range, nx), np.linspace(*y_range, ny)
    z = xs[None, :] + 1j * ys[:, None]
    u = kernel_velocity(z, system.positions, system.strengths, delta)
    if delta == 0:
        near = np.min(np.abs(z[..., None] - system.positions), axis=-1) <= min_separation
        u = np.where(near, np.nan + 0j, u)
    return FieldGrid(tuple(x_range), tuple(y_range), nx, ny, u, float(delta))


def _interp(grid: FieldGrid, p: complex) -> complex | None:
    x0, x1 = grid.x_range
    y0, y1 = grid.y_range
    if not (x0 <= p.real <= x1 and y0 <= p.imag <= y1):
        return None
    fx = (p.real - x0) / (x1 - x0) * (grid.nx - 1)
    fy = (p.imag - y0) / (y1 - y0) * (grid.ny - 1)
    i = min(int(fx), grid.nx - 2)
    j = min(int(fy), grid.ny - 2)
    tx, ty = fx - i, fy - j
    v = grid.velocities
    val = ((1 - tx) * (1 - ty) * v[j, i] + tx * (1 - ty) * v[j, i + 1]
           + (1 - tx) * ty * v[j + 1, i] + tx * ty * v[j + 1, i + 1])
    return None if not np.isfinite(val) else complex(val)


def streamlines(grid: FieldGrid, n_seeds: int = 24, step: float | None = None,
                max_steps: int = MAX_STREAMLINE_STEPS) -> list[np.ndarray]:
    """RK2 (midpoint) polylines through the interpolated grid field, seeded on the boundary."""
    max_steps = min(max_steps, MAX_STREAMLINE_STEPS)
    x0, x1 = grid.x_range
    y0, y1 = grid.y_range
    if step is None:
        step = 0.5 * min((x1 - x0) / (grid.nx - 1), (y1 - y0) / (grid.ny - 1))
    per_side = max(1, n_seeds // 4)
    t = (np.arange(per_side) + 0.5) / per_side
    inset = 1e-9
    seeds = np.concatenate([
        x0 + (x1 - x0) * t + 1j * (y0 + inset),
        x0 + (x1 - x0) * t + 1j * (y1 - inset),
        (x0 + inset) + 1j * (y0 + (y1 - y0) * t),
        (x1 - inset) + 1j * (y0 + (y1 - y0) * t),
    ])
    lines = []
    for s in seeds:
        pts = [complex(s)]
        p = complex(s)
        for _ in range(max_steps):
            v1 = _interp(grid, p)
            if v1 is None or abs(v1) < 1e-14:
                break
            mid = p + 0.5 * step * v1 / abs(v1)
            v2 = _interp(grid, mid)
            if v2 is None or abs(v2) < 1e-14:
                break
            p = p + step * v2 / abs(v2)
            if _interp(grid, p) is None:
                break
            pts.append(p)
        if len(pts) > 1:
            lines.append(np.array(pts))
    return lines


def write_field_csv(grid: FieldGrid, path: str | Path) -> None:
    nodes = grid.nodes.ravel()
    vel = grid.velocities.ravel()
    rows = ["x,y,ux,uy"]
    for z, u in zip(nodes, vel):
        rows.append(f"{z.real:.17g},{z.imag:.17g},{u.real:.17g},{u.imag:.17g}")
    Path(path).write_text("\n".join(rows) + "\n")


def read_field_csv(path: str | Path) -> np.ndarray:
    """Rows of ``(x, y, ux, uy)``."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_streamlines_json(lines: Sequence[np.ndarray], path: str | Path) -> None:
    doc = [[[float(p.real), float(p.imag)] for p in line] for line in lines]
    Path(path).write_text(json.dumps(doc))


def render_svg(grid: FieldGrid, lines: Sequence[np.ndarray] = (), system: VortexSystem | None = None,
               size: int = 480, arrow_every: int = 2) -> str:
    """Quiver plus streamlines as a standalone SVG document."""
    x0, x1 = grid.x_range
    y0, y1 = grid.y_range
    sx = size / (x1 - x0)
    sy = size / (y1 - y0)

    def px(z: complex) -> tuple[float, float]:
        return (z.real - x0) * sx, (y1 - z.imag) * sy

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    for line in lines:
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in map(px, line))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#4477aa" stroke-width="0.8"/>')
    finite = grid.velocities[np.isfinite(grid.velocities)]
    vmax = float(np.max(np.abs(finite))) if finite.size else 1.0
    cell = min(size / (grid.nx - 1), size / (grid.ny - 1)) * arrow_every * 0.9
    nodes = grid.nodes
    for j in range(0, grid.ny, arrow_every):
        for i in range(0, grid.nx, arrow_every):
            u = grid.velocities[j, i]
            if not np.isfinite(u) or vmax == 0:
                continue
            a, b = px(nodes[j, i])
            du = u / vmax * cell
            out.append(f'<line x1="{a:.2f}" y1="{b:.2f}" x2="{a + du.real:.2f}" '
                       f'y2="{b - du.imag:.2f}" stroke="#222" stroke-width="0.6"/>')
    if system is not None:
        for z, g in zip(system.positions, system.strengths):
            a, b = px(z)
            colour = "#cc3311" if g > 0 else "#0077bb"
            out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="4" fill="{colour}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# decoding recovered blocks
# ---------------------------------------------------------------------------

@dataclass
class ExperimentDecode:
    result: DecodeResult
    states: list[WaveState]
    fallback_steps: list[int]

    @property
    def trajectory(self):
        return self.result.trajectory


def decode_experiment(blocks: Sequence[WaveState], frame: EncodingFrame,
                      sampling_proportion: float = 1.0, dt: float = 1.0, seed: int | None = 0,
                      c_const: complex | None = None) -> ExperimentDecode:
    """Phase-fix each block, then invert the encoding.

    ``c_const`` pins the reference drift (for example to the value measured
    on the noiseless run) instead of re-estimating it from ``blocks``.
    """
    fixed = [fix_global_phase(b) for b in blocks]
    states = [f.state for f in fixed]
    flagged = [i for i, f in enumerate(fixed) if f.fallback]
    res = decode(states, frame, sampling_proportion, dt=dt, seed=seed)
    if c_const is not None:
        tau = dt * np.arange(len(states))
        amps = np.array([s.amplitudes for s in states])[:, : frame.strengths.size]
        pos = amps / frame.lam + frame.reference + complex(c_const) * tau[:, None]
        traj = type(res.trajectory)(res.trajectory.times, pos, res.trajectory.strengths,
                                    meta={**res.trajectory.meta, "c_const": complex(c_const),
                                          "c_pinned": True})
        res = DecodeResult(traj, complex(c_const), res.sample, seed, res.c_history)
    return ExperimentDecode(res, states, flagged)
