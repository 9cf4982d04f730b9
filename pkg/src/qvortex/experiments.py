"""Pipeline stages shared by the command line and the acceptance suite."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .compile import lower_spacetime, merge_single_qubit_runs
from .config import NOISY_QUBIT_CAP, RunConfig
from .encoding import (
    EncodingFrame,
    WaveState,
    decode,
    norm_preserving_reference,
    reference_drift,
)
from .errors import ConfigError, DataError, InsufficientDataError
from .fields import ExperimentDecode, decode_experiment
from .hamiltonian import (
    EffectiveHamiltonian,
    FitOptions,
    TrainingSet,
    build_multiscale_training_set,
    build_training_set,
    fit,
    propagator,
)
from .noise import (
    DensityMatrix,
    NoiseModel,
    noise_from_mapping,
    pauli_twirl_variants,
    run_noisy,
    spacetime_tomography,
    top_eigenvector,
)
from .spacetime import SpacetimePlan, build_plan, extract_all, n_qubits_for, run
from .vortex import Trajectory, VortexSystem, from_xy, integrate, read_trajectory_csv
from .vqa import Ansatz, TrainOptions, TrainResult, train

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# initial data and ground truth
# ---------------------------------------------------------------------------

def random_vortices(n: int, box: float, seed: int) -> VortexSystem:
    """Uniform positions in ``[-box, box]^2`` and strengths in ``[-1, 1]`` without zero."""
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-box, box, size=(n, 2))
    g = rng.uniform(-1.0, 1.0, size=n)
    while np.any(g == 0.0):
        g[g == 0.0] = rng.uniform(-1.0, 1.0, size=int(np.sum(g == 0.0)))
    return from_xy(xy, g)


def initial_system(cfg: RunConfig) -> VortexSystem:
    if cfg.positions:
        return from_xy(cfg.positions, cfg.strengths)
    if cfg.n_random_vortices:
        return random_vortices(cfg.n_random_vortices, cfg.random_box, cfg.seed)
    raise ConfigError("no initial vortex data in config")


def default_c0(system: VortexSystem) -> complex:
    """A reference well to the left of the configuration (keeps ``sum psi`` away from 0)."""
    centre = complex(system.positions.mean())
    radius = float(np.max(np.abs(system.positions - centre)))
    return centre - (2.0 * radius + 0.5)


def synthetic_viscous_pair(n_frames: int = 16, dt: float = 0.1, d0: float = 1.0,
                           tau: float = 2.0) -> Trajectory:
    """Stand-in for grid-solver output: two equal co-rotating vortices whose
    separation shrinks as ``d0 / sqrt(1 + t / tau)``."""
    t = dt * np.arange(n_frames)
    d = d0 / np.sqrt(1 + t / tau)
    theta = (t + t**2 / (2 * tau)) / (np.pi * d0**2)
    half = 0.5 * d * np.exp(1j * theta)
    pos = np.stack([half, -half], axis=1)
    return Trajectory(t, pos, np.array([1.0, 1.0]), meta={"source": "synthetic viscous pair"})


def ground_truth(cfg: RunConfig) -> Trajectory:
    if cfg.truth_csv:
        traj = read_trajectory_csv(cfg.truth_csv)
        return traj
    if cfg.preset == "viscous-import":
        raise ConfigError("viscous-import needs truth_csv")
    return integrate(initial_system(cfg), cfg.dt, cfg.n_truth_steps)


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

@dataclass
class Encoded:
    states: list[WaveState]
    frame: EncodingFrame
    refs: np.ndarray  # drift integral per frame
    dt: float
    mode: str
    max_norm_error: float = 0.0


def encode_truth(cfg: RunConfig, traj: Trajectory) -> Encoded:
    c0 = cfg.c0_complex if cfg.c0 is not None else default_c0(traj.frame(0))
    if cfg.preset == "viscous-import":
        refs, frame = norm_preserving_reference(traj, c0)
        mode = "norm-preserving"
    else:
        refs, frame = reference_drift(traj, c0)
        mode = "drift"
    amps = frame.lam * (traj.positions - c0 - refs[:, None])
    norms = np.sqrt(np.sum(np.abs(amps) ** 2, axis=1))
    err = float(np.max(np.abs(norms**2 - 1)))
    states = [WaveState(a / n) for a, n in zip(amps, norms)]
    return Encoded(states, frame, refs, traj.dt if len(traj) > 1 else cfg.dt, mode, err)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def training_frames(cfg: RunConfig, enc: Encoded) -> list[WaveState]:
    end = cfg.train_end_frame
    if end >= len(enc.states):
        raise InsufficientDataError(
            f"training window needs {end + 1} frames, trajectory has {len(enc.states)}"
        )
    return enc.states[: end + 1: cfg.train_stride]


def training_set(cfg: RunConfig, enc: Encoded) -> TrainingSet:
    frames = training_frames(cfg, enc)
    if list(cfg.pair_strides) == [1]:
        return build_training_set(frames, 1)
    return build_multiscale_training_set(frames, cfg.pair_strides)


def dt_train(cfg: RunConfig, enc: Encoded) -> float:
    return cfg.train_stride * enc.dt


@dataclass
class Model:
    kind: str
    step_unitary: np.ndarray
    hamiltonian: EffectiveHamiltonian | None = None
    ansatz: Ansatz | None = None
    vqa: TrainResult | None = None
    loss: float = float("nan")

    def ladder(self, n_t: int) -> list[np.ndarray]:
        if self.hamiltonian is not None:
            return [propagator(self.hamiltonian, 2 ** (k - 1)) for k in range(1, n_t + 1)]
        out = [self.step_unitary]
        for _ in range(1, n_t):
            out.append(out[-1] @ out[-1])
        return out


def vqa_training_set(cfg: RunConfig, training: TrainingSet, enc: Encoded) -> TrainingSet:
    """Re-express pair separations in prediction steps (must be powers of two)."""
    ratio = dt_train(cfg, enc) / cfg.dt_predict
    steps = training.steps * ratio
    if not np.allclose(steps, np.round(steps), atol=1e-9):
        raise ConfigError("pair separations are not whole multiples of dt_predict")
    steps = np.round(steps).astype(int)
    if np.any(steps < 1) or np.any(steps & (steps - 1)):
        raise ConfigError("VQA pair separations must be powers of two prediction steps")
    return TrainingSet(training.inputs, training.targets, steps)


def fit_model(cfg: RunConfig, enc: Encoded, training: TrainingSet | None = None) -> Model:
    training = training or training_set(cfg, enc)
    if cfg.model == "hamiltonian":
        h = fit(training, dt_train(cfg, enc), FitOptions(max_iters=cfg.fit_iters, seed=cfg.seed),
                dt_predict=cfg.dt_predict)
        return Model("hamiltonian", propagator(h, 1), hamiltonian=h, loss=h.loss)
    vset = vqa_training_set(cfg, training, enc)
    ansatz = Ansatz(n_qubits_for(training.inputs.shape[1]), cfg.vqa_depth)
    res = train(ansatz, vset, TrainOptions(optimizer=cfg.vqa_optimizer, lr=cfg.vqa_lr,
                                            max_iters=cfg.vqa_iters, seed=cfg.seed))
    return Model("vqa", ansatz.unitary(res.theta), ansatz=ansatz, vqa=res, loss=res.loss)


# ---------------------------------------------------------------------------
# prediction and read-out
# ---------------------------------------------------------------------------

def start_index(cfg: RunConfig) -> int:
    return cfg.train_end_frame if cfg.predict_from == "end" else 0


def start_frame(cfg: RunConfig, enc: Encoded) -> tuple[WaveState, EncodingFrame]:
    i = start_index(cfg)
    frame = replace(enc.frame, c_integral=complex(enc.refs[i]), t=i * enc.dt)
    return enc.states[i], frame


def drift_constant(cfg: RunConfig, enc: Encoded) -> complex:
    """Random-sampling estimate of the reference drift over the training window."""
    window = enc.states[: cfg.train_end_frame + 1]
    if cfg.preset == "viscous-import":
        # the reference path is known exactly on the window; use its mean slope
        t = enc.dt * np.arange(len(window))
        r = enc.refs[: len(window)]
        return complex(np.polyfit(t, r.real, 1)[0] + 1j * np.polyfit(t, r.imag, 1)[0])
    res = decode(window, enc.frame, cfg.sampling_proportion, dt=enc.dt, seed=cfg.seed)
    return res.c_const


def make_plan(cfg: RunConfig, model: Model, initial: WaveState) -> SpacetimePlan:
    ladder = model.ladder(cfg.n_t)
    return build_plan(cfg.n_t, initial, ladder[0], f_k=ladder)


def noiseless_blocks(plan: SpacetimePlan) -> tuple[list[WaveState], np.ndarray]:
    return extract_all(run(plan))


@dataclass
class NoisyReadout:
    blocks: list[WaveState]
    weights: np.ndarray
    eigenvalues: np.ndarray
    rho: DensityMatrix = field(repr=False)
    n_cz: int = 0


def noise_model(cfg: RunConfig, n_qubits: int) -> NoiseModel:
    if cfg.noise:
        return noise_from_mapping(cfg.noise)
    return NoiseModel.hardware_scale(n_qubits)


def noisy_blocks(plan: SpacetimePlan, model: NoiseModel, n_variants: int = 50, seed: int = 0,
                 shots: int | None = None, mitigate: bool = True) -> NoisyReadout:
    """Twirl-averaged density-matrix run, conditioned tomography, top eigenvectors."""
    if plan.n_qubits > NOISY_QUBIT_CAP:
        raise ConfigError(
            f"noisy emulation is capped at {NOISY_QUBIT_CAP} qubits, plan needs {plan.n_qubits}"
        )
    ops = lower_spacetime(plan)
    variants = pauli_twirl_variants(ops, n_variants, seed)
    acc = np.zeros((2**plan.n_qubits,) * 2, dtype=np.complex128)
    for v in variants:
        acc += run_noisy(merge_single_qubit_runs(v), plan.n_qubits, model).matrix
    rho = DensityMatrix(acc / n_variants, plan.n_qubits)
    spatial, weights = spacetime_tomography(rho, plan.n_p, plan.n_t, shots, seed, model, mitigate)
    blocks, vals = [], []
    for r in spatial:
        vec, val = top_eigenvector(r)
        vec = vec[: plan.n_vortices]
        blocks.append(WaveState(vec / np.linalg.norm(vec)))
        vals.append(val)
    n_cz = sum(1 for op in ops if op.is_cz)
    return NoisyReadout(blocks, weights, np.array(vals), rho, n_cz)


def reconstruct(blocks, frame: EncodingFrame, c_const: complex, dt_predict: float) -> ExperimentDecode:
    return decode_experiment(blocks, frame, 1.0, dt=dt_predict, c_const=c_const)


def block_times(cfg: RunConfig, frame: EncodingFrame) -> np.ndarray:
    return frame.t + cfg.dt_predict * np.arange(2**cfg.n_t)


def nearest_steps(times: np.ndarray, targets) -> list[int]:
    return [int(np.argmin(np.abs(times - t))) for t in targets]


def check_truth_matches(cfg: RunConfig, traj: Trajectory) -> None:
    if cfg.truth_csv and len(traj) > 1 and not math.isclose(traj.dt, cfg.dt, rel_tol=1e-9):
        raise DataError(f"truth file spacing {traj.dt:g} differs from config dt {cfg.dt:g}")
