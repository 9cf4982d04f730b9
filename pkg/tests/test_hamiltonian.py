import math

import numpy as np
import pytest
from scipy.linalg import expm

from qvortex.errors import ConfigError, InsufficientDataError, NonConvergenceError
from qvortex.hamiltonian import (
    EffectiveHamiltonian,
    FitOptions,
    TrainingSet,
    build_training_set,
    fit,
    load_hamiltonian_json,
    loss_and_grad,
    matrix_to_params,
    params_to_matrix,
    propagator,
    save_hamiltonian_json,
    training_loss,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)


def random_states(rng, n_states, dim):
    x = rng.normal(size=(n_states, dim)) + 1j * rng.normal(size=(n_states, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def planted_set(h, dt, rng, n_pairs=None):
    dim = h.shape[0]
    x = random_states(rng, n_pairs or dim * dim, dim)
    y = x @ expm(-1j * h * dt).T
    return TrainingSet(x, y)


def test_build_training_set_sizes(rng):
    frames = random_states(rng, 101, 2)
    assert len(build_training_set(frames, 1)) == 100
    with pytest.raises(InsufficientDataError):
        build_training_set(random_states(rng, 10, 2), 12)
    with pytest.raises(InsufficientDataError):
        TrainingSet(frames[:3], frames[1:4])


def test_turbulent_training_indices(rng):
    traj = random_states(rng, 512, 8)
    steps = np.arange(0, 253, 4)
    ts = build_training_set(traj, 4, starts=steps)
    assert len(ts) == 64
    assert np.array_equal(ts.targets[1], traj[8])


def test_params_round_trip(rng):
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = a + a.conj().T
    theta = matrix_to_params(h)
    assert theta.size == 16
    assert np.allclose(params_to_matrix(theta, 4), h, atol=1e-15)


def test_gradient_matches_finite_difference(rng):
    x = random_states(rng, 9, 3)
    y = random_states(rng, 9, 3)
    theta = rng.normal(size=9)
    _, g = loss_and_grad(theta, x, y, 0.3, np.array([1, 2, 1, 1, 2, 1, 1, 2, 1]))
    h = 1e-6
    fd = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        fd[i] = (loss_and_grad(theta + e, x, y, 0.3, np.array([1, 2, 1, 1, 2, 1, 1, 2, 1]))[0]
                 - loss_and_grad(theta - e, x, y, 0.3, np.array([1, 2, 1, 1, 2, 1, 1, 2, 1]))[0]) / (2 * h)
    assert np.max(np.abs(g - fd)) < 1e-7


def test_planted_2x2(rng):
    h_star = np.array([[0.3, 0.7], [0.7, -0.2]], dtype=complex)
    dt = 0.5
    ham = fit(planted_set(h_star, dt, rng), dt)
    assert np.linalg.norm(propagator(ham, 1) - expm(-1j * h_star * dt), 2) < 1e-8


def test_planted_from_zero_start(rng):
    h_star = np.array([[0.3, 0.7], [0.7, -0.2]], dtype=complex)
    dt = 0.5
    ham = fit(planted_set(h_star, dt, rng), dt, FitOptions(init="zero", max_iters=3000))
    assert np.linalg.norm(propagator(ham, 1) - expm(-1j * h_star * dt), 2) < 1e-8


def test_identity_data(rng):
    x = random_states(rng, 4, 2)
    ts = TrainingSet(x, x)
    assert training_loss(EffectiveHamiltonian(np.zeros((2, 2)), 0.1, 0.1), ts) == 0
    ham = fit(ts, 0.1)
    assert np.linalg.norm(propagator(ham, 1) - np.eye(2), 2) < 1e-8


def test_nonconvergence_carries_best(rng):
    ts = TrainingSet(random_states(rng, 4, 2), random_states(rng, 4, 2))
    with pytest.raises(NonConvergenceError) as info:
        fit(ts, 0.1, FitOptions(max_iters=5, tol=1e-14, raise_on_nonconvergence=True))
    assert isinstance(info.value.best, EffectiveHamiltonian)
    assert info.value.loss > 0


def test_more_data_does_not_raise_minimum(rng):
    h_star = np.diag([0.4, -0.1]).astype(complex)
    small = planted_set(h_star, 0.3, rng, 4)
    big = planted_set(h_star, 0.3, rng, 8)
    assert fit(big, 0.3).loss <= fit(small, 0.3).loss + 1e-12


def test_propagator_examples(rng):
    zero = EffectiveHamiltonian(np.zeros((3, 3)), 1.0, 1.0)
    assert np.allclose(propagator(zero, 1), np.eye(3), atol=0)
    hx = EffectiveHamiltonian(X, math.pi / 2, math.pi / 2)
    assert np.allclose(propagator(hx, 1), [[0, -1j], [-1j, 0]], atol=1e-15)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = EffectiveHamiltonian(a + a.conj().T, 0.2, 0.2)
    u1, u2 = propagator(h, 1), propagator(h, 2)
    assert np.max(np.abs(u2 - u1 @ u1)) < 1e-12
    assert np.max(np.abs(u1.conj().T @ u1 - np.eye(4))) < 1e-12
    assert np.max(np.abs(u1 - expm(-1j * h.matrix * 0.2))) < 1e-12
    with pytest.raises(ConfigError):
        propagator(h, 0)


def test_shift_by_period_is_global_phase(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    dt = 0.25
    h = EffectiveHamiltonian(a + a.conj().T, dt, dt)
    shifted = EffectiveHamiltonian(h.matrix + (2 * math.pi / dt) * np.eye(3), dt, dt)
    u, v = propagator(h, 1), propagator(shifted, 1)
    phase = np.vdot(u.ravel(), v.ravel()) / 3
    assert abs(abs(phase) - 1) < 1e-10
    assert np.max(np.abs(v - phase * u)) < 1e-10


def test_hermiticity_invariant():
    with pytest.raises(ConfigError):
        EffectiveHamiltonian(np.array([[0, 1], [0, 0]]), 1.0, 1.0)
    with pytest.raises(ConfigError):
        EffectiveHamiltonian(np.eye(2), 0.0, 1.0)


def test_json_round_trip(tmp_path, rng):
    h_star = np.array([[0.3, 0.7j], [-0.7j, -0.2]])
    ham = fit(planted_set(h_star, 0.5, rng), 0.5, dt_predict=1.0)
    p = tmp_path / "h.json"
    save_hamiltonian_json(ham, p)
    back = load_hamiltonian_json(p)
    assert np.array_equal(back.matrix, ham.matrix)
    assert back.dt_predict == 1.0 and back.loss == ham.loss


def test_leapfrog_loss_is_procrustes_optimum(leapfrog_pipeline):
    ts = leapfrog_pipeline["training"]
    x, y = ts.inputs, ts.targets
    # independent oracle: best unitary from the polar factor of Y^T X^*
    u, _, vh = np.linalg.svd(y.T @ x.conj())
    best = np.sum(np.abs(y.T - (u @ vh) @ x.T) ** 2)
    loss = leapfrog_pipeline["model"].loss
    assert len(ts) == 100
    assert loss == pytest.approx(best, rel=1e-8)
    assert loss / len(ts) < 1e-3
