import math

import numpy as np
import pytest

from qvortex import experiments as ex
from qvortex.config import build_config
from qvortex.errors import ConfigError, DimensionError
from qvortex.hamiltonian import TrainingSet
from qvortex.spacetime import householder_prep
from qvortex.vortex import write_trajectory_csv
from qvortex.vqa import (
    Ansatz,
    TrainOptions,
    ansatz_from_descriptor,
    cost_direct,
    cost_hadamard,
    gradient_parameter_shift,
    load_train_log,
    save_train_log,
    total_cost,
    train,
)
from qvortex.statevector import circuit_unitary


def unit(rng, dim):
    a = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return a / np.linalg.norm(a)


def test_gates_match_unitary(rng):
    a = Ansatz(3, 2)
    theta = rng.uniform(-np.pi, np.pi, a.n_params)
    assert np.max(np.abs(circuit_unitary(a.gates(theta), 3) - a.unitary(theta))) < 1e-12


def test_cost_examples(rng):
    a = Ansatz(2, 1)
    theta = rng.normal(size=a.n_params)
    x = unit(rng, 4)
    y = a.unitary(theta) @ x
    rep = cost_direct(a, theta, (x, y))
    assert rep.value == pytest.approx(0, abs=1e-24) and rep.z_expectation == pytest.approx(1)
    ident = Ansatz(2, 0)
    zero = np.zeros(ident.n_params)
    rep = cost_direct(ident, zero, (np.eye(4)[0], np.eye(4)[2]))
    assert rep.value == pytest.approx(2) and rep.z_expectation == pytest.approx(0, abs=1e-16)


def test_cost_identity_random(rng):
    for k in (1, 2, 3):
        a = Ansatz(2, 2)
        theta = rng.normal(size=a.n_params)
        rep = cost_direct(a, theta, (unit(rng, 4), unit(rng, 4)), k)
        assert abs(rep.value - (2 - 2 * rep.z_expectation)) < 1e-12
        assert rep.value >= 0


def test_cost_hadamard_examples(rng):
    a = Ansatz(2, 1)
    theta = rng.normal(size=a.n_params)
    x = unit(rng, 4)
    f = a.unitary(theta)
    prep_i = householder_prep(x)
    rep = cost_hadamard(a, theta, prep_i, f @ prep_i)
    assert rep.z_expectation == pytest.approx(1, abs=1e-12) and rep.value == pytest.approx(0, abs=1e-11)
    ident = Ansatz(2, 0)
    rep = cost_hadamard(ident, np.zeros(ident.n_params), householder_prep(np.eye(4)[0]),
                        householder_prep(np.eye(4)[3]))
    assert rep.z_expectation == pytest.approx(0, abs=1e-12)


def test_shift_zero_at_planted_minimum():
    a = Ansatz(1, 0, ("X",))
    star = np.array([0.83])
    x = np.array([1.0, 0.0])
    y = a.unitary(star) @ x
    assert abs(gradient_parameter_shift(a, star, (x, y))[0]) < 1e-14


def test_shift_constant_landscape():
    a = Ansatz(1, 0, ("Z",))
    theta = np.array([0.4])
    # Rz only rephases |0>, which stays orthogonal to |1>: C = 2 for all theta
    g = gradient_parameter_shift(a, theta, (np.eye(2)[0], np.eye(2)[1]))
    assert abs(g[0]) < 1e-15


def test_shift_matches_finite_difference_with_powers(rng):
    a = Ansatz(2, 1)
    theta = rng.normal(size=a.n_params)
    pair = (unit(rng, 4), unit(rng, 4))
    h = 1e-5
    for k in (1, 2, 3):
        g = gradient_parameter_shift(a, theta, pair, k)
        fd = np.array([(cost_direct(a, theta + h * e, pair, k).value
                        - cost_direct(a, theta - h * e, pair, k).value) / (2 * h)
                       for e in np.eye(a.n_params)])
        assert np.max(np.abs(g - fd)) < 1e-6


def test_shift_via_hadamard_circuit(rng):
    a = Ansatz(2, 1)
    theta = rng.normal(size=a.n_params)
    pair = (unit(rng, 4), unit(rng, 4))
    direct = gradient_parameter_shift(a, theta, pair)
    circ = gradient_parameter_shift(a, theta, pair, use_hadamard=True)
    assert np.max(np.abs(direct - circ)) < 1e-10


def test_planted_training(rng):
    a = Ansatz(2, 1)
    star = rng.uniform(-1, 1, a.n_params)
    x = np.array([unit(rng, 4) for _ in range(16)])
    y = x @ a.unitary(star).T
    ts = TrainingSet(x, y)
    res = train(a, ts, TrainOptions(max_iters=300, seed=3, polish=True), theta0=star + 0.05)
    assert res.loss < 1e-8


def test_zero_budget_returns_initial(rng):
    a = Ansatz(1, 1)
    ts = TrainingSet(np.array([unit(rng, 2) for _ in range(4)]),
                     np.array([unit(rng, 2) for _ in range(4)]))
    res = train(a, ts, TrainOptions(max_iters=0, seed=4))
    assert np.array_equal(res.theta, a.init_params(4))
    assert res.history == [total_cost(a, res.theta, ts)]


def test_viscous_linesearch_monotone(tmp_path):
    csv = tmp_path / "visc.csv"
    write_trajectory_csv(ex.synthetic_viscous_pair(16, 0.1), csv)
    cfg = build_config("viscous-import", {"truth_csv": str(csv), "vqa_optimizer": "linesearch",
                                          "vqa_iters": 60})
    enc = ex.encode_truth(cfg, ex.ground_truth(cfg))
    assert len(ex.training_frames(cfg, enc)) == 4
    model = ex.fit_model(cfg, enc)
    hist = np.array(model.vqa.history)
    assert np.all(np.diff(hist) <= 0)
    assert hist[-1] < hist[0]


def test_errors(rng):
    a = Ansatz(1, 1)
    with pytest.raises(DimensionError):
        a.unitary(np.zeros(3))
    with pytest.raises(DimensionError):
        cost_direct(a, np.zeros(a.n_params), (unit(rng, 4), unit(rng, 4)))
    with pytest.raises(ConfigError):
        cost_direct(a, np.zeros(a.n_params), (unit(rng, 2), unit(rng, 2)), 0)


def test_log_round_trip(tmp_path, rng):
    a = Ansatz(2, 1)
    ts = TrainingSet(np.array([unit(rng, 4) for _ in range(16)]),
                     np.array([unit(rng, 4) for _ in range(16)]))
    res = train(a, ts, TrainOptions(max_iters=3, snapshot_every=1, seed=9))
    p = tmp_path / "log.json"
    save_train_log(res, p)
    doc = load_train_log(p)
    assert doc["seed"] == 9 and len(doc["loss"]) == len(res.history)
    assert ansatz_from_descriptor(doc["ansatz"]) == a
    assert math.isclose(total_cost(a, np.array(doc["theta"]), ts), min(res.history), rel_tol=1e-12)
