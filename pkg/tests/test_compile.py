import numpy as np
import pytest
from scipy.stats import unitary_group

from qvortex.compile import (
    controlled_single_qubit_ops,
    controlled_two_qubit_ops,
    count_cz,
    kak,
    kak_matrix,
    lower_spacetime,
    merge_single_qubit_runs,
    single_qubit_ops,
    state_prep_ops,
)
from qvortex.errors import DimensionError
from qvortex.spacetime import build_plan, run
from qvortex.statevector import StateVector, circuit_unitary, controlled, dense, run_circuit

CZ = np.diag([1, 1, 1, -1]).astype(complex)


def equal_up_to_phase(a, b, tol):
    k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    phase = a[k] / b[k]
    return abs(abs(phase) - 1) < tol and np.max(np.abs(a - phase * b)) < tol


def test_single_qubit_sequence():
    for seed in range(5):
        u = unitary_group.rvs(2, random_state=seed)
        assert equal_up_to_phase(circuit_unitary(single_qubit_ops(u, 0), 1), u, 1e-12)
    assert single_qubit_ops(np.eye(2), 0) == []


@pytest.mark.parametrize("seed", range(4))
def test_kak_reconstruction(seed):
    u = unitary_group.rvs(4, random_state=seed)
    assert np.max(np.abs(kak_matrix(kak(u)) - u)) < 1e-12


@pytest.mark.parametrize("u", [np.eye(4), CZ, np.kron(unitary_group.rvs(2, random_state=1),
                                                     unitary_group.rvs(2, random_state=2))])
def test_kak_degenerate_inputs(u):
    assert np.max(np.abs(kak_matrix(kak(u)) - u)) < 1e-12


def test_controlled_single_qubit_exact():
    for seed in range(4):
        u = unitary_group.rvs(2, random_state=seed)
        ops = controlled_single_qubit_ops(u, 1, 0)
        want = circuit_unitary([controlled(dense(u, (0,)), [1])], 2)
        assert np.max(np.abs(circuit_unitary(ops, 2) - want)) < 1e-12
        assert count_cz(ops) == 2


@pytest.mark.parametrize("seed", range(4))
def test_controlled_two_qubit_exact(seed):
    u = unitary_group.rvs(4, random_state=seed)
    ops = controlled_two_qubit_ops(u, 2, 0, 1)
    want = circuit_unitary([controlled(dense(u, (0, 1)), [2])], 3)
    assert np.max(np.abs(circuit_unitary(ops, 3) - want)) < 1e-12
    assert count_cz(ops) <= 16


def test_state_prep(rng):
    for n in (1, 2):
        psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
        psi /= np.linalg.norm(psi)
        out = run_circuit(StateVector.zero(n), state_prep_ops(psi, tuple(range(n)))).amplitudes
        assert abs(abs(np.vdot(psi, out)) - 1) < 1e-12
    with pytest.raises(DimensionError):
        state_prep_ops(np.ones(8) / np.sqrt(8), (0, 1, 2))


def test_lowered_spacetime_circuit(rng):
    f = unitary_group.rvs(4, random_state=5)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    plan = build_plan(2, psi / np.linalg.norm(psi), f)
    ops = lower_spacetime(plan)
    assert all(op.is_cz or (len(op.support) == 1) for op in ops)
    ideal = run(plan).state.amplitudes
    got = run_circuit(StateVector.zero(plan.n_qubits), ops).amplitudes
    assert abs(abs(np.vdot(ideal, got)) - 1) < 1e-12
    merged = merge_single_qubit_runs(ops)
    assert count_cz(merged) == count_cz(ops)
    assert len(merged) < len(ops)
    got = run_circuit(StateVector.zero(plan.n_qubits), merged).amplitudes
    assert abs(abs(np.vdot(ideal, got)) - 1) < 1e-12


def test_lowering_limits():
    plan = build_plan(1, np.eye(8)[0], np.eye(8))
    with pytest.raises(DimensionError):
        lower_spacetime(plan)
