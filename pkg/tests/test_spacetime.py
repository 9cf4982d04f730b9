import numpy as np
import pytest
from scipy.stats import unitary_group

from qvortex.encoding import WaveState
from qvortex.errors import BlockWeightError, DimensionError, NonUnitaryError
from qvortex.hamiltonian import propagator
from qvortex.spacetime import (
    SpacetimeState,
    block_operator,
    build_plan,
    extract_all,
    extract_block,
    householder_prep,
    load_plan_json,
    run,
    save_plan_json,
)
from qvortex.statevector import StateVector, circuit_unitary, run_circuit

X = np.array([[0, 1], [1, 0]], dtype=complex)


def random_psi(rng, dim):
    a = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return a / np.linalg.norm(a)


def test_trivial_plan():
    plan = build_plan(1, np.array([1.0, 0.0]), X)
    assert np.array_equal(plan.f_k[0], X)
    st = run(plan)
    want = np.zeros(4)
    want[0] = want[3] = 2**-0.5
    assert np.allclose(st.state.amplitudes, want, atol=1e-15)


def test_ladder_powers():
    f = unitary_group.rvs(4, random_state=7)
    plan = build_plan(3, np.eye(4)[0], f)
    assert np.max(np.abs(plan.f_k[2] - plan.f_k[1] @ plan.f_k[1])) < 1e-10
    assert np.max(np.abs(plan.f_k[2] - np.linalg.matrix_power(f, 4))) < 1e-10


def test_prep_first_column(rng):
    for dim in (2, 4, 8):
        psi = random_psi(rng, dim)
        u = householder_prep(psi)
        assert np.max(np.abs(u[:, 0] - psi)) < 1e-14
        assert np.max(np.abs(u.conj().T @ u - np.eye(dim))) < 1e-13


def test_identity_step(rng):
    psi = random_psi(rng, 4)
    st = run(build_plan(3, psi, np.eye(4)))
    want = np.kron(np.ones(8) / np.sqrt(8), psi)
    assert np.max(np.abs(st.state.amplitudes - want)) < 1e-14
    blocks, weights = extract_all(st)
    assert all(np.allclose(b.amplitudes, psi, atol=1e-14) for b in blocks)


def test_blocks_are_matrix_powers(rng):
    f = unitary_group.rvs(4, random_state=8)
    psi = random_psi(rng, 4)
    st = run(build_plan(3, psi, f))
    for i in range(8):
        want = np.linalg.matrix_power(f, i) @ psi / np.sqrt(8)
        assert np.max(np.abs(st.blocks[i] - want)) < 1e-10
    b0, w0 = extract_block(st, 0)
    assert np.max(np.abs(b0.amplitudes - psi)) < 1e-14 and abs(w0 - 1 / 8) < 1e-12


def test_padding_three_vortices(rng):
    psi = random_psi(rng, 3)
    f = unitary_group.rvs(3, random_state=9)
    plan = build_plan(2, WaveState(psi), f)
    assert plan.n_p == 2 and plan.n_vortices == 3
    blocks, _ = extract_all(run(plan))
    for i, b in enumerate(blocks):
        assert len(b) == 3
        assert np.max(np.abs(b.amplitudes - np.linalg.matrix_power(f, i) @ psi)) < 1e-12


def test_factorization_and_commuting_order(rng):
    for n_p in (1, 2):
        for n_t in (1, 2, 3):
            f = unitary_group.rvs(2**n_p, random_state=10 * n_p + n_t)
            plan = build_plan(n_t, random_psi(rng, 2**n_p), f)
            ops = plan.circuit()
            ladder = ops[1 + n_t:]
            # temporal Hadamards are excluded: compare just the controlled ladder
            n = plan.n_qubits
            u = circuit_unitary(ladder, n)
            assert np.max(np.abs(u - block_operator(plan))) < 1e-10
            start = run_circuit(StateVector.zero(n), ops[: 1 + n_t])
            a = run_circuit(start, ladder).amplitudes
            b = run_circuit(start, ladder[::-1]).amplitudes
            assert np.max(np.abs(a - b)) < 1e-10


def test_controlled_application_count(rng):
    for n_t in range(1, 7):
        st = run(build_plan(n_t, random_psi(rng, 2), unitary_group.rvs(2, random_state=n_t)))
        assert st.controlled_applications == n_t


def test_block_weight_error():
    amps = np.zeros(8, complex)
    amps[0] = 1.0
    st = SpacetimeState(StateVector(amps, 3), 1, 2, 2)
    with pytest.raises(BlockWeightError):
        extract_block(st, 0)
    with pytest.raises(IndexError):
        extract_block(st, 4)


def test_plan_errors(rng):
    with pytest.raises(NonUnitaryError):
        build_plan(2, np.eye(2)[0], np.array([[1, 1], [0, 1]]))
    with pytest.raises(DimensionError):
        build_plan(2, np.eye(4)[0], np.eye(2))


def test_leapfrog_block_17(leapfrog_pipeline):
    lp = leapfrog_pipeline
    plan = lp["plan"]
    assert (plan.n_p, plan.n_t, plan.n_steps) == (2, 6, 64)
    h = lp["model"].hamiltonian
    want = propagator(h, 17) @ lp["psi"].amplitudes
    assert np.max(np.abs(lp["blocks"][17].amplitudes - want)) < 1e-8
    assert np.max(np.abs(lp["weights"] - 1 / 64)) < 1e-9


def test_plan_json_round_trip(tmp_path, rng):
    f = unitary_group.rvs(4, random_state=11)
    plan = build_plan(2, random_psi(rng, 4), f)
    p = tmp_path / "plan.json"
    save_plan_json(plan, p)
    back = load_plan_json(p)
    assert back.n_t == 2 and np.allclose(back.step_unitary, f, atol=1e-15)
    assert np.allclose(run(back).state.amplitudes, run(plan).state.amplitudes, atol=1e-14)
