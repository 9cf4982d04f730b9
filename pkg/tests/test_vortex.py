import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from qvortex.errors import ConfigError, DataError, SingularityError
from qvortex.vortex import (
    Trajectory,
    VortexSystem,
    from_xy,
    hamiltonian_hp,
    induced_velocity,
    integrate,
    linear_impulse,
    read_trajectory_csv,
    velocities,
    write_trajectory_csv,
)

TWO_PI = 2 * math.pi


def biot_savart_xy(xs, ys, gs, px, py, skip):
    """Real-arithmetic Biot-Savart sum used as an independent oracle."""
    u = v = 0.0
    for k, (x, y, g) in enumerate(zip(xs, ys, gs)):
        if k == skip:
            continue
        dx, dy = px - x, py - y
        r2 = dx * dx + dy * dy
        u += -g * dy / (TWO_PI * r2)
        v += g * dx / (TWO_PI * r2)
    return u, v


def test_single_vortex_velocity():
    s = VortexSystem([0j], [TWO_PI])
    assert induced_velocity(s, 1 + 0j) == pytest.approx(1j, abs=1e-15)


def test_dipole_self_velocity():
    s = VortexSystem([0.5j, -0.5j], [TWO_PI, -TWO_PI])
    assert induced_velocity(s, s.positions[0], exclude=0) == pytest.approx(1 + 0j, abs=1e-15)


def test_leapfrog_velocity_matches_hand_sum(leapfrog_system):
    s = leapfrog_system
    xs, ys = s.positions.real, s.positions.imag
    for j in range(4):
        u, v = biot_savart_xy(xs, ys, s.strengths, xs[j], ys[j], j)
        got = induced_velocity(s, s.positions[j], exclude=j)
        assert abs(got - complex(u, v)) < 1e-14
    vel = velocities(s.positions, s.strengths)
    for j in range(4):
        assert vel[j] == pytest.approx(induced_velocity(s, s.positions[j], exclude=j), abs=1e-15)


def test_singularity_guard():
    s = VortexSystem([0j], [1.0])
    with pytest.raises(SingularityError):
        induced_velocity(s, 1e-9 + 0j)
    with pytest.raises(SingularityError):
        VortexSystem([0j, 1e-9 + 0j], [1.0, 1.0])


def test_system_validation():
    with pytest.raises(ConfigError):
        VortexSystem([], [])
    with pytest.raises(ConfigError):
        VortexSystem([0j, 1j], [1.0])


def test_hp_examples(leapfrog_system):
    assert hamiltonian_hp(VortexSystem([0j, 1 + 0j], [1, 1])) == pytest.approx(0.0, abs=1e-15)
    assert hamiltonian_hp(VortexSystem([0j, complex(math.e)], [1, 1])) == pytest.approx(1 / math.pi)
    s = leapfrog_system
    total = 0.0
    for j in range(4):
        for k in range(4):
            if j != k:
                dx = s.positions[j].real - s.positions[k].real
                dy = s.positions[j].imag - s.positions[k].imag
                total += s.strengths[j] * s.strengths[k] * math.log(dx * dx + dy * dy)
    assert hamiltonian_hp(s) == pytest.approx(total / (4 * math.pi), rel=1e-14)


def test_corotating_pair_returns():
    s = VortexSystem([1 + 0j, -1 + 0j], [TWO_PI, TWO_PI])
    n = 4000
    tr = integrate(s, 4 * math.pi / n, n)
    assert np.max(np.abs(tr.positions[-1] - s.positions)) < 1e-6


def test_dipole_translates():
    s = VortexSystem([0.5j, -0.5j], [TWO_PI, -TWO_PI])
    tr = integrate(s, 0.01, 300)
    assert np.max(np.abs(tr.positions[-1] - (s.positions + 3.0))) < 1e-8


def test_frame_zero_is_input(leapfrog_system):
    tr = integrate(leapfrog_system, 0.01, 5)
    assert len(tr) == 6
    assert np.array_equal(tr.positions[0], leapfrog_system.positions)


def test_integrate_rejects_bad_dt(leapfrog_system):
    with pytest.raises(ConfigError):
        integrate(leapfrog_system, 0.0, 10)


def test_collision_reports_step():
    # two dipoles meet head on; partner exchange brings vortices within 0.98
    s = VortexSystem([0.5j, -0.5j, 4 + 0.5j, 4 - 0.5j], [TWO_PI, -TWO_PI, -TWO_PI, TWO_PI],
                     min_separation=0.99)
    with pytest.raises(SingularityError) as info:
        integrate(s, 0.01, 600)
    assert info.value.step is not None and info.value.step > 0


def test_invariants_long_run(leapfrog_system):
    tr = integrate(leapfrog_system, 0.01, 10_000)
    p0 = linear_impulse(leapfrog_system)
    h0 = hamiltonian_hp(leapfrog_system)
    last = tr.frame(len(tr) - 1)
    # impulse of the leapfrog system is purely imaginary and non-zero
    assert abs(linear_impulse(last) - p0) / abs(p0) < 1e-6
    assert abs(hamiltonian_hp(last) - h0) / abs(h0) < 1e-6


def test_rk4_fourth_order(leapfrog_system):
    def end(dt):
        n = int(round(1.0 / dt))
        return integrate(leapfrog_system, dt, n).positions[-1]

    ref = end(0.1 / 100)
    e1 = np.max(np.abs(end(0.1) - ref))
    e2 = np.max(np.abs(end(0.05) - ref))
    assert 12 < e1 / e2 < 20


def test_leapfrog_recurs_within_window(leapfrog_system):
    tr = integrate(leapfrog_system, 0.01, 1800)
    rel = tr.positions - tr.positions.mean(axis=1, keepdims=True)
    dist = np.sum(np.abs(rel - rel[0]), axis=1)
    later = tr.times > 5
    i = int(np.argmin(np.where(later, dist, np.inf)))
    assert 15 < tr.times[i] < 18
    assert dist[i] < 0.01


def test_trajectory_validation():
    with pytest.raises(DataError):
        Trajectory([0.0, 0.1, 0.3], np.zeros((3, 1)) + 1j, [1.0])
    with pytest.raises(DataError):
        Trajectory([0.0, 0.1], np.zeros((3, 1)), [1.0])


def test_csv_round_trip(tmp_path, leapfrog_system):
    tr = integrate(leapfrog_system, 0.01, 20)
    path = tmp_path / "t.csv"
    write_trajectory_csv(tr, path)
    assert path.read_text().splitlines()[0] == "t,j,x,y,gamma"
    back = read_trajectory_csv(path)
    assert np.array_equal(back.positions, tr.positions)
    assert np.array_equal(back.times, tr.times)


def test_csv_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        read_trajectory_csv(p)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2)),
                min_size=2, max_size=6))
def test_velocity_sum_matches_oracle(vortices):
    xy = [(x, y) for x, y, _ in vortices]
    gs = [g for *_, g in vortices]
    arr = np.array(xy)
    d = np.abs((arr[:, None, 0] - arr[None, :, 0]) + 1j * (arr[:, None, 1] - arr[None, :, 1]))
    np.fill_diagonal(d, np.inf)
    assume(d.min() > 1e-2)
    s = from_xy(xy, gs)
    vel = velocities(s.positions, s.strengths)
    for j in range(s.n):
        u, v = biot_savart_xy(arr[:, 0], arr[:, 1], gs, arr[j, 0], arr[j, 1], j)
        assert abs(vel[j] - complex(u, v)) <= 1e-9 * (1 + abs(complex(u, v)))
    # antisymmetric pair interaction: total impulse rate vanishes
    assert abs(np.sum(s.strengths * vel)) < 1e-9 * (1 + np.sum(np.abs(s.strengths * vel)))
