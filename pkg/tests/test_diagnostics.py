import numpy as np
import pytest

from bbgky_bose import diagnostics, dimer, symspace
from bbgky_bose.diagnostics import Trajectory, TrajectoryRecord
from conftest import random_density, random_state


class TestImbalance:
    def test_condensate(self):
        assert abs(diagnostics.imbalance(
            dimer.exact_rdm(dimer.all_left(5), 1).matrix) - 1.0) < 1e-14

    def test_noon(self):
        assert abs(diagnostics.imbalance(dimer.exact_rdm(dimer.noon(5), 1).matrix)) < 1e-12

    def test_consistent_with_pair_rdm(self, rng):
        psi = random_state(rng, 6)
        rho2 = dimer.exact_rdm(psi, 2).matrix
        via_pair = diagnostics.imbalance(symspace.partial_trace_matrix(rho2, 2, 2, 1))
        direct = diagnostics.imbalance(dimer.exact_rdm(psi, 1).matrix)
        assert abs(via_pair - direct) < 1e-12

    def test_out_of_range_reported_unclamped(self):
        rho1 = np.array([[1.3, 0.0], [0.0, -0.3]])
        assert abs(diagnostics.imbalance(rho1) - 1.6) < 1e-14

    def test_needs_two_modes(self):
        with pytest.raises(ValueError):
            diagnostics.imbalance(np.eye(3) / 3)


class TestNaturalPopulations:
    def test_condensate_all_orders(self):
        for o in [1, 2, 4]:
            nps = diagnostics.natural_populations(
                dimer.exact_rdm(dimer.all_left(6), o).matrix)
            assert abs(nps[0] - 1.0) < 1e-12
            assert np.max(np.abs(nps[1:])) < 1e-12

    def test_noon_two_half_populations(self):
        for o in [1, 2, 3]:
            nps = diagnostics.natural_populations(
                dimer.exact_rdm(dimer.noon(8), o).matrix)
            assert np.max(np.abs(nps[:2] - 0.5)) < 1e-12
            if o > 1:
                assert np.max(np.abs(nps[2:])) < 1e-12

    def test_descending_and_normalized(self, rng):
        nps = diagnostics.natural_populations(random_density(rng, 5))
        assert np.all(np.diff(nps) <= 1e-14)
        assert abs(nps.sum() - 1.0) < 1e-10


class TestTraceDistance:
    def test_identical(self, rng):
        rho = random_density(rng, 4)
        assert diagnostics.trace_distance(rho, rho) == 0.0

    def test_orthogonal_pure_states(self):
        a = np.zeros((3, 3)); a[0, 0] = 1.0
        b = np.zeros((3, 3)); b[2, 2] = 1.0
        assert abs(diagnostics.trace_distance(a, b) - 1.0) < 1e-14

    def test_metric_axioms(self, rng):
        for _ in range(20):
            A, B, C = (random_density(rng, 4) for _ in range(3))
            dab = diagnostics.trace_distance(A, B)
            assert abs(dab - diagnostics.trace_distance(B, A)) < 1e-12
            assert dab <= (diagnostics.trace_distance(A, C)
                           + diagnostics.trace_distance(C, B) + 1e-12)
            assert 0.0 <= dab <= 1.0 + 1e-12

    def test_observable_deviation_bound(self, rng):
        from conftest import random_hermitian
        A_rho = random_density(rng, 4)
        B_rho = random_density(rng, 4)
        for _ in range(100):
            obs = random_hermitian(rng, 4)
            assert diagnostics.observable_bound_holds(obs, A_rho, B_rho)

    def test_sharp_form_saturated_by_sign_observable(self, rng):
        # the sign of the difference extracts the full trace-class norm:
        # tr(sign(D) D) = ||D||_1 = 2 distance
        A_rho = random_density(rng, 4)
        B_rho = random_density(rng, 4)
        delta = A_rho - B_rho
        vals, vecs = np.linalg.eigh(delta)
        sign_obs = (vecs * np.sign(vals)) @ vecs.conj().T
        lhs = abs(np.trace(sign_obs @ delta))
        assert abs(lhs - 2 * diagnostics.trace_distance(A_rho, B_rho)) < 1e-10
        assert diagnostics.observable_bound_holds(sign_obs, A_rho, B_rho)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            diagnostics.trace_distance(np.eye(2), np.eye(3))


def synthetic_trajectory(np_series):
    traj = Trajectory(m=2, N=4, obar=2)
    for t, lowest in np_series:
        traj.records.append(TrajectoryRecord(
            t=t, rho={}, nps={2: np.array([0.8, 0.2 - lowest, lowest])},
            k_eigs=None, imbalance=0.0, energy=0.0, trace=1.0, steps=0))
    return traj


class TestTNeg:
    def test_exact_reference_never_negative(self, rng):
        p = dimer.DimerParams.from_lambda(6, 0.1)
        evo = dimer.DimerEvolution(p)
        traj = Trajectory(m=2, N=6, obar=None)
        for t in np.arange(0.0, 10.0, 0.5):
            psi = evo.evolve(dimer.all_left(6), float(t))
            nps = {o: diagnostics.natural_populations(dimer.exact_rdm(psi, o).matrix)
                   for o in (1, 2)}
            traj.records.append(TrajectoryRecord(
                t=float(t), rho={}, nps=nps, k_eigs=None,
                imbalance=0.0, energy=0.0, trace=1.0, steps=0))
        for o in (1, 2):
            assert diagnostics.t_neg(traj, o) is None

    def test_first_crossing_reported(self):
        traj = synthetic_trajectory([(0.0, 1e-12), (0.5, -5e-11), (1.0, -1e-9), (1.5, -1e-8)])
        assert diagnostics.t_neg(traj, 2, epsilon=-1e-10) == 1.0

    def test_threshold_respected(self):
        traj = synthetic_trajectory([(0.0, -5e-11), (0.5, -9e-11)])
        assert diagnostics.t_neg(traj, 2, epsilon=-1e-10) is None
        assert diagnostics.t_neg(traj, 2, epsilon=-4e-11) == 0.0
