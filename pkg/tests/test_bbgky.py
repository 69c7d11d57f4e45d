import numpy as np
import pytest

from bbgky_bose import bbgky, dimer, symspace
from conftest import random_density, random_state


@pytest.fixture(scope="module")
def model6():
    p = dimer.DimerParams.from_lambda(6, 0.1)
    return p, dimer.DimerEvolution(p)


class TestModelOperators:
    def test_dimer_matrices(self):
        p = dimer.DimerParams(N=5, J=2.0, U=0.4)
        ops = bbgky.ModelOperators.dimer(p, obar=2)
        assert np.allclose(ops.h, [[0, -2], [-2, 0]])
        assert np.allclose(np.diag(ops.W), [0.4, 0, 0, 0.4])

    def test_interaction_second_quantized(self):
        # <n|W_full|n> = U/2 sum_s n_s (n_s - 1) on every sector
        p = dimer.DimerParams(N=6, J=1.0, U=0.7)
        ops = bbgky.ModelOperators.dimer(p, obar=3)
        for o in [2, 3, 4]:
            H = bbgky.h_full_matrix(0 * ops.h, ops.W, 2, o)
            for j, occ in enumerate(symspace.sym_basis(2, o).states):
                ref = 0.35 * sum(n * (n - 1) for n in occ)
                assert abs(H[j, j] - ref) < 1e-12
            assert np.max(np.abs(H - np.diag(np.diag(H)))) < 1e-12

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            bbgky.ModelOperators(h=np.array([[0, 1j], [1j, 0]]),
                                 W=np.zeros((4, 4)), N=4, obar=2)


class TestHFull:
    def test_order_one_is_h(self):
        p = dimer.DimerParams.from_lambda(4, 0.3)
        ops = bbgky.ModelOperators.dimer(p, obar=2)
        assert np.allclose(bbgky.h_full(ops, 1).matrix, ops.h)

    def test_pair_interaction_element(self):
        p = dimer.DimerParams(N=4, J=0.0 + 1e-12, U=0.9)  # J must stay positive
        p = dimer.DimerParams(N=4, J=1e-9, U=0.9)
        ops = bbgky.ModelOperators.dimer(p, obar=2)
        H2 = bbgky.h_full(ops, 2).matrix
        basis = symspace.sym_basis(2, 2)
        i = basis.index((2, 0))
        assert abs(H2[i, i] - 0.9) < 1e-9

    @pytest.mark.parametrize("N", [2, 5, 10])
    def test_full_sector_matches_reference_hamiltonian(self, N):
        p = dimer.DimerParams.from_lambda(N, 0.37) if N > 1 else None
        assert bbgky.dimer_hamiltonian_equivalence(p) < 1e-10

    def test_hermitian(self):
        p = dimer.DimerParams.from_lambda(7, 0.5)
        ops = bbgky.ModelOperators.dimer(p, obar=3)
        for o in [1, 2, 4]:
            H = bbgky.h_full(ops, o).matrix
            assert np.max(np.abs(H - H.conj().T)) < 1e-12


class TestRhs:
    def test_free_evolution_keeps_condensate(self):
        p = dimer.DimerParams(N=6, J=1.0, U=0.0)
        ops = bbgky.ModelOperators.dimer(p, obar=2)
        rho = dimer.exact_rdm(dimer.all_left(6), 2).matrix
        got = bbgky.rhs_matrix(rho, ops)
        H = bbgky.h_full(ops, 2).matrix
        assert np.max(np.abs(got + 1j * (H @ rho - rho @ H))) < 1e-14

    def test_traceless_and_hermitian(self, rng):
        p = dimer.DimerParams.from_lambda(8, 0.2)
        ops = bbgky.ModelOperators.dimer(p, obar=3)
        rho = random_density(rng, 4)
        R = bbgky.rhs_matrix(rho, ops)
        assert abs(np.trace(R)) < 1e-12
        assert np.max(np.abs(R - R.conj().T)) < 1e-12

    def test_order_validation(self, rng):
        p = dimer.DimerParams.from_lambda(5, 0.2)
        ops = bbgky.ModelOperators.dimer(p, obar=2)
        wrong = bbgky.rdm(2, 3, random_density(rng, 4))
        with pytest.raises(ValueError):
            bbgky.rhs(wrong, ops)

    @pytest.mark.parametrize("obar", [2, 3, 4])
    def test_derivative_oracle(self, model6, obar):
        # untruncated collision term (exact rho_{obar+1}) against the central
        # finite difference of the exact trajectory
        p, evo = model6
        ops = bbgky.ModelOperators.dimer(p, obar=obar)
        psi0 = dimer.all_left(6)
        delta = 1e-4
        for t in [1.3, 18.7]:
            rho = dimer.exact_rdm(evo.evolve(psi0, t), obar)
            top = dimer.exact_rdm(evo.evolve(psi0, t), obar + 1)
            got = bbgky.rhs(rho, ops, rho_top=bbgky.rdm_from_operator(top))
            plus = dimer.exact_rdm(evo.evolve(psi0, t + delta), obar).matrix
            minus = dimer.exact_rdm(evo.evolve(psi0, t - delta), obar).matrix
            assert np.max(np.abs(got - (plus - minus) / (2 * delta))) < 1e-5

    @pytest.mark.parametrize("o", [2, 3])
    def test_collision_sum_matches_ordered_space(self, rng, o):
        # occupation-basis collision term against the brute-force definition:
        # sum_k Tr_last [ W^(k, o+1), rho_{o+1} ] built element by element
        import itertools

        p = dimer.DimerParams.from_lambda(5, 0.4)
        ops = bbgky.ModelOperators.dimer(p, obar=o)
        rho_top = random_density(rng, symspace.dimension(2, o + 1))
        got = bbgky.collision_term(rho_top, ops, o)

        big = symspace.embed_ordered(symspace.sym_operator(2, o + 1, rho_top))
        W2 = np.asarray(ops.W)
        idx = list(itertools.product(range(2), repeat=o + 1))
        pos = {t: i for i, t in enumerate(idx)}
        out = np.zeros((2**o, 2**o), dtype=complex)
        for k in range(o):
            Wk = np.zeros((2 ** (o + 1), 2 ** (o + 1)), dtype=complex)
            for a in idx:
                for b in idx:
                    if all(a[q] == b[q] for q in range(o + 1) if q not in (k, o)):
                        Wk[pos[a], pos[b]] = W2[a[k] * 2 + a[o], b[k] * 2 + b[o]]
            comm = Wk @ big - big @ Wk
            out += np.einsum("iaja->ij", comm.reshape(2**o, 2, 2**o, 2))
        U = symspace._embedding_matrix(2, o)
        assert np.max(np.abs(got - U.T @ out @ U)) < 1e-11


class TestEnergy:
    def test_condensate(self):
        p = dimer.DimerParams(N=9, J=1.0, U=0.31)
        ops = bbgky.ModelOperators.dimer(p, obar=3)
        rho = dimer.exact_rdm(dimer.all_left(9), 3)
        assert abs(bbgky.energy(bbgky.rdm_from_operator(rho), ops)
                   - 0.31 * 9 * 8 / 2) < 1e-10

    def test_matches_wavefunction_energy(self, rng):
        p = dimer.DimerParams.from_lambda(7, 0.4)
        evo = dimer.DimerEvolution(p)
        ops = bbgky.ModelOperators.dimer(p, obar=3)
        psi = random_state(rng, 7)
        rho = dimer.exact_rdm(psi, 3)
        assert abs(bbgky.energy(bbgky.rdm_from_operator(rho), ops)
                   - evo.energy(psi)) < 1e-10

    def test_conserved_direction(self, model6):
        # dE/dt vanishes along the truncated flow with the compatible closure
        p, evo = model6
        ops = bbgky.ModelOperators.dimer(p, obar=3)
        rho = dimer.exact_rdm(evo.evolve(dimer.all_left(6), 30.0), 3).matrix
        R = bbgky.rhs_matrix(rho, ops)
        eps = 1e-6
        dE = (bbgky.energy_matrix(rho + eps * R, ops, 3)
              - bbgky.energy_matrix(rho - eps * R, ops, 3)) / (2 * eps)
        assert abs(dE) < 1e-9


class TestPacking:
    def test_round_trip(self, rng):
        for dim in [2, 3, 7, 10]:
            mat = np.asarray(random_density(rng, dim))
            vec = bbgky.pack_hermitian(mat)
            assert vec.shape == (dim * dim,)
            assert np.max(np.abs(bbgky.unpack_hermitian(vec, dim) - mat)) < 1e-15

    def test_unpacked_is_hermitian_for_any_vector(self, rng):
        vec = rng.normal(size=25)
        mat = bbgky.unpack_hermitian(vec, 5)
        assert np.max(np.abs(mat - mat.conj().T)) == 0.0
