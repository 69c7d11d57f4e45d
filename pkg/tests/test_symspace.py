import itertools
import math

import numpy as np
import pytest

from bbgky_bose import symspace as sp
from conftest import random_hermitian

L = np.array([[1.0, 0.0], [0.0, 0.0]])
R = np.array([[0.0, 0.0], [0.0, 1.0]])


def ordered_projector(m, o):
    """Brute-force orthogonal symmetrizer on (C^m)^(x o)."""
    idx = list(itertools.product(range(m), repeat=o))
    pos = {t: i for i, t in enumerate(idx)}
    P = np.zeros((m**o, m**o))
    perms = list(itertools.permutations(range(o)))
    for i, t in enumerate(idx):
        for pi in perms:
            P[pos[tuple(t[p] for p in pi)], i] += 1.0 / len(perms)
    return P


class TestDimension:
    @pytest.mark.parametrize("m,o,expect", [(2, 5, 6), (2, 12, 13), (4, 2, 10)])
    def test_examples(self, m, o, expect):
        assert sp.dimension(m, o) == expect

    def test_two_mode_chain(self):
        for o in range(65):
            assert sp.dimension(2, o) == o + 1

    def test_counts_match_enumeration(self):
        for m, o in [(2, 4), (3, 3), (4, 2), (5, 2)]:
            assert sp.dimension(m, o) == len(sp.sym_basis(m, o).states)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            sp.dimension(0, 2)
        with pytest.raises(ValueError):
            sp.dimension(2, -1)

    def test_overflow_guard(self):
        with pytest.raises(OverflowError):
            sp.dimension(64, 64)


class TestBasis:
    def test_lexicographic_descending(self):
        states = sp.sym_basis(3, 2).states
        assert states == ((2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2))

    def test_states_unique_and_sum(self):
        basis = sp.sym_basis(4, 3)
        assert len(set(basis.states)) == basis.dim
        assert all(sum(n) == 3 for n in basis.states)
        assert all(min(n) >= 0 for n in basis.states)


class TestEmbedOrdered:
    def test_order_one_is_identity(self, rng):
        A = sp.sym_operator(3, 1, random_hermitian(rng, 3))
        assert np.allclose(sp.embed_ordered(A), A.matrix)

    def test_double_occupation_is_pure_tensor(self):
        basis = sp.sym_basis(2, 2)
        mat = np.zeros((3, 3))
        mat[basis.index((2, 0)), basis.index((2, 0))] = 1.0
        out = sp.embed_ordered(sp.sym_operator(2, 2, mat))
        expect = np.zeros((4, 4))
        expect[0, 0] = 1.0  # |LL><LL|
        assert np.allclose(out, expect)

    def test_balanced_occupation_splits_evenly(self):
        basis = sp.sym_basis(2, 2)
        mat = np.zeros((3, 3))
        mat[basis.index((1, 1)), basis.index((1, 1))] = 1.0
        out = sp.embed_ordered(sp.sym_operator(2, 2, mat))
        v = np.zeros(4)
        v[1] = v[2] = 1.0 / math.sqrt(2.0)  # (|LR> + |RL|)/sqrt(2)
        assert np.allclose(out, np.outer(v, v))
        assert abs(np.trace(out) - 1.0) < 1e-12

    def test_trace_preserved(self, rng):
        for m, o in [(2, 3), (3, 2), (2, 5)]:
            A = sp.sym_operator(m, o, random_hermitian(rng, sp.dimension(m, o)))
            assert abs(np.trace(sp.embed_ordered(A)) - np.trace(A.matrix)) < 1e-12


class TestPartialTrace:
    def test_condensate_pair(self):
        basis = sp.sym_basis(2, 2)
        mat = np.zeros((3, 3))
        mat[basis.index((2, 0)), basis.index((2, 0))] = 1.0
        out = sp.partial_trace(sp.sym_operator(2, 2, mat), 1)
        assert np.allclose(out.matrix, L)

    def test_noon_pair(self):
        mat = np.diag([0.5, 0.0, 0.5])
        out = sp.partial_trace(sp.sym_operator(2, 2, mat), 1)
        assert np.allclose(out.matrix, np.eye(2) / 2)

    def test_trace_preserved(self, rng):
        for m, o, k in [(2, 4, 1), (2, 4, 3), (3, 3, 2)]:
            A = sp.sym_operator(m, o, random_hermitian(rng, sp.dimension(m, o)))
            traced = sp.partial_trace(A, k)
            assert abs(np.trace(traced.matrix) - np.trace(A.matrix)) < 1e-12
            assert traced.is_hermitian()

    def test_matches_ordered_space_trace(self, rng):
        for m, o, k in [(2, 4, 2), (3, 3, 1)]:
            A = sp.sym_operator(m, o, random_hermitian(rng, sp.dimension(m, o)))
            big = sp.embed_ordered(A)
            d_keep = m ** (o - k)
            ref = np.einsum("iaja->ij", big.reshape(d_keep, m**k, d_keep, m**k))
            U = sp._embedding_matrix(m, o - k)
            assert np.max(np.abs(sp.partial_trace(A, k).matrix - U.T @ ref @ U)) < 1e-12

    def test_composition(self, rng):
        A = sp.sym_operator(2, 5, random_hermitian(rng, 6))
        both = sp.partial_trace(sp.partial_trace(A, 2), 1)
        once = sp.partial_trace(A, 3)
        assert np.max(np.abs(both.matrix - once.matrix)) < 1e-12

    def test_invalid_k(self, rng):
        A = sp.sym_operator(2, 2, random_hermitian(rng, 3))
        with pytest.raises(ValueError):
            sp.partial_trace(A, 2)
        with pytest.raises(ValueError):
            sp.partial_trace(A, 0)


class TestSymProduct:
    def test_condensate_product(self):
        out = sp.sym_product([sp.sym_operator(2, 1, L), sp.sym_operator(2, 1, L)])
        basis = sp.sym_basis(2, 2)
        expect = np.zeros((3, 3))
        expect[basis.index((2, 0)), basis.index((2, 0))] = 1.0
        assert np.allclose(out.matrix, expect)
        assert abs(np.trace(out.matrix) - 1.0) < 1e-14

    def test_single_operand_identity(self, rng):
        A = sp.sym_operator(2, 2, random_hermitian(rng, 3))
        assert np.allclose(sp.sym_product([A]).matrix, A.matrix)

    def test_opposite_wells(self):
        out = sp.sym_product([sp.sym_operator(2, 1, L), sp.sym_operator(2, 1, R)])
        basis = sp.sym_basis(2, 2)
        expect = np.zeros((3, 3))
        expect[basis.index((1, 1)), basis.index((1, 1))] = 0.5
        assert np.allclose(out.matrix, expect)

    def test_matches_projector_definition(self, rng):
        for m, a, b in [(2, 1, 1), (2, 2, 1), (2, 2, 2), (3, 1, 2)]:
            A = random_hermitian(rng, sp.dimension(m, a))
            B = random_hermitian(rng, sp.dimension(m, b))
            got = sp.sym_product_pair(A, a, B, b, m)
            P = ordered_projector(m, a + b)
            big = P @ np.kron(
                sp.embed_ordered(sp.sym_operator(m, a, A)),
                sp.embed_ordered(sp.sym_operator(m, b, B))) @ P
            U = sp._embedding_matrix(m, a + b)
            assert np.max(np.abs(got - U.T @ big @ U)) < 1e-12

    def test_psd_preserved(self, rng):
        for _ in range(5):
            a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
            b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            A = a @ a.conj().T
            B = b @ b.conj().T
            out = sp.sym_product(
                [sp.sym_operator(2, 2, A), sp.sym_operator(2, 1, B)])
            assert np.min(np.linalg.eigvalsh(out.matrix)) > -1e-12

    def test_mode_mismatch(self, rng):
        A = sp.sym_operator(2, 1, random_hermitian(rng, 2))
        B = sp.sym_operator(3, 1, random_hermitian(rng, 3))
        with pytest.raises(ValueError):
            sp.sym_product([A, B])

    def test_associative(self, rng):
        ops = [sp.sym_operator(2, 1, random_hermitian(rng, 2)) for _ in range(3)]
        left = sp.sym_product([sp.sym_product(ops[:2]), ops[2]])
        flat = sp.sym_product(ops)
        assert np.max(np.abs(left.matrix - flat.matrix)) < 1e-13


class TestLift:
    def test_right_inverse_of_trace(self, rng):
        for m, q in [(2, 3), (2, 10), (3, 3)]:
            Y = random_hermitian(rng, sp.dimension(m, q - 1))
            X = sp.lift_one(Y, m, q)
            assert np.max(np.abs(sp._trace_one(X, m, q) - Y)) < 1e-10
            assert np.max(np.abs(X - X.conj().T)) < 1e-10
