"""Symmetric few-boson spaces: bases, embeddings, partial traces, products.

Operators on the symmetric o-particle space of m modes are stored in the
occupation-number basis |n1..nm>, sum(n) = o, ordered lexicographically
descending.  The conversion to the ordered tensor space (C^m)^(x o) maps
|n> to the normalized symmetrized tensor with coefficient
sqrt(prod n_s! / o!) per distinct arrangement.

All tables derived from (m, o) are cached module-wide; the objects handed
out are immutable values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_INT64_MAX = 2**63 - 1


def dimension(m: int, o: int) -> int:
    """Dimension C(m+o-1, o) of the symmetric o-particle space of m modes."""
    if m < 1:
        raise ValueError(f"mode count must be >= 1, got {m}")
    if o < 0:
        raise ValueError(f"particle order must be >= 0, got {o}")
    d = math.comb(m + o - 1, o)
    if d > _INT64_MAX:
        raise OverflowError(f"dimension({m}, {o}) exceeds 2**63-1")
    return d


def _occupations(m: int, o: int) -> tuple[tuple[int, ...], ...]:
    """All occupation vectors of m modes summing to o, lexicographically descending."""
    if m == 1:
        return ((o,),)
    out = []
    for n1 in range(o, -1, -1):
        for rest in _occupations(m - 1, o - n1):
            out.append((n1,) + rest)
    return tuple(out)


@dataclass(frozen=True)
class SymBasis:
    """Occupation-number basis of the symmetric o-particle space of m modes."""

    m: int
    o: int
    states: tuple[tuple[int, ...], ...]
    _index: dict = field(repr=False, hash=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.states)})

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, occ: tuple[int, ...]) -> int:
        return self._index[tuple(occ)]


@lru_cache(maxsize=None)
def sym_basis(m: int, o: int) -> SymBasis:
    basis = SymBasis(m, o, _occupations(m, o))
    assert basis.dim == dimension(m, o)
    return basis


@dataclass(frozen=True)
class SymOperator:
    """Operator on a symmetric o-particle space, occupation-basis matrix."""

    basis: SymBasis
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(
                f"matrix shape {mat.shape} does not match basis dimension {self.basis.dim}"
            )
        object.__setattr__(self, "matrix", mat)

    @property
    def m(self) -> int:
        return self.basis.m

    @property
    def o(self) -> int:
        return self.basis.o

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) < tol)


def sym_operator(m: int, o: int, matrix: np.ndarray) -> SymOperator:
    return SymOperator(sym_basis(m, o), matrix)


# ---------------------------------------------------------------------------
# ordered tensor embedding
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _embedding_matrix(m: int, o: int) -> np.ndarray:
    """Isometry U of shape (m**o, dim) mapping |n> to its symmetrized tensor."""
    if m**o > 2**22:
        raise ValueError(f"ordered space of dimension {m}**{o} is too large to materialize")
    basis = sym_basis(m, o)
    U = np.zeros((m**o, basis.dim))
    for col, occ in enumerate(basis.states):
        modes = [s for s, n in enumerate(occ) for _ in range(n)]
        coeff = math.sqrt(
            math.prod(math.factorial(n) for n in occ) / math.factorial(o)
        )
        for arrangement in set(itertools.permutations(modes)):
            row = 0
            for s in arrangement:
                row = row * m + s
            U[row, col] = coeff
    return U


def embed_ordered(a: SymOperator) -> np.ndarray:
    """Occupation-basis operator expressed on the ordered tensor space (C^m)^(x o)."""
    U = _embedding_matrix(a.m, a.o)
    return U @ a.matrix @ U.T


# ---------------------------------------------------------------------------
# partial trace
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _pt_tables(m: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Index/weight tables for tracing one particle off an order-q operator.

    For each mode s, idx[s][i] is the order-q index of n_i + e_s where n_i runs
    over the order-(q-1) basis, and w[s][i] = sqrt(n_i[s] + 1).
    """
    lo = sym_basis(m, q - 1)
    hi = sym_basis(m, q)
    idx = np.empty((m, lo.dim), dtype=np.intp)
    w = np.empty((m, lo.dim))
    for i, occ in enumerate(lo.states):
        for s in range(m):
            raised = list(occ)
            raised[s] += 1
            idx[s, i] = hi.index(tuple(raised))
            w[s, i] = math.sqrt(occ[s] + 1)
    return idx, w


def _real_matvec(P: np.ndarray, v: np.ndarray) -> np.ndarray:
    """P @ v for real P and possibly complex v, kept on the BLAS fast path."""
    if np.iscomplexobj(v):
        X = np.empty((v.shape[0], 2))
        X[:, 0] = v.real
        X[:, 1] = v.imag
        Y = P @ X
        return Y[:, 0] + 1j * Y[:, 1]
    return P @ v


def _trace_one(mat: np.ndarray, m: int, q: int) -> np.ndarray:
    """Trace one particle: order-q occupation matrix -> order-(q-1)."""
    idx, w = _pt_tables(m, q)
    lo_dim = idx.shape[1]
    if lo_dim <= 40:
        P = _pt_superoperator(m, q)
        return _real_matvec(P, mat.reshape(-1)).reshape(lo_dim, lo_dim)
    out = np.zeros((lo_dim, lo_dim), dtype=complex)
    for s in range(m):
        out += np.outer(w[s], w[s]) * mat[np.ix_(idx[s], idx[s])]
    out /= q
    return out


def partial_trace_matrix(mat: np.ndarray, m: int, o: int, k: int) -> np.ndarray:
    """Trace k particles off an order-o occupation matrix (trace preserved)."""
    if not 1 <= k < o:
        raise ValueError(f"need 1 <= k < o, got k={k}, o={o}")
    out = mat
    for q in range(o, o - k, -1):
        out = _trace_one(out, m, q)
    return out


def partial_trace(a: SymOperator, k: int) -> SymOperator:
    """Partial trace over k particles; the total trace is preserved."""
    reduced = partial_trace_matrix(a.matrix, a.m, a.o, k)
    return sym_operator(a.m, a.o - k, reduced)


@lru_cache(maxsize=None)
def _pt_superoperator(m: int, q: int) -> np.ndarray:
    """One-particle trace as a matrix acting on vec(order-q) -> vec(order-(q-1))."""
    hi_dim = sym_basis(m, q).dim
    lo_dim = sym_basis(m, q - 1).dim
    idx, w = _pt_tables(m, q)
    P = np.zeros((lo_dim * lo_dim, hi_dim * hi_dim))
    for s in range(m):
        for i in range(lo_dim):
            for j in range(lo_dim):
                P[i * lo_dim + j, idx[s, i] * hi_dim + idx[s, j]] += w[s, i] * w[s, j] / q
    return P


@lru_cache(maxsize=None)
def _pt_pinv(m: int, q: int) -> np.ndarray:
    """Minimum-norm right inverse of the one-particle trace at order q."""
    return np.linalg.pinv(_pt_superoperator(m, q), rcond=1e-12)


def lift_one(mat: np.ndarray, m: int, q: int) -> np.ndarray:
    """Minimum-Frobenius-norm order-q operator whose one-particle trace is `mat`."""
    lo_dim = sym_basis(m, q - 1).dim
    hi_dim = sym_basis(m, q).dim
    if mat.shape != (lo_dim, lo_dim):
        raise ValueError(f"expected shape {(lo_dim, lo_dim)}, got {mat.shape}")
    vec = _real_matvec(_pt_pinv(m, q), mat.reshape(-1))
    return vec.reshape(hi_dim, hi_dim)


# ---------------------------------------------------------------------------
# symmetrized products
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _pair_table(m: int, a: int, b: int) -> np.ndarray:
    """Decomposition coefficients beta[n, i, j] of the order-(a+b) state n into
    block-symmetric states (i of order a, j of order b), i.e. the overlap
    <n_a (x) n_b | n> of symmetrized tensors."""
    ba = sym_basis(m, a)
    bb = sym_basis(m, b)
    bo = sym_basis(m, a + b)
    o = a + b
    beta = np.zeros((bo.dim, ba.dim, bb.dim))
    fact = [math.factorial(k) for k in range(o + 1)]
    for i, na in enumerate(ba.states):
        for j, nb in enumerate(bb.states):
            n = tuple(x + y for x, y in zip(na, nb))
            val = math.prod(fact[x] for x in n) * fact[a] * fact[b]
            val /= fact[o] * math.prod(fact[x] for x in na) * math.prod(fact[x] for x in nb)
            beta[bo.index(n), i, j] = math.sqrt(val)
    return beta


@lru_cache(maxsize=None)
def _pair_factor_tables(m: int, a: int, b: int):
    """Factored decomposition tables for the pairwise symmetrized product:
    B1[(n,j), i] and B2[(p,k), l] from beta[n, i, j], stored complex so every
    contraction is a single BLAS call."""
    beta = _pair_table(m, a, b)
    dout, da, db = beta.shape
    B1 = np.ascontiguousarray(beta.transpose(0, 2, 1).reshape(dout * db, da), dtype=complex)
    B2 = np.ascontiguousarray(beta.reshape(dout * da, db), dtype=complex)
    return B1, B2, (dout, da, db)


def sym_product_pair(A: np.ndarray, a: int, B: np.ndarray, b: int, m: int) -> np.ndarray:
    """P_s (A (x) B) P_s restricted to the symmetric subspace, occupation basis.

    Evaluated as three small matmuls: out[n,p] = sum beta[n,i,j] beta[p,k,l]
    A[i,k] B[j,l] with the decomposition tables contracted one at a time.
    """
    B1, B2, (dout, da, db) = _pair_factor_tables(m, a, b)
    A = A if np.iscomplexobj(A) else A.astype(complex)
    B = B if np.iscomplexobj(B) else B.astype(complex)
    T = B1 @ A                         # [(n,j), k]
    S = B2 @ B.T                       # [(p,k), j]
    T2 = T.reshape(dout, db, da).transpose(0, 2, 1).reshape(dout, da * db)
    S2 = S.reshape(dout, da * db).T
    return T2 @ S2


def sym_product(ops: list[SymOperator]) -> SymOperator:
    """Symmetrized product of operators of orders o_1..o_p (orthogonal projector
    convention); mixed-state operands generally lose trace under projection."""
    if not ops:
        raise ValueError("need at least one operand")
    m = ops[0].m
    for op in ops[1:]:
        if op.m != m:
            raise ValueError(f"mode-count mismatch: {op.m} != {m}")
    acc, order = ops[0].matrix, ops[0].o
    for op in ops[1:]:
        acc = sym_product_pair(acc, order, op.matrix, op.o, m)
        order += op.o
    return sym_operator(m, order, acc)


# ---------------------------------------------------------------------------
# bosonic one-body transfer matrices on a fixed-order sector
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def transfer_matrix(m: int, o: int, r: int, s: int) -> np.ndarray:
    """Matrix of a^dag_r a_s restricted to the symmetric o-particle sector."""
    basis = sym_basis(m, o)
    E = np.zeros((basis.dim, basis.dim))
    for j, occ in enumerate(basis.states):
        if occ[s] == 0:
            continue
        shifted = list(occ)
        shifted[s] -= 1
        shifted[r] += 1
        amp = math.sqrt(occ[s] * (shifted[r]))
        E[basis.index(tuple(shifted)), j] = amp
    return E


@lru_cache(maxsize=None)
def lowering_map(m: int, o: int, s: int) -> np.ndarray:
    """Map L_s of shape (dim_o, dim_{o+1}) with L_s|n + e_s> = sqrt((n_s+1)/(o+1)) |n>.

    Contracting one particle of an order-(o+1) operator against a one-body
    matrix B gives Tr_last[B^(last) rho] = sum_{xy} B_xy L_y rho L_x^dag.
    """
    lo = sym_basis(m, o)
    idx, w = _pt_tables(m, o + 1)
    L = np.zeros((lo.dim, sym_basis(m, o + 1).dim))
    for i in range(lo.dim):
        L[i, idx[s, i]] = w[s, i] / math.sqrt(o + 1)
    return L
