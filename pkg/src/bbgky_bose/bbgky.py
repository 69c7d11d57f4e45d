"""Truncated BBGKY equation of motion for the highest propagated RDM.

With trace-one RDMs and the trace-preserving partial trace, the chain reads

    d rho_o / dt = -i [H_o, rho_o]
                   - i (N - o) sum_{k<=o} Tr_last [ W^(k, o+1), rho_{o+1} ],

and rho_{o+1} is supplied by the cluster closure when the hierarchy is
truncated.  On the symmetric sector the k-sum collapses: with W expanded in
one-body factors A (x) B, the collision term becomes a commutator of the
second-quantized one-body operator of A with the B-weighted contraction of
rho_{o+1}; see `symspace.lowering_map`.

Only the lower triangle of rho_obar is handed to the integrator (hermiticity
is then exact by storage); energies are in units of J, times in 1/J.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import cluster as _cluster
from . import symspace
from .dimer import DimerParams, build_hamiltonian
from .symspace import SymBasis, SymOperator, sym_basis, sym_operator


@dataclass(frozen=True)
class Rdm:
    """Trace-one Hermitian operator on the symmetric o-particle space."""

    basis: SymBasis
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (self.basis.dim, self.basis.dim):
            raise ValueError("matrix does not match basis dimension")
        object.__setattr__(self, "matrix", mat)

    @property
    def o(self) -> int:
        return self.basis.o

    @property
    def m(self) -> int:
        return self.basis.m

    def validate(self, tol: float = 1e-8) -> None:
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > 1e-10:
            raise ValueError("RDM is not Hermitian")
        if abs(np.trace(self.matrix).real - 1.0) > tol:
            raise ValueError(f"RDM trace deviates from one: {np.trace(self.matrix)}")


def rdm(m: int, o: int, matrix: np.ndarray) -> Rdm:
    return Rdm(sym_basis(m, o), matrix)


def rdm_from_operator(op: SymOperator) -> Rdm:
    return Rdm(op.basis, op.matrix)


@dataclass
class ModelOperators:
    """One- and two-body matrices of the dimer Hamiltonian plus run constants.

    h is m x m; W lives on the ordered pair space (m^2 x m^2) and must be
    Hermitian and exchange-symmetric.  Per-order operator caches are built
    lazily; instances are cheap, so give each trajectory its own.
    """

    h: np.ndarray
    W: np.ndarray
    N: int
    obar: int
    closure_strategy: str = "compat"
    cluster_weights: str = "wick"
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        self.W = np.asarray(self.W, dtype=complex)
        m = self.h.shape[0]
        if self.h.shape != (m, m) or self.W.shape != (m * m, m * m):
            raise ValueError("h must be m x m and W must be m^2 x m^2")
        if np.max(np.abs(self.h - self.h.conj().T)) > 1e-12:
            raise ValueError("h is not Hermitian")
        if np.max(np.abs(self.W - self.W.conj().T)) > 1e-12:
            raise ValueError("W is not Hermitian")
        if self.closure_strategy not in _cluster.CLOSURE_STRATEGIES:
            raise ValueError(f"unknown closure strategy {self.closure_strategy!r}")
        if self.cluster_weights not in _cluster.CLUSTER_WEIGHTS:
            raise ValueError(f"unknown cluster weighting {self.cluster_weights!r}")

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @classmethod
    def dimer(cls, params: DimerParams, obar: int, closure_strategy: str = "compat",
              cluster_weights: str = "wick") -> "ModelOperators":
        """Two-mode model: h = -J(|L><R| + |R><L|), W = U sum_s |ss><ss|."""
        J, U = params.J, params.U
        h = np.array([[0.0, -J], [-J, 0.0]])
        W = np.zeros((4, 4))
        W[0, 0] = U   # |LL><LL|
        W[3, 3] = U   # |RR><RR|
        return cls(h=h, W=W, N=params.N, obar=obar,
                   closure_strategy=closure_strategy, cluster_weights=cluster_weights)

    def _order_tables(self, o: int):
        with self._lock:
            if o in self._cache:
                return self._cache[o]
        m = self.m
        H = h_full_matrix(self.h, self.W, m, o)
        ksup = _collision_superoperator(self.W, m, o)
        tables = (H, ksup)
        with self._lock:
            self._cache[o] = tables
        return tables


def h_full_matrix(h: np.ndarray, W: np.ndarray, m: int, o: int) -> np.ndarray:
    """Occupation-basis o-particle Hamiltonian sum_k h^(k) + sum_{k<l} W^(kl)."""
    if o < 1:
        raise ValueError("order must be >= 1")
    dim = symspace.dimension(m, o)
    H = np.zeros((dim, dim), dtype=complex)
    for r in range(m):
        for s in range(m):
            if h[r, s] != 0:
                H += h[r, s] * symspace.transfer_matrix(m, o, r, s)
    if o >= 2:
        basis = sym_basis(m, o)
        for r in range(m):
            for s in range(m):
                for t in range(m):
                    for u in range(m):
                        w = W[r * m + s, t * m + u]
                        if w == 0:
                            continue
                        # 0.5 * w * a^dag_r a^dag_s a_u a_t
                        for j, occ in enumerate(basis.states):
                            amp = occ[t] * (occ[u] - (1 if u == t else 0))
                            if amp <= 0:
                                continue
                            mid = list(occ)
                            mid[t] -= 1
                            mid[u] -= 1
                            val = math.sqrt(occ[t] * (occ[u] - (1 if u == t else 0)))
                            mid[s] += 1
                            val *= math.sqrt(mid[s])
                            mid[r] += 1
                            val *= math.sqrt(mid[r])
                            i = basis.index(tuple(mid))
                            H[i, j] += 0.5 * w * val
    return H


def _collision_superoperator(W: np.ndarray, m: int, o: int) -> np.ndarray | None:
    """Matrix of rho_{o+1} -> sum_{k<=o} Tr_last [ W^(k, o+1), rho_{o+1} ] acting
    on row-major vectorized operators; None when W vanishes.

    Each W matrix unit |r><t| (x) |s><u| contributes a commutator of the
    second-quantized transfer matrix a^dag_r a_t with the B-weighted
    contraction L_u rho L_s^dag.
    """
    D = symspace.dimension(m, o)
    Dp = symspace.dimension(m, o + 1)
    eye = np.eye(D)
    ksup = np.zeros((D * D, Dp * Dp), dtype=complex)
    nonzero = False
    for r in range(m):
        for s in range(m):
            for t in range(m):
                for u in range(m):
                    w = W[r * m + s, t * m + u]
                    if w == 0:
                        continue
                    nonzero = True
                    E = symspace.transfer_matrix(m, o, r, t)
                    Lu = symspace.lowering_map(m, o, u)
                    Lsd = symspace.lowering_map(m, o, s).conj().T
                    contract = np.kron(Lu, Lsd.T)
                    ksup += w * ((np.kron(E, eye) - np.kron(eye, E.T)) @ contract)
    return ksup if nonzero else None


def h_full(ops: ModelOperators, o: int) -> SymOperator:
    """o-particle restriction of the Hamiltonian on the symmetric sector."""
    H, _ = ops._order_tables(o)
    return sym_operator(ops.m, o, H.copy())


def collision_term(rho_top: np.ndarray, ops: ModelOperators, o: int) -> np.ndarray:
    """sum_{k<=o} Tr_last [ W^(k, o+1), rho_{o+1} ] on the symmetric o-sector."""
    _, ksup = ops._order_tables(o)
    D = symspace.dimension(ops.m, o)
    if ksup is None:
        return np.zeros((D, D), dtype=complex)
    return (ksup @ rho_top.reshape(-1)).reshape(D, D)


def rhs_matrix(rho: np.ndarray, ops: ModelOperators, rho_top: np.ndarray | None = None) -> np.ndarray:
    """d rho_obar / dt; rho_top overrides the closure (e.g. with an exact RDM)."""
    o = ops.obar
    H, ksup = ops._order_tables(o)
    out = -1j * (H @ rho - rho @ H)
    if ksup is None and rho_top is None:
        return out
    if rho_top is None:
        rho_top = _cluster.closure_matrix(rho, ops.m, o, ops.closure_strategy,
                                          ops.cluster_weights)
    out += -1j * (ops.N - o) * collision_term(rho_top, ops, o)
    return out


def rhs(rho: Rdm, ops: ModelOperators, rho_top: Rdm | None = None) -> np.ndarray:
    if rho.o != ops.obar:
        raise ValueError(f"state has order {rho.o}, model truncates at {ops.obar}")
    if not 2 <= ops.obar <= ops.N - 1:
        raise ValueError(f"need 2 <= obar <= N-1, got obar={ops.obar}, N={ops.N}")
    top = rho_top.matrix if rho_top is not None else None
    return rhs_matrix(rho.matrix, ops, top)


def energy_matrix(rho: np.ndarray, ops: ModelOperators, o: int) -> float:
    """E = N tr(h rho_1) + N(N-1)/2 tr(W rho_2^ordered) from the order-o state."""
    if o < 2:
        raise ValueError("energy needs an order >= 2 state")
    m = ops.m
    rho2 = rho if o == 2 else symspace.partial_trace_matrix(rho, m, o, o - 2)
    rho1 = symspace.partial_trace_matrix(rho2, m, 2, 1)
    one = ops.N * np.trace(ops.h @ rho1)
    U2 = symspace._embedding_matrix(m, 2)
    rho2_ord = U2 @ rho2 @ U2.T
    two = 0.5 * ops.N * (ops.N - 1) * np.trace(ops.W @ rho2_ord)
    return float((one + two).real)


def energy(rho: Rdm, ops: ModelOperators) -> float:
    return energy_matrix(rho.matrix, ops, rho.o)


def dimer_hamiltonian_equivalence(params: DimerParams) -> float:
    """Max deviation between the o=N sector Hamiltonian and the Fock-space one."""
    ops = ModelOperators.dimer(params, obar=max(params.N - 1, 2))
    H_sym = h_full_matrix(ops.h, ops.W, 2, params.N)
    H_ref = build_hamiltonian(params)
    return float(np.max(np.abs(H_sym - H_ref)))


# ---------------------------------------------------------------------------
# packed lower-triangle storage
# ---------------------------------------------------------------------------

def packed_size(dim: int) -> int:
    return dim * dim


@lru_cache(maxsize=None)
def _tril_indices(dim: int) -> tuple[np.ndarray, np.ndarray]:
    return np.tril_indices(dim, -1)


def pack_hermitian(mat: np.ndarray) -> np.ndarray:
    """Lower triangle, diagonal first as reals, then (re, im) interleaved."""
    dim = mat.shape[0]
    il, jl = _tril_indices(dim)
    out = np.empty(dim * dim)
    out[:dim] = mat.diagonal().real
    low = mat[il, jl]
    out[dim::2] = low.real
    out[dim + 1::2] = low.imag
    return out


def unpack_hermitian(vec: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of pack_hermitian; the result is Hermitian by construction."""
    il, jl = _tril_indices(dim)
    mat = np.zeros((dim, dim), dtype=complex)
    mat[il, jl] = vec[dim::2] + 1j * vec[dim + 1::2]
    mat += mat.conj().T
    mat[np.arange(dim), np.arange(dim)] = vec[:dim]
    return mat
