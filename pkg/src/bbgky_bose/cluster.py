"""Cluster decomposition of RDM families and the truncation closure.

A trace-one family rho_1..rho_K expands over partition types,

    rho_o = sum_{lambda |- o} w_lambda Sym(c_{lambda_1} (x) c_{lambda_2} (x) ...),

with Sym the orthogonal-projector symmetrized product.  Two weightings are
supported; both leave a pure condensate with vanishing clusters at every
order >= 2 (every non-trivial term contains some c_{>=2}):

  * "wick": w_lambda = number of set partitions of that type, i.e. the Ursell
    convention in which every set partition contributes once and coinciding
    symmetrized representatives stack up.  Default.
  * "type": w_lambda = 1 for every partition type.

Either way the inversion (Moebius) and the recomposition are exact mutual
inverses by construction.

The closure reconstructs rho_{obar+1} from clusters of order <= obar.  The raw
partition sum does not contract back to rho_obar exactly, which would leak
energy through the collision integral; the default "compat" strategy therefore
adds the minimum-norm lift of the contraction deficit, making the closure
compatible (and hence trace- and energy-conserving) to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import symspace
from .symspace import SymOperator, sym_operator, sym_product_pair

CLOSURE_STRATEGIES = ("compat", "raw")
CLUSTER_WEIGHTS = ("wick", "type")


@dataclass(frozen=True)
class ClusterSet:
    """Connected correlation operators c_1..c_K (occupation-basis matrices)."""

    m: int
    clusters: tuple[np.ndarray, ...]
    weights: str = "wick"

    @property
    def K(self) -> int:
        return len(self.clusters)

    def cluster(self, o: int) -> np.ndarray:
        if not 1 <= o <= self.K:
            raise ValueError(f"no cluster of order {o}, have 1..{self.K}")
        return self.clusters[o - 1]


def _check_compatible(rdms: list[np.ndarray], m: int, tol: float) -> None:
    worst = 0.0
    for o in range(2, len(rdms) + 1):
        traced = symspace.partial_trace_matrix(rdms[o - 1], m, o, 1)
        worst = max(worst, float(np.max(np.abs(traced - rdms[o - 2]))))
    if worst > tol:
        raise ValueError(
            f"RDM family is not compatible: max partial-trace deviation {worst:.3e} > {tol:.0e}"
        )


def _fold_size(table: list, s: int, cs: np.ndarray, m: int, top: int) -> list:
    """Extend partition sums from parts <= s-1 to parts <= s by folding in
    powers of the size-s cluster."""
    powers: list[np.ndarray] = [cs]
    for k in range(2, top // s + 1):
        powers.append(sym_product_pair(powers[-1], (k - 1) * s, cs, s, m))
    new_table = list(table)
    for j in range(s, top + 1):
        acc = table[j]
        for k in range(1, j // s + 1):
            rest = j - k * s
            if rest == 0:
                term = powers[k - 1]
            elif table[rest] is None:
                continue
            else:
                term = sym_product_pair(powers[k - 1], k * s, table[rest], rest, m)
            acc = term if acc is None else acc + term
        new_table[j] = acc
    return new_table


def _singleton_table(c1: np.ndarray, m: int, top: int) -> list:
    """Partition sums with parts of size 1 only: powers of c_1."""
    table: list[np.ndarray | None] = [None] * (top + 1)
    table[1] = c1
    for j in range(2, top + 1):
        table[j] = sym_product_pair(table[j - 1], j - 1, c1, 1, m)
    return table


def _partition_sums(clusters: list[np.ndarray], m: int, top: int) -> np.ndarray:
    """Sum over all partitions of `top` into parts of size <= len(clusters),
    one symmetrized product per partition type."""
    table = _singleton_table(clusters[0], m, top)
    for s in range(2, min(len(clusters), top) + 1):
        table = _fold_size(table, s, clusters[s - 1], m, top)
    return table[top]


def _decompose(mats: list[np.ndarray], m: int, top: int) -> tuple[list[np.ndarray], list]:
    """One incremental pass: Moebius-invert the family rho_1..rho_K and keep the
    running partition sums up to order `top` (unit type-weights).

    When size s is about to be folded in, table[s] holds the sum over
    partitions of s with parts <= s-1, so c_s = rho_s - table[s].
    """
    K = len(mats)
    clusters = [mats[0]]
    table = _singleton_table(mats[0], m, top)
    for s in range(2, K + 1):
        c_s = mats[s - 1] - table[s]
        clusters.append(c_s)
        table = _fold_size(table, s, c_s, m, top)
    return clusters, table


def _decompose_wick(mats: list[np.ndarray], m: int) -> list[np.ndarray]:
    """Moebius inversion with set-partition multiplicities, via the cumulant
    recursion over the block containing a marked particle:

        rho_o = sum_{k=1}^{o} C(o-1, k-1) Sym(c_k (x) rho_{o-k}).
    """
    clusters = [mats[0]]
    for o in range(2, len(mats) + 1):
        acc = mats[o - 1].copy()
        for k in range(1, o):
            acc -= math.comb(o - 1, k - 1) * sym_product_pair(
                clusters[k - 1], k, mats[o - k - 1], o - k, m)
        clusters.append(acc)
    return clusters


def _recompose_wick(clusters: list[np.ndarray], m: int, top: int) -> list:
    """Recomposition table rho_1..rho_top from clusters, set-partition weights."""
    table: list[np.ndarray | None] = [None] * (top + 1)
    K = len(clusters)
    for o in range(1, top + 1):
        acc = None
        for k in range(1, min(o, K) + 1):
            if k == o:
                term = clusters[k - 1]
            else:
                term = math.comb(o - 1, k - 1) * sym_product_pair(
                    clusters[k - 1], k, table[o - k], o - k, m)
            acc = term if acc is None else acc + term
        table[o] = acc
    return table


def clusters_from_rdms(rdms: list[SymOperator], tol: float = 1e-8,
                       weights: str = "wick") -> ClusterSet:
    """Moebius inversion of a compatible trace-one RDM family rho_1..rho_K."""
    if not rdms:
        raise ValueError("need at least rho_1")
    m = rdms[0].m
    mats = []
    for o, op in enumerate(rdms, start=1):
        if op.o != o:
            raise ValueError(f"expected order {o} at position {o - 1}, got {op.o}")
        if op.m != m:
            raise ValueError("mode-count mismatch inside RDM family")
        mats.append(op.matrix)
    _check_compatible(mats, m, tol)
    return _clusters_from_matrices(mats, m, weights)


def _clusters_from_matrices(mats: list[np.ndarray], m: int, weights: str = "wick") -> ClusterSet:
    if weights not in CLUSTER_WEIGHTS:
        raise ValueError(f"unknown cluster weighting {weights!r}")
    if weights == "wick":
        clusters = _decompose_wick(mats, m)
    else:
        clusters, _ = _decompose(mats, m, len(mats))
    return ClusterSet(m, tuple(clusters), weights)


def recompose_rdm(cs: ClusterSet, o: int) -> SymOperator:
    """Partition-type sum reconstructing rho_o from clusters; inverse of
    clusters_from_rdms at every order <= K."""
    if not 1 <= o <= cs.K:
        raise ValueError(f"order {o} outside available clusters 1..{cs.K}")
    if cs.weights == "wick":
        mat = _recompose_wick(list(cs.clusters[:o]), cs.m, o)[o]
    else:
        mat = _partition_sums(list(cs.clusters[:o]), cs.m, o)
    return sym_operator(cs.m, o, mat)


def cluster_norms(cs: ClusterSet) -> np.ndarray:
    """Trace-class norm ||c_o||_1 (sum of |eigenvalues|) for o = 1..K."""
    out = np.empty(cs.K)
    for i, c in enumerate(cs.clusters):
        out[i] = float(np.sum(np.abs(np.linalg.eigvalsh(c))))
    return out


def closure_matrix(rho_top: np.ndarray, m: int, obar: int, strategy: str = "compat",
                   weights: str = "wick") -> np.ndarray:
    """Approximant for rho_{obar+1} built from rho_obar and its partial traces.

    The top cluster c_{obar+1} is dropped; with strategy "compat" the
    contraction deficit is repaired by the minimum-norm lift so that the
    result traces back to rho_obar exactly.
    """
    if strategy not in CLOSURE_STRATEGIES:
        raise ValueError(f"unknown closure strategy {strategy!r}")
    if weights not in CLUSTER_WEIGHTS:
        raise ValueError(f"unknown cluster weighting {weights!r}")
    mats = [rho_top]
    for q in range(obar, 1, -1):
        mats.append(symspace._trace_one(mats[-1], m, q))
    mats.reverse()
    if weights == "wick":
        clusters = _decompose_wick(mats, m)
        approx = None
        for k in range(1, obar + 1):
            term = math.comb(obar, k - 1) * sym_product_pair(
                clusters[k - 1], k, mats[obar - k], obar + 1 - k, m)
            approx = term if approx is None else approx + term
    else:
        _, table = _decompose(mats, m, obar + 1)
        approx = table[obar + 1]
    if strategy == "compat":
        deficit = rho_top - symspace._trace_one(approx, m, obar + 1)
        approx = approx + symspace.lift_one(deficit, m, obar + 1)
    return approx


def closure(rho_top: SymOperator, N: int, strategy: str = "compat",
            weights: str = "wick") -> SymOperator:
    """Closure of the hierarchy at order obar = rho_top.o (needs 2 <= obar <= N-1)."""
    obar = rho_top.o
    if not 2 <= obar <= N - 1:
        raise ValueError(f"need 2 <= obar <= N-1, got obar={obar}, N={N}")
    return sym_operator(
        rho_top.m, obar + 1,
        closure_matrix(rho_top.matrix, rho_top.m, obar, strategy, weights)
    )
