"""Stabilization of the order-2 hierarchy: purification and EOM correction.

Both algorithms look for the smallest (Frobenius) Hermitian update C of the
2-RDM, or of its time derivative, subject to linear equality rows:

  * contraction-free      tr_1 C = 0                (m^2 real rows)
  * energy-conserving     tr(W C_ordered) = 0       (1 row)
  * optional parity rows  zero off-parity-block parameters
  * one row per offending eigenvector of rho_2 or of the K-matrix

Purification shifts negative eigenvalues to zero in first order after every
write-out step; the EOM correction constrains the eigenvalue time derivative
to -eta * lambda, which integrates to exponential damping.  An inconsistent
row system raises InfeasibleCorrection (the failure mode of higher-order
correction ansaetze).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import bbgky as _bbgky
from . import repres, symspace

CORRECTION_MODES = ("none", "purify", "eom")


class InfeasibleCorrection(Exception):
    """Constraint rows contradict one another; carries the least-squares residual."""

    def __init__(self, residual: float, message: str = ""):
        self.residual = residual
        super().__init__(message or f"inconsistent correction constraints, residual {residual:.3e}")


@dataclass(frozen=True)
class CorrectionConfig:
    mode: str = "none"
    epsilon: float = -1e-10
    eta: float = 10.0
    max_iter: int = 500
    dt: float = 0.1
    purify_feedback: bool = False
    activation_band: float = 3e-9

    def __post_init__(self):
        if self.mode not in CORRECTION_MODES:
            raise ValueError(f"unknown correction mode {self.mode!r}")
        if self.epsilon >= 0:
            raise ValueError("negativity threshold must be < 0")
        if self.eta <= 0:
            raise ValueError("damping rate must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.dt <= 0:
            raise ValueError("write-out interval must be > 0")


@dataclass(frozen=True)
class CorrectionEvent:
    """One applied correction: active-set sizes and invasiveness measures."""

    d: int
    dprime: int
    norm: float
    iterations: int = 1
    converged: bool = True
    pt_residual: float = 0.0
    energy_residual: float = 0.0


def correction_residuals(C: np.ndarray, m: int, W: np.ndarray) -> tuple[float, float]:
    """Contraction norm and interaction-energy overlap of a correction operator."""
    pt_res = float(np.max(np.abs(symspace.partial_trace_matrix(C, m, 2, 1))))
    U2 = symspace._embedding_matrix(m, 2)
    en_res = float(abs(np.trace(W @ (U2 @ C @ U2.T))))
    return pt_res, en_res


# ---------------------------------------------------------------------------
# real parametrization of Hermitian matrices
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal (Frobenius) basis of d x d Hermitian matrices, shape (d^2, d, d).

    Order: diagonal units, then for i < j the real pair (E_ij + E_ji)/sqrt(2)
    followed by the imaginary pair i(E_ij - E_ji)/sqrt(2).
    """
    mats = np.zeros((d * d, d, d), dtype=complex)
    k = 0
    for i in range(d):
        mats[k, i, i] = 1.0
        k += 1
    s = 1.0 / math.sqrt(2.0)
    for i in range(d):
        for j in range(i + 1, d):
            mats[k, i, j] = s
            mats[k, j, i] = s
            k += 1
            mats[k, i, j] = 1j * s
            mats[k, j, i] = -1j * s
            k += 1
    return mats


def to_params(C: np.ndarray) -> np.ndarray:
    basis = hermitian_basis(C.shape[0])
    return np.einsum("aij,ji->a", basis, C).real


def from_params(x: np.ndarray, d: int) -> np.ndarray:
    return np.tensordot(x, hermitian_basis(d), axes=(0, 0))


def _row_from_gradient(G: np.ndarray) -> np.ndarray:
    """Row over real parameters for the functional C -> tr(G C), G Hermitian."""
    return to_params(G)


def _lift_adjoint(F: np.ndarray, m: int, q: int) -> np.ndarray:
    """Adjoint of the one-particle trace: tr(F tr_1(C)) = tr(adj(F) C)."""
    idx, w = symspace._pt_tables(m, q)
    hi = symspace.dimension(m, q)
    out = np.zeros((hi, hi), dtype=complex)
    for s in range(m):
        out[np.ix_(idx[s], idx[s])] += np.outer(w[s], w[s]) * F / q
    return out


@lru_cache(maxsize=None)
def _kpert_of_basis(m: int) -> np.ndarray:
    """K response of each Hermitian basis element of the 2-particle space,
    without the (1 - 1/N) prefactor; shape (d^2, m^2, m^2)."""
    d = symspace.dimension(m, 2)
    basis = hermitian_basis(d)
    out = np.empty((d * d, m * m, m * m), dtype=complex)
    for a in range(d * d):
        out[a] = repres.k_perturbation_unchecked(basis[a], m, N=2) * 2.0  # strips (1 - 1/2)
    return out


def parity_row_indices(m: int, parities: tuple[int, ...]) -> list[int]:
    """Parameter indices that must vanish for C to commute with the mode-parity
    operator; alternating parities on m modes give m^4/8 + m^3/4 of them."""
    if len(parities) != m or any(p not in (-1, 1) for p in parities):
        raise ValueError("parities must be +-1 per mode")
    basis = symspace.sym_basis(m, 2)
    sign = [math.prod(p**n for p, n in zip(parities, occ)) for occ in basis.states]
    d = basis.dim
    rows = []
    k = d  # first off-diagonal parameter index
    for i in range(d):
        for j in range(i + 1, d):
            if sign[i] != sign[j]:
                rows.extend([k, k + 1])
            k += 2
    return rows


def alternating_parity_count(m: int) -> int:
    """Row count for alternating mode parities: m^4/8 + m^3/4."""
    return m**4 // 8 + m**3 // 4


@dataclass
class ConstraintSystem:
    """Equality rows A x = b over the real parameters of a Hermitian C_2."""

    m: int
    N: int
    rows: list[np.ndarray]
    values: list[float]
    n_base: int = 0
    n_parity: int = 0
    d_active: int = 0
    dprime_active: int = 0

    @property
    def n_parameters(self) -> int:
        return symspace.dimension(self.m, 2) ** 2

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def underdetermined(self) -> bool:
        return self.n_rows < self.n_parameters

    def feasible_dimension(self) -> int:
        return self.n_parameters - self.n_rows


def parameter_count(m: int) -> int:
    """m^2 (m+1)^2 / 4 real parameters of a Hermitian two-boson operator."""
    return symspace.dimension(m, 2) ** 2


def base_constraint_count(m: int) -> int:
    """Contraction-freeness (m^2) plus energy conservation (1)."""
    return m * m + 1


_BASE_ROW_CACHE: dict = {}


def _base_rows(m: int, W: np.ndarray, parities: tuple[int, ...] | None) -> tuple[list[np.ndarray], int, int]:
    key = (m, W.tobytes(), parities)
    hit = _BASE_ROW_CACHE.get(key)
    if hit is not None:
        return hit
    rows: list[np.ndarray] = []
    for F in hermitian_basis(m):
        rows.append(_row_from_gradient(_lift_adjoint(F, m, 2)))
    U2 = symspace._embedding_matrix(m, 2)
    rows.append(_row_from_gradient(U2.T @ W @ U2))
    n_base = len(rows)
    n_parity = 0
    if parities is not None:
        n = parameter_count(m)
        for k in parity_row_indices(m, parities):
            row = np.zeros(n)
            row[k] = 1.0
            rows.append(row)
        n_parity = len(rows) - n_base
    _BASE_ROW_CACHE[key] = (rows, n_base, n_parity)
    return rows, n_base, n_parity


_NULLSPACE_CACHE: dict = {}


def _standing_nullspace(rows: tuple[bytes, ...], A0: np.ndarray) -> np.ndarray:
    key = rows
    hit = _NULLSPACE_CACHE.get(key)
    if hit is not None:
        return hit
    _, sv, vt = np.linalg.svd(A0)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0] if len(sv) else 1.0)))
    V = vt[rank:].T
    _NULLSPACE_CACHE[key] = V
    return V


def base_system(m: int, N: int, W: np.ndarray, parities: tuple[int, ...] | None = None) -> ConstraintSystem:
    """Standing rows: contraction-free, energy-conserving, optional parity."""
    rows, n_base, n_parity = _base_rows(m, np.asarray(W), parities)
    return ConstraintSystem(m, N, list(rows), [0.0] * len(rows),
                            n_base=n_base, n_parity=n_parity)


def add_rho_rows(sys: ConstraintSystem, vecs: np.ndarray, targets: np.ndarray) -> None:
    """One row <v|C|v> = target per eigenvector column."""
    for col, target in zip(vecs.T, targets):
        sys.rows.append(_row_from_gradient(np.outer(col, col.conj())))
        sys.values.append(float(target))
        sys.d_active += 1


def add_k_rows(sys: ConstraintSystem, vecs: np.ndarray, targets: np.ndarray) -> None:
    """One row <w|dK(C)|w> = target per K-matrix eigenvector column."""
    kp = _kpert_of_basis(sys.m) * (1.0 - 1.0 / sys.N)
    for col, target in zip(vecs.T, targets):
        F = np.outer(col, col.conj())
        sys.rows.append(np.einsum("ij,aji->a", F, kp).real)
        sys.values.append(float(target))
        sys.dprime_active += 1


def least_norm_correction(sys: ConstraintSystem, floor: float = 1e-4) -> np.ndarray:
    """Minimum-Frobenius-norm Hermitian C_2 satisfying all equality rows.

    The standing rows (contraction-free, energy, parity; all zero targets) are
    enforced exactly by working inside their nullspace; the eigenvalue rows
    are then met in the least-squares sense.  Near-degenerate active clusters
    produce nearly parallel projected gradients whose per-member targets can
    only be met up to eta * gap, so residuals up to `floor` (times the target
    scale) are resolved in the least-squares sense; anything larger is a
    genuinely contradictory system and raises InfeasibleCorrection.
    """
    n_standing = sys.n_base + sys.n_parity
    A = np.asarray(sys.rows)
    b = np.asarray(sys.values)
    if np.any(np.abs(b[:n_standing]) > 0):
        raise ValueError("standing rows must have zero targets")
    if n_standing == 0:
        V = np.eye(sys.n_parameters)
    else:
        V = _standing_nullspace(tuple(r.tobytes() for r in sys.rows[:n_standing]),
                                A[:n_standing])
    A1 = np.atleast_2d(A[n_standing:])
    b1 = np.asarray(b[n_standing:], dtype=float)
    if len(b1) == 0:
        return np.zeros((symspace.dimension(sys.m, 2),) * 2, dtype=complex)
    norms = np.linalg.norm(A1, axis=1)
    norms[norms == 0] = 1.0
    M = (A1 / norms[:, None]) @ V
    b1n = b1 / norms
    # absolute singular-value cutoff: rows are unit-normalized gradients, so
    # components below 1e-10 are projections onto numerically dead directions
    U_, s_, Vt_ = np.linalg.svd(M, full_matrices=False)
    keep = s_ > 1e-10
    z = Vt_[keep].T @ ((U_[:, keep].T @ b1n) / s_[keep])
    residual = float(np.max(np.abs(M @ z - b1n)))
    scale = max(1.0, float(np.max(np.abs(b1n))))
    if residual > floor * scale:
        raise InfeasibleCorrection(residual)
    return from_params(V @ z, symspace.dimension(sys.m, 2))


@dataclass(frozen=True)
class PurifyResult:
    rho2: np.ndarray
    iterations: int
    converged: bool
    d_last: int
    dprime_last: int
    total_norm: float
    pt_residual: float = 0.0
    energy_residual: float = 0.0


def _gauge_aligned_spectrum(mat: np.ndarray, prev_vecs: np.ndarray | None,
                            cluster_tol: float = 1e-6):
    """Eigendecomposition with the basis of each near-degenerate cluster
    aligned (orthogonal Procrustes) to a previous evaluation.

    Within a cluster the eigenbasis is gauge freedom; an arbitrary per-call
    gauge makes the correction rows jump between integrator stages.  Aligned
    vectors keep Rayleigh quotients inside the cluster, so the damping targets
    stay consistent.
    """
    vals, vecs = np.linalg.eigh(mat)
    if prev_vecs is None:
        return vals, vecs
    n = len(vals)
    i = 0
    while i < n:
        j = i + 1
        while j < n and vals[j] - vals[j - 1] < cluster_tol:
            j += 1
        if j - i >= 2:
            Vc = vecs[:, i:j]
            M = Vc.conj().T @ prev_vecs[:, i:j]
            U_, _, Vt_ = np.linalg.svd(M)
            vecs[:, i:j] = Vc @ (U_ @ Vt_)
        else:
            phase = prev_vecs[:, i].conj() @ vecs[:, i]
            if abs(phase) > 0:
                vecs[:, i] *= phase / abs(phase)
        i = j
    vals = np.real(np.einsum("ij,ij->j", vecs.conj(), mat @ vecs))
    return vals, vecs


def _active_sets(rho2: np.ndarray, m: int, N: int, epsilon: float,
                 gauge: dict | None = None):
    if gauge is None:
        dvals, dvecs = repres.spectrum(rho2, tol=1e-8)
        K = repres.k_matrix_from_rho2(rho2, m, N)
        kvals, kvecs = repres.spectrum(K, tol=1e-8)
    else:
        dvals, dvecs = _gauge_aligned_spectrum(rho2, gauge.get("rho"))
        K = repres.k_matrix_from_rho2(rho2, m, N)
        kvals, kvecs = _gauge_aligned_spectrum(K, gauge.get("K"))
        gauge["rho"] = dvecs
        gauge["K"] = kvecs
    dsel = dvals < epsilon
    ksel = kvals < epsilon
    return (dvals[dsel], dvecs[:, dsel]), (kvals[ksel], kvecs[:, ksel])


def purify(rho2: np.ndarray, N: int, cfg: CorrectionConfig, W: np.ndarray,
           parities: tuple[int, ...] | None = None) -> PurifyResult:
    """Iterative minimal-invasive purification of the 2-RDM.

    Each iteration shifts the eigenvalues below the threshold to zero in first
    order; non-convergence after max_iter is flagged, not fatal.
    """
    m = symspace_dim_inverse(rho2.shape[0])
    mat = np.array(rho2, dtype=complex)
    total_norm = 0.0
    pt_worst = en_worst = 0.0
    d_last = dprime_last = 0
    for it in range(cfg.max_iter):
        (dvals, dvecs), (kvals, kvecs) = _active_sets(mat, m, N, cfg.epsilon)
        d_last, dprime_last = len(dvals), len(kvals)
        if d_last == 0 and dprime_last == 0:
            return PurifyResult(mat, it, True, 0, 0, total_norm, pt_worst, en_worst)
        sys = base_system(m, N, W, parities)
        add_rho_rows(sys, dvecs, -dvals)
        add_k_rows(sys, kvecs, -kvals)
        C = least_norm_correction(sys)
        mat = mat + C
        total_norm += float(np.linalg.norm(C))
        pt_res, en_res = correction_residuals(C, m, W)
        pt_worst = max(pt_worst, pt_res)
        en_worst = max(en_worst, en_res)
    return PurifyResult(mat, cfg.max_iter, False, d_last, dprime_last, total_norm,
                        pt_worst, en_worst)


def symspace_dim_inverse(dim: int) -> int:
    """Mode count m with C(m+1, 2) = dim (inverse of the 2-particle dimension)."""
    m = int((math.isqrt(8 * dim + 1) - 1) // 2)
    if m * (m + 1) // 2 != dim:
        raise ValueError(f"{dim} is not a two-boson symmetric dimension")
    return m


def corrected_rhs_matrix(rho2: np.ndarray, ops: "_bbgky.ModelOperators",
                         cfg: CorrectionConfig,
                         parities: tuple[int, ...] | None = None,
                         gauge: dict | None = None,
                         ) -> tuple[np.ndarray, CorrectionEvent | None]:
    """EOM correction at truncation order 2: the uncorrected derivative plus the
    least-norm C that forces eigenvalues below threshold onto d lambda/dt =
    -eta lambda (and likewise for the K spectrum through its linearization).

    Passing a persistent `gauge` dict keeps the eigenbases of near-degenerate
    clusters continuous between calls, which the step-size controller needs.
    """
    if ops.obar != 2:
        raise ValueError("EOM correction is implemented at truncation order 2 only")
    m = ops.m
    R = _bbgky.rhs_matrix(rho2, ops)
    # rows fade in linearly over a narrow band below the threshold so the
    # corrected derivative is continuous; below the band the damping law is
    # enforced exactly
    eps_on = cfg.epsilon
    eps_full = cfg.epsilon - cfg.activation_band
    (dvals, dvecs), (kvals, kvecs) = _active_sets(rho2, m, ops.N, eps_on, gauge)
    if len(dvals) == 0 and len(kvals) == 0:
        return R, None

    def weight(lam: float) -> float:
        return min(1.0, (eps_on - lam) / (eps_on - eps_full))

    sys = base_system(m, ops.N, ops.W, parities)
    if len(dvals):
        weights = np.array([weight(lam) for lam in dvals])
        targets = np.array([
            -cfg.eta * lam - float(np.real(v.conj() @ R @ v))
            for lam, v in zip(dvals, dvecs.T)
        ])
        # the row gradient is the outer product of the vector with itself, so
        # sqrt-scaled columns scale rows and targets alike
        add_rho_rows(sys, dvecs * np.sqrt(weights), weights * targets)
    if len(kvals):
        Kdot = repres.k_matrix_linear(R, symspace.partial_trace_matrix(R, m, 2, 1), m, ops.N)
        weights = np.array([weight(xi) for xi in kvals])
        targets = np.array([
            -cfg.eta * xi - float(np.real(w.conj() @ Kdot @ w))
            for xi, w in zip(kvals, kvecs.T)
        ])
        add_k_rows(sys, kvecs * np.sqrt(weights), weights * targets)
    C = least_norm_correction(sys)
    pt_res, en_res = correction_residuals(C, m, ops.W)
    event = CorrectionEvent(d=len(dvals), dprime=len(kvals), norm=float(np.linalg.norm(C)),
                            pt_residual=pt_res, energy_residual=en_res)
    return R + C, event
