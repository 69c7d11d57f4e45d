"""Numerically exact N-boson solver for the two-site Bose-Hubbard dimer.

The many-body wavefunction lives on the N+1 Fock states |N-n, n> (n atoms in
the right well).  Propagation goes through one eigendecomposition of the
Hamiltonian, so the reference dynamics carries no integrator error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import symspace
from .symspace import sym_operator, SymOperator


@dataclass(frozen=True)
class DimerParams:
    """Two-site Bose-Hubbard parameters; J is the energy unit (hbar = 1)."""

    N: int
    J: float
    U: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"particle count must be >= 1, got {self.N}")
        if self.J <= 0:
            raise ValueError(f"hopping amplitude must be > 0, got {self.J}")

    @property
    def lam(self) -> float:
        """Dimensionless interaction parameter U(N-1)/(2J)."""
        return self.U * (self.N - 1) / (2.0 * self.J)

    @classmethod
    def from_lambda(cls, N: int, lam: float, J: float = 1.0) -> "DimerParams":
        if N < 2:
            raise ValueError("interaction parameter needs N >= 2")
        return cls(N=N, J=J, U=2.0 * J * lam / (N - 1))


@dataclass(frozen=True)
class FockState:
    """Normalized state vector; entry n multiplies |N-n, n>."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        norm = np.linalg.norm(c)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state norm deviates from 1 by {abs(norm - 1.0):.3e}")
        object.__setattr__(self, "coefficients", c)

    @property
    def N(self) -> int:
        return len(self.coefficients) - 1


def all_left(N: int) -> FockState:
    """|N, 0>: every atom in the left well."""
    c = np.zeros(N + 1, dtype=complex)
    c[0] = 1.0
    return FockState(c)


def noon(N: int, theta: float = 0.0) -> FockState:
    """(|N,0> + e^{i theta} |0,N>) / sqrt(2)."""
    c = np.zeros(N + 1, dtype=complex)
    c[0] = 1.0 / np.sqrt(2.0)
    c[N] = np.exp(1j * theta) / np.sqrt(2.0)
    return FockState(c)


def build_hamiltonian(p: DimerParams) -> np.ndarray:
    """(N+1)x(N+1) Bose-Hubbard matrix: -J hopping plus U/2 on-site interaction."""
    N, J, U = p.N, p.J, p.U
    n = np.arange(N + 1)
    H = np.zeros((N + 1, N + 1))
    H[n, n] = 0.5 * U * ((N - n) * (N - n - 1) + n * (n - 1))
    hop = -J * np.sqrt((N - n[:-1]) * (n[:-1] + 1))
    H[n[1:], n[:-1]] = hop
    H[n[:-1], n[1:]] = hop
    return H


class DimerEvolution:
    """Eigendecomposition-backed propagator for one parameter set."""

    def __init__(self, params: DimerParams):
        self.params = params
        self.hamiltonian = build_hamiltonian(params)
        self.energies, self.modes = np.linalg.eigh(self.hamiltonian)

    def evolve(self, psi0: FockState, t: float) -> FockState:
        amps = self.modes.conj().T @ psi0.coefficients
        c = self.modes @ (np.exp(-1j * self.energies * t) * amps)
        c /= np.linalg.norm(c)
        return FockState(c)

    def energy(self, psi: FockState) -> float:
        return float(np.real(psi.coefficients.conj() @ self.hamiltonian @ psi.coefficients))


def evolve(psi0: FockState, p: DimerParams, t: float) -> FockState:
    return DimerEvolution(p).evolve(psi0, t)


def density_matrix(psi: FockState) -> SymOperator:
    """|psi><psi| as an order-N operator in the symmetric two-mode basis.

    The occupation basis of order N, lexicographically descending, is exactly
    |N-n, n| with n ascending, so the Fock coefficients carry over directly.
    """
    c = psi.coefficients
    return sym_operator(2, psi.N, np.outer(c, c.conj()))


def exact_rdm(psi: FockState, o: int) -> SymOperator:
    """Trace-one o-particle reduced density matrix of the N-boson state."""
    N = psi.N
    if not 1 <= o <= N:
        raise ValueError(f"need 1 <= o <= N, got o={o}, N={N}")
    full = density_matrix(psi)
    if o == N:
        return full
    return symspace.partial_trace(full, N - o)


def exact_rdm_family(psi: FockState, o_max: int) -> dict[int, np.ndarray]:
    """Occupation-basis matrices of the 1..o_max RDMs in one trace-down sweep."""
    N = psi.N
    if not 1 <= o_max <= N:
        raise ValueError(f"need 1 <= o_max <= N, got {o_max}")
    mats: dict[int, np.ndarray] = {}
    mat = density_matrix(psi).matrix
    mats[N] = mat
    for q in range(N, 1, -1):
        mat = symspace._trace_one(mat, 2, q)
        mats[q - 1] = mat
    return {o: mats[o] for o in range(1, o_max + 1)}


def fock_probabilities(psi: FockState) -> np.ndarray:
    """Probability of finding n atoms right and N-n left, for n = 0..N."""
    return np.abs(psi.coefficients) ** 2
