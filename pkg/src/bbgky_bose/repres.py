"""Representability diagnostics: the one-particle-one-hole matrix and spectra.

The K-matrix is the un-subtracted Gram form <a^dag_i a_j a^dag_l a_k>,
assembled from the ordered embeddings of the 2- and 1-RDM and divided by N^2.
It is Hermitian, PSD on any N-particle state, and exactly affine-linear in
(rho_2, rho_1); its trace is [N(N-1) + m N] / N^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import symspace
from .bbgky import Rdm
from .symspace import SymOperator


@dataclass(frozen=True)
class KMatrix:
    """One-particle-one-hole matrix on ordered pairs (i, j), scaled by 1/N^2."""

    m: int
    N: int
    matrix: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def _ordered_pair_embedding(rho2: np.ndarray, m: int) -> np.ndarray:
    U = symspace._embedding_matrix(m, 2)
    return U @ rho2 @ U.T


def k_matrix_linear(rho2: np.ndarray, rho1: np.ndarray, m: int, N: int) -> np.ndarray:
    """The affine-linear map behind the K-matrix, applied to arbitrary
    (order-2, order-1) occupation-basis inputs."""
    M2 = _ordered_pair_embedding(rho2, m)
    K = np.zeros((m * m, m * m), dtype=complex)
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    val = N * (N - 1) * M2[i * m + l, k * m + j]
                    if j == l:
                        val += N * rho1[i, k]
                    K[i * m + j, k * m + l] = val
    return K / (N * N)


def k_matrix(rho2: Rdm, rho1: Rdm, N: int, tol: float = 1e-8) -> KMatrix:
    """K from a compatible (rho_2, rho_1) pair; raises if they disagree."""
    if rho2.o != 2 or rho1.o != 1:
        raise ValueError("expected a 2-RDM and a 1-RDM")
    m = rho2.m
    traced = symspace.partial_trace_matrix(rho2.matrix, m, 2, 1)
    dev = float(np.max(np.abs(traced - rho1.matrix)))
    if dev > tol:
        raise ValueError(f"rho_1 is not the contraction of rho_2: deviation {dev:.3e}")
    return KMatrix(m, N, k_matrix_linear(rho2.matrix, rho1.matrix, m, N))


def k_matrix_from_rho2(rho2: np.ndarray, m: int, N: int) -> np.ndarray:
    """K built from rho_2 alone, contracting internally."""
    rho1 = symspace.partial_trace_matrix(rho2, m, 2, 1)
    return k_matrix_linear(rho2, rho1, m, N)


def k_perturbation(C: SymOperator | np.ndarray, m: int, N: int, tol: float = 1e-10) -> np.ndarray:
    """K-matrix response to a contraction-free 2-particle perturbation C.

    Exactly linear: k_matrix(rho_2 + s C) - k_matrix(rho_2) = s * result.
    """
    mat = C.matrix if isinstance(C, SymOperator) else np.asarray(C, dtype=complex)
    contraction = symspace.partial_trace_matrix(mat, m, 2, 1)
    if float(np.max(np.abs(contraction))) > tol:
        raise ValueError("perturbation is not contraction-free")
    return k_perturbation_unchecked(mat, m, N)


def k_perturbation_unchecked(mat: np.ndarray, m: int, N: int) -> np.ndarray:
    C_ord = _ordered_pair_embedding(mat, m)
    dK = np.zeros((m * m, m * m), dtype=complex)
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    dK[i * m + j, k * m + l] = C_ord[i * m + l, k * m + j]
    return (1.0 - 1.0 / N) * dK


def spectrum(A: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors with a fixed phase
    convention: the largest-magnitude component of each vector is real positive."""
    A = np.asarray(A)
    herm_dev = float(np.max(np.abs(A - A.conj().T)))
    if herm_dev > tol:
        raise ValueError(f"matrix is not Hermitian: deviation {herm_dev:.3e}")
    vals, vecs = np.linalg.eigh(A)
    for i in range(vecs.shape[1]):
        j = int(np.argmax(np.abs(vecs[:, i])))
        pivot = vecs[j, i]
        if abs(pivot) > 0:
            vecs[:, i] *= np.conj(pivot) / abs(pivot)
    return vals, vecs
