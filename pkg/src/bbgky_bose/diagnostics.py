"""Figure-level observables and the trajectory record structure."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import symspace


def imbalance(rho1: np.ndarray) -> float:
    """(N_L - N_R)/N from a trace-one 2x2 one-particle RDM; out-of-range values
    are reported as-is, never clamped (unphysicality is data)."""
    if rho1.shape != (2, 2):
        raise ValueError("imbalance needs a two-mode 1-RDM")
    return float((rho1[0, 0] - rho1[1, 1]).real)


def natural_populations(rho: np.ndarray) -> np.ndarray:
    """Eigenvalues sorted descending."""
    return np.linalg.eigvalsh(rho)[::-1]


def trace_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Half the trace-class norm of A - B; in [0, 1] for density operators,
    larger values are legitimate output for non-representable states."""
    if A.shape != B.shape:
        raise ValueError("operators live on different bases")
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(A - B))))


def observable_bound_holds(A: np.ndarray, rho_a: np.ndarray, rho_b: np.ndarray,
                           slack: float = 1e-10) -> bool:
    """|tr(A rho_a) - tr(A rho_b)| <= 2 ||A||_1 D(rho_a, rho_b)."""
    lhs = abs(np.trace(A @ (rho_a - rho_b)))
    norm1 = np.sum(np.abs(np.linalg.eigvalsh(A)))
    return bool(lhs <= 2.0 * norm1 * trace_distance(rho_a, rho_b) + slack)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Everything extracted at one emission time."""

    t: float
    rho: dict[int, np.ndarray]            # order -> occupation-basis matrix
    nps: dict[int, np.ndarray]            # order -> descending eigenvalues
    k_eigs: np.ndarray | None
    imbalance: float
    energy: float
    trace: float
    steps: int
    correction: dict | None = None


@dataclass
class Trajectory:
    """Time-indexed record of one run."""

    m: int
    N: int
    obar: int | None                      # None for the exact reference
    records: list[TrajectoryRecord] = field(default_factory=list)
    termination: str = "completed"
    label: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, extractor) -> np.ndarray:
        return np.array([extractor(r) for r in self.records])


def t_neg(traj: Trajectory, o: int, epsilon: float = -1e-10) -> float | None:
    """First emission time at which the lowest order-o natural population drops
    below the threshold; None if that never happens."""
    for rec in traj.records:
        if o in rec.nps and rec.nps[o][-1] < epsilon:
            return rec.t
    return None


def build_record(t: float, rho_top: np.ndarray, m: int, obar: int, N: int,
                 steps: int, k_matrix_fn, energy_fn,
                 correction: dict | None = None) -> TrajectoryRecord:
    """Standard record: traced-down family, spectra, imbalance, energy."""
    rho = {obar: rho_top}
    for o in range(obar, 1, -1):
        rho[o - 1] = symspace._trace_one(rho[o], m, o)
    nps = {o: natural_populations(mat) for o, mat in rho.items()}
    k_eigs = None
    if obar >= 2 and k_matrix_fn is not None:
        k_eigs = np.linalg.eigvalsh(k_matrix_fn(rho[2], rho[1]))
    return TrajectoryRecord(
        t=t,
        rho=rho,
        nps=nps,
        k_eigs=k_eigs,
        imbalance=imbalance(rho[1]) if m == 2 else float("nan"),
        energy=energy_fn(rho_top) if energy_fn is not None else float("nan"),
        trace=float(np.trace(rho_top).real),
        steps=steps,
        correction=correction,
    )
