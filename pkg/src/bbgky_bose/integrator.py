"""Adaptive embedded Runge-Kutta propagation of the packed RDM state.

A Dormand-Prince 5(4) pair with PI step-size control advances the real vector
holding the lower triangle of rho_obar.  Steps are clipped so that every
multiple of the write-out interval is hit exactly; a per-interval step budget
turns runaway step shrinkage (the stiffness signature of the unstable
truncated hierarchy) into a diagnosed StiffnessAbort instead of a stall.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Dormand-Prince 5(4), FSAL
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    dt: float = 0.1
    t_final: float = 10.0
    max_steps_per_dt: int = 10**6
    method: str = "dopri5"

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("dt and t_final must be > 0")
        if self.method != "dopri5":
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0

    @property
    def total(self) -> int:
        return self.accepted + self.rejected


class StiffnessAbort(Exception):
    """Step budget exhausted inside one write-out interval.

    Carries everything observed up to the last good emission time.
    """

    def __init__(self, t: float, steps: int, payload=None):
        self.t_abort = t
        self.steps = steps
        self.payload = payload
        super().__init__(f"integrator exceeded step budget ({steps}) before t = {t:.3f}")


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


class Dopri5:
    """One-trajectory stepper; holds the FSAL slot and the PI controller state."""

    def __init__(self, f: Callable[[float, np.ndarray], np.ndarray],
                 t0: float, y0: np.ndarray, rtol: float, atol: float):
        self.f = f
        self.t = t0
        self.y = np.array(y0, dtype=float)
        self.rtol = rtol
        self.atol = atol
        self.f_last = f(t0, self.y)
        self.h = _initial_step(f, t0, self.y, self.f_last, rtol, atol)
        self.err_prev = 1.0

    def step_to(self, t_end: float, budget: StepStats, max_steps: int,
                h_ceiling=None) -> None:
        """Advance to exactly t_end, raising StiffnessAbort when over budget.

        `h_ceiling(t, y) -> float` caps individual steps, e.g. to resolve
        activation events the error estimate cannot see.
        """
        while self.t < t_end - 1e-14 * max(1.0, abs(t_end)):
            if budget.total >= max_steps:
                raise StiffnessAbort(self.t, budget.total)
            h = min(self.h, t_end - self.t)
            if h_ceiling is not None:
                h = min(h, max(h_ceiling(self.t, self.y), 1e-8))
            clipped = h < self.h
            k = np.empty((7, len(self.y)))
            k[0] = self.f_last
            for i in range(1, 7):
                yi = self.y + h * (k[:i].T @ _A[i])
                k[i] = self.f(self.t + _C[i] * h, yi)
            y_new = self.y + h * (k.T @ _B)
            err_vec = h * (k.T @ _E)
            if not np.all(np.isfinite(y_new)):
                err = 2.0
            else:
                err = _error_norm(err_vec, self.y, y_new, self.rtol, self.atol)
            if err <= 1.0 or h <= 1e-13 * max(1.0, abs(self.t)):
                budget.accepted += 1
                self.t = self.t + h
                self.y = y_new
                self.f_last = k[6]  # FSAL
                fac = 0.9 * max(err, 1e-10) ** -0.14 * self.err_prev ** 0.08
                self.err_prev = max(err, 1e-10)
                h_next = h * min(5.0, max(0.2, fac))
                if not clipped or h_next < self.h:
                    self.h = h_next
            else:
                budget.rejected += 1
                if not np.all(np.isfinite(y_new)):
                    self.h = h * 0.25
                else:
                    self.h = h * min(1.0, max(0.2, 0.9 * err**-0.2))
        self.t = t_end

    def restart_from(self, y: np.ndarray) -> None:
        """Reset the FSAL cache after an external state modification."""
        self.y = np.array(y, dtype=float)
        self.f_last = self.f(self.t, self.y)


@dataclass
class IntegrationResult:
    """Emission-time states plus bookkeeping, before observable extraction."""

    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    steps_per_emission: list[int] = field(default_factory=list)
    termination: str = "completed"
    t_reached: float = 0.0


def integrate(rho0, rhs_fn, cfg: IntegratorConfig, N: int | None = None):
    """Propagate a trace-one Hermitian state object, emitting a Trajectory of
    records (traced-down family, spectra, step counts) at every multiple of
    the write-out interval.

    `rhs_fn(matrix) -> matrix` is the equation of motion on the occupation
    basis; hermiticity is exact by the packed lower-triangle storage.
    """
    from . import bbgky, diagnostics

    dim = rho0.basis.dim
    m, obar = rho0.m, rho0.o
    traj = diagnostics.Trajectory(m=m, N=N if N is not None else obar, obar=obar)

    def f(t, y):
        return bbgky.pack_hermitian(rhs_fn(bbgky.unpack_hermitian(y, dim)))

    def observe(t, y, steps):
        traj.records.append(diagnostics.build_record(
            t, bbgky.unpack_hermitian(y, dim), m, obar, traj.N, steps,
            k_matrix_fn=None, energy_fn=None))

    try:
        integrate_packed(f, bbgky.pack_hermitian(rho0.matrix), cfg, observe=observe)
    except StiffnessAbort as abort:
        traj.termination = "StiffnessAbort"
        abort.payload = traj
        raise
    return traj


def integrate_packed(f, y0: np.ndarray, cfg: IntegratorConfig,
                     transform=None, observe=None, h_ceiling=None) -> IntegrationResult:
    """Propagate y' = f(t, y), emitting at every multiple of the write-out
    interval.  `transform(t, y) -> y` runs at each boundary before emission
    (purification hook); `observe(t, y, steps)` runs after; `h_ceiling(t, y)`
    caps individual step sizes.
    """
    n_emissions = int(round(cfg.t_final / cfg.dt))
    if abs(n_emissions * cfg.dt - cfg.t_final) > 1e-9 * cfg.t_final:
        raise ValueError("t_final must be a multiple of dt")
    result = IntegrationResult()
    y = np.array(y0, dtype=float)
    if transform is not None:
        y = transform(0.0, y)
    result.times.append(0.0)
    result.states.append(y.copy())
    result.steps_per_emission.append(0)
    if observe is not None:
        observe(0.0, y, 0)
    stepper = Dopri5(f, 0.0, y, cfg.rtol, cfg.atol)
    for i in range(1, n_emissions + 1):
        t_target = i * cfg.dt
        budget = StepStats()
        try:
            stepper.step_to(t_target, budget, cfg.max_steps_per_dt, h_ceiling)
        except StiffnessAbort as abort:
            result.termination = "StiffnessAbort"
            result.t_reached = result.times[-1]
            abort.payload = result
            raise
        y_out = stepper.y
        if transform is not None:
            y_new = transform(t_target, y_out)
            if y_new is not y_out:
                stepper.restart_from(y_new)
                y_out = y_new
        result.times.append(t_target)
        result.states.append(np.array(y_out))
        result.steps_per_emission.append(budget.total)
        if observe is not None:
            observe(t_target, y_out, budget.total)
    result.t_reached = result.times[-1]
    return result
