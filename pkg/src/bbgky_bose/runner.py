"""Scenario orchestration: exact reference, truncated and corrected runs.

A scenario expands into one exact reference trajectory (optional) plus one
truncated trajectory per (truncation order, correction mode) pair, all sharing
the emission grid so CSV rows align across runs.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import bbgky, cluster, corrections, diagnostics, dimer, integrator, repres, symspace
from .bbgky import ModelOperators
from .corrections import CorrectionConfig, InfeasibleCorrection
from .diagnostics import Trajectory, TrajectoryRecord
from .dimer import DimerParams
from .integrator import IntegratorConfig, StiffnessAbort


@dataclass(frozen=True)
class ScenarioConfig:
    N: int
    lam: float | None = None
    U: float | None = None
    orders: tuple[int, ...] = ()
    t_final: float = 10.0
    dt: float = 0.1
    modes: tuple[str, ...] = ("none",)
    exact: bool = True
    seed: int = 0
    correction: CorrectionConfig = field(default_factory=CorrectionConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    cluster_orders: int | None = None
    tracedist_orders: tuple[int, ...] = (1, 2, 3, 4)
    closure_strategy: str = "compat"
    cluster_weights: str = "wick"
    divergence_cap: float = 10.0
    out_dir: str | None = None
    threads: int | None = None

    def __post_init__(self):
        if (self.lam is None) == (self.U is None):
            raise ValueError("exactly one of lambda / U must be given")
        if self.N < 2:
            raise ValueError("need N >= 2")
        for o in self.orders:
            if not 2 <= o <= self.N - 1:
                raise ValueError(f"truncation order {o} outside 2..{self.N - 1}")
        for mode in self.modes:
            if mode not in corrections.CORRECTION_MODES:
                raise ValueError(f"unknown correction mode {mode!r}")
        if self.t_final <= 0 or self.dt <= 0:
            raise ValueError("t_final and dt must be > 0")
        if self.closure_strategy not in cluster.CLOSURE_STRATEGIES:
            raise ValueError(f"unknown closure strategy {self.closure_strategy!r}")
        if self.cluster_weights not in cluster.CLUSTER_WEIGHTS:
            raise ValueError(f"unknown cluster weighting {self.cluster_weights!r}")

    @property
    def params(self) -> DimerParams:
        if self.lam is not None:
            return DimerParams.from_lambda(self.N, self.lam)
        return DimerParams(N=self.N, J=1.0, U=self.U)

    def run_matrix(self) -> list[tuple[int, str]]:
        """(order, mode) pairs; correction modes apply at truncation order 2 only."""
        return [(o, mode) for o in self.orders for mode in self.modes
                if mode == "none" or o == 2]

    def run_labels(self) -> list[str]:
        labels = ["exact"] if self.exact else []
        labels += [f"obar{o}_{mode}" for o, mode in self.run_matrix()]
        return labels


@dataclass
class RunOutcome:
    label: str
    trajectory: Trajectory
    termination: str
    wall_time_s: float
    obar: int | None = None
    mode: str = ""
    cluster_norms: list[np.ndarray] | None = None   # per record, orders 1..K
    fock_probs: list[np.ndarray] | None = None
    diagnostic: str = ""


def _emission_times(cfg: ScenarioConfig) -> np.ndarray:
    n = int(round(cfg.t_final / cfg.dt))
    return np.arange(n + 1) * cfg.dt


def run_exact(cfg: ScenarioConfig) -> RunOutcome:
    """Eigendecomposition reference: RDM family, spectra, clusters, Fock probs."""
    started = time.perf_counter()
    params = cfg.params
    N = params.N
    evo = dimer.DimerEvolution(params)
    psi0 = dimer.all_left(N)
    o_max = max([2, *cfg.orders])
    kmax = cfg.cluster_orders if cfg.cluster_orders is not None else min(N, 10)
    kmax = min(kmax, N)
    traj = Trajectory(m=2, N=N, obar=None, label="exact")
    norms: list[np.ndarray] = []
    probs: list[np.ndarray] = []
    for t in _emission_times(cfg):
        psi = evo.evolve(psi0, float(t))
        fam = dimer.exact_rdm_family(psi, max(o_max, kmax))
        rho = {o: fam[o] for o in range(1, o_max + 1)}
        nps = {o: diagnostics.natural_populations(mat) for o, mat in rho.items()}
        k_eigs = np.linalg.eigvalsh(repres.k_matrix_linear(rho[2], rho[1], 2, N))
        traj.records.append(TrajectoryRecord(
            t=float(t), rho=rho, nps=nps, k_eigs=k_eigs,
            imbalance=diagnostics.imbalance(rho[1]),
            energy=evo.energy(psi), trace=float(np.trace(rho[o_max]).real),
            steps=0,
        ))
        cs = cluster._clusters_from_matrices(
            [fam[o] for o in range(1, kmax + 1)], 2, cfg.cluster_weights)
        norms.append(cluster.cluster_norms(cs))
        probs.append(dimer.fock_probabilities(psi))
    return RunOutcome("exact", traj, "completed", time.perf_counter() - started,
                      cluster_norms=norms, fock_probs=probs)


def run_truncated(cfg: ScenarioConfig, obar: int, mode: str) -> RunOutcome:
    """One truncated trajectory, optionally purified or EOM-corrected."""
    started = time.perf_counter()
    params = cfg.params
    N = params.N
    ops = ModelOperators.dimer(params, obar, closure_strategy=cfg.closure_strategy,
                               cluster_weights=cfg.cluster_weights)
    ccfg = replace(cfg.correction, mode=mode, dt=cfg.dt)
    dim = symspace.dimension(2, obar)
    rho0 = dimer.exact_rdm(dimer.all_left(N), obar).matrix
    label = f"obar{obar}_{mode}"
    traj = Trajectory(m=2, N=N, obar=obar, label=label)
    norms: list[np.ndarray] = []

    last_event: list[corrections.CorrectionEvent | None] = [None]

    h_ceiling = None
    if mode == "eom":
        gauge: dict = {}

        def f(t, y):
            rho = bbgky.unpack_hermitian(y, dim)
            R, event = corrections.corrected_rhs_matrix(rho, ops, ccfg, gauge=gauge)
            if event is not None:
                last_event[0] = event
            return bbgky.pack_hermitian(R)

        # resolve threshold crossings: the constrained flow pins eigenvalues
        # just below the threshold, so overshoot equals plunge rate times the
        # step size there, invisible to the error estimate for slow plunges
        margin_memory = [None, None]

        def h_ceiling(t, y):
            rho = bbgky.unpack_hermitian(y, dim)
            lam = float(np.linalg.eigvalsh(rho)[0])
            xi = float(np.min(np.linalg.eigvalsh(
                repres.k_matrix_from_rho2(rho, 2, N))))
            margin = min(lam, xi) - ccfg.epsilon
            prev_t, prev_margin = margin_memory
            margin_memory[0], margin_memory[1] = t, margin
            if margin > 1e-6:
                return np.inf
            if prev_t is not None and t > prev_t and prev_margin is not None:
                rate = (prev_margin - margin) / (t - prev_t)
                if rate > 0:
                    # halve the remaining distance per step near the threshold
                    return max(abs(margin) + ccfg.activation_band, 1e-9) / (2.0 * rate)
            return 1e-4
    else:
        def f(t, y):
            rho = bbgky.unpack_hermitian(y, dim)
            return bbgky.pack_hermitian(bbgky.rhs_matrix(rho, ops))

    transform = None
    if mode == "purify" and ccfg.purify_feedback:
        def transform(t, y):
            rho = bbgky.unpack_hermitian(y, dim)
            res = corrections.purify(rho, N, ccfg, ops.W)
            last_event[0] = corrections.CorrectionEvent(
                d=res.d_last, dprime=res.dprime_last, norm=res.total_norm,
                iterations=res.iterations, converged=res.converged,
                pt_residual=res.pt_residual, energy_residual=res.energy_residual)
            if res.iterations == 0:
                return y
            return bbgky.pack_hermitian(res.rho2)

    def observe(t, y, steps):
        rho = bbgky.unpack_hermitian(y, dim)
        if mode == "purify" and not ccfg.purify_feedback:
            # repair the emitted state only; the trajectory itself continues
            # from the unpurified solution
            res = corrections.purify(rho, N, ccfg, ops.W)
            last_event[0] = corrections.CorrectionEvent(
                d=res.d_last, dprime=res.dprime_last, norm=res.total_norm,
                iterations=res.iterations, converged=res.converged,
                pt_residual=res.pt_residual, energy_residual=res.energy_residual)
            rho = res.rho2
        event = last_event[0]
        last_event[0] = None
        rec = diagnostics.build_record(
            t, rho, 2, obar, N, steps,
            k_matrix_fn=lambda r2, r1: repres.k_matrix_linear(r2, r1, 2, N),
            energy_fn=lambda r: bbgky.energy_matrix(r, ops, obar),
            correction=None if event is None else {
                "d": event.d, "dprime": event.dprime, "norm": event.norm,
                "iterations": event.iterations, "converged": event.converged,
                "pt_residual": event.pt_residual, "energy_residual": event.energy_residual,
            })
        traj.records.append(rec)
        cs = cluster._clusters_from_matrices(
            [rec.rho[o] for o in range(1, obar + 1)], 2, cfg.cluster_weights)
        norms.append(cluster.cluster_norms(cs))
        peak = float(np.max(np.abs(rec.nps[obar])))
        if cfg.divergence_cap and peak > cfg.divergence_cap:
            # integrating deeper into the blow-up only amplifies round-off
            # against the conserved quantities; treat like runaway stiffness
            raise StiffnessAbort(
                t, steps,
                payload=f"state left the physical regime (max |NP| = {peak:.3g})")

    icfg = replace(cfg.integrator, dt=cfg.dt, t_final=cfg.t_final)
    termination = "completed"
    diagnostic = ""
    try:
        integrator.integrate_packed(f, bbgky.pack_hermitian(rho0), icfg,
                                    transform=transform, observe=observe,
                                    h_ceiling=h_ceiling)
    except StiffnessAbort as abort:
        termination = "StiffnessAbort"
        diagnostic = (abort.payload if isinstance(abort.payload, str)
                      else str(abort))
    except InfeasibleCorrection as bad:
        termination = "InfeasibleCorrection"
        diagnostic = str(bad)
    traj.termination = termination
    return RunOutcome(label, traj, termination, time.perf_counter() - started,
                      obar=obar, mode=mode, cluster_norms=norms, diagnostic=diagnostic)


def run_scenario(cfg: ScenarioConfig) -> dict[str, RunOutcome]:
    """Execute every run of the scenario; truncated runs go through a thread pool."""
    outcomes: dict[str, RunOutcome] = {}
    if cfg.exact:
        outcomes["exact"] = run_exact(cfg)
    jobs = cfg.run_matrix()
    workers = cfg.threads or min(len(jobs), 8) or 1
    if jobs:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_truncated, cfg, o, mode): (o, mode) for o, mode in jobs}
            for fut, (o, mode) in futures.items():
                outcome = fut.result()
                outcomes[outcome.label] = outcome
    return outcomes
