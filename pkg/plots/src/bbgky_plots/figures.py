"""Panel builders for the six standard figures.

Everything here is presentation: the run directory is opened read-only, the
CSV series are drawn as stored (curves simply stop where aborted runs stop),
and the only selection applied is picking threshold crossings for the
negativity-time chart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_IDS = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6")
FORMATS = ("png", "svg", "pdf")
STYLE_FILE = Path(__file__).parent / "style.mplstyle"
NEG_THRESHOLD = -1e-10


class RenderError(Exception):
    pass


@dataclass(frozen=True)
class PlotSpec:
    input_dir: Path
    figure_id: str
    output: Path
    format: str = "png"

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise RenderError(f"unknown figure id {self.figure_id!r}")
        if self.format not in FORMATS:
            raise RenderError(f"unknown format {self.format!r}")


@dataclass
class RunData:
    label: str
    obar: int | None
    mode: str
    termination: str
    dir: Path

    def table(self, name: str):
        path = self.dir / name
        if not path.exists():
            return None
        return np.genfromtxt(path, delimiter=",", names=True)


class RunDirectory:
    """Manifest-backed view of one bbgky-bose output directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise RenderError(f"no manifest.json under {root}")
        with open(manifest_path) as fh:
            self.manifest = json.load(fh)
        if self.manifest.get("schema") != 1:
            raise RenderError(
                f"unsupported manifest schema {self.manifest.get('schema')!r}, need 1")
        self.runs = [
            RunData(r["label"], r.get("obar"), r.get("mode", ""),
                    r.get("termination", ""), self.root / r["label"])
            for r in self.manifest["runs"]
        ]

    @property
    def exact(self) -> RunData | None:
        for r in self.runs:
            if r.obar is None:
                return r
        return None

    def truncated(self, mode: str | None = None) -> list[RunData]:
        out = [r for r in self.runs if r.obar is not None]
        if mode is not None:
            out = [r for r in out if r.mode == mode]
        return sorted(out, key=lambda r: (r.obar, r.mode))


def _np_matrix(table) -> np.ndarray:
    cols = [c for c in table.dtype.names if c.startswith("np")]
    return np.column_stack([np.atleast_1d(table[c]) for c in cols])


def _notice(ax, text):
    ax.text(0.5, 0.5, text, ha="center", va="center", transform=ax.transAxes,
            fontsize=8, color="0.35")
    ax.set_xticks([])
    ax.set_yticks([])


def _exact_inset(fig, ax, exact, column_fn, ylabel):
    inset = ax.inset_axes([0.62, 0.66, 0.36, 0.32])
    t, series = column_fn(exact)
    for col in np.atleast_2d(series.T):
        inset.plot(t, col, linewidth=0.7)
    inset.set_title("exact", fontsize=7)
    inset.tick_params(labelsize=6)
    return inset


def fig1_imbalance(data: RunDirectory, fig):
    ax = fig.subplots()
    for run in data.truncated(mode="none"):
        tab = run.table("imbalance.csv")
        ax.plot(tab["t"], tab["imbalance"], label=f"order {run.obar}")
    for y in (1.0, -1.0):
        ax.axhline(y, color="k", linestyle=":", linewidth=0.8)
    ax.set_xlabel("t [1/J]")
    ax.set_ylabel("particle-number imbalance")
    ax.legend(ncol=4, loc="lower left")
    exact = data.exact
    if exact is not None:
        tab = exact.table("imbalance.csv")
        _exact_inset(fig, ax, exact, lambda e: (tab["t"], tab["imbalance"]),
                     "imbalance")


def _fig_nps(data: RunDirectory, fig, order: int):
    ax = fig.subplots()
    for run in data.truncated(mode="none"):
        if run.obar < order:
            continue
        tab = run.table(f"np_o{order}.csv")
        if tab is None:
            continue
        series = _np_matrix(tab)
        for i in range(series.shape[1]):
            ax.plot(tab["t"], series[:, i],
                    label=f"order {run.obar}" if i == 0 else None)
    ax.set_xlabel("t [1/J]")
    ax.set_ylabel(f"natural populations of the {order}-RDM")
    ax.legend(ncol=4, loc="upper right")
    exact = data.exact
    if exact is not None:
        tab = exact.table(f"np_o{order}.csv")
        if tab is not None:
            _exact_inset(fig, ax, exact,
                         lambda e: (tab["t"], _np_matrix(tab)), "NP")


def fig2_np1(data, fig):
    _fig_nps(data, fig, 1)


def fig3_np2(data, fig):
    _fig_nps(data, fig, 2)


def _t_neg_from_table(tab) -> float | None:
    lowest = _np_matrix(tab)[:, -1]
    below = np.where(lowest < NEG_THRESHOLD)[0]
    return float(tab["t"][below[0]]) if len(below) else None


def fig4_distance_and_tneg(data: RunDirectory, fig):
    ax_d, ax_t = fig.subplots(2, 1, height_ratios=[3, 2])
    drew = False
    for run in data.truncated(mode="none"):
        for o in (1, 2, 3, 4):
            tab = run.table(f"tracedist_o{o}.csv")
            if tab is None or tab.size == 0:
                continue
            ax_d.plot(np.atleast_1d(tab["t"]), np.atleast_1d(tab["distance"]),
                      linewidth=0.9,
                      label=f"o={o}, order {run.obar}" if run.obar in (2, 9) else None)
            drew = True
    if drew:
        ax_d.axhline(1.0, color="k", linestyle=":", linewidth=0.8)
        ax_d.set_ylabel("trace distance to exact")
        ax_d.set_xlabel("t [1/J]")
        ax_d.legend(ncol=4)
    else:
        _notice(ax_d, "no trace-distance data (exact reference disabled)")
    markers = "osD^v<>ph"
    for i, run in enumerate(data.truncated(mode="none")):
        pts = []
        for o in range(1, run.obar + 1):
            tab = run.table(f"np_o{o}.csv")
            if tab is None:
                continue
            tn = _t_neg_from_table(tab)
            if tn is not None:
                pts.append((o, tn))
        if pts:
            arr = np.array(pts)
            ax_t.plot(arr[:, 0], arr[:, 1], marker=markers[i % len(markers)],
                      linestyle="-", markersize=4, label=f"order {run.obar}")
    ax_t.set_xlabel("RDM order o")
    ax_t.set_ylabel("first negativity time [1/J]")
    if ax_t.lines:
        ax_t.legend(ncol=4, fontsize=6.5)
    else:
        _notice(ax_t, "no negativity events recorded")


def fig5_corrections(data: RunDirectory, fig):
    runs = {r.mode: r for r in data.truncated()}
    order = [m for m in ("none", "purify", "eom") if m in runs]
    if not order:
        raise RenderError("no truncated runs to draw")
    rows = len(order)
    axes = fig.subplots(rows + 1, 2, squeeze=False)
    for i, mode in enumerate(order):
        run = runs[mode]
        ax_np, ax_k = axes[i]
        tab = run.table("np_o2.csv")
        series = _np_matrix(tab)
        for j in range(series.shape[1]):
            ax_np.plot(tab["t"], series[:, j], linewidth=0.8)
        ax_np.set_ylabel(f"{mode}\n2-RDM spectrum", fontsize=7)
        ktab = run.table("kspec.csv")
        if ktab is None:
            _notice(ax_k, "K spectrum not recorded")
        else:
            cols = [c for c in ktab.dtype.names if c.startswith("xi")]
            for c in cols:
                ax_k.plot(ktab["t"], ktab[c], linewidth=0.8)
            ax_k.set_ylabel("K spectrum", fontsize=7)
        ev = run.table("corrections.csv")
        if ev is not None and ev.size:
            for ax in (ax_np, ax_k):
                ax.plot(np.atleast_1d(ev["t"]),
                        np.zeros(ev.size), "|", color="crimson",
                        markersize=3, alpha=0.5)
    ax_steps, ax_unused = axes[rows]
    drew = False
    for mode in order:
        tab = runs[mode].table("steps.csv")
        if tab is not None:
            ax_steps.semilogy(tab["t"], np.maximum(tab["steps"], 1), linewidth=0.8,
                              label=mode)
            drew = True
    if drew:
        ax_steps.set_ylabel("steps per interval", fontsize=7)
        ax_steps.set_xlabel("t [1/J]")
        ax_steps.legend(fontsize=6)
    else:
        _notice(ax_steps, "no step counts recorded")
    ax_unused.axis("off")


def fig6_clusters_and_fock(data: RunDirectory, fig):
    source = data.exact or (data.truncated(mode="none") or [None])[0]
    if source is None:
        raise RenderError("no run with cluster norms")
    ax_c, ax_f = fig.subplots(1, 2)
    tab = source.table("clusternorms.csv")
    if tab is None:
        _notice(ax_c, "no cluster norms recorded")
    else:
        cols = [c for c in tab.dtype.names if c.startswith("c")]
        for i, c in enumerate(cols, start=1):
            ax_c.semilogy(tab["t"], np.maximum(tab[c], 1e-18), linewidth=0.8,
                          label=f"o={i}")
        ax_c.set_xlabel("t [1/J]")
        ax_c.set_ylabel("cluster trace-class norm")
        ax_c.set_ylim(1e-8, None)
        ax_c.legend(ncol=2, fontsize=6)
    ftab = source.table("fockprob.csv") if source else None
    if ftab is None:
        _notice(ax_f, "no Fock probabilities (exact reference disabled)")
    else:
        cols = [c for c in ftab.dtype.names if c.startswith("p")]
        grid = np.column_stack([ftab[c] for c in cols])
        ax_f.imshow(grid.T, aspect="auto", origin="lower", cmap="magma",
                    extent=(ftab["t"][0], ftab["t"][-1], 0, len(cols) - 1))
        ax_f.set_xlabel("t [1/J]")
        ax_f.set_ylabel("atoms in the right well")


_BUILDERS = {
    "fig1": fig1_imbalance,
    "fig2": fig2_np1,
    "fig3": fig3_np2,
    "fig4": fig4_distance_and_tneg,
    "fig5": fig5_corrections,
    "fig6": fig6_clusters_and_fock,
}

_METADATA = {
    "svg": {"Date": None},
    "pdf": {"CreationDate": None},
    "png": None,
}


def render(spec: PlotSpec) -> Path:
    """Draw one figure id from a run directory; deterministic under the pinned
    style (vector ids are salted, timestamps stripped)."""
    data = RunDirectory(spec.input_dir)
    with plt.style.context(str(STYLE_FILE)):
        fig = plt.figure()
        try:
            _BUILDERS[spec.figure_id](data, fig)
            fig.suptitle(f"{spec.figure_id}: N={data.manifest['config']['N']}",
                         fontsize=9)
            out = Path(spec.output)
            out.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out, format=spec.format, metadata=_METADATA[spec.format])
        finally:
            plt.close(fig)
    return Path(spec.output)
