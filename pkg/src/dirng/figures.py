"""Data generation for the min-entropy rate figures and the two-CHSH heat map.

Each figure writes CSV files plus a small matplotlib script that renders them;
nothing here draws images itself.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from .guessing import GPQuery, guessing_probability_point
from .protocol import (CSV_COLUMNS, XR_CHOICES, CampaignSpec, rows_to_csv, run_campaign,
                       summarize)
from .quantum import reference_device
from .scenario import (CHSH_SCENARIO, InputDistribution, chsh_variant, correlators,
                       expression_set, tilted_beta, tilted_chsh)

# Full-scale settings: n from 1e2 to 3e18 with 300 repetitions.
FULL_N_RANGE = (1e2, 3e18)
FULL_REPETITIONS = 300
DESK_N_POINTS = 12
DESK_REPETITIONS = 20
DESK_GRID = 41

SERIES = {
    1: [("chsh", "all"), ("tilted", "all"), ("I_p_all", "all")],
    2: [("chsh", "all"), ("tilted", "all"), ("I_p_all", "all"),
        ("chsh", "10"), ("tilted", "10"), ("I_p", "10")],
    4: [("chsh", "all"), ("h", "all"), ("chsh", "10"), ("I_p", "10"), ("h", "10")],
    5: [("e", "10"), ("g", "10"), ("h", "10")],
}


def n_grid(points: int = DESK_N_POINTS, lo: float = FULL_N_RANGE[0],
           hi: float = FULL_N_RANGE[1]) -> list[int]:
    grid = np.logspace(math.log10(lo), math.log10(hi), points)
    # three significant digits keep the grid readable and exact as integers
    return sorted({int(Decimal(f"{float(v):.3g}")) for v in grid})


def asymptotes(visibility: float = 0.99, theta: float = math.pi / 8, level: int = 2) -> dict:
    """Point-query min-entropies of the simulated device (full behavior and tilted CHSH)."""
    p = reference_device(visibility, theta)
    pi = InputDistribution.uniform(CHSH_SCENARIO)
    g = expression_set("g", pi)
    tilted = tilted_chsh(tilted_beta(theta), pi)
    out = {}
    for xr in ("10", "all"):
        q = GPQuery.point(g, correlators(p, pi=pi), XR_CHOICES[xr], level)
        out[f"H_p_{xr}"] = guessing_probability_point(q.lower, q).h
        q = GPQuery.point([tilted], [tilted(p)], XR_CHOICES[xr], level)
        out[f"H_tilted_{xr}"] = guessing_probability_point(q.lower, q).h
    return out


def _kv_csv(d: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "value"])
    for k in sorted(d):
        w.writerow([k, repr(float(d[k]))])
    return buf.getvalue()


RATE_SCRIPT = '''"""Render figure {fig} from the CSV files next to this script."""
import csv
import pathlib

import matplotlib.pyplot as plt

here = pathlib.Path(__file__).parent
rows = list(csv.DictReader(open(here / "figure{fig}_summary.csv")))
asym = {{r["name"]: float(r["value"]) for r in csv.DictReader(open(here / "figure{fig}_asymptotes.csv"))}}
series = sorted({{(r["expression_set"], r["xr"]) for r in rows}})
fig, ax = plt.subplots(figsize=(6, 4))
for name, xr in series:
    pts = sorted((int(r["n"]), float(r["rate_first"]), float(r["rate_min"]), float(r["rate_max"]))
                 for r in rows if r["expression_set"] == name and r["xr"] == xr)
    n = [p[0] for p in pts]
    line, = ax.plot(n, [max(p[1], 0) for p in pts], label=f"{{name}}, Xr={{xr}}")
    ax.fill_between(n, [max(p[2], 0) for p in pts], [max(p[3], 0) for p in pts],
                    color=line.get_color(), alpha=0.2)
ax.axhline(asym["H_p_10"], ls="--", color="k", lw=0.8)
ax.axhline(asym["H_p_all"], ls=":", color="k", lw=0.8)
ax.set_xscale("log")
ax.set_xlabel("n")
ax.set_ylabel("min-entropy rate")
ax.legend(fontsize=7)
fig.savefig(here / "figure{fig}.pdf", bbox_inches="tight")
'''

HEATMAP_SCRIPT = '''"""Render the two-CHSH guessing-probability heat map."""
import csv
import pathlib

import matplotlib.pyplot as plt
import numpy as np

here = pathlib.Path(__file__).parent
rows = list(csv.DictReader(open(here / "figure6_grid.csv")))
f1 = sorted({{float(r["f1"]) for r in rows}})
f2 = sorted({{float(r["f2"]) for r in rows}})
G = np.full((len(f1), len(f2)), np.nan)
for r in rows:
    if r["status"] == "optimal":
        G[f1.index(float(r["f1"])), f2.index(float(r["f2"]))] = float(r["g"])
fig, ax = plt.subplots(figsize=(5, 4))
im = ax.imshow(G.T, origin="lower", extent=(f1[0], f1[-1], f2[0], f2[-1]))
ax.plot([-2, 2, 2, -2, -2], [-2, -2, 2, 2, -2], "w:")
t = np.linspace(0, 2 * np.pi, 400)
ax.plot(np.sqrt(8) * np.cos(t), np.sqrt(8) * np.sin(t), "w-", lw=0.6)
ax.set_xlabel("CHSH00")
ax.set_ylabel("CHSH01")
fig.colorbar(im, label="G")
fig.savefig(here / "figure6.pdf", bbox_inches="tight")
'''


@dataclass(frozen=True)
class HeatmapPoint:
    i: int
    j: int
    f1: float
    f2: float
    g: float
    status: str


def heatmap(resolution: int = DESK_GRID, level: int = 2, gen_inputs=((0, 0),)) -> list[HeatmapPoint]:
    """G(CHSH00, CHSH01) on a square grid spanning the quantum disc.

    Grid points outside the disc are solved as well; they come back
    infeasible with the ``g = 1`` convention.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    radius = 2 * math.sqrt(2)
    exprs = [chsh_variant(0, 0), chsh_variant(0, 1)]
    half = (resolution - 1) / 2
    out = []
    for i in range(resolution):
        for j in range(resolution):
            f = [radius * (i - half) / half, radius * (j - half) / half]
            q = GPQuery.point(exprs, f, gen_inputs, level)
            r = guessing_probability_point(f, q)
            out.append(HeatmapPoint(i, j, f[0], f[1], r.g, r.status))
    return out


def heatmap_csv(points: list[HeatmapPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "f1", "f2", "g", "status"])
    for p in points:
        w.writerow([p.i, p.j, repr(p.f1), repr(p.f2), repr(float(p.g)), p.status])
    return buf.getvalue()


def generate(figure: int, out_dir, repetitions: int = DESK_REPETITIONS,
             points: int = DESK_N_POINTS, resolution: int = DESK_GRID, seed: int = 0,
             level: int = 2, jobs: int = 1) -> list[Path]:
    """Write the data and plot script of one figure; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def write(name: str, text: str):
        path = out / name
        path.write_text(text)
        written.append(path)

    if figure == 6:
        write("figure6_grid.csv", heatmap_csv(heatmap(resolution, level)))
        write("figure6_plot.py", HEATMAP_SCRIPT.format())
        return written
    if figure not in SERIES:
        raise ValueError(f"unknown figure {figure}; choose from 1, 2, 4, 5, 6")
    spec = CampaignSpec(master_seed=seed, level=level)
    rows = []
    for name, xr in SERIES[figure]:
        rows += run_campaign(spec, n_grid(points), [name], [xr], repetitions, jobs)
    write(f"figure{figure}_runs.csv", rows_to_csv(rows, CSV_COLUMNS + ("penalty",)))
    summary = summarize(rows)
    write(f"figure{figure}_summary.csv",
          rows_to_csv(summary, ("n", "expression_set", "xr", "rate_first", "rate_min",
                                "rate_max", "penalty_first", "repetitions")))
    write(f"figure{figure}_asymptotes.csv", _kv_csv(asymptotes(level=level)))
    write(f"figure{figure}_plot.py", RATE_SCRIPT.format(fig=figure))
    return written
