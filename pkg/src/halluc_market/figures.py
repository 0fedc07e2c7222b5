"""SVG line charts rendered purely from sweep CSVs."""

from __future__ import annotations

import logging
from collections import OrderedDict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sweep import read_crossings, read_csv, write_crossings, write_csv  # noqa: E402
from . import sweep as sweeps  # noqa: E402

log = logging.getLogger(__name__)

FILES = {
    "effort_delta": "fig1a_effort_by_delta",
    "effort_beta": "fig1b_effort_by_beta",
    "welfare": "fig3_welfare_by_model",
}


def _save(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": "halluc-market", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _series(rows, key):
    """Group rows into ordered series; inactive points become gaps."""
    groups = OrderedDict()
    for r in rows:
        xs, ys = groups.setdefault(r[key], ([], []))
        xs.append(r["mu"])
        ys.append(r["effort"] if r["active"] else float("nan"))
    return groups


def render_effort_chart(csv_path, svg_path, key: str, label: str) -> None:
    rows = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for level, (xs, ys) in _series(rows, key).items():
        ax.plot(xs, ys, marker=".", label=f"{label} = {level:g}")
    ax.set_xlabel("share of high-type users μ")
    ax.set_ylabel("equilibrium effort e*")
    ax.legend()
    fig.tight_layout()
    _save(fig, svg_path)


def render_welfare_chart(csv_path, crossing_path, svg_path) -> None:
    rows = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    by_model = OrderedDict()
    for r in rows:
        xs, ys = by_model.setdefault(r["model"], ([], []))
        xs.append(r["mu"])
        ys.append(r["welfare"] if r["active"] else float("nan"))
    for style, (model, (xs, ys)) in zip(("-", "--", ":", "-."), by_model.items()):
        ax.plot(xs, ys, style, label=f"model {model}")
    crossings = read_crossings(crossing_path)
    for x in crossings:
        ax.axvline(x, color="grey", linewidth=0.8)
        ax.annotate(f"μ† = {x:.3f}", (x, ax.get_ylim()[0]), xytext=(4, 8),
                    textcoords="offset points", fontsize=8)
    if not crossings:
        log.warning("no model-switch point in %s; chart has no crossing marker", csv_path)
    ax.set_xlabel("share of high-type users μ")
    ax.set_ylabel("welfare W")
    ax.legend()
    fig.tight_layout()
    _save(fig, svg_path)


def write_figures(sc, out_dir, threads: int = 1) -> list:
    """Compute the three figure CSVs, then render each chart from its CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: (out / f"{v}.csv", out / f"{v}.svg") for k, v in FILES.items()}
    crossing_csv = out / "fig3_crossing.csv"

    write_csv(sweeps.figure_effort_by_delta(sc, threads), paths["effort_delta"][0])
    write_csv(sweeps.figure_effort_by_beta(sc, threads), paths["effort_beta"][0])
    welfare_rows = sweeps.figure_welfare_by_model(sc, threads)
    write_csv(welfare_rows, paths["welfare"][0])
    write_crossings(sweeps.model_switch_points(sc, welfare_rows), crossing_csv)

    render_effort_chart(*paths["effort_delta"], key="delta", label="δ")
    render_effort_chart(*paths["effort_beta"], key="beta", label="β")
    render_welfare_chart(paths["welfare"][0], crossing_csv, paths["welfare"][1])
    return [p for pair in paths.values() for p in pair] + [crossing_csv]
