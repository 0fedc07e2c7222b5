"""Parameter sweeps, CSV emission and the figure-data recipes."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .model import ModelCatalog, ValidationError
from .scenario import Scenario
from .solver import solve, welfare_crossing

log = logging.getLogger(__name__)

AXES = ("mu", "delta", "beta")
HEADER = ["mu", "delta", "beta", "model", "effort", "price", "hallucination", "welfare",
          "v_high", "v_low", "delta_lower", "binding", "active"]


@dataclass(frozen=True)
class SweepRow:
    mu: float
    delta: float
    beta: float
    model: str
    effort: float
    price: float
    hallucination: float
    welfare: float
    v_high: float
    v_low: float
    delta_lower: float
    binding: str
    active: bool

    def cells(self) -> list:
        out = []
        for name in HEADER:
            value = getattr(self, name)
            if isinstance(value, bool):
                out.append("true" if value else "false")
            elif isinstance(value, float):
                out.append(format_number(value))
            else:
                out.append(str(value))
        return out


def format_number(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def validate_grid(axis: str, grid: Sequence[float]) -> None:
    if axis not in AXES:
        raise ValidationError(f"invalid sweep axis {axis!r}; expected one of {', '.join(AXES)}")
    if not grid:
        raise ValidationError("sweep grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("sweep grid must be strictly increasing")
    bounds = {
        "mu": lambda x: 0 <= x <= 1,
        "delta": lambda x: 0 <= x < 1,
        "beta": lambda x: x > 0,
    }[axis]
    bad = [x for x in grid if not bounds(x)]
    if bad:
        raise ValidationError(f"{axis} grid values outside admissible range: {bad}")


def solve_point(sc: Scenario, mu: float, delta: float, beta: float,
                model_id: Optional[str] = None) -> SweepRow:
    catalog = sc.catalog if model_id is None else ModelCatalog([sc.catalog.get(model_id)])
    r = solve(catalog, sc.population(mu), sc.cost, sc.params(delta, beta), sc.solver)
    return SweepRow(mu, delta, beta, r.model.id, r.effort, r.price, r.hallucination_rate,
                    r.welfare, r.value_high, r.value_low, r.delta_lower, r.binding_type.value,
                    r.active)


def sweep(sc: Scenario, axis: str, grid: Sequence[float], model_id: Optional[str] = None,
          threads: int = 1, levels: Optional[dict] = None) -> list:
    """One row per grid point per combination of the other axes' levels.

    Levels of the non-swept axes come from ``levels`` when given, else from the
    scenario's value lists. Rows are grouped by level combination, grid-ordered.
    """
    grid = [float(x) for x in grid]
    validate_grid(axis, grid)
    levels = dict(levels or {})
    for name, values in (("mu", sc.mu), ("delta", sc.delta), ("beta", sc.beta)):
        levels.setdefault(name, values)
    others = [a for a in AXES if a != axis]
    jobs = []
    for combo in itertools.product(*(levels[a] for a in others)):
        for x in grid:
            point = dict(zip(others, combo))
            point[axis] = x
            jobs.append(point)

    def one(point):
        return solve_point(sc, point["mu"], point["delta"], point["beta"], model_id)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, jobs))
    return [one(p) for p in jobs]


def write_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for row in rows:
            w.writerow(row.cells())


def read_csv(path) -> list:
    """Rows as dicts with numeric fields converted to float."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in HEADER:
            if key in ("model", "binding"):
                continue
            if key == "active":
                row[key] = row[key] == "true"
            else:
                row[key] = float(row[key])
    return rows


# -- figure recipes ----------------------------------------------------------

def _mu_grid(sc: Scenario):
    grid = sc.figures.mu_grid or tuple(round(0.05 * i, 12) for i in range(1, 20))
    return grid


def figure_effort_by_delta(sc: Scenario, threads: int = 1) -> list:
    deltas = sc.figures.delta_levels or sc.delta
    return sweep(sc, "mu", _mu_grid(sc), sc.figures.effort_model, threads,
                 levels={"delta": deltas, "beta": sc.beta[:1]})


def figure_effort_by_beta(sc: Scenario, threads: int = 1) -> list:
    betas = sc.figures.beta_levels or sc.beta
    return sweep(sc, "mu", _mu_grid(sc), sc.figures.effort_model, threads,
                 levels={"delta": sc.delta[:1], "beta": betas})


def figure_welfare_by_model(sc: Scenario, threads: int = 1) -> list:
    rows = []
    for m in sc.catalog:
        rows.extend(sweep(sc, "mu", _mu_grid(sc), m.id, threads,
                          levels={"delta": sc.delta[:1], "beta": sc.beta[:1]}))
    return rows


def model_switch_points(sc: Scenario, rows: Sequence[SweepRow], tol: float = 1e-6) -> list:
    """Bisected mu where W of the second catalog model overtakes the first (or back)."""
    if len(sc.catalog) < 2:
        return []
    a, b = sc.catalog.models[:2]
    wa = {r.mu: r.welfare for r in rows if r.model == a.id}
    wb = {r.mu: r.welfare for r in rows if r.model == b.id}
    grid = sorted(set(wa) & set(wb))
    out = []
    for lo, hi in zip(grid, grid[1:]):
        dlo, dhi = wb[lo] - wa[lo], wb[hi] - wa[hi]
        if dlo == 0:
            out.append(lo)
        elif dlo * dhi < 0:
            out.append(welfare_crossing(a, b, sc.population(), sc.cost, sc.params(), lo, hi,
                                        sc.solver, tol))
    if not out:
        log.warning("W_%s - W_%s does not change sign on the mu grid; no crossing", b.id, a.id)
    return out


def write_crossings(points: Sequence[float], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mu_cross"])
        for x in points:
            w.writerow([format_number(x)])


def read_crossings(path) -> list:
    if not Path(path).exists():
        return []
    with open(path, encoding="utf-8", newline="") as fh:
        return [float(r["mu_cross"]) for r in csv.DictReader(fh)]
