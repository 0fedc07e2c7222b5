"""Scenario files: INI-style sections of key = value lines.

Numbers may be written as decimals or fractions (``a = 1/8``). Keys that take
a grid accept a comma list (``0.75, 0.85, 0.95``) or a range
``start:stop:step`` with the stop included.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .model import (
    CostFunction,
    MarketParams,
    ModelCatalog,
    UpstreamModel,
    UserPopulation,
    UserType,
    ValidationError,
)
from .sim import SimConfig
from .solver import SolverConfig

PRESET_DIR = Path(__file__).parent / "presets"


class ScenarioError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, where: Optional[str] = None):
        self.line, self.where = line, where
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if where:
            loc.append(where)
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)


@dataclass(frozen=True)
class FigureRecipe:
    mu_grid: tuple = ()
    delta_levels: tuple = ()
    beta_levels: tuple = ()
    effort_model: Optional[str] = None


@dataclass(frozen=True)
class Scenario:
    high: UserType
    low: UserType
    mu: tuple
    delta: tuple
    beta: tuple
    cost: CostFunction
    catalog: ModelCatalog
    solver: SolverConfig = SolverConfig()
    sim: SimConfig = SimConfig()
    figures: FigureRecipe = field(default_factory=FigureRecipe)

    def population(self, mu: Optional[float] = None) -> UserPopulation:
        return UserPopulation(self.high, self.low, self.mu[0] if mu is None else mu)

    def params(self, delta: Optional[float] = None, beta: Optional[float] = None) -> MarketParams:
        return MarketParams(self.delta[0] if delta is None else delta,
                            self.beta[0] if beta is None else beta)


def parse_number(text: str) -> float:
    text = text.strip()
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def parse_grid(text: str) -> tuple:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (parse_number(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"empty or reversed range {text!r}")
        n = int(round((stop - start) / step))
        if start + n * step > stop + 1e-9 * step:
            n -= 1
        return tuple(round(start + i * step, 12) for i in range(n + 1))
    return tuple(parse_number(p) for p in text.split(",") if p.strip())


_SCHEMA = {
    "population": {"v_high", "alpha_high", "v_low", "alpha_low", "mu"},
    "market": {"delta", "beta"},
    "cost": {"a", "gamma"},
    "solver": {f.name for f in fields(SolverConfig)},
    "sim": {f.name for f in fields(SimConfig)},
    "figures": {f.name for f in fields(FigureRecipe)},
    "model": {"fee", "h0"},
}
_REQUIRED = {
    "population": {"v_high", "alpha_high", "v_low", "alpha_low", "mu"},
    "market": {"delta", "beta"},
    "cost": {"a", "gamma"},
    "model": {"fee", "h0"},
}


def _line_index(text: str):
    """Map (section, key) and section names to 1-based source lines."""
    where, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = no
        elif section and "=" in s and not s.startswith(("#", ";")):
            where[(section, s.split("=", 1)[0].strip().lower())] = no
    return where


def loads(text: str) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    lines = _line_index(text)

    def fail(msg, section, key=None):
        raise ScenarioError(msg, lines.get((section, key)),
                            f"[{section}] {key}" if key else f"[{section}]")

    models, seen = [], {}
    for section in cp.sections():
        kind = "model" if section.startswith("model ") else section
        if kind not in _SCHEMA:
            fail(f"unknown section {section!r}", section)
        for key in cp[section]:
            if key not in _SCHEMA[kind]:
                fail(f"unknown key {key!r}", section, key)
        missing = _REQUIRED.get(kind, set()) - set(cp[section])
        if missing:
            fail(f"missing key(s) {', '.join(sorted(missing))}", section)
        seen[section] = kind
    for kind in ("population", "market", "cost"):
        if kind not in seen:
            raise ScenarioError(f"missing section [{kind}]")
    if "model" not in seen.values():
        raise ScenarioError("catalog is empty: add at least one [model <id>] section")

    def num(section, key):
        try:
            return parse_number(cp[section][key])
        except ValueError as exc:
            fail(str(exc), section, key)

    def grid(section, key):
        try:
            values = parse_grid(cp[section][key])
        except ValueError as exc:
            fail(str(exc), section, key)
        if not values:
            fail("empty value list", section, key)
        return values

    def integer(section, key):
        value = num(section, key)
        if value != int(value):
            fail(f"expected an integer, got {cp[section][key]!r}", section, key)
        return int(value)

    try:
        high = UserType(num("population", "v_high"), num("population", "alpha_high"))
        low = UserType(num("population", "v_low"), num("population", "alpha_low"))
        mus = grid("population", "mu")
        for mu in mus:
            UserPopulation(high, low, mu)
    except ValidationError as exc:
        fail(str(exc), "population")
    try:
        deltas, betas = grid("market", "delta"), grid("market", "beta")
        for d in deltas:
            for b in betas:
                MarketParams(d, b)
    except ValidationError as exc:
        fail(str(exc), "market")
    try:
        cost = CostFunction(num("cost", "a"), num("cost", "gamma"))
    except ValidationError as exc:
        fail(str(exc), "cost")
    for section, kind in seen.items():
        if kind == "model":
            try:
                models.append(UpstreamModel(section[len("model "):].strip(),
                                            num(section, "fee"), num(section, "h0")))
            except ValidationError as exc:
                fail(str(exc), section)
    try:
        catalog = ModelCatalog(models)
    except ValidationError as exc:
        raise ScenarioError(str(exc), where="catalog") from None

    solver = SolverConfig()
    if "solver" in cp:
        kw = {}
        for key in cp["solver"]:
            if key == "model_tiebreak":
                kw[key] = cp["solver"][key].strip()
            elif key == "effort_grid_points":
                kw[key] = integer("solver", key)
            else:
                kw[key] = num("solver", key)
        try:
            solver = SolverConfig(**kw)
        except ValidationError as exc:
            fail(str(exc), "solver")
    sim = SimConfig()
    if "sim" in cp:
        try:
            sim = SimConfig(**{key: integer("sim", key) for key in cp["sim"]})
        except ValidationError as exc:
            fail(str(exc), "sim")
    figures = FigureRecipe()
    if "figures" in cp:
        kw = {key: grid("figures", key) for key in cp["figures"] if key != "effort_model"}
        if "effort_model" in cp["figures"]:
            kw["effort_model"] = cp["figures"]["effort_model"].strip()
            if kw["effort_model"] not in [m.id for m in catalog]:
                fail(f"unknown model {kw['effort_model']!r}", "figures", "effort_model")
        figures = FigureRecipe(**kw)
    return Scenario(high, low, mus, deltas, betas, cost, catalog, solver, sim, figures)


def load(path) -> Scenario:
    return loads(Path(path).read_text(encoding="utf-8"))


def load_preset(name: str = "baseline") -> Scenario:
    return load(PRESET_DIR / f"{name}.scenario")


def _fmt(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def dumps(sc: Scenario) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["population"] = {
        "v_high": repr(sc.high.v), "alpha_high": repr(sc.high.alpha),
        "v_low": repr(sc.low.v), "alpha_low": repr(sc.low.alpha), "mu": _fmt(sc.mu),
    }
    cp["market"] = {"delta": _fmt(sc.delta), "beta": _fmt(sc.beta)}
    cp["cost"] = {"a": repr(sc.cost.a), "gamma": repr(sc.cost.gamma)}
    for m in sc.catalog:
        cp[f"model {m.id}"] = {"fee": repr(m.wholesale_fee), "h0": repr(m.baseline_hallucination)}
    s = sc.solver
    cp["solver"] = {
        "effort_grid_points": str(s.effort_grid_points), "refine_tolerance": repr(s.refine_tolerance),
        "h_floor": repr(s.h_floor), "fd_step": repr(s.fd_step), "model_tiebreak": s.model_tiebreak,
    }
    sim = {"cohort_size": str(sc.sim.cohort_size), "seed": str(sc.sim.seed)}
    if sc.sim.horizon is not None:
        sim["horizon"] = str(sc.sim.horizon)
    if sc.sim.deviation_period is not None:
        sim["deviation_period"] = str(sc.sim.deviation_period)
    cp["sim"] = sim
    f = sc.figures
    fig = {k: _fmt(getattr(f, k)) for k in ("mu_grid", "delta_levels", "beta_levels") if getattr(f, k)}
    if f.effort_model:
        fig["effort_model"] = f.effort_model
    if fig:
        cp["figures"] = fig
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
