"""Spot benchmark, reputational equilibrium and comparative statics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .model import (
    Contract,
    CostFunction,
    DomainError,
    EquilibriumResult,
    FocReport,
    MarketParams,
    ModelCatalog,
    UpstreamModel,
    UserPopulation,
    ValidationError,
    binding_type,
    continuation_value,
    delta_lower,
    effort_cost,
    enforcement_price,
    hallucination_prob,
    lifetime_value,
    participation_values,
    per_period_utility,
    rent_factor,
    rent_term,
    survival_discount,
    welfare,
)

INV_PHI = (math.sqrt(5) - 1) / 2
PARTICIPATION_TOL = 1e-10
FOC_TOL = 1e-8


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    effort_grid_points: int = 2048
    refine_tolerance: float = 1e-9
    h_floor: float = 1e-6
    fd_step: float = 1e-5
    model_tiebreak: str = "LowerFee"  # or "FirstInCatalog"

    def __post_init__(self):
        if self.effort_grid_points < 16:
            raise ValidationError("effort_grid_points must be >= 16")
        if not 0 < self.refine_tolerance < 1:
            raise ValidationError("refine_tolerance must lie in (0, 1)")
        if not 0 < self.h_floor < 1:
            raise ValidationError("h_floor must lie in (0, 1)")
        if not 0 < self.fd_step < 1:
            raise ValidationError("fd_step must lie in (0, 1)")
        if self.model_tiebreak not in ("LowerFee", "FirstInCatalog"):
            raise ValidationError(f"unknown model_tiebreak {self.model_tiebreak!r}")

    def effort_max(self, model: UpstreamModel, beta: float) -> float:
        if not self.h_floor < model.baseline_hallucination:
            raise ValidationError(
                f"h_floor {self.h_floor} must be below the baseline hallucination of model {model.id}")
        return math.log(model.baseline_hallucination / self.h_floor) / beta


# -- scalar search primitives ------------------------------------------------

def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Maximise a unimodal f on [lo, hi] to a bracket width of tol."""
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
    return c if fc >= fd else d


def bisect_boundary(g: Callable[[float], float], inside: float, outside: float,
                    tol: float = 1e-13, max_iter: int = 200) -> float:
    """Boundary of {g >= 0} between a feasible and an infeasible point.

    Returns the endpoint on the feasible side, so g(result) >= 0 always.
    """
    for _ in range(max_iter):
        if abs(outside - inside) <= tol * max(1.0, abs(inside)):
            break
        mid = 0.5 * (inside + outside)
        if g(mid) >= 0:
            inside = mid
        else:
            outside = mid
    return inside


# -- derivatives -------------------------------------------------------------

def _surplus(model, effort, pop, cost, params):
    h = hallucination_prob(model, effort, params.beta)
    c = effort_cost(cost, effort)
    return ((1 - h) * pop.v_avg - h * pop.alpha_avg - model.wholesale_fee - c) \
        / survival_discount(h, params.delta)


def welfare_slope(model: UpstreamModel, effort: float, pop: UserPopulation, cost: CostFunction,
                  params: MarketParams) -> float:
    """Analytic dW/de for effort > 0."""
    beta, delta = params.beta, params.delta
    h = model.baseline_hallucination * math.exp(-beta * effort)
    dh = -beta * h
    c = cost.a * effort ** cost.gamma
    dc = cost.derivative(effort)
    denom = 1 - delta * (1 - h)
    num = (1 - h) * pop.v_avg - h * pop.alpha_avg - model.wholesale_fee - c
    dnum = -dh * (pop.v_avg + pop.alpha_avg) - dc
    d_surplus = (dnum * denom - num * delta * dh) / denom ** 2
    gap = -model.baseline_hallucination * math.expm1(-beta * effort)
    d_rent = (dc * gap - c * beta * h) / (delta * gap ** 2)
    return d_surplus - d_rent


def _central(f, x, step):
    return (f(x + step) - f(x - step)) / (2 * step)


def foc_residual(model: UpstreamModel, effort: float, pop: UserPopulation, cost: CostFunction,
                 params: MarketParams, fd_step: float = 1e-5) -> FocReport:
    """Finite-difference check of the first-order condition at effort."""
    if not effort > 0:
        raise DomainError(f"FOC residual needs effort > 0, got {effort}")
    step = min(fd_step * max(1.0, effort), effort / 2)
    lhs = _central(lambda e: _surplus(model, e, pop, cost, params), effort, step)
    rhs = _central(lambda e: rent_term(model, e, cost, params), effort, step)
    s2 = min(math.sqrt(fd_step) * max(1.0, effort), effort / 2)
    w = lambda e: welfare(model, e, pop, cost, params)  # noqa: E731
    second = w(effort + s2) - 2 * w(effort) + w(effort - s2)
    return FocReport(effort=effort, lhs_derivative=float(lhs), rhs_derivative=float(rhs),
                     residual=float(lhs - rhs), second_order_ok=bool(second < 0))


def _corner_report(model, pop, cost, params, fd_step) -> FocReport:
    step = fd_step
    lhs = (_surplus(model, step, pop, cost, params) - _surplus(model, 0.0, pop, cost, params)) / step
    rhs = rent_term(model, step, cost, params) / step
    w0 = welfare(model, 0.0, pop, cost, params)
    w1 = welfare(model, math.sqrt(fd_step), pop, cost, params)
    return FocReport(effort=0.0, lhs_derivative=float(lhs), rhs_derivative=float(rhs),
                     residual=float(lhs - rhs), second_order_ok=bool(w1 < w0), corner=True)


def cross_partial(model: UpstreamModel, effort: float, pop: UserPopulation,
                  params: MarketParams) -> float:
    """d^2 W / (de dmu), closed form."""
    if not effort > 0:
        raise DomainError(f"cross partial needs effort > 0, got {effort}")
    if not 0 < params.delta < 1:
        raise DomainError(f"cross partial needs 0 < delta < 1, got {params.delta}")
    h = float(hallucination_prob(model, effort, params.beta))
    dv = pop.high.v - pop.low.v
    da = pop.high.alpha - pop.low.alpha
    return params.beta * h * (dv + (1 - params.delta) * da) / survival_discount(h, params.delta) ** 2


# -- effort optimisation -----------------------------------------------------

def _refine(model, pop, cost, params, cfg, lo, hi):
    """Golden-section on [lo, hi], then root-polish dW/de when it changes sign."""
    w = lambda e: float(welfare(model, e, pop, cost, params))  # noqa: E731
    e = golden_section_max(w, lo, hi, cfg.refine_tolerance)
    # golden section cannot resolve a flat maximum below ~sqrt(eps); polish on the slope
    slope = lambda x: welfare_slope(model, x, pop, cost, params)  # noqa: E731
    width = 1e-6
    while width < hi - lo:
        a, b = max(lo, e - width), min(hi, e + width)
        if a <= 1e-6:
            break
        if slope(a) > 0 > slope(b):
            return brentq(slope, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        width *= 4
    return e


def optimal_effort(model: UpstreamModel, pop: UserPopulation, cost: CostFunction,
                   params: MarketParams, cfg: SolverConfig = SolverConfig()):
    """Unconstrained maximiser of W(m, .) on [0, e_max] with its FOC report."""
    if not params.delta > 0:
        raise DomainError("optimal_effort needs delta > 0; use spot_equilibrium at delta = 0")
    e_max = cfg.effort_max(model, params.beta)
    grid = np.linspace(0.0, e_max, cfg.effort_grid_points)
    values = welfare(model, grid, pop, cost, params)
    i = int(np.argmax(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    e = _refine(model, pop, cost, params, cfg, lo, hi)
    if i == 0 and welfare(model, e, pop, cost, params) <= values[0]:
        return 0.0, _corner_report(model, pop, cost, params, cfg.fd_step)
    return e, foc_residual(model, e, pop, cost, params, cfg.fd_step)


def _participation_margin(model, pop, cost, params):
    def g(e):
        vh, vl = participation_values(model, e, pop, cost, params)
        return float(min(vh, vl))
    return g


def _segments(mask: np.ndarray):
    """Index ranges [i0, i1] of consecutive True runs."""
    idx = np.flatnonzero(np.diff(np.concatenate(([0], mask.astype(np.int8), [0]))))
    return list(zip(idx[0::2], idx[1::2] - 1))


def constrained_effort(model: UpstreamModel, pop: UserPopulation, cost: CostFunction,
                       params: MarketParams, cfg: SolverConfig = SolverConfig()):
    """Maximise W(m, .) subject to V_H >= 0 and V_L >= 0.

    Returns (effort, regime, FocReport or None), or None when no effort level
    on [0, e_max] satisfies participation.
    """
    e_u, report = optimal_effort(model, pop, cost, params, cfg)
    g = _participation_margin(model, pop, cost, params)
    if g(e_u) >= -PARTICIPATION_TOL:
        return e_u, ("corner" if e_u == 0 else "interior"), report

    e_max = cfg.effort_max(model, params.beta)
    grid = np.linspace(0.0, e_max, cfg.effort_grid_points)
    vh, vl = participation_values(model, grid, pop, cost, params)
    feasible = (vh >= 0) & (vl >= 0)
    values = welfare(model, grid, pop, cost, params)
    w = lambda e: float(welfare(model, e, pop, cost, params))  # noqa: E731

    best = None
    for i0, i1 in _segments(feasible):
        left = grid[0] if i0 == 0 else bisect_boundary(g, grid[i0], grid[i0 - 1])
        right = grid[-1] if i1 == len(grid) - 1 else bisect_boundary(g, grid[i1], grid[i1 + 1])
        candidates = [(w(left), left), (w(right), right)]
        j = i0 + int(np.argmax(values[i0:i1 + 1]))
        lo, hi = max(left, grid[max(j - 1, 0)]), min(right, grid[min(j + 1, len(grid) - 1)])
        if hi > lo:
            e = _refine(model, pop, cost, params, cfg, lo, hi)
            candidates.append((w(e), e))
        wv, e = max(candidates)
        if best is None or wv > best[0]:
            best = (wv, e, left, right)
    if best is None:
        return None
    _, e, left, right = best
    tol = 10 * cfg.refine_tolerance
    if e == 0:
        return 0.0, "corner", _corner_report(model, pop, cost, params, cfg.fd_step)
    if abs(e - left) <= tol or abs(e - right) <= tol:
        return e, "boundary", foc_residual(model, e, pop, cost, params, cfg.fd_step)
    return e, "interior", foc_residual(model, e, pop, cost, params, cfg.fd_step)


# -- equilibria --------------------------------------------------------------

def _pick(candidates, tiebreak: str):
    """candidates: (welfare, catalog_index, model, payload). Highest welfare wins."""
    top = max(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] == top]
    if tiebreak == "LowerFee":
        tied.sort(key=lambda c: (c[2].wholesale_fee, c[1]))
    else:
        tied.sort(key=lambda c: c[1])
    return tied[0]


def spot_equilibrium(catalog: ModelCatalog, pop: UserPopulation,
                     tiebreak: str = "LowerFee") -> EquilibriumResult:
    """Zero-effort contract priced at the wholesale fee (no shadow of the future)."""
    if not len(catalog):
        raise ConfigurationError("empty model catalog")
    candidates = []
    for idx, m in enumerate(catalog):
        h0 = m.baseline_hallucination
        uh = per_period_utility(pop.high, h0, m.wholesale_fee)
        ul = per_period_utility(pop.low, h0, m.wholesale_fee)
        candidates.append((pop.mu * uh + (1 - pop.mu) * ul, idx, m, (uh, ul)))
    obj, _, m, (uh, ul) = _pick(candidates, tiebreak)
    return EquilibriumResult(
        active=bool(uh >= 0 and ul >= 0),
        contract=Contract(m, m.wholesale_fee, 0.0),
        hallucination_rate=m.baseline_hallucination,
        welfare=float(obj),
        value_high=float(uh),
        value_low=float(ul),
        agent_value=0.0,
        rent_factor=math.nan,
        delta_lower=math.nan,
        binding_type=binding_type(pop, m.baseline_hallucination),
        kappa=pop.kappa,
        regime="spot",
    )


def _result(model, effort, regime, report, pop, cost, params, feasible=True) -> EquilibriumResult:
    h = float(hallucination_prob(model, effort, params.beta))
    price = float(enforcement_price(model, effort, cost, params))
    contract = Contract(model, price, effort)
    vh = float(lifetime_value(pop.high, h, price, params.delta))
    vl = float(lifetime_value(pop.low, h, price, params.delta))
    if effort > 0:
        r = float(rent_factor(model, effort, params))
        dl = float(delta_lower(model, effort, pop.low, cost, params.beta))
    else:
        r, dl = math.nan, math.nan
    participates = vh >= -PARTICIPATION_TOL and vl >= -PARTICIPATION_TOL
    patient = effort == 0 or params.delta >= dl - PARTICIPATION_TOL
    return EquilibriumResult(
        active=bool(feasible and participates and patient),
        contract=contract,
        hallucination_rate=h,
        welfare=float(welfare(model, effort, pop, cost, params)),
        value_high=vh,
        value_low=vl,
        agent_value=float(continuation_value(contract, cost, params)),
        rent_factor=r,
        delta_lower=dl,
        binding_type=binding_type(pop, h),
        kappa=pop.kappa,
        regime=regime,
        foc=report,
    )


def solve_equilibrium(catalog: ModelCatalog, pop: UserPopulation, cost: CostFunction,
                      params: MarketParams, cfg: SolverConfig = SolverConfig()) -> EquilibriumResult:
    """Welfare-maximising (m*, e*) under participation, with the activity check."""
    if not len(catalog):
        raise ConfigurationError("empty model catalog")
    if params.delta == 0:
        raise DomainError("delta = 0 has no enforceable effort; route to spot_equilibrium")
    feasible, unconstrained = [], []
    for idx, m in enumerate(catalog):
        sol = constrained_effort(m, pop, cost, params, cfg)
        if sol is not None:
            e, regime, report = sol
            feasible.append((float(welfare(m, e, pop, cost, params)), idx, m, (e, regime, report)))
        else:
            e, report = optimal_effort(m, pop, cost, params, cfg)
            unconstrained.append((float(welfare(m, e, pop, cost, params)), idx, m,
                                  (e, "corner" if e == 0 else "interior", report)))
    if feasible:
        _, _, m, (e, regime, report) = _pick(feasible, cfg.model_tiebreak)
        return _result(m, e, regime, report, pop, cost, params)
    _, _, m, (e, regime, report) = _pick(unconstrained, cfg.model_tiebreak)
    return _result(m, e, regime, report, pop, cost, params, feasible=False)


def solve(catalog: ModelCatalog, pop: UserPopulation, cost: CostFunction, params: MarketParams,
          cfg: SolverConfig = SolverConfig()) -> EquilibriumResult:
    """Dispatch: spot benchmark at delta = 0, reputational equilibrium otherwise."""
    if params.delta == 0:
        return spot_equilibrium(catalog, pop, cfg.model_tiebreak)
    return solve_equilibrium(catalog, pop, cost, params, cfg)


# -- comparative statics -----------------------------------------------------

@dataclass(frozen=True)
class SchedulePoint:
    mu: float
    result: EquilibriumResult


def comparative_static_mu(catalog: ModelCatalog, pop: UserPopulation, cost: CostFunction,
                          params: MarketParams, mu_grid: Sequence[float],
                          cfg: SolverConfig = SolverConfig(), threads: int = 1):
    """Equilibrium schedule over mu, ordered by grid index."""
    mu_grid = [float(x) for x in mu_grid]
    if any(b <= a for a, b in zip(mu_grid, mu_grid[1:])):
        raise ValidationError("mu grid must be strictly increasing")
    if any(not 0 < x < 1 for x in mu_grid):
        raise ValidationError("mu grid must lie inside (0, 1)")

    def one(mu):
        return SchedulePoint(mu, solve(catalog, pop.with_mu(mu), cost, params, cfg))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, mu_grid))
    return [one(mu) for mu in mu_grid]


def monotonicity_violations(points: Sequence[SchedulePoint], tol: float = 0.0):
    """Consecutive pairs on a common model where effort fails to increase.

    Pairs of interior points must increase strictly; any other active pair
    must not decrease by more than tol.
    """
    bad = []
    for p, q in zip(points, points[1:]):
        a, b = p.result, q.result
        if not (a.active and b.active) or a.model.id != b.model.id:
            continue
        if a.regime == "interior" and b.regime == "interior":
            if not b.effort > a.effort:
                bad.append((p.mu, q.mu))
        elif b.effort < a.effort - tol:
            bad.append((p.mu, q.mu))
    return bad


def welfare_crossing(model_a: UpstreamModel, model_b: UpstreamModel, pop: UserPopulation,
                     cost: CostFunction, params: MarketParams, lo: float, hi: float,
                     cfg: SolverConfig = SolverConfig(), tol: float = 1e-6) -> float:
    """Bisect the mu at which W_B - W_A changes sign inside [lo, hi]."""
    def diff(mu):
        p = pop.with_mu(mu)
        wa = solve(ModelCatalog([model_a]), p, cost, params, cfg).welfare
        wb = solve(ModelCatalog([model_b]), p, cost, params, cfg).welfare
        return wb - wa

    dlo = diff(lo)
    if dlo * diff(hi) > 0:
        raise ValueError("no sign change of W_B - W_A in the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        dm = diff(mid)
        if (dm > 0) == (dlo > 0):
            lo, dlo = mid, dm
        else:
            hi = mid
    return 0.5 * (lo + hi)
