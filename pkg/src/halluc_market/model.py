"""Domain types and closed-form quantities of the hallucination-risk market.

Every function here is pure and accepts either floats or numpy arrays for the
effort / probability arguments, so the solver can evaluate whole effort grids
with the same code that the scalar API uses.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

BINDING_TOL = 1e-12


class DomainError(ValueError):
    """An argument lies outside the domain of the formula."""


class SingularInputError(DomainError):
    """The formula is singular at this input (e.g. zero effort in the rent factor)."""


class InfeasibleEnforcementError(DomainError):
    """Positive effort cannot be enforced (no shadow of the future)."""


class ValidationError(ValueError):
    """A domain type invariant is violated."""


class Binding(str, enum.Enum):
    HIGH = "High"
    LOW = "Low"
    BOTH = "Both"


@dataclass(frozen=True)
class UserType:
    v: float
    alpha: float

    def __post_init__(self):
        if not self.v > 0:
            raise ValidationError(f"user valuation v must be > 0, got {self.v}")
        if not self.alpha > 0:
            raise ValidationError(f"hallucination aversion alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class UserPopulation:
    high: UserType
    low: UserType
    mu: float

    def __post_init__(self):
        if not self.high.v > self.low.v:
            raise ValidationError(
                f"invariant v_high > v_low violated ({self.high.v} <= {self.low.v})")
        if not self.high.alpha > self.low.alpha:
            raise ValidationError(
                f"invariant alpha_high > alpha_low violated ({self.high.alpha} <= {self.low.alpha})")
        if not 0.0 <= self.mu <= 1.0:
            raise ValidationError(f"high-type share mu must lie in [0, 1], got {self.mu}")

    @property
    def v_avg(self) -> float:
        return self.mu * self.high.v + (1 - self.mu) * self.low.v

    @property
    def alpha_avg(self) -> float:
        return self.mu * self.high.alpha + (1 - self.mu) * self.low.alpha

    @property
    def kappa(self) -> float:
        """Sensitivity ratio (alpha_H - alpha_L) / (v_H - v_L)."""
        return (self.high.alpha - self.low.alpha) / (self.high.v - self.low.v)

    def with_mu(self, mu: float) -> "UserPopulation":
        return UserPopulation(self.high, self.low, mu)


@dataclass(frozen=True)
class UpstreamModel:
    id: str
    wholesale_fee: float
    baseline_hallucination: float

    def __post_init__(self):
        if not self.wholesale_fee > 0:
            raise ValidationError(f"model {self.id}: wholesale fee must be > 0, got {self.wholesale_fee}")
        if not 0 < self.baseline_hallucination < 1:
            raise ValidationError(
                f"model {self.id}: baseline hallucination must lie in (0, 1), "
                f"got {self.baseline_hallucination}")


@dataclass(frozen=True)
class ModelCatalog:
    models: tuple

    def __init__(self, models: Sequence[UpstreamModel]):
        object.__setattr__(self, "models", tuple(models))
        if not self.models:
            raise ValidationError("model catalog must be non-empty")
        fees = [m.wholesale_fee for m in self.models]
        h0s = [m.baseline_hallucination for m in self.models]
        if len(set(fees)) != len(fees):
            raise ValidationError("wholesale fees must be pairwise distinct across the catalog")
        if len(set(h0s)) != len(h0s):
            raise ValidationError("baseline hallucination rates must be pairwise distinct across the catalog")
        ids = [m.id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValidationError("model ids must be unique")

    def __iter__(self):
        return iter(self.models)

    def __len__(self):
        return len(self.models)

    def get(self, model_id: str) -> UpstreamModel:
        for m in self.models:
            if m.id == model_id:
                return m
        raise KeyError(model_id)


@dataclass(frozen=True)
class CostFunction:
    """Effort cost c(e) = a * e**gamma."""

    a: float = 0.125
    gamma: float = 2.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError(f"cost coefficient a must be > 0, got {self.a}")
        if not self.gamma >= 2:
            raise ValidationError(f"cost exponent gamma must be >= 2, got {self.gamma}")
        if self.gamma != 2:
            log.warning("cost exponent gamma=%s: uniqueness of the optimal effort is only "
                        "guaranteed when c'' is large enough; check second-order diagnostics",
                        self.gamma)

    def __call__(self, effort):
        return effort_cost(self, effort)

    def derivative(self, effort):
        return self.a * self.gamma * np.power(effort, self.gamma - 1)


@dataclass(frozen=True)
class MarketParams:
    delta: float
    beta: float

    def __post_init__(self):
        if not 0 <= self.delta < 1:
            raise ValidationError(f"discount factor delta must lie in [0, 1), got {self.delta}")
        if not self.beta > 0:
            raise ValidationError(f"verification efficacy beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class Contract:
    model: UpstreamModel
    price: float
    effort: float

    def __post_init__(self):
        if not self.effort >= 0:
            raise ValidationError(f"contract effort must be >= 0, got {self.effort}")
        if not math.isfinite(self.price):
            raise ValidationError(f"contract price must be finite, got {self.price}")


@dataclass(frozen=True)
class FocReport:
    effort: float
    lhs_derivative: float
    rhs_derivative: float
    residual: float
    second_order_ok: bool
    corner: bool = False


@dataclass(frozen=True)
class EquilibriumResult:
    active: bool
    contract: Contract
    hallucination_rate: float
    welfare: float
    value_high: float
    value_low: float
    agent_value: float
    rent_factor: float
    delta_lower: float
    binding_type: Binding
    kappa: float
    # interior | boundary | corner | spot
    regime: str = "interior"
    foc: Optional[FocReport] = None

    @property
    def model(self) -> UpstreamModel:
        return self.contract.model

    @property
    def effort(self) -> float:
        return self.contract.effort

    @property
    def price(self) -> float:
        return self.contract.price


# -- closed forms -----------------------------------------------------------

def _check_effort(effort):
    if np.any(np.asarray(effort) < 0):
        raise DomainError(f"effort must be >= 0, got {effort}")


def hallucination_prob(model: UpstreamModel, effort, beta: float):
    _check_effort(effort)
    if not beta > 0:
        raise DomainError(f"beta must be > 0, got {beta}")
    return model.baseline_hallucination * np.exp(-beta * effort)


def _h_gap(model: UpstreamModel, effort, beta: float):
    """h0 - h(e), computed without cancellation for small effort."""
    return -model.baseline_hallucination * np.expm1(-beta * effort)


def effort_cost(cost: CostFunction, effort):
    _check_effort(effort)
    return cost.a * np.power(effort, cost.gamma)


def per_period_utility(user: UserType, h, price):
    if np.any((np.asarray(h) < 0) | (np.asarray(h) > 1)):
        raise DomainError(f"hallucination probability must lie in [0, 1], got {h}")
    return (1 - h) * user.v - h * user.alpha - price


def survival_discount(h, delta: float):
    """Denominator 1 - delta * (1 - h) of every lifetime value."""
    return 1 - delta * (1 - h)


def lifetime_value(user: UserType, h, price, delta: float):
    if not 0 <= delta < 1:
        raise DomainError(f"delta must lie in [0, 1), got {delta}")
    return per_period_utility(user, h, price) / survival_discount(h, delta)


def rent_factor(model: UpstreamModel, effort, params: MarketParams):
    if np.any(np.asarray(effort) <= 0):
        raise SingularInputError("rent factor is singular at zero effort")
    if params.delta == 0:
        raise SingularInputError("rent factor is singular at delta = 0")
    h = hallucination_prob(model, effort, params.beta)
    return survival_discount(h, params.delta) / (params.delta * _h_gap(model, effort, params.beta))


def rent_term(model: UpstreamModel, effort, cost: CostFunction, params: MarketParams):
    """Discounted incentive rent c(e) / (delta (h0 - h)); zero at e = 0 by continuity."""
    effort = np.asarray(effort, dtype=float)
    c = effort_cost(cost, effort)
    positive = effort > 0
    if np.any(positive) and params.delta == 0:
        raise InfeasibleEnforcementError("positive effort cannot be enforced with delta = 0")
    gap = np.where(positive, _h_gap(model, effort, params.beta), 1.0)
    out = np.where(positive, c / (params.delta * gap if params.delta > 0 else 1.0), 0.0)
    return out if out.ndim else float(out)


def enforcement_price(model: UpstreamModel, effort, cost: CostFunction, params: MarketParams):
    """Minimum price k_m + c(e)(1 + R) at which the agent's IC constraint binds."""
    h = hallucination_prob(model, effort, params.beta)
    c = effort_cost(cost, effort)
    markup = rent_term(model, effort, cost, params) * survival_discount(h, params.delta)
    return model.wholesale_fee + c + markup


def continuation_value(contract: Contract, cost: CostFunction, params: MarketParams):
    if not 0 <= params.delta < 1:
        raise DomainError(f"delta must lie in [0, 1), got {params.delta}")
    h = hallucination_prob(contract.model, contract.effort, params.beta)
    c = effort_cost(cost, contract.effort)
    return (contract.price - contract.model.wholesale_fee - c) / survival_discount(h, params.delta)


def ic_holds(contract: Contract, cost: CostFunction, params: MarketParams) -> tuple[bool, float]:
    """Return (holds, slack) for c(e) <= delta [h(m,0) - h(m,e)] V_C."""
    gap = _h_gap(contract.model, contract.effort, params.beta)
    vc = continuation_value(contract, cost, params)
    slack = float(params.delta * gap * vc - effort_cost(cost, contract.effort))
    return slack >= 0, slack


def welfare(model: UpstreamModel, effort, pop: UserPopulation, cost: CostFunction,
            params: MarketParams):
    h = hallucination_prob(model, effort, params.beta)
    c = effort_cost(cost, effort)
    surplus = ((1 - h) * pop.v_avg - h * pop.alpha_avg - model.wholesale_fee - c) \
        / survival_discount(h, params.delta)
    return surplus - rent_term(model, effort, cost, params)


def delta_lower(model: UpstreamModel, effort, low: UserType, cost: CostFunction, beta: float):
    """Activity threshold on the discount factor for positive effort.

    Values >= 1 mean no admissible delta activates the market at this (m, e);
    +inf is returned when the bracket is non-positive.
    """
    if np.any(np.asarray(effort) <= 0):
        raise SingularInputError("activity threshold is undefined at zero effort")
    h = hallucination_prob(model, effort, beta)
    c = effort_cost(cost, effort)
    net = (1 - h) * low.v - h * low.alpha - model.wholesale_fee - c
    bracket = (1 - h) + _h_gap(model, effort, beta) * net / c
    with np.errstate(divide="ignore"):
        out = np.where(bracket > 0, 1.0 / np.where(bracket > 0, bracket, 1.0), np.inf)
    return out if out.ndim else float(out)


def binding_type(pop: UserPopulation, h: float, tol: float = BINDING_TOL) -> Binding:
    if not 0 <= h <= 1:
        raise DomainError(f"hallucination probability must lie in [0, 1], got {h}")
    threshold = 1.0 / (1.0 + pop.kappa)
    if abs(h - threshold) <= tol:
        return Binding.BOTH
    return Binding.HIGH if h > threshold else Binding.LOW


def participation_values(model: UpstreamModel, effort, pop: UserPopulation, cost: CostFunction,
                         params: MarketParams):
    """(V_H, V_L) for the contract priced at the enforcement price."""
    h = hallucination_prob(model, effort, params.beta)
    p = enforcement_price(model, effort, cost, params)
    return (lifetime_value(pop.high, h, p, params.delta),
            lifetime_value(pop.low, h, p, params.delta))
