"""Monte Carlo simulation of relationships under hallucination risk.

Each simulated user lifetime runs period by period: the user pays the price,
the agent pays the wholesale fee and its effort cost, and a hallucination
occurs with probability h(m, e). A hallucination costs the user alpha in that
period and ends the relationship; otherwise the user collects v.

Random numbers come from one Philox stream per (cohort, block of users),
keyed through ``SeedSequence`` spawn keys, so estimates do not depend on how
blocks are scheduled across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    Contract,
    CostFunction,
    MarketParams,
    UserPopulation,
    ValidationError,
    continuation_value,
    effort_cost,
    hallucination_prob,
    lifetime_value,
)

BLOCK = 4096
CHUNK = 64
TRUNCATION = 1e-8

HIGH, LOW = 0, 1
DEVIATION_STREAM = 2


class SimConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    cohort_size: int = 100_000
    seed: int = 0
    horizon: Optional[int] = None
    deviation_period: Optional[int] = None

    def __post_init__(self):
        if self.cohort_size < 1:
            raise ValidationError("cohort_size must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.deviation_period is not None:
            if self.deviation_period < 0:
                raise ValidationError("deviation_period must be >= 0")
            if self.horizon is not None and self.deviation_period >= self.horizon:
                raise ValidationError("deviation_period must be < horizon")

    def resolved_horizon(self, delta: float) -> int:
        if self.horizon is not None:
            return self.horizon
        return default_horizon(delta)


def default_horizon(delta: float) -> int:
    """Smallest T with delta**T < 1e-8."""
    if delta == 0:
        return 1
    t = math.ceil(math.log(TRUNCATION) / math.log(delta))
    while delta ** t >= TRUNCATION:
        t += 1
    while t > 1 and delta ** (t - 1) < TRUNCATION:
        t -= 1
    return t


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float

    @classmethod
    def of(cls, x: np.ndarray) -> "Estimate":
        n = len(x)
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        return cls(float(np.mean(x)), se)

    def within(self, target: float, k: float = 3.0) -> bool:
        if not math.isfinite(self.se):
            return False
        return abs(self.mean - target) <= k * self.se


@dataclass(frozen=True)
class SimResult:
    value_high_hat: Estimate
    value_low_hat: Estimate
    agent_value_hat: Estimate
    halluc_rate_hat: float
    mean_relationship_length: Estimate
    horizon: int
    deviation_gain_hat: Optional[Estimate] = None


@dataclass(frozen=True)
class DeviationVerdict:
    gain: Estimate
    # positive | null | negative, at 3 standard errors
    significance: str

    @property
    def profitable(self) -> bool:
        return not self.gain.mean <= 3 * self.gain.se


def _block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, block))))


def _first_hallucination(rng, n: int, horizon: int, hazards: list) -> list:
    """Period of first hallucination per user and per hazard schedule.

    ``hazards`` holds one callable per arm mapping a period index array to
    per-period hallucination probabilities; all arms share the same uniforms.
    Users surviving the horizon get ``horizon``.
    """
    taus = [np.full(n, horizon, dtype=np.int64) for _ in hazards]
    for start in range(0, horizon, CHUNK):
        stop = min(start + CHUNK, horizon)
        u = rng.random((n, stop - start))
        periods = np.arange(start, stop)
        open_any = False
        for tau, hazard in zip(taus, hazards):
            alive = tau == horizon
            if not alive.any():
                continue
            hit = u[alive] < hazard(periods)
            first = np.where(hit.any(axis=1), hit.argmax(axis=1) + start, horizon)
            tau[alive] = first
            open_any = open_any or bool((first == horizon).any())
        if not open_any:
            break
    return taus


def _block_sizes(total: int):
    return [min(BLOCK, total - s) for s in range(0, total, BLOCK)]


def _run_blocks(fn, stream: int, total: int, threads: int):
    jobs = [(stream, b, n) for b, n in enumerate(_block_sizes(total))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda j: fn(*j), jobs))
    else:
        parts = [fn(*j) for j in jobs]
    return parts


def _discount_sums(delta: float, horizon: int):
    """cum[t] = sum_{s<t} delta**s for t = 0..horizon, and delta**t."""
    powers = delta ** np.arange(horizon + 1, dtype=float)
    cum = np.concatenate(([0.0], np.cumsum(powers[:-1])))
    return cum, powers


def simulate_relationships(contract: Contract, pop: UserPopulation, cost: CostFunction,
                           params: MarketParams, cfg: SimConfig, threads: int = 1) -> SimResult:
    """Estimate V_H, V_L and V_C from simulated lifetimes of each type."""
    horizon = cfg.resolved_horizon(params.delta)
    h = float(hallucination_prob(contract.model, contract.effort, params.beta))
    c = float(effort_cost(cost, contract.effort))
    p, k = contract.price, contract.model.wholesale_fee
    cum, powers = _discount_sums(params.delta, horizon)

    def block(stream, b, n):
        rng = _block_rng(cfg.seed, stream, b)
        (tau,) = _first_hallucination(rng, n, horizon, [lambda t: h])
        return tau

    user = {HIGH: pop.high, LOW: pop.low}
    taus, values = {}, {}
    for stream, typ in user.items():
        tau = np.concatenate(_run_blocks(block, stream, cfg.cohort_size, threads))
        hallucinated = tau < horizon
        good = cum[np.minimum(tau, horizon)] * (typ.v - p)
        bad = np.where(hallucinated, powers[np.minimum(tau, horizon)] * (-typ.alpha - p), 0.0)
        taus[stream], values[stream] = tau, good + bad

    all_tau = np.concatenate([taus[HIGH], taus[LOW]])
    served = np.minimum(all_tau + 1, horizon)
    profit = cum[served] * (p - k - c)
    return SimResult(
        value_high_hat=Estimate.of(values[HIGH]),
        value_low_hat=Estimate.of(values[LOW]),
        agent_value_hat=Estimate.of(profit),
        halluc_rate_hat=float((all_tau < horizon).sum() / served.sum()),
        mean_relationship_length=Estimate.of(served.astype(float)),
        horizon=horizon,
    )


def deviation_experiment(contract: Contract, pop: UserPopulation, cost: CostFunction,
                         params: MarketParams, cfg: SimConfig, threads: int = 1) -> DeviationVerdict:
    """Present-value gain from secretly shirking (e = 0) once at cfg.deviation_period.

    Both arms see identical uniforms; only the shirking period's hazard differs.
    """
    if cfg.deviation_period is None:
        raise SimConfigurationError("deviation_experiment needs cfg.deviation_period")
    horizon = cfg.resolved_horizon(params.delta)
    d = cfg.deviation_period
    if d >= horizon:
        raise SimConfigurationError(f"deviation_period {d} must be < horizon {horizon}")
    h = float(hallucination_prob(contract.model, contract.effort, params.beta))
    h0 = contract.model.baseline_hallucination
    c = float(effort_cost(cost, contract.effort))
    margin = contract.price - contract.model.wholesale_fee - c
    cum, powers = _discount_sums(params.delta, horizon)

    honest = lambda t: np.full(t.shape, h)  # noqa: E731
    shirk = lambda t: np.where(t == d, h0, h)  # noqa: E731

    def block(stream, b, n):
        rng = _block_rng(cfg.seed, stream, b)
        tau_h, tau_d = _first_hallucination(rng, n, horizon, [honest, shirk])
        gain_h = cum[np.minimum(tau_h + 1, horizon)] * margin
        served_d = np.minimum(tau_d + 1, horizon)
        gain_d = cum[served_d] * margin + np.where(served_d > d, powers[d] * c, 0.0)
        return gain_d - gain_h

    diff = np.concatenate(_run_blocks(block, DEVIATION_STREAM, cfg.cohort_size, threads))
    gain = Estimate.of(diff)
    if not math.isfinite(gain.se):
        sig = "null"
    elif gain.mean > 3 * gain.se:
        sig = "positive"
    elif gain.mean < -3 * gain.se:
        sig = "negative"
    else:
        sig = "null"
    return DeviationVerdict(gain, sig)


def analytic_values(contract: Contract, pop: UserPopulation, cost: CostFunction,
                    params: MarketParams) -> dict:
    """Closed-form counterparts of the simulated estimates."""
    h = float(hallucination_prob(contract.model, contract.effort, params.beta))
    return {
        "value_high": float(lifetime_value(pop.high, h, contract.price, params.delta)),
        "value_low": float(lifetime_value(pop.low, h, contract.price, params.delta)),
        "agent_value": float(continuation_value(contract, cost, params)),
        "hallucination": h,
    }


def truncated_mean_length(h: float, horizon: int) -> float:
    """Expected periods served when survival per period is 1 - h, capped at horizon."""
    if h == 0:
        return float(horizon)
    return (1 - (1 - h) ** horizon) / h


@dataclass(frozen=True)
class PopulationCheck:
    stationary: bool
    active: np.ndarray
    exits: np.ndarray

    @property
    def exit_rate(self) -> Estimate:
        return Estimate.of(self.exits / self.active)


def stationary_population_check(contract: Contract, pop: UserPopulation, params: MarketParams,
                                cfg: SimConfig) -> PopulationCheck:
    """Overlapping cohorts with one-for-one replacement of exiting users."""
    horizon = cfg.resolved_horizon(params.delta)
    n = cfg.cohort_size
    h = float(hallucination_prob(contract.model, contract.effort, params.beta))
    rng = _block_rng(cfg.seed, 3, 0)
    in_market = np.ones(n, dtype=bool)
    active = np.empty(horizon, dtype=np.int64)
    exits = np.empty(horizon, dtype=np.int64)
    entrants = 0
    for t in range(horizon):
        # seats vacated last period are refilled by new, uninformed users
        vacant = np.flatnonzero(~in_market)
        if len(vacant) != entrants:
            raise AssertionError("replacement flow does not match exits")
        in_market[vacant] = True
        active[t] = int(in_market.sum())
        out = in_market & (rng.random(n) < h)
        exits[t] = int(out.sum())
        in_market &= ~out
        entrants = exits[t]
    return PopulationCheck(bool((active == n).all()), active, exits)
