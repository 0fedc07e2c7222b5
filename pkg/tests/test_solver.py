import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halluc_market.model import (
    CostFunction,
    DomainError,
    MarketParams,
    ModelCatalog,
    UpstreamModel,
    UserPopulation,
    UserType,
    ValidationError,
    hallucination_prob,
    participation_values,
    welfare,
)
from halluc_market.solver import (
    ConfigurationError,
    SolverConfig,
    _pick,
    bisect_boundary,
    comparative_static_mu,
    constrained_effort,
    cross_partial,
    foc_residual,
    golden_section_max,
    monotonicity_violations,
    optimal_effort,
    solve,
    solve_equilibrium,
    spot_equilibrium,
    welfare_slope,
)

from conftest import COST, HIGH, MODEL_A, MODEL_B, population

P95 = MarketParams(0.95, 0.70)
CFG = SolverConfig()


def brute_force(catalog, pop, cost, params, points=400_001):
    """Exhaustive (model x dense effort grid) search under participation."""
    best = None
    for idx, m in enumerate(catalog):
        grid = np.linspace(0, CFG.effort_max(m, params.beta), points)
        w = welfare(m, grid, pop, cost, params)
        vh, vl = participation_values(m, grid, pop, cost, params)
        w = np.where((vh >= 0) & (vl >= 0), w, -np.inf)
        i = int(np.argmax(w))
        if np.isfinite(w[i]) and (best is None or w[i] > best[0]):
            best = (w[i], m.id, grid[i])
    return best


def random_setup(rng):
    vl, al = rng.uniform(0.5, 2.0), rng.uniform(0.5, 3.0)
    pop = UserPopulation(UserType(vl + rng.uniform(0.2, 3), al + rng.uniform(0.5, 12)),
                         UserType(vl, al), rng.uniform(0.05, 0.95))
    h0 = rng.uniform(0.05, 0.4, size=2)
    fees = rng.uniform(0.02, 0.5, size=2)
    catalog = ModelCatalog([UpstreamModel("M0", fees[0], h0[0]), UpstreamModel("M1", fees[1], h0[1])])
    params = MarketParams(rng.uniform(0.6, 0.97), rng.uniform(0.4, 1.2))
    cost = CostFunction(rng.uniform(0.05, 0.3), 2)
    return catalog, pop, cost, params


# -- primitives --------------------------------------------------------------

def test_golden_section_finds_parabola_max():
    x = golden_section_max(lambda x: -(x - 0.3) ** 2, 0.0, 2.0, 1e-9)
    assert x == pytest.approx(0.3, abs=1e-8)


def test_bisect_boundary_returns_feasible_side():
    g = lambda x: 1.0 - x  # noqa: E731
    r = bisect_boundary(g, 0.0, 3.0)
    assert g(r) >= 0
    assert r == pytest.approx(1.0, abs=1e-12)


def test_solver_config_invariants():
    with pytest.raises(ValidationError):
        SolverConfig(effort_grid_points=8)
    with pytest.raises(ValidationError):
        SolverConfig(model_tiebreak="Random")
    with pytest.raises(ValidationError):
        SolverConfig(h_floor=0.5).effort_max(MODEL_A, 0.7)


# -- spot benchmark ----------------------------------------------------------

def test_spot_two_models(catalog):
    r = spot_equilibrium(catalog, population(0.5))
    assert r.model.id == "B"
    assert r.price == 0.30 and r.effort == 0
    assert r.welfare == pytest.approx(0.6925, abs=1e-12)
    assert r.active


def test_spot_single_model():
    r = spot_equilibrium(ModelCatalog([MODEL_A]), population(0.5))
    assert r.model.id == "A" and r.price == 0.05 and r.active
    assert r.value_high == pytest.approx(0.35) and r.value_low == pytest.approx(0.45)


def test_spot_inactive_when_low_type_refuses():
    pop = UserPopulation(HIGH, UserType(0.1, 1.5), 0.5)
    r = spot_equilibrium(ModelCatalog([MODEL_A]), pop)
    assert r.value_low == pytest.approx(0.08 - 0.3 - 0.05)
    assert not r.active


def test_solve_routes_delta_zero_to_spot(catalog):
    r = solve(catalog, population(0.5), COST, MarketParams(0.0, 0.7))
    assert r.regime == "spot" and r.effort == 0 and r.price == r.model.wholesale_fee
    with pytest.raises(DomainError):
        solve_equilibrium(catalog, population(0.5), COST, MarketParams(0.0, 0.7))


def test_tiebreak_rules():
    cheap, dear = UpstreamModel("c", 0.1, 0.3), UpstreamModel("d", 0.2, 0.1)
    cands = [(1.0, 0, dear, None), (1.0, 1, cheap, None)]
    assert _pick(cands, "LowerFee")[2] is cheap
    assert _pick(cands, "FirstInCatalog")[2] is dear


# -- effort optimisation -----------------------------------------------------

def test_optimal_effort_interior_high_mu():
    e, rep = optimal_effort(MODEL_A, population(0.9), COST, P95)
    assert e > 0 and not rep.corner
    assert abs(rep.residual) < 1e-8 and rep.second_order_ok


def test_optimal_effort_matches_brute_force_grid():
    pop = population(0.5)
    e, _ = optimal_effort(MODEL_A, pop, COST, P95)
    grid = np.linspace(0, CFG.effort_max(MODEL_A, 0.7), 1_000_000)
    oracle = grid[np.argmax(welfare(MODEL_A, grid, pop, COST, P95))]
    assert e == pytest.approx(oracle, abs=1e-4)


@pytest.mark.parametrize("delta", [1e-3, 1e-6])
def test_optimal_effort_vanishes_as_delta_shrinks(delta):
    e, rep = optimal_effort(MODEL_A, population(0.5), COST, MarketParams(delta, 0.7))
    assert e < 1e-3


def test_foc_positive_left_of_optimum():
    pop = population(0.5)
    e, _ = optimal_effort(MODEL_A, pop, COST, P95)
    assert foc_residual(MODEL_A, 0.2 * e, pop, COST, P95).residual > 0
    with pytest.raises(DomainError):
        foc_residual(MODEL_A, 0.0, pop, COST, P95)


def test_hallucination_derivative_closed_form():
    for e in (0.1, 1.0, 3.0):
        step = 1e-6 * max(1, e)
        fd = (hallucination_prob(MODEL_A, e + step, 0.7) - hallucination_prob(MODEL_A, e - step, 0.7)) / (2 * step)
        assert fd == pytest.approx(-0.7 * hallucination_prob(MODEL_A, e, 0.7), rel=1e-6)


@pytest.mark.parametrize("e", [0.3, 1.0, 2.5])
def test_welfare_slope_against_finite_differences(e):
    pop = population(0.4)
    s = 1e-5
    fd = (welfare(MODEL_B, e + s, pop, COST, P95) - welfare(MODEL_B, e - s, pop, COST, P95)) / (2 * s)
    assert welfare_slope(MODEL_B, e, pop, COST, P95) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_cross_partial_example():
    assert cross_partial(MODEL_A, 1.0, population(0.5), P95) == pytest.approx(8.090824813819573, rel=1e-12)


def nested_cross_partial(m, e, pop, params, se=1e-4, smu=1e-3):
    def dw_de(mu):
        p = pop.with_mu(mu)
        return (welfare(m, e + se, p, COST, params) - welfare(m, e - se, p, COST, params)) / (2 * se)
    return (dw_de(pop.mu + smu) - dw_de(pop.mu - smu)) / (2 * smu)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 0.95), st.floats(0.05, 0.98), st.floats(0.2, 1.5))
def test_cross_partial_positive_and_matches_fd(e, mu, delta, beta):
    params = MarketParams(delta, beta)
    pop = population(mu)
    xp = cross_partial(MODEL_A, e, pop, params)
    assert xp > 0
    assert xp == pytest.approx(nested_cross_partial(MODEL_A, e, pop, params), rel=1e-4)


# -- reputational equilibrium ------------------------------------------------

def test_low_mu_uses_cheap_model(catalog):
    assert solve_equilibrium(catalog, population(0.1), COST, P95).model.id == "A"


def test_half_mu_uses_clean_model(catalog):
    r = solve_equilibrium(catalog, population(0.5), COST, P95)
    assert r.model.id == "B" and r.active and r.regime == "interior"
    assert r.hallucination_rate == hallucination_prob(r.model, r.effort, 0.7)


def test_participation_plateau_is_low_type_boundary():
    e, regime, _ = constrained_effort(MODEL_A, population(0.9), COST, P95)
    assert regime == "boundary"
    vh, vl = participation_values(MODEL_A, e, population(0.9), COST, P95)
    assert 0 <= vl < 1e-9 and vh > 0


def test_inactive_market():
    pop = UserPopulation(UserType(1.0, 10.0), UserType(0.1, 1.5), 0.5)
    r = solve_equilibrium(ModelCatalog([MODEL_A]), pop, COST, MarketParams(0.3, 0.7))
    assert not r.active
    with pytest.raises(ConfigurationError):
        spot_equilibrium(type("Empty", (), {"__len__": lambda s: 0, "__iter__": lambda s: iter(())})(), pop)


def test_delta_near_zero_agrees_with_spot(catalog):
    for mu in (0.1, 0.5, 0.9):
        pop = population(mu)
        r = solve_equilibrium(catalog, pop, COST, MarketParams(1e-9, 0.7))
        assert r.model.id == spot_equilibrium(catalog, pop).model.id
        assert r.effort < 1e-3


@pytest.mark.parametrize("mu", [0.1, 0.3, 0.5, 0.9])
def test_activity_threshold_coherence(catalog, mu):
    pop = population(mu)
    r = solve_equilibrium(catalog, pop, COST, P95)
    assert r.active and r.effort > 0
    assert P95.delta >= r.delta_lower - 1e-10
    lower = solve(catalog, pop, COST, MarketParams(r.delta_lower - 0.01, 0.7))
    assert lower.effort <= r.effort


def test_oracle_equivalence_random_draws():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 50:
        catalog, pop, cost, params = random_setup(rng)
        oracle = brute_force(catalog, pop, cost, params)
        r = solve_equilibrium(catalog, pop, cost, params)
        if oracle is None:
            assert not r.active
            continue
        _, m_id, e = oracle
        assert r.model.id == m_id
        assert r.effort == pytest.approx(e, abs=1e-4)
        assert r.value_high >= -1e-10 and r.value_low >= -1e-10
        if r.regime == "interior" and r.effort > 0:
            assert abs(r.foc.residual) < 1e-8 and r.foc.second_order_ok
        checked += 1


# -- comparative statics -----------------------------------------------------

def test_mu_schedule_monotone_on_fixed_model(catalog):
    grid = np.round(np.arange(0.05, 0.96, 0.05), 12)
    points = comparative_static_mu(catalog, population(), COST, P95, grid)
    assert [p.mu for p in points] == list(grid)
    assert monotonicity_violations(points) == []
    assert {p.result.model.id for p in points} == {"A", "B"}


def test_mu_schedule_parallel_matches_serial(catalog):
    grid = [0.1, 0.3, 0.5, 0.7]
    serial = comparative_static_mu(catalog, population(), COST, P95, grid)
    threaded = comparative_static_mu(catalog, population(), COST, P95, grid, threads=4)
    assert serial == threaded


def test_mu_grid_validation(catalog):
    with pytest.raises(ValidationError):
        comparative_static_mu(catalog, population(), COST, P95, [0.5, 0.4])
    with pytest.raises(ValidationError):
        comparative_static_mu(catalog, population(), COST, P95, [0.0, 0.4])


def test_patience_lifts_schedule():
    grid = [0.1, 0.3, 0.5, 0.7, 0.9]
    cat = ModelCatalog([MODEL_A])
    low = comparative_static_mu(cat, population(), COST, MarketParams(0.75, 0.7), grid)
    high = comparative_static_mu(cat, population(), COST, MarketParams(0.95, 0.7), grid)
    for a, b in zip(low, high):
        assert b.result.effort >= a.result.effort
