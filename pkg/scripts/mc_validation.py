"""Monte Carlo check of the closed-form value functions at the preset equilibrium,
plus the one-shot deviation experiment below, at and above the enforcement price.

    python scripts/mc_validation.py [--cohort-size N] [--seed S] [--threads T]
"""

import argparse

from halluc_market.model import Contract, effort_cost, enforcement_price
from halluc_market.scenario import load_preset
from halluc_market.sim import SimConfig, analytic_values, deviation_experiment, simulate_relationships
from halluc_market.solver import solve


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cohort-size", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--mu", type=float, nargs="*", default=[0.1, 0.5, 0.9])
    args = ap.parse_args()

    sc = load_preset()
    seed = sc.sim.seed if args.seed is None else args.seed
    params = sc.params()
    for mu in args.mu:
        pop = sc.population(mu)
        r = solve(sc.catalog, pop, sc.cost, params, sc.solver)
        cfg = SimConfig(args.cohort_size, seed=seed, deviation_period=3)
        res = simulate_relationships(r.contract, pop, sc.cost, params, cfg, args.threads)
        truth = analytic_values(r.contract, pop, sc.cost, params)
        print(f"mu={mu}: model {r.model.id}, e*={r.effort:.4f}, p*={r.price:.4f} ({r.regime})")
        for name, est in (("value_high", res.value_high_hat), ("value_low", res.value_low_hat),
                          ("agent_value", res.agent_value_hat)):
            z = (est.mean - truth[name]) / est.se
            print(f"  {name:<12} sim {est.mean:9.4f} ± {est.se:.4f}  closed form {truth[name]:9.4f}  z={z:+.2f}")

        m, e = r.model, r.effort
        binding = float(enforcement_price(m, e, sc.cost, params))
        for label, price in (("no rent", m.wholesale_fee + float(effort_cost(sc.cost, e))),
                             ("binding", binding), ("binding+0.05", binding + 0.05)):
            v = deviation_experiment(Contract(m, price, e), pop, sc.cost, params, cfg, args.threads)
            print(f"  shirk once at {label:<13} gain {v.gain.mean:+.5f} ± {v.gain.se:.5f} ({v.significance})")


if __name__ == "__main__":
    main()
