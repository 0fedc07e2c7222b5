"""Command-line front end: solve, sweep, figures, simulate.

Exit statuses: 0 success / active equilibrium, 1 simulation finished with
degenerate statistics, 2 inactive market, 3 invalid input, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import sweep as sweeps
from .model import Contract, EquilibriumResult, ValidationError, enforcement_price
from .scenario import ScenarioError, load, parse_grid
from .sim import SimConfig, analytic_values, deviation_experiment, simulate_relationships
from .solver import solve

EXIT_OK, EXIT_DEGENERATE, EXIT_INACTIVE, EXIT_INVALID, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("halluc_market")


class _IOFailure(Exception):
    pass


def result_record(r: EquilibriumResult) -> dict:
    def num(x):
        return None if isinstance(x, float) and math.isnan(x) else x

    rec = {
        "active": r.active,
        "regime": r.regime,
        "model": r.model.id,
        "price": r.price,
        "effort": r.effort,
        "hallucination_rate": r.hallucination_rate,
        "welfare": r.welfare,
        "value_high": r.value_high,
        "value_low": r.value_low,
        "agent_value": r.agent_value,
        "rent_factor": num(r.rent_factor),
        "delta_lower": num(r.delta_lower),
        "binding_type": r.binding_type.value,
        "kappa": r.kappa,
    }
    if r.foc is not None:
        rec["foc_residual"] = r.foc.residual
        rec["second_order_ok"] = r.foc.second_order_ok
    return rec


def render_result(r: EquilibriumResult) -> str:
    rec = result_record(r)
    width = max(len(k) for k in rec)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rec.items())


def _scenario(args):
    sc = load(args.scenario)
    if getattr(args, "seed", None) is not None:
        sc = replace(sc, sim=replace(sc.sim, seed=args.seed))
    return sc


def _out_dir(args):
    if args.out is None:
        return None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _IOFailure(f"cannot create output directory {out}: {exc}") from None
    return out


def _solve_for(args, sc):
    mu = args.mu if args.mu is not None else sc.mu[0]
    return solve(sc.catalog, sc.population(mu), sc.cost, sc.params(args.delta, args.beta), sc.solver)


def cmd_solve(args) -> int:
    sc = _scenario(args)
    r = _solve_for(args, sc)
    if args.json:
        print(json.dumps(result_record(r), indent=2))
    else:
        print(render_result(r))
    out = _out_dir(args)
    if out is not None:
        (out / "solve.json").write_text(json.dumps(result_record(r), indent=2) + "\n", encoding="utf-8")
    if not r.active:
        print("market inactive: no contract satisfies participation and patience", file=sys.stderr)
        return EXIT_INACTIVE
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    try:
        grid = parse_grid(args.grid)
    except ValueError as exc:
        raise ValidationError(f"--grid: {exc}") from None
    if args.model is not None and args.model not in [m.id for m in sc.catalog]:
        raise ValidationError(f"--model: unknown model {args.model!r}")
    rows = sweeps.sweep(sc, args.axis, grid, args.model, args.threads)
    out = _out_dir(args) or Path(".")
    path = out / f"sweep_{args.axis}.csv"
    try:
        sweeps.write_csv(rows, path)
    except OSError as exc:
        raise _IOFailure(str(exc)) from None
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_figures(args) -> int:
    from .figures import write_figures

    sc = _scenario(args)
    out = _out_dir(args) or Path("figures")
    try:
        paths = write_figures(sc, out, args.threads)
    except OSError as exc:
        raise _IOFailure(str(exc)) from None
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    mu = args.mu if args.mu is not None else sc.mu[0]
    pop, params = sc.population(mu), sc.params(args.delta, args.beta)
    cfg = sc.sim
    overrides = {k: getattr(args, k) for k in ("cohort_size", "horizon", "deviation_period")
                 if getattr(args, k) is not None}
    cfg = SimConfig(**{**cfg.__dict__, **overrides})

    if args.effort is not None or args.price is not None or args.model is not None:
        model = sc.catalog.get(args.model) if args.model else sc.catalog.models[0]
        effort = args.effort if args.effort is not None else 0.0
        price = args.price if args.price is not None else float(
            enforcement_price(model, effort, sc.cost, params))
        contract = Contract(model, price, effort)
    else:
        r = solve(sc.catalog, pop, sc.cost, params, sc.solver)
        if not r.active:
            print("refusing to simulate: the solver reports an inactive market "
                  f"(V_H={r.value_high:.6g}, V_L={r.value_low:.6g}, delta_lower={r.delta_lower:.6g}); "
                  "pass --model/--effort/--price to simulate a contract anyway", file=sys.stderr)
            return EXIT_INACTIVE
        contract = r.contract

    res = simulate_relationships(contract, pop, sc.cost, params, cfg, args.threads)
    truth = analytic_values(contract, pop, sc.cost, params)
    table = [
        ("value_high", res.value_high_hat, truth["value_high"]),
        ("value_low", res.value_low_hat, truth["value_low"]),
        ("agent_value", res.agent_value_hat, truth["agent_value"]),
    ]
    print(f"contract: model={contract.model.id} price={contract.price:.9g} effort={contract.effort:.9g}")
    print(f"cohort_size={cfg.cohort_size} horizon={res.horizon} seed={cfg.seed}")
    records = []
    for name, est, target in table:
        ok = est.within(target)
        print(f"{name:<12} {est.mean:>12.6f} ± {est.se:<10.3g} analytic {target:>12.6f}  "
              f"{'PASS' if ok else 'FAIL'} (3 SE)")
        records.append([name, est.mean, est.se, target, ok])
    print(f"{'halluc_rate':<12} {res.halluc_rate_hat:>12.6f}   analytic {truth['hallucination']:.6f}")
    records.append(["hallucination_rate", res.halluc_rate_hat, math.nan, truth["hallucination"], ""])

    if cfg.deviation_period is not None:
        verdict = deviation_experiment(contract, pop, sc.cost, params, cfg, args.threads)
        text = "profitable deviation" if verdict.profitable else "no profitable deviation"
        print(f"deviation at t={cfg.deviation_period}: gain {verdict.gain.mean:.6g} ± "
              f"{verdict.gain.se:.3g} ({verdict.significance}) -> {text}")
        records.append(["deviation_gain", verdict.gain.mean, verdict.gain.se, math.nan,
                        not verdict.profitable])

    out = _out_dir(args)
    if out is not None:
        with open(out / "simulation.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["quantity", "estimate", "se", "analytic", "within_3se"])
            for name, est, se, target, ok in records:
                w.writerow([name, sweeps.format_number(est), sweeps.format_number(se),
                            sweeps.format_number(target), str(ok).lower()])

    if not math.isfinite(res.value_low_hat.se):
        print("warning: standard errors unavailable (cohort_size < 2)", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="simulation seed (u64)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    point = argparse.ArgumentParser(add_help=False)
    point.add_argument("--mu", type=float)
    point.add_argument("--delta", type=float)
    point.add_argument("--beta", type=float)

    p = argparse.ArgumentParser(prog="halluc-market",
                                description="Relational-contract market for hallucination-prone AI answers.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common, point], help="solve the equilibrium")
    s.add_argument("--json", action="store_true", help="print the JSON record only")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", parents=[common], help="sweep one parameter axis to CSV")
    s.add_argument("--axis", required=True, help="mu, delta or beta")
    s.add_argument("--grid", required=True, help="comma list or start:stop:step")
    s.add_argument("--model", help="force this upstream model")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("figures", parents=[common], help="figure CSVs and SVG charts")
    s.set_defaults(func=cmd_figures)

    s = sub.add_parser("simulate", parents=[common, point], help="Monte Carlo check of value functions")
    s.add_argument("--cohort-size", type=int)
    s.add_argument("--horizon", type=int)
    s.add_argument("--deviation-period", type=int)
    s.add_argument("--model", help="override: upstream model id")
    s.add_argument("--effort", type=float, help="override: effort level")
    s.add_argument("--price", type=float, help="override: price (default: enforcement price)")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ScenarioError, ValidationError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (_IOFailure, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
