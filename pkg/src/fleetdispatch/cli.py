"""Command-line entry point.

Machine-readable JSON goes to stdout and human-readable text to stderr.
Exit codes: 0 success, 2 infeasible (with a witness), 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import feasibility as feas
from . import optimal, oracle
from .fixed_point import FixedPointNotConverged, solve_fixed_point
from .oracle import MisalignedGridError
from .scenario import (
    FleetParams,
    ScenarioError,
    ScenarioSpec,
    counterexample_fixture,
    gap_fixture,
    generated_scenario,
    load_scenario,
    random_aligned_instance,
    save_scenario,
    ttf_fixture,
)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
log = logging.getLogger("fleetdispatch")


class CommandError(RuntimeError):
    pass


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _threads() -> int:
    raw = os.environ.get("FLEETDISPATCH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise CommandError(f"FLEETDISPATCH_THREADS must be an integer, got {raw!r}") from None


def _fixtures() -> dict[str, ScenarioSpec]:
    fleet, d1, d2, _ = counterexample_fixture()
    ttf_fleet, ttf_demand, _ = ttf_fixture()
    gap_fleet, gap_demand, _ = gap_fixture()
    return {
        "counterexample-d1": ScenarioSpec(fleet, d1, {"note": "two-device counterexample, profile d1"}),
        "counterexample-d2": ScenarioSpec(fleet, d2, {"note": "two-device counterexample, profile d2"}),
        "ttf": ScenarioSpec(ttf_fleet, ttf_demand, {"note": "two devices, constant 1 kW on [0, 10]"}),
        "gap": ScenarioSpec(gap_fleet, gap_demand, {"note": "least-unserved vs latest-failure gap"}),
    }


def cmd_feasible(args) -> int:
    spec = load_scenario(args.scenario)
    verdicts = {}
    if args.method in ("dispatch", "both"):
        verdicts["dispatch"] = feas.feasibility_by_dispatch(spec.fleet, spec.demand, fallback=False)
    if args.method in ("subset", "both"):
        width = args.slot_width or feas.infer_slot_width(spec.fleet, spec.demand)
        verdicts["subset"] = feas.subset_feasibility_check(spec.fleet, spec.demand, width)
    flags = {name: v.feasible for name, v in verdicts.items()}
    if len(set(flags.values())) > 1:
        raise CommandError(f"methods disagree: {flags}")
    main = verdicts.get("dispatch") or verdicts["subset"]
    ref = None
    if args.schedule_out and main.schedule is not None:
        main.schedule.to_csv(args.schedule_out, spec.fleet, spec.demand)
        ref = args.schedule_out
    out = main.to_json(schedule_ref=ref)
    out["methods"] = {name: v.to_json() for name, v in verdicts.items()}
    if "dispatch" in verdicts and verdicts["dispatch"].fixed_point is not None:
        out["fixed_point"] = verdicts["dispatch"].fixed_point.to_json()
    _emit(out)
    _say(f"feasible: {main.feasible} ({', '.join(verdicts)})")
    if not main.feasible:
        _say(f"witness: {main.witness.to_json()}")
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_dispatch(args) -> int:
    spec = load_scenario(args.scenario)
    verdict = feas.feasibility_by_dispatch(spec.fleet, spec.demand, fallback=False)
    if not verdict.feasible:
        _emit(verdict.to_json())
        _say(f"infeasible: {verdict.witness.to_json()}")
        return EXIT_INFEASIBLE
    verdict.schedule.to_csv(args.out, spec.fleet, spec.demand)
    out = verdict.to_json(schedule_ref=args.out)
    out["fixed_point"] = verdict.fixed_point.to_json()
    _emit(out)
    _say(f"schedule with {verdict.schedule.rates.shape[0]} segments written to {args.out}")
    return EXIT_OK


def _oracle_instance(spec: ScenarioSpec, slot_width: float | None) -> oracle.DiscreteInstance:
    width = slot_width or feas.infer_slot_width(spec.fleet, spec.demand)
    return oracle.discretize(spec.fleet, spec.demand, width)


def cmd_min_unserved(args) -> int:
    spec = load_scenario(args.scenario)
    res = optimal.min_unserved_energy(spec.fleet, spec.demand)
    out = res.to_json()
    if args.out:
        res.schedule.to_csv(args.out, spec.fleet, spec.demand)
        out["schedule_ref"] = args.out
    if args.oracle_check:
        inst = _oracle_instance(spec, args.slot_width)
        ref = oracle.oracle_min_unserved(inst)
        out["oracle_unserved_energy_kwh"] = ref
        if abs(ref - res.unserved_energy) > 1e-6:
            _emit(out)
            raise CommandError(f"oracle disagrees: {ref} vs {res.unserved_energy}")
    _emit(out)
    _say(f"minimum unserved energy: {res.unserved_energy:.6g} kWh")
    return EXIT_OK


def cmd_max_ttf(args) -> int:
    spec = load_scenario(args.scenario)
    res = optimal.max_time_to_failure(spec.fleet, spec.demand, tau_tol=args.tau_tol, max_outer=args.max_outer)
    out = res.to_json()
    if args.out:
        res.schedule.to_csv(args.out, spec.fleet.restrict(res.tau_star) if res.tau_star > 0 else spec.fleet)
        out["schedule_ref"] = args.out
    if args.oracle_check:
        inst = _oracle_instance(spec, args.slot_width)
        p = oracle.oracle_max_ttf(inst)
        out["oracle_max_ttf_hours"] = p * inst.slot_width
        if abs(p * inst.slot_width - res.tau_star) > inst.slot_width:
            _emit(out)
            raise CommandError(f"oracle disagrees: prefix {p} slots vs {res.tau_star} h")
    _emit(out)
    _say(f"maximum time to failure: {res.tau_star:.6g} h after {len(res.iterates) - 1} outer steps")
    return EXIT_OK


def _bench_one(n: int, seed: int, repeats: int) -> dict:
    spec = generated_scenario(n, seed)
    times, fp = [], None
    for _ in range(repeats):
        start = time.perf_counter()
        fp = solve_fixed_point(spec.fleet, spec.demand)
        times.append(time.perf_counter() - start)
    return {"n": n, "seconds": statistics.median(times), "iterations": fp.iterations, "residual": fp.residual}


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    if not sizes or min(sizes) < 1:
        raise CommandError("--sizes needs positive integers")
    rows = []
    for n in sizes:
        try:
            row = _bench_one(n, args.seed, args.repeats)
        except FixedPointNotConverged as exc:
            row = {"n": n, "seconds": float("nan"), "iterations": exc.best.iterations, "residual": exc.best.residual}
        rows.append(row)
        _say(f"N={n:>4}  {row['seconds']:.3f} s  {row['iterations']} evaluations  residual {row['residual']:.2e}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["N", "seconds", "iterations", "residual"])
            for r in rows:
                writer.writerow([r["n"], repr(r["seconds"]), r["iterations"], repr(r["residual"])])
    failed = [r["n"] for r in rows if not np.isfinite(r["seconds"])]
    _emit({"seed": args.seed, "repeats": args.repeats, "rows": rows, "failed": failed, "csv": args.out})
    if failed:
        raise CommandError(f"fixed point did not converge for N in {failed}")
    return EXIT_OK


def _check_instance(args: tuple[int, int, int, int]) -> list[str]:
    """Compare every solver with the oracle on one random instance; list disagreements."""
    seed, index, max_n, max_slots = args
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))
    fleet, demand = random_aligned_instance(rng, max_n, max_slots, demand_scale=float(rng.choice([0.3, 1.0])))
    inst = oracle.discretize(fleet, demand, 1.0)
    problems = []
    truth = oracle.oracle_feasible(inst)
    by_dispatch = feas.feasibility_by_dispatch(fleet, demand).feasible
    by_subset = feas.subset_feasibility_check(fleet, demand, 1.0).feasible
    if not by_dispatch == by_subset == truth:
        problems.append(f"instance {index}: feasible dispatch={by_dispatch} subset={by_subset} oracle={truth}")
    if not truth:
        res = optimal.min_unserved_energy(fleet, demand)
        u = res.unserved_energy
        ref = oracle.oracle_min_unserved(inst)
        if abs(u - ref) > 1e-6:
            problems.append(f"instance {index}: unserved {u} vs oracle {ref}")
        bad = res.schedule.violations(fleet)
        if bad:
            problems.append(f"instance {index}: unserved schedule inadmissible ({bad[0]})")
    tau = optimal.max_time_to_failure(fleet, demand).tau_star
    p = oracle.oracle_max_ttf(inst)
    if not p - 1e-9 <= tau <= p + 1 + 1e-9:
        problems.append(f"instance {index}: time to failure {tau} vs oracle prefix {p}")
    return problems


def cmd_oracle_check(args) -> int:
    jobs = [(args.seed, i, args.max_n, args.max_slots) for i in range(args.count)]
    workers = _threads()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_check_instance, jobs, chunksize=16))
    else:
        results = [_check_instance(j) for j in jobs]
    problems = [p for r in results for p in r]
    _emit({"count": args.count, "seed": args.seed, "disagreements": problems})
    _say(f"{args.count} instances, {len(problems)} disagreements")
    for p in problems[:20]:
        _say(p)
    return EXIT_OK if not problems else EXIT_ERROR


def cmd_generate(args) -> int:
    if args.fixture:
        spec = _fixtures()[args.fixture]
    else:
        spec = generated_scenario(args.n, args.seed, args.fill, FleetParams())
    save_scenario(spec, args.out)
    _emit({"written": args.out, "devices": spec.fleet.size, "horizon_hours": spec.fleet.horizon})
    _say(f"wrote {spec.fleet.size}-device scenario to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fleetdispatch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("feasible", help="decide whether a scenario's demand can be met")
    p.add_argument("scenario")
    p.add_argument("--method", choices=["dispatch", "subset", "both"], default="dispatch")
    p.add_argument("--slot-width", type=float, default=None, help="slot width for the subset test (hours)")
    p.add_argument("--schedule-out", default=None, help="write the dispatch schedule CSV here")
    p.set_defaults(func=cmd_feasible)

    p = sub.add_parser("dispatch", help="compute and export a feasible schedule")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="schedule CSV path")
    p.set_defaults(func=cmd_dispatch)

    for name, func, helptext in (
        ("min-unserved", cmd_min_unserved, "least unserved energy schedule"),
        ("max-ttf", cmd_max_ttf, "latest achievable time of first failure"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("scenario")
        p.add_argument("--out", default=None, help="schedule CSV path")
        p.add_argument("--oracle-check", action="store_true", help="cross-check with the max-flow oracle")
        p.add_argument("--slot-width", type=float, default=None)
        if name == "max-ttf":
            p.add_argument("--tau-tol", type=float, default=optimal.TAU_TOL)
            p.add_argument("--max-outer", type=int, default=optimal.MAX_OUTER)
        p.set_defaults(func=func)

    p = sub.add_parser("bench", help="fixed-point timing table over fleet sizes")
    p.add_argument("--sizes", default="10,50,100,250,500")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", default=None, help="CSV path for the timing table")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle-check", help="randomized differential test against the max-flow oracle")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--max-n", type=int, default=5)
    p.add_argument("--max-slots", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("generate", help="write a scenario file")
    p.add_argument("--out", required=True)
    p.add_argument("--fixture", choices=sorted(_fixtures()), default=None)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fill", type=float, default=0.8, help="demand as a fraction of stored energy")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would read as "infeasible".
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except (ScenarioError, MisalignedGridError, CommandError, FixedPointNotConverged, ValueError, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
