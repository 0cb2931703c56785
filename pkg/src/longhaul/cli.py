"""Command-line interface: ``longhaul <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import io
from .bnc import (STATUS_INFEASIBLE, STATUS_LIMIT, STATUS_OPTIMAL, SolverConfig,
                  solve_milp, solve_root)
from .cuts import CutError, CutPool, build_pool
from .formulations import (PRECEDENCE_OPTIONS, SYNC_OPTIONS, BuildOptions, MilpModel, ModelError,
                           build_model, solution_to_plan, warm_start_assignment)
from .generator import PRESETS, generate, greedy_warm_start, preset_spec
from .model_core import Instance, InstanceError, example_instance, validate_instance
from .oracle import OracleBudget, OracleBudgetError, exhaustive_solve
from .routes import RouteError, check_plan, convert_plan, plan_cost
from .timegraphs import LT, TRUCK_FLAVORS, build_graphs

EXIT_OK, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_INPUT = 0, 2, 3, 4

SUMMARY_COLUMNS = ["instance", "flavor", "precedence", "sync", "cuts", "status", "objective", "bound",
                   "gap", "nodes", "root_lp", "root_bound", "time_s"]
CUTS_COLUMNS = ["instance", "flavor", "family", "ineq_count", "time_s", "root_bound", "root_gap"]
COMPARE_COLUMNS = ["instance", "formulation", "variables", "constraints", "status", "objective", "bound",
                   "gap", "nodes", "lr", "lr_gap", "time_s"]

log = logging.getLogger("longhaul")


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if not math.isfinite(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(v)


def _emit_csv(rows: list[dict], columns: Sequence[str], path: Optional[str], append: bool = False) -> None:
    buf = _stdio.StringIO()
    target = Path(path) if path else None
    header = not (append and target is not None and target.exists() and target.stat().st_size > 0)
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    if header:
        w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row.get(k)) for k in columns})
    if target is None:
        sys.stdout.write(buf.getvalue())
    else:
        with open(target, "a" if append else "w") as fh:
            fh.write(buf.getvalue())


def _write_text(text: str, path: Optional[str]) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_instance(path: str) -> Instance:
    try:
        inst = io.read_instance(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except (io.FormatError, InstanceError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return inst


def _flavor(name: str) -> str:
    up = name.upper()
    if up not in TRUCK_FLAVORS:
        raise argparse.ArgumentTypeError(f"flavor must be one of {', '.join(TRUCK_FLAVORS)}")
    return up


def _families(text: str) -> list[str]:
    return [f for f in (s.strip() for s in text.split(",")) if f]


def _model(inst: Instance, args) -> MilpModel:
    problems = validate_instance(inst)
    if problems and not any("no feasible" in p for p in problems):
        raise InputError(f"invalid instance: {problems[0]}")
    try:
        return build_model(inst, build_graphs(inst, args.flavor),
                           BuildOptions(args.flavor, args.precedence, args.sync))
    except (ModelError, InstanceError) as exc:
        raise InputError(str(exc)) from None


def _pool(inst: Instance, model: MilpModel, families: Sequence[str]) -> Optional[CutPool]:
    if not families:
        return None
    try:
        return build_pool(inst, model.graphs.truck, families)
    except CutError as exc:
        raise InputError(str(exc)) from None


def _model_args(p: argparse.ArgumentParser, flavor_default: str = LT) -> None:
    p.add_argument("instance", help="instance JSON file")
    p.add_argument("--flavor", type=_flavor, default=flavor_default, help="LT, LTC or LTR")
    p.add_argument("--precedence", choices=PRECEDENCE_OPTIONS, default=PRECEDENCE_OPTIONS[0])
    p.add_argument("--sync", choices=SYNC_OPTIONS, default=SYNC_OPTIONS[0])


def _solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--lp-backend", choices=("highs", "simplex"), default="highs")


def _config(args, **extra) -> SolverConfig:
    return SolverConfig(time_limit=args.time_limit, node_limit=args.node_limit,
                        lp_backend=args.lp_backend, **extra)


def _status_code(status: str) -> int:
    if status == STATUS_OPTIMAL:
        return EXIT_OK
    if status == STATUS_INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_LIMIT


def _rel_gap(reference: Optional[float], bound: float) -> Optional[float]:
    if reference is None or not math.isfinite(bound):
        return None
    return 100.0 * (reference - bound) / max(1.0, abs(reference))


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    overrides = {k: v for k, v in (("n_locations", args.locations), ("n_requests", args.requests),
                                   ("days", args.days), ("instants_per_day", args.instants),
                                   ("n_trucks", args.trucks), ("n_drivers", args.drivers))
                 if v is not None}
    try:
        if args.preset == "example":
            if overrides:
                raise InstanceError("the example instance takes no overrides")
            inst = example_instance()
        else:
            inst = generate(preset_spec(args.preset, args.seed, **overrides))
    except (InstanceError, TypeError) as exc:
        raise InputError(str(exc)) from None
    _write_text(io.dumps_instance(inst), args.output)
    if args.warm_start:
        plan = greedy_warm_start(inst)
        if plan is None:
            log.warning("greedy insertion found no plan")
        else:
            io.write_plan(plan, args.warm_start, inst.name)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {args.file}: {exc.strerror}") from None
    try:
        kind = io.document_kind(text)
        if kind == "instance":
            problems = validate_instance(io.loads_instance(text))
        elif kind == "plan":
            if not args.instance:
                raise InputError("validating a plan needs --instance")
            inst = _load_instance(args.instance)
            plan = io.loads_plan(text)
            try:
                graphs = build_graphs(inst, plan.flavor)
                problems = check_plan(plan, inst, graphs)
            except (RouteError, KeyError, IndexError, ValueError) as exc:
                problems = [str(exc)]
            if not problems:
                print(f"cost {plan_cost(plan, inst, graphs).total}")
        else:
            raise InputError(f"{args.file}: unknown document kind {kind!r}")
    except (io.FormatError, InstanceError) as exc:
        raise InputError(f"{args.file}: {exc}") from None
    if problems:
        for p in problems:
            print(p)
        raise InputError(f"{args.file}: {len(problems)} problem(s), first: {problems[0]}")
    print("ok")
    return EXIT_OK


def cmd_build(args) -> int:
    inst = _load_instance(args.instance)
    model = _model(inst, args)
    pool = _pool(inst, model, _families(args.cuts or ""))
    extra = []
    if pool is not None:
        A, senses, rhs = pool.rows(model)
        for k, cut in enumerate(pool.cuts):
            row = A.getrow(k)
            extra.append(io.ExtraRow(f"cut_{cut.family.replace('-', '_')}_{k}", list(row.indices),
                                     list(row.data), int(senses[k]), float(rhs[k])))
    _write_text(io.emit_lp(model, extra), args.output)
    return EXIT_OK


def cmd_relax(args) -> int:
    inst = _load_instance(args.instance)
    model = _model(inst, args)
    pool = _pool(inst, model, _families(args.cuts or ""))
    cfg = SolverConfig(lp_backend=args.lp_backend)
    if pool is None:
        cfg.root_cut_rounds = 0
    root = solve_root(model, pool, cfg)
    doc = {"instance": inst.name, "flavor": args.flavor, "precedence": args.precedence, "sync": args.sync,
           "status": root.status, "lr": root.root_lp, "root_bound": root.root_bound,
           "cuts_added": root.cuts_added}
    if args.json:
        sys.stdout.write(io.dumps(io.result_to_dict(**doc)))
    else:
        print(f"status={root.status} lr={_fmt(root.root_lp)} root_bound={_fmt(root.root_bound)}")
    return EXIT_INFEASIBLE if root.status == STATUS_INFEASIBLE else EXIT_OK


def _warm_vector(inst: Instance, model: MilpModel):
    plan = greedy_warm_start(inst)
    if plan is None:
        log.info("no warm start: greedy insertion failed")
        return None
    try:
        plan = convert_plan(plan, build_graphs(inst, LT), model.graphs)
        return warm_start_assignment(plan, model)
    except (ModelError, RouteError) as exc:
        log.info("warm start rejected: %s", exc)
        return None


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    model = _model(inst, args)
    families = _families(args.cuts or "")
    pool = _pool(inst, model, families)
    ws = _warm_vector(inst, model) if args.warm_start else None
    cfg = _config(args, on_log=(lambda line: log.info(line)))
    res = solve_milp(model, pool, ws, cfg)
    plan = None
    cost = None
    if res.x is not None:
        plan = solution_to_plan(model, res.x)
        cost = plan_cost(plan, inst, model.graphs)
        if args.plan:
            io.write_plan(plan, args.plan, inst.name)
    doc = io.result_to_dict(
        instance=inst.name, flavor=args.flavor, precedence=args.precedence, sync=args.sync,
        cuts=families, status=res.status, objective=res.objective, bound=res.bound, nodes=res.nodes,
        root_lp=res.root_lp, root_bound=res.root_bound, cuts_added=res.cuts_added,
        cost=None if cost is None else {"truck_travel": cost.truck_travel, "taxi_travel": cost.taxi_travel,
                                        "delay_penalties": cost.delay_penalties, "total": cost.total})
    if args.result:
        Path(args.result).write_text(io.dumps(doc))
    if args.csv:
        _emit_csv([dict(instance=inst.name, flavor=args.flavor, precedence=args.precedence, sync=args.sync,
                        cuts="+".join(families), status=res.status, objective=res.objective,
                        bound=res.bound, gap=res.gap, nodes=res.nodes, root_lp=res.root_lp,
                        root_bound=res.root_bound, time_s=res.wall_time)],
                  SUMMARY_COLUMNS, args.csv, append=True)
    print(f"status={res.status} objective={_fmt(res.objective)} bound={_fmt(res.bound)} nodes={res.nodes}")
    return _status_code(res.status)


def cmd_oracle(args) -> int:
    inst = _load_instance(args.instance)
    try:
        res = exhaustive_solve(inst, OracleBudget(max_states=args.max_states, time_cap=args.time_cap))
    except OracleBudgetError as exc:
        print(f"status={STATUS_LIMIT} reason={exc}")
        return EXIT_LIMIT
    except InstanceError as exc:
        raise InputError(str(exc)) from None
    if res.plan is not None and args.plan:
        io.write_plan(res.plan, args.plan, inst.name)
    print(f"status={res.status} objective={_fmt(res.value)} states={res.states}")
    return _status_code(res.status)


def _reference(inst: Instance, args) -> Optional[float]:
    if args.optimum is not None:
        return args.optimum
    ns = argparse.Namespace(**vars(args))
    ns.flavor, ns.precedence, ns.sync = "LTR", PRECEDENCE_OPTIONS[0], SYNC_OPTIONS[0]
    res = solve_milp(_model(inst, ns), config=_config(args))
    if res.status != STATUS_OPTIMAL:
        log.warning("reference solve ended %s; gaps use the best value found", res.status)
    return res.objective


def cmd_cuts(args) -> int:
    inst = _load_instance(args.instance)
    model = _model(inst, args)
    ref = _reference(inst, args)
    rows = []
    for family in ["none"] + _families(args.families):
        start = time.perf_counter()
        pool = None if family == "none" else _pool(inst, model, [family])
        cfg = SolverConfig(lp_backend=args.lp_backend, time_limit=args.time_limit)
        root = solve_root(model, pool, cfg)
        elapsed = time.perf_counter() - start
        rows.append(dict(instance=inst.name, flavor=args.flavor, family=family,
                         ineq_count=sum(root.cuts_added.values()), time_s=elapsed,
                         root_bound=root.root_bound, root_gap=_rel_gap(ref, root.root_bound)))
    _emit_csv(rows, CUTS_COLUMNS, args.csv)
    return EXIT_OK


def cmd_compare(args) -> int:
    rows = []
    for path in args.instances:
        inst = _load_instance(path)
        for flavor in TRUCK_FLAVORS:
            ns = argparse.Namespace(**vars(args))
            ns.flavor = flavor
            model = _model(inst, ns)
            lr = solve_root(model, None, SolverConfig(lp_backend=args.lp_backend, root_cut_rounds=0))
            res = solve_milp(model, config=_config(args))
            name = flavor + ("+PREC" if args.precedence != PRECEDENCE_OPTIONS[0] else "") + \
                ("" if args.sync == SYNC_OPTIONS[0] else "+" + args.sync.upper())
            rows.append(dict(instance=inst.name, formulation=name, variables=model.n_vars,
                             constraints=model.n_rows, status=res.status, objective=res.objective,
                             bound=res.bound, gap=None if res.objective is None else 100 * res.gap,
                             nodes=res.nodes, lr=lr.root_lp, lr_gap=_rel_gap(res.objective, lr.root_lp),
                             time_s=res.wall_time))
    _emit_csv(rows, COMPARE_COLUMNS, args.csv)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longhaul", description="Truck routing and crew scheduling on "
                                     "time-expanded digraphs.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--error-json", action="store_true", help="report failures as JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded instance")
    p.add_argument("--preset", default="desk", choices=["example", "tiny"] + sorted(PRESETS),
                   help="'example' is the fixed two-request toy instance")
    p.add_argument("--seed", type=int, default=0)
    for name in ("locations", "requests", "days", "instants", "trucks", "drivers"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("-o", "--output", help="instance file (default stdout)")
    p.add_argument("--warm-start", metavar="PLAN", help="also write the greedy plan here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="check an instance or a plan")
    p.add_argument("file")
    p.add_argument("--instance", help="instance of the plan being checked")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build", help="write the model in LP format")
    _model_args(p)
    p.add_argument("--cuts", help="comma-separated cut families appended as rows")
    p.add_argument("-o", "--output", help="LP file (default stdout)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("relax", help="solve the linear relaxation")
    _model_args(p)
    p.add_argument("--cuts", help="comma-separated cut families for a root cut loop")
    p.add_argument("--lp-backend", choices=("highs", "simplex"), default="highs")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("solve", help="branch-and-cut")
    _model_args(p)
    _solver_args(p)
    p.add_argument("--cuts", help="comma-separated cut families for the pool")
    p.add_argument("--warm-start", action="store_true", help="seed with the greedy plan")
    p.add_argument("--plan", help="write the plan here")
    p.add_argument("--result", help="write the result JSON here")
    p.add_argument("--csv", help="append a summary row here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="exact search for tiny instances")
    p.add_argument("instance")
    p.add_argument("--max-states", type=int, default=OracleBudget.max_states)
    p.add_argument("--time-cap", type=float, default=OracleBudget.time_cap)
    p.add_argument("--plan", help="write the plan here")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("cuts", help="root-node effect of cut families")
    _model_args(p, flavor_default="LTC")
    _solver_args(p)
    p.add_argument("--families", required=True, help="comma-separated, e.g. PD2,PD3-V2-A,SEC1-R3")
    p.add_argument("--optimum", type=float, help="reference value for gaps (default: solve LTR)")
    p.add_argument("--csv", help="output file (default stdout)")
    p.set_defaults(func=cmd_cuts)

    p = sub.add_parser("compare", help="solve every flavor and tabulate")
    p.add_argument("instances", nargs="+")
    p.add_argument("--precedence", choices=PRECEDENCE_OPTIONS, default=PRECEDENCE_OPTIONS[0])
    p.add_argument("--sync", choices=SYNC_OPTIONS, default=SYNC_OPTIONS[0])
    _solver_args(p)
    p.add_argument("--csv", help="output file (default stdout)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        if args.error_json:
            sys.stderr.write(json.dumps({"error": str(exc), "exit_code": EXIT_INPUT}) + "\n")
        else:
            sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
