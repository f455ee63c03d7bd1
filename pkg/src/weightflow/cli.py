"""Command line: measure graphs under a privacy budget, then synthesize.

measure        take noisy measurements of an edge list, debiting a
               persistent budget ledger kept next to the input file
synthesize     fit a synthetic graph to previously written measurements
               (never touches the original edge list)
gen-benchmark  generate a hub-heavy random graph and a degree-matched
               rewired twin for experiments
report         static cost table, engine memory footprint and swap
               throughput for an edge list
"""

from __future__ import annotations

import argparse
import glob
import os
import random
import sys
import time

from . import graphs, inference
from .inference import SyntheticState, run_mcmc
from .privacy import (
    BudgetAccount,
    BudgetExceededError,
    Measurement,
    NoiseSource,
    measure_plan,
)

QUERY_CHOICES = ("ccdf", "degseq", "nodes", "jdd", "jdd-sala", "tbd", "sbd", "tbi")


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive, got %s" % text)
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0, got %s" % text)
    return value


def _load_edges(path: str):
    try:
        return graphs.load_edge_list(path)
    except OSError as exc:
        print("error: cannot read %s: %s" % (path, exc.strerror or exc), file=sys.stderr)
        return None


def _parse_kinds(text: str, allowed) -> list:
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    if not kinds:
        raise ValueError("no query kinds given")
    seen = set()
    for kind in kinds:
        if kind not in allowed:
            raise ValueError("unknown query %r (choose from %s)" % (kind, ", ".join(allowed)))
        if kind in seen:
            raise ValueError("query %r listed twice" % kind)
        seen.add(kind)
    return kinds


def cmd_measure(args) -> int:
    try:
        kinds = _parse_kinds(args.query, QUERY_CHOICES)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    edges = _load_edges(args.input)
    if edges is None:
        return 1
    directed = args.symmetrization == "directed"
    dataset = graphs.edges_dataset(edges, symmetric=directed)
    symmetrize_plans = not directed

    ledger_path = args.budget_ledger or args.input + ".budget"
    if os.path.exists(ledger_path):
        account = BudgetAccount.load(ledger_path)
    else:
        account = BudgetAccount()
    if "edges" not in account.names():
        if args.budget is None:
            print(
                "error: no ledger at %s yet; fix the total budget with --budget" % ledger_path,
                file=sys.stderr,
            )
            return 1
        account.register("edges", args.budget)
    elif args.budget is not None and abs(account.cap("edges") - args.budget) > 1e-12:
        print(
            "error: ledger %s already fixes the budget cap at %g" % (ledger_path, account.cap("edges")),
            file=sys.stderr,
        )
        return 1

    plans = {}
    total = 0.0
    for kind in kinds:
        if kind == "jdd-sala":
            total += args.epsilon
        else:
            plan = graphs.build_plan(kind, symmetrize=symmetrize_plans, bucket_k=args.bucket_k)
            plans[kind] = plan
            total += plan.count_uses("edges") * args.epsilon
    try:
        account.charge_raw("edges", total)
    except BudgetExceededError as exc:
        print("budget refused: %s" % exc, file=sys.stderr)
        return 1

    os.makedirs(args.out_dir, exist_ok=True)
    root = NoiseSource(args.seed_noise, zero_noise=args.zero_noise)
    for kind in kinds:
        if kind == "jdd-sala":
            values = graphs.jdd_sala_baseline(edges, args.epsilon, root.spawn("jdd-sala/observe"))
            measurement = Measurement(
                "jdd-sala",
                args.epsilon,
                values,
                root.spawn("jdd-sala/lazy"),
                meta={"query": "jdd-sala"},
            )
        else:
            meta = {"query": kind, "symmetrize": "1" if symmetrize_plans else "0"}
            if kind == "tbd":
                meta["bucket_k"] = str(args.bucket_k)
            produced = measure_plan(
                plans[kind], {"edges": dataset}, args.epsilon, root.spawn(kind), None, meta
            )
            measurement = produced[graphs.query_id_for(kind)]
        path = os.path.join(args.out_dir, kind + ".measurement")
        measurement.save(path)
        print("%s: %d records -> %s" % (kind, len(measurement.observed), path))
    account.save(ledger_path)
    print(
        "budget[edges]: spent %s of %s (ledger %s)"
        % (repr(account.spent("edges")), repr(account.cap("edges")), ledger_path)
    )
    return 0


def cmd_synthesize(args) -> int:
    pattern = os.path.join(args.out_dir, "*.measurement")
    files = sorted(glob.glob(pattern))
    if not files:
        print("error: no measurement files match %s" % pattern, file=sys.stderr)
        return 1
    usable = []
    by_kind = {}
    for path in files:
        measurement = Measurement.load(path)
        kind = measurement.meta.get("query")
        if kind not in graphs.PLAN_KINDS:
            print("skipping %s: no plan for query %r" % (path, kind), file=sys.stderr)
            continue
        usable.append(measurement)
        by_kind.setdefault(kind, []).append(measurement)
    for required in ("nodes", "degseq", "ccdf"):
        if required not in by_kind:
            print(
                "error: synthesis needs a %r measurement in %s" % (required, args.out_dir),
                file=sys.stderr,
            )
            return 1

    node_estimate = max(0.0, 2.0 * by_kind["nodes"][0].value_for("nodes"))
    degrees = graphs.estimate_degrees(
        by_kind["degseq"][0], by_kind["ccdf"][0], node_estimate
    )
    seed_edges = inference.seed_graph(degrees, random.Random(args.seed_graph))
    print("seed graph: %d nodes, %d edges" % (len(degrees), len(seed_edges)))

    state = SyntheticState(seed_edges, usable, pow_factor=args.pow)
    steps = args.steps if len(seed_edges) >= 2 else 0
    trace = run_mcmc(state, steps, random.Random(args.seed_walk), args.trace_interval)

    edges_path = os.path.join(args.out_dir, "synthetic.edges")
    trace_path = os.path.join(args.out_dir, "trace.csv")
    graphs.write_edge_list(edges_path, state.edge_list)
    trace.save(trace_path)
    first = trace.rows[0]
    last = trace.rows[-1]
    print("steps: %d  accepted: %d  rejected by score: %d  structural: %d" % (
        steps,
        state.counters["accepted"],
        state.counters["rejected_score"],
        state.counters["rejected_identity"]
        + state.counters["rejected_self_loop"]
        + state.counters["rejected_duplicate"],
    ))
    print("discrepancy: %s -> %s" % (repr(first[1]), repr(last[1])))
    print("wrote %s and %s" % (edges_path, trace_path))
    return 0


def _attach_count_for(nodes: int, edges: int) -> int:
    # pick the per-node attachment count whose expected edge total,
    # clique seed included, lands closest to the requested total
    best_k, best_gap = 1, None
    for k in range(1, nodes):
        predicted = k * (k + 1) // 2 + k * (nodes - k - 1)
        gap = abs(predicted - edges)
        if best_gap is None or gap < best_gap:
            best_k, best_gap = k, gap
    return best_k


def cmd_gen_benchmark(args) -> int:
    rng = random.Random(args.seed_graph)
    per_node = _attach_count_for(args.nodes, args.edges)
    edges = graphs.preferential_attachment(args.nodes, per_node, args.beta, rng)
    rewired = graphs.rewired_copy(edges, rng)
    os.makedirs(args.out_dir, exist_ok=True)
    base = os.path.join(args.out_dir, "benchmark.edges")
    twin = os.path.join(args.out_dir, "benchmark-rewired.edges")
    graphs.write_edge_list(base, edges)
    graphs.write_edge_list(twin, rewired)
    degs = graphs.degrees_of(edges)
    print(
        "benchmark: %d nodes, %d edges, max degree %d, %d triangles -> %s"
        % (len(degs), len(edges), max(degs.values()), inference.count_triangles(edges), base)
    )
    print(
        "rewired twin: %d triangles -> %s"
        % (inference.count_triangles(rewired), twin)
    )
    return 0


def cmd_report(args) -> int:
    try:
        kinds = _parse_kinds(args.query, graphs.PLAN_KINDS)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    edges = _load_edges(args.input)
    if edges is None:
        return 1
    degs = graphs.degrees_of(edges)
    print(
        "graph: %d nodes, %d edges, max degree %d, sum of squared degrees %d"
        % (len(degs), len(edges), max(degs.values(), default=0), graphs.sum_squared_degrees(edges))
    )
    print("query    uses(raw input)    uses(directed input)")
    for kind in graphs.PLAN_KINDS:
        raw_uses = graphs.build_plan(kind, symmetrize=True, bucket_k=args.bucket_k).count_uses("edges")
        dir_uses = graphs.build_plan(kind, symmetrize=False, bucket_k=args.bucket_k).count_uses("edges")
        print("%-8s %-18d %d" % (kind, raw_uses, dir_uses))

    directed = args.symmetrization == "directed"
    dataset = graphs.edges_dataset(edges, symmetric=directed)
    symmetrize_plans = not directed
    root = NoiseSource(args.seed_noise, zero_noise=True)
    measurements = []
    for kind in kinds:
        meta = {"query": kind, "symmetrize": "1" if symmetrize_plans else "0"}
        if kind == "tbd":
            meta["bucket_k"] = str(args.bucket_k)
        plan = graphs.build_plan(kind, symmetrize=symmetrize_plans, bucket_k=args.bucket_k)
        produced = measure_plan(plan, {"edges": dataset}, args.epsilon, root.spawn(kind), None, meta)
        measurements.append(produced[graphs.query_id_for(kind)])
    state = SyntheticState(edges, measurements, pow_factor=args.pow)
    for attachment in state.attachments:
        report = attachment.state.memory_report()
        entries = sum(row["output"] + row["state"] for row in report.values())
        print("memory[%s]: %d entries across %d nodes" % (
            attachment.query_id, entries, len(report)))
    if len(edges) >= 2 and args.steps > 0:
        rng = random.Random(args.seed_walk)
        started = time.perf_counter()
        for _ in range(args.steps):
            state.step(rng)
        elapsed = time.perf_counter() - started
        print(
            "throughput: %d steps in %.3fs (%.0f steps/s), %d accepted"
            % (args.steps, elapsed, args.steps / elapsed, state.counters["accepted"])
        )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="weightflow",
        description="Differentially private graph measurement and synthesis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="take noisy measurements of an edge list")
    p.add_argument("--input", required=True, help="edge list file, one 'src dst' per line")
    p.add_argument("--query", required=True, help="comma separated: %s" % ",".join(QUERY_CHOICES))
    p.add_argument("--epsilon", type=_positive_float, required=True, help="per-use privacy parameter")
    p.add_argument("--budget", type=float, default=None, help="total budget cap, fixed on first use")
    p.add_argument("--budget-ledger", default=None, help="ledger path (default: <input>.budget)")
    p.add_argument("--bucket-k", type=int, default=1, help="degree bucket width for tbd")
    p.add_argument(
        "--symmetrization",
        choices=("raw", "directed"),
        default="directed",
        help="raw: plans mirror the input internally (double cost); "
        "directed: both edge orientations enter the dataset",
    )
    p.add_argument("--seed-noise", type=int, default=0)
    p.add_argument("--zero-noise", action="store_true", help="draw no noise (for testing)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("synthesize", help="fit a synthetic graph to stored measurements")
    p.add_argument("--out-dir", required=True, help="directory holding *.measurement files")
    p.add_argument("--steps", type=_nonnegative_int, default=50000)
    p.add_argument("--pow", type=float, default=10000.0, help="score sharpness")
    p.add_argument("--seed-graph", type=int, default=0)
    p.add_argument("--seed-walk", type=int, default=0)
    p.add_argument("--trace-interval", type=int, default=None)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("gen-benchmark", help="generate a hub-heavy graph and a rewired twin")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--edges", type=int, required=True, help="approximate total edge count")
    p.add_argument("--beta", type=float, default=0.5, help="hub strength in (0, 1)")
    p.add_argument("--seed-graph", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_benchmark)

    p = sub.add_parser("report", help="cost, memory and throughput for an edge list")
    p.add_argument("--input", required=True)
    p.add_argument("--query", default="ccdf,degseq,nodes,tbi")
    p.add_argument("--epsilon", type=_positive_float, default=1.0)
    p.add_argument("--bucket-k", type=int, default=1)
    p.add_argument("--symmetrization", choices=("raw", "directed"), default="directed")
    p.add_argument("--steps", type=_nonnegative_int, default=2000)
    p.add_argument("--pow", type=float, default=10000.0)
    p.add_argument("--seed-noise", type=int, default=0)
    p.add_argument("--seed-walk", type=int, default=0)
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
