"""Command-line front end.

Exit codes: 0 success, 2 input/schema violation, 3 training or model
failure, 4 nothing left to evaluate. Data goes to stdout, diagnostics to
stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .catalog import PER_FREQUENCY, UNIFIED, ModelFamily, parse_mode, train
from .errors import (
    EmptyEvaluation,
    EmptyTrace,
    InvalidSpec,
    MixedClusters,
    PowerModelError,
    SchemaError,
)
from .evaluation import (
    cross_predict_naive,
    evaluate,
    evaluate_cross_model,
    split_benchmarks,
    split_trace,
    train_cross_model,
)
from .io import load_model, load_report, read_trace_csv, save_model, save_report, write_trace_csv
from .regression import correlations, rank_candidates
from .synth import generate_trace, make_cluster_pair, spec_from_dict
from .trace import validate_trace

log = logging.getLogger("hetpower")

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_TRAINING = 3
EXIT_EMPTY = 4
DEFAULT_SEED = 0


class _Ctx:
    quiet = False


def _say(msg: str) -> None:
    if not _Ctx.quiet:
        print(msg, file=sys.stderr)


def _load_trace(path, sample_period=None):
    trace = validate_trace(read_trace_csv(path, sample_period))
    if trace.dropped_count:
        log.warning("%s: dropped %d invalid records %s", path, trace.dropped_count, dict(trace.drop_reasons))
    if trace.missing_columns:
        _say(f"{path}: columns not available on every record: {', '.join(trace.missing_columns)}")
    return trace


def _split(args, *traces):
    """Benchmark split shared by all ``traces``; None when not requested."""
    if args.split_by_benchmark is None:
        return None
    seed = args.seed if args.split_by_benchmark == "global" else int(args.split_by_benchmark)
    ids = set().union(*(t.benchmarks for t in traces))
    train_ids, test_ids = split_benchmarks(ids, args.test_fraction, seed)
    return {"seed": seed, "test_fraction": args.test_fraction, "train": train_ids, "test": test_ids}


def _write_table(rows, header) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def _print_report(report, table: bool) -> None:
    if table:
        _write_table([(f, repr(v)) for f, v in report.frequency_table()] + [("overall", repr(report.overall_mape))],
                     ("frequency_mhz", "mape"))
    _say(f"{report.model} [{report.kind}]: overall MAPE {report.overall_mape:.3f}% "
         f"over {len(report.per_sample)} samples, skipped {report.skipped_count}")


# -- subcommands --------------------------------------------------------------

def cmd_train(args) -> int:
    trace = _load_trace(args.train_csv, args.sample_period)
    split = _split(args, trace)
    if split:
        trace, test = split_trace(trace, split["test"])
        if args.test_out:
            write_trace_csv(test.records, args.test_out)
        _say(f"split seed {split['seed']}: {len(split['train'])} train / {len(split['test'])} test benchmarks")
    model = train(
        args.family, trace, args.mode,
        select_events=args.select_events, slots=args.slots, min_samples=args.min_samples,
    )
    entries = [model] if args.mode == UNIFIED else [model[f] for f in sorted(model)]
    for m in entries:
        c = m.coefficients
        if not c.full_rank:
            where = "unified" if m.frequency is None else f"{m.frequency} MHz"
            log.warning("%s %s: rank %d of %d columns (minimum-norm solution), condition %.3g",
                        m.family.value, where, c.rank, len(c.names), c.condition_estimate)
    if args.mode == PER_FREQUENCY and entries and entries[0].metadata.get("skipped_levels"):
        log.warning("levels skipped for lack of samples: %s", entries[0].metadata["skipped_levels"])
    if entries and entries[0].metadata.get("selected_events"):
        _say("selected events: " + ", ".join(entries[0].metadata["selected_events"]))
    save_model(model, args.out, split)
    _write_table(
        [("" if m.frequency is None else m.frequency, m.coefficients.rank, len(m.coefficients.names),
          repr(m.coefficients.condition_estimate), m.metadata["sample_count"]) for m in entries],
        ("frequency_mhz", "rank", "columns", "condition", "samples"),
    )
    _say(f"wrote {len(entries)} {ModelFamily.parse(args.family).value} model(s) to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    test = _load_trace(args.test_csv, args.sample_period)
    report = evaluate(model, test)
    if args.report:
        save_report(report, args.report)
    _print_report(report, args.per_frequency_table)
    return EXIT_OK


def cmd_correlate(args) -> int:
    trace = _load_trace(args.train_csv, args.sample_period)
    pool = args.candidates or [c for c in trace.pmu_names if c != "cycles"]
    pool = [c for c in pool if c != "cycles" and trace.has_column(c)]
    if not pool:
        raise SchemaError("no candidate counters in trace")
    corr = correlations(trace, pool)
    ranked = rank_candidates(corr)
    chosen = set(ranked[: args.slots - 1])
    if trace.has_column("cycles"):
        cyc = correlations(trace, ["cycles"])["cycles"]
        rows = [("cycles", repr(cyc), repr(abs(cyc)), 0)]
    else:
        raise SchemaError("trace has no pmu_cycles column")
    rows += [(c, repr(corr[c]), repr(abs(corr[c])), i + 1 if c in chosen else "")
             for i, c in enumerate(ranked)]
    _write_table(rows, ("counter", "r", "abs_r", "slot"))
    _say("selected: " + ", ".join(["cycles", *ranked[: args.slots - 1]]))
    return EXIT_OK


def cmd_crosspredict(args) -> int:
    power = _load_trace(args.power_csv, args.sample_period)
    events = _load_trace(args.event_csv, args.sample_period)
    split = _split(args, power, events)
    if split:
        p_train, p_test = split_trace(power, split["test"])
        e_train, e_test = split_trace(events, split["test"])
    else:
        _say("no --split-by-benchmark given: training and testing on all benchmarks")
        p_train = p_test = power
        e_train = e_test = events
    if args.naive:
        model = train(args.family, p_train, args.mode, min_samples=args.min_samples)
        report = cross_predict_naive(model, e_test)
    else:
        model = train_cross_model(args.family, p_train, e_train, args.mode, min_samples=args.min_samples)
        report = evaluate_cross_model(model, p_test, e_test)
    if args.model_out:
        save_model(model, args.model_out, split)
    if args.report:
        save_report(report, args.report)
    _print_report(report, True)
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{args.spec}: {exc}") from None
    spec = spec_from_dict(doc, default_seed=args.seed)
    if args.seed_given:
        from dataclasses import replace
        spec = replace(spec, seed=args.seed)
    if args.pair_out:
        levels = [int(x) for x in args.little_levels.split(",")] if args.little_levels else None
        big, little = make_cluster_pair(spec, args.event_scale, args.power_offset, args.power_scale, levels)
        write_trace_csv(big.records, args.out)
        write_trace_csv(little.records, args.pair_out)
        _say(f"wrote {len(big)} BIG samples to {args.out} and {len(little)} LITTLE samples to {args.pair_out}")
    else:
        trace, truth = generate_trace(spec)
        write_trace_csv(trace.records, args.out)
        _say(f"wrote {len(trace)} samples to {args.out}")
        if args.truth_out:
            doc = {
                "family": truth.family.value,
                "names": list(truth.names),
                "coefficients": {str(f): [float(v) for v in vec] for f, vec in truth.coefficients.items()},
                "seed": spec.seed,
            }
            Path(args.truth_out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_report(args) -> int:
    reports = [load_report(p) for p in args.reports]
    levels = sorted({f for r in reports for f in r.per_frequency_mape})
    header = ["frequency_mhz"] + [f"{r.model}:{r.kind}" for r in reports]
    rows = [[f] + [repr(r.per_frequency_mape[f]) if f in r.per_frequency_mape else "" for r in reports]
            for f in levels]
    rows.append(["overall"] + [repr(r.overall_mape) for r in reports])
    _write_table(rows, header)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _family(value):
    try:
        return ModelFamily.parse(value).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _mode(value):
    try:
        return parse_mode(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_split(p):
    p.add_argument("--split-by-benchmark", nargs="?", const="global", default=None, metavar="SEED",
                   help="hold out a share of benchmarks as the test set (seed defaults to --seed)")
    p.add_argument("--test-fraction", type=float, default=0.3)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for every random choice")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only errors on stderr")
    common.add_argument("--sample-period", type=float, default=None, metavar="SECONDS",
                        help="divide PMU counts by the sampling interval (counts per second)")

    parser = argparse.ArgumentParser(prog="hetpower", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hetpower {__version__}")
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="fit a model family on a trace")
    p.add_argument("train_csv")
    p.add_argument("--family", type=_family, required=True)
    p.add_argument("--mode", type=_mode, default=UNIFIED, help="unified | perfreq")
    p.add_argument("--select-events", action="store_true",
                   help="re-derive the PMU regressors by correlation on the training set")
    p.add_argument("--slots", type=int, default=5)
    p.add_argument("--min-samples", type=int, default=2)
    _add_split(p)
    p.add_argument("--test-out", help="write the held-out benchmarks to this CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a model file on a test trace")
    p.add_argument("model")
    p.add_argument("test_csv")
    p.add_argument("--report")
    p.add_argument("--per-frequency-table", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("correlate", parents=[common], help="rank PMU counters by |r| against power")
    p.add_argument("train_csv")
    p.add_argument("--slots", type=int, default=5)
    p.add_argument("--candidates", nargs="+")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("crosspredict", parents=[common], help="predict one cluster's power from the other's events")
    p.add_argument("power_csv", help="cluster whose power is modelled (naive: the cluster the model is fitted on)")
    p.add_argument("event_csv", help="cluster supplying the events")
    p.add_argument("--family", type=_family, default="P2S")
    p.add_argument("--mode", type=_mode, default=PER_FREQUENCY)
    how = p.add_mutually_exclusive_group()
    how.add_argument("--naive", action="store_true", help="feed the other cluster's samples to the model")
    how.add_argument("--averaged", action="store_true", help="train on benchmark averages (default)")
    p.add_argument("--min-samples", type=int, default=2)
    _add_split(p)
    p.add_argument("--report")
    p.add_argument("--model-out")
    p.set_defaults(func=cmd_crosspredict)

    p = sub.add_parser("synth", parents=[common], help="generate a trace from a ground-truth spec")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out")
    p.add_argument("--pair-out", help="also write a LITTLE twin trace here")
    p.add_argument("--event-scale", type=float, default=1.0)
    p.add_argument("--power-offset", type=float, default=0.0)
    p.add_argument("--power-scale", type=float, default=1.0)
    p.add_argument("--little-levels", help="comma-separated MHz levels kept in the twin")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", parents=[common], help="tabulate saved reports per frequency")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = hasattr(args, "seed")
    if not args.seed_given:
        args.seed = DEFAULT_SEED
    _Ctx.quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.ERROR if _Ctx.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except EmptyEvaluation as exc:
        print(f"error: EmptyEvaluation: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (SchemaError, MixedClusters, EmptyTrace, InvalidSpec, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (PowerModelError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
