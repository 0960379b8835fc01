"""Percent-error scoring and inter-cluster cross prediction."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import kernels
from .catalog import (
    PER_FREQUENCY,
    UNIFIED,
    ModelFamily,
    PowerModel,
    fit_family,
    parse_mode,
)
from .errors import (
    EmptyEvaluation,
    NoCommonBenchmarks,
    NoCommonFrequencies,
    NonPositiveMeasured,
)
from .regression import MIN_ROWS, predict_rows
from .trace import BenchmarkAverage, ValidatedTrace, benchmark_averages, subset

PLAIN = "plain"
CROSS_NAIVE = "cross-naive"
CROSS_AVERAGED = "cross-averaged"


def percent_error(measured: float, predicted: float) -> float:
    """``100 * |measured - predicted| / measured`` for one sample."""
    if not measured > 0:
        raise NonPositiveMeasured(f"measured power must be positive, got {measured}")
    return 100.0 * abs(measured - predicted) / measured


class SampleError(NamedTuple):
    timestamp: float | None
    benchmark_id: str
    frequency: int
    measured: float
    predicted: float  # raw model output, before clamping at 0 W
    percent_error: float


@dataclass(frozen=True)
class EvaluationReport:
    model: str
    kind: str
    per_sample: tuple
    per_frequency_mape: Mapping[int, float]
    overall_mape: float
    skipped: Mapping[str, int] = field(default_factory=dict)
    metadata: Mapping = field(default_factory=dict)

    @property
    def skipped_count(self) -> int:
        return sum(self.skipped.values())

    def frequency_table(self) -> list:
        """(MHz, mean percent error) rows sorted by frequency."""
        return sorted(self.per_frequency_mape.items())


def _as_model_map(model):
    if isinstance(model, PowerModel):
        return model, None
    models = dict(model)
    if not models:
        raise ValueError("empty per-frequency model map")
    first = next(iter(models.values()))
    return first, models


def _score(model, source, timestamps, benchmarks, kind) -> EvaluationReport:
    """Apply ``model`` (single or MHz-keyed map) to ``source`` and aggregate."""
    first, models = _as_model_map(model)
    n = len(benchmarks)
    freqs = np.asarray(source.column("frequency"), dtype=np.float64).astype(np.int64)
    measured = np.asarray(source.targets, dtype=np.float64)
    predicted = np.full(n, np.nan)
    skipped = Counter()

    if models is None:
        preds, d = first.predict(source)
        predicted[d.row_index] = preds
        if d.dropped:
            skipped["zero_denominator"] += d.dropped
    else:
        same_spec = all(m.spec == first.spec for m in models.values())
        shared = first.design(source) if same_spec else None
        for f in np.unique(freqs):
            f = int(f)
            level = freqs == f
            if f not in models:
                skipped["no_model_for_level"] += int(level.sum())
                continue
            m = models[f]
            d = shared if shared is not None else m.design(source)
            on_level = level[d.row_index]
            rows = d.row_index[on_level]
            predicted[rows] = d.rows[on_level] @ m.coefficients.values
            lost = int(level.sum()) - rows.size
            if lost:
                skipped["zero_denominator"] += lost

    ok = ~np.isnan(predicted)
    if not ok.any():
        raise EmptyEvaluation(f"no evaluable samples ({dict(skipped)})")
    errors = np.full(n, np.nan)
    errors[ok] = kernels.percent_errors(measured[ok], predicted[ok])

    per_sample = tuple(
        SampleError(
            None if timestamps is None else float(timestamps[i]),
            benchmarks[i],
            int(freqs[i]),
            float(measured[i]),
            float(predicted[i]),
            float(errors[i]),
        )
        for i in np.flatnonzero(ok)
    )
    per_freq = {}
    for f in np.unique(freqs[ok]):
        per_freq[int(f)] = float(np.mean(errors[ok & (freqs == f)]))
    overall = float(np.mean(errors[ok]))
    label = first.label if models is None else f"{first.family.value}/{PER_FREQUENCY}"
    meta = {"levels_modelled": sorted(models) if models is not None else None}
    return EvaluationReport(label, kind, per_sample, per_freq, overall, dict(skipped), meta)


def evaluate(model, test: ValidatedTrace, kind: str = PLAIN) -> EvaluationReport:
    """Score ``model`` on every sample of ``test``.

    Negative predictions count as 0 W in the percent error while the raw
    value stays in ``per_sample``. Under a per-frequency map, samples at
    levels without a model are skipped and counted.
    """
    stamps = test.column("timestamp")
    bench = [r.benchmark_id for r in test.records]
    return _score(model, test, stamps, bench, kind)


def cross_predict_naive(model, other: ValidatedTrace) -> EvaluationReport:
    """Feed another cluster's samples straight into a model fitted elsewhere."""
    _, models = _as_model_map(model)
    if models is not None and not set(models) & set(other.frequency_levels):
        raise NoCommonFrequencies(
            f"model levels {sorted(models)} vs trace levels {list(other.frequency_levels)}"
        )
    return evaluate(model, other, kind=CROSS_NAIVE)


# -- averaged cross prediction ------------------------------------------------

@dataclass(frozen=True)
class CrossPredictionPair:
    """Benchmark averages of two clusters joined on (benchmark, MHz).

    Regressors come from ``event_source`` (``source_cluster``); the target
    power comes from ``power_source`` (``target_cluster``). Only equal-MHz
    levels are paired.
    """

    source_cluster: str
    target_cluster: str
    pairing: tuple
    rows: tuple  # (power average, event average)
    unpaired_levels: tuple = ()
    unshared_benchmarks: tuple = ()

    def __len__(self):
        return len(self.rows)

    @property
    def keys(self) -> list:
        return [(p.benchmark_id, p.frequency) for p, _ in self.rows]

    def has_column(self, name: str) -> bool:
        return bool(self.rows) and all(name in e.mean_regressors for _, e in self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([e.mean_regressors[name] for _, e in self.rows], dtype=np.float64)

    @property
    def targets(self) -> np.ndarray:
        return np.array([p.mean_power for p, _ in self.rows], dtype=np.float64)

    @property
    def benchmarks(self) -> list:
        return [p.benchmark_id for p, _ in self.rows]

    def restrict(self, frequency: int) -> "CrossPredictionPair":
        rows = tuple(r for r in self.rows if r[0].frequency == frequency)
        return CrossPredictionPair(
            self.source_cluster, self.target_cluster,
            tuple(p for p in self.pairing if p[1] == frequency), rows,
        )


def join_averages(power_avgs: Sequence[BenchmarkAverage], event_avgs: Sequence[BenchmarkAverage],
                  power_cluster="?", event_cluster="?") -> CrossPredictionPair:
    p_levels = {a.frequency for a in power_avgs}
    e_levels = {a.frequency for a in event_avgs}
    common_levels = sorted(p_levels & e_levels)
    if not common_levels:
        raise NoCommonFrequencies(f"levels {sorted(p_levels)} and {sorted(e_levels)} do not intersect")
    p_bench = {a.benchmark_id for a in power_avgs}
    e_bench = {a.benchmark_id for a in event_avgs}
    if not p_bench & e_bench:
        raise NoCommonBenchmarks("the two traces share no benchmark")
    events = {(a.benchmark_id, a.frequency): a for a in event_avgs}
    rows = tuple(
        (p, events[(p.benchmark_id, p.frequency)])
        for p in sorted(power_avgs, key=lambda a: (a.frequency, a.benchmark_id))
        if (p.benchmark_id, p.frequency) in events
    )
    if not rows:
        raise NoCommonBenchmarks("no benchmark was recorded at a common level on both clusters")
    return CrossPredictionPair(
        source_cluster=event_cluster,
        target_cluster=power_cluster,
        pairing=tuple((f, f) for f in common_levels),
        rows=rows,
        unpaired_levels=tuple(sorted(p_levels ^ e_levels)),
        unshared_benchmarks=tuple(sorted(p_bench ^ e_bench)),
    )


def join_traces(power_source: ValidatedTrace, event_source: ValidatedTrace) -> CrossPredictionPair:
    return join_averages(
        benchmark_averages(power_source), benchmark_averages(event_source),
        power_source.cluster.value, event_source.cluster.value,
    )


def train_cross_model(family, power_source: ValidatedTrace, event_source: ValidatedTrace,
                      mode: str = UNIFIED, *, pmu_events=None, min_samples: int = MIN_ROWS):
    """Fit power of one cluster against the averaged events of the other.

    Rows are the (benchmark, MHz) pairs recorded on both clusters; the
    return value mirrors :func:`hetpower.catalog.train`.
    """
    family = ModelFamily.parse(family)
    mode = parse_mode(mode)
    pair = join_traces(power_source, event_source)
    meta = {
        "cross": CROSS_AVERAGED,
        "power_cluster": pair.target_cluster,
        "event_cluster": pair.source_cluster,
        "paired_levels": [f for f, _ in pair.pairing],
        "unpaired_levels": list(pair.unpaired_levels),
    }
    if mode == UNIFIED:
        return fit_family(family, pair, None, pmu_events, meta)
    out = {}
    skipped = []
    for f, _ in pair.pairing:
        sub = pair.restrict(f)
        if len(sub) < min_samples:
            skipped.append(f)
            continue
        out[f] = fit_family(family, sub, f, pmu_events, meta)
    meta["skipped_levels"] = skipped
    if not out:
        raise NoCommonBenchmarks(f"no paired level has {min_samples} shared benchmarks")
    return out


def evaluate_cross_model(model, power_test: ValidatedTrace, event_test: ValidatedTrace) -> EvaluationReport:
    """Score an averaged cross model on the joined averages of a test split."""
    pair = join_traces(power_test, event_test)
    return _score(model, pair, None, pair.benchmarks, CROSS_AVERAGED)


# -- train/test split ---------------------------------------------------------

def split_benchmarks(benchmarks, test_fraction: float = 0.3, seed: int = 0) -> tuple:
    """Shuffle benchmark ids with ``seed`` and cut off a test share."""
    ids = sorted(set(benchmarks))
    if len(ids) < 2:
        raise ValueError("need at least two benchmarks to split")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(ids))
    n_test = min(len(ids) - 1, max(1, int(round(test_fraction * len(ids)))))
    test = sorted(ids[i] for i in order[:n_test])
    train = sorted(ids[i] for i in order[n_test:])
    return train, test


def split_trace(trace: ValidatedTrace, test_ids) -> tuple:
    test_ids = set(test_ids)
    train = subset(trace, lambda r: r.benchmark_id not in test_ids)
    test = subset(trace, lambda r: r.benchmark_id in test_ids)
    return train, test
