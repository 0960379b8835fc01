"""Trace records, validation, frequency partitioning and benchmark averaging."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import EmptyTrace, MissingColumn, MixedClusters

PMU_CORE = ("cycles", "l1d_access", "l1i_access", "instructions", "mem_access")
PMU_EXTENDED = ("int_instructions", "vfp_instructions", "l2_access", "l2_refill")
PMU_CANONICAL = PMU_CORE + PMU_EXTENDED
CPU_STATES = ("user", "system", "idle", "iowait", "irq", "softirq")
PHYSICAL = ("voltage", "frequency", "temperature")

STATE_SUM_TOLERANCE = 1e-6


class Cluster(str, enum.Enum):
    BIG = "BIG"
    LITTLE = "LITTLE"

    @classmethod
    def parse(cls, value) -> "Cluster":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown cluster {value!r}; expected BIG or LITTLE") from None


@dataclass(frozen=True)
class SampleRecord:
    """One sampled interval of one cluster.

    ``pmu`` holds raw counts per interval, ``cpu_state`` holds residency
    fractions of the interval. ``frequency`` is in MHz.
    """

    timestamp: float
    cluster: Cluster
    benchmark_id: str
    frequency: int
    voltage: float
    temperature: float
    power: float
    pmu: Mapping[str, float] = field(default_factory=dict)
    cpu_state: Mapping[str, float] = field(default_factory=dict)

    def value(self, name: str) -> float:
        """Scalar regressor lookup by canonical name."""
        if name in PHYSICAL or name in ("power", "timestamp"):
            return float(getattr(self, name))
        if name in self.pmu:
            return float(self.pmu[name])
        if name in self.cpu_state:
            return float(self.cpu_state[name])
        raise MissingColumn(name)


def check_record(rec: SampleRecord) -> str | None:
    """Return the first violated invariant of ``rec`` or None."""
    finite = math.isfinite
    if not (finite(rec.timestamp) and rec.timestamp >= 0):
        return "timestamp"
    if not (isinstance(rec.frequency, (int, np.integer)) and rec.frequency > 0):
        return "frequency"
    if not (finite(rec.voltage) and rec.voltage > 0):
        return "voltage"
    if not finite(rec.temperature):
        return "temperature"
    if not (finite(rec.power) and rec.power > 0):
        return "power"
    for v in rec.pmu.values():
        if not (finite(v) and v >= 0):
            return "pmu"
    total = 0.0
    for v in rec.cpu_state.values():
        if not (finite(v) and 0.0 <= v <= 1.0):
            return "cpu_state"
        total += v
    if total > 1.0 + STATE_SUM_TOLERANCE:
        return "cpu_state_sum"
    return None


@dataclass(frozen=True)
class ValidatedTrace:
    """Cleaned records of a single cluster.

    Build through :func:`validate_trace`; the constructor does not re-check
    invariants. ``missing_columns`` lists canonical PMU/state names not
    carried by every record, so families needing them can fail clearly.
    """

    records: tuple
    cluster: Cluster
    frequency_levels: tuple
    benchmarks: frozenset
    dropped_count: int = 0
    drop_reasons: Mapping[str, int] = field(default_factory=dict)
    missing_columns: tuple = ()

    def __len__(self):
        return len(self.records)

    @cached_property
    def available_columns(self) -> frozenset:
        if not self.records:
            return frozenset()
        pmu = set(self.records[0].pmu)
        state = set(self.records[0].cpu_state)
        for r in self.records[1:]:
            pmu &= r.pmu.keys()
            state &= r.cpu_state.keys()
        return frozenset(pmu | state | set(PHYSICAL) | {"power", "timestamp"})

    def has_column(self, name: str) -> bool:
        return name in self.available_columns

    @cached_property
    def _columns(self) -> dict:
        return {}

    def column(self, name: str) -> np.ndarray:
        """Values of one column across all records (frequency in MHz)."""
        cache = self._columns
        if name not in cache:
            if not self.has_column(name):
                raise MissingColumn(name)
            arr = np.array([r.value(name) for r in self.records], dtype=np.float64)
            arr.flags.writeable = False
            cache[name] = arr
        return cache[name]

    def columns(self, names: Iterable[str]) -> dict:
        return {n: self.column(n) for n in names}

    @property
    def targets(self) -> np.ndarray:
        return self.column("power")

    @property
    def pmu_names(self) -> tuple:
        return tuple(sorted(n for n in self.available_columns if n not in _NON_PMU))


_NON_PMU = frozenset(PHYSICAL) | frozenset(CPU_STATES) | {"power", "timestamp"}


def _assemble(records: Sequence[SampleRecord], cluster, dropped=0, reasons=None) -> ValidatedTrace:
    records = tuple(records)
    missing = []
    for name in PMU_CANONICAL:
        if not all(name in r.pmu for r in records):
            missing.append(name)
    for name in CPU_STATES:
        if not all(name in r.cpu_state for r in records):
            missing.append(name)
    return ValidatedTrace(
        records=records,
        cluster=cluster,
        frequency_levels=tuple(sorted({r.frequency for r in records})),
        benchmarks=frozenset(r.benchmark_id for r in records),
        dropped_count=dropped,
        drop_reasons=dict(reasons or {}),
        missing_columns=tuple(missing),
    )


def validate_trace(raw_records: Iterable[SampleRecord]) -> ValidatedTrace:
    """Drop records that break an invariant and return the survivors.

    Records are stably sorted by timestamp. Mixed clusters reject the whole
    input; an input where nothing survives raises :class:`EmptyTrace`.
    """
    raw = list(raw_records)
    if not raw:
        raise EmptyTrace("no records given")
    clusters = {Cluster.parse(r.cluster) for r in raw}
    if len(clusters) > 1:
        raise MixedClusters(f"records from several clusters: {sorted(c.value for c in clusters)}")
    cluster = clusters.pop()

    kept = []
    reasons = Counter()
    for rec in raw:
        bad = check_record(rec)
        if bad is None:
            kept.append(rec)
        else:
            reasons[bad] += 1
    if not kept:
        raise EmptyTrace(f"all {len(raw)} records failed validation: {dict(reasons)}")
    kept.sort(key=lambda r: r.timestamp)
    return _assemble(kept, cluster, dropped=sum(reasons.values()), reasons=reasons)


def subset(trace: ValidatedTrace, keep) -> ValidatedTrace:
    """Trace restricted to the records for which ``keep(record)`` holds."""
    records = [r for r in trace.records if keep(r)]
    if not records:
        raise EmptyTrace("subset selected no records")
    return _assemble(records, trace.cluster)


def partition_by_frequency(trace: ValidatedTrace) -> dict:
    """Map each DVFS level (MHz) to the sub-trace recorded at that level."""
    groups: dict = {}
    for r in trace.records:
        groups.setdefault(r.frequency, []).append(r)
    return {f: _assemble(groups[f], trace.cluster) for f in sorted(groups)}


@dataclass(frozen=True)
class BenchmarkAverage:
    benchmark_id: str
    frequency: int
    mean_power: float
    mean_regressors: Mapping[str, float]
    sample_count: int


def benchmark_averages(trace: ValidatedTrace) -> list:
    """Mean power and mean regressors per (benchmark, frequency) pair.

    Regressors carried by every record of the trace are averaged; the list
    is sorted by benchmark id then frequency.
    """
    keys = sorted({(r.benchmark_id, r.frequency) for r in trace.records})
    index = {k: i for i, k in enumerate(keys)}
    codes = np.array([index[(r.benchmark_id, r.frequency)] for r in trace.records], dtype=np.int64)
    names = [n for n in _ordered_columns(trace) if n != "timestamp"]
    values = np.column_stack([trace.column(n) for n in names])
    sums, counts = kernels.group_sums(codes, values, len(keys))
    means = sums / counts[:, None]
    p = names.index("power")
    out = []
    for (bench, freq), row, count in zip(keys, means, counts):
        regs = {n: float(v) for n, v in zip(names, row) if n != "power"}
        regs["frequency"] = float(freq)
        out.append(BenchmarkAverage(bench, int(freq), float(row[p]), regs, int(count)))
    return out


def _ordered_columns(trace: ValidatedTrace) -> list:
    avail = trace.available_columns
    head = ["power", *PHYSICAL]
    pmu = [n for n in PMU_CANONICAL if n in avail]
    extra = sorted(n for n in avail if n not in _NON_PMU and n not in PMU_CANONICAL)
    states = [n for n in CPU_STATES if n in avail]
    return head + pmu + extra + states
