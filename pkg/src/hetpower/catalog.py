"""The ten power-model families and how they are trained."""

from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import AllRowsDropped, MissingColumn
from .regression import (
    MIN_ROWS,
    CoefficientVector,
    DesignMatrix,
    fit_ols,
    predict_rows,
    select_pmu_events,
)
from .trace import CPU_STATES, PMU_CORE, ValidatedTrace, partition_by_frequency

log = logging.getLogger(__name__)

UNIFIED = "unified"
PER_FREQUENCY = "per-frequency"


class ModelFamily(str, enum.Enum):
    PHYSICAL = "PHYSICAL"
    PMU = "PMU"
    CPU_STATE = "CPU_STATE"
    P2 = "P2"
    P2S = "P2S"
    UOP = "UOP"
    UOS_IDLE = "UOS_IDLE"
    UOS_FULL = "UOS_FULL"
    CSR = "CSR"
    CSR_UPDATED = "CSR_UPDATED"

    @classmethod
    def parse(cls, value) -> "ModelFamily":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        key = {"STATE": "CPU_STATE", "UPDATED_CSR": "CSR_UPDATED"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(f.value.lower() for f in cls)
            raise ValueError(f"unknown model family {value!r}; choose from {names}") from None

    @property
    def uses_pmu_selection(self) -> bool:
        return self in (ModelFamily.PMU, ModelFamily.P2, ModelFamily.P2S)


def parse_mode(value: str) -> str:
    v = str(value).strip().lower().replace("_", "-")
    if v == UNIFIED:
        return UNIFIED
    if v in ("per-frequency", "perfreq", "per-freq"):
        return PER_FREQUENCY
    raise ValueError(f"unknown training mode {value!r}")


@dataclass(frozen=True)
class Transform:
    """One regressor: a column, or an arithmetic combination of two."""

    kind: str  # raw | square | product | square_times | ratio | ipc
    a: str
    b: str | None = None

    @property
    def name(self) -> str:
        k, a, b = self.kind, self.a, self.b
        if k == "raw":
            return a
        if k == "square":
            return f"{a}^2"
        if k == "product":
            return f"{a}*{b}"
        if k == "square_times":
            return f"{a}^2*{b}"
        if k == "ratio":
            return f"{a}/{b}"
        if k == "ipc":
            return "ipc"
        raise ValueError(k)

    @property
    def columns(self) -> tuple:
        return (self.a,) if self.b is None else (self.a, self.b)

    @property
    def denominator(self) -> str | None:
        if self.kind == "ratio":
            return self.b
        if self.kind == "ipc":
            return self.b
        return None

    def apply(self, cols: Mapping[str, np.ndarray]) -> np.ndarray:
        a = cols[self.a]
        b = cols[self.b] if self.b is not None else None
        k = self.kind
        if k == "raw":
            return a
        if k == "square":
            return a * a
        if k == "product":
            return a * b
        if k == "square_times":
            return a * a * b
        with np.errstate(divide="ignore", invalid="ignore"):
            return a / b  # ratio and ipc; zero denominators are filtered upstream


def raw(c):
    return Transform("raw", c)


IPC = Transform("ipc", "instructions", "cycles")


@dataclass(frozen=True)
class RegressorSpec:
    family: ModelFamily
    terms: tuple

    @property
    def names(self) -> tuple:
        return ("const",) + tuple(t.name for t in self.terms)

    @property
    def required_columns(self) -> tuple:
        return tuple(dict.fromkeys(c for t in self.terms for c in t.columns))

    def __len__(self):
        return len(self.terms) + 1


_PHYSICAL = (raw("voltage"), raw("frequency"), raw("temperature"))
_STATES = tuple(raw(s) for s in CPU_STATES)
_CSR = (
    IPC,
    Transform("ratio", "int_instructions", "instructions"),
    Transform("ratio", "vfp_instructions", "instructions"),
    Transform("ratio", "l1d_access", "instructions"),
    Transform("ratio", "l2_access", "instructions"),
    Transform("ratio", "l2_refill", "instructions"),
)


def regressor_spec(family, pmu_events: Sequence[str] | None = None) -> RegressorSpec:
    """Ordered regressors of ``family``.

    ``pmu_events`` replaces the five fixed PMU counters of the PMU, P2 and
    P2S families (e.g. with the output of :func:`select_pmu_events`).
    """
    family = ModelFamily.parse(family)
    pmu = tuple(raw(e) for e in (pmu_events or PMU_CORE))
    F = ModelFamily
    terms = {
        F.PHYSICAL: _PHYSICAL,
        F.PMU: pmu,
        F.CPU_STATE: _STATES,
        F.P2: _PHYSICAL + pmu,
        F.P2S: _PHYSICAL + pmu + _STATES,
        F.UOP: (raw("frequency"), Transform("square", "frequency")),
        F.UOS_IDLE: (raw("idle"), Transform("square", "idle")),
        F.UOS_FULL: (
            raw("idle"),
            raw("frequency"),
            Transform("product", "idle", "frequency"),
            Transform("square", "idle"),
            Transform("square_times", "idle", "frequency"),
        ),
        F.CSR: _CSR,
        F.CSR_UPDATED: _PHYSICAL + _CSR + _STATES,
    }[family]
    return RegressorSpec(family, terms)


def build_design_matrix(family, source, pmu_events=None) -> DesignMatrix:
    """Apply the family's transforms to every sample of ``source``.

    ``source`` is anything with ``has_column``, ``column`` and ``targets``
    (a :class:`ValidatedTrace` or a joined benchmark-average table).
    Frequency enters the design in GHz. Samples whose ratio or IPC
    denominator is zero are dropped and counted.
    """
    spec = family if isinstance(family, RegressorSpec) else regressor_spec(family, pmu_events)
    cols = {}
    for c in spec.required_columns:
        if not source.has_column(c):
            raise MissingColumn(c, spec.family.value)
        v = np.asarray(source.column(c), dtype=np.float64)
        cols[c] = v / 1000.0 if c == "frequency" else v
    y = np.asarray(source.targets, dtype=np.float64)
    n = y.shape[0]
    keep = np.ones(n, dtype=bool)
    for t in spec.terms:
        if t.denominator is not None:
            keep &= cols[t.denominator] != 0
    dropped = int(n - keep.sum())
    if n and not keep.any():
        raise AllRowsDropped(f"{spec.family.value}: every sample has a zero ratio denominator")
    X = np.empty((int(keep.sum()), len(spec)))
    X[:, 0] = 1.0
    for j, t in enumerate(spec.terms, start=1):
        X[:, j] = t.apply(cols)[keep]
    return DesignMatrix(spec.names, X, y[keep], np.flatnonzero(keep), dropped)


@dataclass(frozen=True)
class PowerModel:
    """A fitted family; ``frequency`` is None for a unified model."""

    family: ModelFamily
    coefficients: CoefficientVector
    frequency: int | None = None
    pmu_events: tuple | None = None
    metadata: Mapping = field(default_factory=dict, compare=False)

    @property
    def mode(self) -> str:
        return UNIFIED if self.frequency is None else PER_FREQUENCY

    @property
    def spec(self) -> RegressorSpec:
        return regressor_spec(self.family, self.pmu_events)

    @property
    def label(self) -> str:
        return f"{self.family.value}/{self.mode}"

    def design(self, source) -> DesignMatrix:
        return build_design_matrix(self.spec, source)

    def predict(self, source) -> tuple:
        """(predictions, design) for every expressible sample of ``source``."""
        d = self.design(source)
        return predict_rows(self.coefficients, d), d


def trace_fingerprint(trace) -> str:
    h = hashlib.sha256()
    for name in sorted(trace.available_columns):
        h.update(name.encode())
        h.update(np.ascontiguousarray(trace.column(name)).tobytes())
    for r in trace.records:
        h.update(r.benchmark_id.encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


def fit_family(family, source, frequency=None, pmu_events=None, metadata=None) -> PowerModel:
    family = ModelFamily.parse(family)
    events = tuple(pmu_events) if (pmu_events and family.uses_pmu_selection) else None
    d = build_design_matrix(family, source, events)
    coeffs = fit_ols(d)
    meta = dict(metadata or {})
    meta.update(
        sample_count=d.n_rows,
        dropped_rows=d.dropped,
        rank=coeffs.rank,
        condition_estimate=coeffs.condition_estimate,
        solver="svd-min-norm-equilibrated",
    )
    if coeffs.rank < len(coeffs.names):
        log.info("%s @ %s: rank %d < %d columns", family.value, frequency, coeffs.rank, len(coeffs.names))
    return PowerModel(family, coeffs, frequency, events, meta)


def train(
    family,
    trace: ValidatedTrace,
    mode: str = UNIFIED,
    *,
    pmu_events: Sequence[str] | None = None,
    select_events: bool = False,
    slots: int = 5,
    candidates: Sequence[str] | None = None,
    min_samples: int = MIN_ROWS,
):
    """Fit ``family`` on ``trace``.

    Returns one :class:`PowerModel` in unified mode, or a dict keyed by MHz
    in per-frequency mode. Levels with fewer than ``min_samples`` samples
    are skipped and listed under ``metadata["skipped_levels"]``.
    """
    family = ModelFamily.parse(family)
    mode = parse_mode(mode)
    meta = {"trace_fingerprint": trace_fingerprint(trace), "cluster": trace.cluster.value}
    if select_events and family.uses_pmu_selection:
        pool = candidates or [c for c in trace.pmu_names if c != "cycles"]
        pmu_events = select_pmu_events(trace, pool, slots)
        meta["selected_events"] = list(pmu_events)

    if mode == UNIFIED:
        meta["frequency_levels"] = list(trace.frequency_levels)
        return fit_family(family, trace, None, pmu_events, meta)

    parts = partition_by_frequency(trace)
    skipped = [f for f, p in parts.items() if len(p) < min_samples]
    for f in skipped:
        log.warning("%s: level %d MHz has %d samples (< %d), skipped",
                    family.value, f, len(parts[f]), min_samples)
    meta["skipped_levels"] = skipped
    return {
        f: fit_family(family, p, f, pmu_events, meta)
        for f, p in parts.items()
        if f not in skipped
    }
