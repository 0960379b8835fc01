"""Trace CSV files, model export documents and report serialization.

Trace CSV layout: header row, comma separated, dot decimals. Required
columns ``timestamp, cluster, benchmark, freq_mhz, volt, temp_c, power_w``;
counters as ``pmu_<name>``, residency fractions as ``state_<name>``.
Header names are case-insensitive; other columns are ignored with a
warning. An empty ``pmu_``/``state_`` cell means the value was not sampled.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .catalog import ModelFamily, PowerModel
from .errors import SchemaError
from .evaluation import EvaluationReport, SampleError
from .regression import CoefficientVector
from .trace import CPU_STATES, PMU_CANONICAL, Cluster, SampleRecord

log = logging.getLogger(__name__)

REQUIRED = ("timestamp", "cluster", "benchmark", "freq_mhz", "volt", "temp_c", "power_w")
MODEL_FORMAT = "hetpower-model/1"
REPORT_FORMAT = "hetpower-report/1"


def read_trace_csv(path, sample_period: float | None = None) -> list:
    """Parse a trace CSV into :class:`SampleRecord` objects (not yet validated).

    With ``sample_period`` (seconds) every counter is divided by it, turning
    counts per interval into counts per second.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        cols = [h.strip().lower() for h in header]
        missing = [c for c in REQUIRED if c not in cols]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}")
        if len(set(cols)) != len(cols):
            raise SchemaError(f"{path}: duplicate column names")
        pos = {c: i for i, c in enumerate(cols)}
        pmu_cols = [(c[4:], pos[c]) for c in cols if c.startswith("pmu_") and len(c) > 4]
        state_cols = [(c[6:], pos[c]) for c in cols if c.startswith("state_") and len(c) > 6]
        known = set(REQUIRED) | {f"pmu_{n}" for n, _ in pmu_cols} | {f"state_{n}" for n, _ in state_cols}
        unknown = [h for h, c in zip(header, cols) if c not in known]
        if unknown:
            log.warning("%s: ignoring unknown columns %s", path, unknown)
        for name, _ in state_cols:
            if name not in CPU_STATES:
                log.warning("%s: non-canonical state column state_%s", path, name)

        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise SchemaError(f"{path}:{lineno}: expected {len(cols)} fields, got {len(row)}")
            try:
                freq_text = row[pos["freq_mhz"]].strip()
                freq = float(freq_text)
                if freq != int(freq):
                    raise ValueError(f"non-integer frequency {freq_text}")
                pmu = {n: float(row[i]) for n, i in pmu_cols if row[i].strip()}
                if sample_period:
                    pmu = {n: v / sample_period for n, v in pmu.items()}
                records.append(SampleRecord(
                    timestamp=float(row[pos["timestamp"]]),
                    cluster=Cluster.parse(row[pos["cluster"]]),
                    benchmark_id=row[pos["benchmark"]].strip(),
                    frequency=int(freq),
                    voltage=float(row[pos["volt"]]),
                    temperature=float(row[pos["temp_c"]]),
                    power=float(row[pos["power_w"]]),
                    pmu=pmu,
                    cpu_state={n: float(row[i]) for n, i in state_cols if row[i].strip()},
                ))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise SchemaError(f"{path}: no data rows")
    return records


def _ordered(names: Iterable[str], canonical: Sequence[str]) -> list:
    names = set(names)
    return [n for n in canonical if n in names] + sorted(names - set(canonical))


def write_trace_csv(records: Iterable[SampleRecord], path) -> None:
    """Write records in the trace layout; floats keep full precision."""
    records = list(records)
    pmu = _ordered({k for r in records for k in r.pmu}, PMU_CANONICAL)
    state = _ordered({k for r in records for k in r.cpu_state}, CPU_STATES)
    header = list(REQUIRED) + [f"pmu_{n}" for n in pmu] + [f"state_{n}" for n in state]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            w.writerow(
                [repr(float(r.timestamp)), Cluster.parse(r.cluster).value, r.benchmark_id,
                 int(r.frequency), repr(float(r.voltage)), repr(float(r.temperature)),
                 repr(float(r.power))]
                + [repr(float(r.pmu[n])) if n in r.pmu else "" for n in pmu]
                + [repr(float(r.cpu_state[n])) if n in r.cpu_state else "" for n in state]
            )


# -- models -------------------------------------------------------------------

def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite_or_none(obj)
    return obj


def model_to_dict(model, split: dict | None = None) -> dict:
    """ModelExport document for one model or an MHz-keyed map of models."""
    if isinstance(model, PowerModel):
        entries, mode, family = [model], model.mode, model.family
    else:
        entries = [model[f] for f in sorted(model)]
        if not entries:
            raise ValueError("no models to export")
        mode, family = entries[0].mode, entries[0].family
    return {
        "format": MODEL_FORMAT,
        "tool_version": __version__,
        "family": family.value,
        "mode": mode,
        "split": _jsonable(split) if split else None,
        "split_seed": split.get("seed") if split else None,
        "models": [
            {
                "frequency_mhz": m.frequency,
                "pmu_events": list(m.pmu_events) if m.pmu_events else None,
                "coefficients": [[n, float(v)] for n, v in zip(m.coefficients.names, m.coefficients.values)],
                "rank": m.coefficients.rank,
                "condition_estimate": _finite_or_none(m.coefficients.condition_estimate),
                "metadata": _jsonable(dict(m.metadata)),
            }
            for m in entries
        ],
    }


def model_from_dict(doc: dict):
    """Inverse of :func:`model_to_dict`; returns a model or an MHz-keyed map."""
    try:
        if doc.get("format") != MODEL_FORMAT:
            raise SchemaError(f"not a model document (format={doc.get('format')!r})")
        family = ModelFamily.parse(doc["family"])
        out = {}
        for e in doc["models"]:
            names = tuple(n for n, _ in e["coefficients"])
            values = np.array([float(v) for _, v in e["coefficients"]], dtype=np.float64)
            cond = e.get("condition_estimate")
            coeffs = CoefficientVector(names, values, int(e["rank"]),
                                       math.inf if cond is None else float(cond))
            events = tuple(e["pmu_events"]) if e.get("pmu_events") else None
            freq = e.get("frequency_mhz")
            m = PowerModel(family, coeffs, None if freq is None else int(freq), events,
                           dict(e.get("metadata") or {}))
            if m.spec.names != names:
                raise SchemaError(f"coefficient names {list(names)} do not match {family.value}")
            out[m.frequency] = m
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from exc
    if doc["mode"] == "unified":
        if list(out) != [None]:
            raise SchemaError("unified model document must hold exactly one model")
        return out[None]
    if None in out:
        raise SchemaError("per-frequency entry without frequency_mhz")
    return out


def save_model(model, path, split: dict | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, split), indent=2) + "\n", encoding="utf-8")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None
    return model_from_dict(doc)


# -- reports ------------------------------------------------------------------

def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "tool_version": __version__,
        "model": report.model,
        "kind": report.kind,
        "overall_mape": report.overall_mape,
        "per_frequency_mape": [[f, v] for f, v in report.frequency_table()],
        "skipped": dict(report.skipped),
        "metadata": _jsonable(dict(report.metadata)),
        "per_sample": [list(s) for s in report.per_sample],
    }


def report_from_dict(doc: dict) -> EvaluationReport:
    if doc.get("format") != REPORT_FORMAT:
        raise SchemaError(f"not a report document (format={doc.get('format')!r})")
    try:
        return EvaluationReport(
            model=doc["model"],
            kind=doc["kind"],
            per_sample=tuple(SampleError(*row) for row in doc["per_sample"]),
            per_frequency_mape={int(f): float(v) for f, v in doc["per_frequency_mape"]},
            overall_mape=float(doc["overall_mape"]),
            skipped=dict(doc.get("skipped") or {}),
            metadata=dict(doc.get("metadata") or {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed report document: {exc}") from exc


def save_report(report: EvaluationReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=1) + "\n", encoding="utf-8")


def load_report(path) -> EvaluationReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None
    return report_from_dict(doc)
