"""Synthetic traces drawn from known linear power models.

Power of every sample is the ground-truth family applied to noiseless
regressors, plus additive Gaussian noise. Counters come from independent
normals truncated at zero; CPU-state fractions are truncated to [0, 1]
and rescaled onto the simplex when a draw sums past one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import truncnorm

from .catalog import ModelFamily, build_design_matrix, regressor_spec
from .errors import InvalidSpec, PowerModelError
from .trace import (
    CPU_STATES,
    PMU_CANONICAL,
    Cluster,
    SampleRecord,
    ValidatedTrace,
    _assemble,
    validate_trace,
)


@dataclass(frozen=True)
class BenchmarkProfile:
    """Mean and spread of every counter and state fraction for one benchmark.

    PMU means are counts per interval at 1 GHz when the spec scales
    counters with frequency, otherwise counts per interval.
    """

    pmu: Mapping[str, tuple]
    cpu_state: Mapping[str, tuple]
    temperature: tuple = (45.0, 2.0)


@dataclass(frozen=True)
class GroundTruthSpec:
    cluster: Cluster
    family: ModelFamily
    levels: tuple
    voltages: Mapping[int, float]
    coefficients: Mapping  # name -> value, or MHz -> (name -> value)
    benchmarks: Mapping[str, BenchmarkProfile]
    noise_sigma: float = 0.0
    samples_per_benchmark_per_level: int = 10
    seed: int = 0
    sample_period: float = 0.2
    pmu_events: tuple | None = None
    scale_pmu_with_frequency: bool = True
    temperature_per_ghz: float = 6.0

    @property
    def per_level(self) -> bool:
        return bool(self.coefficients) and not isinstance(next(iter(self.coefficients)), str)

    def coefficients_at(self, level: int) -> dict:
        return dict(self.coefficients[level] if self.per_level else self.coefficients)


@dataclass(frozen=True)
class GroundTruth:
    family: ModelFamily
    names: tuple
    coefficients: Mapping[int, np.ndarray]  # MHz -> vector in ``names`` order
    noise: np.ndarray = field(repr=False)
    pmu_events: tuple | None = None

    def vector(self, level: int | None = None) -> np.ndarray:
        if level is None:
            level = next(iter(self.coefficients))
        return self.coefficients[level]


def check_spec(spec: GroundTruthSpec) -> None:
    if spec.noise_sigma < 0:
        raise InvalidSpec("noise_sigma must be >= 0")
    if not spec.levels:
        raise InvalidSpec("no frequency levels")
    if any(int(f) != f or f <= 0 for f in spec.levels) or len(set(spec.levels)) != len(spec.levels):
        raise InvalidSpec(f"levels must be distinct positive integers: {spec.levels}")
    for f in spec.levels:
        v = spec.voltages.get(f)
        if v is None or not v > 0:
            raise InvalidSpec(f"no positive voltage for level {f}")
    if spec.samples_per_benchmark_per_level < 1:
        raise InvalidSpec("samples_per_benchmark_per_level must be >= 1")
    if spec.sample_period <= 0:
        raise InvalidSpec("sample_period must be > 0")
    if not spec.benchmarks:
        raise InvalidSpec("no benchmark profiles")
    for name, prof in spec.benchmarks.items():
        for kind, table in (("pmu", prof.pmu), ("cpu_state", prof.cpu_state)):
            for col, (mean, spread) in table.items():
                if spread < 0:
                    raise InvalidSpec(f"{name}: negative spread for {kind} {col}")
                if kind == "pmu" and mean < 0:
                    raise InvalidSpec(f"{name}: negative mean for counter {col}")
        if prof.temperature[1] < 0:
            raise InvalidSpec(f"{name}: negative temperature spread")
    names = regressor_spec(spec.family, spec.pmu_events).names
    if spec.per_level:
        missing = set(spec.levels) - set(spec.coefficients)
        if missing:
            raise InvalidSpec(f"no coefficients for levels {sorted(missing)}")
    for f in spec.levels:
        got = spec.coefficients_at(f)
        if set(got) != set(names):
            raise InvalidSpec(
                f"coefficients for {spec.family.value} must name exactly {list(names)}, got {sorted(got)}"
            )


def _draw(rng, mean, spread, size, upper=np.inf):
    if spread == 0:
        return np.full(size, float(min(max(mean, 0.0), upper)))
    a = (0.0 - mean) / spread
    b = (upper - mean) / spread
    return truncnorm.rvs(a, b, loc=mean, scale=spread, size=size, random_state=rng)


def _draw_regressors(spec: GroundTruthSpec, rng) -> list:
    """Records with placeholder power, in schedule order."""
    k = spec.samples_per_benchmark_per_level
    records = []
    step = 0
    for f in spec.levels:
        ghz = f / 1000.0
        pmu_scale = ghz if spec.scale_pmu_with_frequency else 1.0
        for bench in spec.benchmarks:
            prof = spec.benchmarks[bench]
            pmu = {c: _draw(rng, m * pmu_scale, s * pmu_scale, k) for c, (m, s) in sorted(prof.pmu.items())}
            state = {c: _draw(rng, m, s, k, upper=1.0) for c, (m, s) in sorted(prof.cpu_state.items())}
            if state:
                stack = np.column_stack(list(state.values()))
                total = stack.sum(axis=1)
                over = total > 1.0
                stack[over] /= total[over, None]
                state = {c: stack[:, j] for j, c in enumerate(state)}
            t_mean, t_spread = prof.temperature
            temp = t_mean + spec.temperature_per_ghz * ghz + (
                rng.normal(0.0, t_spread, k) if t_spread > 0 else np.zeros(k))
            for i in range(k):
                records.append(SampleRecord(
                    timestamp=step * spec.sample_period,
                    cluster=spec.cluster,
                    benchmark_id=bench,
                    frequency=int(f),
                    voltage=float(spec.voltages[f]),
                    temperature=float(temp[i]),
                    power=1.0,
                    pmu={c: float(v[i]) for c, v in pmu.items()},
                    cpu_state={c: float(v[i]) for c, v in state.items()},
                ))
                step += 1
    return records


def generate_trace(spec: GroundTruthSpec) -> tuple:
    """Draw a trace from ``spec``; returns ``(ValidatedTrace, GroundTruth)``.

    The same spec (including seed) always yields a bit-identical trace.
    """
    spec = dataclasses.replace(spec, cluster=Cluster.parse(spec.cluster),
                               family=ModelFamily.parse(spec.family))
    check_spec(spec)
    rng = np.random.default_rng(spec.seed)
    draft = _assemble(_draw_regressors(spec, rng), spec.cluster)
    rspec = regressor_spec(spec.family, spec.pmu_events)
    try:
        design = build_design_matrix(rspec, draft)
    except PowerModelError as exc:
        raise InvalidSpec(f"profiles do not populate {spec.family.value}: {exc}") from exc
    if design.dropped:
        raise InvalidSpec(f"{design.dropped} samples have a zero ratio denominator")

    truth = {f: np.array([spec.coefficients_at(f)[n] for n in rspec.names], dtype=np.float64)
             for f in spec.levels}
    freqs = draft.column("frequency")
    clean = np.empty(len(draft))
    for f, beta in truth.items():
        rows = freqs == f
        clean[rows] = design.rows[rows] @ beta
    noise = rng.normal(0.0, spec.noise_sigma, len(draft)) if spec.noise_sigma > 0 else np.zeros(len(draft))
    power = clean + noise
    if not (power > 0).all():
        raise InvalidSpec(f"{int((power <= 0).sum())} samples get non-positive power; raise the intercept")

    records = [dataclasses.replace(r, power=float(p)) for r, p in zip(draft.records, power)]
    trace = validate_trace(records)
    if trace.dropped_count:
        raise InvalidSpec(f"generated trace lost {trace.dropped_count} records in validation")
    return trace, GroundTruth(spec.family, rspec.names, truth, noise, spec.pmu_events)


def make_cluster_pair(spec: GroundTruthSpec, event_scale: float, power_offset: float = 0.0,
                      power_scale: float = 1.0, little_levels: Sequence[int] | None = None) -> tuple:
    """A BIG trace from ``spec`` and a LITTLE twin running the same schedule.

    The twin's counters are multiplied by ``event_scale`` and its power is
    ``power * power_scale + power_offset``; ``little_levels`` restricts the
    twin to a subset of the BIG levels.
    """
    if not event_scale > 0:
        raise InvalidSpec("event_scale must be > 0")
    if not power_scale > 0:
        raise InvalidSpec("power_scale must be > 0")
    big, _ = generate_trace(dataclasses.replace(spec, cluster=Cluster.BIG))
    levels = set(big.frequency_levels if little_levels is None else little_levels)
    if not levels <= set(big.frequency_levels):
        raise InvalidSpec(f"LITTLE levels {sorted(levels)} are not all BIG levels")
    if not levels:
        raise InvalidSpec("LITTLE trace would have no levels")
    twin = []
    for r in big.records:
        if r.frequency not in levels:
            continue
        p = r.power * power_scale + power_offset
        if not p > 0:
            raise InvalidSpec("power_offset drives LITTLE power to <= 0 W")
        twin.append(dataclasses.replace(
            r, cluster=Cluster.LITTLE, power=p,
            pmu={c: v * event_scale for c, v in r.pmu.items()},
        ))
    return big, validate_trace(twin)


# -- ready-made specs ---------------------------------------------------------

_COUNTER_RANGES = {
    # counts per interval at 1 GHz: (low, high) of the benchmark mean
    "cycles": (1.2e8, 1.9e8),
    "instructions": (0.6e8, 2.2e8),
    "l1d_access": (2.0e7, 8.0e7),
    "l1i_access": (3.0e7, 9.0e7),
    "mem_access": (1.0e6, 2.0e7),
    "int_instructions": (3.0e7, 1.2e8),
    "vfp_instructions": (1.0e6, 3.0e7),
    "l2_access": (2.0e6, 2.0e7),
    "l2_refill": (1.0e5, 5.0e6),
}
_STATE_RANGES = {
    "user": (0.35, 0.75),
    "system": (0.02, 0.12),
    "idle": (0.05, 0.35),
    "iowait": (0.0, 0.04),
    "irq": (0.0, 0.01),
    "softirq": (0.0, 0.02),
}


def random_profiles(n: int, rng, counters: Sequence[str] = PMU_CANONICAL, rel_spread: float = 0.15) -> dict:
    """``n`` benchmark profiles named ``bench00``.. with random means."""
    out = {}
    for i in range(n):
        pmu = {}
        for c in counters:
            lo, hi = _COUNTER_RANGES[c]
            m = float(rng.uniform(lo, hi))
            pmu[c] = (m, rel_spread * m)
        state = {}
        for s in CPU_STATES:
            lo, hi = _STATE_RANGES[s]
            m = float(rng.uniform(lo, hi))
            state[s] = (m, rel_spread * m + 0.005)
        temp = (float(rng.uniform(38.0, 52.0)), 1.5)
        out[f"bench{i:02d}"] = BenchmarkProfile(pmu, state, temp)
    return out


def default_voltages(levels: Sequence[int]) -> dict:
    """Stepped, convex voltage table loosely shaped like a DVFS ladder."""
    lo, hi = min(levels), max(levels)
    span = max(hi - lo, 1)
    return {f: round(0.9 + 0.35 * ((f - lo) / span) ** 1.6, 4) for f in levels}


def random_coefficients(family, profiles, levels, voltages, rng, *, pmu_events=None,
                        per_level=False, intercept=0.3, share=0.4,
                        scale_pmu_with_frequency=True, temperature_per_ghz=6.0) -> dict:
    """Coefficients giving each regressor a positive, comparable power share.

    Each term's coefficient is ``u * share / typical(term)`` with ``u`` drawn
    from U(0.2, 1), so every term contributes up to ``share`` watts and power
    stays positive. ``per_level`` draws an independent vector per level.
    """
    family = ModelFamily.parse(family)
    probe = GroundTruthSpec(
        Cluster.BIG, family, tuple(levels), voltages,
        {n: 0.0 for n in regressor_spec(family, pmu_events).names},
        profiles, samples_per_benchmark_per_level=4, seed=int(rng.integers(2**31)),
        pmu_events=pmu_events, scale_pmu_with_frequency=scale_pmu_with_frequency,
        temperature_per_ghz=temperature_per_ghz,
    )
    draft = _assemble(_draw_regressors(probe, np.random.default_rng(probe.seed)), Cluster.BIG)
    design = build_design_matrix(regressor_spec(family, pmu_events), draft)
    typical = np.abs(design.rows).mean(axis=0)
    typical[typical == 0] = 1.0
    names = design.column_names

    def draw():
        u = rng.uniform(0.2, 1.0, len(names))
        vec = u * share / typical
        vec[0] = intercept
        return {n: float(v) for n, v in zip(names, vec)}

    if per_level:
        return {int(f): draw() for f in levels}
    return draw()


def example_spec(family="P2S", levels=(600, 1000, 1400, 1800), n_benchmarks=6, *, seed=0,
                 noise_sigma=0.0, samples=10, per_level=False, cluster=Cluster.BIG,
                 counters=PMU_CANONICAL, pmu_events=None) -> GroundTruthSpec:
    """A complete spec with random profiles and coefficients, all from ``seed``."""
    rng = np.random.default_rng(seed)
    family = ModelFamily.parse(family)
    levels = tuple(int(f) for f in levels)
    profiles = random_profiles(n_benchmarks, rng, counters)
    volts = default_voltages(levels)
    coeffs = random_coefficients(family, profiles, levels, volts, rng,
                                 pmu_events=pmu_events, per_level=per_level)
    return GroundTruthSpec(
        cluster=Cluster.parse(cluster), family=family, levels=levels, voltages=volts,
        coefficients=coeffs, benchmarks=profiles, noise_sigma=noise_sigma,
        samples_per_benchmark_per_level=samples, seed=seed,
        pmu_events=tuple(pmu_events) if pmu_events else None,
    )


# -- JSON form ----------------------------------------------------------------

def spec_to_dict(spec: GroundTruthSpec) -> dict:
    coeffs = ({str(f): dict(v) for f, v in spec.coefficients.items()}
              if spec.per_level else dict(spec.coefficients))
    return {
        "cluster": Cluster.parse(spec.cluster).value,
        "family": ModelFamily.parse(spec.family).value,
        "levels": [{"mhz": int(f), "volt": spec.voltages[f]} for f in spec.levels],
        "coefficients": coeffs,
        "per_level_coefficients": spec.per_level,
        "benchmarks": {
            name: {
                "pmu": {c: list(v) for c, v in p.pmu.items()},
                "cpu_state": {c: list(v) for c, v in p.cpu_state.items()},
                "temperature": list(p.temperature),
            }
            for name, p in spec.benchmarks.items()
        },
        "noise_sigma": spec.noise_sigma,
        "samples_per_benchmark_per_level": spec.samples_per_benchmark_per_level,
        "seed": spec.seed,
        "sample_period": spec.sample_period,
        "pmu_events": list(spec.pmu_events) if spec.pmu_events else None,
        "scale_pmu_with_frequency": spec.scale_pmu_with_frequency,
        "temperature_per_ghz": spec.temperature_per_ghz,
    }


def spec_from_dict(d: Mapping, default_seed: int = 0) -> GroundTruthSpec:
    try:
        levels = tuple(int(x["mhz"]) for x in d["levels"])
        volts = {int(x["mhz"]): float(x["volt"]) for x in d["levels"]}
        coeffs = d["coefficients"]
        if d.get("per_level_coefficients", False):
            coeffs = {int(f): {n: float(v) for n, v in c.items()} for f, c in coeffs.items()}
        else:
            coeffs = {n: float(v) for n, v in coeffs.items()}
        benches = {
            name: BenchmarkProfile(
                pmu={c: tuple(map(float, v)) for c, v in b.get("pmu", {}).items()},
                cpu_state={c: tuple(map(float, v)) for c, v in b.get("cpu_state", {}).items()},
                temperature=tuple(map(float, b.get("temperature", (45.0, 2.0)))),
            )
            for name, b in d["benchmarks"].items()
        }
        events = d.get("pmu_events")
        seed = d.get("seed")
        return GroundTruthSpec(
            cluster=Cluster.parse(d.get("cluster", "BIG")),
            family=ModelFamily.parse(d["family"]),
            levels=levels,
            voltages=volts,
            coefficients=coeffs,
            benchmarks=benches,
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            samples_per_benchmark_per_level=int(d.get("samples_per_benchmark_per_level", 10)),
            seed=int(default_seed if seed is None else seed),
            sample_period=float(d.get("sample_period", 0.2)),
            pmu_events=tuple(events) if events else None,
            scale_pmu_with_frequency=bool(d.get("scale_pmu_with_frequency", True)),
            temperature_per_ghz=float(d.get("temperature_per_ghz", 6.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"malformed synth spec: {exc}") from exc
