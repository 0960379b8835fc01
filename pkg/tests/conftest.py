import numpy as np
import pytest

from hetpower.synth import example_spec, generate_trace
from hetpower.trace import CPU_STATES, PMU_CANONICAL, SampleRecord, validate_trace

STATE_DEFAULT = {"user": 0.5, "system": 0.05, "idle": 0.3, "iowait": 0.01, "irq": 0.0, "softirq": 0.01}


def make_record(power=1.0, *, timestamp=0.0, cluster="BIG", bench="b0", freq=1000, volt=1.0,
                temp=45.0, pmu=None, state=None):
    if pmu is None:
        pmu = {c: 1000.0 + i for i, c in enumerate(PMU_CANONICAL)}
    if state is None:
        state = dict(STATE_DEFAULT)
    return SampleRecord(timestamp, cluster, bench, freq, volt, temp, power, pmu, state)


def engineered_trace(targets, n=400, seed=0, cycles_r=0.3):
    """Trace whose candidate counters correlate with power by exactly ``targets``.

    ``targets`` maps counter name -> desired Pearson r. Each counter is
    ``r * z + sqrt(1 - r^2) * w`` with ``w`` orthogonal to the standardized
    power ``z``, then shifted to stay positive.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    z = (z - z.mean()) / np.linalg.norm(z - z.mean())
    power = 2.0 + 5.0 * z

    def with_r(r):
        w = rng.standard_normal(n)
        w -= w.mean()
        w -= (w @ z) * z
        w /= np.linalg.norm(w)
        x = r * z + np.sqrt(1 - r * r) * w
        return 1e6 * (x - x.min() + 1.0)

    cols = {name: with_r(r) for name, r in targets.items()}
    cols["cycles"] = with_r(cycles_r)
    records = [
        make_record(float(power[i]), timestamp=0.1 * i, bench=f"b{i % 4}",
                    pmu={k: float(v[i]) for k, v in cols.items()})
        for i in range(n)
    ]
    return validate_trace(records)


@pytest.fixture
def make():
    return make_record


@pytest.fixture(scope="session")
def p2s_trace():
    trace, truth = generate_trace(example_spec("P2S", seed=11))
    return trace, truth


@pytest.fixture(scope="session")
def noisy_perlevel_trace():
    spec = example_spec("P2S", seed=5, per_level=True, noise_sigma=0.05, n_benchmarks=5)
    return generate_trace(spec)[0]


__all__ = ["make_record", "engineered_trace", "CPU_STATES", "STATE_DEFAULT"]
