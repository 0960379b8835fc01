import dataclasses

import numpy as np
import pytest

from conftest import make_record
from hetpower.catalog import PER_FREQUENCY, UNIFIED, ModelFamily, PowerModel, build_design_matrix, train
from hetpower.errors import EmptyEvaluation, NoCommonBenchmarks, NoCommonFrequencies, NonPositiveMeasured
from hetpower.evaluation import (
    CROSS_NAIVE,
    cross_predict_naive,
    evaluate,
    evaluate_cross_model,
    join_traces,
    percent_error,
    split_benchmarks,
    split_trace,
    train_cross_model,
)
from hetpower.regression import CoefficientVector, sse
from hetpower.synth import example_spec, generate_trace, make_cluster_pair
from hetpower.trace import PMU_CORE, validate_trace


def test_percent_error_examples():
    assert percent_error(2.0, 2.0) == 0.0
    assert percent_error(2.0, 1.5) == 100 * 0.5 / 2 == 25.0
    assert percent_error(1.0, 3.0) == 100 * 2 / 1 == 200.0
    with pytest.raises(NonPositiveMeasured):
        percent_error(0.0, 1.0)


def fixed_model(family, values, frequency=None):
    from hetpower.catalog import regressor_spec
    names = regressor_spec(family).names
    vals = np.array([values.get(n, 0.0) for n in names])
    return PowerModel(ModelFamily.parse(family), CoefficientVector(names, vals, len(names), 1.0), frequency)


def test_exact_fit_has_zero_error(p2s_trace):
    trace, _ = p2s_trace
    r = evaluate(train("P2S", trace), trace)
    assert r.overall_mape <= 1e-6
    assert len(r.per_sample) == len(trace) and r.skipped_count == 0


def test_injected_residuals_mape():
    rng = np.random.default_rng(3)
    base = [make_record(1.0, timestamp=float(i), freq=int(rng.choice([800, 1600])),
                        volt=float(rng.uniform(0.9, 1.2)), temp=float(rng.uniform(40, 60)))
            for i in range(50)]
    truth = {"const": 0.2, "voltage": 1.0, "frequency": 0.5, "temperature": 0.01}
    model = fixed_model("PHYSICAL", truth)
    residuals = rng.normal(0, 0.1, len(base))
    recs = []
    for rec, res in zip(base, residuals):
        clean = truth["const"] + truth["voltage"] * rec.voltage + truth["frequency"] * rec.frequency / 1000 \
            + truth["temperature"] * rec.temperature
        recs.append(dataclasses.replace(rec, power=clean + res))
    test = validate_trace(recs)
    # independent oracle: mean of |residual| / measured over the residual list
    oracle = 100 * np.mean([abs(res) / r.power for r, res in zip(recs, residuals)])
    report = evaluate(model, test)
    assert report.overall_mape == pytest.approx(oracle, rel=1e-9)
    for f in (800, 1600):
        sel = [abs(res) / r.power for r, res in zip(recs, residuals) if r.frequency == f]
        assert report.per_frequency_mape[f] == pytest.approx(100 * np.mean(sel), rel=1e-9)


def test_per_frequency_skip_contract():
    trace, _ = generate_trace(example_spec("PHYSICAL", levels=(800, 1400, 2000), seed=7))
    models = train("PHYSICAL", trace, PER_FREQUENCY)
    del models[2000]
    r = evaluate(models, trace)
    n2000 = sum(1 for x in trace.records if x.frequency == 2000)
    assert r.skipped == {"no_model_for_level": n2000}
    assert 2000 not in r.per_frequency_mape
    assert len(r.per_sample) == len(trace) - n2000
    with pytest.raises(EmptyEvaluation):
        evaluate({2000: models[800]}, validate_trace([x for x in trace.records if x.frequency == 800]))


def test_negative_prediction_clamped_but_kept():
    model = fixed_model("PHYSICAL", {"const": -3.0})
    r = evaluate(model, validate_trace([make_record(2.0)]))
    (s,) = r.per_sample
    assert s.predicted == -3.0
    assert s.percent_error == 100.0  # |2 - 0| / 2


def test_mape_consistency_and_nonnegative(noisy_perlevel_trace):
    for mode in (UNIFIED, PER_FREQUENCY):
        r = evaluate(train("P2", noisy_perlevel_trace, mode), noisy_perlevel_trace)
        errs = [s.percent_error for s in r.per_sample]
        assert all(e >= 0 for e in errs)
        assert abs(r.overall_mape - sum(errs) / len(errs)) <= 1e-12


def test_overall_is_sample_mean_not_level_mean():
    model = fixed_model("PHYSICAL", {"const": 1.0})
    recs = [make_record(2.0, freq=800)] + [make_record(1.0, timestamp=float(i + 1), freq=1600) for i in range(3)]
    r = evaluate(model, validate_trace(recs))
    assert r.per_frequency_mape == {800: 50.0, 1600: 0.0}
    assert r.overall_mape == 12.5


@pytest.mark.parametrize("family", [f.value for f in ModelFamily])
def test_training_sse_not_worse_than_intercept_only(family, noisy_perlevel_trace):
    m = train(family, noisy_perlevel_trace)
    d = build_design_matrix(family, noisy_perlevel_trace)
    mean_only = float(((d.targets - d.targets.mean()) ** 2).sum())
    assert sse(m.coefficients, d) <= mean_only * (1 + 1e-12)


# -- naive cross prediction ---------------------------------------------------

def cycles_only_spec(seed=0, **kw):
    spec = example_spec("PMU", seed=seed, **kw)
    names = ("const",) + PMU_CORE
    return dataclasses.replace(spec, coefficients={n: (1e-8 if n == "cycles" else 0.0) for n in names})


def test_naive_ten_times_fewer_cycles_is_ninety_percent():
    big, little = make_cluster_pair(cycles_only_spec(), event_scale=0.1)
    model = train("PMU", big)
    r = cross_predict_naive(model, little)
    # prediction = measured / 10 analytically
    assert r.kind == CROSS_NAIVE
    assert r.overall_mape == pytest.approx(90.0, abs=1e-6)


def test_naive_identical_traces_equals_evaluate(p2s_trace):
    trace, _ = p2s_trace
    for model in (train("P2S", trace), train("P2S", trace, PER_FREQUENCY)):
        a = evaluate(model, trace)
        b = cross_predict_naive(model, trace)
        assert b.kind == CROSS_NAIVE
        assert dataclasses.replace(b, kind=a.kind) == a


def test_naive_hundredfold_scale_blows_up():
    big, little = make_cluster_pair(cycles_only_spec(), event_scale=0.01)
    model = train("PMU", little)  # small-event model fed the large events
    r = cross_predict_naive(model, big)
    assert r.overall_mape == pytest.approx(100 * (100 - 1), rel=1e-6)
    assert r.overall_mape > 1000


def test_naive_no_common_frequencies():
    big, _ = make_cluster_pair(example_spec("PHYSICAL", levels=(600, 800, 2000)), 1.0)
    models = train("PHYSICAL", big, PER_FREQUENCY)
    other, _ = generate_trace(example_spec("PHYSICAL", levels=(1000, 1200)))
    with pytest.raises(NoCommonFrequencies):
        cross_predict_naive({f: models[f] for f in (600, 800)}, other)


# -- averaged cross prediction ------------------------------------------------

def slope_two_pair(n_bench=8, shared=None, seed=0):
    rng = np.random.default_rng(seed)
    events, power = [], []
    t = 0.0
    for b in range(n_bench):
        bench = f"b{b}"
        samples = []
        for _ in range(3):
            pmu = {c: float(rng.uniform(1, 10)) for c in PMU_CORE}
            samples.append(make_record(1.0, timestamp=t, cluster="LITTLE", bench=bench, pmu=pmu))
            t += 1
        events += samples
        mean_cycles = sum(s.pmu["cycles"] for s in samples) / 3
        if shared is None or b < shared:
            power += [make_record(2.0 * mean_cycles, timestamp=t + k, bench=f"b{b}") for k in range(2)]
            t += 2
    return validate_trace(power), validate_trace(events)


def test_cross_model_recovers_slope_two():
    power, events = slope_two_pair()
    m = train_cross_model("PMU", power, events, UNIFIED)
    c = m.coefficients.as_dict()
    assert c["cycles"] == pytest.approx(2.0, rel=1e-9)
    for n in ("l1d_access", "l1i_access", "instructions", "mem_access"):
        assert abs(c[n]) <= 1e-9


def test_cross_join_is_inner():
    power, events = slope_two_pair(n_bench=4, shared=3)
    pair = join_traces(power, events)
    assert len(pair) == 3 and pair.unshared_benchmarks == ("b3",)
    d = build_design_matrix("PMU", pair)
    assert d.n_rows == 3


def test_join_symmetry(noisy_perlevel_trace):
    big = noisy_perlevel_trace
    little = validate_trace([dataclasses.replace(r, cluster="LITTLE", power=r.power * 0.3)
                             for r in big.records if r.frequency <= 1400])
    ab = join_traces(big, little)
    ba = join_traces(little, big)
    assert sorted(ab.keys) == sorted(ba.keys)
    assert ab.target_cluster == "BIG" and ba.target_cluster == "LITTLE"
    m = train_cross_model("PHYSICAL", big, little, PER_FREQUENCY)
    assert sorted(m) == [f for f in big.frequency_levels if f <= 1400]


def test_cross_errors():
    power, events = slope_two_pair()
    elsewhere = validate_trace([dataclasses.replace(r, frequency=2000) for r in events.records])
    with pytest.raises(NoCommonFrequencies):
        train_cross_model("PMU", power, elsewhere)
    renamed = validate_trace([dataclasses.replace(r, benchmark_id="z" + r.benchmark_id) for r in events.records])
    with pytest.raises(NoCommonBenchmarks):
        train_cross_model("PMU", power, renamed)


def test_evaluate_cross_model_rows():
    power, events = slope_two_pair()
    m = train_cross_model("PMU", power, events)
    r = evaluate_cross_model(m, power, events)
    assert len(r.per_sample) == 8
    assert all(s.timestamp is None for s in r.per_sample)
    assert r.overall_mape <= 1e-6


# -- split --------------------------------------------------------------------

def test_split_is_seeded_and_disjoint(noisy_perlevel_trace):
    ids = noisy_perlevel_trace.benchmarks
    a = split_benchmarks(ids, 0.4, seed=5)
    assert a == split_benchmarks(ids, 0.4, seed=5)
    train_ids, test_ids = a
    assert set(train_ids).isdisjoint(test_ids) and set(train_ids) | set(test_ids) == set(ids)
    assert len(test_ids) == 2
    tr, te = split_trace(noisy_perlevel_trace, test_ids)
    assert tr.benchmarks == set(train_ids) and te.benchmarks == set(test_ids)
    assert len(tr) + len(te) == len(noisy_perlevel_trace)
