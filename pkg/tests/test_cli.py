import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import engineered_trace
from hetpower import __version__
from hetpower.cli import main
from hetpower.io import write_trace_csv
from hetpower.synth import example_spec, spec_to_dict
from hetpower.trace import PMU_CORE


@pytest.fixture
def spec_file(tmp_path):
    def write(name="spec.json", **kw):
        path = tmp_path / name
        path.write_text(json.dumps(spec_to_dict(example_spec(**kw))))
        return path
    return write


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_version():
    out = subprocess.run([sys.executable, "-m", "hetpower", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout


def test_train_recovers_generator_truth(tmp_path, capsys, spec_file):
    spec = spec_file(family="PHYSICAL", seed=4)
    code, _, _ = run(capsys, "synth", spec, "--out", tmp_path / "t.csv", "--truth-out", tmp_path / "truth.json")
    assert code == 0
    code, out, _ = run(capsys, "train", tmp_path / "t.csv", "--family", "physical", "--out", tmp_path / "m.json")
    assert code == 0
    assert rows(out)[0] == ["frequency_mhz", "rank", "columns", "condition", "samples"]
    truth = json.loads((tmp_path / "truth.json").read_text())
    beta = np.array(next(iter(truth["coefficients"].values())))
    doc = json.loads((tmp_path / "m.json").read_text())
    (entry,) = doc["models"]
    assert [n for n, _ in entry["coefficients"]] == truth["names"]
    got = np.array([v for _, v in entry["coefficients"]])
    assert np.max(np.abs(got - beta) / np.abs(beta)) <= 1e-9


def test_train_perfreq_three_levels(tmp_path, capsys, spec_file):
    spec = spec_file(family="P2S", levels=(600, 1200, 1800), seed=2)
    run(capsys, "synth", spec, "--out", tmp_path / "t.csv")
    code, out, err = run(capsys, "train", tmp_path / "t.csv", "--family", "p2s", "--mode", "perfreq",
                         "--out", tmp_path / "m.json")
    assert code == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["mode"] == "per-frequency" and len(doc["models"]) == 3
    assert "rank 13 of 15" in err  # rank warning goes to stderr
    assert len(rows(out)) == 4


def test_train_csr_without_l2_refill_exits_3(tmp_path, capsys, spec_file):
    counters = PMU_CORE + ("int_instructions", "vfp_instructions", "l2_access")
    spec = spec_file(family="PHYSICAL", counters=counters)
    run(capsys, "synth", spec, "--out", tmp_path / "t.csv")
    code, out, err = run(capsys, "train", tmp_path / "t.csv", "--family", "csr", "--out", tmp_path / "m.json")
    assert code == 3
    assert "MissingColumn" in err and "l2_refill" in err
    assert out == ""


def test_evaluate_own_training_data(tmp_path, capsys, spec_file):
    run(capsys, "synth", spec_file(family="P2", seed=1), "--out", tmp_path / "t.csv")
    run(capsys, "train", tmp_path / "t.csv", "--family", "p2", "--out", tmp_path / "m.json")
    code, out, _ = run(capsys, "evaluate", tmp_path / "m.json", tmp_path / "t.csv",
                       "--report", tmp_path / "r.json", "--per-frequency-table")
    assert code == 0
    table = rows(out)
    assert table[0] == ["frequency_mhz", "mape"] and table[-1][0] == "overall"
    assert float(table[-1][1]) <= 1e-6
    doc = json.loads((tmp_path / "r.json").read_text())
    errs = [row[5] for row in doc["per_sample"]]
    assert abs(sum(errs) / len(errs) - doc["overall_mape"]) <= 1e-12


def test_evaluate_skips_unknown_level(tmp_path, capsys, spec_file):
    run(capsys, "synth", spec_file(family="PHYSICAL", levels=(800, 1400), seed=3), "--out", tmp_path / "a.csv")
    run(capsys, "synth", spec_file("s2.json", family="PHYSICAL", levels=(800, 1400, 2000), seed=3),
        "--out", tmp_path / "b.csv")
    run(capsys, "train", tmp_path / "a.csv", "--family", "physical", "--mode", "perfreq", "--out", tmp_path / "m.json")
    code, _, _ = run(capsys, "evaluate", tmp_path / "m.json", tmp_path / "b.csv", "--report", tmp_path / "r.json")
    assert code == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    n2000 = sum(1 for r in rows((tmp_path / "b.csv").read_text())[1:] if r[3] == "2000")
    assert doc["skipped"] == {"no_model_for_level": n2000}


def test_evaluate_nothing_to_score_exits_4(tmp_path, capsys, spec_file):
    run(capsys, "synth", spec_file(family="PHYSICAL", levels=(800, 1400), seed=3), "--out", tmp_path / "a.csv")
    run(capsys, "synth", spec_file("s2.json", family="PHYSICAL", levels=(2000,), seed=3), "--out", tmp_path / "b.csv")
    run(capsys, "train", tmp_path / "a.csv", "--family", "physical", "--mode", "perfreq", "--out", tmp_path / "m.json")
    code, _, err = run(capsys, "evaluate", tmp_path / "m.json", tmp_path / "b.csv")
    assert code == 4 and "EmptyEvaluation" in err


def test_schema_violation_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,cluster\n0,BIG\n")
    code, _, err = run(capsys, "train", bad, "--family", "physical", "--out", tmp_path / "m.json")
    assert code == 2 and "SchemaError" in err
    code, _, _ = run(capsys, "evaluate", bad, bad)
    assert code == 2


def test_correlate_engineered_ranking(tmp_path, capsys):
    targets = {"l1d_access": 0.9, "instructions": 0.7, "l1i_access": 0.5, "mem_access": 0.2}
    write_trace_csv(engineered_trace(targets).records, tmp_path / "t.csv")
    code, out, err = run(capsys, "correlate", tmp_path / "t.csv", "--slots", "5")
    assert code == 0
    table = rows(out)
    assert [r[0] for r in table[1:]] == ["cycles", "l1d_access", "instructions", "l1i_access", "mem_access"]
    assert [float(r[1]) for r in table[2:]] == pytest.approx([0.9, 0.7, 0.5, 0.2], abs=1e-9)
    assert "selected: cycles, l1d_access, instructions, l1i_access, mem_access" in err


def test_crosspredict_naive_on_identical_csvs(tmp_path, capsys, spec_file):
    run(capsys, "synth", spec_file(family="P2S", seed=5, noise_sigma=0.05), "--out", tmp_path / "t.csv")
    run(capsys, "train", tmp_path / "t.csv", "--family", "p2s", "--mode", "perfreq", "--out", tmp_path / "m.json")
    _, plain, _ = run(capsys, "evaluate", tmp_path / "m.json", tmp_path / "t.csv", "--per-frequency-table")
    code, cross, _ = run(capsys, "crosspredict", tmp_path / "t.csv", tmp_path / "t.csv", "--naive",
                         "--family", "p2s", "--mode", "perfreq", "--report", tmp_path / "r.json")
    assert code == 0
    assert rows(cross) == rows(plain)
    assert json.loads((tmp_path / "r.json").read_text())["kind"] == "cross-naive"


def test_crosspredict_averaged_pair(tmp_path, capsys, spec_file):
    spec = spec_file(family="PMU", seed=5, n_benchmarks=10)
    code, _, _ = run(capsys, "synth", spec, "--out", tmp_path / "big.csv", "--pair-out", tmp_path / "little.csv",
                     "--event-scale", "0.1", "--little-levels", "600,1000")
    assert code == 0
    code, out, _ = run(capsys, "crosspredict", tmp_path / "big.csv", tmp_path / "little.csv", "--averaged",
                       "--family", "pmu", "--mode", "perfreq", "--split-by-benchmark", "3",
                       "--model-out", tmp_path / "m.json", "--report", tmp_path / "r.json")
    assert code == 0
    table = rows(out)
    assert [r[0] for r in table[1:]] == ["600", "1000", "overall"]
    assert float(table[-1][1]) <= 1e-6  # noiseless truth is linear in the averaged events
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["split_seed"] == 3 and len(doc["models"]) == 2


def test_synth_byte_identical(tmp_path, capsys, spec_file):
    spec = spec_file(family="CSR_UPDATED", seed=8, noise_sigma=0.05)
    run(capsys, "synth", spec, "--out", tmp_path / "a.csv")
    run(capsys, "synth", spec, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    run(capsys, "--seed", "99", "synth", spec, "--out", tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_bytes() != (tmp_path / "a.csv").read_bytes()


def test_report_table(tmp_path, capsys, spec_file):
    run(capsys, "synth", spec_file(family="P2S", seed=5, noise_sigma=0.05), "--out", tmp_path / "t.csv")
    for mode in ("unified", "perfreq"):
        run(capsys, "train", tmp_path / "t.csv", "--family", "p2s", "--mode", mode, "--out", tmp_path / f"{mode}.json")
        run(capsys, "evaluate", tmp_path / f"{mode}.json", tmp_path / "t.csv", "--report", tmp_path / f"{mode}.r.json")
    code, out, _ = run(capsys, "report", tmp_path / "unified.r.json", tmp_path / "perfreq.r.json")
    assert code == 0
    table = rows(out)
    assert table[0] == ["frequency_mhz", "P2S/unified:plain", "P2S/per-frequency:plain"]
    assert len(table) == 1 + 4 + 1


def test_split_writes_test_set(tmp_path, capsys, spec_file):
    run(capsys, "synth", spec_file(family="PHYSICAL", seed=5), "--out", tmp_path / "t.csv")
    code, _, _ = run(capsys, "--seed", "7", "train", tmp_path / "t.csv", "--family", "physical",
                     "--split-by-benchmark", "--test-out", tmp_path / "test.csv", "--out", tmp_path / "m.json")
    assert code == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["split_seed"] == 7
    test_benches = {r[2] for r in rows((tmp_path / "test.csv").read_text())[1:]}
    assert test_benches == set(doc["split"]["test"])


def test_quiet_silences_stderr(tmp_path, capsys, spec_file):
    code, _, err = run(capsys, "--quiet", "synth", spec_file(family="PHYSICAL"), "--out", tmp_path / "t.csv")
    assert code == 0 and err == ""
