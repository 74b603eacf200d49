import csv
import json

import numpy as np
import pytest

from gapcr import SimConfig, Target, gen_sample
from gapcr.cli import main
from gapcr.estimators import estimate_target
from gapcr.exceptions import SampleError
from gapcr.io import read_long_table, read_sample, read_table, write_sample, write_table


def _csv(path, rows, header=("subject_id", "stage", "gap_time", "cause", "censor_time")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


@pytest.fixture
def four_csv(tmp_path):
    rows = [
        ("a", 1, 1.5, 1, 2.0),
        ("b", 1, 3.0, 2, 4.0),
        ("c", 1, 6.0, 0, 6.0),
        ("d", 1, 5.0, 1, 8.0),
    ]
    return _csv(tmp_path / "four.csv", rows)


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "sim.csv"
    write_sample(gen_sample(SimConfig(theta=1.5, n=150), np.random.default_rng(31)), path, seed=31)
    return str(path)


def _rows(path):
    return read_table(path)


def test_sample_round_trip(tmp_path):
    s = gen_sample(SimConfig(theta=1.5, n=60), np.random.default_rng(1))
    path = tmp_path / "s.csv"
    write_sample(s, path, seed=1)
    back = read_sample(path, censor_col="censor_time")
    np.testing.assert_array_equal(np.sort(back.censor), np.sort(s.censor))
    for target in (Target("cif", 2, cause=1), Target("pl", 3), Target("csh", 2, cause=2)):
        a, b = estimate_target(s, target).curve, estimate_target(back, target).curve
        np.testing.assert_array_equal(a.jump_times, b.jump_times)
        np.testing.assert_allclose(a.values, b.values, rtol=0, atol=1e-14)


def test_header_and_nan_cells(tmp_path):
    path = write_table(tmp_path / "x.csv", [{"a": 1.0, "b": float("nan"), "c": ""}], seed=7)
    first = path.read_text().splitlines()[0]
    assert first == "# gapcr 0.1.0 seed=7"
    assert _rows(path) == [{"a": "1.0", "b": "nan", "c": ""}]
    doc = json.loads(write_table(tmp_path / "x.json", [{"a": float("nan")}], "json", seed=7).read_text())
    assert doc["rows"] == [{"a": None}] and doc["seed"] == 7
    with pytest.raises(ValueError, match="unknown format"):
        write_table(tmp_path / "x.txt", [], "txt")


def test_separate_censor_file(tmp_path):
    data = _csv(tmp_path / "d.csv", [("a", 1, 1.5, 1), ("b", 1, 3.0, 2)], header=("subject_id", "stage", "gap_time", "cause"))
    cens = _csv(tmp_path / "c.csv", [("a", 2.0), ("b", 4.0), ("c", 6.0)], header=("subject_id", "censor_time"))
    rows, censor, _ = read_long_table(data, censor_file=cens)
    assert censor == {"a": 2.0, "b": 4.0, "c": 6.0}
    assert len(rows) == 2


def test_empty_table_is_an_error(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("subject_id,stage,gap_time,cause,censor_time\n")
    with pytest.raises(SampleError, match="no subjects"):
        read_sample(path, censor_col="censor_time")


# -- estimate ----------------------------------------------------------------


def test_estimate_four_subjects(four_csv, tmp_path):
    out = tmp_path / "out"
    code = main(["estimate", "--input", four_csv, "--censor-col", "censor_time", "--bootstrap", "0",
                 "--grid", "1,5", "--out", str(out)])
    assert code == 0
    est = _rows(out / "estimates.csv")
    assert [float(r["estimate"]) for r in est] == [0.0, 0.75]
    curve = _rows(out / "curves.csv")
    assert (float(curve[-1]["t"]), float(curve[-1]["value"])) == (5.0, 0.75)


def test_estimate_with_bootstrap_json(sim_csv, tmp_path):
    out = tmp_path / "out"
    code = main(["estimate", "--input", sim_csv, "--censor-col", "censor_time", "--stage", "2", "3",
                 "--variant", "cif", "pl", "csh", "--bootstrap", "20", "--band", "0.2:0.8",
                 "--workers", "1", "--format", "json", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "estimates.json").read_text())
    ids = {r["curve_id"] for r in doc["rows"]}
    assert len(ids) == 6
    assert {"se", "lower_log", "band_lower_plain"} <= set(doc["columns"])


def test_estimate_conditional(sim_csv, tmp_path):
    code = main(["estimate", "--input", sim_csv, "--censor-col", "censor_time", "--stage", "2",
                 "--variant", "cond", "--prev-cause", "1", "2", "--bootstrap", "0", "--out", str(tmp_path)])
    assert code == 0
    assert len({r["curve_id"] for r in _rows(tmp_path / "estimates.csv")}) == 2


def test_estimate_missing_stage_is_reported(four_csv, tmp_path, capsys):
    code = main(["estimate", "--input", four_csv, "--censor-col", "censor_time", "--stage", "1", "5",
                 "--bootstrap", "0", "--out", str(tmp_path)])
    assert code == 0
    assert "stage-5" in capsys.readouterr().err


def test_estimate_beyond_tau_fails(four_csv, tmp_path):
    code = main(["estimate", "--input", four_csv, "--censor-col", "censor_time", "--bootstrap", "10",
                 "--grid", "100", "--out", str(tmp_path)])
    assert code == 5


def test_parse_errors(tmp_path):
    bad = _csv(tmp_path / "bad.csv", [("a", 1, "x", 1, 2.0)])
    assert main(["estimate", "--input", bad, "--censor-col", "censor_time", "--out", str(tmp_path)]) == 3
    missing = str(tmp_path / "nope.csv")
    assert main(["estimate", "--input", missing, "--censor-col", "censor_time", "--out", str(tmp_path)]) == 3
    neg = _csv(tmp_path / "neg.csv", [("a", 1, -1.0, 1, 2.0)])
    assert main(["estimate", "--input", neg, "--censor-col", "censor_time", "--out", str(tmp_path)]) == 3


# -- test --------------------------------------------------------------------


def test_stage_test_command(sim_csv, tmp_path, capsys):
    code = main(["test", "--input", sim_csv, "--censor-col", "censor_time", "--test", "stage", "--stage", "2", "3",
                 "--t", "0.285,0.555", "--bootstrap", "30", "--workers", "1", "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "tests.csv")
    assert [r["t"] for r in rows] == ["0.285", "0.555"]
    assert "statistic=" in capsys.readouterr().out


def test_prevtype_command(sim_csv, tmp_path):
    args = ["test", "--input", sim_csv, "--censor-col", "censor_time", "--test", "prevtype", "--stage", "2",
            "--t", "0.409", "--bootstrap", "20", "--out", str(tmp_path)]
    assert main(args + ["--cause", "1", "--prev-cause", "2"]) == 0
    with pytest.raises(SystemExit) as exc:
        main(args + ["--cause", "1", "--prev-cause", "1"])
    assert exc.value.code == 2


def test_group_command_on_identical_groups(tmp_path):
    s = gen_sample(SimConfig(theta=1.0, n=80), np.random.default_rng(4))
    rows = []
    for label in ("A", "B"):
        for s_ in s.subjects:
            for r in s_.records:
                rows.append((f"{label}{s_.subject_id}", r.stage, r.gap_time, r.cause, s_.censor_time, label))
    path = _csv(tmp_path / "g.csv", rows, header=("subject_id", "stage", "gap_time", "cause", "censor_time", "arm"))
    code = main(["test", "--input", path, "--censor-col", "censor_time", "--test", "group", "--group-col", "arm",
                 "--stage", "2", "--t", "0.409", "--bootstrap", "20", "--out", str(tmp_path)])
    assert code == 0
    row = _rows(tmp_path / "tests.csv")[0]
    assert float(row["difference"]) == 0.0 and float(row["statistic"]) == 0.0


def test_group_command_needs_group_col(sim_csv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["test", "--input", sim_csv, "--censor-col", "censor_time", "--test", "group", "--stage", "2",
              "--t", "0.4", "--out", str(tmp_path)])
    assert exc.value.code == 2


# -- simulate ----------------------------------------------------------------


def test_simulate_small_study(tmp_path):
    code = main(["simulate", "--theta", "1.5", "--n", "60", "--reps", "2", "--bootstrap", "5", "--seed", "3",
                 "--workers", "1", "--out", str(tmp_path)])
    assert code == 0
    summary = _rows(tmp_path / "summary.csv")
    assert {"target", "truth", "Bias", "ESE", "BSE", "CP"} <= set(summary[0])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["n"] == 60 and manifest["seed"] == 3


def test_simulate_config_files(tmp_path):
    kv = tmp_path / "study.cfg"
    kv.write_text("# settings\ntheta = 1.5\nn = 50\nreps = 1\nbootstrap = 3\n")
    assert main(["simulate", "--config", str(kv), "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    js = tmp_path / "study.json"
    js.write_text(json.dumps({"theta": 1.0, "n": 50, "reps": 1, "B": 3, "grid": [0.2, 0.4]}))
    assert main(["simulate", "--config", str(js), "--out", str(tmp_path / "b"), "--workers", "1"]) == 0
    assert {r["t"] for r in _rows(tmp_path / "b" / "summary.csv")} == {"0.2", "0.4"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 4


def test_simulate_invalid_theta(tmp_path):
    assert main(["simulate", "--theta", "0.5", "--out", str(tmp_path)]) == 4


def test_simulate_sample_out(tmp_path):
    path = tmp_path / "gen.csv"
    assert main(["simulate", "--n", "40", "--seed", "8", "--sample-out", str(path)]) == 0
    assert read_sample(path, censor_col="censor_time").n == 40
