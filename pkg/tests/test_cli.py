import csv
import json
import math

import pytest

from conclab.cli import main


def run(capsys, *argv):
    rc = main(list(argv))
    return rc, capsys.readouterr()


def as_json(out):
    return json.loads(out.out)


def test_binom_tail(capsys):
    rc, out = run(capsys, "binom-tail", "--n", "4", "--theta", "0.5", "--k", "2", "--exact")
    rec = as_json(out)
    assert rc == 0 and rec["exact"] == 0.6875 and rec["tail"] == pytest.approx(0.6875, rel=1e-14)
    assert rec["chernoff"] >= rec["tail"]


def test_bad_input_exits_two(capsys):
    rc, out = run(capsys, "binom-tail", "--n", "4", "--theta", "1.5", "--k", "2")
    assert rc == 2 and out.err


def test_mc_tail(capsys):
    rc, out = run(capsys, "mc-tail", "--law", "rademacher", "--f", "linear", "--n", "3", "--t", "2",
                  "--samples", "20000", "--seed", "3")
    rec = as_json(out)
    assert rc == 0 and rec["ci_low"] <= 0.5 <= rec["ci_high"] and rec["samples"] == 20000
    rc, out = run(capsys, "mc-tail", "--law", "rademacher", "--f", "linear", "--n", "3", "--t", "2",
                  "--samples", "20000", "--seed", "3")
    assert as_json(out) == rec


def test_hcost_and_choice_of_l(capsys):
    rc, out = run(capsys, "hcost", "--ht", "0", "--hy", "1", "--kappa", "1", "--dt", "1")
    assert rc == 0 and as_json(out)["h"] == pytest.approx(-0.25)
    rc, out = run(capsys, "choice-of-l", "--n", "100", "--delta", "0.5", "--K", "1")
    assert rc == 0 and as_json(out)["L"] == pytest.approx(math.sqrt(512 * math.log(2 + 100 / math.log(4))))


def test_distc(tmp_path, capsys):
    f = tmp_path / "A.txt"
    f.write_text("2 0\n0 2\n")
    rc, out = run(capsys, "distc", "--point", "0,0", "--set-file", str(f), "--hull")
    rec = as_json(out)
    assert rc == 0 and rec["dist_c"] == pytest.approx(math.sqrt(2), abs=1e-12)
    assert rec["dist_to_hull"] == pytest.approx(math.sqrt(2), abs=1e-12)


def test_envelope_csv(tmp_path, capsys):
    out_csv = tmp_path / "env.csv"
    rc, _ = run(capsys, "envelope", "--theorem", "subgaussian", "--n", "100", "--t", "10", "--K", "2",
                "--c", "c=1", "--out", str(out_csv))
    rows = list(csv.DictReader(open(out_csv)))
    assert rc == 0 and list(rows[0]) == ["theorem", "n", "K", "p", "t", "value", "term"]
    assert math.log(float(rows[0]["value"])) == pytest.approx(-100 / (4 * math.log(6)), rel=1e-12)


def test_fit(tmp_path, capsys):
    spec = tmp_path / "g.json"
    spec.write_text(json.dumps({"ns": [100, 1000], "mode": "cells"}))
    rc, out = run(capsys, "fit", "--inequality", "binomial-lower", "--grid-spec", str(spec))
    rec = as_json(out)
    assert rc == 0 and rec["held_out_violations"] == 0 and 1.0 <= rec["fitted_value"] < 50
    spec.write_text(json.dumps({"ns": [100], "bogus": 1}))
    assert run(capsys, "fit", "--inequality", "binomial-lower", "--grid-spec", str(spec))[0] == 2


def test_extremal_sweep(tmp_path, capsys):
    out_csv = tmp_path / "sw.csv"
    rc, _ = run(capsys, "extremal-sweep", "--n", "1000", "--steps", "5", "--out", str(out_csv))
    rows = list(csv.DictReader(open(out_csv)))
    assert rc == 0 and len(rows) == 5


def test_verify(tmp_path, capsys):
    rc, out = run(capsys, "verify", "--suite", "minbasic", "--out", str(tmp_path), "--seed", "2")
    assert rc == 0 and "minbasic" in out.out and (tmp_path / "minbasic.csv").exists()
    cfg = tmp_path / "c.yaml"
    cfg.write_text("suites: minbasic\nunknown: 1\n")
    assert run(capsys, "verify", "--config", str(cfg))[0] == 2
