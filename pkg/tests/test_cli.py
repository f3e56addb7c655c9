import json

import numpy as np
import pytest

from conftest import FIXTURES
from hardgap.audioprep import read_wav
from hardgap.cli import main
from hardgap.decomposition import aggregate_trials, decompose
from hardgap.manifest import load_manifest


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_pair(tmp_path, name, bona, spoof):
    m = tmp_path / f"{name}.tsv"
    s = tmp_path / f"{name}.scores"
    m.write_text("".join(f"b{i}\t-\tbonafide\n" for i in range(len(bona))) + "".join(f"s{i}\t-\tspoof\n" for i in range(len(spoof))))
    s.write_text("".join(f"b{i} {v}\n" for i, v in enumerate(bona)) + "".join(f"s{i} {v}\n" for i, v in enumerate(spoof)))
    return m, s


# -------------------------------------------------------------- eval


def test_eval_separated(tmp_path, capsys):
    m, s = write_pair(tmp_path, "sep", [0.7, 0.8, 0.9], [0.1, 0.2, 0.3])
    code, out, _ = run(capsys, "eval", m, s)
    assert code == 0
    assert out.splitlines()[0] == "EER: 0.0%"


def test_eval_identical(tmp_path, capsys):
    m, s = write_pair(tmp_path, "same", [0.1, 0.9], [0.1, 0.9])
    code, out, _ = run(capsys, "eval", m, s)
    assert out.splitlines()[0] == "EER: 50.0%"


def test_eval_fixture_matches_oracle(tmp_path, capsys):
    oracle = json.loads((FIXTURES / "eval200.oracle.json").read_text())["eer"]
    payload = tmp_path / "p.json"
    code, out, _ = run(capsys, "eval", FIXTURES / "eval200.tsv", FIXTURES / "eval200.scores", "--json", payload)
    assert code == 0
    doc = json.loads(payload.read_text())
    assert abs(doc["results"]["eer"] - oracle) <= 1e-9
    assert doc["results"]["n_bonafide"] == 100
    assert doc["tool_version"] and doc["timestamp"] is None


def test_eval_bad_score_file(tmp_path, capsys):
    m, s = write_pair(tmp_path, "x", [0.1], [0.2])
    s.write_text("b0 0.1\ns0 oops\n")
    code, out, err = run(capsys, "eval", m, s)
    assert code == 2
    assert out == ""
    assert f"{s}:2" in err


def test_eval_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "eval", tmp_path / "nope.tsv", tmp_path / "nope.scores")
    assert code == 2 and "nope.tsv" in err


# -------------------------------------------------------------- decompose


def test_decompose_values(capsys):
    code, out, _ = run(capsys, "decompose", "--eer-in", 5.0, "--eer-outdom", 3.5, "--eer-cross", 25.5)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "| Model/Run | Performance Gap | Hardness Gap | Difference Gap |"
    assert lines[2] == "| run | 20.5 | -1.5 | 22.0 |"


def test_decompose_reported_row(capsys, tmp_path):
    # reported gaps 78.2 / -1.5 / 79.7 re-entered as cells with an arbitrary in-domain base
    code, out, _ = run(capsys, "decompose", "--label", "LCNN", "--eer-in", 5.0, "--eer-outdom", 3.5, "--eer-cross", 83.2)
    assert out.splitlines()[2] == "| LCNN | 78.2 | -1.5 | 79.7 |"


def test_decompose_partial_flags(capsys):
    code, _, err = run(capsys, "decompose", "--eer-in", 5.0, "--eer-cross", 25.5)
    assert code == 2 and "together" in err


def test_decompose_no_input(capsys):
    assert run(capsys, "decompose")[0] == 2


def test_decompose_out_of_range(capsys):
    assert run(capsys, "decompose", "--eer-in", 5.0, "--eer-outdom", 3.5, "--eer-cross", 125)[0] == 2


def test_decompose_from_scores(tmp_path, capsys):
    a = write_pair(tmp_path, "a", [0.7, 0.8, 0.9], [0.1, 0.2, 0.3])
    b = write_pair(tmp_path, "b", [0.2, 0.5, 0.8, 0.9], [0.1, 0.4, 0.6, 0.7])
    c = write_pair(tmp_path, "c", [0.1, 0.9], [0.1, 0.9])
    code, out, _ = run(capsys, "decompose", "--in-in", *a, "--outdom-outdom", *b, "--in-out", *c)
    assert code == 0
    assert out.splitlines()[2] == "| run | 50.0 | 50.0 | 0.0 |"
    code, _, err = run(capsys, "decompose", "--in-in", *a, "--in-out", *c)
    assert code == 2 and "--outdom-outdom" in err


def test_synth_trial_dir_roundtrip(tmp_path, capsys):
    payload = tmp_path / "synth.json"
    tdir = tmp_path / "trials"
    code, out, _ = run(capsys, "synth", "--preset", "mixed", "--n", 1500, "--trials", 5, "--seed", 3, "--trial-dir", tdir, "--json", payload)
    assert code == 0
    doc = json.loads(payload.read_text())
    dec_json = tmp_path / "dec.json"
    code, out2, _ = run(capsys, "decompose", "--trial-dir", tdir, "--json", dec_json)
    assert code == 0
    dec = json.loads(dec_json.read_text())
    assert len(dec["results"]["trials"]) == 5
    # scores written to disk and re-read reproduce the in-memory cells exactly
    assert dec["results"]["trials"] == doc["results"]["trials"]
    assert dec["results"]["aggregates"] == doc["results"]["aggregates"]
    expected = aggregate_trials([decompose(*(t[k] for k in ("eer_in_in", "eer_outdom_outdom", "eer_in_out"))) for t in doc["results"]["trials"]])
    assert dec["results"]["aggregates"]["hardness_gap"]["std"] == expected["hardness_gap"].std
    assert "±" in out2.splitlines()[2]


def test_trial_dir_missing_cell(tmp_path, capsys):
    tdir = tmp_path / "trials"
    run(capsys, "synth", "--preset", "identical", "--n", 200, "--trials", 2, "--trial-dir", tdir)
    (tdir / "trial-01" / "in_out.scores").unlink()
    code, _, err = run(capsys, "decompose", "--trial-dir", tdir)
    assert code == 2 and "in_out" in err


def test_payload_roundtrip_exact(tmp_path, capsys):
    p1 = tmp_path / "a.json"
    p2 = tmp_path / "b.json"
    run(capsys, "synth", "--preset", "hardness", "--n", 800, "--trials", 3, "--json", p1)
    code, _, _ = run(capsys, "decompose", "--from-payload", p1, "--json", p2)
    assert code == 0
    a = json.loads(p1.read_text())["results"]
    b = json.loads(p2.read_text())["results"]
    assert a["trials"] == b["trials"]
    assert a["aggregates"] == b["aggregates"]


# -------------------------------------------------------------- split


@pytest.fixture
def ten(tmp_path):
    m = tmp_path / "ten.tsv"
    m.write_text("".join(f"b{i}\t-\tbonafide\n" for i in range(5)) + "".join(f"s{i}\t-\tspoof\n" for i in range(5)))
    return m


def test_split_files(tmp_path, ten, capsys):
    code, out, _ = run(capsys, "split", ten, "--ratio", 0.8, "--seed", 1, "--out-prefix", tmp_path / "p")
    assert code == 0
    assert len(load_manifest(tmp_path / "p.train.tsv")) == 8
    assert len((tmp_path / "p.test.tsv").read_text().splitlines()) == 2
    first = (tmp_path / "p.train.tsv").read_bytes()
    run(capsys, "split", ten, "--ratio", 0.8, "--seed", 1, "--out-prefix", tmp_path / "p")
    assert (tmp_path / "p.train.tsv").read_bytes() == first


def test_split_class_too_small(tmp_path, capsys):
    m = tmp_path / "four.tsv"
    m.write_text("".join(f"b{i}\t-\tbonafide\n" for i in range(4)) + "".join(f"s{i}\t-\tspoof\n" for i in range(4)))
    code, _, err = run(capsys, "split", m, "--ratio", 0.99, "--seed", 0, "--out-prefix", tmp_path / "p")
    # 4 * 0.99 rounds to 4, which leaves no test record; clamping keeps one
    assert code == 0
    m.write_text("b0\t-\tbonafide\ns0\t-\tspoof\ns1\t-\tspoof\n")
    code, _, err = run(capsys, "split", m, "--ratio", 0.99, "--seed", 0, "--out-prefix", tmp_path / "p")
    assert code == 2 and "bonafide class has 1" in err


def test_config_file_supplies_flags(tmp_path, ten, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"ratio": 0.6, "seed": 9, "out_prefix": str(tmp_path / "c")}))
    code, _, _ = run(capsys, "split", ten, "--config", cfg)
    assert code == 0
    assert len(load_manifest(tmp_path / "c.train.tsv")) == 6
    # an explicit flag overrides the file
    run(capsys, "split", ten, "--config", cfg, "--ratio", 0.8)
    assert len(load_manifest(tmp_path / "c.train.tsv")) == 8
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "split", ten, "--config", cfg, "--out-prefix", tmp_path / "d")[0] == 2


# -------------------------------------------------------------- degrade


def test_degrade(tmp_path, wav_manifest, capsys):
    code, out, _ = run(capsys, "degrade", wav_manifest, "--target", 0.25, "--seed", 1, "--out-dir", tmp_path / "o")
    assert code == 0
    m = load_manifest(tmp_path / "o" / "manifest.tsv")
    assert len(m) == 3
    assert all(read_wav(r.path).duration <= 0.25 for r in m.records)
    code, out, _ = run(capsys, "degrade", wav_manifest, "--target", 0.25, "--min", 1.0, "--seed", 1, "--out-dir", tmp_path / "p")
    m = load_manifest(tmp_path / "p" / "manifest.tsv")
    assert all(read_wav(r.path).duration == 1.0 for r in m.records)


def test_degrade_bad_min(tmp_path, wav_manifest, capsys):
    code, _, err = run(capsys, "degrade", wav_manifest, "--target", 0.5, "--min", 0.25, "--out-dir", tmp_path / "o")
    assert code == 2


# -------------------------------------------------------------- synth


@pytest.mark.parametrize("preset, verdict", [("identical", "no-gap"), ("hardness", "hardness-dominated"), ("difference", "difference-dominated")])
def test_synth_presets(preset, verdict, capsys):
    code, out, _ = run(capsys, "synth", "--preset", preset, "--seed", 0)
    assert code == 0
    assert f"verdict: {verdict}" in out
    assert "overall: PASS" in out


def test_synth_spec_file(tmp_path, capsys):
    spec = tmp_path / "mine.json"
    spec.write_text(json.dumps({
        "D": {"dim": 2, "mean_bonafide": [1, 0], "mean_spoof": [-1, 0], "sigma": 1},
        "D_prime": {"dim": 2, "mean_bonafide": [0, 1], "mean_spoof": [0, -1], "sigma": 1},
    }))
    code, out, _ = run(capsys, "synth", "--spec-file", spec, "--n", 3000, "--trials", 2)
    assert code == 0 and "| mine |" in out
    spec.write_text("{}")
    assert run(capsys, "synth", "--spec-file", spec)[0] == 2


def test_synth_divergence_exit_code(capsys):
    code, _, err = run(capsys, "synth", "--preset", "hardness", "--n", 50, "--trials", 1, "--lr", 1e308)
    assert code == 3 and "numeric failure" in err


# -------------------------------------------------------------- scatter


def test_scatter(tmp_path, capsys):
    code, out, _ = run(capsys, "scatter", "--cell", "m", 0.02, 0.02, "--cell", "n", 0.02, 0.20)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "model,in_domain_eer,out_of_domain_eer,diagonal,vertical_gap"
    assert lines[1] == "m,0.02,0.02,0.02,0.0"
    assert lines[2].startswith("n,0.02,0.2,0.02,0.18")


def test_scatter_file_and_range(tmp_path, capsys):
    f = tmp_path / "cells.csv"
    f.write_text("model,in_domain_eer,out_of_domain_eer\nLCNN,0.01,0.3\n")
    code, out, _ = run(capsys, "scatter", "--cells-file", f, "--out", tmp_path / "o.csv")
    assert code == 0 and (tmp_path / "o.csv").read_text() == out
    assert run(capsys, "scatter", "--cell", "x", 0.1, 1.2)[0] == 2


def test_stamp_adds_timestamp(tmp_path, capsys):
    p = tmp_path / "p.json"
    run(capsys, "scatter", "--cell", "m", 0.1, 0.2, "--json", p, "--stamp")
    assert json.loads(p.read_text())["timestamp"].endswith("+00:00")
