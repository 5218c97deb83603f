import csv
import json

import numpy as np
import pytest

from condweight.cli import main
from condweight.cps_exact import cps_inclusion_probs


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def workdir(tmp_path, capsys):
    pop = tmp_path / "pop.csv"
    assert run(capsys, "gen-pop", "--kind", "outlier", "--seed", 3, "--out", pop)[0] == 0
    design = tmp_path / "design.json"
    design.write_text(json.dumps({"kind": "srs", "n": 20}))
    return tmp_path


def test_gen_pop_header(workdir):
    lines = (workdir / "pop.csv").read_text().splitlines()
    assert lines[0] == "id,stratum_design,stratum_post,x,y"
    assert len(lines) == 101


def test_gen_pop_set_override(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert run(capsys, "gen-pop", "--kind", "poststrat", "--set", "N=40", "--out", out)[0] == 0
    assert len(out.read_text().splitlines()) == 41


def test_pipeline(workdir, capsys):
    w = workdir
    assert run(capsys, "draw", "--design", w / "design.json", "--pop", w / "pop.csv", "--seed", 1,
               "--require-unit", 1, "--out", w / "s0.txt")[0] == 0
    ids = [int(v) for v in (w / "s0.txt").read_text().split()]
    assert len(ids) == 20 and 1 in ids

    code, out, _ = run(capsys, "build-event", "--sample", w / "s0.txt", "--pop", w / "pop.csv",
                       "--design", w / "design.json", "--cdf-draws", 20000, "--out", w / "event.json")
    assert code == 0
    ev = json.loads((w / "event.json").read_text())
    lo, hi = ev["interval"]
    assert lo <= ev["observed"] <= hi

    code, _, err = run(capsys, "mc-probs", "--design", w / "design.json", "--pop", w / "pop.csv",
                       "--event", w / "event.json", "--target-accepted", 2000, "--pairs-from", w / "s0.txt",
                       "--pairs-out", w / "pairs.csv", "--out", w / "probs.csv")
    assert code == 0 and "M_A=" in err
    table = rows(w / "probs.csv")
    assert list(table[0]) == ["unit", "pi_uncond", "pi_cond", "ci_low", "ci_high", "M_k"]
    first = table[0]
    assert float(first["pi_cond"]) > 0.9
    assert float(first["ci_low"]) <= float(first["pi_cond"]) <= float(first["ci_high"])

    code, out, _ = run(capsys, "estimate", "--sample", w / "s0.txt", "--pop", w / "pop.csv",
                       "--weights", w / "probs.csv", "--pairs", w / "pairs.csv", "--scale", "mean")
    assert code == 0
    rep = json.loads(out)
    assert rep["estimate"] > 0 and rep["variance"] is not None

    code, out, _ = run(capsys, "estimate", "--sample", w / "s0.txt", "--pop", w / "pop.csv",
                       "--weights", w / "probs.csv", "--format", "csv")
    assert code == 0 and out.splitlines()[0].split(",")[:3] == ["kind", "provenance", "estimate"]


def test_mc_probs_reproducible(tmp_path, capsys):
    w = tmp_path
    run(capsys, "gen-pop", "--kind", "poststrat", "--set", "N=60", "--out", w / "pop.csv")
    (w / "design.json").write_text(json.dumps({"kind": "srs", "n": 12}))
    run(capsys, "draw", "--design", w / "design.json", "--pop", w / "pop.csv", "--out", w / "s.txt")
    assert run(capsys, "build-event", "--stat", "counts", "--sample", w / "s.txt", "--pop", w / "pop.csv",
               "--out", w / "ev.json")[0] == 0
    for name in ("a.csv", "b.csv"):
        assert run(capsys, "mc-probs", "--design", w / "design.json", "--pop", w / "pop.csv", "--event",
                   w / "ev.json", "--target-draws", 5000, "--seed", 8, "--out", w / name)[0] == 0
    assert (w / "a.csv").read_bytes() == (w / "b.csv").read_bytes()


def test_exact_cps(tmp_path, capsys):
    p = np.array([0.2, 0.4, 0.5, 0.3, 0.6])
    (tmp_path / "p.txt").write_text("\n".join(str(float(v)) for v in p))
    code, out, _ = run(capsys, "exact-cps", "--p", tmp_path / "p.txt", "--n", 2)
    assert code == 0
    got = np.array([float(line.split(",")[1]) for line in out.splitlines()[1:]])
    assert np.allclose(got, cps_inclusion_probs(p, 2), atol=1e-15)
    (tmp_path / "h.txt").write_text("1\n1\n2\n2\n2\n")
    code, out, _ = run(capsys, "exact-cps", "--p", tmp_path / "p.txt", "--strata", tmp_path / "h.txt",
                       "--counts", "1:1,2:2")
    got = np.array([float(line.split(",")[1]) for line in out.splitlines()[1:]])
    assert got[:2].sum() == pytest.approx(1.0) and got[2:].sum() == pytest.approx(2.0)


def test_experiment_command(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "poststrat-srs", "replications": 20, "seed": 2}))
    code, out, _ = run(capsys, "experiment", "poststrat-srs", "--config", cfg, "--out", tmp_path / "o")
    assert code == 0
    assert json.loads(out)["replications"] == 20
    assert (tmp_path / "o" / "scatter.svg").exists()


def test_errors_exit_2(tmp_path, capsys):
    (tmp_path / "bad.txt").write_text("1\nfoo\n")
    code, _, err = run(capsys, "build-event", "--stat", "counts", "--sample", tmp_path / "bad.txt",
                       "--pop", tmp_path / "missing.csv")
    assert code == 2 and "error" in err
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "outlier", "bogus": 1}))
    code, _, err = run(capsys, "experiment", "outlier", "--config", cfg, "--out", tmp_path / "o")
    assert code == 2 and "bogus" in err
