import json

import pytest

from loopsoup.cli import main
from loopsoup.freegas import rho_c
from loopsoup.runio import load_snapshot, read_stream

RUNS = {
    "freegas": ["--dim", "3", "--beta", "1", "--points", "5"],
    "sample-soup": ["--dim", "3", "--beta", "0.5", "--box", "1.5", "--cell", "0.5", "--samples", "3", "--L", "2",
                    "--potential", "gauss:a=1,sigma=0.3,cut=3sigma"],
    "mcmc": ["--dim", "2", "--beta", "0.2", "--box", "1.5", "--cell", "0.5", "--sweeps", "20", "--thin", "2",
             "--potential", "step:h=1,r=0.3", "--kmax", "4", "--substeps", "4"],
    "shred": ["--dim", "3", "--beta", "0.5", "--box", "1.5", "--cell", "0.5", "--samples", "2", "--v", "0.5"],
    "interlace": ["--dim", "3", "--beta", "1", "--box", "0.5", "--cell", "0.5", "--samples", "2", "--v", "0.5"],
}


def run(tmp_path, name, args, tag):
    out = tmp_path / f"{name}-{tag}.jsonl"
    assert main([name, *args, "--seed", "42", "--out", str(out)]) == 0
    return out


@pytest.mark.parametrize("name", sorted(RUNS))
def test_same_seed_replays_byte_identically(tmp_path, name):
    a = run(tmp_path, name, RUNS[name], "a")
    b = run(tmp_path, name, RUNS[name], "b")
    assert a.read_bytes() == b.read_bytes()
    header, rows = read_stream(a)
    assert header["seed"] == 42 and header["config"]["subcommand"] == name
    assert rows


def test_different_seeds_differ(tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    main(["sample-soup", *RUNS["sample-soup"], "--seed", "1", "--out", str(a)])
    main(["sample-soup", *RUNS["sample-soup"], "--seed", "2", "--out", str(b)])
    assert a.read_text().splitlines()[1:] != b.read_text().splitlines()[1:]


def test_config_file_matches_flags(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dim = 3\nbeta = 0.5\nbox = 1.5\ncell = 0.5\nsamples = 3\nL = 2\n"
                   "potential = gauss:a=1,sigma=0.3,cut=3sigma\nseed = 42\n")
    via_file = tmp_path / "file.jsonl"
    assert main(["sample-soup", "--config", str(cfg), "--out", str(via_file)]) == 0
    via_flags = run(tmp_path, "sample-soup", RUNS["sample-soup"], "flags")
    assert via_file.read_bytes() == via_flags.read_bytes()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dim = 3\nbeta = 0.5\n")
    out = tmp_path / "o.jsonl"
    assert main(["freegas", "--config", str(cfg), "--beta", "2", "--rho", "0.001", "--out", str(out)]) == 0
    header, _ = read_stream(out)
    assert header["config"]["beta"] == 2.0 and header["config"]["d"] == 3


def test_freegas_rows(tmp_path):
    out = run(tmp_path, "freegas", RUNS["freegas"], "x")
    _, rows = read_stream(out)
    rc = rho_c(1.0, 3)
    assert rows[0]["rho"] == 0.0 and rows[0]["alpha"] == "-inf"
    for r in rows:
        assert r["rho_interlacement"] == pytest.approx(max(r["rho"] - rc, 0.0), abs=1e-15)


def test_invalid_config_exits_with_code_2(tmp_path, capsys):
    assert main(["mcmc", "--beta", "-1", "--box", "2", "--cell", "1", "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "beta > 0 required" in err and "non-commensurate" in err


def test_canonical_mode_requires_target(tmp_path, capsys):
    assert main(["mcmc", "--mode", "canonical", "--out", str(tmp_path / "x")]) == 2
    assert "n_target" in capsys.readouterr().err


def test_canonical_run_conserves_particles(tmp_path):
    out = tmp_path / "c.jsonl"
    snap = tmp_path / "snap.json"
    ck = tmp_path / "ck.json"
    args = ["mcmc", "--mode", "canonical", "--n-target", "6", "--dim", "2", "--beta", "0.3", "--box", "1.5",
            "--cell", "0.5", "--sweeps", "30", "--substeps", "4", "--kmax", "6", "--out", str(out),
            "--snapshot", str(snap), "--checkpoint", str(ck)]
    assert main(args) == 0
    _, rows = read_stream(out)
    assert all(r["N_ell"] == 6 for r in rows)
    assert load_snapshot(snap).n_particles() == 6
    assert json.loads(ck.read_text())["sweeps_done"] == 30


def test_wall_time_is_opt_in(tmp_path):
    out = tmp_path / "w.jsonl"
    main(["sample-soup", *RUNS["sample-soup"], "--wall-time", "--out", str(out)])
    _, rows = read_stream(out)
    assert all("wall_time" in r for r in rows)
    _, rows = read_stream(run(tmp_path, "sample-soup", RUNS["sample-soup"], "nw"))
    assert all("wall_time" not in r for r in rows)


def test_interlace_snapshot_and_calibration(tmp_path):
    snap = tmp_path / "w.json"
    out = tmp_path / "i.jsonl"
    assert main(["interlace", "--dim", "3", "--box", "0.5", "--cell", "0.5", "--u", "0.5", "--samples", "1",
                 "--snapshot", str(snap), "--out", str(out)]) == 0
    _, rows = read_stream(out)
    assert rows[0]["per_unit_v"] > 0
    assert rows[0]["v"] == pytest.approx(0.5 / rows[0]["per_unit_v"])
    window = load_snapshot(snap)
    assert window.provenance["seed"] == 0


def test_analyze_summarizes_a_stream(tmp_path):
    src = run(tmp_path, "mcmc", RUNS["mcmc"], "src")
    out = tmp_path / "summary.jsonl"
    assert main(["analyze", str(src), "--out", str(out)]) == 0
    _, (row,) = read_stream(out)
    summary = row["summary"]
    assert row["source_seed"] == 42
    assert summary["N_ell"]["n"] == 10
    assert summary["N_ell"]["tau"] >= 1.0 / 10
    assert summary["N_ell"]["ess"] == pytest.approx(10 / summary["N_ell"]["tau"])
