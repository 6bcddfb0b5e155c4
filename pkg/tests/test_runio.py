import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopsoup.geometry import CenteredBox
from loopsoup.interaction import step_potential
from loopsoup.interlacement import sample_window
from loopsoup.loop_soup import make_intensity
from loopsoup.mcmc import initial_state, run_chain
from loopsoup.runio import (
    ConfigError,
    ObservableRow,
    RowSink,
    build_config,
    dumps,
    emit_row,
    format_config,
    load_checkpoint,
    load_snapshot,
    parse_config,
    read_stream,
    save_checkpoint,
    save_snapshot,
    snapshot_from,
    snapshot_record,
)


def test_parse_and_format_round_trip():
    text = """
    # a comment
    subcommand = mcmc
    beta = 0.5
    dim = 3
    box = 3
    cell = 1
    potential = gauss:a=1.0,sigma=0.3,cut=3sigma
    N = 12
    wall-time = yes
    """
    cfg = parse_config(text)
    assert cfg.d == 3 and cfg.n_target == 12 and cfg.wall_time is True
    assert parse_config(format_config(cfg)) == cfg


def test_all_violations_are_reported():
    with pytest.raises(ConfigError) as exc:
        build_config({"beta": -1, "box": 2.0, "cell": 1.0, "bogus": 3, "kmax": "x", "bc": "neumann"})
    msgs = "\n".join(exc.value.violations)
    for needle in ("beta > 0", "non-commensurate", "unknown key 'bogus'", "kmax: cannot parse", "unknown boundary"):
        assert needle in msgs


def test_malformed_config_line():
    with pytest.raises(ConfigError, match="expected key = value"):
        parse_config("beta 1.0\n")


def test_config_hash_ignores_output_path():
    a = build_config({"beta": 1.0})
    b = build_config({"beta": 1.0, "out": "/tmp/x"})
    c = build_config({"beta": 2.0})
    assert a.config_hash() == b.config_hash() != c.config_hash()


@settings(max_examples=50, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False, width=64), st.integers(0, 10 ** 6))
def test_row_round_trip_is_exact(energy, n):
    row = ObservableRow(n, n, n // 2, n - n // 2, n // 3, n - n // 3, energy, {1: n, 5: 2}, None, {"x": 1.5})
    back = ObservableRow.from_record(json.loads(dumps(row.to_record())))
    assert back == row


def test_sink_writes_one_header():
    buf = io.StringIO()
    cfg = build_config({"seed": 7})
    sink = RowSink(buf, cfg)
    sink.write_header()
    emit_row({"a": 1}, sink)
    emit_row({"a": math.inf}, sink)
    header, rows = read_stream(buf.getvalue().splitlines())
    assert header["seed"] == 7 and header["config_hash"] == cfg.config_hash()
    assert rows == [{"type": "row", "a": 1}, {"type": "row", "a": "inf"}]
    with pytest.raises(ValueError, match="more than one header"):
        read_stream(buf.getvalue().splitlines() * 2)


def test_loop_snapshot_round_trip(tmp_path, small_soup):
    path = tmp_path / "snap.json"
    save_snapshot(path, small_soup)
    back = load_snapshot(path)
    assert len(back) == len(small_soup)
    for a, b in zip(small_soup.loops, back.loops):
        np.testing.assert_array_equal(a.legs, b.legs)
    assert back.box == small_soup.box and back.substeps == small_soup.substeps


def test_window_snapshot_round_trip(rng):
    window = sample_window(CenteredBox(0.5, 3), 1.0, 1.0, 2, rng=rng)
    back = snapshot_from(json.loads(json.dumps(snapshot_record(window))))
    assert len(back) == len(window)
    for a, b in zip(window.fragments, back.fragments):
        np.testing.assert_array_equal(a.legs, b.legs)
        assert a.entry_index == b.entry_index
    with pytest.raises(TypeError):
        snapshot_record(object())
    with pytest.raises(ValueError):
        snapshot_from({"kind": "nothing"})


def test_checkpoint_resume_is_exact(tmp_path):
    intensity = make_intensity(0.2, 2, CenteredBox(1.0, 2), "free", kmax=4)
    v = step_potential(0.5, 0.3)
    straight = initial_state(intensity, v, np.random.default_rng(9), substeps=2)
    run_chain(straight, 30, check_every=0)
    first = initial_state(intensity, v, np.random.default_rng(9), substeps=2)
    run_chain(first, 20, check_every=0)
    save_checkpoint(tmp_path / "ck.json", first)
    resumed = load_checkpoint(tmp_path / "ck.json", intensity, v)
    run_chain(resumed, 10, check_every=0)
    assert resumed.sweeps_done == straight.sweeps_done == 30
    assert len(resumed.config) == len(straight.config)
    for a, b in zip(resumed.config.loops, straight.config.loops):
        np.testing.assert_array_equal(a.legs, b.legs)
    assert resumed.energy == straight.energy
