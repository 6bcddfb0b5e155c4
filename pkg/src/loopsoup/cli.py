"""Command line entry point: ``loopsoup <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import contextlib
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import freegas
from .geometry import CenteredBox, build_grid
from .interaction import parse_potential, total_interaction
from .interlacement import HorizonParams, calibrate_u, capacity, particles_in, sample_window, unit_box
from .loop_soup import make_intensity, sample_soup
from .mcmc import initial_state, integrated_autocorr_time, run_chain
from .runio import (
    SUBCOMMANDS,
    ConfigError,
    ObservableRow,
    RowSink,
    build_config,
    emit_row,
    parse_config,
    read_stream,
    save_checkpoint,
    save_snapshot,
)
from .shredding import boundary_shreds, condensate_counters, restrict_loops, shred_config

_COMMON = {
    "beta": float, "dim": int, "rho": float, "box": float, "cell": float, "bc": str, "potential": str,
    "kmax": int, "substeps": int, "seed": int, "sweeps": int, "burnin": int, "thin": int, "out": str,
}
_EXTRA = {"n-target": int, "L": int, "u": float, "v": float, "samples": int, "points": int}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopsoup", description="Brownian loop soup simulation and analysis")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value run configuration file")
        for flag, typ in {**_COMMON, **_EXTRA}.items():
            p.add_argument(f"--{flag}", type=typ, default=None)
        p.add_argument("--wall-time", action="store_true", default=None, help="record wall-clock time per row")
        if name in ("sample-soup", "interlace", "mcmc"):
            p.add_argument("--snapshot", help="write the final configuration to this JSON file")
        if name == "mcmc":
            p.add_argument("--mode", choices=("gc", "canonical"), default="gc")
            p.add_argument("--checkpoint", help="write a resumable checkpoint here at the end")
        if name == "analyze":
            p.add_argument("input", help="JSON-lines stream to summarize")
    return parser


def _resolve(args):
    values = {}
    if args.config:
        cfg = parse_config(Path(args.config).read_text())
        values.update({k: v for k, v in cfg.as_dict().items() if v is not None})
    for flag in list(_COMMON) + list(_EXTRA) + ["wall-time"]:
        val = getattr(args, flag.replace("-", "_"))
        if val is not None:
            values[flag] = val
    values["subcommand"] = args.subcommand
    return build_config(values)


@contextlib.contextmanager
def _open_out(path: str):
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _counters_row(sweep, config, grid, L, energy, cfg, t0, extra=None) -> ObservableRow:
    c = condensate_counters(config, grid, L)
    return ObservableRow(
        sweep, c.N_ell, c.N_R_crossing, c.N_not_crossing, c.N_long, c.N_short, energy, c.histogram,
        (time.perf_counter() - t0) if cfg.wall_time else None, extra or {},
    )


def cmd_freegas(cfg, args, sink):
    rc = freegas.rho_c(cfg.beta, cfg.d)
    if cfg.rho is not None:
        grid = [cfg.rho]
    else:
        top = 2.0 * rc if math.isfinite(rc) else 1.0
        grid = np.linspace(0.0, top, cfg.points).tolist()
    for rho in grid:
        sol = freegas.solve_alpha(rho, cfg.beta, cfg.d, kmax=cfg.kmax)
        emit_row({
            "rho": rho, "alpha": sol.alpha, "rho_interlacement": sol.interlacement_density,
            "entropy": sol.entropy, "chibar": sol.chibar, "beta_f": sol.beta_f,
        }, sink)


def _intensity(cfg):
    box = CenteredBox(cfg.box, cfg.d)
    return make_intensity(cfg.beta, cfg.d, box, cfg.bc, cfg.kmax)


def cmd_sample_soup(cfg, args, sink):
    rng = np.random.default_rng(cfg.seed)
    intensity = _intensity(cfg)
    grid = build_grid(cfg.box, cfg.cell, cfg.d)
    v = parse_potential(cfg.potential)
    t0 = time.perf_counter()
    config = None
    for s in range(cfg.samples):
        config = sample_soup(intensity, cfg.substeps, rng)
        energy = total_interaction(config, None, None, v)
        emit_row(_counters_row(s, config, grid, cfg.L, energy, cfg, t0), sink)
    if args.snapshot and config is not None:
        save_snapshot(args.snapshot, config)


def cmd_mcmc(cfg, args, sink):
    rng = np.random.default_rng(cfg.seed)
    intensity = _intensity(cfg)
    grid = build_grid(cfg.box, cfg.cell, cfg.d)
    v = parse_potential(cfg.potential)
    config = None
    if args.mode == "canonical":
        if cfg.n_target is None:
            raise ConfigError(["n_target is required for the canonical chain"])
        config = _initial_canonical(intensity, cfg, rng)
    state = initial_state(intensity, v, rng, config, cfg.substeps)
    t0 = time.perf_counter()
    observables = {"row": lambda s: _counters_row(s.sweeps_done, s.config, grid, cfg.L, s.energy, cfg, t0)}
    run_chain(state, cfg.sweeps, observables, cfg.thin, cfg.burnin, args.mode, cfg.n_target,
              on_row=lambda row: emit_row(row["row"], sink))
    if args.snapshot:
        save_snapshot(args.snapshot, state.config)
    if args.checkpoint:
        save_checkpoint(args.checkpoint, state, {"config_hash": cfg.config_hash()})


def _initial_canonical(intensity, cfg, rng):
    """``n_target`` one-particle loops at uniform anchors."""
    from .paths import Loop, LoopConfiguration, sample_loops

    anchors = intensity.box.uniform(rng, cfg.n_target)
    shapes = sample_loops(anchors, 1, cfg.beta, cfg.substeps, rng)
    loops = [Loop(s, cfg.beta) for s in shapes]
    return LoopConfiguration(loops, intensity.box, cfg.beta, cfg.substeps, intensity.period)


def cmd_shred(cfg, args, sink):
    rng = np.random.default_rng(cfg.seed)
    intensity = _intensity(cfg)
    W = CenteredBox(cfg.cell, cfg.d)
    window = None
    if cfg.v is not None and cfg.d >= 3:
        window = sample_window(CenteredBox(cfg.box, cfg.d), cfg.v, cfg.beta, cfg.substeps, rng=rng)
    for s in range(cfg.samples):
        config = sample_soup(intensity, cfg.substeps, rng)
        loops = restrict_loops(config, W)
        sc = shred_config(config, W, window)
        bs = boundary_shreds(sc)
        emit_row({
            "sample": s, "loops_in_W": len(loops), "loop_particles_in_W": loops.n_particles(),
            "shreds": len(sc), "shred_particles": sc.n_particles(),
            "triples": [[x.tolist(), int(l), y.tolist()] for x, l, y in bs.triples],
        }, sink)


def cmd_interlace(cfg, args, sink):
    rng = np.random.default_rng(cfg.seed)
    W = CenteredBox(cfg.box, cfg.d)
    params = HorizonParams()
    cap = capacity(W, cfg.beta, 20_000, rng, params)
    if cfg.v is not None:
        v = cfg.v
        per_v = None
    else:
        cal = calibrate_u(W, 1.0 if cfg.u is None else cfg.u, cfg.beta, params, rng, cap=cap)
        v, per_v = cal.v, cal.per_unit_v
    U = unit_box(cfg.d)
    window = None
    for s in range(cfg.samples):
        window = sample_window(W, v, cfg.beta, cfg.substeps, params, rng, cap=cap)
        emit_row({
            "sample": s, "capacity": cap.value, "capacity_se": cap.stderr, "v": v, "per_unit_v": per_v,
            "fragments": len(window), "particles_in_U": particles_in(window, U),
        }, sink)
    if args.snapshot and window is not None:
        window.provenance["seed"] = cfg.seed
        save_snapshot(args.snapshot, window)


def cmd_analyze(cfg, args, sink):
    header, rows = read_stream(args.input)
    fields = {}
    for row in rows:
        for key, val in row.items():
            if isinstance(val, (int, float)) and not isinstance(val, bool) and key != "sweep":
                fields.setdefault(key, []).append(float(val))
    summary = {}
    for key, vals in fields.items():
        x = np.asarray(vals)
        tau = integrated_autocorr_time(x)
        summary[key] = {
            "n": len(x), "mean": float(x.mean()), "std": float(x.std(ddof=1)) if len(x) > 1 else 0.0,
            "tau": tau, "ess": len(x) / tau,
        }
    emit_row({"source": str(args.input), "source_seed": (header or {}).get("seed"), "summary": summary}, sink)


COMMANDS = {
    "freegas": cmd_freegas, "sample-soup": cmd_sample_soup, "mcmc": cmd_mcmc, "shred": cmd_shred,
    "interlace": cmd_interlace, "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        for msg in exc.violations:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    with _open_out(cfg.out) as stream:
        sink = RowSink(stream, cfg)
        sink.write_header()
        try:
            COMMANDS[cfg.subcommand](cfg, args, sink)
        except ConfigError as exc:
            for msg in exc.violations:
                print(f"config error: {msg}", file=sys.stderr)
            return 2
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except BrokenPipeError:
            # reader closed early (e.g. piped into head); silence the flush at exit
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
            return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
