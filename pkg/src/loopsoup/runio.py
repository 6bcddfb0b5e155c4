"""Run configuration, JSON-lines observable streams, snapshots and checkpoints.

Config files are ``key = value`` lines; ``#`` starts a comment.  Output
streams are JSON lines: one header record carrying the config hash and the
seed, then one record per observable row.  Reals are written with ``repr``
precision, so a write/read round trip is exact.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CenteredBox, build_grid
from .interaction import parse_potential
from .loop_soup import BoundaryCondition
from .paths import InterlacementFragment, InterlacementWindow, Loop, LoopConfiguration

SUBCOMMANDS = ("freegas", "sample-soup", "mcmc", "shred", "interlace", "analyze")
SNAPSHOT_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class RunConfig:
    subcommand: str = "freegas"
    beta: float = 1.0
    d: int = 3
    box: float = 3.0
    cell: float = 1.0
    bc: str = "free"
    potential: str = "zero"
    kmax: int = 20
    substeps: int = 16
    rho: float | None = None
    n_target: int | None = None
    L: int = 10
    u: float | None = None
    v: float | None = None
    samples: int = 1
    points: int = 50
    sweeps: int = 100
    burnin: int = 0
    thin: int = 1
    seed: int = 0
    out: str = "-"
    wall_time: bool = False

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replay_dict(self) -> dict:
        """Every field that affects the output; the output path is excluded."""
        return {k: v for k, v in self.as_dict().items() if k != "out"}

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.replay_dict(), sort_keys=True).encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_ALIASES = {"dim": "d", "N": "n_target", "n": "n_target", "K_max": "kmax", "wall-time": "wall_time"}
_OPTIONAL_FLOATS = {"rho", "u", "v"}
_INTS = {"d", "kmax", "substeps", "L", "samples", "points", "sweeps", "burnin", "thin", "seed", "n_target"}
_FLOATS = {"beta", "box", "cell"} | _OPTIONAL_FLOATS


def _convert(name: str, raw):
    if isinstance(raw, str):
        raw = raw.strip()
        if name in _OPTIONAL_FLOATS | {"n_target"} and raw.lower() in ("", "none"):
            return None
    if name in _INTS:
        if isinstance(raw, float) and not raw.is_integer():
            raise ValueError
        return int(raw)
    if name in _FLOATS:
        return float(raw)
    if name == "wall_time":
        return raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes", "on")
    return str(raw)


def validate(cfg: RunConfig) -> list[str]:
    """Every violated constraint of ``cfg``, as readable messages."""
    errs = []
    if cfg.subcommand not in SUBCOMMANDS:
        errs.append(f"subcommand must be one of {', '.join(SUBCOMMANDS)}")
    if not cfg.beta > 0:
        errs.append("beta > 0 required")
    if cfg.d < 1:
        errs.append("d >= 1 required")
    if not cfg.box > 0:
        errs.append("box > 0 required")
    if not cfg.cell > 0:
        errs.append("cell > 0 required")
    if cfg.box > 0 and cfg.cell > 0 and cfg.d >= 1:
        try:
            build_grid(cfg.box, cfg.cell, cfg.d)
        except ValueError as exc:
            errs.append(str(exc))
    try:
        BoundaryCondition.parse(cfg.bc)
    except ValueError as exc:
        errs.append(str(exc))
    try:
        parse_potential(cfg.potential)
    except ValueError as exc:
        errs.append(f"potential: {exc}")
    for name in ("kmax", "substeps", "samples", "points", "sweeps", "thin"):
        if getattr(cfg, name) < 1:
            errs.append(f"{name} >= 1 required")
    if cfg.burnin < 0:
        errs.append("burnin >= 0 required")
    if cfg.L < 0:
        errs.append("L >= 0 required")
    if cfg.rho is not None and not cfg.rho >= 0:
        errs.append("rho >= 0 required")
    if cfg.n_target is not None and cfg.n_target < 1:
        errs.append("n_target >= 1 required")
    for name in ("u", "v"):
        val = getattr(cfg, name)
        if val is not None and not val >= 0:
            errs.append(f"{name} >= 0 required")
    if not 0 <= cfg.seed < 2 ** 64:
        errs.append("seed must be a 64-bit unsigned integer")
    return errs


def build_config(values: dict) -> RunConfig:
    """Convert and validate a mapping of raw values; raises :class:`ConfigError`."""
    errs = []
    kwargs = {}
    for key, raw in values.items():
        name = _ALIASES.get(key, key).replace("-", "_")
        if name not in _FIELDS:
            errs.append(f"unknown key {key!r}")
            continue
        try:
            kwargs[name] = _convert(name, raw)
        except (TypeError, ValueError):
            errs.append(f"{key}: cannot parse {raw!r}")
    cfg = RunConfig(**kwargs)
    errs.extend(validate(cfg))
    if errs:
        raise ConfigError(errs)
    return cfg


def parse_config(text: str) -> RunConfig:
    values = {}
    errs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        if not eq:
            errs.append(f"line {lineno}: expected key = value")
            continue
        values[key.strip()] = val.strip()
    try:
        cfg = build_config(values)
    except ConfigError as exc:
        raise ConfigError(errs + exc.violations) from None
    if errs:
        raise ConfigError(errs)
    return cfg


def format_config(cfg: RunConfig) -> str:
    lines = []
    for name, value in cfg.as_dict().items():
        if value is not None:
            lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"


@dataclass
class ObservableRow:
    sweep: int
    N_ell: int
    N_R_crossing: int
    N_not_crossing: int
    N_long: int
    N_short: int
    energy: float
    histogram: dict = field(default_factory=dict)
    wall_time: float | None = None
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {
            "type": "row", "sweep": int(self.sweep), "N_ell": int(self.N_ell),
            "N_R_crossing": int(self.N_R_crossing), "N_not_crossing": int(self.N_not_crossing),
            "N_long": int(self.N_long), "N_short": int(self.N_short), "energy": float(self.energy),
            "histogram": {str(k): int(v) for k, v in sorted(self.histogram.items(), key=lambda kv: int(kv[0]))},
        }
        if self.wall_time is not None:
            rec["wall_time"] = float(self.wall_time)
        if self.extra:
            rec["extra"] = _jsonable(self.extra)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "ObservableRow":
        return cls(
            rec["sweep"], rec["N_ell"], rec["N_R_crossing"], rec["N_not_crossing"], rec["N_long"],
            rec["N_short"], rec["energy"], {int(k): v for k, v in rec.get("histogram", {}).items()},
            rec.get("wall_time"), rec.get("extra", {}),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def dumps(record: dict) -> str:
    return json.dumps(_jsonable(record), sort_keys=True, separators=(",", ":"))


class RowSink:
    """Append-only JSON-lines writer that emits the header exactly once."""

    def __init__(self, stream, cfg: RunConfig | None = None, header: dict | None = None):
        self.stream = stream
        self.header_written = False
        self.cfg = cfg
        self.header = header or {}

    def write_header(self) -> None:
        if self.header_written:
            return
        rec = {"type": "header", **self.header}
        if self.cfg is not None:
            rec.update(config_hash=self.cfg.config_hash(), seed=self.cfg.seed, config=self.cfg.replay_dict())
        self._write(rec)
        self.header_written = True

    def _write(self, rec: dict) -> None:
        self.stream.write(dumps(rec) + "\n")
        self.stream.flush()

    def write(self, rec: dict) -> None:
        self.write_header()
        self._write(rec)


def emit_row(row, sink: RowSink) -> None:
    """Append one observable row (an :class:`ObservableRow` or a plain record)."""
    rec = row.to_record() if isinstance(row, ObservableRow) else {"type": "row", **row}
    sink.write(rec)


def read_stream(path_or_lines) -> tuple[dict | None, list[dict]]:
    """Header record and row records of a JSON-lines stream."""
    if isinstance(path_or_lines, (str, Path)):
        lines = Path(path_or_lines).read_text().splitlines()
    else:
        lines = list(path_or_lines)
    header, rows = None, []
    for line in lines:
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("type") == "header":
            if header is not None:
                raise ValueError("stream has more than one header")
            header = rec
        else:
            rows.append(rec)
    return header, rows


def _box_record(box: CenteredBox) -> dict:
    return {"radius": box.radius, "dim": box.dim, "center": list(box.center)}


def _box_from(rec: dict) -> CenteredBox:
    return CenteredBox(rec["radius"], rec["dim"], tuple(rec["center"]))


def snapshot_record(obj) -> dict:
    """Coordinate-array record of a loop configuration or interlacement window.

    Layout: every path is a nested list ``legs[leg][time][coordinate]``.
    """
    if isinstance(obj, LoopConfiguration):
        return {
            "kind": "loops", "version": SNAPSHOT_VERSION, "beta": obj.beta, "substeps": obj.substeps,
            "period": obj.period, "box": _box_record(obj.box), "loops": [lp.legs.tolist() for lp in obj.loops],
        }
    if isinstance(obj, InterlacementWindow):
        return {
            "kind": "interlacement", "version": SNAPSHOT_VERSION, "beta": obj.beta, "substeps": obj.substeps,
            "v": obj.v, "window": _box_record(obj.window), "provenance": _jsonable(obj.provenance),
            "fragments": [
                {"legs": f.legs.tolist(), "entry_index": f.entry_index, "escaped": list(f.escaped)}
                for f in obj.fragments
            ],
        }
    raise TypeError(f"cannot snapshot {type(obj).__name__}")


def snapshot_from(rec: dict):
    if rec["kind"] == "loops":
        loops = [Loop(np.asarray(legs, dtype=float), rec["beta"]) for legs in rec["loops"]]
        return LoopConfiguration(loops, _box_from(rec["box"]), rec["beta"], rec["substeps"], rec["period"])
    if rec["kind"] == "interlacement":
        W = _box_from(rec["window"])
        frags = [
            InterlacementFragment(np.asarray(f["legs"], dtype=float), rec["beta"], W, f["entry_index"],
                                  tuple(f["escaped"]))
            for f in rec["fragments"]
        ]
        return InterlacementWindow(frags, W, rec["beta"], rec["v"], rec["substeps"], rec.get("provenance", {}))
    raise ValueError(f"unknown snapshot kind {rec['kind']!r}")


def save_snapshot(path, obj) -> None:
    Path(path).write_text(json.dumps(snapshot_record(obj)))


def load_snapshot(path):
    return snapshot_from(json.loads(Path(path).read_text()))


def save_checkpoint(path, state, extra: dict | None = None) -> None:
    """Configuration, cached energy, tallies and the exact generator state."""
    rec = {
        "snapshot": snapshot_record(state.config),
        "energy": state.energy,
        "stats": {k: list(v) for k, v in state.stats.items()},
        "sweeps_done": state.sweeps_done,
        "rng": _jsonable(state.rng.bit_generator.state),
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(rec))


def load_checkpoint(path, intensity, potential):
    from .mcmc import ChainState

    rec = json.loads(Path(path).read_text())
    rng = np.random.default_rng()
    rng.bit_generator.state = rec["rng"]
    config = snapshot_from(rec["snapshot"])
    state = ChainState(config, intensity, potential, rng, energy=rec["energy"],
                       stats={k: tuple(v) for k, v in rec["stats"].items()}, sweeps_done=rec["sweeps_done"])
    return state
