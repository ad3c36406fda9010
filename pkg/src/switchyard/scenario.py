"""Scenario data and persistence: grids, chronics, action sets, checkpoints,
episode logs.

All on-disk formats are versioned text (or, for checkpoints, a small binary
container) with a magic first line; every loader rejects malformed input with
a diagnostic naming the offending section or line, and every save/load pair
round-trips losslessly.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .actions import (ActionEntry, ActionSet, DO_NOTHING, SetSubstation,
                      SubstationAction, action_to_dict)
from .grid import Grid, build_grid

GRID_MAGIC = "#SWITCHYARD-GRID v1"
CHRONIC_MAGIC = "#SWITCHYARD-CHRONIC v1"
ACTIONS_MAGIC = "#SWITCHYARD-ACTIONS v1"
CHECKPOINT_MAGIC = b"SWYD-CKPT\x01"
EPISODE_MAGIC = "SWITCHYARD-EPISODE"
EPISODE_VERSION = 1


class SchemaError(ValueError):
    """Malformed scenario file; message names the file, line or section."""


class ReferenceError_(SchemaError):
    """A file references an element id that does not exist in its grid."""


# ---------------------------------------------------------------------------
# Chronic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaintenanceEvent:
    line: int
    start: int
    duration: int


@dataclass(frozen=True)
class OpponentSchedule:
    """Adversary parameters: which lines it may trip and how often."""

    targets: tuple[int, ...] = ()
    probability: float = 0.0
    budget: int = 0
    duration: int = 24
    cooldown: int = 48

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError("attack probability must be in [0, 1]")
        if self.duration < 1:
            raise ValueError("attack duration must be >= 1")
        if self.budget < 0 or self.cooldown < 0:
            raise ValueError("budget and cooldown must be >= 0")


@dataclass(frozen=True)
class Chronic:
    """One scenario: per-step injections, maintenance and adversary schedule."""

    id: str
    p_gen: np.ndarray                      # (steps, n_generators)
    p_load: np.ndarray                     # (steps, n_loads)
    maintenance: tuple[MaintenanceEvent, ...] = ()
    opponent: OpponentSchedule = OpponentSchedule()
    start: datetime = datetime(2026, 1, 5, 0, 0)
    timestep_minutes: int = 5

    def __post_init__(self):
        object.__setattr__(self, "p_gen", np.asarray(self.p_gen, dtype=np.float64))
        object.__setattr__(self, "p_load", np.asarray(self.p_load, dtype=np.float64))
        if self.p_gen.ndim != 2 or self.p_load.ndim != 2:
            raise ValueError("injection tables must be 2-D")
        if self.p_gen.shape[0] != self.p_load.shape[0]:
            raise ValueError("p_gen and p_load step counts differ")
        for ev in self.maintenance:
            if ev.start < 0 or ev.duration < 1 or ev.start >= self.steps:
                raise ValueError(f"maintenance window {ev} outside [0, {self.steps})")

    @property
    def steps(self) -> int:
        return int(self.p_gen.shape[0])

    def timestamp(self, step: int) -> datetime:
        return self.start + timedelta(minutes=self.timestep_minutes * step)


def validate_chronic_refs(chronic: Chronic, grid: Grid) -> None:
    if chronic.p_gen.shape[1] != grid.n_generators:
        raise ReferenceError_(
            f"chronic {chronic.id}: {chronic.p_gen.shape[1]} generator columns, "
            f"grid has {grid.n_generators}")
    if chronic.p_load.shape[1] != grid.n_loads:
        raise ReferenceError_(
            f"chronic {chronic.id}: {chronic.p_load.shape[1]} load columns, "
            f"grid has {grid.n_loads}")
    for ev in chronic.maintenance:
        if not (0 <= ev.line < grid.n_lines):
            raise ReferenceError_(
                f"chronic {chronic.id}: maintenance references line {ev.line}, "
                f"grid has lines 0..{grid.n_lines - 1}")
    for t in chronic.opponent.targets:
        if not (0 <= t < grid.n_lines):
            raise ReferenceError_(
                f"chronic {chronic.id}: opponent targets line {t}, "
                f"grid has lines 0..{grid.n_lines - 1}")


# ---------------------------------------------------------------------------
# Synthetic chronic generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChronicProfile:
    """Shape parameters for synthetic injections.

    daily_amplitude a gives a sinusoidal day with peak/trough ratio
    (1+a)/(1-a); noise_level is the per-step relative jitter; renewable
    generators follow an additional slow random weather walk with standard
    step renewable_variability.
    """

    base_load: float = 1.0
    daily_amplitude: float = 0.25
    noise_level: float = 0.0
    renewable_variability: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.daily_amplitude < 1.0):
            raise ValueError("daily amplitude must be in [0, 1)")


STEPS_PER_DAY = 288  # 24h at 5-minute resolution


def generate_chronic(grid: Grid, profile: ChronicProfile, steps: int, seed: int,
                     chronic_id: str | None = None,
                     maintenance: tuple[MaintenanceEvent, ...] = (),
                     opponent: OpponentSchedule = OpponentSchedule(),
                     start: datetime = datetime(2026, 1, 5, 0, 0)) -> Chronic:
    """Deterministic synthetic scenario for a grid.

    Loads follow a shared daily sinusoid plus optional noise; renewable
    generators get a multiplicative weather walk; per-step totals are
    rebalanced exactly so generation always equals load.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    t = np.arange(steps)
    day_wave = 1.0 + profile.daily_amplitude * np.sin(2.0 * np.pi * t / STEPS_PER_DAY)

    p_load = np.empty((steps, grid.n_loads))
    for d in range(grid.n_loads):
        noise = (1.0 + profile.noise_level * rng.standard_normal(steps)
                 if profile.noise_level > 0 else np.ones(steps))
        p_load[:, d] = np.maximum(profile.base_load * day_wave * noise,
                                  0.05 * profile.base_load)

    p_max = np.array([g.p_max for g in grid.generators], dtype=np.float64)
    share = p_max / p_max.sum() if p_max.sum() > 0 else np.full(grid.n_generators,
                                                                1.0 / max(grid.n_generators, 1))
    total_load = p_load.sum(axis=1)
    p_gen = np.outer(total_load, share)

    renewables = [g.id for g in grid.generators if g.renewable]
    if renewables and profile.renewable_variability > 0:
        for g in renewables:
            walk = np.cumsum(profile.renewable_variability * rng.standard_normal(steps))
            p_gen[:, g] *= np.clip(1.0 + walk, 0.1, 1.9)
        scale = total_load / np.maximum(p_gen.sum(axis=1), 1e-12)
        p_gen *= scale[:, None]

    chronic = Chronic(chronic_id or f"synthetic-{seed}", p_gen, p_load,
                      tuple(maintenance), opponent, start)
    validate_chronic_refs(chronic, grid)
    return chronic


# ---------------------------------------------------------------------------
# Section-file plumbing shared by the text formats
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _read_sections(text: str, magic: str, path: str) -> tuple[dict[str, str], dict[str, list[tuple[int, str]]]]:
    """Split a section file into header key/values and per-section data lines.

    Returns (header, sections) where sections maps name -> [(lineno, line)].
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != magic:
        raise SchemaError(f"{path}: missing or wrong magic line (expected {magic!r})")
    header: dict[str, str] = {}
    sections: dict[str, list[tuple[int, str]]] = {}
    current: str | None = None
    for no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current in sections:
                raise SchemaError(f"{path}:{no}: duplicate section [{current}]")
            sections[current] = []
        elif current is None:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise SchemaError(f"{path}:{no}: expected 'key value' before sections")
            header[parts[0]] = parts[1]
        else:
            sections[current].append((no, line))
    return header, sections


def _need(header: dict[str, str], key: str, path: str) -> str:
    if key not in header:
        raise SchemaError(f"{path}: missing required header field '{key}'")
    return header[key]


# ---------------------------------------------------------------------------
# Grid files
# ---------------------------------------------------------------------------

def save_grid(grid: Grid, path: str | Path) -> None:
    out = io.StringIO()
    out.write(GRID_MAGIC + "\n")
    out.write(f"name {grid.name}\n")
    out.write(f"substations {grid.n_substations}\n")
    out.write("[lines]\n# id origin extremity reactance thermal_limit\n")
    for ln in grid.lines:
        out.write(f"{ln.id} {ln.origin} {ln.extremity} {_fmt(ln.reactance)} "
                  f"{_fmt(ln.thermal_limit)}\n")
    out.write("[generators]\n# id substation p_max renewable\n")
    for g in grid.generators:
        out.write(f"{g.id} {g.substation} {_fmt(g.p_max)} {int(g.renewable)}\n")
    out.write("[loads]\n# id substation\n")
    for d in grid.loads:
        out.write(f"{d.id} {d.substation}\n")
    if grid.layout is not None:
        out.write("[layout]\n# substation x y\n")
        for s, (x, y) in enumerate(grid.layout):
            out.write(f"{s} {_fmt(x)} {_fmt(y)}\n")
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def load_grid(path: str | Path) -> Grid:
    p = str(path)
    header, sections = _read_sections(Path(path).read_text(encoding="utf-8"),
                                      GRID_MAGIC, p)
    name = _need(header, "name", p)
    n_sub = int(_need(header, "substations", p))
    for required in ("lines", "generators", "loads"):
        if required not in sections:
            raise SchemaError(f"{p}: missing section [{required}]")

    lines = []
    for no, line in sections["lines"]:
        f = line.split()
        if len(f) != 5:
            raise SchemaError(f"{p}:{no}: line row needs 5 fields")
        if int(f[0]) != len(lines):
            raise SchemaError(f"{p}:{no}: line ids must be dense and ascending")
        lines.append((int(f[1]), int(f[2]), float(f[3]), float(f[4])))
    gens = []
    for no, line in sections["generators"]:
        f = line.split()
        if len(f) != 4:
            raise SchemaError(f"{p}:{no}: generator row needs 4 fields")
        if int(f[0]) != len(gens):
            raise SchemaError(f"{p}:{no}: generator ids must be dense and ascending")
        gens.append((int(f[1]), float(f[2]), bool(int(f[3]))))
    loads = []
    for no, line in sections["loads"]:
        f = line.split()
        if len(f) != 2:
            raise SchemaError(f"{p}:{no}: load row needs 2 fields")
        if int(f[0]) != len(loads):
            raise SchemaError(f"{p}:{no}: load ids must be dense and ascending")
        loads.append(int(f[1]))
    layout = None
    if "layout" in sections:
        layout = [(0.0, 0.0)] * n_sub
        for no, line in sections["layout"]:
            f = line.split()
            if len(f) != 3:
                raise SchemaError(f"{p}:{no}: layout row needs 3 fields")
            layout[int(f[0])] = (float(f[1]), float(f[2]))
    try:
        return build_grid(name, n_sub, lines, gens, loads, layout)
    except ValueError as exc:
        raise SchemaError(f"{p}: {exc}") from exc


# ---------------------------------------------------------------------------
# Chronic files
# ---------------------------------------------------------------------------

def save_chronic(chronic: Chronic, path: str | Path) -> None:
    out = io.StringIO()
    out.write(CHRONIC_MAGIC + "\n")
    out.write(f"id {chronic.id}\n")
    out.write(f"steps {chronic.steps}\n")
    out.write(f"generators {chronic.p_gen.shape[1]}\n")
    out.write(f"loads {chronic.p_load.shape[1]}\n")
    out.write(f"start {chronic.start.isoformat()}\n")
    out.write(f"timestep_minutes {chronic.timestep_minutes}\n")
    out.write("[injections]\n# step p_gen.. p_load..\n")
    for t in range(chronic.steps):
        row = [str(t)] + [_fmt(v) for v in chronic.p_gen[t]] + \
              [_fmt(v) for v in chronic.p_load[t]]
        out.write(" ".join(row) + "\n")
    out.write("[maintenance]\n# line start duration\n")
    for ev in chronic.maintenance:
        out.write(f"{ev.line} {ev.start} {ev.duration}\n")
    out.write("[opponent]\n")
    opp = chronic.opponent
    out.write(f"targets {','.join(str(t) for t in opp.targets) if opp.targets else '-'}\n")
    out.write(f"probability {_fmt(opp.probability)}\n")
    out.write(f"budget {opp.budget}\n")
    out.write(f"duration {opp.duration}\n")
    out.write(f"cooldown {opp.cooldown}\n")
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def load_chronic(path: str | Path, grid: Grid | None = None) -> Chronic:
    p = str(path)
    header, sections = _read_sections(Path(path).read_text(encoding="utf-8"),
                                      CHRONIC_MAGIC, p)
    cid = _need(header, "id", p)
    steps = int(_need(header, "steps", p))
    n_gen = int(_need(header, "generators", p))
    n_load = int(_need(header, "loads", p))
    start = datetime.fromisoformat(_need(header, "start", p))
    timestep = int(header.get("timestep_minutes", "5"))
    for required in ("injections", "maintenance", "opponent"):
        if required not in sections:
            raise SchemaError(f"{p}: missing section [{required}]")

    p_gen = np.empty((steps, n_gen))
    p_load = np.empty((steps, n_load))
    rows = sections["injections"]
    if len(rows) != steps:
        raise SchemaError(f"{p}: [injections] has {len(rows)} rows, header says {steps}")
    for no, line in rows:
        f = line.split()
        if len(f) != 1 + n_gen + n_load:
            raise SchemaError(f"{p}:{no}: injection row needs {1 + n_gen + n_load} fields")
        t = int(f[0])
        if not (0 <= t < steps):
            raise SchemaError(f"{p}:{no}: step {t} out of range")
        p_gen[t] = [float(v) for v in f[1:1 + n_gen]]
        p_load[t] = [float(v) for v in f[1 + n_gen:]]

    maintenance = []
    for no, line in sections["maintenance"]:
        f = line.split()
        if len(f) != 3:
            raise SchemaError(f"{p}:{no}: maintenance row needs 3 fields")
        maintenance.append(MaintenanceEvent(int(f[0]), int(f[1]), int(f[2])))

    opp_kv: dict[str, str] = {}
    for no, line in sections["opponent"]:
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise SchemaError(f"{p}:{no}: opponent row needs 'key value'")
        opp_kv[parts[0]] = parts[1]
    targets_field = opp_kv.get("targets", "-")
    targets = tuple(int(t) for t in targets_field.split(",")) if targets_field != "-" else ()
    opponent = OpponentSchedule(
        targets=targets,
        probability=float(opp_kv.get("probability", "0")),
        budget=int(opp_kv.get("budget", "0")),
        duration=int(opp_kv.get("duration", "24")),
        cooldown=int(opp_kv.get("cooldown", "48")),
    )
    try:
        chronic = Chronic(cid, p_gen, p_load, tuple(maintenance), opponent,
                          start, timestep)
    except ValueError as exc:
        raise SchemaError(f"{p}: {exc}") from exc
    if grid is not None:
        validate_chronic_refs(chronic, grid)
    return chronic


# ---------------------------------------------------------------------------
# Action-set files
# ---------------------------------------------------------------------------

def save_action_set(action_set: ActionSet, path: str | Path, grid_name: str = "") -> None:
    out = io.StringIO()
    out.write(ACTIONS_MAGIC + "\n")
    out.write(f"grid {grid_name or '-'}\n")
    out.write(f"count {len(action_set)}\n")
    out.write("[actions]\n# index kind substation assignment impact\n")
    for i, entry in enumerate(action_set):
        payload = action_to_dict(entry.action)
        if payload["kind"] == "do_nothing":
            out.write(f"{i} do_nothing - - {_fmt(entry.impact)}\n")
        elif payload["kind"] == "set_substation":
            assignment = ",".join(str(b) for b in payload["assignment"])
            out.write(f"{i} set_substation {payload['substation']} "
                      f"{assignment} {_fmt(entry.impact)}\n")
        else:
            raise SchemaError(f"action set may not contain kind {payload['kind']!r}")
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def load_action_set(path: str | Path) -> ActionSet:
    p = str(path)
    header, sections = _read_sections(Path(path).read_text(encoding="utf-8"),
                                      ACTIONS_MAGIC, p)
    count = int(_need(header, "count", p))
    if "actions" not in sections:
        raise SchemaError(f"{p}: missing section [actions]")
    entries: list[ActionEntry] = []
    for no, line in sections["actions"]:
        f = line.split()
        if len(f) != 5:
            raise SchemaError(f"{p}:{no}: action row needs 5 fields")
        idx, kind = int(f[0]), f[1]
        if idx != len(entries):
            raise SchemaError(f"{p}:{no}: action indices must be dense and ascending")
        if kind == "do_nothing":
            entries.append(ActionEntry(DO_NOTHING, None, float(f[4])))
        elif kind == "set_substation":
            assignment = tuple(int(b) for b in f[3].split(","))
            sub = int(f[2])
            entries.append(ActionEntry(SetSubstation(SubstationAction(sub, assignment)),
                                       sub, float(f[4])))
        else:
            raise SchemaError(f"{p}:{no}: unknown action kind {kind!r}")
    if len(entries) != count:
        raise SchemaError(f"{p}: [actions] has {len(entries)} rows, header says {count}")
    if not entries or not isinstance(entries[0].action, type(DO_NOTHING)):
        raise SchemaError(f"{p}: first action must be do_nothing")
    return ActionSet(entries)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str | Path, config: dict, arrays: dict[str, np.ndarray]) -> None:
    """Bit-exact binary container: magic, JSON header, raw little-endian data."""
    manifest = []
    blobs = []
    for name, arr in arrays.items():
        a = np.asarray(arr)
        manifest.append({"name": name, "shape": list(a.shape),
                         "dtype": a.dtype.str})
        blobs.append(np.ascontiguousarray(a).tobytes())
    header = json.dumps({"version": 1, "config": config, "arrays": manifest},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise SchemaError(f"{path}: not a checkpoint file")
    offset = len(CHECKPOINT_MAGIC)
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: corrupt checkpoint header: {exc}") from exc
    offset += header_len
    arrays: dict[str, np.ndarray] = {}
    for meta in header["arrays"]:
        dtype = np.dtype(meta["dtype"])
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise SchemaError(f"{path}: truncated checkpoint (array {meta['name']})")
        arrays[meta["name"]] = np.frombuffer(
            raw[offset:offset + nbytes], dtype=dtype).reshape(meta["shape"]).copy()
        offset += nbytes
    return header["config"], arrays


# ---------------------------------------------------------------------------
# Episode logs (JSON lines, append-only)
# ---------------------------------------------------------------------------

def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class EpisodeLogWriter:
    """Streams one episode to a JSONL file (or any text sink)."""

    def __init__(self, sink, grid_name: str, chronic_id: str, seed: int, agent: str):
        self._sink = sink
        self._closed = False
        self._write({"record": "header", "magic": EPISODE_MAGIC,
                     "version": EPISODE_VERSION, "grid": grid_name,
                     "chronic": chronic_id, "seed": seed, "agent": agent})

    def _write(self, record: dict) -> None:
        self._sink.write(_dump(record) + "\n")

    def step(self, t: int, attempted, applied, result, decision: dict | None = None) -> None:
        rho = result.observation.rho if result.observation is not None else []
        self._write({
            "record": "step", "t": t,
            "attempted": action_to_dict(attempted),
            "applied": action_to_dict(applied),
            "illegal": bool(result.info.get("illegal", False)),
            "rho": [float(x) for x in rho],
            "rho_max": float(result.info.get("rho_max", 0.0)),
            "reward": float(result.reward),
            "done": bool(result.done),
            "done_reason": result.done_reason,
            "flags": {
                "attacked_line": result.info.get("attacked_line"),
                "auto_disconnected": result.info.get("auto_disconnected", []),
                "maintenance_started": result.info.get("maintenance_started", []),
            },
            "decision": decision,
        })

    def end(self, survived_steps: int, total_reward: float, done_reason: str) -> None:
        self._write({"record": "end", "survived_steps": int(survived_steps),
                     "total_reward": float(total_reward), "done_reason": done_reason})
        self._closed = True


def read_episode_log(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{no}: corrupt log record: {exc}") from exc
    if not records or records[0].get("magic") != EPISODE_MAGIC:
        raise SchemaError(f"{path}: missing episode log header")
    return records
