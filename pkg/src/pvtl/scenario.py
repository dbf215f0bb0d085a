"""Scenario description and its plain-text file format.

A scenario file is INI-style (``configparser``)::

    [run]
    duration_s = 20
    seed = 2018

    [channel]                  ; default for every link
    model = logistic           ; logistic | table | constant
    p_max = 1.0
    d_mid_m = 82
    steepness_per_m = 0.08
    ; model = table  -> table = psr.txt   (two columns: distance_m psr)
    ; model = constant -> psr = 0.5
    corrupt_fraction = 0       ; share of delivered frames that arrive with a flipped bit

    [link:ctrl->rtx1]          ; optional per-link override, same keys as [channel]
    model = constant
    psr = 0

    [controller]
    id = ctrl
    x = 0
    y = 0
    state_period_s = 2
    state_periods_s = 2,2,3,...     ; optional, one value per phase state
    advertising_interval_ms = 50
    phase_table = table.txt         ; optional, default is the built-in 13-state table

    [retransmitter:rtx1]
    tag = 1
    x = 37
    y = 0
    controller = ctrl               ; source address it accepts frames from
    controller_period_s = 2         ; default: the controller's state_period_s
    advertising_interval_ms = 50
    start_offset_ms = 0

    [receiver:dedicated]
    attach = rtx1                   ; node it listens to
    movement = 2
    duty_cycle = 1.0
    scan_period_ms = 100
    scan_phase = random             ; random | fixed
    staleness_timeout_ms = 150      ; default: 3 x the attached node's advertising interval
    x = 130
    y = 0
    vx = -8                         ; optional velocity in m/s -> linear trajectory
    vy = 0

    [sweep]                         ; optional
    parameter = receiver:monitor.x
    values = 0,20,40
    label = distance

Positions are metres, times are converted to integer microseconds on load.
Relative file paths are resolved against the scenario file's directory.
"""

from __future__ import annotations

import configparser
import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .channel import (
    ConstantCurve,
    LinearTrajectory,
    LogisticCurve,
    Position,
    PsrCurve,
    StaticTrajectory,
    Trajectory,
    load_psr_table,
)
from .intersection import PhaseState, load_phase_table, movement_id, standard_phase_table
from .nodes import MS, SECOND

Sections = dict[str, dict[str, str]]


class ScenarioError(ValueError):
    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class ControllerSpec:
    node_id: str
    trajectory: Trajectory
    state_period: int = 2 * SECOND
    advertising_interval: int = 50 * MS
    state_periods: Optional[tuple[int, ...]] = None
    phase_table: tuple[PhaseState, ...] = field(default_factory=lambda: tuple(standard_phase_table()))


@dataclass(frozen=True)
class RetransmitterSpec:
    node_id: str
    tag: int
    trajectory: Trajectory
    controller: str
    controller_period: int
    advertising_interval: int = 50 * MS
    start_offset: int = 0


@dataclass(frozen=True)
class ReceiverSpec:
    node_id: str
    attach: str
    movement: str
    trajectory: Trajectory
    duty_cycle: float = 1.0
    scan_period: int = 100 * MS
    random_scan_phase: bool = True
    staleness_timeout: int = 150 * MS


@dataclass(frozen=True)
class ChannelSpec:
    curve: PsrCurve = field(default_factory=LogisticCurve)
    overrides: Mapping[tuple[str, str], PsrCurve] = field(default_factory=dict)
    corrupt_fraction: float = 0.0

    def curve_for(self, src: str, dst: str) -> PsrCurve:
        return self.overrides.get((src, dst), self.curve)


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]
    label: str


@dataclass(frozen=True)
class Scenario:
    duration: int
    seed: int
    controller: ControllerSpec
    retransmitters: tuple[RetransmitterSpec, ...]
    receivers: tuple[ReceiverSpec, ...]
    channel: ChannelSpec
    sweep: Optional[SweepSpec] = None
    sections: Sections = field(default_factory=dict, compare=False, repr=False)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    @property
    def node_ids(self) -> list[str]:
        return [self.controller.node_id] + [r.node_id for r in self.retransmitters] + [
            r.node_id for r in self.receivers]

    def with_param(self, path: str, value) -> Scenario:
        """Copy of this scenario with one ``section.key`` value replaced."""
        section, sep, key = path.rpartition(".")
        if not sep or section not in self.sections:
            raise ScenarioError(f"unknown parameter {path!r}")
        allowed = _ALLOWED_KEYS[_section_kind(section)]
        if key not in allowed:
            raise ScenarioError(f"unknown parameter {path!r}")
        sections = copy.deepcopy(self.sections)
        sections[section][key] = _format_value(value)
        return scenario_from_sections(sections, self.base_dir)

    def with_seed(self, seed: int) -> Scenario:
        sections = copy.deepcopy(self.sections)
        sections.setdefault("run", {})["seed"] = str(int(seed))
        return scenario_from_sections(sections, self.base_dir)

    def to_text(self) -> str:
        return sections_to_text(self.sections)


def _format_value(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


_CURVE_KEYS = {"model", "p_max", "d_mid_m", "steepness_per_m", "table", "psr"}
_TRAJ_KEYS = {"x", "y", "vx", "vy"}
_ALLOWED_KEYS = {
    "run": {"duration_s", "seed"},
    "channel": _CURVE_KEYS | {"corrupt_fraction"},
    "link": _CURVE_KEYS,
    "controller": _TRAJ_KEYS | {"id", "state_period_s", "state_periods_s",
                                "advertising_interval_ms", "phase_table"},
    "retransmitter": _TRAJ_KEYS | {"tag", "controller", "controller_period_s",
                                   "advertising_interval_ms", "start_offset_ms"},
    "receiver": _TRAJ_KEYS | {"attach", "movement", "duty_cycle", "scan_period_ms",
                              "scan_phase", "staleness_timeout_ms"},
    "sweep": {"parameter", "values", "label"},
}


def _section_kind(name: str) -> str:
    return name.split(":", 1)[0]


class _Reader:
    """Typed access to one section that records problems instead of raising."""

    def __init__(self, name: str, values: Mapping[str, str], errors: list[str]):
        self.name = name
        self.values = values
        self.errors = errors

    def _get(self, key, default, convert, required=False):
        if key not in self.values:
            if required:
                self.errors.append(f"[{self.name}] missing required key {key!r}")
            return default
        raw = self.values[key].strip()
        try:
            return convert(raw)
        except (ValueError, TypeError):
            self.errors.append(f"[{self.name}] {key} = {raw!r} is not valid")
            return default

    def text(self, key, default=None, required=False):
        return self._get(key, default, str, required)

    def number(self, key, default=None, required=False):
        value = self._get(key, default, float, required)
        if value is not None and not math.isfinite(value):
            self.errors.append(f"[{self.name}] {key} must be finite")
            return default
        return value

    def integer(self, key, default=None, required=False):
        return self._get(key, default, lambda s: int(s, 0), required)

    def micros(self, key, scale, default=None, required=False):
        value = self.number(key, None, required)
        return default if value is None else round(value * scale)

    def floats(self, key):
        return self._get(key, None, lambda s: tuple(float(v) for v in s.split(",") if v.strip()))


def _trajectory(r: _Reader) -> Trajectory:
    pos = Position(r.number("x", 0.0), r.number("y", 0.0))
    vx, vy = r.number("vx", 0.0), r.number("vy", 0.0)
    if vx or vy:
        return LinearTrajectory(pos, (vx, vy))
    return StaticTrajectory(pos)


def _curve(r: _Reader, base_dir: Path) -> Optional[PsrCurve]:
    model = r.text("model", "logistic")
    try:
        if model == "logistic":
            return LogisticCurve(r.number("p_max", 1.0), r.number("d_mid_m", 82.0),
                                 r.number("steepness_per_m", 0.08))
        if model == "constant":
            return ConstantCurve(r.number("psr", 1.0, required=True))
        if model == "table":
            path = r.text("table", required=True)
            return load_psr_table(base_dir / path) if path else None
    except FileNotFoundError as exc:
        r.errors.append(f"[{r.name}] PSR table not found: {exc.filename}")
        return None
    except ValueError as exc:
        r.errors.append(f"[{r.name}] {exc}")
        return None
    r.errors.append(f"[{r.name}] unknown channel model {model!r}")
    return None


def scenario_from_sections(sections: Sections, base_dir: Path | str = ".") -> Scenario:
    """Build and validate a scenario; every violation is reported at once."""
    base_dir = Path(base_dir)
    sections = {name: dict(values) for name, values in sections.items()}
    errors: list[str] = []

    for name, values in sections.items():
        kind = _section_kind(name)
        if kind not in _ALLOWED_KEYS:
            errors.append(f"unknown section [{name}]")
            continue
        unknown = sorted(set(values) - _ALLOWED_KEYS[kind])
        if unknown:
            errors.append(f"[{name}] unknown keys {unknown}")

    run = _Reader("run", sections.get("run", {}), errors)
    duration = run.micros("duration_s", SECOND, required=True)
    seed = run.integer("seed", 0)
    if duration is not None and duration <= 0:
        errors.append("[run] duration_s must be positive")
    if seed is not None and not 0 <= seed < 2**64:
        errors.append("[run] seed must be a 64-bit unsigned integer")

    ch = _Reader("channel", sections.get("channel", {}), errors)
    default_curve = _curve(ch, base_dir)
    corrupt = ch.number("corrupt_fraction", 0.0)
    if corrupt is not None and not 0 <= corrupt <= 1:
        errors.append("[channel] corrupt_fraction must lie in [0, 1]")

    if "controller" not in sections:
        errors.append("missing [controller] section")
    c = _Reader("controller", sections.get("controller", {}), errors)
    controller_id = c.text("id", "ctrl")
    state_period = c.micros("state_period_s", SECOND, 2 * SECOND)
    periods = c.floats("state_periods_s")
    ctrl_interval = c.micros("advertising_interval_ms", MS, 50 * MS)
    table = tuple(standard_phase_table())
    table_path = c.text("phase_table")
    if table_path:
        try:
            table = tuple(load_phase_table(base_dir / table_path))
        except FileNotFoundError:
            errors.append(f"[controller] phase table not found: {base_dir / table_path}")
        except ValueError as exc:
            errors.append(f"[controller] phase table: {exc}")
    state_periods = tuple(round(p * SECOND) for p in periods) if periods else None
    if state_periods is not None and len(state_periods) != len(table):
        errors.append(f"[controller] state_periods_s needs {len(table)} values, got {len(state_periods)}")
    for p in state_periods or (state_period,):
        if p <= 0 or ctrl_interval <= 0 or ctrl_interval >= p:
            errors.append("[controller] need 0 < advertising interval < every state period")
            break
    controller = ControllerSpec(controller_id, _trajectory(c), state_period, ctrl_interval,
                                state_periods, table)

    intervals = {controller_id: ctrl_interval}
    retransmitters = []
    for name in sections:
        if _section_kind(name) != "retransmitter":
            continue
        node_id = name.split(":", 1)[1] if ":" in name else ""
        r = _Reader(name, sections[name], errors)
        tag = r.integer("tag", required=True)
        if tag is not None and not 0 <= tag <= 0xFF:
            errors.append(f"[{name}] tag must fit in one byte")
        period = r.micros("controller_period_s", SECOND, state_period)
        if period is not None and (period <= 0 or period % 2):
            errors.append(f"[{name}] controller_period_s must be positive and split evenly into two slots")
        interval = r.micros("advertising_interval_ms", MS, 50 * MS)
        if interval is not None and interval <= 0:
            errors.append(f"[{name}] advertising_interval_ms must be positive")
        offset = r.micros("start_offset_ms", MS, 0)
        if offset is not None and offset < 0:
            errors.append(f"[{name}] start_offset_ms must be >= 0")
        source = r.text("controller", controller_id)
        if source != controller_id:
            errors.append(f"[{name}] controller {source!r} does not name the scenario's controller")
        retransmitters.append(RetransmitterSpec(node_id, tag, _trajectory(r), source, period, interval, offset))
        intervals[node_id] = interval

    receivers = []
    for name in sections:
        if _section_kind(name) != "receiver":
            continue
        node_id = name.split(":", 1)[1] if ":" in name else ""
        r = _Reader(name, sections[name], errors)
        attach = r.text("attach", controller_id)
        if attach not in intervals:
            errors.append(f"[{name}] attach {attach!r} is not a controller or retransmitter")
        movement = movement_id(r.text("movement", "2"))
        known = {m for s in table for m in s.colors}
        if movement not in known:
            errors.append(f"[{name}] movement {movement!r} is not in the phase table")
        duty = r.number("duty_cycle", 1.0)
        if duty is not None and not 0 < duty <= 1:
            errors.append(f"[{name}] duty_cycle must lie in (0, 1]")
        scan_period = r.micros("scan_period_ms", MS, 100 * MS)
        if scan_period is not None and scan_period <= 0:
            errors.append(f"[{name}] scan_period_ms must be positive")
        phase_mode = r.text("scan_phase", "random")
        if phase_mode not in ("random", "fixed"):
            errors.append(f"[{name}] scan_phase must be 'random' or 'fixed'")
        stale = r.micros("staleness_timeout_ms", MS, 3 * intervals.get(attach, 50 * MS))
        if stale is not None and stale <= 0:
            errors.append(f"[{name}] staleness_timeout_ms must be positive")
        receivers.append(ReceiverSpec(node_id, attach, movement, _trajectory(r), duty, scan_period,
                                      phase_mode == "random", stale))

    ids = [controller_id] + [r.node_id for r in retransmitters] + [r.node_id for r in receivers]
    for node_id in ids:
        if not node_id or any(c_ in node_id for c_ in ",;=\n\"") or node_id.strip() != node_id:
            errors.append(f"invalid node id {node_id!r}")
    duplicates = sorted({i for i in ids if ids.count(i) > 1})
    if duplicates:
        errors.append(f"duplicate node ids {duplicates}")
    tags = [r.tag for r in retransmitters]
    if len(set(tags)) != len(tags):
        errors.append("retransmitter tags must be unique")

    overrides = {}
    for name in sections:
        if _section_kind(name) != "link":
            continue
        src, arrow, dst = name.split(":", 1)[-1].partition("->")
        if not arrow or src not in ids or dst not in ids:
            errors.append(f"[{name}] link must be 'link:<src>-><dst>' between known nodes")
            continue
        curve = _curve(_Reader(name, sections[name], errors), base_dir)
        if curve is not None:
            overrides[(src, dst)] = curve

    sweep = None
    if "sweep" in sections:
        s = _Reader("sweep", sections["sweep"], errors)
        parameter = s.text("parameter", required=True)
        values = s.floats("values") or ()
        if parameter:
            section, _, key = parameter.rpartition(".")
            if section not in sections or key not in _ALLOWED_KEYS.get(_section_kind(section), ()):
                errors.append(f"[sweep] unknown parameter {parameter!r}")
        sweep = SweepSpec(parameter or "", values, s.text("label") or (parameter or "").replace(":", "_").replace(".", "_"))

    if errors:
        raise ScenarioError(errors)
    return Scenario(duration, seed, controller, tuple(retransmitters), tuple(receivers),
                    ChannelSpec(default_curve, overrides, corrupt), sweep, sections, base_dir)


def parse_scenario(text: str, base_dir: Path | str = ".") -> Scenario:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"unparseable scenario file: {exc}") from None
    sections = {name: dict(parser[name]) for name in parser.sections()}
    return scenario_from_sections(sections, base_dir)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path.parent)


def sections_to_text(sections: Sections) -> str:
    lines = []
    for name, values in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)
