"""Deterministic discrete-event engine producing a complete event trace.

Time is integer microseconds from scenario start.  Simultaneous trace events
are ordered by ``(time, node id, kind)`` using :data:`KIND_ORDER`, then by the
order the engine produced them.

Trace CSV (UTF-8, ``\\n`` line endings)::

    time_us,kind,node,payload
    0,state-advance,ctrl,state=1
    0,tx,ctrl,state=1
    104,rx-ok,monitor,src=ctrl;state=1
    104,display-change,monitor,display=red;state=1

``payload`` is a ``;``-separated list of ``key=value`` pairs:

=============== ===========================================================
kind            payload keys
=============== ===========================================================
tx              ``state``, ``tag`` (retransmitter frames only)
rx-ok           ``src``, ``state``, ``tag`` (if tagged)
rx-lost         ``src``, ``state``, ``cause`` (``channel`` or ``asleep``)
rx-corrupt      ``src``
display-change  ``display``, ``state`` (empty before the first reception)
state-advance   ``state``
slot-change     ``slot`` (``observe``, ``broadcast`` or ``idle``)
=============== ===========================================================
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

from .channel import Position, derive_seed, deliver, position_at, stream
from .nodes import (
    Controller,
    ControllerConfig,
    FrameReceived,
    Receiver,
    ReceiverConfig,
    Retransmitter,
    RetransmitterConfig,
    RxOutcome,
    StepResult,
    Wake,
)
from .protocol import tx_time
from .scenario import Scenario, scenario_from_sections

SPEED_OF_LIGHT = 299.792458  # m/us

KIND_ORDER = ("state-advance", "slot-change", "tx", "rx-ok", "rx-lost", "rx-corrupt", "display-change")
_KIND_RANK = {k: i for i, k in enumerate(KIND_ORDER)}
TRACE_HEADER = ("time_us", "kind", "node", "payload")


class TraceParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class TraceEvent(NamedTuple):
    time: int
    kind: str
    node: str
    payload: str = ""

    def fields(self) -> dict[str, str]:
        return parse_payload(self.payload)


def parse_payload(payload: str) -> dict[str, str]:
    if not payload:
        return {}
    out = {}
    for part in payload.split(";"):
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"payload item {part!r} is not key=value")
        out[key] = value
    return out


def _payload(**items) -> str:
    return ";".join(f"{k}={v}" for k, v in items.items() if v is not None)


@dataclass
class Trace:
    events: list[TraceEvent]
    duration: Optional[int] = None

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def of_kind(self, kind: str, node: Optional[str] = None) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind and (node is None or e.node == node)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        writer.writerows(self.events)
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8", newline="")


def parse_trace_csv(text: str) -> Trace:
    reader = csv.reader(io.StringIO(text))
    events = []
    for lineno, row in enumerate(reader, 1):
        if lineno == 1:
            if tuple(row) != TRACE_HEADER:
                raise TraceParseError(lineno, f"expected header {','.join(TRACE_HEADER)}")
            continue
        if not row:
            continue
        if len(row) != 4:
            raise TraceParseError(lineno, f"expected 4 columns, got {len(row)}")
        time_s, kind, node, payload = row
        try:
            time = int(time_s)
        except ValueError:
            raise TraceParseError(lineno, f"time {time_s!r} is not an integer") from None
        if time < 0 or (events and time < events[-1].time):
            raise TraceParseError(lineno, f"time {time} is negative or earlier than the previous row")
        if kind not in _KIND_RANK:
            raise TraceParseError(lineno, f"unknown event kind {kind!r}")
        if not node:
            raise TraceParseError(lineno, "empty node id")
        try:
            parse_payload(payload)
        except ValueError as exc:
            raise TraceParseError(lineno, str(exc)) from None
        events.append(TraceEvent(time, kind, node, payload))
    if not events and not text.strip():
        raise TraceParseError(1, "empty file")
    return Trace(events)


def read_trace_csv(path: str | Path) -> Trace:
    return parse_trace_csv(Path(path).read_text(encoding="utf-8"))


# -- engine --------------------------------------------------------------------

_WAKE, _ARRIVAL = 0, 1


class _Arrival(NamedTuple):
    src: str
    frame: bytes
    state_id: int
    tag: Optional[int]
    delivered: bool
    corrupt_bit: Optional[int]


class Engine:
    """One single-threaded run of a scenario.  Build a new engine per run."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        sc = scenario
        ctrl = sc.controller
        self.trajectories = {ctrl.node_id: ctrl.trajectory}
        self.controller = Controller(ControllerConfig(
            ctrl.phase_table, ctrl.node_id, ctrl.state_period, ctrl.advertising_interval, ctrl.state_periods))
        self.retransmitters: dict[str, Retransmitter] = {}
        self.receivers: dict[str, Receiver] = {}
        self.links: dict[str, list[str]] = {node: [] for node in sc.node_ids}
        for r in sc.retransmitters:
            self.trajectories[r.node_id] = r.trajectory
            self.retransmitters[r.node_id] = Retransmitter(RetransmitterConfig(
                r.tag, r.node_id, r.controller, r.controller_period, r.advertising_interval),
                start=r.start_offset)
            self.links[ctrl.node_id].append(r.node_id)
        for r in sc.receivers:
            self.trajectories[r.node_id] = r.trajectory
            self.receivers[r.node_id] = Receiver(ReceiverConfig(
                r.movement, r.staleness_timeout, r.duty_cycle, r.scan_period, r.random_scan_phase,
                derive_seed(sc.seed, "scan", r.node_id), ctrl.phase_table))
            self.links[r.attach].append(r.node_id)
        self.rngs = {(src, dst): stream(sc.seed, "link", src, dst)
                     for src, dsts in self.links.items() for dst in dsts}
        self.corrupt_rngs = {key: stream(sc.seed, "corrupt", *key) for key in self.rngs}
        self._queue: list = []
        self._seq = itertools.count()
        self._scheduled: dict[str, Optional[int]] = {}
        self._events: list[tuple] = []

    def _log(self, time: int, kind: str, node: str, payload: str = "") -> None:
        self._events.append((time, node, _KIND_RANK[kind], next(self._seq), TraceEvent(time, kind, node, payload)))

    def _push(self, time: int, node: str, what: int, data=None) -> None:
        heapq.heappush(self._queue, (time, node, what, next(self._seq), data))

    def _schedule_wake(self, node: str, when: Optional[int]) -> None:
        if when is None or self._scheduled.get(node) == when:
            return
        self._scheduled[node] = when
        self._push(when, node, _WAKE)

    def _position(self, node: str, time: int) -> Position:
        return position_at(self.trajectories[node], time / 1e6)

    def _handle(self, node: str, result: StepResult) -> None:
        for note in result.notes:
            self._log(note.time, note.kind, node, note.payload)
        for tx in result.transmissions:
            self._transmit(tx)
        self._schedule_wake(node, result.next_wake)

    def _transmit(self, tx) -> None:
        self._log(tx.time, "tx", tx.source, _payload(state=tx.state_id, tag=tx.tag))
        air = round(tx_time(len(tx.frame)))
        src_pos = self._position(tx.source, tx.time)
        corrupt_fraction = self.scenario.channel.corrupt_fraction
        for dst in self.links[tx.source]:
            dst_pos = self._position(dst, tx.time)
            curve = self.scenario.channel.curve_for(tx.source, dst)
            ok = deliver(curve, src_pos, dst_pos, self.rngs[(tx.source, dst)])
            bit = None
            if ok and corrupt_fraction > 0:
                rng: random.Random = self.corrupt_rngs[(tx.source, dst)]
                if rng.random() < corrupt_fraction:
                    bit = rng.randrange(len(tx.frame) * 8)
            prop = round(src_pos.distance_to(dst_pos) / SPEED_OF_LIGHT)
            self._push(tx.time + air + prop, dst, _ARRIVAL,
                       _Arrival(tx.source, tx.frame, tx.state_id, tx.tag, ok, bit))

    def _arrive(self, node: str, now: int, a: _Arrival) -> None:
        machine = self.receivers.get(node) or self.retransmitters[node]
        lost = _payload(src=a.src, state=a.state_id)
        if not machine.listening(now):
            self._log(now, "rx-lost", node, lost + ";cause=asleep")
            machine.missed += 1
            return
        if not a.delivered:
            self._log(now, "rx-lost", node, lost + ";cause=channel")
            return
        frame = a.frame
        if a.corrupt_bit is not None:
            buf = bytearray(frame)
            buf[a.corrupt_bit // 8] ^= 0x80 >> (a.corrupt_bit % 8)
            frame = bytes(buf)
        if node in self.receivers:
            before = machine.status.display
            outcome = machine.on_frame(frame, now)
        else:
            result = machine.step(FrameReceived(frame, a.src), now)
            outcome = result.outcome
            self._handle(node, result)
        if outcome is RxOutcome.ACCEPTED:
            self._log(now, "rx-ok", node, _payload(src=a.src, state=a.state_id, tag=a.tag))
        elif outcome is RxOutcome.CORRUPT:
            self._log(now, "rx-corrupt", node, _payload(src=a.src))
        else:
            cause = "asleep" if outcome is RxOutcome.NOT_LISTENING else "filtered"
            self._log(now, "rx-lost", node, lost + f";cause={cause}")
        if node in self.receivers:
            self._display(node, before, now)
            self._schedule_wake(node, machine.next_wake())

    def _display(self, node: str, before, now: int) -> None:
        status = self.receivers[node].status
        if status.display is not before:
            state = "" if status.current_state_id is None else status.current_state_id
            self._log(now, "display-change", node, _payload(display=status.display.value, state=state))

    def run(self) -> Trace:
        sc = self.scenario
        self._schedule_wake(sc.controller.node_id, 0)
        for node, r in self.retransmitters.items():
            self._schedule_wake(node, r.start)
        for node in self.receivers:
            self._schedule_wake(node, 0)
            # initial display has no predecessor
            self._log(0, "display-change", node, _payload(display=self.receivers[node].status.display.value, state=""))
        while self._queue:
            time, node, what, _, data = heapq.heappop(self._queue)
            if what == _ARRIVAL:
                self._arrive(node, time, data)
                continue
            if self._scheduled.get(node) != time:
                continue
            self._scheduled[node] = None
            if time >= sc.duration:
                continue
            if node == sc.controller.node_id:
                self._handle(node, self.controller.step(time))
            elif node in self.retransmitters:
                self._handle(node, self.retransmitters[node].step(Wake(), time))
            else:
                receiver = self.receivers[node]
                before = receiver.status.display
                receiver.on_tick(time)
                self._display(node, before, time)
        self._events.sort(key=lambda e: e[:4])
        return Trace([e[4] for e in self._events], sc.duration)


def run(scenario: Scenario) -> Trace:
    return Engine(scenario).run()


def sweep_seed(base_seed: int, parameter: str, value: float) -> int:
    return derive_seed(base_seed, "sweep", parameter, repr(float(value))) >> 1


def _run_point(args) -> tuple[float, Trace]:
    # plain section dicts travel to worker processes; the parsed scenario does not pickle
    sections, base_dir, parameter, value = args
    base = scenario_from_sections(sections, base_dir)
    scenario = base.with_param(parameter, value).with_seed(sweep_seed(base.seed, parameter, value))
    return value, run(scenario)


def sweep(base: Scenario, parameter: str, values: Iterable[float],
          workers: Optional[int] = None) -> list[tuple[float, Trace]]:
    """One independent run per value, each with a sub-seed derived from (seed, parameter, value)."""
    values = list(values)
    if not values:
        return []
    base.with_param(parameter, values[0])  # fail fast on unknown parameter
    jobs = [(base.sections, base.base_dir, parameter, v) for v in values]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_point, jobs))
    return [_run_point(job) for job in jobs]


def link_counts(trace: Trace) -> dict[str, int]:
    """Transmissions per source node."""
    counts: dict[str, int] = {}
    for e in trace.of_kind("tx"):
        counts[e.node] = counts.get(e.node, 0) + 1
    return counts


def receptions_by_source(trace: Trace, node: str) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    for e in trace.events:
        if e.node == node and e.kind in ("rx-ok", "rx-lost", "rx-corrupt"):
            src = e.fields()["src"]
            out.setdefault(src, {}).setdefault(e.kind, 0)
            out[src][e.kind] += 1
    return out


def state_sequence(events: Sequence[TraceEvent]) -> list[int]:
    return [int(e.fields()["state"]) for e in events]
