"""Event-driven controller, retransmitter and receiver state machines.

No machine reads a clock.  Time is always injected as integer microseconds and
every machine exposes the same shape of step: an event goes in, a
:class:`StepResult` (transmissions, trace notes, next wake time) comes out.
The simulation engine calls ``step``/``on_frame``/``on_tick`` at the times the
machine asks for; a hardware shim could do the same from a radio driver.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Union

from .intersection import (
    ConflictMatrix,
    DisplayState,
    PhaseState,
    build_standard_intersection,
    display_state_for,
    movement_id,
    standard_phase_table,
)
from .protocol import FrameError, decode_frame, encode_frame, tag_frame

MS = 1_000
SECOND = 1_000_000


class Transmission(NamedTuple):
    time: int
    source: str
    frame: bytes
    state_id: int
    tag: Optional[int] = None


class Note(NamedTuple):
    """Trace-worthy internal event (state advance, slot change)."""

    time: int
    kind: str
    payload: str


class RxOutcome(Enum):
    ACCEPTED = "accepted"
    CORRUPT = "corrupt"
    NOT_LISTENING = "not-listening"
    IGNORED = "ignored"


@dataclass
class StepResult:
    transmissions: list[Transmission] = field(default_factory=list)
    next_wake: Optional[int] = None
    notes: list[Note] = field(default_factory=list)
    outcome: Optional[RxOutcome] = None


# -- controller ----------------------------------------------------------------


@dataclass(frozen=True)
class ControllerConfig:
    phase_table: tuple[PhaseState, ...] = field(default_factory=lambda: tuple(standard_phase_table()))
    source_id: str = "ctrl"
    state_period: int = 2 * SECOND
    advertising_interval: int = 50 * MS
    state_periods: Optional[tuple[int, ...]] = None  # per-state dwell override

    def __post_init__(self):
        object.__setattr__(self, "phase_table", tuple(self.phase_table))
        if not self.phase_table:
            raise ValueError("controller needs a non-empty phase table")
        periods = self.periods()
        if len(periods) != len(self.phase_table):
            raise ValueError("state_periods must give one period per phase state")
        if self.advertising_interval <= 0 or min(periods) <= 0:
            raise ValueError("periods must be positive")
        if self.advertising_interval >= min(periods):
            raise ValueError("advertising interval must be shorter than every state period")

    def periods(self) -> tuple[int, ...]:
        if self.state_periods is not None:
            return tuple(self.state_periods)
        return (self.state_period,) * len(self.phase_table)


class Controller:
    """Cycles through the phase table, broadcasting the current state every advertising interval."""

    def __init__(self, config: ControllerConfig, start: int = 0):
        self.config = config
        self.frames = [encode_frame(s.state_id) for s in config.phase_table]
        self._periods = config.periods()
        self.index = 0
        self.state_start = start
        self.next_tx = start
        self.last_wake = start
        self._announced = False

    @property
    def current_state_id(self) -> int:
        return self.config.phase_table[self.index].state_id

    def step(self, now: int) -> StepResult:
        if now < self.last_wake:
            raise ValueError(f"controller stepped backwards: {now} < {self.last_wake}")
        self.last_wake = now
        result = StepResult()
        if not self._announced:
            result.notes.append(Note(self.state_start, "state-advance", f"state={self.current_state_id}"))
            self._announced = True
        while self.next_tx <= now:
            state_end = self.state_start + self._periods[self.index]
            if self.next_tx >= state_end:
                self.index = (self.index + 1) % len(self.frames)
                self.state_start = state_end
                self.next_tx = state_end
                result.notes.append(Note(state_end, "state-advance", f"state={self.current_state_id}"))
                continue
            result.transmissions.append(Transmission(
                self.next_tx, self.config.source_id, self.frames[self.index], self.current_state_id))
            self.next_tx += self.config.advertising_interval
        result.next_wake = self.next_tx
        return result


def controller_step(machine: Controller, now: int) -> StepResult:
    return machine.step(now)


# -- retransmitter -------------------------------------------------------------


class Slot(Enum):
    OBSERVE = "observe"
    BROADCAST = "broadcast"
    IDLE = "idle"


@dataclass(frozen=True)
class RetransmitterConfig:
    retransmitter_id: int
    node_id: str = "rtx"
    controller_source_id: str = "ctrl"
    controller_period: int = 2 * SECOND
    advertising_interval: int = 50 * MS

    def __post_init__(self):
        if not 0 <= self.retransmitter_id <= 0xFF:
            raise ValueError("retransmitter id must fit in one byte")
        if self.node_id == self.controller_source_id:
            raise ValueError("retransmitter and controller ids must differ")
        if self.controller_period <= 0 or self.advertising_interval <= 0:
            raise ValueError("periods must be positive")
        if self.controller_period % 2:
            raise ValueError("controller period must split into two equal integer slots")


class FrameReceived(NamedTuple):
    frame: bytes
    source: str


class Wake(NamedTuple):
    pass


RetransmitterEvent = Union[FrameReceived, Wake]


class Retransmitter:
    """Alternates an observe slot and a broadcast slot, each half a controller period.

    Slots are anchored to the machine's own start time.  A frame is stored only
    if it decodes, is untagged and comes from the configured controller; the
    broadcast slot repeats the last stored frame with this node's tag, or
    stays silent when nothing was stored.
    """

    def __init__(self, config: RetransmitterConfig, start: int = 0):
        self.config = config
        self.start = start
        self.period_start = start
        self.slot = Slot.OBSERVE
        self.tx_msg: Optional[bytes] = None
        self.message_received = False
        self.rx_source: Optional[str] = None
        self.outgoing: Optional[bytes] = None
        self.next_tx: Optional[int] = None
        self.last_event = start
        self.dropped = 0
        self.ignored = 0
        self.missed = 0
        self._announced = False

    @property
    def half(self) -> int:
        return self.config.controller_period // 2

    def listening(self, now: int) -> bool:
        return now >= self.start and (now - self.start) % self.config.controller_period < self.half

    def _slot_end(self) -> int:
        return self.period_start + (self.half if self.slot is Slot.OBSERVE else 2 * self.half)

    def _advance(self, now: int, result: StepResult) -> None:
        while True:
            end = self._slot_end()
            if self.slot is Slot.BROADCAST:
                while self.next_tx < end and self.next_tx <= now:
                    result.transmissions.append(Transmission(
                        self.next_tx, self.config.node_id, self.outgoing,
                        self.outgoing[7], self.config.retransmitter_id))
                    self.next_tx += self.config.advertising_interval
            if end > now:
                return
            if self.slot is Slot.OBSERVE:
                if self.message_received:
                    self.slot = Slot.BROADCAST
                    self.outgoing = tag_frame(self.tx_msg, self.config.retransmitter_id)
                    self.next_tx = end
                else:
                    self.slot = Slot.IDLE
            else:
                self.period_start = end
                self.slot = Slot.OBSERVE
                self.tx_msg = None
                self.message_received = False
                self.rx_source = None
                self.outgoing = None
                self.next_tx = None
            result.notes.append(Note(end, "slot-change", f"slot={self.slot.value}"))

    def next_wake(self) -> int:
        end = self._slot_end()
        if self.slot is Slot.BROADCAST and self.next_tx < end:
            return self.next_tx
        return end

    def step(self, event: RetransmitterEvent, now: int) -> StepResult:
        if now < self.last_event:
            raise ValueError(f"retransmitter stepped backwards: {now} < {self.last_event}")
        self.last_event = now
        result = StepResult()
        if not self._announced:
            result.notes.append(Note(self.start, "slot-change", f"slot={Slot.OBSERVE.value}"))
            self._announced = True
        self._advance(now, result)
        if isinstance(event, FrameReceived):
            result.outcome = self._receive(event)
        result.next_wake = self.next_wake()
        return result

    def _receive(self, event: FrameReceived) -> RxOutcome:
        if self.slot is not Slot.OBSERVE:
            self.missed += 1
            return RxOutcome.NOT_LISTENING
        try:
            decoded = decode_frame(event.frame)
        except FrameError:
            self.dropped += 1
            return RxOutcome.CORRUPT
        if decoded.tag is not None:
            self.dropped += 1
            return RxOutcome.CORRUPT
        if event.source != self.config.controller_source_id:
            self.ignored += 1
            return RxOutcome.IGNORED
        self.message_received = True
        self.rx_source = event.source
        self.tx_msg = bytes(event.frame)
        return RxOutcome.ACCEPTED


def retransmitter_step(machine: Retransmitter, event: RetransmitterEvent, now: int) -> StepResult:
    return machine.step(event, now)


# -- receiver ------------------------------------------------------------------


class ScanGate:
    """Listening windows of ``duty_cycle * period`` inside every scan period.

    With ``random_phase`` the window of each period starts at an offset drawn
    from a hash of ``(seed, period index)`` and may wrap around the period end,
    so a transmission at any fixed phase is heard with probability
    ``duty_cycle``.  Without it the window always opens at the period start.
    """

    def __init__(self, duty_cycle: float = 1.0, period: int = 100 * MS, seed: int = 0,
                 random_phase: bool = True):
        if not 0 < duty_cycle <= 1:
            raise ValueError("duty cycle must lie in (0, 1]")
        if period <= 0:
            raise ValueError("scan period must be positive")
        self.duty_cycle = duty_cycle
        self.period = period
        self.window = round(duty_cycle * period)
        self.seed = seed
        self.random_phase = random_phase

    def _offset(self, k: int) -> int:
        if not self.random_phase:
            return 0
        digest = hashlib.blake2b(f"{self.seed}:{k}".encode(), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.period

    def listening(self, now: int) -> bool:
        if self.window >= self.period:
            return True
        k, phase = divmod(now, self.period)
        return (phase - self._offset(k)) % self.period < self.window


@dataclass(frozen=True)
class ReceiverConfig:
    movement_of_interest: str
    staleness_timeout: int = 150 * MS
    duty_cycle: float = 1.0
    scan_period: int = 100 * MS
    random_scan_phase: bool = True
    scan_seed: int = 0
    phase_table: tuple[PhaseState, ...] = field(default_factory=lambda: tuple(standard_phase_table()))
    matrix: Optional[ConflictMatrix] = None

    def __post_init__(self):
        object.__setattr__(self, "movement_of_interest", movement_id(self.movement_of_interest))
        object.__setattr__(self, "phase_table", tuple(self.phase_table))
        if self.matrix is None:
            object.__setattr__(self, "matrix", build_standard_intersection().matrix)
        if self.staleness_timeout <= 0:
            raise ValueError("staleness timeout must be positive")
        if not 0 < self.duty_cycle <= 1:
            raise ValueError("duty cycle must lie in (0, 1]")
        if self.movement_of_interest not in self.matrix.movement_ids:
            raise ValueError(f"unknown movement {self.movement_of_interest}")


@dataclass
class ReceiverStatus:
    current_state_id: Optional[int] = None
    last_update_time: Optional[int] = None
    display: DisplayState = DisplayState.CAUTION_ANOMALY
    update_intervals: list[int] = field(default_factory=list)


class Receiver:
    def __init__(self, config: ReceiverConfig):
        self.config = config
        self.status = ReceiverStatus()
        self.gate = ScanGate(config.duty_cycle, config.scan_period, config.scan_seed,
                             config.random_scan_phase)
        self._phases = {s.state_id: s for s in config.phase_table}
        self.drops = 0
        self.missed = 0

    def listening(self, now: int) -> bool:
        return self.gate.listening(now)

    def on_frame(self, frame: bytes, now: int) -> RxOutcome:
        if not self.gate.listening(now):
            self.missed += 1
            return RxOutcome.NOT_LISTENING
        try:
            decoded = decode_frame(frame)
        except FrameError:
            self.drops += 1
            return RxOutcome.CORRUPT
        phase = self._phases.get(decoded.state_id)
        if phase is None:
            self.drops += 1
            return RxOutcome.CORRUPT
        status = self.status
        if status.last_update_time is not None:
            status.update_intervals.append(now - status.last_update_time)
        status.current_state_id = decoded.state_id
        status.last_update_time = now
        status.display = display_state_for(self.config.movement_of_interest, phase,
                                           self.config.matrix, link_ok=True)
        return RxOutcome.ACCEPTED

    def on_tick(self, now: int) -> ReceiverStatus:
        last = self.status.last_update_time
        if last is None or now - last > self.config.staleness_timeout:
            self.status.display = DisplayState.CAUTION_ANOMALY
        return self.status

    def next_wake(self) -> Optional[int]:
        """First instant at which the current information becomes stale."""
        last = self.status.last_update_time
        return None if last is None else last + self.config.staleness_timeout + 1


def receiver_on_frame(machine: Receiver, frame_bytes: bytes, now: int) -> ReceiverStatus:
    machine.on_frame(frame_bytes, now)
    return machine.status


def receiver_on_tick(machine: Receiver, now: int) -> ReceiverStatus:
    return machine.on_tick(now)

