"""Distance-dependent packet delivery, node trajectories and seeded random streams."""

from __future__ import annotations

import bisect
import hashlib
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Union


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position ({self.x}, {self.y})")

    def distance_to(self, other: Position) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


# -- PSR curves ----------------------------------------------------------------


@dataclass(frozen=True)
class LogisticCurve:
    """Normalised logistic: ``p_max`` at 0 m, half of that near ``d_mid``.

    psr(d) = p_max * (1 + exp(-k*d_mid)) / (1 + exp(k*(d - d_mid)))
    """

    p_max: float = 1.0
    d_mid: float = 82.0
    steepness: float = 0.08

    def __post_init__(self):
        if not 0 < self.p_max <= 1:
            raise ValueError("p_max must be in (0, 1]")
        if self.steepness <= 0:
            raise ValueError("steepness must be positive")

    def psr(self, distance: float) -> float:
        k, mid = self.steepness, self.d_mid
        norm = 1.0 + math.exp(-k * mid)
        z = k * (distance - mid)
        if z > 700:
            return 0.0
        return min(self.p_max, self.p_max * norm / (1.0 + math.exp(z)))


@dataclass(frozen=True)
class TableCurve:
    """Piecewise-linear PSR through measured ``(distance_m, psr)`` knots, clamped at the ends."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple(sorted((float(d), float(p)) for d, p in self.knots))
        if not knots:
            raise ValueError("table curve needs at least one knot")
        ds = [d for d, _ in knots]
        ps = [p for _, p in knots]
        if len(set(ds)) != len(ds):
            raise ValueError("duplicate distances in PSR table")
        if any(not 0 <= p <= 1 for p in ps):
            raise ValueError("PSR values must lie in [0, 1]")
        if any(b > a for a, b in zip(ps, ps[1:])):
            raise ValueError("PSR table must be nonincreasing in distance")
        object.__setattr__(self, "knots", knots)

    def psr(self, distance: float) -> float:
        ds = [d for d, _ in self.knots]
        if distance <= ds[0]:
            return self.knots[0][1]
        if distance >= ds[-1]:
            return self.knots[-1][1]
        i = bisect.bisect_right(ds, distance)
        (d0, p0), (d1, p1) = self.knots[i - 1], self.knots[i]
        return p0 + (p1 - p0) * (distance - d0) / (d1 - d0)

    @property
    def p_max(self) -> float:
        return self.knots[0][1]


@dataclass(frozen=True)
class ConstantCurve:
    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("PSR must lie in [0, 1]")

    def psr(self, distance: float) -> float:
        return self.p


PsrCurve = Union[LogisticCurve, TableCurve, ConstantCurve]

# psr(0) = 1, psr(60 m) ~ 0.85, psr(80 m) ~ 0.54, psr(140 m) ~ 0.01
DEFAULT_CURVE = LogisticCurve()


def psr_at(curve: PsrCurve, distance: float) -> float:
    if distance < 0 or math.isnan(distance):
        raise ValueError(f"distance must be >= 0, got {distance}")
    return curve.psr(distance)


def parse_psr_table(text: str) -> TableCurve:
    """Two whitespace-separated columns ``distance_m psr``; ``#`` starts a comment."""
    knots = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ValueError(f"line {lineno}: expected 2 columns, got {len(fields)}")
        try:
            knots.append((float(fields[0]), float(fields[1])))
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric value") from None
    return TableCurve(tuple(knots))


def load_psr_table(path: str | Path) -> TableCurve:
    return parse_psr_table(Path(path).read_text(encoding="utf-8"))


# -- delivery ------------------------------------------------------------------


def derive_seed(master: int, *labels: object) -> int:
    """Stable 64-bit sub-seed for a named stream; independent of Python's hash salt."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"\x1f" + str(label).encode())
    return int.from_bytes(h.digest(), "big")


def stream(master: int, *labels: object) -> random.Random:
    return random.Random(derive_seed(master, *labels))


def deliver(curve: PsrCurve, tx_pos: Position, rx_pos: Position, rng: random.Random) -> bool:
    """Bernoulli draw at the link's PSR; always consumes exactly one value from ``rng``."""
    p = psr_at(curve, tx_pos.distance_to(rx_pos))
    return rng.random() < p


# -- trajectories --------------------------------------------------------------


@dataclass(frozen=True)
class StaticTrajectory:
    position: Position
    start_time: float = 0.0


@dataclass(frozen=True)
class LinearTrajectory:
    start: Position
    velocity: tuple[float, float]  # m/s
    start_time: float = 0.0  # s


Trajectory = Union[StaticTrajectory, LinearTrajectory]


def position_at(traj: Trajectory, t: float) -> Position:
    """Position at time ``t`` seconds."""
    if t < traj.start_time:
        raise ValueError(f"t={t} s precedes trajectory start {traj.start_time} s")
    if isinstance(traj, StaticTrajectory):
        return traj.position
    dt = t - traj.start_time
    vx, vy = traj.velocity
    return Position(traj.start.x + vx * dt, traj.start.y + vy * dt)

