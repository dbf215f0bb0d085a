"""Four-way intersection model: movements, conflict relations and the phase table.

Movement ids are strings: ``"1"`` .. ``"18"`` for vehicles and ``"P2"``,
``"P4"``, ``"P6"``, ``"P8"`` for pedestrians.  Integers are accepted wherever a
movement id is expected and normalised with :func:`movement_id`.

Geometry (right-hand traffic, legs N/E/S/O with O = west)::

    approach N->S : 5 left (exits E), 2 through, 12 right (exits O)
    approach S->N : 1 left (exits O), 6 through, 16 right (exits E)
    approach E->O : 7 left (exits S), 4 through, 14 right (exits N)
    approach O->E : 3 left (exits N), 8 through, 18 right (exits S)

    P2 crosses the E leg, P6 the O leg, P4 the S leg, P8 the N leg.

Each crossing Pk sits on the leg where the left turn of through movement k's
approach exits.  Turning vehicles yield to a green crossing on a leg they use;
through vehicles hard-conflict with it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence, Union

NUMBER_OF_STATES = 13


class MalformedTableError(ValueError):
    """Phase table references unknown movements or is not total."""


class UnknownMovementError(KeyError):
    pass


class MovementKind(Enum):
    THROUGH = "vehicle-through"
    LEFT = "vehicle-left"
    RIGHT = "vehicle-right-permitted"
    PEDESTRIAN = "pedestrian"


class SignalColor(Enum):
    RED = "R"
    GREEN = "G"
    YELLOW = "Y"

    @property
    def is_red(self) -> bool:
        return self is SignalColor.RED


class Relation(Enum):
    """Relation of movement ``a`` towards movement ``b``.

    ``YIELD`` means ``a`` may share a green with ``b`` but must give way to it;
    the reverse lookup returns ``PRIORITY``.
    """

    COMPATIBLE = "compatible"
    CONFLICT = "conflict"
    YIELD = "yield"
    PRIORITY = "priority"


class DisplayState(Enum):
    RED = "red"
    GREEN = "green"
    YELLOW = "yellow"
    GREEN_YIELD_CROSSWALK = "green-yield-crosswalk"
    CAUTION_ANOMALY = "caution-anomaly"


MovementId = str
MovementRef = Union[str, int]


def movement_id(ref: MovementRef) -> MovementId:
    return str(ref).strip().upper()


@dataclass(frozen=True)
class Movement:
    id: MovementId
    kind: MovementKind
    approach: str
    entry: str | None = None
    exit: str | None = None
    crossing_leg: str | None = None

    @property
    def is_pedestrian(self) -> bool:
        return self.kind is MovementKind.PEDESTRIAN

    @property
    def legs(self) -> tuple[str, ...]:
        if self.is_pedestrian:
            return ()
        return (self.entry, self.exit)


# (id, kind, approach, entry leg, exit leg)
_VEHICLES = [
    ("5", MovementKind.LEFT, "N->S", "N", "E"),
    ("2", MovementKind.THROUGH, "N->S", "N", "S"),
    ("12", MovementKind.RIGHT, "N->S", "N", "O"),
    ("1", MovementKind.LEFT, "S->N", "S", "O"),
    ("6", MovementKind.THROUGH, "S->N", "S", "N"),
    ("16", MovementKind.RIGHT, "S->N", "S", "E"),
    ("7", MovementKind.LEFT, "E->O", "E", "S"),
    ("4", MovementKind.THROUGH, "E->O", "E", "O"),
    ("14", MovementKind.RIGHT, "E->O", "E", "N"),
    ("3", MovementKind.LEFT, "O->E", "O", "N"),
    ("8", MovementKind.THROUGH, "O->E", "O", "E"),
    ("18", MovementKind.RIGHT, "O->E", "O", "S"),
]
_PEDESTRIANS = [("P2", "E"), ("P4", "S"), ("P6", "O"), ("P8", "N")]

# Column order of the published phase table.
TABLE_COLUMNS: tuple[MovementId, ...] = (
    "P2", "P4", "P6", "P8",
    "5", "2", "12", "1", "6", "16", "7", "4", "14", "3", "8", "18",
)

# Lane endpoints walked clockwise around the intersection boundary.  Inbound
# lanes sit on the right-hand side of each leg.
_BOUNDARY = {
    ("N", "in"): 0, ("N", "out"): 1,
    ("E", "in"): 2, ("E", "out"): 3,
    ("S", "in"): 4, ("S", "out"): 5,
    ("O", "in"): 6, ("O", "out"): 7,
}
_OPPOSITE = {"N": "S", "S": "N", "E": "O", "O": "E"}


def _chords_cross(a: tuple[int, int], b: tuple[int, int]) -> bool:
    lo, hi = sorted(a)
    inside = [lo < p < hi for p in b]
    return inside[0] != inside[1]


def _vehicle_relation(a: Movement, b: Movement) -> Relation:
    if a.entry == b.entry:
        return Relation.COMPATIBLE
    chord_a = (_BOUNDARY[(a.entry, "in")], _BOUNDARY[(a.exit, "out")])
    chord_b = (_BOUNDARY[(b.entry, "in")], _BOUNDARY[(b.exit, "out")])
    if not (a.exit == b.exit or _chords_cross(chord_a, chord_b)):
        return Relation.COMPATIBLE
    # permitted left turn against the opposing flow
    if _OPPOSITE[a.entry] == b.entry:
        if a.kind is MovementKind.LEFT and b.kind is not MovementKind.LEFT:
            return Relation.YIELD
        if b.kind is MovementKind.LEFT and a.kind is not MovementKind.LEFT:
            return Relation.PRIORITY
    return Relation.CONFLICT


def _vehicle_pedestrian_relation(v: Movement, p: Movement) -> Relation:
    if p.crossing_leg not in v.legs:
        return Relation.COMPATIBLE
    if v.kind is MovementKind.THROUGH:
        return Relation.CONFLICT
    return Relation.YIELD


@dataclass(frozen=True)
class ConflictMatrix:
    relations: Mapping[tuple[MovementId, MovementId], Relation]

    def relation(self, a: MovementRef, b: MovementRef) -> Relation:
        key = (movement_id(a), movement_id(b))
        try:
            return self.relations[key]
        except KeyError:
            raise UnknownMovementError(key) from None

    def conflicts(self, a: MovementRef, b: MovementRef) -> bool:
        return self.relation(a, b) is Relation.CONFLICT

    def yields_to(self, a: MovementRef) -> list[MovementId]:
        """Movements that ``a`` must give way to when both are green."""
        a = movement_id(a)
        return sorted(b for (x, b), r in self.relations.items() if x == a and r is Relation.YIELD)

    @property
    def movement_ids(self) -> frozenset[MovementId]:
        return frozenset(a for a, _ in self.relations)


@dataclass(frozen=True)
class Intersection:
    movements: Mapping[MovementId, Movement]
    matrix: ConflictMatrix

    def __iter__(self):
        return iter(self.movements.values())


def build_standard_intersection() -> Intersection:
    """The 16 movements of a four-way intersection with their conflict matrix."""
    movements: dict[MovementId, Movement] = {}
    for mid, kind, approach, entry, exit_ in _VEHICLES:
        movements[mid] = Movement(mid, kind, approach, entry=entry, exit=exit_)
    for mid, leg in _PEDESTRIANS:
        movements[mid] = Movement(mid, MovementKind.PEDESTRIAN, f"crosses-{leg}", crossing_leg=leg)

    relations: dict[tuple[MovementId, MovementId], Relation] = {}
    for a in movements.values():
        for b in movements.values():
            if a.id == b.id or (a.is_pedestrian and b.is_pedestrian):
                rel = Relation.COMPATIBLE
            elif a.is_pedestrian:
                rel = _vehicle_pedestrian_relation(b, a)
                rel = {Relation.YIELD: Relation.PRIORITY}.get(rel, rel)
            elif b.is_pedestrian:
                rel = _vehicle_pedestrian_relation(a, b)
            else:
                rel = _vehicle_relation(a, b)
            relations[(a.id, b.id)] = rel
    return Intersection(MappingProxyType(movements), ConflictMatrix(MappingProxyType(relations)))


@dataclass(frozen=True)
class PhaseState:
    state_id: int
    colors: Mapping[MovementId, SignalColor] = field(hash=False)

    def __post_init__(self):
        if not 1 <= self.state_id <= NUMBER_OF_STATES:
            raise MalformedTableError(f"state id {self.state_id} outside 1..{NUMBER_OF_STATES}")
        object.__setattr__(self, "colors", MappingProxyType(dict(self.colors)))

    def color(self, movement: MovementRef) -> SignalColor:
        try:
            return self.colors[movement_id(movement)]
        except KeyError:
            raise UnknownMovementError(movement_id(movement)) from None

    def non_red(self) -> list[MovementId]:
        return [m for m, c in self.colors.items() if not c.is_red]


def _state(state_id: int, green: str = "", yellow: str = "") -> PhaseState:
    colors = {m: SignalColor.RED for m in TABLE_COLUMNS}
    colors.update({m: SignalColor.GREEN for m in green.split()})
    colors.update({m: SignalColor.YELLOW for m in yellow.split()})
    return PhaseState(state_id, colors)


_STANDARD_TABLE = (
    _state(1, green="5 1"),
    _state(2, green="1", yellow="5"),
    _state(3, green="P6 1 6 16"),
    _state(4, green="P6 6 16", yellow="1"),
    _state(5, green="P2 P6 5 2 12 6 16"),
    _state(6, green="P2 P6", yellow="2 12 6 16"),
    _state(7, green="7 3"),
    _state(8, green="3", yellow="7"),
    _state(9, green="3 8 18"),
    _state(10, green="8 18", yellow="3"),
    _state(11, green="4 14 8 18"),
    _state(12, green="P4 P8 4 14 8 18"),
    _state(13, green="P4 P8", yellow="4 14 8 18"),
)


def standard_phase_table() -> list[PhaseState]:
    return list(_STANDARD_TABLE)


@dataclass(frozen=True)
class Finding:
    state_id: int
    a: MovementId
    b: MovementId

    def __str__(self) -> str:
        return f"state {self.state_id}: {self.a} and {self.b} conflict but are both non-red"


def validate_phase_table(table: Sequence[PhaseState], matrix: ConflictMatrix) -> list[Finding]:
    """Every (state, pair) where two hard-conflicting movements are both non-red.

    Yellow counts as non-red.  Raises :class:`MalformedTableError` when the
    table is empty, a state does not colour every movement of the matrix, or
    a state names a movement the matrix does not know.
    """
    if not table:
        raise MalformedTableError("phase table is empty")
    known = matrix.movement_ids
    findings = []
    for state in table:
        ids = set(state.colors)
        if ids - known:
            raise MalformedTableError(f"state {state.state_id}: unknown movements {sorted(ids - known)}")
        if known - ids:
            raise MalformedTableError(f"state {state.state_id}: no colour for {sorted(known - ids)}")
        active = state.non_red()
        for i, a in enumerate(active):
            for b in active[i + 1:]:
                if matrix.conflicts(a, b):
                    findings.append(Finding(state.state_id, a, b))
    return findings


def display_state_for(movement: MovementRef, phase: PhaseState, matrix: ConflictMatrix,
                      link_ok: bool = True) -> DisplayState:
    movement = movement_id(movement)
    color = phase.color(movement)
    if movement not in matrix.movement_ids:
        raise UnknownMovementError(movement)
    if not link_ok:
        return DisplayState.CAUTION_ANOMALY
    if color is SignalColor.GREEN:
        for other in matrix.yields_to(movement):
            if other.startswith("P") and phase.color(other) is SignalColor.GREEN:
                return DisplayState.GREEN_YIELD_CROSSWALK
        return DisplayState.GREEN
    return DisplayState.YELLOW if color is SignalColor.YELLOW else DisplayState.RED


# -- plain-text table format ---------------------------------------------------
#
#   # comment
#   state P2 P4 P6 P8 5 2 12 1 6 16 7 4 14 3 8 18
#   1     R  R  R  R  G R R  G R R  R R R  R R R
#
# The first non-comment line is the header naming the movement columns; each
# following line is a state id and one colour code (R, G, Y) per column.


def dump_phase_table(table: Iterable[PhaseState], columns: Sequence[MovementId] = TABLE_COLUMNS) -> str:
    lines = ["state " + " ".join(columns)]
    for state in table:
        lines.append(" ".join([str(state.state_id)] + [state.color(m).value for m in columns]))
    return "\n".join(lines) + "\n"


def parse_phase_table(text: str) -> list[PhaseState]:
    columns: list[MovementId] | None = None
    table = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if columns is None:
            if fields[0].lower() != "state":
                raise MalformedTableError(f"line {lineno}: expected header starting with 'state'")
            columns = [movement_id(f) for f in fields[1:]]
            if len(set(columns)) != len(columns) or not columns:
                raise MalformedTableError(f"line {lineno}: empty or duplicate movement columns")
            continue
        if len(fields) != len(columns) + 1:
            raise MalformedTableError(
                f"line {lineno}: expected {len(columns) + 1} fields, got {len(fields)}")
        try:
            state_id = int(fields[0])
            colors = {m: SignalColor(code.upper()) for m, code in zip(columns, fields[1:])}
        except ValueError as exc:
            raise MalformedTableError(f"line {lineno}: {exc}") from None
        table.append(PhaseState(state_id, colors))
    if not table:
        raise MalformedTableError("no states found")
    return table


def load_phase_table(path: str | Path) -> list[PhaseState]:
    return parse_phase_table(Path(path).read_text(encoding="utf-8"))
