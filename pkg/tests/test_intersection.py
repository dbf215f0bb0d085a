import itertools

import pytest
from hypothesis import given, strategies as st

from pvtl.intersection import (
    TABLE_COLUMNS,
    DisplayState,
    MalformedTableError,
    MovementKind,
    PhaseState,
    Relation,
    SignalColor,
    UnknownMovementError,
    build_standard_intersection,
    display_state_for,
    dump_phase_table,
    parse_phase_table,
    standard_phase_table,
    validate_phase_table,
)

STD = build_standard_intersection()
MATRIX = STD.matrix
TABLE = standard_phase_table()
IDS = sorted(MATRIX.movement_ids)


def load_golden(path):
    rows = {}
    for line in path.read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        sid, *codes = line.split()
        rows[int(sid)] = dict(zip(TABLE_COLUMNS, codes))
    return rows


def test_table_matches_golden_grid(fixtures_dir):
    golden = load_golden(fixtures_dir / "table1_golden.txt")
    assert sorted(golden) == list(range(1, 14))
    for state in TABLE:
        for col in TABLE_COLUMNS:
            assert state.color(col).value == golden[state.state_id][col], (state.state_id, col)


def test_movement_counts():
    kinds = [m.kind for m in STD]
    assert sum(k is MovementKind.PEDESTRIAN for k in kinds) == 4
    assert len(kinds) - 4 == 12


def test_numbering_conventions():
    for m in STD:
        if m.is_pedestrian:
            continue
        n = int(m.id)
        if n > 10:
            assert m.kind is MovementKind.RIGHT
        elif n % 2 == 0:
            assert m.kind is MovementKind.THROUGH
        else:
            assert m.kind is MovementKind.LEFT


def test_movement_2_is_north_to_south_through():
    m = STD.movements["2"]
    assert m.kind is MovementKind.THROUGH
    assert (m.entry, m.exit) == ("N", "S")


def test_reference_relations():
    assert MATRIX.relation(2, 6) is Relation.COMPATIBLE
    assert MATRIX.relation(2, 2) is Relation.COMPATIBLE
    assert MATRIX.relation(16, "P2") is Relation.YIELD
    assert MATRIX.relation("p2", 16) is Relation.PRIORITY
    assert MATRIX.relation(2, 4) is Relation.CONFLICT


def test_matrix_symmetry_and_irreflexivity():
    for a, b in itertools.product(IDS, repeat=2):
        ab, ba = MATRIX.relation(a, b), MATRIX.relation(b, a)
        if ab in (Relation.CONFLICT, Relation.COMPATIBLE):
            assert ba is ab
        else:
            assert {ab, ba} == {Relation.YIELD, Relation.PRIORITY}
    for a in IDS:
        assert MATRIX.relation(a, a) is Relation.COMPATIBLE


def test_co_green_pairs_are_never_hard_conflicts():
    for state in TABLE:
        greens = [m for m in IDS if state.color(m) is SignalColor.GREEN]
        for a, b in itertools.combinations(greens, 2):
            assert not MATRIX.conflicts(a, b), (state.state_id, a, b)


def test_co_green_right_turn_and_pedestrian_pairs_are_yields():
    # brute-force scan of the table: every right turn green together with a
    # pedestrian crossing it must be a yield relation
    found = set()
    for state in TABLE:
        for v in ("12", "16", "14", "18"):
            for p in ("P2", "P4", "P6", "P8"):
                if state.color(v) is SignalColor.GREEN and state.color(p) is SignalColor.GREEN:
                    rel = MATRIX.relation(v, p)
                    assert rel in (Relation.YIELD, Relation.COMPATIBLE)
                    if rel is Relation.YIELD:
                        found.add((v, p))
    assert ("16", "P2") in found


def test_standard_rows():
    s1, s2, s6 = TABLE[0], TABLE[1], TABLE[5]
    assert sorted(s1.non_red()) == ["1", "5"]
    assert s2.color(5) is SignalColor.YELLOW and s2.color(1) is SignalColor.GREEN
    assert len(s2.non_red()) == 2
    assert {m for m in IDS if s6.color(m) is SignalColor.YELLOW} == {"2", "12", "6", "16"}
    assert {m for m in IDS if s6.color(m) is SignalColor.GREEN} == {"P2", "P6"}


def test_standard_table_validates_clean():
    assert [s.state_id for s in TABLE] == list(range(1, 14))
    assert validate_phase_table(TABLE, MATRIX) == []


def test_validate_reports_crossing_throughs():
    colors = {m: SignalColor.RED for m in TABLE_COLUMNS}
    colors["2"] = colors["4"] = SignalColor.GREEN
    findings = validate_phase_table([PhaseState(1, colors)], MATRIX)
    assert [(f.a, f.b) for f in findings] in ([("2", "4")], [("4", "2")])


def test_validate_malformed():
    with pytest.raises(MalformedTableError):
        validate_phase_table([], MATRIX)
    with pytest.raises(MalformedTableError):
        validate_phase_table([PhaseState(1, {})], MATRIX)


@given(st.lists(st.sampled_from(TABLE_COLUMNS), unique=True, max_size=6))
def test_validate_finds_exactly_the_conflicting_pairs(greens):
    colors = {m: SignalColor.RED for m in TABLE_COLUMNS}
    colors.update({m: SignalColor.GREEN for m in greens})
    findings = validate_phase_table([PhaseState(3, colors)], MATRIX)
    got = {frozenset((f.a, f.b)) for f in findings}
    expected = {frozenset(p) for p in itertools.combinations(greens, 2) if MATRIX.conflicts(*p)}
    assert got == expected


def test_state_id_range():
    with pytest.raises(MalformedTableError):
        PhaseState(14, {})


def test_display_states():
    s5 = TABLE[4]
    assert display_state_for(2, s5, MATRIX) is DisplayState.GREEN
    assert display_state_for(16, s5, MATRIX) is DisplayState.GREEN_YIELD_CROSSWALK
    assert display_state_for(4, s5, MATRIX) is DisplayState.RED
    assert display_state_for(2, TABLE[5], MATRIX) is DisplayState.YELLOW


@given(st.sampled_from(TABLE_COLUMNS), st.sampled_from(TABLE))
def test_display_without_link_is_caution(movement, phase):
    assert display_state_for(movement, phase, MATRIX, link_ok=False) is DisplayState.CAUTION_ANOMALY


def test_display_unknown_movement():
    with pytest.raises(UnknownMovementError):
        display_state_for(99, TABLE[0], MATRIX)


def test_table_text_round_trip():
    assert parse_phase_table(dump_phase_table(TABLE)) == TABLE


def test_parse_phase_table_errors():
    with pytest.raises(MalformedTableError):
        parse_phase_table("")
    with pytest.raises(MalformedTableError, match="line 2"):
        parse_phase_table("state 2 4\n1 G\n")
    with pytest.raises(MalformedTableError, match="line 2"):
        parse_phase_table("state 2 4\n1 G Q\n")
