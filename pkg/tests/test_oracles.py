import numpy as np
import pytest

from qutedb.errors import UnsupportedPredicate, WidthOverflow
from qutedb.services.oracles import QromLoader, comparator_oracle, compile_oracle
from qutedb.services.predicates import And, Eq, Exists, Not, Or, PrefixLike, Range
from qutedb.services.simulator import GateKind, StateVector, simulator
from qutedb.services.storage import ColumnDef, ColumnType, Table, TableDef, evaluate_predicate

PREDICATES = [
    Eq(column="dept", value=2),
    Range(column="age", low=30, high=45),
    Range(column="age", low=40, low_open=True),
    Range(column="age", high=29, high_open=True),
    And(items=(Range(column="age", low=25), Eq(column="active", value=1))),
    Or(items=(Eq(column="dept", value=0), Range(column="age", low=55))),
    Not(item=Eq(column="dept", value=1)),
    Eq(column="name", value="eve"),
    Range(column="name", low="d", high="j"),
    PrefixLike(column="name", pattern="j%"),
]


@pytest.mark.parametrize("pred", PREDICATES, ids=lambda p: p.to_sql())
def test_oracle_marks_exactly_the_satisfying_rows(people_table, pred):
    oracle = compile_oracle(pred, people_table.loader(pred.columns()))
    expected = np.flatnonzero(evaluate_predicate(pred, people_table))
    assert oracle.marked().tolist() == expected.tolist()


def test_padded_rows_are_never_marked():
    loader = QromLoader.from_values([0, 1, 0, 1, 1])
    oracle = compile_oracle(Eq(column="v", value=0), loader)
    assert oracle.N == 8
    assert oracle.marked().tolist() == [0, 2]


def test_oracle_restores_ancillas():
    loader = QromLoader.from_values([3, 7, 1, 6, 2, 5, 0, 4])
    oracle = compile_oracle(And(items=(Range(column="v", low=2), Range(column="v", high=6))), loader)
    rids = np.arange(oracle.N)
    final, phases = simulator.run_basis_states(oracle.circuit, rids)
    assert final.tolist() == rids.tolist()
    assert np.allclose(np.abs(phases), 1.0)


def test_phase_oracle_acts_on_a_superposition():
    loader = QromLoader.from_values([5, 1, 5, 2])
    oracle = compile_oracle(Eq(column="v", value=5), loader)
    gate = oracle.fused_gate()
    assert gate.kind == GateKind.DIAG
    uniform = StateVector.from_amplitudes(np.full(4, 0.5))
    out = simulator.apply_gate(uniform, gate)
    assert np.allclose(out.amps, [-0.5, 0.5, -0.5, 0.5])


def test_fused_gate_carries_latency_and_error(device):
    loader = QromLoader.from_values(list(range(8)))
    oracle = compile_oracle(Range(column="v", low=5), loader)
    gate = oracle.fused_gate(device)
    assert gate.duration > 0
    assert 0 < gate.error_rate < 1


def test_comparator_oracle_with_extra_filter():
    loader = QromLoader.from_values([9, 3, 12, 4, 7, 1, 15, 8])
    oracle = comparator_oracle(loader, "v", 8, extra=Range(column="v", low=4))
    assert oracle.marked().tolist() == [3, 4]


def test_true_everywhere_marks_all_rows():
    loader = QromLoader.from_values([1, 2, 3, 4])
    oracle = compile_oracle(Range(column="v", low=0), loader)
    assert oracle.marked_count() == 4


def test_resolved_exists_is_a_constant():
    loader = QromLoader.from_values([1, 2, 3, 4])
    exists = Exists(text="SELECT 1", query=None).resolve(False)
    oracle = compile_oracle(Or(items=(exists, Eq(column="v", value=2))), loader)
    assert oracle.marked().tolist() == [1]


def test_interior_wildcard_is_rejected(people_table):
    pred = PrefixLike(column="name", pattern="a%a")
    with pytest.raises(UnsupportedPredicate):
        compile_oracle(pred, people_table.loader(["name"]))


def test_constant_wider_than_register():
    loader = QromLoader.from_values([1, 2, 3], bits=2)
    with pytest.raises(WidthOverflow):
        compile_oracle(Eq(column="v", value=9), loader)


WORDS = ["ant", "apex", "bee", "bison", "cat", "crow", "deer", "dove", "eel", "elk", "fox", "frog", "gnu", "hare"]


def _random_table(rng: np.random.Generator, n_rows: int) -> Table:
    table = Table(TableDef(name="r", columns=[
        ColumnDef(name="a", type=ColumnType.UINT, bits=8),
        ColumnDef(name="b", type=ColumnType.UINT, bits=4),
        ColumnDef(name="flag", type=ColumnType.BOOL, bits=1),
        ColumnDef(name="word", type=ColumnType.TEXT),
    ]))
    table.insert([
        [int(rng.integers(256)), int(rng.integers(16)), bool(rng.integers(2)), WORDS[int(rng.integers(len(WORDS)))]]
        for _ in range(n_rows)
    ])
    return table


def _random_leaf(rng: np.random.Generator, a_values: list):
    kind = int(rng.integers(7))
    if kind == 0:
        value = a_values[int(rng.integers(len(a_values)))] if rng.random() < 0.5 else int(rng.integers(256))
        return Eq(column="a", value=value)
    if kind == 1:
        low, high = sorted(int(v) for v in rng.integers(0, 256, size=2))
        bounds = {"low": low, "high": high}
        drop = int(rng.integers(3))
        if drop < 2:
            bounds.pop("low" if drop == 0 else "high")
        return Range(column="a", low_open=bool(rng.integers(2)), high_open=bool(rng.integers(2)), **bounds)
    if kind == 2:
        return Eq(column="b", value=int(rng.integers(16)))
    if kind == 3:
        return Eq(column="word", value=(WORDS + ["zebra"])[int(rng.integers(len(WORDS) + 1))])
    if kind == 4:
        low, high = sorted(str(c) for c in rng.choice(list("abcdefghi"), size=2))
        return Range(column="word", low=low, high=high, low_open=bool(rng.integers(2)), high_open=bool(rng.integers(2)))
    if kind == 5:
        word = WORDS[int(rng.integers(len(WORDS)))]
        cut = int(rng.integers(1, len(word) + 1))
        return PrefixLike(column="word", pattern=word[:cut] + ("%" if cut < len(word) or rng.random() < 0.5 else ""))
    return Eq(column="flag", value=int(rng.integers(2)))


def _random_predicate(rng: np.random.Generator, a_values: list, depth: int = 3):
    if depth == 0 or rng.random() < 0.35:
        return _random_leaf(rng, a_values)
    kind = int(rng.integers(3))
    if kind == 2:
        return Not(item=_random_predicate(rng, a_values, depth - 1))
    items = tuple(_random_predicate(rng, a_values, depth - 1) for _ in range(int(rng.integers(2, 4))))
    return And(items=items) if kind == 0 else Or(items=items)


@pytest.mark.parametrize("n_rows", [16, 64, 256])
def test_random_predicates_mark_the_classical_rows(n_rows):
    rng = np.random.default_rng(n_rows)
    table = _random_table(rng, n_rows)
    a_values = [int(v) for v in table.column("a")]
    for _ in range(100):
        pred = _random_predicate(rng, a_values)
        oracle = compile_oracle(pred, table.loader(pred.columns()))
        expected = np.flatnonzero(evaluate_predicate(pred, table))
        assert oracle.marked().tolist() == expected.tolist(), pred.to_sql()
