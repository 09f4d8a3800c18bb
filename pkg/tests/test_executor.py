from pathlib import Path

import numpy as np
import pytest

from qutedb.config import Settings
from qutedb.errors import SimulationError, UnknownTable
from qutedb.models import DeviceModel
from qutedb.services.executor import (
    Engine,
    Relation,
    classical_aggregate,
    classical_join,
    count_ceiling,
    count_floor,
    evaluate_rows,
    execute,
    reconcile,
    similarity,
)
from qutedb.services.grover import grover_iterations
from qutedb.services.predicates import Range
from qutedb.services.simulator import StatevectorSimulator
from qutedb.services.sql_parser import Explain, Select, parse_script
from qutedb.services.storage import ColumnDef, ColumnType, Table, TableDef

DEMO = Path(__file__).resolve().parent.parent / "data" / "demo.sql"

SETUP = """
CREATE TABLE items (id UINT(8), grp UINT(4), price UINT(8), tag TEXT, live BOOL);
INSERT INTO items VALUES
  (0, 0, 12, 'red', TRUE), (1, 1, 40, 'blue', TRUE), (2, 2, 33, 'red', FALSE), (3, 3, 7, 'green', TRUE),
  (4, 0, 51, 'blue', TRUE), (5, 1, 18, 'red', TRUE), (6, 2, 64, 'green', FALSE), (7, 3, 25, 'blue', TRUE),
  (8, 0, 9, 'red', TRUE), (9, 1, 47, 'green', TRUE), (10, 2, 30, 'blue', TRUE), (11, 3, 58, 'red', FALSE);
CREATE TABLE groups (grp UINT(4), cap UINT(8));
INSERT INTO groups VALUES (0, 20), (1, 45), (2, 60), (3, 10);
"""


def _engine(tmp_path, realization, **overrides):
    config = Settings(seed=7, noise=False, realization=realization, **overrides)
    engine = Engine(device=DeviceModel.noiseless(), config=config, data_dir=tmp_path / realization)
    engine.run_script(SETUP)
    return engine


def _exact_equal(first, second):
    assert first.columns == second.columns
    assert first.rows == second.rows


def test_similarity_and_aggregate_helpers():
    assert similarity([1, 0], [0, 2]) == 0.0
    assert similarity([1, 1], [2, 2]) == pytest.approx(1.0)
    assert similarity([0, 0], [1, 0]) == 0.0
    assert classical_aggregate("AVG", []) is None
    assert classical_aggregate("SUM", []) == 0
    assert classical_aggregate("MAX", np.array([3, 9, 2])) == 9


def test_classical_join_on_identity_columns():
    definition = TableDef(name="ids", columns=[ColumnDef(name="k", type=ColumnType.UINT, bits=3)])
    left, right = Table(definition), Table(definition)
    left.insert([[i] for i in range(8)])
    right.insert([[i] for i in range(8)])
    joined = classical_join("=", "l.k", "r.k", Relation.base("l", left), Relation.base("r", right))
    assert len(joined) == 8
    assert joined.rids.tolist() == [[i, i] for i in range(8)]
    assert classical_aggregate("SUM", [1, 2, 3, 4]) == 10


def test_classical_filter_on_an_empty_table():
    table = Table(TableDef(name="e", columns=[ColumnDef(name="v", type=ColumnType.UINT, bits=4)]))
    relation = Relation.base("e", table)
    assert len(relation.select(evaluate_rows(Range(column="v", low=1), relation))) == 0


def test_reconcile_keeps_real_satisfying_rows(people_table):
    hits = [4, 4, 6, 1, 30, -1, 11]
    assert reconcile(hits, Range(column="age", low=50), people_table) == {4, 6, 11}


def test_count_ceiling_sits_above_estimate():
    assert count_ceiling(3, 16, 6) >= 3
    assert count_ceiling(16, 16, 6) == 16
    assert count_ceiling(0, 16, 6) >= 1


@pytest.mark.slow
def test_demo_script_quantum_matches_classical(tmp_path):
    text = DEMO.read_text()
    statements = parse_script(text)
    quantum = Engine(device=DeviceModel.noiseless(), data_dir=tmp_path / "q",
                     config=Settings(seed=3, noise=False, realization="quantum")).run_script(text)
    classical = Engine(device=DeviceModel.noiseless(), data_dir=tmp_path / "c",
                       config=Settings(seed=3, noise=False, realization="classical")).run_script(text)
    assert len(quantum) == len(classical) == len(statements)
    for stmt, q, c in zip(statements, quantum, classical):
        if isinstance(stmt, Explain) or not isinstance(stmt, Select):
            continue
        assert q.columns == c.columns, stmt.to_sql()
        if q.quality.kind == "approximate" and stmt.aggregate is not None:
            assert abs(q.rows[0][0] - c.rows[0][0]) <= q.quality.bound + 1, stmt.to_sql()
        elif q.quality.kind == "sample":
            assert len(q.rows) == len(c.rows) == stmt.sample
        else:
            assert q.rows == c.rows, stmt.to_sql()


@pytest.mark.parametrize("sql", [
    "SELECT id, price FROM items WHERE price > 45",
    "SELECT id FROM items WHERE grp = 1 AND (price >= 40 OR tag = 'red')",
    "SELECT id FROM items WHERE tag LIKE 'g%'",
    "SELECT i.id, g.cap FROM items i JOIN groups g ON i.grp = g.grp WHERE i.price > 40",
    "SELECT i.id, g.grp FROM items i JOIN groups g ON i.price < g.cap",
    "SELECT MIN(price) FROM items",
    "SELECT MAX(price) FROM items WHERE live = TRUE",
    "SELECT id FROM items WHERE EXISTS (SELECT grp FROM groups WHERE cap > 50) AND price < 10",
    "SELECT id FROM items WHERE EXISTS (SELECT grp FROM groups WHERE cap > 200)",
    "SELECT id FROM items WHERE price > 250",
])
def test_quantum_rows_equal_classical_rows(tmp_path, sql):
    quantum = _engine(tmp_path, "quantum").query(sql)
    classical = _engine(tmp_path, "classical").query(sql)
    _exact_equal(quantum, classical)
    assert quantum.quality.kind == "exact"


@pytest.mark.parametrize("sql,exact", [
    ("SELECT COUNT(*) FROM items WHERE live = TRUE", 9),
    ("SELECT SUM(price) FROM items WHERE grp = 2", 127),
    ("SELECT AVG(price) FROM items", 394 / 12),
])
def test_quantum_aggregates_within_bound(tmp_path, sql, exact):
    result = _engine(tmp_path, "quantum").query(sql)
    assert result.quality.kind == "approximate"
    assert abs(result.rows[0][0] - exact) <= result.quality.bound + 1
    classical = _engine(tmp_path, "classical").query(sql)
    assert classical.rows[0][0] == pytest.approx(exact)
    assert classical.quality.kind == "exact"


def test_sample_returns_distinct_satisfying_rows(tmp_path):
    result = _engine(tmp_path, "quantum").query("SELECT id FROM items WHERE live = TRUE SAMPLE 4")
    ids = [row[0] for row in result.rows]
    assert len(ids) == len(set(ids)) == 4
    assert set(ids) <= {0, 1, 3, 4, 5, 7, 8, 9, 10}
    assert result.quality.kind == "sample"


def test_similarity_join(tmp_path):
    script = """
    CREATE TABLE a (k UINT(2), v VECTOR(2));
    INSERT INTO a VALUES (0, [1, 0]), (1, [0, 1]);
    CREATE TABLE b (k UINT(2), v VECTOR(2));
    INSERT INTO b VALUES (0, [1, 0.1]), (1, [0.1, 1]), (2, [1, 1]);
    """
    sql = "SELECT a.k, b.k FROM a SIMJOIN b ON IP(a.v, b.v) > 0.8"
    results = []
    for realization in ("quantum", "classical"):
        engine = Engine(device=DeviceModel.noiseless(), data_dir=tmp_path / realization,
                        config=Settings(seed=5, noise=False, realization=realization))
        engine.run_script(script)
        results.append(engine.query(sql))
    quantum, classical = results
    assert classical.rows == [[0, 0], [1, 1]]
    assert quantum.rows == classical.rows
    assert quantum.quality.kind == "approximate"


def test_trace_records_quantum_nodes(tmp_path):
    result = _engine(tmp_path, "quantum").query("SELECT id FROM items WHERE price > 45")
    filters = [e for e in result.trace if e.op == "Filter"]
    assert len(filters) == 1
    entry = filters[0]
    assert entry.realization == "quantum"
    assert entry.algorithm == "Grover (Search)"
    assert entry.shots > 0 and entry.rounds >= 1
    assert "realization=quantum" in entry.render()
    assert [e.op for e in result.trace][-1] == "Project"


def test_classical_policy_runs_nothing_quantum(tmp_path):
    result = _engine(tmp_path, "classical").query("SELECT id FROM items WHERE price > 45")
    assert all(e.realization == "classical" and e.shots == 0 for e in result.trace)


def test_failing_simulator_falls_back(tmp_path):
    class BrokenSimulator(StatevectorSimulator):
        def sample(self, circuit, shots=2000, noise=None):
            raise SimulationError("device offline")

        def run_statevector(self, circuit, initial=None):
            raise SimulationError("device offline")

    engine = _engine(tmp_path, "quantum")
    plan = engine.plan("SELECT id FROM items WHERE price > 45")
    result = execute(plan, engine.catalog, engine.device, seed=1, config=engine.config, sim=BrokenSimulator())
    assert result.rows == [[4], [6], [9], [11]]
    entry = next(e for e in result.trace if e.op == "Filter")
    assert entry.realization == "fallback"
    assert "Fallback" in entry.adaptations
    assert any("device offline" in note for note in entry.notes)


def _counter_engine(tmp_path, realization):
    engine = Engine(device=DeviceModel.noiseless(), data_dir=tmp_path / realization,
                    config=Settings(seed=7, noise=False, realization=realization))
    values = ", ".join(f"({i})" for i in range(16))
    engine.run_script(f"CREATE TABLE t (a UINT(4)); INSERT INTO t VALUES {values};")
    return engine


def test_high_selectivity_filter_keeps_every_row(tmp_path):
    # 12 of 16 rows match; one Grover iteration would land on no match at all
    sql = "SELECT a FROM t WHERE a >= 4"
    quantum = _counter_engine(tmp_path, "quantum").query(sql)
    classical = _counter_engine(tmp_path, "classical").query(sql)
    assert classical.rows == [[i] for i in range(4, 16)]
    assert quantum.rows == classical.rows
    entry = next(e for e in quantum.trace if e.op == "Filter")
    assert entry.realization == "quantum"


def test_incomplete_search_falls_back(tmp_path, monkeypatch):
    monkeypatch.setattr("qutedb.services.executor.filter_iterations", grover_iterations)
    result = _counter_engine(tmp_path, "quantum").query("SELECT a FROM t WHERE a >= 4")
    assert result.rows == [[i] for i in range(4, 16)]
    entry = next(e for e in result.trace if e.op == "Filter")
    assert entry.realization == "fallback"
    assert "Fallback" in entry.adaptations


def test_count_floor_sits_below_estimate():
    assert count_floor(12, 16, 6) == 11
    assert count_floor(0, 16, 6) == 0
    assert count_floor(1, 1024, 6) == 1
    assert count_floor(4, 16, 6) <= 4


def test_spent_latency_budget_stays_classical(tmp_path):
    engine = _engine(tmp_path, "quantum", latency_budget_ms=0.0)
    result = engine.query("SELECT id FROM items WHERE price > 45")
    entry = next(e for e in result.trace if e.op == "Filter")
    assert entry.realization == "classical"
    assert "latency budget spent" in entry.notes
    assert result.rows == [[4], [6], [9], [11]]


def test_index_path_for_classical_filter(tmp_path):
    engine = _engine(tmp_path, "classical")
    engine.run_script("CREATE INDEX ON items (price);")
    result = engine.query("SELECT id FROM items WHERE price BETWEEN 30 AND 34")
    assert result.rows == [[2], [10]]
    entry = next(e for e in result.trace if e.op == "Filter")
    assert any(note.startswith("index path post-filter") for note in entry.notes)


def test_explain_and_explain_analyze(tmp_path):
    engine = _engine(tmp_path, "auto")
    text = engine.explain("SELECT id FROM items WHERE price > 45")
    assert text.splitlines()[0].startswith("Project(")
    assert "  Filter(items.price > 45)" in text
    assert "[alg=Grover (Search)]" in text
    analyzed = engine.query("EXPLAIN ANALYZE SELECT COUNT(*) FROM items WHERE grp = 3")
    assert analyzed.columns == ["COUNT(*)"]
    assert "#1 Aggregate" in analyzed.message


def test_result_rendering(tmp_path):
    result = _engine(tmp_path, "classical").query("SELECT id, tag FROM items WHERE price < 10")
    table = result.to_table()
    assert table.splitlines()[0].split("|")[0].strip() == "id"
    assert table.endswith("(2 rows, exact)")
    assert result.to_csv() == "id,tag\n3,green\n8,red\n"


def test_statement_messages_and_errors(tmp_path):
    engine = Engine(device=DeviceModel.noiseless(), config=Settings(noise=False), data_dir=tmp_path)
    results = engine.run_script("CREATE TABLE t (v UINT(4)); INSERT INTO t (v) VALUES (1), (2);")
    assert [r.message for r in results] == ["CREATE TABLE t", "INSERT 2"]
    with pytest.raises(UnknownTable):
        engine.query("SELECT v FROM missing")


def test_catalog_survives_a_restart(tmp_path):
    first = _engine(tmp_path, "classical")
    reopened = Engine(device=DeviceModel.noiseless(), config=first.config, data_dir=tmp_path / "classical")
    assert reopened.query("SELECT COUNT(*) FROM items").rows == [[12]]


TAGS = ["amber", "ash", "blue", "bronze", "coral", "cyan", "gold", "green"]


def _random_script(rng: np.random.Generator, n_rows: int) -> str:
    rows = ", ".join(
        f"({i}, {int(rng.integers(64))}, {int(rng.integers(4))}, '{TAGS[int(rng.integers(len(TAGS)))]}')"
        for i in range(n_rows)
    )
    caps = ", ".join(f"({int(rng.integers(4))}, {int(rng.integers(64))})" for _ in range(6))
    return (f"CREATE TABLE r (id UINT(8), a UINT(6), g UINT(2), tag TEXT); INSERT INTO r VALUES {rows};"
            f"CREATE TABLE s (g UINT(2), cap UINT(6)); INSERT INTO s VALUES {caps};")


def _random_query(rng: np.random.Generator) -> str:
    c, d = sorted(int(v) for v in rng.integers(0, 64, size=2))
    kind = int(rng.integers(8))
    if kind == 0:
        # mostly high selectivity
        return f"SELECT id FROM r WHERE a >= {int(rng.integers(0, 12))}"
    if kind == 1:
        return f"SELECT id, a FROM r WHERE a BETWEEN {c} AND {d}"
    if kind == 2:
        return f"SELECT id FROM r WHERE g = {int(rng.integers(4))} OR a < {c}"
    if kind == 3:
        return f"SELECT id FROM r WHERE tag LIKE '{TAGS[int(rng.integers(len(TAGS)))][0]}%' AND NOT (a > {d})"
    if kind == 4:
        return f"SELECT x.id, y.cap FROM r x JOIN s y ON x.g = y.g WHERE x.a > {c}"
    if kind == 5:
        return f"SELECT MIN(a) FROM r WHERE a > {c}"
    if kind == 6:
        return "SELECT MAX(a) FROM r"
    return f"SELECT id FROM r WHERE g <> {int(rng.integers(4))}"


def _random_engines(tmp_path, name: str, script: str, device: DeviceModel, noise: bool):
    engines = []
    for realization in ("quantum", "classical"):
        engine = Engine(device=device, data_dir=tmp_path / name / realization,
                        config=Settings(seed=11, noise=noise, realization=realization))
        engine.run_script(script)
        engines.append(engine)
    return engines


def _check_random_queries(tmp_path, name: str, device: DeviceModel, noise: bool, seed: int, n_queries: int):
    rng = np.random.default_rng(seed)
    script = _random_script(rng, int(rng.integers(16, 65)))
    quantum, classical = _random_engines(tmp_path, name, script, device, noise)
    for _ in range(n_queries):
        sql = _random_query(rng)
        q, c = quantum.query(sql), classical.query(sql)
        assert q.columns == c.columns, sql
        assert q.rows == c.rows, sql


def test_random_queries_match_classical(tmp_path):
    _check_random_queries(tmp_path, "quick", DeviceModel.noiseless(), False, seed=21, n_queries=6)


@pytest.mark.slow
@pytest.mark.parametrize("noisy", [False, True], ids=["noiseless", "noisy"])
def test_random_queries_match_classical_on_both_devices(tmp_path, noisy):
    device = DeviceModel() if noisy else DeviceModel.noiseless()
    for batch in range(5):
        _check_random_queries(tmp_path, f"b{batch}", device, noisy, seed=100 + batch, n_queries=10)
