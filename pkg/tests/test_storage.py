import numpy as np
import pytest

from qutedb.errors import (
    CapacityExceeded,
    CsvParseError,
    DuplicateTable,
    InfeasibleSelectivity,
    SchemaMismatch,
    StorageError,
    UnknownTable,
    UnsupportedFeature,
)
from qutedb.models import SelectivitySpec
from qutedb.services.predicates import And, Eq, Or, Range
from qutedb.services.storage import (
    Catalog,
    ColumnType,
    IndexDef,
    Table,
    TableDef,
    column_def,
    estimate_selectivity,
    evaluate_predicate,
    generate_synthetic,
)


def _items_def(name="items"):
    return TableDef(name=name, columns=[
        column_def("id", "uint", 8),
        column_def("label", "text"),
        column_def("score", "real"),
        column_def("ok", "bool"),
        column_def("emb", "vector", 2),
    ])


def test_column_definitions():
    assert column_def("v", "UINT").bits == 16
    assert column_def("v", "uint", 4).render_type() == "UINT(4)"
    assert column_def("e", "vector", 3).render_type() == "VECTOR(3)"
    assert column_def("t", "text").type == ColumnType.TEXT
    with pytest.raises(SchemaMismatch):
        column_def("v", "uint", 40)
    with pytest.raises(SchemaMismatch):
        column_def("e", "vector", 0)
    with pytest.raises(UnsupportedFeature):
        column_def("d", "date")


def test_insert_and_read_back():
    table = Table(_items_def())
    table.insert([[1, "a", 0.5, True, [1.0, 0.0]], {"id": 2, "label": "b", "score": 2, "ok": "f", "emb": (0, 1)}])
    assert table.n_rows == 2
    assert table.row(1) == [2, "b", 2.0, False, [0.0, 1.0]]
    assert table.value("label", 0) == "a"
    assert table.definition.column("id").stats.max == 2


@pytest.mark.parametrize("row", [
    [256, "a", 0.5, True, [1.0, 0.0]],
    [-1, "a", 0.5, True, [1.0, 0.0]],
    ["1", "a", 0.5, True, [1.0, 0.0]],
    [1, 7, 0.5, True, [1.0, 0.0]],
    [1, "a", 0.5, "maybe", [1.0, 0.0]],
    [1, "a", 0.5, True, [1.0]],
    [1, "a", None, True, [1.0, 0.0]],
    [1, "a", 0.5, True],
])
def test_insert_rejects_bad_rows(row):
    table = Table(_items_def())
    with pytest.raises(SchemaMismatch):
        table.insert([row])
    assert table.n_rows == 0


def test_catalog_errors():
    catalog = Catalog()
    catalog.create_table(_items_def())
    with pytest.raises(DuplicateTable):
        catalog.create_table(_items_def())
    with pytest.raises(SchemaMismatch):
        catalog.create_table(TableDef(name="dup", columns=[column_def("a", "text"), column_def("a", "text")]))
    with pytest.raises(UnknownTable):
        catalog.table("missing")


def test_catalog_persists_columns(tmp_path):
    catalog = Catalog(tmp_path)
    catalog.create_table(_items_def())
    catalog.insert_rows("items", [[3, "z", 1.5, True, [0.6, 0.8]], [4, "y", -2.0, False, [1.0, 0.0]]])
    catalog.add_index("items", IndexDef(kind="btree", columns=["id"]))
    assert (tmp_path / "catalog.json").exists()
    assert (tmp_path / "items.id.col").stat().st_size == 2 * 4

    reopened = Catalog(tmp_path)
    table = reopened.table("items")
    assert table.n_rows == 2
    assert [row for _, row in table.scan()] == [[3, "z", 1.5, True, [0.6, 0.8]], [4, "y", -2.0, False, [1.0, 0.0]]]
    assert reopened.definition("items").indexes == [IndexDef(kind="btree", columns=["id"])]


def test_unreadable_catalog(tmp_path):
    (tmp_path / "catalog.json").write_text("{not json")
    with pytest.raises(StorageError):
        Catalog(tmp_path)


def test_csv_ingest(tmp_path):
    catalog = Catalog()
    catalog.create_table(_items_def())
    source = tmp_path / "items.csv"
    source.write_text("label,id,score,ok,emb\nfirst,1,0.25,true,0.6;0.8\n\nsecond,2,3,0,1;0\n")
    assert catalog.ingest_csv(source, "items") == 2
    assert catalog.table("items").row(0) == [1, "first", 0.25, True, [0.6, 0.8]]


def test_csv_errors_name_the_line(tmp_path):
    catalog = Catalog()
    catalog.create_table(_items_def())
    bad = tmp_path / "bad.csv"
    bad.write_text("id,label,score,ok,emb\n1,a,0.5,true,1;0\nx,b,0.5,true,1;0\n")
    with pytest.raises(CsvParseError) as info:
        catalog.ingest_csv(bad, "items")
    assert info.value.line == 3
    assert catalog.table("items").n_rows == 0

    short = tmp_path / "short.csv"
    short.write_text("id,label,score,ok,emb\n1,a\n")
    with pytest.raises(CsvParseError):
        catalog.ingest_csv(short, "items")

    header = tmp_path / "header.csv"
    header.write_text("id,name\n1,a\n")
    with pytest.raises(SchemaMismatch):
        catalog.ingest_csv(header, "items")

    with pytest.raises(StorageError):
        catalog.ingest_csv(tmp_path / "absent.csv", "items")


def test_predicate_evaluation(people_table):
    pred = Or(items=(Eq(column="name", value="bob"), And(items=(Range(column="age", low=50),
                                                                 Eq(column="active", value=1)))))
    mask = evaluate_predicate(pred, people_table)
    assert np.flatnonzero(mask).tolist() == [1, 4, 11]
    assert evaluate_predicate(None, people_table).all()
    assert evaluate_predicate(Eq(column="age", value=35), people_table, rids=[0, 1]).tolist() == [False, True]


def test_selectivity_estimates(people_table):
    definition = people_table.definition
    assert estimate_selectivity(Eq(column="dept", value=1), definition) == pytest.approx(0.25)
    full = estimate_selectivity(Range(column="age", low=19, high=61), definition)
    assert full == pytest.approx(1.0)
    assert estimate_selectivity(Range(column="age", low=70), definition) == 0.0
    both = And(items=(Eq(column="dept", value=1), Eq(column="dept", value=2)))
    assert estimate_selectivity(both, definition) == pytest.approx(1 / 16)


def test_loader_caps_quantum_width():
    table = Table(TableDef(name="wide", columns=[column_def("v", "uint", 20)]))
    table.insert([[1], [2]])
    with pytest.raises(CapacityExceeded):
        table.loader(["v"])


def test_loader_pads_to_power_of_two(people_table):
    loader = people_table.loader(["age", "name"])
    assert loader.n == 4
    assert loader.n_real == 16
    assert loader.columns["name"].dictionary[0] == "ada"


def test_synthetic_selectivity_within_tolerance():
    data = generate_synthetic(1024, SelectivitySpec(targets=[0.02, 0.01]), seed=5)
    assert data.table.n_rows == 1024
    for pred, measured, target in zip(data.predicates, data.selectivities, [0.02, 0.01]):
        hits = int(evaluate_predicate(pred, data.table).sum())
        assert hits / 1024 == pytest.approx(measured)
        assert abs(measured - target) <= 0.1 * target


def test_synthetic_is_deterministic_per_seed():
    first = generate_synthetic(256, SelectivitySpec(targets=[0.02]), seed=3)
    second = generate_synthetic(256, SelectivitySpec(targets=[0.02]), seed=3)
    assert np.array_equal(first.table.column("d0"), second.table.column("d0"))
    assert first.predicates == second.predicates


@pytest.mark.parametrize("N,targets", [(1024, [0.05]), (16, [0.02]), (1024, [0.0])])
def test_infeasible_targets(N, targets):
    with pytest.raises(InfeasibleSelectivity):
        generate_synthetic(N, SelectivitySpec(targets=targets))


def test_synthetic_needs_power_of_two():
    with pytest.raises(StorageError):
        generate_synthetic(1000)
