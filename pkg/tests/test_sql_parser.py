import pytest

from qutedb.errors import SqlSyntaxError, UnsupportedFeature
from qutedb.services.predicates import And, Eq, Exists, Not, Or, PrefixLike, Range
from qutedb.services.sql_parser import (
    CopyCsv,
    CreateIndex,
    CreateTable,
    Explain,
    Insert,
    Select,
    parse_script,
    parse_sql,
    tokenize,
)


def test_tokenize_keywords_are_case_insensitive():
    kinds = [(t.kind, t.value) for t in tokenize("select Age from people")]
    assert kinds[0] == ("keyword", "SELECT")
    assert kinds[1] == ("ident", "Age")
    assert kinds[-1][0] == "eof"


def test_simple_select():
    stmt = parse_sql("SELECT id, age FROM people WHERE age >= 30;")
    assert isinstance(stmt, Select)
    assert [i.column for i in stmt.items] == ["id", "age"]
    assert stmt.where == Range(column="age", low=30)


def test_adjacent_bounds_merge_into_one_range():
    stmt = parse_sql("SELECT * FROM people WHERE age > 20 AND age < 40")
    assert stmt.where == Range(column="age", low=20, high=40, low_open=True, high_open=True)


def test_between_and_flipped_literal():
    stmt = parse_sql("SELECT * FROM t WHERE v BETWEEN 3 AND 9 AND 5 < w")
    assert stmt.where == And(items=(Range(column="v", low=3, high=9), Range(column="w", low=5, low_open=True)))


def test_boolean_structure_and_not_equal():
    stmt = parse_sql("SELECT * FROM t WHERE NOT (a = 1 OR b <> 2) AND name LIKE 'ab%'")
    expected = And(items=(
        Not(item=Or(items=(Eq(column="a", value=1), Not(item=Eq(column="b", value=2))))),
        PrefixLike(column="name", pattern="ab%"),
    ))
    assert stmt.where == expected


def test_join_and_aliases():
    stmt = parse_sql("SELECT e.id, d.site FROM employees e JOIN depts AS d ON e.dept = d.dept")
    assert stmt.table.binding == "e"
    assert stmt.join.kind == "inner"
    assert stmt.join.table.binding == "d"
    assert (stmt.join.left, stmt.join.op, stmt.join.right) == ("e.dept", "=", "d.dept")


def test_similarity_join():
    stmt = parse_sql("SELECT * FROM q SIMJOIN docs ON IP(q.emb, docs.emb) >= 0.8")
    assert stmt.join.kind == "sim"
    assert stmt.join.threshold == pytest.approx(0.8)
    assert stmt.join.op == ">="


def test_aggregate_and_sample():
    stmt = parse_sql("SELECT COUNT(*) FROM t WHERE v < 4")
    assert stmt.aggregate.function == "COUNT"
    assert stmt.aggregate.column is None
    sampled = parse_sql("SELECT id FROM t SAMPLE 3")
    assert sampled.sample == 3


def test_exists_subquery():
    stmt = parse_sql("SELECT id FROM t WHERE EXISTS (SELECT v FROM u WHERE v = 2)")
    assert isinstance(stmt.where, Exists)
    assert stmt.where.text == "SELECT v FROM u WHERE v = 2"
    assert stmt.where.resolved is None


def test_ddl_and_dml():
    create, insert, index, kd, copy = parse_script("""
        CREATE TABLE t (id UINT(8), name TEXT, emb VECTOR(3), ok BOOL, score REAL);
        INSERT INTO t (id, name) VALUES (1, 'it''s'), (2, 'b');
        CREATE INDEX ON t (id);
        CREATE KDINDEX ON t (id, score);
        COPY t FROM 'rows.csv';
    """)
    assert isinstance(create, CreateTable)
    assert [(c.name, c.type_name, c.arg) for c in create.columns][0] == ("id", "uint", 8)
    assert isinstance(insert, Insert)
    assert insert.rows == [[1, "it's"], [2, "b"]]
    assert isinstance(index, CreateIndex) and index.kind == "btree"
    assert isinstance(kd, CreateIndex) and kd.columns == ["id", "score"]
    assert isinstance(copy, CopyCsv) and copy.path == "rows.csv"


def test_vector_literals():
    stmt = parse_sql("INSERT INTO docs VALUES (0, [0.5, -1, 2e-1])")
    assert stmt.rows == [[0, [0.5, -1, 0.2]]]


def test_explain_analyze():
    stmt = parse_sql("EXPLAIN ANALYZE SELECT * FROM t")
    assert isinstance(stmt, Explain)
    assert stmt.analyze


def test_statement_text_round_trip():
    text = "SELECT id FROM t WHERE v BETWEEN 1 AND 5 SAMPLE 2"
    assert parse_sql(text).to_sql() == text


def test_syntax_error_reports_position():
    with pytest.raises(SqlSyntaxError) as info:
        parse_sql("SELECT id\nFROM WHERE")
    assert info.value.line == 2
    assert info.value.column == 6


@pytest.mark.parametrize("sql", [
    "SELECT id FROM t ORDER BY id",
    "SELECT id FROM t GROUP BY id",
    "SELECT id FROM a, b",
    "SELECT COUNT(*), id FROM t",
    "SELECT * FROM a JOIN b ON a.x = b.x AND a.y = b.y",
    "SELECT * FROM t WHERE a = b",
    "DELETE FROM t",
])
def test_unsupported_features(sql):
    with pytest.raises(UnsupportedFeature):
        parse_sql(sql)


def test_empty_range_is_a_syntax_error():
    with pytest.raises(SqlSyntaxError):
        parse_sql("SELECT * FROM t WHERE v BETWEEN 9 AND 3")
