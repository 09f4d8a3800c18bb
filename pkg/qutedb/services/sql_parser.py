"""
SQL Front End

Tokenizer and recursive-descent parser for the engine's SQL subset:
1. SELECT with projections or one aggregate, one or two tables (JOIN / SIMJOIN)
2. WHERE with AND/OR/NOT over comparisons, BETWEEN, LIKE and EXISTS
3. SAMPLE k, CREATE TABLE, INSERT, COPY ... FROM, CREATE [KD]INDEX, EXPLAIN [ANALYZE]

Every AST node prints back to SQL; reparsing the printed text yields an
equal tree.
"""

import logging
import re
from typing import Any, List, Literal, Optional, Union

from pydantic import BaseModel, Field

from ..errors import SqlSyntaxError, UnsupportedFeature
from .predicates import And, Eq, Exists, Not, Or, Predicate, PrefixLike, Range, sql_literal

logger = logging.getLogger(__name__)

KEYWORDS = {
    "SELECT", "FROM", "WHERE", "AND", "OR", "NOT", "BETWEEN", "LIKE", "EXISTS", "JOIN", "ON",
    "SIMJOIN", "IP", "SAMPLE", "CREATE", "TABLE", "INSERT", "INTO", "VALUES", "COPY", "INDEX",
    "KDINDEX", "EXPLAIN", "ANALYZE", "TRUE", "FALSE", "AS", "INNER",
    "SUM", "AVG", "COUNT", "MIN", "MAX",
}

# Recognized but outside the supported subset
UNSUPPORTED = {
    "GROUP", "ORDER", "HAVING", "LIMIT", "UNION", "UPDATE", "DELETE", "DROP", "ALTER", "IN",
    "LEFT", "RIGHT", "OUTER", "FULL", "CROSS", "DISTINCT", "OFFSET", "WITH", "NULL", "IS",
}

AGGREGATES = ("SUM", "AVG", "COUNT", "MIN", "MAX")
COMPARISONS = ("=", "!=", "<>", "<", "<=", ">", ">=")

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>--[^\n]*)
  | (?P<number>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)
  | (?P<string>'(?:[^']|'')*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|[=<>(),;*.\[\]\-])
""", re.VERBOSE)


class Token(BaseModel):
    kind: str  # number | string | ident | keyword | op | eof
    value: Any
    line: int
    column: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        raw = m.group()
        column = pos - line_start + 1
        if kind == "newline":
            line += 1
            line_start = m.end()
        elif kind == "number":
            value = float(raw) if any(c in raw for c in ".eE") else int(raw)
            tokens.append(Token(kind="number", value=value, line=line, column=column))
        elif kind == "string":
            tokens.append(Token(kind="string", value=raw[1:-1].replace("''", "'"), line=line, column=column))
        elif kind == "ident":
            upper = raw.upper()
            if upper in KEYWORDS or upper in UNSUPPORTED:
                tokens.append(Token(kind="keyword", value=upper, line=line, column=column))
            else:
                tokens.append(Token(kind="ident", value=raw, line=line, column=column))
        elif kind == "op":
            tokens.append(Token(kind="op", value=raw, line=line, column=column))
        pos = m.end()
    tokens.append(Token(kind="eof", value=None, line=line, column=pos - line_start + 1))
    return tokens


# AST

class Statement(BaseModel):
    def to_sql(self) -> str:
        raise NotImplementedError


class SelectItem(BaseModel):
    kind: Literal["star", "rid", "column", "aggregate"]
    column: Optional[str] = None
    function: Optional[str] = None

    def to_sql(self) -> str:
        if self.kind == "star":
            return "*"
        if self.kind == "rid":
            return "RID"
        if self.kind == "aggregate":
            return f"{self.function}({self.column or '*'})"
        return self.column


class TableRef(BaseModel):
    name: str
    alias: Optional[str] = None

    @property
    def binding(self) -> str:
        return self.alias or self.name

    def to_sql(self) -> str:
        return f"{self.name} {self.alias}" if self.alias else self.name


class JoinSpec(BaseModel):
    """Equi/non-equi join (op in COMPARISONS) or similarity join (kind 'sim')"""
    kind: Literal["inner", "sim"]
    table: TableRef
    left: str
    right: str
    op: str = "="
    threshold: Optional[float] = None

    def to_sql(self) -> str:
        if self.kind == "sim":
            return f"SIMJOIN {self.table.to_sql()} ON IP({self.left}, {self.right}) {self.op} {sql_literal(self.threshold)}"
        return f"JOIN {self.table.to_sql()} ON {self.left} {self.op} {self.right}"


class Select(Statement):
    items: List[SelectItem]
    table: TableRef
    join: Optional[JoinSpec] = None
    where: Optional[Predicate] = None
    sample: Optional[int] = None

    @property
    def aggregate(self) -> Optional[SelectItem]:
        return next((i for i in self.items if i.kind == "aggregate"), None)

    def to_sql(self) -> str:
        parts = ["SELECT " + ", ".join(i.to_sql() for i in self.items), "FROM " + self.table.to_sql()]
        if self.join:
            parts.append(self.join.to_sql())
        if self.where is not None:
            parts.append("WHERE " + self.where.to_sql())
        if self.sample is not None:
            parts.append(f"SAMPLE {self.sample}")
        return " ".join(parts)


class ColumnSpec(BaseModel):
    name: str
    type_name: str
    arg: Optional[int] = None

    def to_sql(self) -> str:
        suffix = f"({self.arg})" if self.arg is not None else ""
        return f"{self.name} {self.type_name.upper()}{suffix}"


class CreateTable(Statement):
    name: str
    columns: List[ColumnSpec]

    def to_sql(self) -> str:
        return f"CREATE TABLE {self.name} (" + ", ".join(c.to_sql() for c in self.columns) + ")"


class Insert(Statement):
    table: str
    columns: Optional[List[str]] = None
    rows: List[List[Any]] = Field(default_factory=list)

    def to_sql(self) -> str:
        cols = f" ({', '.join(self.columns)})" if self.columns else ""
        rows = ", ".join("(" + ", ".join(_value_sql(v) for v in row) + ")" for row in self.rows)
        return f"INSERT INTO {self.table}{cols} VALUES {rows}"


class CopyCsv(Statement):
    table: str
    path: str

    def to_sql(self) -> str:
        return f"COPY {self.table} FROM {sql_literal(self.path)}"


class CreateIndex(Statement):
    kind: Literal["btree", "kd"]
    table: str
    columns: List[str]

    def to_sql(self) -> str:
        keyword = "KDINDEX" if self.kind == "kd" else "INDEX"
        return f"CREATE {keyword} ON {self.table} ({', '.join(self.columns)})"


class Explain(Statement):
    statement: Select
    analyze: bool = False

    def to_sql(self) -> str:
        return ("EXPLAIN ANALYZE " if self.analyze else "EXPLAIN ") + self.statement.to_sql()


SqlAst = Union[Select, CreateTable, Insert, CopyCsv, CreateIndex, Explain]


def _value_sql(value: Any) -> str:
    if isinstance(value, list):
        return "[" + ", ".join(sql_literal(v) for v in value) + "]"
    return sql_literal(value)


# Parser

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _error(self, message: str, token: Optional[Token] = None) -> SqlSyntaxError:
        token = token or self.current
        return SqlSyntaxError(message, token.line, token.column)

    def _advance(self) -> Token:
        token = self.current
        if token.kind != "eof":
            self.pos += 1
        return token

    def _check(self, kind: str, value: Any = None) -> bool:
        token = self.current
        if token.kind == "keyword" and token.value in UNSUPPORTED:
            raise UnsupportedFeature(f"{token.value} is not supported (line {token.line}, column {token.column})")
        return token.kind == kind and (value is None or token.value == value)

    def _accept(self, kind: str, value: Any = None) -> Optional[Token]:
        if self._check(kind, value):
            return self._advance()
        return None

    def _expect(self, kind: str, value: Any = None) -> Token:
        if not self._check(kind, value):
            wanted = value if value is not None else kind
            found = self.current.value if self.current.kind != "eof" else "end of input"
            raise self._error(f"expected {wanted}, found {found!r}")
        return self._advance()

    def _ident(self) -> str:
        return self._expect("ident").value

    def _column(self) -> str:
        name = self._ident()
        if self._accept("op", "."):
            name = f"{name}.{self._ident()}"
        return name

    # Statements

    def script(self) -> List[SqlAst]:
        statements: List[SqlAst] = []
        while not self._check("eof"):
            if self._accept("op", ";"):
                continue
            statements.append(self.statement())
            if not self._check("eof"):
                self._expect("op", ";")
        return statements

    def single(self) -> SqlAst:
        stmt = self.statement()
        self._accept("op", ";")
        self._expect("eof")
        return stmt

    def statement(self) -> SqlAst:
        if self._check("keyword", "SELECT"):
            return self.select()
        if self._accept("keyword", "EXPLAIN"):
            analyze = self._accept("keyword", "ANALYZE") is not None
            if not self._check("keyword", "SELECT"):
                raise self._error("EXPLAIN expects a SELECT")
            return Explain(statement=self.select(), analyze=analyze)
        if self._accept("keyword", "CREATE"):
            if self._accept("keyword", "TABLE"):
                return self.create_table()
            if self._accept("keyword", "INDEX"):
                return self.create_index("btree")
            if self._accept("keyword", "KDINDEX"):
                return self.create_index("kd")
            raise self._error("expected TABLE, INDEX or KDINDEX after CREATE")
        if self._accept("keyword", "INSERT"):
            return self.insert()
        if self._accept("keyword", "COPY"):
            table = self._ident()
            self._expect("keyword", "FROM")
            return CopyCsv(table=table, path=self._expect("string").value)
        if self.current.kind == "ident":
            raise UnsupportedFeature(f"statement {self.current.value!r} is not supported")
        raise self._error("expected a statement")

    def select(self) -> Select:
        self._expect("keyword", "SELECT")
        items = [self.select_item()]
        while self._accept("op", ","):
            items.append(self.select_item())
        aggregates = [i for i in items if i.kind == "aggregate"]
        if aggregates and len(items) > 1:
            raise UnsupportedFeature("aggregates cannot be mixed with other select items (no GROUP BY)")
        self._expect("keyword", "FROM")
        table = self.table_ref()
        if self._check("op", ","):
            raise UnsupportedFeature("comma joins are not supported; use JOIN ... ON")
        join = None
        if self._accept("keyword", "INNER"):
            self._expect("keyword", "JOIN")
            join = self.join_tail()
        elif self._accept("keyword", "JOIN"):
            join = self.join_tail()
        elif self._accept("keyword", "SIMJOIN"):
            join = self.simjoin_tail()
        where = None
        if self._accept("keyword", "WHERE"):
            where = self.predicate()
        sample = None
        if self._accept("keyword", "SAMPLE"):
            token = self._expect("number")
            if not isinstance(token.value, int) or token.value < 1:
                raise self._error("SAMPLE expects a positive integer", token)
            sample = token.value
        return Select(items=items, table=table, join=join, where=where, sample=sample)

    def select_item(self) -> SelectItem:
        if self._accept("op", "*"):
            return SelectItem(kind="star")
        token = self.current
        if token.kind == "keyword" and token.value in AGGREGATES:
            self._advance()
            self._expect("op", "(")
            column = None
            if self._accept("op", "*"):
                if token.value != "COUNT":
                    raise self._error(f"{token.value}(*) is not valid", token)
            else:
                column = self._column()
            self._expect("op", ")")
            return SelectItem(kind="aggregate", function=token.value, column=column)
        column = self._column()
        if column.upper() == "RID":
            return SelectItem(kind="rid")
        return SelectItem(kind="column", column=column)

    def table_ref(self) -> TableRef:
        if self._check("op", "("):
            raise UnsupportedFeature("subqueries in FROM are not supported")
        name = self._ident()
        alias = None
        if self._accept("keyword", "AS"):
            alias = self._ident()
        elif self._check("ident"):
            alias = self._ident()
        return TableRef(name=name, alias=alias)

    def join_tail(self) -> JoinSpec:
        table = self.table_ref()
        self._expect("keyword", "ON")
        left = self._column()
        op_token = self.current
        if op_token.kind != "op" or op_token.value not in COMPARISONS:
            raise self._error("expected a comparison in the join condition")
        self._advance()
        right = self._column()
        if self._check("keyword", "AND") or self._check("keyword", "OR"):
            raise UnsupportedFeature("join conditions are limited to a single comparison")
        op = "!=" if op_token.value == "<>" else op_token.value
        return JoinSpec(kind="inner", table=table, left=left, op=op, right=right)

    def simjoin_tail(self) -> JoinSpec:
        table = self.table_ref()
        self._expect("keyword", "ON")
        self._expect("keyword", "IP")
        self._expect("op", "(")
        left = self._column()
        self._expect("op", ",")
        right = self._column()
        self._expect("op", ")")
        op_token = self.current
        if op_token.kind != "op" or op_token.value not in (">", ">="):
            raise self._error("similarity joins compare IP(...) with > or >=")
        self._advance()
        threshold = self.number()
        return JoinSpec(kind="sim", table=table, left=left, right=right, op=op_token.value,
                        threshold=float(threshold))

    def create_table(self) -> CreateTable:
        name = self._ident()
        self._expect("op", "(")
        columns = [self.column_spec()]
        while self._accept("op", ","):
            columns.append(self.column_spec())
        self._expect("op", ")")
        return CreateTable(name=name, columns=columns)

    def column_spec(self) -> ColumnSpec:
        name = self._ident()
        type_token = self.current
        if type_token.kind not in ("ident", "keyword"):
            raise self._error("expected a column type")
        self._advance()
        type_name = str(type_token.value).lower()
        if type_name not in ("uint", "real", "vector", "text", "bool"):
            raise UnsupportedFeature(f"column type {type_token.value} is not supported")
        arg = None
        if self._accept("op", "("):
            arg = self._expect("number").value
            if not isinstance(arg, int):
                raise self._error("type argument must be an integer")
            self._expect("op", ")")
        return ColumnSpec(name=name, type_name=type_name, arg=arg)

    def create_index(self, kind: str) -> CreateIndex:
        self._expect("keyword", "ON")
        table = self._ident()
        self._expect("op", "(")
        columns = [self._ident()]
        while self._accept("op", ","):
            columns.append(self._ident())
        self._expect("op", ")")
        if kind == "btree" and len(columns) != 1:
            raise UnsupportedFeature("B+ tree indexes cover one column; use CREATE KDINDEX")
        return CreateIndex(kind=kind, table=table, columns=columns)

    def insert(self) -> Insert:
        self._expect("keyword", "INTO")
        table = self._ident()
        columns = None
        if self._accept("op", "("):
            columns = [self._ident()]
            while self._accept("op", ","):
                columns.append(self._ident())
            self._expect("op", ")")
        self._expect("keyword", "VALUES")
        rows = [self.value_row()]
        while self._accept("op", ","):
            rows.append(self.value_row())
        return Insert(table=table, columns=columns, rows=rows)

    def value_row(self) -> List[Any]:
        self._expect("op", "(")
        values = [self.value()]
        while self._accept("op", ","):
            values.append(self.value())
        self._expect("op", ")")
        return values

    def value(self) -> Any:
        if self._accept("op", "["):
            items = [] if self._check("op", "]") else [self.number()]
            while self._accept("op", ","):
                items.append(self.number())
            self._expect("op", "]")
            return items
        return self.literal()

    # Predicates

    def number(self) -> Union[int, float]:
        negative = self._accept("op", "-") is not None
        value = self._expect("number").value
        return -value if negative else value

    def literal(self) -> Any:
        if self._check("string"):
            return self._advance().value
        if self._accept("keyword", "TRUE"):
            return True
        if self._accept("keyword", "FALSE"):
            return False
        if self._check("number") or self._check("op", "-"):
            return self.number()
        raise self._error("expected a literal")

    def _is_literal_start(self) -> bool:
        return (self._check("string") or self._check("number") or self._check("op", "-")
                or self._check("keyword", "TRUE") or self._check("keyword", "FALSE"))

    def predicate(self) -> Predicate:
        items = [self.conjunction()]
        while self._accept("keyword", "OR"):
            items.append(self.conjunction())
        return items[0] if len(items) == 1 else Or(items=tuple(items))

    def conjunction(self) -> Predicate:
        items = [self.negation()]
        while self._accept("keyword", "AND"):
            items.append(self.negation())
        items = _merge_ranges(items)
        return items[0] if len(items) == 1 else And(items=tuple(items))

    def negation(self) -> Predicate:
        if self._accept("keyword", "NOT"):
            if self._check("keyword", "EXISTS"):
                return Not(item=self.exists())
            return Not(item=self.negation())
        return self.primary()

    def exists(self) -> Exists:
        self._expect("keyword", "EXISTS")
        self._expect("op", "(")
        query = self.select()
        self._expect("op", ")")
        if query.join is not None:
            raise UnsupportedFeature("EXISTS subqueries over joins are not supported")
        return Exists(query=query, text=query.to_sql())

    def primary(self) -> Predicate:
        if self._accept("op", "("):
            if self._check("keyword", "SELECT"):
                raise UnsupportedFeature("scalar subqueries are not supported")
            inner = self.predicate()
            self._expect("op", ")")
            return inner
        if self._check("keyword", "EXISTS"):
            return self.exists()
        if self._is_literal_start():
            value = self.literal()
            op_token = self._expect("op")
            column = self._column()
            return _comparison(column, _FLIPPED.get(op_token.value, op_token.value), value, op_token)
        column = self._column()
        if self._accept("keyword", "BETWEEN"):
            low = self.literal()
            self._expect("keyword", "AND")
            high = self.literal()
            return _range(column, low, high, False, False, self.current)
        negated = self._accept("keyword", "NOT") is not None
        if self._accept("keyword", "LIKE"):
            pattern = self._expect("string").value
            pred = PrefixLike(column=column, pattern=pattern)
            return Not(item=pred) if negated else pred
        if negated:
            raise self._error("expected LIKE after NOT")
        op_token = self.current
        if op_token.kind != "op" or op_token.value not in COMPARISONS:
            raise self._error("expected a comparison operator")
        self._advance()
        if self.current.kind == "ident":
            raise UnsupportedFeature("column-to-column comparisons belong in a JOIN condition")
        return _comparison(column, op_token.value, self.literal(), op_token)


_FLIPPED = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}


def _range(column: str, low: Any, high: Any, low_open: bool, high_open: bool, token: Token) -> Predicate:
    try:
        return Range(column=column, low=low, high=high, low_open=low_open, high_open=high_open)
    except ValueError as e:
        raise SqlSyntaxError(f"invalid range on {column}: {e}", token.line, token.column) from None


def _comparison(column: str, op: str, value: Any, token: Token) -> Predicate:
    if op not in COMPARISONS:
        raise SqlSyntaxError(f"unexpected operator {op}", token.line, token.column)
    if op == "=":
        return Eq(column=column, value=value)
    if op in ("!=", "<>"):
        return Not(item=Eq(column=column, value=value))
    if op == ">":
        return _range(column, value, None, True, False, token)
    if op == ">=":
        return _range(column, value, None, False, False, token)
    if op == "<":
        return _range(column, None, value, False, True, token)
    return _range(column, None, value, False, False, token)


def _merge_ranges(items: List[Predicate]) -> List[Predicate]:
    """Fold `c > a AND c < b` (adjacent, same column) into one two-sided Range"""
    out: List[Predicate] = []
    for item in items:
        prev = out[-1] if out else None
        if (isinstance(prev, Range) and isinstance(item, Range) and prev.column == item.column
                and prev.high is None and item.low is None
                and isinstance(prev.low, str) == isinstance(item.high, str)
                and prev.low <= item.high):
            out[-1] = Range(column=prev.column, low=prev.low, high=item.high,
                            low_open=prev.low_open, high_open=item.high_open)
            continue
        out.append(item)
    return out


def parse_sql(text: str) -> SqlAst:
    """Parse exactly one statement (a trailing ';' is allowed)"""
    return _Parser(text).single()


def parse_script(text: str) -> List[SqlAst]:
    """Parse a ';'-separated sequence of statements"""
    statements = _Parser(text).script()
    logger.debug(f"[Parser] parsed {len(statements)} statements")
    return statements
