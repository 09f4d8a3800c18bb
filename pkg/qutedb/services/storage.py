"""
Columnar Storage

In-memory column store with optional file persistence:
1. Catalog of table definitions with exact per-column statistics
2. One little-endian binary file per column plus catalog.json
3. CSV ingestion, synthetic data generation and classical predicate evaluation
4. Basis/control encodings and QROM loaders for the quantum path
"""

import csv
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..errors import (
    CapacityExceeded,
    CsvParseError,
    DuplicateTable,
    InfeasibleSelectivity,
    SchemaMismatch,
    StorageError,
    TypeMismatch,
    UnknownColumn,
    UnknownTable,
    UnsupportedFeature,
    UnsupportedPredicate,
    WidthOverflow,
)
from ..models import SelectivitySpec
from .oracles import ColumnEncoding, QromLoader
from .predicates import And, Eq, Exists, Not, Or, Predicate, PrefixLike, Range, RidBelow

logger = logging.getLogger(__name__)

QUANTUM_MAX_BITS = 16
MAX_UINT_BITS = 32
SELECTIVITY_CAP = 0.02
CATALOG_FILE = "catalog.json"


class ColumnType(str, Enum):
    UINT = "uint"
    REAL = "real"
    VECTOR = "vector"
    TEXT = "text"
    BOOL = "bool"


class ColumnStats(BaseModel):
    min: Optional[Any] = None
    max: Optional[Any] = None
    distinct: int = 0


class ColumnDef(BaseModel):
    name: str
    type: ColumnType
    bits: Optional[int] = None
    dim: Optional[int] = None
    stats: ColumnStats = Field(default_factory=ColumnStats)

    def encoded_bits(self, dictionary_size: int = 0) -> Optional[int]:
        if self.type in (ColumnType.UINT, ColumnType.BOOL):
            return self.bits
        if self.type == ColumnType.TEXT:
            return max(1, math.ceil(math.log2(max(2, dictionary_size))))
        return None

    @property
    def quantum_eligible(self) -> bool:
        bits = self.encoded_bits(self.stats.distinct)
        return bits is not None and bits <= QUANTUM_MAX_BITS

    def render_type(self) -> str:
        if self.type == ColumnType.UINT:
            return f"UINT({self.bits})"
        if self.type == ColumnType.VECTOR:
            return f"VECTOR({self.dim})"
        return self.type.value.upper()


class IndexDef(BaseModel):
    kind: str  # "btree" | "kd"
    columns: List[str]


class TableDef(BaseModel):
    name: str
    columns: List[ColumnDef]
    row_count: int = 0
    indexes: List[IndexDef] = Field(default_factory=list)

    def column(self, name: str) -> ColumnDef:
        short = name.split(".", 1)[1] if "." in name else name
        for col in self.columns:
            if col.name == short:
                return col
        raise UnknownColumn(f"column {name} not in table {self.name}")

    def has_column(self, name: str) -> bool:
        short = name.split(".", 1)[1] if "." in name else name
        return any(c.name == short for c in self.columns)

    @property
    def column_names(self) -> List[str]:
        return [c.name for c in self.columns]


def column_def(name: str, type_name: str, arg: Optional[int] = None) -> ColumnDef:
    """Build a column definition from a SQL type name"""
    kind = type_name.lower()
    if kind == "uint":
        bits = arg if arg is not None else 16
        if not 1 <= bits <= MAX_UINT_BITS:
            raise SchemaMismatch(f"UINT width {bits} outside 1..{MAX_UINT_BITS}")
        return ColumnDef(name=name, type=ColumnType.UINT, bits=bits)
    if kind == "bool":
        return ColumnDef(name=name, type=ColumnType.BOOL, bits=1)
    if kind == "real":
        return ColumnDef(name=name, type=ColumnType.REAL)
    if kind == "text":
        return ColumnDef(name=name, type=ColumnType.TEXT)
    if kind == "vector":
        if not arg or arg < 1:
            raise SchemaMismatch("VECTOR needs a positive dimension")
        return ColumnDef(name=name, type=ColumnType.VECTOR, dim=arg)
    raise UnsupportedFeature(f"column type {type_name}")


def _empty(col: ColumnDef) -> np.ndarray:
    if col.type in (ColumnType.UINT, ColumnType.BOOL):
        return np.zeros(0, dtype=np.int64)
    if col.type == ColumnType.REAL:
        return np.zeros(0, dtype=np.float64)
    if col.type == ColumnType.VECTOR:
        return np.zeros((0, col.dim), dtype=np.float64)
    return np.zeros(0, dtype=object)


def _coerce(col: ColumnDef, value: Any) -> Any:
    """Convert one cell to the column's storage value"""
    if value is None:
        raise SchemaMismatch(f"column {col.name} does not accept NULL")
    if col.type == ColumnType.UINT:
        if isinstance(value, bool) or isinstance(value, str):
            raise SchemaMismatch(f"column {col.name} expects an unsigned integer, got {value!r}")
        if float(value) != int(value):
            raise SchemaMismatch(f"column {col.name} expects an integer, got {value!r}")
        v = int(value)
        if v < 0 or v >= 1 << col.bits:
            raise SchemaMismatch(f"value {v} does not fit UINT({col.bits}) column {col.name}")
        return v
    if col.type == ColumnType.BOOL:
        if isinstance(value, str):
            lowered = value.strip().lower()
            if lowered in ("true", "t", "1"):
                return 1
            if lowered in ("false", "f", "0"):
                return 0
            raise SchemaMismatch(f"column {col.name} expects a boolean, got {value!r}")
        if value not in (0, 1, True, False):
            raise SchemaMismatch(f"column {col.name} expects a boolean, got {value!r}")
        return int(value)
    if col.type == ColumnType.REAL:
        if isinstance(value, (str, bool)):
            raise SchemaMismatch(f"column {col.name} expects a number, got {value!r}")
        return float(value)
    if col.type == ColumnType.VECTOR:
        if not isinstance(value, (list, tuple, np.ndarray)) or len(value) != col.dim:
            raise SchemaMismatch(f"column {col.name} expects a vector of dimension {col.dim}")
        return [float(v) for v in value]
    if not isinstance(value, str):
        raise SchemaMismatch(f"column {col.name} expects text, got {value!r}")
    return value


class Table:
    """Column arrays of one table, indexed by rid"""

    def __init__(self, definition: TableDef, data: Optional[Dict[str, np.ndarray]] = None):
        self.definition = definition
        self.data: Dict[str, np.ndarray] = data or {c.name: _empty(c) for c in definition.columns}
        self._codes: Dict[str, Tuple[np.ndarray, List[str]]] = {}
        self.refresh_stats()

    @property
    def name(self) -> str:
        return self.definition.name

    @property
    def n_rows(self) -> int:
        return self.definition.row_count

    def column(self, name: str) -> np.ndarray:
        return self.data[self.definition.column(name).name]

    def insert(self, rows: Sequence[Any]) -> int:
        """Append rows (sequences in column order or dicts by name)"""
        columns = self.definition.columns
        staged: Dict[str, List[Any]] = {c.name: [] for c in columns}
        for row in rows:
            if isinstance(row, dict):
                missing = set(self.definition.column_names) - set(row)
                extra = set(row) - set(self.definition.column_names)
                if missing or extra:
                    raise SchemaMismatch(f"row keys do not match {self.name}: missing {sorted(missing)}, extra {sorted(extra)}")
                values = [row[c.name] for c in columns]
            else:
                values = list(row)
                if len(values) != len(columns):
                    raise SchemaMismatch(f"{self.name} has {len(columns)} columns, row has {len(values)}")
            for col, value in zip(columns, values):
                staged[col.name].append(_coerce(col, value))

        for col in columns:
            new = staged[col.name]
            if not new:
                continue
            if col.type == ColumnType.TEXT:
                added = np.array(new, dtype=object)
            elif col.type == ColumnType.VECTOR:
                added = np.asarray(new, dtype=np.float64).reshape(-1, col.dim)
            else:
                added = np.asarray(new, dtype=self.data[col.name].dtype)
            self.data[col.name] = np.concatenate([self.data[col.name], added])
        self.definition.row_count += len(rows)
        self._codes.clear()
        self.refresh_stats()
        return len(rows)

    def refresh_stats(self) -> None:
        for col in self.definition.columns:
            values = self.data[col.name]
            if len(values) == 0 or col.type == ColumnType.VECTOR:
                col.stats = ColumnStats(distinct=len(values) if col.type == ColumnType.VECTOR else 0)
                continue
            if col.type == ColumnType.TEXT:
                distinct = sorted(set(values.tolist()))
                col.stats = ColumnStats(min=distinct[0], max=distinct[-1], distinct=len(distinct))
            else:
                lo, hi = values.min(), values.max()
                cast = int if col.type != ColumnType.REAL else float
                col.stats = ColumnStats(min=cast(lo), max=cast(hi), distinct=int(len(np.unique(values))))

    def scan(self) -> Iterator[Tuple[int, List[Any]]]:
        """Rows in rid order"""
        for rid in range(self.n_rows):
            yield rid, self.row(rid)

    def row(self, rid: int) -> List[Any]:
        out = []
        for col in self.definition.columns:
            value = self.data[col.name][rid]
            if col.type == ColumnType.VECTOR:
                out.append([float(v) for v in value])
            elif col.type == ColumnType.REAL:
                out.append(float(value))
            elif col.type == ColumnType.BOOL:
                out.append(bool(value))
            elif col.type == ColumnType.UINT:
                out.append(int(value))
            else:
                out.append(value)
        return out

    def value(self, column: str, rid: int) -> Any:
        col = self.definition.column(column)
        return self.row(rid)[self.definition.columns.index(col)]

    # Encodings

    def text_codes(self, column: str) -> Tuple[np.ndarray, List[str]]:
        """Sorted dictionary and per-row codes of a text column"""
        name = self.definition.column(column).name
        if name not in self._codes:
            values = self.data[name]
            dictionary = sorted(set(values.tolist()))
            lookup = {s: i for i, s in enumerate(dictionary)}
            codes = np.array([lookup[s] for s in values.tolist()], dtype=np.int64)
            self._codes[name] = (codes, dictionary)
        return self._codes[name]

    def rank_codes(self, column: str) -> Tuple[np.ndarray, np.ndarray]:
        """Dense ranks of a column's values (order-preserving unsigned codes)"""
        col = self.definition.column(column)
        if col.type == ColumnType.TEXT:
            codes, dictionary = self.text_codes(column)
            return codes, np.array(dictionary, dtype=object)
        if col.type == ColumnType.VECTOR:
            raise TypeMismatch(f"vector column {column} has no order")
        distinct, codes = np.unique(self.data[col.name], return_inverse=True)
        return codes.astype(np.int64), distinct

    def encoding(self, column: str, ranked: bool = False) -> ColumnEncoding:
        col = self.definition.column(column)
        if ranked and col.type in (ColumnType.REAL, ColumnType.UINT):
            codes, distinct = self.rank_codes(column)
            bits = max(1, math.ceil(math.log2(max(2, len(distinct)))))
            return ColumnEncoding(name=column, bits=bits, values=codes)
        if col.type == ColumnType.TEXT:
            codes, dictionary = self.text_codes(column)
            bits = col.encoded_bits(len(dictionary))
            return ColumnEncoding(name=column, bits=bits, values=codes, dictionary=dictionary)
        if col.type in (ColumnType.UINT, ColumnType.BOOL):
            return ColumnEncoding(name=column, bits=col.bits, values=self.data[col.name].astype(np.int64))
        raise UnsupportedPredicate(f"{col.render_type()} column {column} has no basis encoding")

    def loader(self, columns: Iterable[str], ranked: Sequence[str] = ()) -> QromLoader:
        """QROM tables for the given columns over a padded rid register"""
        n = max(1, math.ceil(math.log2(max(2, self.n_rows))))
        encodings: Dict[str, ColumnEncoding] = {}
        for name in columns:
            enc = self.encoding(name, ranked=name in ranked)
            if enc.bits > QUANTUM_MAX_BITS:
                raise CapacityExceeded(f"column {name} needs {enc.bits} bits; quantum columns are capped at {QUANTUM_MAX_BITS}")
            encodings[name] = enc
        return QromLoader(n=n, n_real=self.n_rows, columns=encodings)


def basis_encode(rid: int, n: int) -> int:
    """Little-endian basis index of a rid (identity mapping)"""
    if rid < 0 or rid >= 1 << n:
        raise WidthOverflow(f"rid {rid} does not fit {n} qubits")
    return rid


def control_flags(row: Dict[str, Any], definition: TableDef) -> Dict[str, int]:
    """Polarity bit per boolean column: true -> positive control"""
    flags = {}
    for col in definition.columns:
        if col.type == ColumnType.BOOL and col.name in row:
            flags[col.name] = 1 if row[col.name] else 0
    return flags


# Classical predicate evaluation

def evaluate_predicate(pred: Optional[Predicate], table: Table, rids: Optional[np.ndarray] = None) -> np.ndarray:
    """Boolean mask of pred over the given rids (all rows by default)"""
    rids = np.arange(table.n_rows) if rids is None else np.asarray(rids, dtype=np.int64)
    if pred is None:
        return np.ones(len(rids), dtype=bool)
    return _evaluate(pred, table, rids)


def _column_slice(table: Table, name: str, rids: np.ndarray) -> Tuple[ColumnDef, np.ndarray]:
    col = table.definition.column(name)
    if col.type == ColumnType.VECTOR:
        raise TypeMismatch(f"vector column {name} cannot appear in a predicate")
    return col, table.data[col.name][rids]


def _evaluate(pred: Predicate, table: Table, rids: np.ndarray) -> np.ndarray:
    if isinstance(pred, And):
        mask = np.ones(len(rids), dtype=bool)
        for item in pred.items:
            mask &= _evaluate(item, table, rids)
        return mask
    if isinstance(pred, Or):
        mask = np.zeros(len(rids), dtype=bool)
        for item in pred.items:
            mask |= _evaluate(item, table, rids)
        return mask
    if isinstance(pred, Not):
        return ~_evaluate(pred.item, table, rids)
    if isinstance(pred, RidBelow):
        return rids < pred.limit
    if isinstance(pred, Exists):
        if pred.resolved is None:
            raise UnsupportedFeature("EXISTS evaluated before its subquery ran")
        return np.full(len(rids), pred.resolved, dtype=bool)
    if isinstance(pred, Eq):
        col, values = _column_slice(table, pred.column, rids)
        if col.type == ColumnType.TEXT:
            return np.array([v == pred.value for v in values.tolist()], dtype=bool)
        if isinstance(pred.value, str):
            return np.zeros(len(rids), dtype=bool)
        return values == pred.value
    if isinstance(pred, Range):
        col, values = _column_slice(table, pred.column, rids)
        if col.type == ColumnType.TEXT:
            return np.array([pred.contains(v) for v in values.tolist()], dtype=bool)
        mask = np.ones(len(rids), dtype=bool)
        if pred.low is not None:
            mask &= values > pred.low if pred.low_open else values >= pred.low
        if pred.high is not None:
            mask &= values < pred.high if pred.high_open else values <= pred.high
        return mask
    if isinstance(pred, PrefixLike):
        col, values = _column_slice(table, pred.column, rids)
        if col.type != ColumnType.TEXT:
            raise TypeMismatch(f"LIKE on non-text column {pred.column}")
        pattern = pred.regex()
        return np.array([pattern.fullmatch(v) is not None for v in values.tolist()], dtype=bool)
    raise UnsupportedFeature(f"cannot evaluate {type(pred).__name__}")


def estimate_selectivity(pred: Optional[Predicate], definition: TableDef) -> float:
    """Selectivity from min/max/distinct statistics (uniformity assumption)"""
    if pred is None:
        return 1.0
    if isinstance(pred, And):
        out = 1.0
        for item in pred.items:
            out *= estimate_selectivity(item, definition)
        return out
    if isinstance(pred, Or):
        miss = 1.0
        for item in pred.items:
            miss *= 1.0 - estimate_selectivity(item, definition)
        return 1.0 - miss
    if isinstance(pred, Not):
        return 1.0 - estimate_selectivity(pred.item, definition)
    if isinstance(pred, RidBelow):
        return min(1.0, pred.limit / max(1, definition.row_count))
    if isinstance(pred, Exists):
        return 1.0 if pred.resolved in (None, True) else 0.0
    if not definition.has_column(pred.column):
        return 0.5
    stats = definition.column(pred.column).stats
    if stats.distinct == 0:
        return 0.0
    if isinstance(pred, Eq):
        return 1.0 / stats.distinct
    if isinstance(pred, PrefixLike):
        return min(1.0, 10.0 / stats.distinct)
    if isinstance(pred, Range):
        if isinstance(stats.min, str):
            return 1.0 / 3.0
        span = float(stats.max) - float(stats.min)
        lo = float(stats.min) if pred.low is None else max(float(stats.min), float(pred.low))
        hi = float(stats.max) if pred.high is None else min(float(stats.max), float(pred.high))
        if hi < lo:
            return 0.0
        if span <= 0:
            return 1.0
        return min(1.0, max(1.0 / stats.distinct, (hi - lo) / span))
    return 0.5


# Catalog

class Catalog:
    """Tables by name, persisted under `path` when one is given"""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else None
        self.tables: Dict[str, Table] = {}
        if self.path and (self.path / CATALOG_FILE).exists():
            self.load()

    def create_table(self, definition: TableDef) -> TableDef:
        if definition.name in self.tables:
            raise DuplicateTable(f"table {definition.name} already exists")
        names = definition.column_names
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate column names in {definition.name}")
        definition = definition.model_copy(deep=True, update={"row_count": 0})
        self.tables[definition.name] = Table(definition)
        logger.info(f"[Storage] created table {definition.name} ({len(names)} columns)")
        self.save()
        return definition

    def add_table(self, table: Table) -> Table:
        if table.name in self.tables:
            raise DuplicateTable(f"table {table.name} already exists")
        self.tables[table.name] = table
        self.save()
        return table

    def table(self, name: str) -> Table:
        try:
            return self.tables[name]
        except KeyError:
            raise UnknownTable(f"table {name} does not exist") from None

    def definition(self, name: str) -> TableDef:
        return self.table(name).definition

    def insert_rows(self, name: str, rows: Sequence[Any]) -> int:
        count = self.table(name).insert(rows)
        self.save()
        return count

    def scan(self, name: str) -> Iterator[Tuple[int, List[Any]]]:
        return self.table(name).scan()

    def add_index(self, name: str, index: IndexDef) -> None:
        definition = self.definition(name)
        for column in index.columns:
            definition.column(column)
        if index not in definition.indexes:
            definition.indexes.append(index)
        self.save()

    def ingest_csv(self, path: Path, name: str) -> int:
        """Append the rows of a headed CSV file; vectors are ';'-separated reals"""
        table = self.table(name)
        columns = table.definition.columns
        try:
            handle = open(path, newline="", encoding="utf-8")
        except OSError as e:
            raise StorageError(f"cannot open {path}: {e}") from e
        rows: List[Dict[str, Any]] = []
        with handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                return 0
            header = [h.strip() for h in header]
            if sorted(header) != sorted(table.definition.column_names):
                raise SchemaMismatch(f"CSV header {header} does not match {table.definition.column_names}")
            for record in reader:
                line = reader.line_num
                if not record or all(not cell.strip() for cell in record):
                    continue
                if len(record) != len(header):
                    raise CsvParseError(f"expected {len(header)} fields, found {len(record)}", line)
                row: Dict[str, Any] = {}
                for name_, cell in zip(header, record):
                    col = table.definition.column(name_)
                    try:
                        row[name_] = _coerce(col, _parse_cell(col, cell))
                    except (ValueError, SchemaMismatch) as e:
                        raise CsvParseError(f"column {name_}: {e}", line) from e
                rows.append(row)
        if rows:
            table.insert([[row[c.name] for c in columns] for row in rows])
            self.save()
        logger.info(f"[Storage] ingested {len(rows)} rows into {name} from {path}")
        return len(rows)

    # Persistence

    def save(self) -> None:
        if self.path is None:
            return
        self.path.mkdir(parents=True, exist_ok=True)
        document: Dict[str, Any] = {"tables": {}}
        for name, table in self.tables.items():
            entry = table.definition.model_dump(mode="json")
            dictionaries = {}
            for col in table.definition.columns:
                target = self.path / f"{name}.{col.name}.col"
                values = table.data[col.name]
                if col.type == ColumnType.TEXT:
                    codes, dictionary = table.text_codes(col.name)
                    dictionaries[col.name] = dictionary
                    codes.astype("<u4").tofile(target)
                elif col.type in (ColumnType.UINT, ColumnType.BOOL):
                    values.astype("<u4").tofile(target)
                else:
                    values.astype("<f8").tofile(target)
            entry["dictionaries"] = dictionaries
            document["tables"][name] = entry
        (self.path / CATALOG_FILE).write_text(json.dumps(document, indent=2), encoding="utf-8")

    def load(self) -> None:
        try:
            document = json.loads((self.path / CATALOG_FILE).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise StorageError(f"cannot read catalog at {self.path}: {e}") from e
        for name, entry in document.get("tables", {}).items():
            dictionaries = entry.pop("dictionaries", {})
            definition = TableDef(**entry)
            data: Dict[str, np.ndarray] = {}
            for col in definition.columns:
                source = self.path / f"{name}.{col.name}.col"
                if col.type == ColumnType.TEXT:
                    codes = np.fromfile(source, dtype="<u4")
                    lookup = dictionaries.get(col.name, [])
                    data[col.name] = np.array([lookup[c] for c in codes], dtype=object)
                elif col.type in (ColumnType.UINT, ColumnType.BOOL):
                    data[col.name] = np.fromfile(source, dtype="<u4").astype(np.int64)
                elif col.type == ColumnType.VECTOR:
                    data[col.name] = np.fromfile(source, dtype="<f8").reshape(-1, col.dim)
                else:
                    data[col.name] = np.fromfile(source, dtype="<f8")
            self.tables[name] = Table(definition, data)
        logger.info(f"[Storage] loaded {len(self.tables)} tables from {self.path}")


def _parse_cell(col: ColumnDef, cell: str) -> Any:
    text = cell.strip()
    if col.type == ColumnType.UINT:
        return int(text)
    if col.type == ColumnType.REAL:
        return float(text)
    if col.type == ColumnType.VECTOR:
        return [float(part) for part in text.split(";") if part.strip()]
    if col.type == ColumnType.BOOL:
        return text
    return cell


# Synthetic data

class SyntheticDataset(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    table: Any
    predicates: List[Range]
    selectivities: List[float]


def generate_synthetic(N: int, spec: Optional[SelectivitySpec] = None, seed: int = 0,
                       bits: int = QUANTUM_MAX_BITS, name: str = "synthetic",
                       extra_columns: int = 0) -> SyntheticDataset:
    """Uniform random UINT columns d0.. and one Range predicate per target.

    Each predicate's true selectivity lies within 10% (relative) of its
    target. Deterministic per seed.
    """
    spec = spec or SelectivitySpec()
    if N < 1 or N & (N - 1):
        raise StorageError(f"N={N} is not a power of two")
    for target in spec.targets:
        if not 0 < target <= SELECTIVITY_CAP:
            raise InfeasibleSelectivity(f"target selectivity {target} outside (0, {SELECTIVITY_CAP}]")
        wanted = round(target * N)
        if wanted < 1 or abs(wanted / N - target) > 0.1 * target:
            raise InfeasibleSelectivity(f"target {target} cannot be met within 10% at N={N}")

    rng = np.random.default_rng(seed)
    dims = len(spec.targets) + extra_columns
    definition = TableDef(name=name, columns=[ColumnDef(name=f"d{i}", type=ColumnType.UINT, bits=bits)
                                              for i in range(dims)])
    data = {f"d{i}": rng.integers(0, 1 << bits, size=N, dtype=np.int64) for i in range(dims)}
    definition.row_count = N
    table = Table(definition, data)

    predicates: List[Range] = []
    measured: List[float] = []
    for i, target in enumerate(spec.targets):
        values = data[f"d{i}"]
        ordered = np.sort(values)
        wanted = round(target * N)
        for _ in range(100):
            start = int(rng.integers(0, N - wanted + 1))
            low, high = int(ordered[start]), int(ordered[start + wanted - 1])
            hits = int(np.count_nonzero((values >= low) & (values <= high)))
            if abs(hits / N - target) <= 0.1 * target:
                break
        else:
            raise InfeasibleSelectivity(f"no window meets target {target} for d{i}")
        predicates.append(Range(column=f"d{i}", low=low, high=high))
        measured.append(hits / N)
    logger.info(f"[Storage] synthetic table {name}: N={N}, {dims} columns, seed {seed}")
    return SyntheticDataset(table=table, predicates=predicates, selectivities=measured)
