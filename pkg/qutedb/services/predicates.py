"""
Predicate trees shared by the SQL front end, storage and oracle compilation.

Text columns are dictionary encoded with a sorted dictionary, so string
comparisons and prefix matches become contiguous code ranges.
"""

import bisect
import re
from typing import Any, List, Optional, Sequence, Set, Tuple

from pydantic import BaseModel, ConfigDict, model_validator


class Predicate(BaseModel):
    """Base node of a boolean predicate over one row"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def columns(self) -> Set[str]:
        return set()

    def children(self) -> List["Predicate"]:
        return []

    def to_sql(self) -> str:
        raise NotImplementedError

    def conjuncts(self) -> List["Predicate"]:
        return [self]

    def __str__(self) -> str:
        return self.to_sql()


def sql_literal(value: Any) -> str:
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


class Eq(Predicate):
    column: str
    value: Any

    def columns(self) -> Set[str]:
        return {self.column}

    def to_sql(self) -> str:
        return f"{self.column} = {sql_literal(self.value)}"


class Range(Predicate):
    """low/high bound the column; None means unbounded on that side"""
    column: str
    low: Optional[Any] = None
    high: Optional[Any] = None
    low_open: bool = False
    high_open: bool = False

    @model_validator(mode="after")
    def _ordered(self) -> "Range":
        if self.low is None and self.high is None:
            raise ValueError("range needs at least one bound")
        if self.low is not None and self.high is not None and self.low > self.high:
            raise ValueError(f"range low {self.low!r} exceeds high {self.high!r}")
        return self

    def columns(self) -> Set[str]:
        return {self.column}

    def to_sql(self) -> str:
        if self.low is not None and self.high is not None and not self.low_open and not self.high_open:
            return f"{self.column} BETWEEN {sql_literal(self.low)} AND {sql_literal(self.high)}"
        parts = []
        if self.low is not None:
            parts.append(f"{self.column} {'>' if self.low_open else '>='} {sql_literal(self.low)}")
        if self.high is not None:
            parts.append(f"{self.column} {'<' if self.high_open else '<='} {sql_literal(self.high)}")
        return " AND ".join(parts)

    def contains(self, value: Any) -> bool:
        if self.low is not None and (value < self.low or (self.low_open and value == self.low)):
            return False
        if self.high is not None and (value > self.high or (self.high_open and value == self.high)):
            return False
        return True


class PrefixLike(Predicate):
    """LIKE over a text column; only 'prefix%' patterns compile to oracles"""
    column: str
    pattern: str

    def columns(self) -> Set[str]:
        return {self.column}

    def to_sql(self) -> str:
        return f"{self.column} LIKE {sql_literal(self.pattern)}"

    def is_prefix(self) -> bool:
        body = self.pattern[:-1] if self.pattern.endswith("%") else self.pattern
        return "%" not in body and "_" not in body

    @property
    def prefix(self) -> str:
        return self.pattern[:-1] if self.pattern.endswith("%") else self.pattern

    def regex(self) -> "re.Pattern[str]":
        parts = []
        for ch in self.pattern:
            if ch == "%":
                parts.append(".*")
            elif ch == "_":
                parts.append(".")
            else:
                parts.append(re.escape(ch))
        return re.compile("".join(parts), re.DOTALL)

    def matches(self, text: str) -> bool:
        return self.regex().fullmatch(text) is not None


class RidBelow(Predicate):
    """True for row identifiers below limit; masks padded rows"""
    limit: int

    def to_sql(self) -> str:
        return f"RID < {self.limit}"


class Exists(Predicate):
    """EXISTS(subquery); resolved to a constant before oracle compilation"""
    query: Any = None
    text: str = ""
    resolved: Optional[bool] = None

    def to_sql(self) -> str:
        return f"EXISTS ({self.text})"

    def resolve(self, value: bool) -> "Exists":
        return self.model_copy(update={"resolved": value})


class And(Predicate):
    items: Tuple[Predicate, ...]

    def columns(self) -> Set[str]:
        return set().union(*(p.columns() for p in self.items))

    def children(self) -> List[Predicate]:
        return list(self.items)

    def conjuncts(self) -> List[Predicate]:
        out: List[Predicate] = []
        for p in self.items:
            out.extend(p.conjuncts())
        return out

    def to_sql(self) -> str:
        return " AND ".join(_wrap(p, And) for p in self.items)


class Or(Predicate):
    items: Tuple[Predicate, ...]

    def columns(self) -> Set[str]:
        return set().union(*(p.columns() for p in self.items))

    def children(self) -> List[Predicate]:
        return list(self.items)

    def to_sql(self) -> str:
        return " OR ".join(_wrap(p, Or) for p in self.items)


class Not(Predicate):
    item: Predicate

    def columns(self) -> Set[str]:
        return self.item.columns()

    def children(self) -> List[Predicate]:
        return [self.item]

    def to_sql(self) -> str:
        return f"NOT ({self.item.to_sql()})"


def _wrap(pred: Predicate, parent: type) -> str:
    needs = isinstance(pred, (And, Or)) and not isinstance(pred, parent)
    needs = needs or (isinstance(pred, Range) and parent is Or and " AND " in pred.to_sql())
    return f"({pred.to_sql()})" if needs else pred.to_sql()


def conjunction(preds: Sequence[Predicate]) -> Optional[Predicate]:
    """Flattened AND of the given predicates (None when empty)"""
    flat: List[Predicate] = []
    for p in preds:
        if p is None:
            continue
        flat.extend(p.items if isinstance(p, And) else [p])
    if not flat:
        return None
    return flat[0] if len(flat) == 1 else And(items=tuple(flat))


def rename_columns(pred: Predicate, mapping: dict) -> Predicate:
    """Copy of pred with column names substituted (unmapped names kept)"""
    if isinstance(pred, (And, Or)):
        return pred.model_copy(update={"items": tuple(rename_columns(p, mapping) for p in pred.items)})
    if isinstance(pred, Not):
        return pred.model_copy(update={"item": rename_columns(pred.item, mapping)})
    if hasattr(pred, "column"):
        return pred.model_copy(update={"column": mapping.get(pred.column, pred.column)})
    return pred


def strip_qualifier(pred: Predicate) -> Predicate:
    """Drop 'table.' qualifiers from every column reference"""
    names = {c: c.split(".", 1)[-1] for c in pred.columns()}
    return rename_columns(pred, names)


# Dictionary code ranges for text columns (inclusive, empty when lo > hi)

def text_code_range(dictionary: Sequence[str], low: Optional[str], high: Optional[str],
                    low_open: bool = False, high_open: bool = False) -> Tuple[int, int]:
    lo = 0
    hi = len(dictionary) - 1
    if low is not None:
        lo = bisect.bisect_right(dictionary, low) if low_open else bisect.bisect_left(dictionary, low)
    if high is not None:
        hi = (bisect.bisect_left(dictionary, high) if high_open else bisect.bisect_right(dictionary, high)) - 1
    return lo, hi


def prefix_code_range(dictionary: Sequence[str], prefix: str) -> Tuple[int, int]:
    lo = bisect.bisect_left(dictionary, prefix)
    hi = lo
    while hi < len(dictionary) and dictionary[hi].startswith(prefix):
        hi += 1
    return lo, hi - 1


def resolve_exists(pred: Predicate, outcomes: dict) -> Predicate:
    """Copy of pred with every EXISTS replaced by its outcome, keyed by subquery text"""
    if isinstance(pred, Exists):
        return pred.resolve(outcomes[pred.text]) if pred.text in outcomes else pred
    if isinstance(pred, (And, Or)):
        return pred.model_copy(update={"items": tuple(resolve_exists(p, outcomes) for p in pred.items)})
    if isinstance(pred, Not):
        return pred.model_copy(update={"item": resolve_exists(pred.item, outcomes)})
    return pred


def exists_nodes(pred: Optional[Predicate]) -> List[Exists]:
    if pred is None:
        return []
    if isinstance(pred, Exists):
        return [pred]
    out: List[Exists] = []
    for child in pred.children():
        out.extend(exists_nodes(child))
    return out
