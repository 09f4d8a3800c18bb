"""
Selective Probing Indexes

Per-dimension B+ trees and a multi-dimensional KD tree answering range
predicates:
1. Probe every indexed dimension of a conjunctive query (at most 4, most
   selective statistics first) and keep the smallest candidate set k_s
2. If k_s <= c * log2(N), verify the remaining dimensions classically on
   those candidates; otherwise escalate to the KD tree
3. Disjunctions probe each dimension independently and take the union
"""

import bisect
import logging
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..config import settings
from ..errors import NoIndex
from .predicates import And, Eq, Or, Predicate, Range
from .storage import Catalog, ColumnType, IndexDef, Table, estimate_selectivity, evaluate_predicate

logger = logging.getLogger(__name__)

BTREE_ORDER = 4
KD_LEAF_CAPACITY = 8


# B+ tree

class _Leaf:
    __slots__ = ("keys", "rids", "next")

    def __init__(self, keys: List[Any], rids: List[int]):
        self.keys = keys
        self.rids = rids
        self.next: Optional["_Leaf"] = None


class _Inner:
    __slots__ = ("separators", "children")

    def __init__(self, separators: List[Any], children: List[Any]):
        self.separators = separators
        self.children = children


class BPlusTreeIndex:
    """Bulk-loaded B+ tree over (key, rid) pairs of one column"""

    def __init__(self, column: str, keys: Sequence[Any], order: int = BTREE_ORDER):
        if order < 3:
            raise ValueError("B+ tree order must be at least 3")
        self.column = column
        self.order = order
        self.size = len(keys)
        pairs = sorted(zip(keys, range(len(keys))), key=lambda p: (p[0], p[1]))
        per_leaf = order - 1
        leaves = [_Leaf([k for k, _ in pairs[i:i + per_leaf]], [r for _, r in pairs[i:i + per_leaf]])
                  for i in range(0, len(pairs), per_leaf)] or [_Leaf([], [])]
        for a, b in zip(leaves, leaves[1:]):
            a.next = b
        self.first_leaf = leaves[0]
        level: List[Any] = leaves
        self.height = 1
        while len(level) > 1:
            parents = []
            for i in range(0, len(level), order):
                group = level[i:i + order]
                parents.append(_Inner([_min_key(c) for c in group[1:]], group))
            level = parents
            self.height += 1
        self.root = level[0]
        self.nodes_visited = 0

    @classmethod
    def from_table(cls, table: Table, column: str, order: int = BTREE_ORDER) -> "BPlusTreeIndex":
        col = table.definition.column(column)
        if col.type == ColumnType.VECTOR:
            raise NoIndex(f"vector column {column} cannot carry a B+ tree")
        return cls(col.name, table.column(col.name).tolist(), order)

    def _find_leaf(self, low: Any) -> _Leaf:
        node = self.root
        self.nodes_visited += 1
        while isinstance(node, _Inner):
            node = node.children[bisect.bisect_left(node.separators, low)]
            self.nodes_visited += 1
        return node

    def range_lookup(self, pred: Range) -> List[int]:
        """Rids whose key lies in pred; fully covered leaves are taken wholesale"""
        leaf = self.first_leaf if pred.low is None else self._find_leaf(pred.low)
        out: List[int] = []
        while leaf is not None and leaf.keys:
            if pred.high is not None and leaf.keys[0] > pred.high:
                break
            if pred.contains(leaf.keys[0]) and pred.contains(leaf.keys[-1]):
                out.extend(leaf.rids)
            else:
                out.extend(r for k, r in zip(leaf.keys, leaf.rids) if pred.contains(k))
            leaf = leaf.next
            self.nodes_visited += 1
        return sorted(out)

    def leaves(self) -> List[_Leaf]:
        out, leaf = [], self.first_leaf
        while leaf is not None:
            out.append(leaf)
            leaf = leaf.next
        return out

    def check(self) -> None:
        """Assert balance, ordering and fanout"""
        depths = set()

        def visit(node: Any, depth: int, low: Any, high: Any) -> None:
            if isinstance(node, _Leaf):
                depths.add(depth)
                assert len(node.keys) <= self.order - 1
                assert node.keys == sorted(node.keys)
                assert all((low is None or k >= low) and (high is None or k <= high) for k in node.keys)
                return
            assert len(node.children) <= self.order
            assert len(node.separators) == len(node.children) - 1
            bounds = [low] + node.separators + [high]
            for i, child in enumerate(node.children):
                visit(child, depth + 1, bounds[i], bounds[i + 1])

        visit(self.root, 0, None, None)
        assert len(depths) == 1, "leaves at different depths"


def _min_key(node: Any) -> Any:
    while isinstance(node, _Inner):
        node = node.children[0]
    return node.keys[0]


# Probing

class ProbeResult(BaseModel):
    dimension: str
    rids: List[int] = Field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.rids)


class Strategy(str, Enum):
    CLASSICAL_POST_FILTER = "ClassicalPostFilter"
    KD_TREE_SEARCH = "KdTreeSearch"


class StrategyDecision(BaseModel):
    chosen: Strategy
    k_s: int
    threshold: float
    dimension: str


class PostFilterResult(BaseModel):
    rids: List[int] = Field(default_factory=list)
    evaluations: int = 0


def as_range(pred: Predicate) -> Optional[Range]:
    """Range view of a single-column Eq/Range conjunct"""
    if isinstance(pred, Range):
        return pred
    if isinstance(pred, Eq) and not isinstance(pred.value, bool):
        return Range(column=pred.column, low=pred.value, high=pred.value)
    return None


def probe_dimension(index: Optional[BPlusTreeIndex], pred: Predicate) -> ProbeResult:
    rng = as_range(pred)
    if index is None or rng is None or rng.column != index.column:
        raise NoIndex(f"no B+ tree for {pred.to_sql()}")
    return ProbeResult(dimension=index.column, rids=index.range_lookup(rng))


def select_strategy(probes: Sequence[ProbeResult], N: int, d: int = 1,
                    c: float = settings.index_threshold_c) -> StrategyDecision:
    if not probes:
        raise NoIndex("strategy selection needs at least one probe")
    smallest = min(probes, key=lambda p: p.k)
    threshold = c * math.log2(N) if N > 1 else 0.0
    chosen = Strategy.CLASSICAL_POST_FILTER if smallest.k <= threshold else Strategy.KD_TREE_SEARCH
    logger.debug(f"[Index] k_s={smallest.k} on {smallest.dimension}, threshold {threshold:.2f}, d={d}: {chosen.value}")
    return StrategyDecision(chosen=chosen, k_s=smallest.k, threshold=threshold, dimension=smallest.dimension)


def classical_post_filter(candidates: Sequence[int], remaining: Sequence[Predicate], table: Table) -> PostFilterResult:
    """Check residual conjuncts on candidates; one evaluation per (row, conjunct) tried"""
    survivors = np.asarray(sorted(set(candidates)), dtype=np.int64)
    evaluations = 0
    for pred in remaining:
        if len(survivors) == 0:
            break
        evaluations += len(survivors)
        survivors = survivors[evaluate_predicate(pred, table, survivors)]
    return PostFilterResult(rids=[int(r) for r in survivors], evaluations=evaluations)


def disjunctive_probe(probes: Sequence[ProbeResult]) -> List[int]:
    out: set = set()
    for probe in probes:
        out.update(probe.rids)
    return sorted(out)


# KD tree

class _KdNode:
    __slots__ = ("lower", "upper", "rids", "points", "left", "right", "dim")

    def __init__(self, lower: np.ndarray, upper: np.ndarray):
        self.lower = lower
        self.upper = upper
        self.rids: Optional[np.ndarray] = None
        self.points: Optional[np.ndarray] = None
        self.left: Optional["_KdNode"] = None
        self.right: Optional["_KdNode"] = None
        self.dim = -1

    @property
    def is_leaf(self) -> bool:
        return self.rids is not None


class KdCandidates(BaseModel):
    """Rids of subtrees inside the box, plus partial-leaf rids still to verify"""
    contained: List[int] = Field(default_factory=list)
    partial: List[int] = Field(default_factory=list)


class KdTreeIndex:
    """Median-split KD tree; split dimension alternates with depth"""

    def __init__(self, columns: Sequence[str], points: np.ndarray, leaf_capacity: int = KD_LEAF_CAPACITY):
        self.columns = list(columns)
        self.leaf_capacity = max(1, leaf_capacity)
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, len(self.columns))
        self.size = len(self.points)
        self.root = self._build(np.arange(self.size, dtype=np.int64), 0)
        self.nodes_visited = 0

    @classmethod
    def from_table(cls, table: Table, columns: Sequence[str], leaf_capacity: int = KD_LEAF_CAPACITY) -> "KdTreeIndex":
        data = []
        for name in columns:
            col = table.definition.column(name)
            if col.type == ColumnType.TEXT:
                data.append(table.text_codes(name)[0].astype(np.float64))
            elif col.type == ColumnType.VECTOR:
                raise NoIndex(f"vector column {name} cannot be a KD dimension")
            else:
                data.append(table.column(name).astype(np.float64))
        points = np.stack(data, axis=1) if data else np.zeros((table.n_rows, 0))
        return cls([table.definition.column(c).name for c in columns], points, leaf_capacity)

    def _build(self, rids: np.ndarray, depth: int) -> _KdNode:
        pts = self.points[rids]
        if len(rids):
            node = _KdNode(pts.min(axis=0), pts.max(axis=0))
        else:
            node = _KdNode(np.full(len(self.columns), np.inf), np.full(len(self.columns), -np.inf))
        if len(rids) <= self.leaf_capacity:
            node.rids, node.points = rids, pts
            return node
        node.dim = depth % len(self.columns)
        order = np.argsort(pts[:, node.dim], kind="stable")
        half = len(rids) // 2
        node.left = self._build(rids[order[:half]], depth + 1)
        node.right = self._build(rids[order[half:]], depth + 1)
        return node

    def _box(self, ranges: Dict[str, Range]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        d = len(self.columns)
        low, high = np.full(d, -np.inf), np.full(d, np.inf)
        low_open, high_open = np.zeros(d, dtype=bool), np.zeros(d, dtype=bool)
        for name, rng in ranges.items():
            short = name.split(".", 1)[-1]
            if short not in self.columns:
                raise NoIndex(f"KD tree does not index {name}")
            i = self.columns.index(short)
            if rng.low is not None:
                low[i], low_open[i] = float(rng.low), rng.low_open
            if rng.high is not None:
                high[i], high_open[i] = float(rng.high), rng.high_open
        return low, high, low_open, high_open

    @staticmethod
    def _inside(points: np.ndarray, box) -> np.ndarray:
        low, high, low_open, high_open = box
        above = np.where(low_open, points > low, points >= low)
        below = np.where(high_open, points < high, points <= high)
        return np.all(above & below, axis=-1)

    def _classify(self, node: _KdNode, box) -> str:
        low, high, low_open, high_open = box
        if np.any(node.upper < low) or np.any(node.lower > high):
            return "disjoint"
        if np.any(low_open & (node.upper <= low)) or np.any(high_open & (node.lower >= high)):
            return "disjoint"
        if self._inside(node.lower, box) and self._inside(node.upper, box):
            return "contained"
        return "partial"

    def candidates(self, ranges: Dict[str, Range]) -> KdCandidates:
        box = self._box(ranges)
        out = KdCandidates()
        stack = [self.root]
        while stack:
            node = stack.pop()
            self.nodes_visited += 1
            kind = self._classify(node, box)
            if kind == "disjoint":
                continue
            if kind == "contained":
                out.contained.extend(int(r) for r in self._subtree_rids(node))
            elif node.is_leaf:
                out.partial.extend(int(r) for r in node.rids)
            else:
                stack.extend([node.right, node.left])
        out.contained.sort()
        out.partial.sort()
        return out

    def search(self, ranges: Dict[str, Range]) -> List[int]:
        box = self._box(ranges)
        found = self.candidates(ranges)
        partial = np.asarray(found.partial, dtype=np.int64)
        verified = partial[self._inside(self.points[partial], box)] if len(partial) else partial
        return sorted(found.contained + [int(r) for r in verified])

    def _subtree_rids(self, node: _KdNode) -> List[int]:
        if node.is_leaf:
            return list(node.rids)
        return self._subtree_rids(node.left) + self._subtree_rids(node.right)

    def leaves(self) -> List[_KdNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend([node.left, node.right])
        return out


def kd_search(tree: KdTreeIndex, ranges: Dict[str, Range]) -> List[int]:
    """Exact multi-dimensional range result; disjoint subtrees pruned"""
    return tree.search(ranges)


def kd_candidates(tree: KdTreeIndex, ranges: Dict[str, Range]) -> KdCandidates:
    return tree.candidates(ranges)


# Index manager

class IndexAnswer(BaseModel):
    rids: List[int] = Field(default_factory=list)
    decision: Optional[StrategyDecision] = None
    probes: List[ProbeResult] = Field(default_factory=list)
    evaluations: int = 0
    path: str = ""
    partial: List[int] = Field(default_factory=list)
    residual: List[Predicate] = Field(default_factory=list)


class IndexManager:
    """Builds catalog indexes on demand and answers range predicates with them.

    Indexes are immutable; a table whose row count changed since the build
    gets its indexes rebuilt on next use.
    """

    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self._btrees: Dict[Tuple[str, str], Tuple[int, BPlusTreeIndex]] = {}
        self._kdtrees: Dict[Tuple[str, Tuple[str, ...]], Tuple[int, KdTreeIndex]] = {}

    def create(self, table: str, kind: str, columns: Sequence[str]) -> None:
        definition = self.catalog.definition(table)
        names = [definition.column(c).name for c in columns]
        self.catalog.add_index(table, IndexDef(kind=kind, columns=names))
        if kind == "kd":
            self.kdtree(table, names)
        else:
            self.btree(table, names[0])
        logger.info(f"[Index] built {kind} index on {table}({', '.join(names)})")

    def btree(self, table: str, column: str) -> Optional[BPlusTreeIndex]:
        t = self.catalog.table(table)
        short = column.split(".", 1)[-1]
        if not any(i.kind == "btree" and i.columns == [short] for i in t.definition.indexes):
            return None
        cached = self._btrees.get((table, short))
        if cached is None or cached[0] != t.n_rows:
            cached = (t.n_rows, BPlusTreeIndex.from_table(t, short))
            self._btrees[(table, short)] = cached
        return cached[1]

    def kdtree(self, table: str, columns: Sequence[str]) -> Optional[KdTreeIndex]:
        """A KD tree covering every given column"""
        t = self.catalog.table(table)
        wanted = {c.split(".", 1)[-1] for c in columns}
        for index in t.definition.indexes:
            if index.kind == "kd" and wanted <= set(index.columns):
                key = (table, tuple(index.columns))
                cached = self._kdtrees.get(key)
                if cached is None or cached[0] != t.n_rows:
                    cached = (t.n_rows, KdTreeIndex.from_table(t, index.columns))
                    self._kdtrees[key] = cached
                return cached[1]
        return None

    def has_indexes(self, table: str) -> bool:
        return bool(self.catalog.definition(table).indexes)

    def covers(self, table: str, pred: Optional[Predicate]) -> bool:
        """True when at least one conjunct (or every disjunct) has a usable index"""
        if pred is None or not self.has_indexes(table):
            return False
        if isinstance(pred, Or):
            return all(self._indexed_range(table, p) is not None for p in pred.items)
        return any(self._indexed_range(table, p) is not None for p in pred.conjuncts())

    def _indexed_range(self, table: str, pred: Predicate) -> Optional[Range]:
        rng = as_range(pred)
        if rng is None:
            return None
        if self.btree(table, rng.column) is None and self.kdtree(table, [rng.column]) is None:
            return None
        return rng

    def answer(self, table: str, pred: Predicate, c: float = settings.index_threshold_c,
               max_probes: int = settings.max_index_probes) -> IndexAnswer:
        t = self.catalog.table(table)
        N = t.n_rows
        if isinstance(pred, Or):
            probes = [self._probe(table, p) for p in pred.items]
            return IndexAnswer(rids=disjunctive_probe(probes), probes=probes, path="disjunctive")

        conjuncts = pred.conjuncts()
        probeable = [p for p in conjuncts
                     if as_range(p) is not None and self.btree(table, as_range(p).column) is not None]
        probeable.sort(key=lambda p: estimate_selectivity(p, t.definition))
        probeable = probeable[:max_probes]
        if not probeable:
            return self._kd_only(table, t, conjuncts)

        probes = [probe_dimension(self.btree(table, as_range(p).column), p) for p in probeable]
        decision = select_strategy(probes, N, d=len(conjuncts), c=c)
        if decision.chosen == Strategy.CLASSICAL_POST_FILTER:
            chosen = min(range(len(probes)), key=lambda i: probes[i].k)
            remaining = [p for p in conjuncts if p is not probeable[chosen]]
            filtered = classical_post_filter(probes[chosen].rids, remaining, t)
            return IndexAnswer(rids=filtered.rids, decision=decision, probes=probes,
                               evaluations=filtered.evaluations, path="post-filter")

        answer = self._kd_only(table, t, conjuncts)
        answer.decision = decision
        answer.probes = probes
        if answer.path == "kd":
            return answer
        # no KD tree covers the box: verify the smallest probe set instead
        chosen = min(range(len(probes)), key=lambda i: probes[i].k)
        remaining = [p for p in conjuncts if p is not probeable[chosen]]
        filtered = classical_post_filter(probes[chosen].rids, remaining, t)
        answer.rids, answer.evaluations, answer.path = filtered.rids, filtered.evaluations, "post-filter"
        return answer

    def _probe(self, table: str, pred: Predicate) -> ProbeResult:
        rng = as_range(pred)
        if rng is None:
            raise NoIndex(f"{pred.to_sql()} is not a single-column range")
        index = self.btree(table, rng.column)
        if index is not None:
            return probe_dimension(index, rng)
        tree = self.kdtree(table, [rng.column])
        if tree is None:
            raise NoIndex(f"no index on {table}.{rng.column}")
        return ProbeResult(dimension=rng.column, rids=kd_search(tree, {rng.column: rng}))

    def _kd_only(self, table: str, t: Table, conjuncts: List[Predicate]) -> IndexAnswer:
        ranges: Dict[str, Range] = {}
        residual: List[Predicate] = []
        for p in conjuncts:
            rng = as_range(p)
            if rng is not None and rng.column not in ranges and self.kdtree(table, [rng.column]) is not None \
                    and t.definition.column(rng.column).type != ColumnType.TEXT:
                ranges[rng.column] = rng
            else:
                residual.append(p)
        tree = self.kdtree(table, list(ranges)) if ranges else None
        if tree is None:
            filtered = classical_post_filter(range(t.n_rows), conjuncts, t)
            return IndexAnswer(rids=filtered.rids, evaluations=filtered.evaluations, path="scan")
        found = kd_candidates(tree, ranges)
        box = And(items=tuple(ranges.values())) if len(ranges) > 1 else next(iter(ranges.values()))
        verified = classical_post_filter(found.partial, [box], t).rids
        rids = sorted(set(found.contained) | set(verified))
        filtered = classical_post_filter(rids, residual, t)
        return IndexAnswer(rids=filtered.rids, evaluations=filtered.evaluations, path="kd",
                           partial=found.partial, residual=residual)
