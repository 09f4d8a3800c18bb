"""
Query Compiler

Lowers a parsed SELECT through three tiers of one plan IR:
1. lower_logical: name resolution, typing, Scan/Filter/Join/Aggregate/Project tree
2. apply_rewrites: rule catalog applied to a fixpoint
3. lower_quantum: eligibility and candidate algorithm per operator
4. lower_physical: loaders, compiled oracles, state preparations and the
   optimizer's operator profiles

Rewrite rules are discovered from markdown files with YAML frontmatter;
each rule name maps to the Python function implementing it.
"""

import logging
import math
import re
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ValidationError

from ..config import RULES_DIR, Settings, settings
from ..errors import (
    CapacityExceeded,
    CompilationError,
    LayerErrorOverflow,
    SimulationError,
    TypeMismatch,
    UnknownColumn,
    UnsupportedFeature,
)
from ..models import CostConstants, DeviceModel, Policy
from . import optimizer
from .estimation import ae_error_bound, prepare_sum, uniform_superposition_gates
from .grover import grover_iterations
from .oracles import comparator_oracle, compile_oracle
from .plan_ir import ALGORITHMS, HybridPlan, OpKind, OutputColumn, PlanNode, renumber
from .predicates import (
    And,
    Eq,
    Exists,
    Not,
    Predicate,
    PrefixLike,
    Range,
    RidBelow,
    conjunction,
    exists_nodes,
    rename_columns,
    resolve_exists,
    strip_qualifier,
)
from .simulator import Circuit, z
from .sql_parser import Explain, JoinSpec, Select, SelectItem, TableRef
from .storage import ColumnDef, ColumnType, Table, TableDef, estimate_selectivity, evaluate_predicate
from .swap_test import register_size

logger = logging.getLogger(__name__)

JOIN_OPS = (OpKind.EQUI_JOIN, OpKind.NONEQUI_JOIN, OpKind.SIM_JOIN)
FLIPPED = {"=": "=", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}
NUMERIC = (ColumnType.UINT, ColumnType.BOOL, ColumnType.REAL)
MAX_REWRITE_PASSES = 50


# Logical lowering

class _Scope:
    """Table bindings visible to one SELECT"""

    def __init__(self, catalog, refs: List[TableRef]):
        self.tables: Dict[str, TableDef] = {}
        for ref in refs:
            definition = catalog.definition(ref.name)
            if ref.binding in self.tables:
                raise UnsupportedFeature(f"table binding {ref.binding} appears twice; add an alias")
            self.tables[ref.binding] = definition

    def resolve(self, column: str) -> str:
        if "." in column:
            binding, short = column.split(".", 1)
            if binding not in self.tables:
                raise UnknownColumn(f"{column}: no table named {binding} in FROM")
            if not self.tables[binding].has_column(short):
                raise UnknownColumn(f"column {short} not in {binding}")
            return f"{binding}.{short}"
        owners = [b for b, d in self.tables.items() if d.has_column(column)]
        if not owners:
            raise UnknownColumn(f"column {column} not found")
        if len(owners) > 1:
            raise UnknownColumn(f"column {column} is ambiguous between {', '.join(owners)}")
        return f"{owners[0]}.{column}"

    def column_def(self, qualified: str) -> ColumnDef:
        binding, short = qualified.split(".", 1)
        return self.tables[binding].column(short)


def _check_value(col: ColumnDef, value, pred: Predicate) -> None:
    if value is None:
        return
    if col.type == ColumnType.TEXT and not isinstance(value, str):
        raise TypeMismatch(f"{pred.to_sql()}: text column compared with {value!r}")
    if col.type in NUMERIC and isinstance(value, str):
        raise TypeMismatch(f"{pred.to_sql()}: numeric column compared with text")


def _check_leaf(pred: Predicate, scope: _Scope) -> None:
    if not hasattr(pred, "column"):
        return
    col = scope.column_def(pred.column)
    if col.type == ColumnType.VECTOR:
        raise TypeMismatch(f"vector column {pred.column} cannot appear in WHERE")
    if isinstance(pred, Eq):
        _check_value(col, pred.value, pred)
    elif isinstance(pred, Range):
        _check_value(col, pred.low, pred)
        _check_value(col, pred.high, pred)
    elif isinstance(pred, PrefixLike) and col.type != ColumnType.TEXT:
        raise TypeMismatch(f"LIKE on {col.render_type()} column {pred.column}")


def _walk_predicate(pred: Predicate):
    yield pred
    for child in pred.children():
        yield from _walk_predicate(child)


def _resolve_predicate(pred: Predicate, scope: _Scope) -> Predicate:
    mapping = {c: scope.resolve(c) for c in pred.columns()}
    resolved = rename_columns(pred, mapping)
    for leaf in _walk_predicate(resolved):
        _check_leaf(leaf, scope)
    return resolved


def _scan(ref: TableRef, scope: _Scope) -> PlanNode:
    definition = scope.tables[ref.binding]
    output = [OutputColumn(name=f"{ref.binding}.{c.name}", type=c.render_type()) for c in definition.columns]
    return PlanNode(op=OpKind.SCAN, table=ref.name, alias=ref.alias, output=output)


def _join(spec: JoinSpec, left: PlanNode, right: PlanNode, scope: _Scope) -> PlanNode:
    l, r = scope.resolve(spec.left), scope.resolve(spec.right)
    op = spec.op
    left_binding = left.binding_name
    if l.split(".", 1)[0] != left_binding:
        l, r = r, l
        op = FLIPPED.get(op, op)
    if l.split(".", 1)[0] != left_binding or r.split(".", 1)[0] != right.binding_name:
        raise UnknownColumn(f"join condition must compare {left_binding} with {right.binding_name}")
    lcol, rcol = scope.column_def(l), scope.column_def(r)
    output = left.output + right.output

    if spec.kind == "sim":
        if lcol.type != ColumnType.VECTOR or rcol.type != ColumnType.VECTOR:
            raise TypeMismatch("SIMJOIN compares two vector columns")
        if lcol.dim != rcol.dim:
            raise TypeMismatch(f"SIMJOIN over VECTOR({lcol.dim}) and VECTOR({rcol.dim})")
        return PlanNode(op=OpKind.SIM_JOIN, children=[left, right], left=l, right=r, join_op=op,
                        threshold=spec.threshold, output=output)

    if ColumnType.VECTOR in (lcol.type, rcol.type):
        raise TypeMismatch("vector columns join only through SIMJOIN")
    if (lcol.type == ColumnType.TEXT) != (rcol.type == ColumnType.TEXT):
        raise TypeMismatch(f"join compares {lcol.render_type()} with {rcol.render_type()}")
    kind = OpKind.EQUI_JOIN if op == "=" else OpKind.NONEQUI_JOIN
    return PlanNode(op=kind, children=[left, right], left=l, right=r, join_op=op, output=output)


def _aggregate(item: SelectItem, child: PlanNode, scope: _Scope) -> PlanNode:
    column = scope.resolve(item.column) if item.column else None
    type_name = "UINT"
    if column:
        col = scope.column_def(column)
        if item.function in ("SUM", "AVG") and col.type not in NUMERIC:
            raise TypeMismatch(f"{item.function} over {col.render_type()} column {column}")
        if item.function in ("MIN", "MAX") and col.type == ColumnType.VECTOR:
            raise TypeMismatch(f"{item.function} over vector column {column}")
        type_name = col.render_type() if item.function in ("MIN", "MAX") else "REAL"
    if item.function == "COUNT":
        type_name = "UINT"
    label = f"{item.function}({item.column.split('.')[-1] if item.column else '*'})"
    return PlanNode(op=OpKind.AGGREGATE, function=item.function, column=column, children=[child],
                    output=[OutputColumn(name=label, type=type_name)])


def _project(items: List[SelectItem], child: PlanNode, scope: _Scope, joined: bool) -> PlanNode:
    columns: List[str] = []
    output: List[OutputColumn] = []

    def label(name: str) -> str:
        return name if joined else name.split(".", 1)[1]

    for item in items:
        if item.kind == "star":
            for out in child.output:
                columns.append(out.name)
                output.append(OutputColumn(name=label(out.name), type=out.type))
        elif item.kind == "rid":
            if joined:
                raise UnsupportedFeature("RID is ambiguous over a join")
            columns.append("RID")
            output.append(OutputColumn(name="RID", type="UINT"))
        else:
            name = scope.resolve(item.column)
            columns.append(name)
            output.append(OutputColumn(name=label(name), type=scope.column_def(name).render_type()))
    return PlanNode(op=OpKind.PROJECT, columns=columns, children=[child], output=output)


def _lower_exists(exists: Exists, catalog) -> PlanNode:
    sub: Select = exists.query
    if sub.aggregate is not None or sub.sample is not None:
        raise UnsupportedFeature("EXISTS subqueries are limited to filtered scans")
    scope = _Scope(catalog, [sub.table])
    node = _scan(sub.table, scope)
    if sub.where is not None:
        if exists_nodes(sub.where):
            raise UnsupportedFeature("nested EXISTS is not supported")
        node = PlanNode(op=OpKind.FILTER, predicate=_resolve_predicate(sub.where, scope), children=[node],
                        output=node.output)
    return PlanNode(op=OpKind.EXISTS, exists_text=exists.text, children=[node])


def lower_logical(statement, catalog) -> PlanNode:
    """Name-resolved, typed operator tree for a SELECT"""
    if isinstance(statement, Explain):
        statement = statement.statement
    if not isinstance(statement, Select):
        raise UnsupportedFeature(f"{type(statement).__name__} statements are not planned")
    refs = [statement.table] + ([statement.join.table] if statement.join else [])
    scope = _Scope(catalog, refs)

    node = _scan(statement.table, scope)
    if statement.join:
        node = _join(statement.join, node, _scan(statement.join.table, scope), scope)
    if statement.where is not None:
        pred = _resolve_predicate(statement.where, scope)
        subqueries = [_lower_exists(e, catalog) for e in exists_nodes(pred)]
        node = PlanNode(op=OpKind.FILTER, predicate=pred, subqueries=subqueries, children=[node],
                        output=node.output)

    aggregate = statement.aggregate
    if aggregate is not None:
        if statement.sample is not None:
            raise UnsupportedFeature("SAMPLE cannot be combined with an aggregate")
        return renumber(_aggregate(aggregate, node, scope))
    if statement.sample is not None:
        if statement.join:
            raise UnsupportedFeature("SAMPLE over a join is not supported")
        node = PlanNode(op=OpKind.SAMPLE, sample_k=statement.sample, children=[node], output=node.output)
    return renumber(_project(statement.items, node, scope, joined=statement.join is not None))


# Rewrite rules

class RewriteRule(BaseModel):
    """Catalog entry describing one plan rewrite"""
    name: str
    description: str = ""
    pattern: str = ""
    replacement: str = ""
    guard: str = ""
    order: int = 100
    enabled: bool = True
    file_path: Optional[str] = None


class RewriteContext:
    def __init__(self, catalog=None):
        self.catalog = catalog


RewriteFn = Callable[[PlanNode, RewriteContext], Optional[PlanNode]]


def _binding_of(node: PlanNode) -> Optional[str]:
    scan = next((n for n in node.walk() if n.op == OpKind.SCAN), None)
    return scan.binding_name if scan else None


def merge_filters(node: PlanNode, ctx: RewriteContext) -> Optional[PlanNode]:
    if node.op != OpKind.FILTER or not node.children or node.children[0].op != OpKind.FILTER:
        return None
    inner = node.children[0]
    return inner.model_copy(update={
        "predicate": conjunction([inner.predicate, node.predicate]),
        "subqueries": inner.subqueries + node.subqueries,
    })


def pushdown(node: PlanNode, ctx: RewriteContext) -> Optional[PlanNode]:
    if node.op != OpKind.FILTER or not node.children or node.children[0].op not in JOIN_OPS:
        return None
    join = node.children[0]
    sides = join.children[:2]
    bindings = [_binding_of(side) for side in sides]
    pushed: List[List[Predicate]] = [[], []]
    kept: List[Predicate] = []
    for conjunct in node.predicate.conjuncts():
        owners = {c.split(".", 1)[0] for c in conjunct.columns()}
        if exists_nodes(conjunct) or len(owners) != 1 or not owners <= set(bindings):
            kept.append(conjunct)
            continue
        pushed[bindings.index(owners.pop())].append(conjunct)
    if not pushed[0] and not pushed[1]:
        return None
    children = [
        side if not preds else PlanNode(op=OpKind.FILTER, predicate=conjunction(preds), children=[side],
                                        output=side.output)
        for side, preds in zip(sides, pushed)
    ]
    moved = join.model_copy(update={"children": children})
    rest = conjunction(kept)
    if rest is None:
        return moved
    return node.model_copy(update={"predicate": rest, "children": [moved]})


def reorder_conjuncts(node: PlanNode, ctx: RewriteContext) -> Optional[PlanNode]:
    if (ctx.catalog is None or node.op != OpKind.FILTER or not isinstance(node.predicate, And)
            or node.children[0].op != OpKind.SCAN):
        return None
    definition = ctx.catalog.definition(node.children[0].table)
    items = node.predicate.conjuncts()
    ordered = sorted(items, key=lambda p: estimate_selectivity(p, definition))
    if ordered == list(node.predicate.items):
        return None
    return node.model_copy(update={"predicate": And(items=tuple(ordered))})


def _absorb_filter(node: PlanNode, op: OpKind) -> Optional[PlanNode]:
    if node.op != op or node.predicate is not None or not node.children:
        return None
    child = node.children[0]
    if child.op != OpKind.FILTER or child.subqueries or child.children[0].op != OpKind.SCAN:
        return None
    return node.model_copy(update={"predicate": child.predicate, "children": child.children})


def fuse_aggregate_filter(node: PlanNode, ctx: RewriteContext) -> Optional[PlanNode]:
    return _absorb_filter(node, OpKind.AGGREGATE)


def fuse_sample_filter(node: PlanNode, ctx: RewriteContext) -> Optional[PlanNode]:
    return _absorb_filter(node, OpKind.SAMPLE)


RULE_FUNCTIONS: Dict[str, RewriteFn] = {
    "merge_filters": merge_filters,
    "pushdown": pushdown,
    "reorder_conjuncts": reorder_conjuncts,
    "fuse_aggregate_filter": fuse_aggregate_filter,
    "fuse_sample_filter": fuse_sample_filter,
}


class RuleCatalog:
    """Discovers rewrite rules from rule files (YAML frontmatter + notes)"""

    def __init__(self, rules_dir: Path = RULES_DIR):
        self.rules_dir = Path(rules_dir)
        self._rule_cache: Dict[str, RewriteRule] = {}
        self._notes_cache: Dict[str, str] = {}

    def discover(self) -> List[RewriteRule]:
        rules = []
        if self.rules_dir.is_dir():
            for rule_file in sorted(self.rules_dir.glob("*.md")):
                rule = self._parse_rule(rule_file)
                if rule:
                    rules.append(rule)
                    self._rule_cache[rule.name] = rule
        return sorted(rules, key=lambda r: (r.order, r.name))

    def _parse_rule(self, rule_file: Path) -> Optional[RewriteRule]:
        try:
            content = rule_file.read_text(encoding="utf-8")
            match = re.match(r"^---\s*\n(.*?)\n---\s*\n", content, re.DOTALL)
            if not match:
                return None
            frontmatter = yaml.safe_load(match.group(1)) or {}
            return RewriteRule(**frontmatter, file_path=str(rule_file))
        except (OSError, yaml.YAMLError, ValidationError, TypeError) as e:
            logger.warning(f"[Compiler] Skipping rule file {rule_file}: {e}")
            return None

    def get_rule_notes(self, name: str) -> Optional[str]:
        if name in self._notes_cache:
            return self._notes_cache[name]
        rule = self._rule_cache.get(name)
        if rule is None or rule.file_path is None:
            return None
        content = Path(rule.file_path).read_text(encoding="utf-8")
        notes = re.sub(r"^---\s*\n.*?\n---\s*\n", "", content, flags=re.DOTALL).strip()
        self._notes_cache[name] = notes
        return notes

    def default_rules(self) -> List[RewriteRule]:
        """Enabled rules that have an implementation; built-ins when no files are found"""
        rules = self.discover()
        if not rules:
            return [RewriteRule(name=name, order=i) for i, name in enumerate(RULE_FUNCTIONS)]
        unknown = [r.name for r in rules if r.name not in RULE_FUNCTIONS]
        if unknown:
            logger.warning(f"[Compiler] Rules without an implementation ignored: {', '.join(unknown)}")
        return [r for r in rules if r.enabled and r.name in RULE_FUNCTIONS]


rule_catalog = RuleCatalog()


def _rewrite_pass(node: PlanNode, rules: List[Tuple[RewriteRule, RewriteFn]], ctx: RewriteContext,
                  fired: List[str]) -> PlanNode:
    node = node.model_copy(update={
        "children": [_rewrite_pass(c, rules, ctx, fired) for c in node.children],
        "subqueries": [_rewrite_pass(s, rules, ctx, fired) for s in node.subqueries],
    })
    for rule, fn in rules:
        replacement = fn(node, ctx)
        if replacement is not None:
            fired.append(rule.name)
            node = replacement
    return node


def apply_rewrites(plan: PlanNode, rules: Optional[List[RewriteRule]] = None, catalog=None) -> PlanNode:
    """Apply the rule set bottom-up until no rule fires"""
    rules = rule_catalog.default_rules() if rules is None else rules
    active = [(r, RULE_FUNCTIONS[r.name]) for r in rules if r.enabled and r.name in RULE_FUNCTIONS]
    ctx = RewriteContext(catalog)
    current = plan
    for _ in range(MAX_REWRITE_PASSES):
        fired: List[str] = []
        current = _rewrite_pass(current, active, ctx, fired)
        if not fired:
            break
        logger.debug(f"[Compiler] rewrites fired: {', '.join(fired)}")
    return renumber(current)


# Quantum-extended lowering

def short_name(column: str) -> str:
    return column.split(".", 1)[-1]


def column_predicate(pred: Optional[Predicate]) -> Optional[Predicate]:
    """pred with EXISTS assumed true and qualifiers dropped, as the oracle sees it"""
    if pred is None:
        return None
    assumed = resolve_exists(pred, {e.text: True for e in exists_nodes(pred)})
    return strip_qualifier(assumed)


def _oracle_reason(pred: Optional[Predicate], definition: TableDef) -> Optional[str]:
    """Why pred cannot compile to an oracle, None when it can"""
    if pred is None:
        return None
    for leaf in _walk_predicate(pred):
        if isinstance(leaf, PrefixLike) and not leaf.is_prefix():
            return "LIKE with an interior wildcard"
        if hasattr(leaf, "column") and not definition.column(leaf.column).quantum_eligible:
            return f"column {short_name(leaf.column)} has no quantum encoding"
    return None


def base_filter(node: PlanNode) -> Tuple[Optional[PlanNode], Optional[Predicate]]:
    """(scan, predicate) for a Scan or a Filter directly on a Scan"""
    if node.op == OpKind.SCAN:
        return node, None
    if node.op == OpKind.FILTER and node.children and node.children[0].op == OpKind.SCAN:
        return node.children[0], node.predicate
    return None, None


def _eligibility(node: PlanNode, catalog) -> Tuple[Optional[str], Optional[str], Optional[str]]:
    """(algorithm key, demotion reason, table whose rows form the rid space)"""
    child = node.children[0] if node.children else None
    if node.op == OpKind.FILTER:
        if child.op in JOIN_OPS:
            return "filter", "predicate spans two tables", None
        if child.op != OpKind.SCAN:
            return "filter", "input is not a base table", None
        definition = catalog.definition(child.table)
        if not node.predicate.columns():
            return "filter", "no column predicate", child.table
        return "filter", _oracle_reason(node.predicate, definition), child.table

    if node.op in (OpKind.AGGREGATE, OpKind.SAMPLE):
        key = node.function if node.op == OpKind.AGGREGATE else "sample"
        if child.op != OpKind.SCAN:
            return key, "input is not a base table", None
        definition = catalog.definition(child.table)
        if key in ("SUM", "AVG"):
            return key, None, child.table
        if key in ("MIN", "MAX"):
            col = definition.column(node.column)
            if col.type == ColumnType.TEXT and not col.quantum_eligible:
                return key, f"column {short_name(node.column)} has no quantum encoding", child.table
            if col.stats.distinct > 1 << 16:
                return key, "capacity", child.table
        return key, _oracle_reason(node.predicate, definition), child.table

    if node.op in (OpKind.EQUI_JOIN, OpKind.NONEQUI_JOIN):
        key = "equi_join" if node.op == OpKind.EQUI_JOIN else "nonequi_join"
        outer_scan, _ = base_filter(node.children[0])
        inner_scan, inner_pred = base_filter(node.children[1])
        if outer_scan is None or inner_scan is None:
            return key, "join input is not a base table", None
        definition = catalog.definition(inner_scan.table)
        if not definition.column(node.right).quantum_eligible:
            return key, f"column {short_name(node.right)} has no quantum encoding", inner_scan.table
        return key, _oracle_reason(inner_pred, definition), inner_scan.table

    if node.op == OpKind.SIM_JOIN:
        outer_scan, _ = base_filter(node.children[0])
        inner_scan, _ = base_filter(node.children[1])
        if outer_scan is None or inner_scan is None:
            return "sim_join", "join input is not a base table", None
        return "sim_join", None, None

    if node.op == OpKind.EXISTS:
        scan, pred = base_filter(child)
        if scan is None:
            return "exists", "subquery is not a filtered scan", None
        return "exists", _oracle_reason(pred, catalog.definition(scan.table)), scan.table
    return None, None, None


def lower_quantum(plan: PlanNode, catalog, qubit_cap: int = settings.qubit_cap,
                  row_limit: int = settings.quantum_row_limit) -> PlanNode:
    """Annotate eligible operators with their candidate algorithm or a demotion reason"""
    # an EXISTS node evaluates its subquery filter itself
    absorbed = {id(n.children[0]) for n in plan.walk() if n.op == OpKind.EXISTS and n.children}
    for node in plan.walk():
        if id(node) in absorbed:
            node.eligible = False
            continue
        key, reason, table = _eligibility(node, catalog)
        if key is None:
            node.eligible = False
            continue
        node.eligible = True
        node.algorithm = ALGORITHMS[key]
        node.artifacts["kind"] = key
        if reason is None and table is not None:
            rows = catalog.definition(table).row_count
            n = max(1, math.ceil(math.log2(max(2, rows))))
            if rows == 0:
                reason = "empty table"
            elif n > qubit_cap or rows > row_limit:
                reason = "capacity"
            elif rows & (rows - 1):
                node.artifacts["padding"] = f"{rows} rows padded to {1 << n}"
        if node.op == OpKind.SIM_JOIN and reason is None:
            dim = catalog.definition(base_filter(node.children[0])[0].table).column(node.left).dim
            if 2 * register_size(dim) + 1 > qubit_cap:
                reason = "capacity"
        node.demotion = reason
        if reason:
            logger.info(f"[Compiler] #{node.id} {node.op.value} stays classical: {reason}")
    return plan


# Physical lowering

def join_condition(op: str, column: str, key) -> Predicate:
    """Predicate on the inner column matching `key op inner`"""
    if op == "=":
        return Eq(column=column, value=key)
    if op == "!=":
        return Not(item=Eq(column=column, value=key))
    if op == "<":
        return Range(column=column, low=key, low_open=True)
    if op == "<=":
        return Range(column=column, low=key)
    if op == ">":
        return Range(column=column, high=key, high_open=True)
    if op == ">=":
        return Range(column=column, high=key)
    raise UnsupportedFeature(f"join operator {op}")


def _load_bits(loader) -> int:
    return sum(enc.bits for enc in loader.columns.values())


def _check_width(width: int, cap: int, what: str) -> None:
    if width > cap:
        raise CapacityExceeded(f"{what} needs {width} qubits, cap is {cap}")


def _filter_artifacts(table: Table, pred: Optional[Predicate], config: Settings, cap: int) -> Dict:
    oracle_pred = column_predicate(pred) or RidBelow(limit=table.n_rows)
    columns = sorted(oracle_pred.columns())
    loader = table.loader(columns)
    _check_width(loader.n + config.counting_phase_bits, cap, "quantum counting")
    oracle = compile_oracle(oracle_pred, loader)
    selectivity = estimate_selectivity(pred, table.definition)
    m_est = max(1, min(table.n_rows, round(selectivity * table.n_rows)))
    return {
        "oracle": oracle,
        "loader": loader,
        "k": grover_iterations(loader.N, m_est),
        "m_est": m_est,
        "rows": table.n_rows,
        "load_bits": _load_bits(loader),
        "phase_bits": config.counting_phase_bits,
    }


def min_loader(table: Table, column: str, pred: Optional[Predicate], maximum: bool):
    """Loader with order-preserving codes of `column`; complemented for MAX"""
    short = short_name(column)
    extra = sorted(pred.columns() - {short}) if pred is not None else []
    loader = table.loader([short] + extra, ranked=[short])
    if maximum:
        enc = loader.columns[short]
        top = (1 << enc.bits) - 1
        loader.columns[short] = enc.model_copy(update={"values": top - enc.values})
    return loader


def _aggregate_artifacts(node: PlanNode, table: Table, device: DeviceModel, config: Settings,
                         cap: int) -> Dict:
    key = node.function
    pred = column_predicate(node.predicate)
    q = config.aggregate_phase_bits
    if key in ("SUM", "AVG") or (key == "COUNT" and pred is None):
        if key == "COUNT":
            values, mask = np.ones(table.n_rows), None
        else:
            values = np.asarray(table.column(node.column), dtype=np.float64)
            mask = None
            if node.predicate is not None:
                mask = evaluate_predicate(node.predicate, table)
        loading = prepare_sum(values, 1.0 if key == "COUNT" else None, mask,
                              0.0 if key == "COUNT" else None, device)
        _check_width(loading.circuit.n_qubits + q, cap, "amplitude estimation")
        bound = loading.bound(q)
        if key == "AVG" and loading.rows:
            bound /= loading.rows
        return {"state_prep": loading.circuit, "s_chi": [z(loading.n)], "phase_bits": q, "bound": bound,
                "rows": table.n_rows, "load_bits": 1}
    if key == "COUNT":
        art = _filter_artifacts(table, node.predicate, config, cap)
        oracle = art["oracle"]
        _check_width(oracle.n + q, cap, "amplitude estimation")
        prep = Circuit(n_qubits=oracle.n)
        prep.extend(uniform_superposition_gates(range(oracle.n)))
        art.update({"state_prep": prep, "s_chi": [oracle.fused_gate(device)], "phase_bits": q,
                    "bound": oracle.N * ae_error_bound(q)})
        return art
    # MIN / MAX
    loader = min_loader(table, node.column, pred, maximum=key == "MAX")
    _check_width(loader.n + config.counting_phase_bits, cap, "quantum counting")
    short = short_name(node.column)
    codes = loader.columns[short].values
    threshold = int(np.median(codes)) + 1 if len(codes) else 1
    oracle = comparator_oracle(loader, short, threshold, pred)
    return {
        "oracle": oracle,
        "loader": loader,
        "k": grover_iterations(loader.N, max(1, oracle.marked_count())),
        "steps": max(1, math.ceil(math.log2(loader.N))),
        "rows": table.n_rows,
        "load_bits": _load_bits(loader),
        "phase_bits": config.counting_phase_bits,
    }


def _join_artifacts(node: PlanNode, catalog, config: Settings, cap: int) -> Dict:
    outer_scan, outer_pred = base_filter(node.children[0])
    inner_scan, inner_pred = base_filter(node.children[1])
    outer, inner = catalog.table(outer_scan.table), catalog.table(inner_scan.table)
    if outer.n_rows == 0 or inner.n_rows == 0:
        raise CompilationError("empty join input")
    if node.op == OpKind.SIM_JOIN:
        x = outer.column(node.left)[0]
        y = inner.column(node.right)[0]
        dim = len(x)
        return {"pair": (list(map(float, x)), list(map(float, y))), "pairs": outer.n_rows * inner.n_rows,
                "rows": outer.n_rows + inner.n_rows, "load_bits": dim}
    column = short_name(node.right)
    inner_extra = column_predicate(inner_pred)
    columns = sorted({column} | (inner_extra.columns() if inner_extra is not None else set()))
    loader = inner.loader(columns)
    _check_width(loader.n + config.counting_phase_bits, cap, "quantum counting")
    key = outer.value(node.left, 0)
    template = conjunction([join_condition(node.join_op, column, key), inner_extra])
    oracle = compile_oracle(template, loader)
    outer_rows = max(1, round(outer.n_rows * estimate_selectivity(outer_pred, outer.definition)))
    distinct = max(1, inner.definition.column(column).stats.distinct)
    return {
        "oracle": oracle,
        "loader": loader,
        "k": grover_iterations(loader.N, max(1, round(inner.n_rows / distinct))),
        "outer": outer_rows,
        "rows": inner.n_rows,
        "load_bits": _load_bits(loader),
        "phase_bits": config.counting_phase_bits,
    }


def _physical_artifacts(node: PlanNode, catalog, device: DeviceModel, config: Settings, cap: int) -> Dict:
    if node.op in (OpKind.FILTER, OpKind.SAMPLE):
        scan = node.children[0]
        return _filter_artifacts(catalog.table(scan.table), node.predicate, config, cap)
    if node.op == OpKind.EXISTS:
        scan, pred = base_filter(node.children[0])
        return _filter_artifacts(catalog.table(scan.table), pred, config, cap)
    if node.op == OpKind.AGGREGATE:
        return _aggregate_artifacts(node, catalog.table(node.children[0].table), device, config, cap)
    return _join_artifacts(node, catalog, config, cap)


def lower_physical(qir: PlanNode, catalog, device: Optional[DeviceModel] = None,
                   config: Settings = settings, constants: Optional[CostConstants] = None) -> PlanNode:
    """Compile artifacts and attach operator profiles; failures demote the node"""
    device = device or DeviceModel()
    constants = constants or config.cost
    cap = min(config.qubit_cap, device.qubit_cap)
    for node in qir.walk():
        if not node.eligible or node.demotion:
            continue
        node.shots = config.default_shots
        try:
            node.artifacts.update(_physical_artifacts(node, catalog, device, config, cap))
            estimate = optimizer.operator_profile(node, device, constants)
        except CapacityExceeded as e:
            node.demotion = "capacity"
            logger.warning(f"[Compiler] #{node.id} {node.op.value} demoted: {e}")
            continue
        except LayerErrorOverflow as e:
            node.demotion = "layer error overflow"
            logger.warning(f"[Compiler] #{node.id} {node.op.value} demoted: {e}")
            continue
        except (CompilationError, SimulationError) as e:
            node.demotion = str(e)
            logger.warning(f"[Compiler] #{node.id} {node.op.value} demoted: {e}")
            continue
        node.profile = estimate.profile
        node.quantum_ns = estimate.total_ns
        logger.debug(f"[Compiler] #{node.id} {node.op.value}: {estimate.profile.render()} "
                     f"total={estimate.total_ns:.4g}ns")
    return qir


def compile_statement(statement, catalog, device: Optional[DeviceModel] = None,
                      policy: Optional[Policy] = None, config: Settings = settings,
                      rules: Optional[List[RewriteRule]] = None) -> HybridPlan:
    """Parse tree to bound hybrid plan"""
    device = device or DeviceModel()
    policy = policy or config.policy()
    select = statement.statement if isinstance(statement, Explain) else statement
    logical = lower_logical(select, catalog)
    rewritten = apply_rewrites(logical, rules, catalog)
    qir = lower_quantum(rewritten, catalog, min(config.qubit_cap, device.qubit_cap), config.quantum_row_limit)
    physical = lower_physical(qir, catalog, device, config)
    return optimizer.plan(physical, catalog, device, policy, config.cost, statement=select.to_sql(),
                          seed=config.seed)
