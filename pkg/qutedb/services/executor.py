"""
Hybrid Plan Executor

Runs statements against the catalog and bound plans against the device:
1. Statement dispatch: DDL, INSERT, COPY, CREATE INDEX, SELECT and EXPLAIN [ANALYZE]
2. Bottom-up plan execution over rid-tuple relations
3. Quantum realizations (Grover filter and sampling, counting for EXISTS,
   probe joins, SWAP-test similarity joins, amplitude-estimated aggregates,
   minimum finding) with classical reconciliation of every candidate
4. Runtime adaptation between shot batches and fallback to the classical
   realization on failure
5. Per-node execution trace
"""

import logging
import math
import operator
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Union

import numpy as np
from pydantic import BaseModel, Field

from ..config import DB_DIR, Settings, settings
from ..errors import CompilationError, SimulationError, UnsupportedFeature
from ..models import (
    AdaptationKind,
    DeviceModel,
    NoiseModel,
    Quality,
    ResultSet,
    RuntimeFeedback,
    TraceEntry,
)
from . import optimizer
from .compiler import base_filter, column_predicate, compile_statement, join_condition, short_name
from .estimation import aggregate_avg, aggregate_count, aggregate_sum, quantum_count
from .grover import boyer_brassard_search, counting_noise, filter_iterations, grover_filter
from .minimum import durr_hoyer_min
from .oracles import PredicateOracle, comparator_oracle, compile_oracle
from .plan_ir import Binding, HybridPlan, OpKind, PlanNode
from .predicates import And, Not, Or, Predicate, conjunction, exists_nodes, resolve_exists
from .qindex import IndexManager
from .simulator import StatevectorSimulator, simulator
from .sql_parser import CopyCsv, CreateIndex, CreateTable, Explain, Insert, Select, parse_script, parse_sql
from .storage import Catalog, Table, TableDef, column_def, evaluate_predicate
from .swap_test import swap_test, swap_test_error

logger = logging.getLogger(__name__)

COMPARISONS: Dict[str, Callable[[Any, Any], bool]] = {
    "=": operator.eq, "!=": operator.ne, "<": operator.lt,
    "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}


class _Fallback(Exception):
    """Raised inside a quantum realization to hand the node to its classical twin"""


# Intermediate relations

class Relation:
    """Rows as rid tuples, one column per table binding"""

    def __init__(self, bindings: List[str], tables: List[Table], rids: np.ndarray):
        self.bindings = bindings
        self.tables = tables
        self.rids = np.asarray(rids, dtype=np.int64).reshape(-1, len(bindings))

    @classmethod
    def base(cls, binding: str, table: Table, rids: Optional[Sequence[int]] = None) -> "Relation":
        rids = np.arange(table.n_rows) if rids is None else np.asarray(sorted(rids), dtype=np.int64)
        return cls([binding], [table], rids)

    def __len__(self) -> int:
        return len(self.rids)

    def position(self, column: str) -> int:
        if "." not in column:
            return 0
        binding = column.split(".", 1)[0]
        if binding not in self.bindings:
            raise UnsupportedFeature(f"column {column} is not produced by this input")
        return self.bindings.index(binding)

    def select(self, mask: np.ndarray) -> "Relation":
        return Relation(self.bindings, self.tables, self.rids[np.asarray(mask, dtype=bool)])

    def take(self, rows: np.ndarray) -> "Relation":
        return Relation(self.bindings, self.tables, self.rids[rows])

    def sorted(self) -> "Relation":
        if len(self) == 0:
            return self
        order = np.lexsort(self.rids.T[::-1])
        return self.take(order)

    def joined(self, other: "Relation", left_rows: Sequence[int], right_rows: Sequence[int]) -> "Relation":
        left = self.rids[np.asarray(left_rows, dtype=np.int64)]
        right = other.rids[np.asarray(right_rows, dtype=np.int64)]
        return Relation(self.bindings + other.bindings, self.tables + other.tables,
                        np.hstack([left.reshape(-1, len(self.bindings)), right.reshape(-1, len(other.bindings))]))

    def values(self, column: str) -> np.ndarray:
        i = self.position(column)
        return self.tables[i].column(column)[self.rids[:, i]]

    def cell(self, column: str, row: int) -> Any:
        if column == "RID":
            return int(self.rids[row, 0])
        i = self.position(column)
        return self.tables[i].value(column, int(self.rids[row, i]))


def evaluate_rows(pred: Optional[Predicate], relation: Relation) -> np.ndarray:
    """Boolean mask of pred over a relation whose rows may span two tables"""
    if pred is None:
        return np.ones(len(relation), dtype=bool)
    if isinstance(pred, And):
        mask = np.ones(len(relation), dtype=bool)
        for item in pred.items:
            mask &= evaluate_rows(item, relation)
        return mask
    if isinstance(pred, Or):
        mask = np.zeros(len(relation), dtype=bool)
        for item in pred.items:
            mask |= evaluate_rows(item, relation)
        return mask
    if isinstance(pred, Not):
        return ~evaluate_rows(pred.item, relation)
    i = relation.position(pred.column) if hasattr(pred, "column") else 0
    return evaluate_predicate(pred, relation.tables[i], relation.rids[:, i])


def reconcile(raw_hits: Sequence[int], predicate: Optional[Predicate], table: Table) -> Set[int]:
    """Distinct measured rids that are real rows and satisfy the predicate"""
    hits = np.unique(np.asarray(list(raw_hits), dtype=np.int64))
    hits = hits[(hits >= 0) & (hits < table.n_rows)]
    if len(hits) == 0:
        return set()
    return {int(r) for r in hits[evaluate_predicate(predicate, table, hits)]}


def classical_aggregate(function: str, values: Sequence[Any]) -> Any:
    """SQL aggregate over already-selected values; None for MIN/MAX/AVG of nothing"""
    items = list(values.tolist() if isinstance(values, np.ndarray) else values)
    if function == "COUNT":
        return len(items)
    if function == "SUM":
        return sum(items) if items else 0
    if not items:
        return None
    if function == "AVG":
        return float(sum(items)) / len(items)
    if function == "MIN":
        return min(items)
    if function == "MAX":
        return max(items)
    raise UnsupportedFeature(f"aggregate {function}")


def similarity(x: Sequence[float], y: Sequence[float]) -> float:
    """|<x|y>|^2 of the normalized vectors; 0 when either is zero"""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    nx, ny = float(np.dot(x, x)), float(np.dot(y, y))
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.dot(x, y) ** 2 / (nx * ny))


# Search rounds

class SearchOutcome(BaseModel):
    verified: List[int] = Field(default_factory=list)
    m_hat: int = 0
    shots: int = 0
    rounds: int = 0
    adaptations: List[str] = Field(default_factory=list)
    settled_classically: bool = False
    floor: int = 0

    @property
    def counted_zero(self) -> bool:
        return self.m_hat == 0 and not self.verified

    @property
    def short(self) -> bool:
        """Fewer verified rows than the low end of the count"""
        return len(self.verified) < self.floor


def count_ceiling(m_hat: int, N: int, phase_bits: int) -> int:
    """Upper end of the counting estimate: one phase step above it"""
    theta = math.asin(math.sqrt(min(1.0, m_hat / N)))
    upper = min(math.pi / 2, theta + math.pi / (1 << phase_bits))
    return min(N, math.ceil(N * math.sin(upper) ** 2))


def count_floor(m_hat: int, N: int, phase_bits: int) -> int:
    """Lower end of the counting estimate: one phase step below it, at least 1 when m_hat > 0"""
    if m_hat <= 0:
        return 0
    theta = math.asin(math.sqrt(min(1.0, m_hat / N)))
    lower = max(0.0, theta - math.pi / (1 << phase_bits))
    return max(1, min(m_hat, math.floor(N * math.sin(lower) ** 2)))


class Executor:
    """Executes one bound plan.

    Nodes run bottom-up. Quantum realizations hand their raw measurements to
    reconcile() so only verified rows flow upward; any simulation or
    compilation failure re-runs the node classically.
    """

    def __init__(self, plan: HybridPlan, catalog: Catalog, device: Optional[DeviceModel] = None,
                 seed: int = 0, indexes: Optional[IndexManager] = None, config: Settings = settings,
                 sim: StatevectorSimulator = simulator):
        self.plan = plan
        self.catalog = catalog
        self.device = device or DeviceModel()
        self.seed = seed
        self.indexes = indexes or IndexManager(catalog)
        self.config = config
        self.sim = sim
        self.policy = plan.policy
        noisy = self.policy.noise and (any(e > 0 for e in self.device.gate_errors.values())
                                       or self.device.t2_eff < 1e30)
        self.noise = NoiseModel.from_device(self.device, seed=seed, enabled=noisy,
                                            max_trajectories=config.max_trajectories)
        self.trace: List[TraceEntry] = []
        self.quality = Quality()
        self.exists: Dict[str, bool] = {}
        self.started = time.perf_counter()

    # Bookkeeping

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self.started) * 1000.0

    def over_budget(self) -> bool:
        budget = self.policy.latency_budget_ms
        return budget is not None and self.elapsed_ms() > budget

    def node_noise(self, node: PlanNode, salt: int = 0) -> NoiseModel:
        return self.noise.with_seed(self.seed + 1009 * node.id + 7919 * salt)

    def run(self) -> ResultSet:
        logger.info(f"[Executor] running {self.plan.statement or 'plan'}")
        out = self._visit(self.plan.root)
        if isinstance(out, Relation):
            out = self._materialize(out, [c.name for c in self.plan.root.output],
                                    [c.name for c in self.plan.root.output])
        out.quality = self.quality
        out.trace = self.trace
        return out

    def _visit(self, node: PlanNode) -> Union[Relation, ResultSet, bool]:
        entry = TraceEntry(node_id=node.id, op=node.op.value, realization=Binding.CLASSICAL.value,
                           algorithm=node.algorithm if node.eligible else None, profile=node.profile)
        started = time.perf_counter()
        handler = {
            OpKind.SCAN: self._scan,
            OpKind.FILTER: self._filter,
            OpKind.PROJECT: self._project,
            OpKind.EQUI_JOIN: self._join,
            OpKind.NONEQUI_JOIN: self._join,
            OpKind.SIM_JOIN: self._join,
            OpKind.AGGREGATE: self._aggregate,
            OpKind.EXISTS: self._exists,
            OpKind.SAMPLE: self._sample,
        }[node.op]
        out = handler(node, entry)
        entry.elapsed_ms = (time.perf_counter() - started) * 1000.0
        self.trace.append(entry)
        return out

    def _realization(self, node: PlanNode, entry: TraceEntry) -> Binding:
        if not node.eligible or node.demotion:
            if node.demotion:
                entry.notes.append(f"demoted: {node.demotion}")
            return Binding.CLASSICAL
        if self.over_budget():
            entry.notes.append("latency budget spent")
            return Binding.CLASSICAL
        binding = node.binding
        if binding == Binding.DEFERRED:
            binding = optimizer.resolve_deferred(node, self.policy)
            entry.notes.append(f"deferred -> {binding.value}")
        return binding

    def _attempt(self, node: PlanNode, entry: TraceEntry, quantum: Callable, classical: Callable):
        if self._realization(node, entry) == Binding.QUANTUM:
            entry.realization = Binding.QUANTUM.value
            try:
                return quantum(node, entry)
            except _Fallback as e:
                entry.notes.append(str(e))
            except (SimulationError, CompilationError) as e:
                logger.warning(f"[Executor] #{node.id} {node.op.value} quantum path failed: {e}")
                entry.notes.append(f"quantum path failed: {e}")
            entry.realization = "fallback"
            if AdaptationKind.FALLBACK.value not in entry.adaptations:
                entry.adaptations.append(AdaptationKind.FALLBACK.value)
        return classical(node, entry)

    # Grover rounds with reconciliation and adaptation

    def _search(self, node: PlanNode, oracle: PredicateOracle, predicate: Optional[Predicate], table: Table,
                noise: NoiseModel, limit: Optional[int] = None) -> SearchOutcome:
        """Count, then sample until the verified set stops growing.

        Stops after `reconcile_idle_rounds` rounds without a new row, once the
        verified set reaches the counting ceiling and a round adds nothing, or
        when `limit` rows are verified.
        """
        q = self.config.counting_phase_bits
        shots = node.shots or self.config.default_shots
        count = quantum_count(oracle, q, shots, counting_noise(noise), self.device, self.sim)
        outcome = SearchOutcome(m_hat=count.m_hat, shots=shots)
        if count.m_hat == 0:
            return outcome

        N = oracle.N
        m_hat = min(count.m_hat, N)
        ceiling = count_ceiling(m_hat, N, q)
        k_full = filter_iterations(N, m_hat) if count.conclusive else None
        verified: Set[int] = set()
        factor, variant, idle = 1, False, 0
        for rnd in range(self.config.max_reconcile_rounds):
            round_noise = noise.with_seed(noise.seed + 31 * (rnd + 1))
            if k_full is None:
                run = boyer_brassard_search(oracle, shots * factor, round_noise, self.device, self.sim)
            else:
                run = grover_filter(oracle, M_est=m_hat, shots=shots * factor, noise=round_noise,
                                    device=self.device, sim=self.sim,
                                    iterations=k_full // 2 if variant else k_full)
            outcome.shots += run.shots
            outcome.rounds += 1
            new = reconcile(run.raw_hits, predicate, table) - verified
            verified |= new
            idle = 0 if new else idle + 1
            if limit is not None and len(verified) >= limit:
                break
            if idle >= self.config.reconcile_idle_rounds or (len(verified) >= ceiling and not new):
                break

            expected = optimizer.expected_round_success(N, m_hat, run.k, node.profile)
            action = optimizer.adapt(RuntimeFeedback(
                observed_success=run.success_estimate,
                expected_success=expected,
                elapsed_ms=self.elapsed_ms(),
                shot_factor=factor,
                variant_available=k_full is not None and k_full > 1,
                variant_active=variant,
            ), node.profile, self.policy)
            if action is None:
                continue
            outcome.adaptations.append(action.render())
            logger.info(f"[Executor] #{node.id} round {rnd + 1}: observed {run.success_estimate:.3f} "
                        f"expected {expected:.3f} -> {action.render()}")
            if action.kind == AdaptationKind.INCREASE_SHOTS:
                factor *= action.factor
            elif action.kind == AdaptationKind.SWITCH_VARIANT:
                variant = True
            else:
                raise _Fallback("adaptation fell back to classical")
        outcome.verified = sorted(verified)
        floor = count_floor(m_hat, N, q)
        outcome.floor = floor if limit is None else min(limit, floor)
        return outcome

    @staticmethod
    def _record(entry: TraceEntry, outcome: SearchOutcome) -> None:
        entry.shots += outcome.shots
        entry.rounds += outcome.rounds
        entry.adaptations.extend(outcome.adaptations)

    # Operators

    def _scan(self, node: PlanNode, entry: TraceEntry) -> Relation:
        table = self.catalog.table(node.table)
        entry.notes.append(f"{table.n_rows} rows")
        return Relation.base(node.binding_name, table)

    def _resolved(self, node: PlanNode) -> Optional[Predicate]:
        for sub in node.subqueries:
            self._visit(sub)
        if node.predicate is None:
            return None
        return resolve_exists(node.predicate, self.exists)

    def _filter(self, node: PlanNode, entry: TraceEntry) -> Relation:
        pred = self._resolved(node)
        child = node.children[0]
        relation = self._visit(child)

        def quantum(node: PlanNode, entry: TraceEntry) -> Relation:
            table = relation.tables[0]
            oracle = node.artifacts["oracle"]
            if exists_nodes(node.predicate):
                oracle = compile_oracle(column_predicate(pred), node.artifacts["loader"])
            outcome = self._search(node, oracle, pred, table, self.node_noise(node))
            self._record(entry, outcome)
            if outcome.counted_zero:
                raise _Fallback("counting found no matches; confirming classically")
            if outcome.short:
                raise _Fallback(f"{len(outcome.verified)} verified, counting expects at least {outcome.floor}")
            entry.notes.append(f"M~{outcome.m_hat}, {len(outcome.verified)} verified")
            return Relation.base(relation.bindings[0], table, outcome.verified)

        def classical(node: PlanNode, entry: TraceEntry) -> Relation:
            if child.op == OpKind.SCAN and self.indexes.covers(child.table, pred):
                answer = self.indexes.answer(child.table, pred, self.config.index_threshold_c,
                                             self.config.max_index_probes)
                entry.notes.append(f"index path {answer.path}, {answer.evaluations} evaluations")
                return Relation.base(relation.bindings[0], relation.tables[0], answer.rids)
            return relation.select(evaluate_rows(pred, relation))

        return self._attempt(node, entry, quantum, classical)

    def _exists(self, node: PlanNode, entry: TraceEntry) -> bool:
        scan, pred = base_filter(node.children[0])
        table = self.catalog.table(scan.table)

        def quantum(node: PlanNode, entry: TraceEntry) -> bool:
            outcome = self._search(node, node.artifacts["oracle"], pred, table, self.node_noise(node), limit=1)
            self._record(entry, outcome)
            if outcome.verified:
                entry.notes.append(f"witness rid {outcome.verified[0]}")
                return True
            entry.notes.append("no witness sampled; emptiness confirmed classically")
            return bool(evaluate_predicate(pred, table).any())

        def classical(node: PlanNode, entry: TraceEntry) -> bool:
            if self.indexes.covers(scan.table, pred):
                return bool(self.indexes.answer(scan.table, pred, self.config.index_threshold_c,
                                                self.config.max_index_probes).rids)
            return bool(evaluate_predicate(pred, table).any())

        outcome = bool(self._attempt(node, entry, quantum, classical))
        self.exists[node.exists_text] = outcome
        entry.notes.append(f"EXISTS -> {outcome}")
        return outcome

    def _sample(self, node: PlanNode, entry: TraceEntry) -> Relation:
        k = node.sample_k or 0
        rng = np.random.default_rng(self.seed + 1009 * node.id)
        relation = self._visit(node.children[0])
        self.quality = Quality(kind="sample")

        def pick(candidates: Relation) -> Relation:
            if len(candidates) <= k:
                return candidates
            return candidates.take(np.sort(rng.choice(len(candidates), size=k, replace=False)))

        def quantum(node: PlanNode, entry: TraceEntry) -> Relation:
            table = relation.tables[0]
            outcome = self._search(node, node.artifacts["oracle"], node.predicate, table,
                                   self.node_noise(node), limit=k)
            self._record(entry, outcome)
            if outcome.counted_zero:
                raise _Fallback("counting found no matches; confirming classically")
            if outcome.short:
                raise _Fallback(f"{len(outcome.verified)} verified, counting expects at least {outcome.floor}")
            return pick(Relation.base(relation.bindings[0], table, outcome.verified))

        def classical(node: PlanNode, entry: TraceEntry) -> Relation:
            return pick(relation.select(evaluate_rows(node.predicate, relation)))

        return self._attempt(node, entry, quantum, classical)

    # Joins

    def _join(self, node: PlanNode, entry: TraceEntry) -> Relation:
        outer = self._visit(node.children[0])
        inner_relation: Dict[str, Relation] = {}

        def inner() -> Relation:
            if "rel" not in inner_relation:
                inner_relation["rel"] = self._visit(node.children[1])
            return inner_relation["rel"]

        def classical(node: PlanNode, entry: TraceEntry) -> Relation:
            right = inner()
            if node.op == OpKind.SIM_JOIN:
                return self._classical_similarity(node, outer, right)
            return classical_join(node.join_op, node.left, node.right, outer, right)

        if node.op == OpKind.SIM_JOIN:
            def quantum(node: PlanNode, entry: TraceEntry) -> Relation:
                return self._quantum_similarity(node, entry, outer, inner())
        else:
            def quantum(node: PlanNode, entry: TraceEntry) -> Relation:
                entry.notes.append("inner input fused into the probe oracle")
                return self._quantum_probe_join(node, entry, outer)

        return self._attempt(node, entry, quantum, classical)

    def _quantum_probe_join(self, node: PlanNode, entry: TraceEntry, outer: Relation) -> Relation:
        scan, inner_pred = base_filter(node.children[1])
        table = self.catalog.table(scan.table)
        loader = node.artifacts["loader"]
        column = short_name(node.right)
        inner_extra = column_predicate(inner_pred)
        keys = outer.values(node.left).tolist()
        distinct = list(dict.fromkeys(keys))

        def probe(i: int, key: Any) -> SearchOutcome:
            oracle = compile_oracle(conjunction([join_condition(node.join_op, column, key), inner_extra]), loader)
            verify = conjunction([join_condition(node.join_op, node.right, key), inner_pred])
            outcome = self._search(node, oracle, verify, table, self.node_noise(node, salt=i + 1))
            if outcome.counted_zero or outcome.short:
                # counting can miss a handful of matches and a round can miss rows; settle the key classically
                outcome.verified = [int(r) for r in np.flatnonzero(evaluate_predicate(verify, table))]
                outcome.settled_classically = True
            return outcome

        workers = max(1, self.config.probe_workers)
        if workers > 1 and len(distinct) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(probe, range(len(distinct)), distinct))
        else:
            outcomes = [probe(i, key) for i, key in enumerate(distinct)]

        matches: Dict[Any, List[int]] = {}
        confirmations = 0
        for key, outcome in zip(distinct, outcomes):
            confirmations += outcome.settled_classically
            self._record(entry, outcome)
            matches[key] = outcome.verified
        entry.notes.append(f"{len(distinct)} probes, {confirmations} settled classically")

        left_rows: List[int] = []
        right_rids: List[int] = []
        for row, key in enumerate(keys):
            for rid in matches[key]:
                left_rows.append(row)
                right_rids.append(rid)
        right = Relation.base(scan.binding_name, table, sorted(set(right_rids)))
        position = {int(r): i for i, r in enumerate(right.rids[:, 0])}
        return outer.joined(right, left_rows, [position[r] for r in right_rids]).sorted()

    def _pairs(self, node: PlanNode, outer: Relation, inner: Relation):
        xs = outer.values(node.left)
        ys = inner.values(node.right)
        for i in range(len(outer)):
            for j in range(len(inner)):
                yield i, j, xs[i], ys[j]

    def _classical_similarity(self, node: PlanNode, outer: Relation, inner: Relation) -> Relation:
        compare = COMPARISONS[node.join_op]
        left_rows, right_rows = [], []
        for i, j, x, y in self._pairs(node, outer, inner):
            if compare(similarity(x, y), node.threshold):
                left_rows.append(i)
                right_rows.append(j)
        return outer.joined(inner, left_rows, right_rows).sorted()

    def _quantum_similarity(self, node: PlanNode, entry: TraceEntry, outer: Relation,
                            inner: Relation) -> Relation:
        compare = COMPARISONS[node.join_op]
        shots = node.shots or self.config.default_shots
        left_rows, right_rows = [], []
        for p, (i, j, x, y) in enumerate(self._pairs(node, outer, inner)):
            result = swap_test(x, y, shots=shots, noise=self.node_noise(node, salt=p + 1), sim=self.sim)
            entry.shots += shots
            if compare(result.estimate, node.threshold):
                left_rows.append(i)
                right_rows.append(j)
        entry.rounds = len(outer) * len(inner)
        bound = swap_test_error(shots)
        self.quality = Quality(kind="approximate", bound=bound)
        entry.notes.append(f"similarity error ±{bound:.4g}")
        return outer.joined(inner, left_rows, right_rows).sorted()

    # Aggregates and projection

    def _aggregate(self, node: PlanNode, entry: TraceEntry) -> ResultSet:
        label = node.output[0].name
        relation = self._visit(node.children[0])

        def classical(node: PlanNode, entry: TraceEntry) -> ResultSet:
            selected = relation.select(evaluate_rows(node.predicate, relation))
            values = selected.values(node.column) if node.column else np.ones(len(selected))
            value = classical_aggregate(node.function, values)
            if node.function in ("MIN", "MAX") and value is not None:
                value = _python(value)
            return ResultSet(columns=[label], rows=[[value]])

        def quantum(node: PlanNode, entry: TraceEntry) -> ResultSet:
            table = relation.tables[0]
            value = self._quantum_aggregate(node, entry, table)
            return ResultSet(columns=[label], rows=[[value]])

        return self._attempt(node, entry, quantum, classical)

    def _quantum_aggregate(self, node: PlanNode, entry: TraceEntry, table: Table) -> Any:
        function = node.function
        shots = node.shots or self.config.default_shots
        noise = self.node_noise(node)
        q = self.config.aggregate_phase_bits
        if function in ("MIN", "MAX"):
            return self._quantum_minimum(node, entry, table, noise)

        if function == "COUNT" and node.predicate is not None:
            count = quantum_count(node.artifacts["oracle"], q, shots, counting_noise(noise), self.device, self.sim)
            entry.shots += shots
            self.quality = Quality(kind="approximate", bound=count.error_bound)
            return min(count.m_hat, table.n_rows)

        if function == "COUNT":
            estimate = aggregate_count(np.ones(table.n_rows, dtype=bool), q, shots, noise, self.sim, self.device)
        else:
            values = np.asarray(table.column(node.column), dtype=np.float64)
            mask = evaluate_predicate(node.predicate, table) if node.predicate is not None else None
            estimator = aggregate_sum if function == "SUM" else aggregate_avg
            estimate = estimator(values, phase_bits=q, shots=shots, noise=noise, sim=self.sim, mask=mask,
                                 device=self.device)
            if estimate.rows == 0:
                return classical_aggregate(function, [])
        entry.shots += shots
        self.quality = Quality(kind="approximate", bound=estimate.error_bound)
        entry.notes.append(f"a~{estimate.a_hat:.4f} over {estimate.rows} rows")
        return estimate.estimate

    def _quantum_minimum(self, node: PlanNode, entry: TraceEntry, table: Table, noise: NoiseModel) -> Any:
        loader = node.artifacts["loader"]
        short = short_name(node.column)
        extra = column_predicate(node.predicate)
        shots = node.shots or self.config.default_shots
        result = durr_hoyer_min(rng_seed=noise.seed, shots=shots, noise=noise, device=self.device, sim=self.sim,
                                loader=loader, column=short, extra=extra,
                                phase_bits=self.config.counting_phase_bits)
        entry.rounds = sum(len(run) for run in result.runs)
        entry.shots += shots * max(1, entry.rounds)
        if result.min_rid is None:
            return None
        # nothing may sit strictly below the incumbent's code
        check = comparator_oracle(loader, short, loader.value(short, result.min_rid), extra)
        if check.marked_count():
            raise _Fallback(f"{node.function} candidate rid {result.min_rid} not confirmed")
        entry.notes.append(f"{node.function} at rid {result.min_rid} after {result.iterations} iterations")
        return table.value(node.column, result.min_rid)

    def _project(self, node: PlanNode, entry: TraceEntry) -> ResultSet:
        relation = self._visit(node.children[0])
        return self._materialize(relation, node.columns, [c.name for c in node.output])

    @staticmethod
    def _materialize(relation: Relation, columns: List[str], labels: List[str]) -> ResultSet:
        relation = relation.sorted()
        rows = [[relation.cell(column, r) for column in columns] for r in range(len(relation))]
        return ResultSet(columns=labels, rows=rows)


def _python(value: Any) -> Any:
    return value.item() if isinstance(value, np.generic) else value


def classical_join(op: str, left: str, right: str, outer: Relation, inner: Relation) -> Relation:
    """Hash join for '=', vectorised nested loops for the other comparisons"""
    keys = outer.values(left).tolist()
    inner_keys = inner.values(right).tolist()
    left_rows: List[int] = []
    right_rows: List[int] = []
    if op == "=":
        buckets: Dict[Any, List[int]] = {}
        for j, key in enumerate(inner_keys):
            buckets.setdefault(key, []).append(j)
        for i, key in enumerate(keys):
            for j in buckets.get(key, ()):
                left_rows.append(i)
                right_rows.append(j)
    else:
        table = inner.tables[0]
        rids = inner.rids[:, 0]
        for i, key in enumerate(keys):
            hits = np.flatnonzero(evaluate_predicate(join_condition(op, right, key), table, rids))
            left_rows.extend([i] * len(hits))
            right_rows.extend(int(j) for j in hits)
    return outer.joined(inner, left_rows, right_rows).sorted()


def execute(plan: HybridPlan, catalog: Catalog, device: Optional[DeviceModel] = None, seed: int = 0,
            indexes: Optional[IndexManager] = None, config: Settings = settings,
            sim: StatevectorSimulator = simulator) -> ResultSet:
    """Run a bound plan and return its rows, quality and trace"""
    return Executor(plan, catalog, device, seed, indexes, config, sim).run()


# Statement engine

class Engine:
    """Owns a catalog, its indexes and a device model; runs SQL text"""

    def __init__(self, catalog: Optional[Catalog] = None, device: Optional[DeviceModel] = None,
                 config: Settings = settings, data_dir: Optional[Path] = None):
        self.config = config
        if catalog is None:
            catalog = Catalog(data_dir or config.data_dir or DB_DIR)
        self.catalog = catalog
        self.device = device or DeviceModel()
        self.indexes = IndexManager(self.catalog)
        self.policy = config.policy()

    def plan(self, statement: Union[str, Select, Explain]) -> HybridPlan:
        if isinstance(statement, str):
            statement = parse_sql(statement)
        return compile_statement(statement, self.catalog, self.device, self.policy, self.config)

    def explain(self, sql: str) -> str:
        return self.plan(sql).explain()

    def query(self, sql: str) -> ResultSet:
        return self.execute(parse_sql(sql))

    def run_script(self, text: str) -> List[ResultSet]:
        return [self.execute(statement) for statement in parse_script(text)]

    def execute(self, statement) -> ResultSet:
        if isinstance(statement, CreateTable):
            columns = [column_def(c.name, c.type_name, c.arg) for c in statement.columns]
            self.catalog.create_table(TableDef(name=statement.name, columns=columns))
            return ResultSet(message=f"CREATE TABLE {statement.name}")
        if isinstance(statement, Insert):
            rows: List[Any] = statement.rows
            if statement.columns:
                rows = [dict(zip(statement.columns, row)) for row in statement.rows]
            n = self.catalog.insert_rows(statement.table, rows)
            return ResultSet(message=f"INSERT {n}")
        if isinstance(statement, CopyCsv):
            n = self.catalog.ingest_csv(Path(statement.path), statement.table)
            return ResultSet(message=f"COPY {n}")
        if isinstance(statement, CreateIndex):
            self.indexes.create(statement.table, statement.kind, statement.columns)
            return ResultSet(message=f"CREATE INDEX {statement.kind} ON {statement.table}")
        if isinstance(statement, Explain):
            plan = self.plan(statement)
            if not statement.analyze:
                return ResultSet(message=plan.explain())
            result = self._run(plan)
            result.message = f"{plan.explain()}\n\n{result.render_trace()}"
            return result
        if isinstance(statement, Select):
            return self._run(self.plan(statement))
        raise UnsupportedFeature(f"{type(statement).__name__} statements are not supported")

    def _run(self, plan: HybridPlan) -> ResultSet:
        return execute(plan, self.catalog, self.device, self.config.seed, self.indexes, self.config)
