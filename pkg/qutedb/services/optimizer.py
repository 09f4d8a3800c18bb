"""
Cost Model and Hybrid Planner

Prices every quantum-eligible plan node and binds a realization:
1. Circuit-level model: T_q from the layer schedule, P_q from per-layer
   error sums and dephasing, E[T] with the classical fallback folded in
2. Classical baseline: tuple evaluations times c_tuple
3. Projection of Grover-family depths to sizes the simulator cannot hold
4. plan: cheaper realization wins, near-ties are deferred to execution
5. adapt: runtime reaction to a quantum node missing its success target
6. Crossover sweep over powers of two and least-squares calibration
"""

import csv
import io
import logging
import math
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from ..config import settings
from ..errors import LayerErrorOverflow, NoCrossover, UnknownOperator
from ..models import (
    AdaptationAction,
    AdaptationKind,
    CostConstants,
    DepthModel,
    DeviceModel,
    OperatorProfile,
    Policy,
    RuntimeFeedback,
)
from .estimation import ae_error_bound, build_phase_estimation_circuit, uniform_superposition_gates
from .grover import analytic_success, build_grover_circuit
from .plan_ir import Binding, HybridPlan, OpKind, PlanNode
from .simulator import Circuit, LayerSchedule, schedule_layers
from .swap_test import build_swap_test, swap_test_error

logger = logging.getLogger(__name__)

# Dürr-Høyer repetitions charged by the model
MIN_REPETITIONS = 3


# Circuit-level model

def estimate_time(schedule: LayerSchedule, device: DeviceModel) -> float:
    """T_q = sum over layers of (max gate duration + t_ctrl)"""
    return float(sum(t + device.t_ctrl for t in schedule.layer_durations))


def estimate_success(schedule: LayerSchedule, device: DeviceModel) -> float:
    """P_q = prod over layers of (1 - sum eps_g) * exp(-t_k / T2_eff)"""
    p = 1.0
    for k, (t_k, eps) in enumerate(zip(schedule.layer_durations, schedule.layer_error_sums)):
        if eps >= 1.0:
            raise LayerErrorOverflow(k, eps)
        p *= (1.0 - eps) * math.exp(-t_k / device.t2_eff)
    return p


def expected_runtime(P_q: float, T_quantum: float, T_classical: float) -> float:
    """E[T] = P * Tq + (1 - P) * Tc"""
    return P_q * T_quantum + (1.0 - P_q) * T_classical


def circuit_profile(circuit: Circuit, device: DeviceModel, eps_q: float = 0.0) -> OperatorProfile:
    schedule = schedule_layers(circuit, device)
    t_q = estimate_time(schedule, device)
    # deep noisy circuits underflow to zero
    p_q = max(estimate_success(schedule, device), 1e-300)
    return OperatorProfile(t_q=max(t_q, 1e-9), p_q=p_q, eps_q=eps_q)


# Classical baseline

def _row_count(node: PlanNode, catalog) -> int:
    scan = next((n for n in node.walk() if n.op == OpKind.SCAN), None)
    if scan is None or scan.table is None:
        return 0
    return catalog.definition(scan.table).row_count


def classical_cost(node: PlanNode, catalog, constants: Optional[CostConstants] = None) -> float:
    """Tuple evaluations of the textbook realization times c_tuple"""
    constants = constants or settings.cost
    if node.op in (OpKind.EQUI_JOIN, OpKind.NONEQUI_JOIN, OpKind.SIM_JOIN):
        outer, inner = (_row_count(child, catalog) for child in node.children[:2])
        return float(outer * inner) * constants.c_tuple_ns
    if node.op == OpKind.EXISTS and node.subqueries:
        return float(_row_count(node.subqueries[0], catalog)) * constants.c_tuple_ns
    return float(_row_count(node, catalog)) * constants.c_tuple_ns


# Large-N projection from the symbolic depths

def _projected_depth(op: str, N: int, M: int, b: int, d: int, eps: float,
                     depth_model: DepthModel, conjuncts: int) -> Tuple[float, int]:
    """Gate-layer depth of one circuit call and the number of calls per shot batch"""
    n = max(1, math.ceil(math.log2(max(2, N))))
    dm = depth_model
    ratio = math.sqrt(N / max(1, M))
    if op in ("filter", "sample"):
        return (dm.d_orc(n, conjuncts) + dm.d_diff(n)) * ratio, 1
    if op == "exists":
        return (dm.d_orc(n, conjuncts) + dm.d_diff(n)) * math.sqrt(N), 1
    if op == "equi_join":
        return (dm.d_idx(n) + dm.d_key(b) + dm.d_diff(n)) * ratio, 1
    if op == "nonequi_join":
        return (dm.d_cmp(b) + dm.d_diff(n)) * ratio, 1
    if op == "sim_join":
        return 2 * dm.d_prep(d) + dm.q(d), N
    if op in ("MIN", "MAX"):
        return (dm.d_load(b) + dm.d_cmp(b) + dm.d_diff(n)) * math.sqrt(N), 1
    if op == "COUNT":
        return (dm.d_orc(n, conjuncts) + dm.d_diff(n)) / eps, 1
    if op in ("SUM", "AVG"):
        return (dm.d_load(b) + dm.d_rot() + dm.d_diff(n)) / eps, 1
    raise UnknownOperator(f"no depth formula for operator {op!r}")


def project_depth(op: str, N: int, M: int = 1, b: int = 16, d: int = 8, eps: float = 0.01,
                  depth_model: Optional[DepthModel] = None, conjuncts: int = 1) -> float:
    depth, _ = _projected_depth(op, N, M, b, d, eps, depth_model or settings.depth_model, conjuncts)
    return depth


def _layer_time(device: DeviceModel, constants: CostConstants) -> float:
    if constants.layer_time_ns is not None:
        return constants.layer_time_ns
    return device.mean_gate_time() + device.t_ctrl


def project_quantum_cost(op: str, N: int, M: int = 1, b: int = 16, d: int = 8, eps: float = 0.01,
                         depth_model: Optional[DepthModel] = None, device: Optional[DeviceModel] = None,
                         constants: Optional[CostConstants] = None, outer: int = 1,
                         conjuncts: int = 1) -> float:
    """Projected T_q in ns: shots * (depth * layer time + readout) per call.

    outer multiplies the calls for joins (one probe per outer row).
    """
    device = device or DeviceModel()
    constants = constants or settings.cost
    depth, calls = _projected_depth(op, N, M, b, d, eps, depth_model or settings.depth_model, conjuncts)
    readout = constants.readout_ns if constants.readout_ns is not None else device.t_readout
    per_call = depth * _layer_time(device, constants) + readout
    return constants.shots * per_call * calls * max(1, outer)


def project_success(op: str, N: int, M: int = 1, b: int = 16, d: int = 8, eps: float = 0.01,
                    depth_model: Optional[DepthModel] = None, device: Optional[DeviceModel] = None,
                    constants: Optional[CostConstants] = None, conjuncts: int = 1) -> float:
    """Per-call success with every layer charged the mean gate error"""
    device = device or DeviceModel()
    constants = constants or settings.cost
    depth, _ = _projected_depth(op, N, M, b, d, eps, depth_model or settings.depth_model, conjuncts)
    errors = list(device.gate_errors.values())
    eps_layer = sum(errors) / len(errors) if errors else 0.0
    log_p = depth * (math.log1p(-eps_layer) - _layer_time(device, constants) / device.t2_eff)
    return max(math.exp(log_p), 1e-300)


# Node profiles on the desk-scale circuits

class QuantumEstimate(BaseModel):
    """Profile of one circuit call plus the whole-operator latency"""
    profile: OperatorProfile
    total_ns: float
    transfer_ns: float = 0.0
    reconcile_ns: float = 0.0


def _transfer_ns(node: PlanNode, constants: CostConstants) -> float:
    rows = node.artifacts.get("rows", 0)
    bits = node.artifacts.get("load_bits", 0)
    return constants.t_load_ns * rows * bits


def _counting_circuit(oracle, phase_bits: int, device: DeviceModel) -> Circuit:
    return build_phase_estimation_circuit(oracle.n, uniform_superposition_gates(range(oracle.n)),
                                          [oracle.fused_gate(device)], phase_bits)


def operator_profile(node: PlanNode, device: DeviceModel,
                     constants: Optional[CostConstants] = None) -> QuantumEstimate:
    """Price the compiled artifacts of a quantum-bound node.

    P_q is the hardware success of one circuit call. Total latency covers
    every shot, counting, QROM transfer and reconciliation of the hits.
    """
    constants = constants or settings.cost
    art = node.artifacts
    shots = node.shots or constants.shots
    readout = constants.readout_ns if constants.readout_ns is not None else device.t_readout
    transfer = _transfer_ns(node, constants)
    key = art.get("kind")

    if key in ("filter", "sample", "exists", "equi_join", "nonequi_join", "MIN", "MAX"):
        oracle = art["oracle"]
        k = art.get("k", 1)
        grover = circuit_profile(build_grover_circuit(oracle.fused_gate(device), oracle.n, k), device)
        counting = circuit_profile(_counting_circuit(oracle, art.get("phase_bits", settings.counting_phase_bits),
                                                     device), device)
        batch = shots * (counting.t_q + readout) + shots * (grover.t_q + readout)
        if key in ("filter", "sample", "exists"):
            calls = 1
        elif key in ("MIN", "MAX"):
            calls = MIN_REPETITIONS * art.get("steps", 1)
        else:
            calls = max(1, art.get("outer", 1))
        reconcile = calls * min(shots, oracle.N) * constants.c_tuple_ns
        eps_q = 0.0
        profile = grover.model_copy(update={"p_q": grover.p_q * counting.p_q, "eps_q": eps_q})
        total = calls * batch + transfer + reconcile
    elif key in ("SUM", "AVG", "COUNT"):
        phase_bits = art.get("phase_bits", settings.aggregate_phase_bits)
        A: Circuit = art["state_prep"]
        circuit = build_phase_estimation_circuit(A.n_qubits, list(A.gates), art["s_chi"], phase_bits)
        profile = circuit_profile(circuit, device, eps_q=art.get("bound", ae_error_bound(phase_bits)))
        reconcile = 0.0
        total = shots * (profile.t_q + readout) + transfer
    elif key == "sim_join":
        x, y = art["pair"]
        profile = circuit_profile(build_swap_test(x, y), device, eps_q=swap_test_error(shots))
        reconcile = 0.0
        total = art.get("pairs", 1) * shots * (profile.t_q + readout) + transfer
    else:
        raise UnknownOperator(f"no quantum realization priced for {key!r}")
    return QuantumEstimate(profile=profile, total_ns=total, transfer_ns=transfer, reconcile_ns=reconcile)


# Plan selection

def bind(node: PlanNode, policy: Policy) -> Binding:
    """Realization for one priced node under the policy"""
    if policy.realization == "quantum":
        return Binding.QUANTUM
    if policy.realization == "classical" or node.expected_ns is None or node.classical_ns is None:
        return Binding.CLASSICAL
    e_q, t_c = node.expected_ns, node.classical_ns
    if abs(e_q - t_c) <= policy.deferred_band * min(e_q, t_c):
        return Binding.DEFERRED
    return Binding.QUANTUM if e_q < t_c else Binding.CLASSICAL


def resolve_deferred(node: PlanNode, policy: Policy) -> Binding:
    """Bind a deferred node from the live backlog signal"""
    if node.expected_ns is None or node.classical_ns is None:
        return Binding.CLASSICAL
    if node.expected_ns + policy.queue_delay_ns < node.classical_ns:
        return Binding.QUANTUM
    return Binding.CLASSICAL


def plan(qir: PlanNode, catalog, device: DeviceModel, policy: Optional[Policy] = None,
         constants: Optional[CostConstants] = None, statement: str = "", seed: int = 0) -> HybridPlan:
    """Bind every eligible node of a physical plan to quantum, classical or deferred"""
    policy = policy or settings.policy()
    constants = constants or settings.cost
    for node in qir.walk():
        if not node.eligible:
            node.binding = Binding.CLASSICAL
            continue
        node.classical_ns = classical_cost(node, catalog, constants)
        if node.profile is None or node.quantum_ns is None:
            node.binding = Binding.CLASSICAL
            continue
        node.expected_ns = expected_runtime(node.profile.p_q, node.quantum_ns, node.classical_ns)
        node.binding = bind(node, policy)
        logger.info(f"[Optimizer] #{node.id} {node.op.value}: E[Tq]={node.expected_ns:.4g}ns "
                    f"Tc={node.classical_ns:.4g}ns -> {node.binding.value}")
    return HybridPlan(root=qir, statement=statement, device=device.name, policy=policy, seed=seed)


# Runtime adaptation

def adapt(feedback: RuntimeFeedback, profile: Optional[OperatorProfile] = None,
          policy: Optional[Policy] = None) -> Optional[AdaptationAction]:
    """Next action for a quantum node after one shot batch, None when it is on target"""
    policy = policy or settings.policy()
    if policy.latency_budget_ms is not None and feedback.elapsed_ms > policy.latency_budget_ms:
        return AdaptationAction(kind=AdaptationKind.FALLBACK)
    expected = feedback.expected_success
    if expected is None:
        expected = profile.p_q if profile is not None else 0.0
    if feedback.quality_ok and feedback.observed_success >= 0.5 * expected:
        return None
    if feedback.shot_factor * 2 <= policy.max_shot_factor:
        return AdaptationAction(kind=AdaptationKind.INCREASE_SHOTS, factor=2)
    if feedback.variant_available and not feedback.variant_active:
        return AdaptationAction(kind=AdaptationKind.SWITCH_VARIANT)
    return AdaptationAction(kind=AdaptationKind.FALLBACK)


def expected_round_success(N: int, M: int, k: int, profile: Optional[OperatorProfile]) -> float:
    """Analytic Grover success discounted by the hardware success of the circuit"""
    if M <= 0:
        return 0.0
    p_hw = profile.p_q if profile is not None else 1.0
    return analytic_success(N, min(M, N), k) * p_hw + (1.0 - p_hw) * M / N


# Crossover

class CrossoverRow(BaseModel):
    N: int
    classical_ns: float
    quantum_expected_ns: float
    chosen: str


class CrossoverReport(BaseModel):
    rows: List[CrossoverRow] = Field(default_factory=list)
    n_star: Optional[int] = None

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["N", "classical_ns", "quantum_expected_ns", "chosen"])
        for row in self.rows:
            writer.writerow([row.N, f"{row.classical_ns:.6g}", f"{row.quantum_expected_ns:.6g}", row.chosen])
        return buffer.getvalue()


def crossover_from_models(classical: Callable[[int], float], quantum: Callable[[int], float],
                          n_values: Iterable[int]) -> CrossoverReport:
    """Smallest N from which quantum stays cheaper through the end of the sweep"""
    rows = []
    for N in n_values:
        t_c, t_q = float(classical(N)), float(quantum(N))
        rows.append(CrossoverRow(N=N, classical_ns=t_c, quantum_expected_ns=t_q,
                                 chosen="quantum" if t_q < t_c else "classical"))
    n_star = None
    for row in reversed(rows):
        if row.chosen != "quantum":
            break
        n_star = row.N
    if n_star is None:
        raise NoCrossover(rows=rows)
    return CrossoverReport(rows=rows, n_star=n_star)


MRule = Union[str, Callable[[int], int]]


def match_rule(rule: MRule) -> Callable[[int], int]:
    """'constant:k' or 'fraction:f' into a function of N"""
    if callable(rule):
        return rule
    kind, _, value = rule.partition(":")
    if kind == "constant":
        m = int(value or 1)
        return lambda N: min(N, m)
    if kind == "fraction":
        f = float(value)
        return lambda N: max(1, int(N * f))
    raise ValueError(f"unknown match rule {rule!r}")


def powers_of_two(n_min: int, n_max: int) -> List[int]:
    lo = max(0, math.ceil(math.log2(max(1, n_min))))
    hi = math.floor(math.log2(max(1, n_max)))
    return [1 << e for e in range(lo, hi + 1)]


def crossover_analysis(device: DeviceModel, depth_model: Optional[DepthModel] = None,
                       constants: Optional[CostConstants] = None, n_min: int = 1 << 4,
                       n_max: int = 1 << 40, m_rule: MRule = "constant:1", op: str = "filter",
                       b: int = 16, include_transfer: bool = False) -> CrossoverReport:
    """Sweep N over powers of two comparing N * c_tuple with E[T] of the projected quantum path"""
    depth_model = depth_model or settings.depth_model
    constants = constants or settings.cost
    matches = match_rule(m_rule)

    def classical(N: int) -> float:
        return N * constants.c_tuple_ns

    def quantum(N: int) -> float:
        M = matches(N)
        t_q = project_quantum_cost(op, N, M, b, depth_model=depth_model, device=device, constants=constants)
        if include_transfer:
            t_q += constants.t_load_ns * N * b
        p_q = project_success(op, N, M, b, depth_model=depth_model, device=device, constants=constants)
        return expected_runtime(p_q, t_q, classical(N))

    report = crossover_from_models(classical, quantum, powers_of_two(n_min, n_max))
    logger.info(f"[Optimizer] crossover at N={report.n_star} (2^{int(math.log2(report.n_star))})")
    return report


# Calibration

class Measurement(BaseModel):
    """One small-N run: classical time and the quantum circuit's layers and time"""
    N: int
    classical_ns: float
    layers: float
    quantum_ns: float


class Calibration(BaseModel):
    c_tuple_ns: float
    layer_time_ns: float
    classical_deviation: List[float] = Field(default_factory=list)
    quantum_deviation: List[float] = Field(default_factory=list)

    def constants(self, base: Optional[CostConstants] = None) -> CostConstants:
        base = base or settings.cost
        return base.model_copy(update={"c_tuple_ns": self.c_tuple_ns, "layer_time_ns": self.layer_time_ns})

    @property
    def max_deviation(self) -> float:
        return max([abs(v) for v in self.classical_deviation + self.quantum_deviation], default=0.0)


def _fit_through_origin(x: Sequence[float], y: Sequence[float]) -> float:
    X = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    Y = np.asarray(y, dtype=np.float64)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return float(coef[0])


def _relative(fitted: float, x: Sequence[float], y: Sequence[float]) -> List[float]:
    return [(fitted * xi - yi) / yi if yi else 0.0 for xi, yi in zip(x, y)]


def calibrate(measurements: Sequence[Measurement]) -> Calibration:
    """Least-squares c_tuple (time ~ N) and per-layer time (time ~ layers)"""
    if not measurements:
        raise ValueError("calibration needs at least one measurement")
    sizes = [m.N for m in measurements]
    c_times = [m.classical_ns for m in measurements]
    layers = [m.layers for m in measurements]
    q_times = [m.quantum_ns for m in measurements]
    c_tuple = _fit_through_origin(sizes, c_times)
    layer_time = _fit_through_origin(layers, q_times)
    logger.info(f"[Optimizer] calibrated c_tuple={c_tuple:.4g}ns layer={layer_time:.4g}ns")
    return Calibration(
        c_tuple_ns=c_tuple,
        layer_time_ns=layer_time,
        classical_deviation=_relative(c_tuple, sizes, c_times),
        quantum_deviation=_relative(layer_time, layers, q_times),
    )


