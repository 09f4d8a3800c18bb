"""
Amplitude Estimation

Canonical phase-estimation amplitude estimation and the operators built on it:
1. amplitude_estimate: estimate a = Pr[good] for a state-preparation circuit A
2. quantum_count: estimate the number of rows an oracle marks
3. aggregate_sum / aggregate_avg / aggregate_count: value loading through
   controlled rotations on a Good qubit, then estimation
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from ..config import DEFAULT_SHOTS, settings
from ..errors import CapacityExceeded, ValueOutOfBounds
from ..models import DeviceModel, NoiseModel
from .simulator import (
    Circuit,
    GateInstance,
    StatevectorSimulator,
    build_inverse_qft,
    h,
    mcz,
    ry,
    simulator,
    ucry,
    x,
    z,
)

logger = logging.getLogger(__name__)

MAX_PHASE_BITS = 10
# Modal frequency below which a count is treated as inconclusive
CONCLUSIVE_FREQUENCY = 0.3


class AmplitudeEstimate(BaseModel):
    a_hat: float
    phase_bits: int
    shots: int
    modal_outcome: int = 0
    modal_frequency: float = 1.0

    @property
    def error_bound(self) -> float:
        return ae_error_bound(self.phase_bits)


class CountEstimate(BaseModel):
    m_hat: int
    a_hat: float
    N: int
    phase_bits: int
    shots: int
    modal_frequency: float

    @property
    def conclusive(self) -> bool:
        return self.modal_frequency >= CONCLUSIVE_FREQUENCY

    @property
    def error_bound(self) -> float:
        return self.N * ae_error_bound(self.phase_bits)


class AggregateEstimate(BaseModel):
    estimate: Optional[float]
    error_bound: float
    a_hat: float
    phase_bits: int
    shots: int
    rows: int


def ae_error_bound(phase_bits: int) -> float:
    """|a_hat - a| bound holding with probability >= 8/pi^2"""
    return math.pi / (1 << phase_bits) + math.pi ** 2 / (1 << (2 * phase_bits))


def zero_reflection(qubits: Sequence[int]) -> List[GateInstance]:
    """Phase -1 on |0...0> of the given qubits, identity elsewhere"""
    target, others = qubits[0], qubits[1:]
    return [x(target), mcz(target, [(q, 0) for q in others]), x(target)]


def uniform_superposition_gates(qubits: Sequence[int]) -> List[GateInstance]:
    return [h(q) for q in qubits]


def build_phase_estimation_circuit(work: int, a_gates: List[GateInstance], s_chi: List[GateInstance],
                                   phase_bits: int) -> Circuit:
    """Work register prepared by A, phase register reading out the eigenphase of Q"""
    if phase_bits < 1 or phase_bits > MAX_PHASE_BITS:
        raise CapacityExceeded(f"phase_bits must lie in 1..{MAX_PHASE_BITS}, got {phase_bits}")
    width = work + phase_bits
    a_inv = [g.inverse() for g in reversed(a_gates)]
    # Q = -A S0 A^-1 S_chi, gates listed in application order
    grover_op = s_chi + a_inv + zero_reflection(list(range(work))) + a_gates
    phase_register = list(range(work, width))

    circuit = Circuit(n_qubits=width, registers={"work": list(range(work)), "phase": phase_register})
    circuit.extend(a_gates)
    circuit.extend(h(q) for q in phase_register)
    for j, control in enumerate(phase_register):
        for _ in range(1 << j):
            circuit.extend(g.with_control(control) for g in grover_op)
    # controlled global -1 of Q survives only on the single-power qubit
    circuit.add(z(phase_register[0]))
    circuit.compose(build_inverse_qft(phase_bits), phase_register)
    circuit.measure(phase_register)
    return circuit


def _phase_estimation(work: int, a_gates: List[GateInstance], s_chi: List[GateInstance],
                      phase_bits: int, shots: int, noise: Optional[NoiseModel],
                      sim: StatevectorSimulator) -> AmplitudeEstimate:
    width = work + phase_bits
    if width > sim.qubit_cap:
        raise CapacityExceeded(f"amplitude estimation needs {width} qubits, cap is {sim.qubit_cap}")
    circuit = build_phase_estimation_circuit(work, a_gates, s_chi, phase_bits)
    result = sim.sample(circuit, shots=shots, noise=noise)
    # y and 2^q - y encode the same amplitude
    size = 1 << phase_bits
    folded: Dict[int, int] = {}
    for outcome, hits in result.int_counts().items():
        key = min(outcome, size - outcome)
        folded[key] = folded.get(key, 0) + hits
    y, count = max(folded.items(), key=lambda item: (item[1], -item[0]))
    a_hat = math.sin(math.pi * y / size) ** 2
    # clean up float noise at the fixed points
    a_hat = min(1.0, max(0.0, round(a_hat, 15)))
    return AmplitudeEstimate(a_hat=a_hat, phase_bits=phase_bits, shots=shots,
                             modal_outcome=y, modal_frequency=count / shots)


def amplitude_estimate(A: Circuit, good_qubit: int, phase_bits: int = settings.aggregate_phase_bits,
                       shots: int = DEFAULT_SHOTS, noise: Optional[NoiseModel] = None,
                       sim: StatevectorSimulator = simulator) -> AmplitudeEstimate:
    """Estimate Pr[good_qubit = 1] of the state A|0...0>"""
    A.validate()
    return _phase_estimation(A.n_qubits, list(A.gates), [z(good_qubit)], phase_bits, shots, noise, sim)


def quantum_count(oracle, phase_bits: int = settings.counting_phase_bits, shots: int = DEFAULT_SHOTS,
                  noise: Optional[NoiseModel] = None, device: Optional[DeviceModel] = None,
                  sim: StatevectorSimulator = simulator) -> CountEstimate:
    """Estimate how many rids the oracle marks: M_hat = round(N * a_hat)"""
    n = oracle.n
    a_gates = uniform_superposition_gates(range(n))
    estimate = _phase_estimation(n, a_gates, [oracle.fused_gate(device)], phase_bits, shots, noise, sim)
    m_hat = int(round(oracle.N * estimate.a_hat))
    logger.debug(f"[Grover] counting: y={estimate.modal_outcome} a={estimate.a_hat:.4f} "
                 f"M={m_hat} freq={estimate.modal_frequency:.2f}")
    return CountEstimate(m_hat=m_hat, a_hat=estimate.a_hat, N=oracle.N, phase_bits=phase_bits,
                         shots=shots, modal_frequency=estimate.modal_frequency)


# Sum-style aggregates

def _pad(values: Sequence[float]) -> Tuple[np.ndarray, int]:
    arr = np.asarray(values, dtype=np.float64)
    n = max(1, math.ceil(math.log2(max(1, len(arr)))))
    padded = np.zeros(1 << n)
    padded[:len(arr)] = arr
    return padded, n


def _rotation_angles(values: np.ndarray, v_max: float) -> np.ndarray:
    if v_max <= 0:
        raise ValueOutOfBounds(f"V_max must be positive, got {v_max}")
    tolerance = 1e-12 * v_max
    if values.min(initial=0.0) < -tolerance or values.max(initial=0.0) > v_max + tolerance:
        raise ValueOutOfBounds(f"values must lie in [0, {v_max}]")
    ratio = np.clip(values / v_max, 0.0, 1.0)
    return 2.0 * np.arcsin(np.sqrt(ratio))


def build_sum_state_prep(values: Sequence[float], V_max: float) -> Circuit:
    """A: (1/sqrt N) sum_x |x>(sqrt(1-v/V)|0> + sqrt(v/V)|1>), Good qubit = n"""
    arr = np.asarray(values, dtype=np.float64)
    n = int(round(math.log2(len(arr)))) if len(arr) else 0
    if len(arr) < 2 or 1 << n != len(arr):
        raise ValueOutOfBounds(f"value count {len(arr)} is not a power of two >= 2")
    angles = _rotation_angles(arr, V_max)
    circuit = Circuit(n_qubits=n + 1, registers={"rid": list(range(n)), "good": [n]})
    circuit.extend(uniform_superposition_gates(range(n)))
    for rid, theta in enumerate(angles):
        if theta:
            circuit.add(ry(n, float(theta), controls=[(q, (rid >> q) & 1) for q in range(n)]))
    return circuit


def fused_sum_state_prep(values: Sequence[float], V_max: float,
                         device: Optional[DeviceModel] = None) -> Circuit:
    """Same operator as build_sum_state_prep with the rotations as one multiplexed gate"""
    device = device or DeviceModel()
    arr = np.asarray(values, dtype=np.float64)
    n = int(round(math.log2(len(arr))))
    if len(arr) < 2 or 1 << n != len(arr):
        raise ValueOutOfBounds(f"value count {len(arr)} is not a power of two >= 2")
    angles = _rotation_angles(arr, V_max)
    rotations = int(np.count_nonzero(angles))
    t_rot = device.gate_durations.get("RY", 20.0) + device.t_ctrl
    eps_rot = device.gate_errors.get("RY", 0.0)
    circuit = Circuit(n_qubits=n + 1, registers={"rid": list(range(n)), "good": [n]})
    circuit.extend(uniform_superposition_gates(range(n)))
    circuit.add(ucry(n, list(range(n)), angles, duration=max(1.0, rotations * t_rot),
                     error_rate=1.0 - (1.0 - eps_rot) ** rotations, label="value rotations"))
    return circuit


class SumLoading(BaseModel):
    """State preparation of a masked, shifted sum and the constants to undo it"""
    circuit: Circuit
    n: int
    scale: float
    shift: float
    rows: int

    def bound(self, phase_bits: int) -> float:
        return self.scale * ae_error_bound(phase_bits)


def prepare_sum(values: Sequence[float], V_max: Optional[float] = None,
                mask: Optional[Sequence[bool]] = None, shift: Optional[float] = None,
                device: Optional[DeviceModel] = None) -> SumLoading:
    """Negative values are shifted by `shift` (default min(0, min(values)))
    into [0, V_max - shift]; unselected rows load 0."""
    arr = np.asarray(values, dtype=np.float64)
    selected = np.ones(len(arr), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if shift is None:
        shift = min(0.0, float(arr.min())) if len(arr) else 0.0
    top = float(arr.max()) if len(arr) else 0.0
    v_max = (V_max if V_max is not None else top) - shift
    if v_max <= 0:
        v_max = 1.0
    loaded = np.where(selected, arr - shift, 0.0)
    padded, n = _pad(loaded)
    return SumLoading(circuit=fused_sum_state_prep(padded, v_max, device), n=n,
                      scale=(1 << n) * v_max, shift=shift, rows=int(selected.sum()))


def aggregate_sum(values: Sequence[float], V_max: Optional[float] = None,
                  phase_bits: int = settings.aggregate_phase_bits, shots: int = DEFAULT_SHOTS,
                  noise: Optional[NoiseModel] = None, sim: StatevectorSimulator = simulator,
                  mask: Optional[Sequence[bool]] = None, shift: Optional[float] = None,
                  device: Optional[DeviceModel] = None) -> AggregateEstimate:
    """Estimate sum(values[mask]) with additive bound N*V*(pi/2^q + pi^2/4^q)"""
    loading = prepare_sum(values, V_max, mask, shift, device)
    estimate = amplitude_estimate(loading.circuit, loading.n, phase_bits, shots, noise, sim)
    total = loading.scale * estimate.a_hat + loading.rows * loading.shift
    return AggregateEstimate(estimate=total, error_bound=loading.bound(phase_bits),
                             a_hat=estimate.a_hat, phase_bits=phase_bits, shots=shots, rows=loading.rows)


def aggregate_avg(values: Sequence[float], V_max: Optional[float] = None,
                  phase_bits: int = settings.aggregate_phase_bits, shots: int = DEFAULT_SHOTS,
                  noise: Optional[NoiseModel] = None, sim: StatevectorSimulator = simulator,
                  mask: Optional[Sequence[bool]] = None, shift: Optional[float] = None,
                  device: Optional[DeviceModel] = None) -> AggregateEstimate:
    total = aggregate_sum(values, V_max, phase_bits, shots, noise, sim, mask, shift, device)
    if total.rows == 0:
        return total.model_copy(update={"estimate": None})
    return total.model_copy(update={"estimate": total.estimate / total.rows,
                                    "error_bound": total.error_bound / total.rows})


def aggregate_count(flags: Sequence[bool], phase_bits: int = settings.aggregate_phase_bits,
                    shots: int = DEFAULT_SHOTS, noise: Optional[NoiseModel] = None,
                    sim: StatevectorSimulator = simulator,
                    device: Optional[DeviceModel] = None) -> AggregateEstimate:
    """COUNT via indicator values with V_max = 1"""
    indicators = np.asarray(flags, dtype=np.float64)
    result = aggregate_sum(indicators, 1.0, phase_bits, shots, noise, sim, shift=0.0, device=device)
    return result.model_copy(update={"rows": int(indicators.sum())})
