"""
Grover Search

Amplitude amplification over the row-identifier register:
1. Prepare |s> with H on every rid qubit
2. Apply G = D O_f k times, O_f being the fused predicate oracle
3. Measure the rid register; hits are handed to classical reconciliation

When the match count is unknown it is estimated with quantum counting first;
an inconclusive count switches to the Boyer-Brassard exponential schedule.
"""

import logging
import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..config import DEFAULT_SHOTS, settings
from ..errors import CapacityExceeded, InvalidCounts, ZeroMatches
from ..models import DeviceModel, NoiseModel
from .estimation import quantum_count, uniform_superposition_gates, zero_reflection
from .oracles import PredicateOracle
from .simulator import Circuit, GateInstance, StatevectorSimulator, h, simulator

logger = logging.getLogger(__name__)

BOYER_BRASSARD_GROWTH = 6 / 5


class GroverRun(BaseModel):
    """Outcome of one Grover sampling round"""
    k: int
    shots: int
    raw_hits: List[int] = Field(default_factory=list)
    success_estimate: float = 0.0
    expected_success: Optional[float] = None
    m_estimate: Optional[int] = None
    schedule: str = "fixed"
    iterations_spent: int = 0

    def distinct_hits(self) -> List[int]:
        return sorted(set(self.raw_hits))


def build_uniform_superposition(n: int, cap: int = settings.qubit_cap) -> Circuit:
    """H on every qubit: all 2^n amplitudes equal 2^(-n/2)"""
    if n < 1 or n > cap:
        raise CapacityExceeded(f"superposition over {n} qubits outside 1..{cap}")
    circuit = Circuit(n_qubits=n, registers={"rid": list(range(n))})
    circuit.extend(uniform_superposition_gates(range(n)))
    return circuit


def build_diffusion(n: int) -> Circuit:
    """H^n . (phase flip on |0...0>) . H^n, equal to -(2|s><s| - I)"""
    if n < 1:
        raise InvalidCounts("diffusion needs at least one qubit")
    qubits = list(range(n))
    circuit = Circuit(n_qubits=n)
    circuit.extend(h(q) for q in qubits)
    circuit.extend(zero_reflection(qubits))
    circuit.extend(h(q) for q in qubits)
    return circuit


def grover_iterations(N: int, M: int) -> int:
    """max(1, floor(pi/4 * sqrt(N/M)))"""
    if N < 1 or N & (N - 1):
        raise InvalidCounts(f"N={N} is not a power of two")
    if M < 1 or M > N:
        raise InvalidCounts(f"M={M} outside 1..{N}")
    return max(1, math.floor(math.pi / 4 * math.sqrt(N / M)))


def analytic_success(N: int, M: int, k: int) -> float:
    """sin^2((2k+1) theta) with theta = arcsin(sqrt(M/N))"""
    theta = math.asin(math.sqrt(M / N))
    return math.sin((2 * k + 1) * theta) ** 2


def filter_iterations(N: int, M: int) -> int:
    """Iterations for a filter round: the formula's k, or 0 when plain sampling hits more often.

    Past M/N = 1/2 one iteration over-rotates (M/N = 3/4 lands on no marked
    row at all) while an unamplified shot is marked with probability M/N.
    """
    k = grover_iterations(N, M)
    return 0 if analytic_success(N, M, k) < M / N else k


def build_grover_circuit(oracle_gate: GateInstance, n: int, k: int) -> Circuit:
    circuit = build_uniform_superposition(n, cap=max(n, settings.qubit_cap))
    diffusion = build_diffusion(n).gates
    for _ in range(k):
        circuit.add(oracle_gate)
        circuit.extend(diffusion)
    circuit.measure(range(n))
    return circuit


def _run(oracle: PredicateOracle, k: int, shots: int, noise: Optional[NoiseModel],
         device: Optional[DeviceModel], sim: StatevectorSimulator) -> GroverRun:
    circuit = build_grover_circuit(oracle.fused_gate(device), oracle.n, k)
    result = sim.sample(circuit, shots=shots, noise=noise)
    hits = result.outcomes()
    marked = oracle.phase_diagonal() < 0
    good = sum(count for rid, count in result.int_counts().items() if marked[rid])
    return GroverRun(k=k, shots=shots, raw_hits=hits, success_estimate=good / shots, iterations_spent=k)


def counting_noise(noise: Optional[NoiseModel]) -> Optional[NoiseModel]:
    if noise is None or not noise.enabled:
        return noise
    return noise.model_copy(update={
        "max_trajectories": min(noise.max_trajectories, settings.counting_trajectories),
        "seed": noise.seed + 7919,
    })


def boyer_brassard_search(oracle: PredicateOracle, shots: int = DEFAULT_SHOTS,
                          noise: Optional[NoiseModel] = None, device: Optional[DeviceModel] = None,
                          sim: StatevectorSimulator = simulator,
                          max_iterations: Optional[int] = None) -> GroverRun:
    """Grover with unknown M: random k below a geometrically growing bound.

    Every attempt is charged max(1, k) iterations and k is clipped so the
    total never passes max_iterations (ceil(22.5 sqrt N) by default).
    """
    noise = noise or NoiseModel.noiseless()
    N = oracle.N
    cap = max_iterations if max_iterations is not None else math.ceil(22.5 * math.sqrt(N))
    cap = max(1, cap)
    rng = np.random.default_rng(noise.seed)
    bound = 1.0
    spent = 0
    attempt = 0
    while True:
        k = min(int(rng.integers(0, max(1, math.ceil(bound)))), cap - spent)
        run = _run(oracle, k, shots, noise.with_seed(noise.seed + attempt), device, sim)
        spent += max(1, k)
        attempt += 1
        if run.success_estimate > 0 or spent >= cap:
            break
        bound = min(bound * BOYER_BRASSARD_GROWTH, math.sqrt(N))
    logger.debug(f"[Grover] exponential schedule: {attempt} attempts, {spent} iterations")
    return run.model_copy(update={"schedule": "boyer-brassard", "iterations_spent": spent})


def grover_filter(oracle: PredicateOracle, N: Optional[int] = None, M_est: Optional[int] = None,
                  shots: int = DEFAULT_SHOTS, noise: Optional[NoiseModel] = None,
                  device: Optional[DeviceModel] = None, sim: StatevectorSimulator = simulator,
                  phase_bits: int = settings.counting_phase_bits,
                  iterations: Optional[int] = None) -> GroverRun:
    """One Grover sampling round over the oracle's rid register.

    iterations overrides the formula (the shallow variant uses 0).
    """
    if N is not None and N != oracle.N:
        raise InvalidCounts(f"N={N} does not match the oracle's {oracle.N} rids")
    N = oracle.N
    m_used = M_est
    if M_est is not None and M_est <= 0:
        raise ZeroMatches(estimate=0)

    if iterations is not None:
        k = iterations
    else:
        if m_used is None:
            count = quantum_count(oracle, phase_bits, shots, counting_noise(noise), device, sim)
            if count.m_hat == 0:
                raise ZeroMatches(estimate=0)
            if not count.conclusive:
                logger.warning(f"[Grover] counting inconclusive (modal frequency {count.modal_frequency:.2f})")
                run = boyer_brassard_search(oracle, shots, noise, device, sim)
                return run.model_copy(update={"m_estimate": count.m_hat})
            m_used = min(count.m_hat, N)
        k = filter_iterations(N, m_used)

    run = _run(oracle, k, shots, noise, device, sim)
    expected = analytic_success(N, m_used, k) if m_used else None
    return run.model_copy(update={"expected_success": expected, "m_estimate": m_used})


def grover_sample(oracle: PredicateOracle, k: int, shots: int = DEFAULT_SHOTS,
                  noise: Optional[NoiseModel] = None, device: Optional[DeviceModel] = None,
                  sim: StatevectorSimulator = simulator, M_est: Optional[int] = None,
                  iterations: Optional[int] = None) -> List[int]:
    """Up to k distinct marked rids drawn through Grover-filtered sampling"""
    run = grover_filter(oracle, M_est=M_est, shots=shots, noise=noise, device=device, sim=sim,
                        iterations=iterations)
    seen: List[int] = []
    rng = np.random.default_rng((noise.seed if noise else 0) + 104729)
    for rid in rng.permutation(np.asarray(run.raw_hits, dtype=np.int64)):
        rid = int(rid)
        if rid not in seen and oracle.evaluate(rid):
            seen.append(rid)
            if len(seen) == k:
                break
    return seen


def equijoin_probe(outer_key, inner_oracle: PredicateOracle, shots: int = DEFAULT_SHOTS,
                   noise: Optional[NoiseModel] = None, device: Optional[DeviceModel] = None,
                   sim: StatevectorSimulator = simulator, M_est: Optional[int] = None,
                   iterations: Optional[int] = None) -> GroverRun:
    """One Grover round over the inner table for one outer row.

    inner_oracle is compiled from Eq(join column, outer_key). A zero count
    gives an empty run instead of ZeroMatches.
    """
    try:
        return grover_filter(inner_oracle, M_est=M_est, shots=shots, noise=noise, device=device,
                             sim=sim, iterations=iterations)
    except ZeroMatches:
        logger.debug(f"[Grover] probe for key {outer_key!r}: no matches")
        return GroverRun(k=0, shots=0, m_estimate=0)


def nonequi_probe(outer_key, inner_oracle: PredicateOracle, shots: int = DEFAULT_SHOTS,
                  noise: Optional[NoiseModel] = None, device: Optional[DeviceModel] = None,
                  sim: StatevectorSimulator = simulator, M_est: Optional[int] = None,
                  iterations: Optional[int] = None) -> GroverRun:
    """Same contract as equijoin_probe with a comparison (Range) oracle"""
    return equijoin_probe(outer_key, inner_oracle, shots, noise, device, sim, M_est, iterations)
