"""
Durr-Hoyer minimum finding.

Threshold search over the rid register: keep an incumbent y, Grover-search
for rows with v(x) < v(y), move to the best verified improver, stop when
counting sees no improver or ceil(22.5 sqrt N) Grover iterations are spent.
Independent repetitions keep the best incumbent.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..config import DEFAULT_SHOTS, settings
from ..models import DeviceModel, NoiseModel
from .estimation import quantum_count
from .grover import boyer_brassard_search, counting_noise, filter_iterations, grover_filter
from .oracles import QromLoader, comparator_oracle, compile_oracle
from .predicates import Predicate, RidBelow
from .simulator import StatevectorSimulator, simulator

logger = logging.getLogger(__name__)

DEFAULT_REPETITIONS = 3


class MinimumResult(BaseModel):
    min_rid: Optional[int] = None
    min_value: Optional[int] = None
    trail: List[int] = Field(default_factory=list)
    runs: List[List[int]] = Field(default_factory=list)
    iterations: int = 0


def _single_run(loader: QromLoader, column: str, extra: Optional[Predicate], start: int,
                shots: int, noise: NoiseModel, device: Optional[DeviceModel],
                sim: StatevectorSimulator, phase_bits: int) -> Tuple[List[int], int]:
    N = loader.N
    budget = math.ceil(22.5 * math.sqrt(N))
    incumbent = start
    trail = [start]
    spent = 0
    step = 0
    while spent < budget:
        threshold = loader.value(column, incumbent)
        oracle = comparator_oracle(loader, column, threshold, extra)
        round_noise = noise.with_seed(noise.seed + 31 * step)
        count = quantum_count(oracle, phase_bits, shots, counting_noise(round_noise), device, sim)
        if count.m_hat == 0:
            break
        if count.conclusive:
            m_hat = min(count.m_hat, N)
            run = grover_filter(oracle, M_est=m_hat, shots=shots, noise=round_noise, device=device, sim=sim,
                                iterations=min(filter_iterations(N, m_hat), budget - spent))
        else:
            run = boyer_brassard_search(oracle, shots, round_noise, device, sim,
                                        max_iterations=budget - spent)
        spent += max(1, run.iterations_spent)
        step += 1
        improvers = [rid for rid in set(run.raw_hits) if oracle.evaluate(rid)]
        if improvers:
            incumbent = min(improvers, key=lambda rid: (loader.value(column, rid), rid))
            trail.append(incumbent)
    return trail, spent


def durr_hoyer_min(values: Optional[Sequence[int]] = None, rng_seed: int = 0, shots: int = DEFAULT_SHOTS,
                   noise: Optional[NoiseModel] = None, device: Optional[DeviceModel] = None,
                   sim: StatevectorSimulator = simulator, repetitions: int = DEFAULT_REPETITIONS,
                   loader: Optional[QromLoader] = None, column: str = "v",
                   extra: Optional[Predicate] = None,
                   phase_bits: int = settings.counting_phase_bits) -> MinimumResult:
    """Minimum of a column over the rows satisfying extra (all rows if None).

    Either pass plain unsigned values or a loader holding `column` and every
    column extra references.
    """
    if loader is None:
        loader = QromLoader.from_values(values, name=column)
    noise = noise or NoiseModel.noiseless(seed=rng_seed)
    rng = np.random.default_rng(rng_seed)

    eligible = compile_oracle(extra or RidBelow(limit=loader.n_real), loader).marked()
    if len(eligible) == 0:
        return MinimumResult()

    result = MinimumResult()
    best: Optional[int] = None
    for rep in range(repetitions):
        start = int(rng.choice(eligible))
        trail, spent = _single_run(loader, column, extra, start, shots,
                                   noise.with_seed(noise.seed + 1009 * rep), device, sim, phase_bits)
        result.runs.append(trail)
        result.iterations += spent
        final = trail[-1]
        if best is None or (loader.value(column, final), final) < (loader.value(column, best), best):
            best = final
    for trail in result.runs:
        for rid in trail:
            if rid not in result.trail:
                result.trail.append(rid)
    result.min_rid = best
    result.min_value = loader.value(column, best)
    logger.debug(f"[Grover] minimum search: rid {best} value {result.min_value} after {result.iterations} iterations")
    return result
