import math

import numpy as np
import pytest

from qutedb.errors import CapacityExceeded, ValueOutOfBounds
from qutedb.models import NoiseModel
from qutedb.services.estimation import (
    ae_error_bound,
    aggregate_avg,
    aggregate_count,
    aggregate_sum,
    amplitude_estimate,
    build_phase_estimation_circuit,
    build_sum_state_prep,
    fused_sum_state_prep,
    quantum_count,
)
from qutedb.services.oracles import QromLoader, compile_oracle
from qutedb.services.predicates import Range
from qutedb.services.simulator import Circuit, ry, simulator


def test_error_bound_formula():
    assert ae_error_bound(6) == pytest.approx(math.pi / 64 + math.pi ** 2 / 4096)


@pytest.mark.slow
def test_amplitude_estimate_within_bound_in_most_trials(rng):
    hits = 0
    for trial in range(100):
        a = float(rng.uniform(0.02, 0.98))
        circuit = Circuit(n_qubits=1).add(ry(0, 2 * math.asin(math.sqrt(a))))
        estimate = amplitude_estimate(circuit, good_qubit=0, phase_bits=6, shots=200)
        if abs(estimate.a_hat - a) <= estimate.error_bound:
            hits += 1
    assert hits >= 81


@pytest.mark.slow
def test_sum_of_random_values_within_bound_in_most_trials(rng):
    N, V_max = 8, 15
    hits = 0
    for trial in range(100):
        values = rng.integers(0, V_max + 1, size=N)
        result = aggregate_sum(values, V_max=V_max, phase_bits=6, shots=200, noise=NoiseModel.noiseless(seed=trial))
        assert result.error_bound == pytest.approx(N * V_max * (math.pi / 64 + math.pi ** 2 / 4096))
        hits += abs(result.estimate - int(values.sum())) <= result.error_bound
    assert hits >= 81


def test_phase_bits_are_capped():
    with pytest.raises(CapacityExceeded):
        build_phase_estimation_circuit(1, [], [], 11)


@pytest.mark.parametrize("M", [0, 1, 3, 8])
def test_quantum_count_close_to_true_count(M):
    values = list(range(16))
    oracle = compile_oracle(Range(column="v", high=M, high_open=True) if M else Range(column="v", low=16),
                            QromLoader.from_values(values, bits=5))
    count = quantum_count(oracle, phase_bits=6, shots=500)
    assert abs(count.m_hat - M) <= count.error_bound
    if M == 0:
        assert count.m_hat == 0


def test_fused_state_prep_matches_gate_level_circuit():
    values = [0.0, 1.0, 2.5, 4.0]
    exact = simulator.run_statevector(build_sum_state_prep(values, 4.0))
    fused = simulator.run_statevector(fused_sum_state_prep(values, 4.0))
    assert np.allclose(exact.amps, fused.amps)


def test_values_above_bound_rejected():
    with pytest.raises(ValueOutOfBounds):
        build_sum_state_prep([1.0, 5.0], 4.0)


def test_sum_within_bound():
    values = [3, 7, 1, 0, 6, 2, 5, 4]
    result = aggregate_sum(values, V_max=7, shots=500)
    assert abs(result.estimate - sum(values)) <= result.error_bound
    assert result.rows == 8


def test_masked_sum_and_average():
    values = [10, 20, 30, 40]
    mask = [True, False, True, False]
    total = aggregate_sum(values, mask=mask, shots=500)
    assert abs(total.estimate - 40) <= total.error_bound
    mean = aggregate_avg(values, mask=mask, shots=500)
    assert abs(mean.estimate - 20) <= mean.error_bound


def test_average_of_nothing_is_null():
    result = aggregate_avg([1.0, 2.0], mask=[False, False], shots=100)
    assert result.estimate is None


def test_negative_values_are_shifted():
    values = [-4.0, 2.0, -1.0, 3.0]
    result = aggregate_sum(values, shots=500)
    assert abs(result.estimate - sum(values)) <= result.error_bound


def test_count_of_flags():
    flags = [True, False, True, True, False, False, True, False]
    result = aggregate_count(flags, shots=500)
    assert abs(result.estimate - 4) <= result.error_bound
    assert result.rows == 4
