import math

import numpy as np
import pytest

from qutedb.errors import InvalidCounts, ZeroMatches
from qutedb.models import NoiseModel
from qutedb.services.grover import (
    analytic_success,
    boyer_brassard_search,
    build_diffusion,
    equijoin_probe,
    filter_iterations,
    grover_filter,
    grover_iterations,
    grover_sample,
)
from qutedb.services.oracles import QromLoader, compile_oracle
from qutedb.services.predicates import Eq, Range
from qutedb.services.simulator import StateVector, simulator


def _oracle(values, pred):
    return compile_oracle(pred, QromLoader.from_values(values))


def test_iteration_count():
    assert grover_iterations(4, 1) == 1
    assert grover_iterations(256, 5) == 5
    assert grover_iterations(16, 16) == 1


@pytest.mark.parametrize("N, M", [(6, 1), (8, 0), (8, 9)])
def test_iteration_count_rejects_bad_sizes(N, M):
    with pytest.raises(InvalidCounts):
        grover_iterations(N, M)


def test_diffusion_reflects_about_uniform_state():
    n = 3
    uniform = StateVector.from_amplitudes(np.full(1 << n, 1 / math.sqrt(1 << n)))
    out = simulator.run_statevector(build_diffusion(n), uniform)
    assert out.equivalent(uniform)


def test_four_rows_one_match_is_certain():
    oracle = _oracle([0, 1, 2, 3], Eq(column="v", value=2))
    run = grover_filter(oracle, M_est=1, shots=500)
    assert run.k == 1
    assert analytic_success(4, 1, 1) == pytest.approx(1.0)
    assert run.success_estimate == 1.0
    assert run.distinct_hits() == [2]


def test_success_matches_analytic_within_three_sigma(rng):
    N, M, shots = 256, 5, 2000
    values = rng.permutation(N)
    oracle = _oracle(values, Range(column="v", high=M, high_open=True))
    run = grover_filter(oracle, M_est=M, shots=shots, noise=NoiseModel.noiseless(seed=11))
    p = analytic_success(N, M, run.k)
    sigma = math.sqrt(p * (1 - p) / shots)
    assert abs(run.success_estimate - p) <= max(3 * sigma, 0.005)


def test_noisy_success_stays_close_to_analytic(device, rng):
    N, M = 256, 5
    oracle = _oracle(rng.permutation(N), Range(column="v", high=M, high_open=True))
    noise = NoiseModel.from_device(device, seed=5)
    run = grover_filter(oracle, M_est=M, shots=2000, noise=noise, device=device)
    p = analytic_success(N, M, run.k)
    assert abs(run.success_estimate - p) / p <= 0.15


def test_unknown_count_is_estimated_first():
    values = list(range(32))
    oracle = _oracle(values, Range(column="v", low=28))
    run = grover_filter(oracle, shots=1000)
    assert run.m_estimate == 4
    assert set(run.distinct_hits()) & {28, 29, 30, 31}


def test_zero_estimate_raises():
    oracle = _oracle([1, 2, 3, 4], Eq(column="v", value=3))
    with pytest.raises(ZeroMatches):
        grover_filter(oracle, M_est=0)


def test_no_matches_detected_by_counting():
    oracle = _oracle([1, 2, 3, 4, 5, 6, 7, 8], Eq(column="v", value=9))
    with pytest.raises(ZeroMatches):
        grover_filter(oracle, shots=200)


def test_exponential_schedule_finds_a_match():
    oracle = _oracle(list(range(64)), Eq(column="v", value=37))
    run = boyer_brassard_search(oracle, shots=200, noise=NoiseModel.noiseless(seed=2))
    assert run.schedule == "boyer-brassard"
    assert 37 in run.raw_hits


def test_sample_returns_distinct_marked_rows():
    values = [5, 1, 5, 7, 5, 2, 9, 5]
    oracle = _oracle(values, Eq(column="v", value=5))
    rows = grover_sample(oracle, k=3, shots=400, M_est=4)
    assert len(rows) == 3
    assert len(set(rows)) == 3
    assert all(values[r] == 5 for r in rows)


def test_probe_without_matches_is_empty():
    oracle = _oracle([1, 2, 3, 4], Eq(column="v", value=0))
    run = equijoin_probe(0, oracle, shots=200)
    assert run.raw_hits == []
    assert run.m_estimate == 0


def test_filter_iterations_skip_amplification_past_half():
    assert filter_iterations(256, 5) == grover_iterations(256, 5)
    assert filter_iterations(4, 1) == 1
    assert filter_iterations(16, 12) == 0
    assert filter_iterations(16, 16) == 1


def test_dense_matches_are_sampled_without_amplification():
    oracle = _oracle(list(range(16)), Range(column="v", low=4))
    run = grover_filter(oracle, M_est=12, shots=2000, noise=NoiseModel.noiseless(seed=4))
    assert run.k == 0
    assert abs(run.success_estimate - 0.75) <= 0.05
    assert set(run.distinct_hits()) == set(range(4, 16))


@pytest.mark.parametrize("cap", [1, 5, 40])
def test_exponential_schedule_stays_within_its_budget(cap):
    oracle = _oracle(list(range(0, 128, 2)), Eq(column="v", value=37))
    run = boyer_brassard_search(oracle, shots=50, noise=NoiseModel.noiseless(seed=3), max_iterations=cap)
    assert run.success_estimate == 0
    assert run.iterations_spent == cap
