import math

import numpy as np
import pytest

from qutedb.errors import CapacityExceeded, IndexOutOfRange, OverlappingOperands, SimulationError
from qutedb.models import DeviceModel, NoiseModel
from qutedb.services.simulator import (
    Circuit,
    GateInstance,
    GateKind,
    ShotResult,
    StatevectorSimulator,
    StateVector,
    build_inverse_qft,
    build_qft,
    cnot,
    cswap,
    diag,
    h,
    mcx,
    mcz,
    phase,
    ry,
    rz,
    schedule_layers,
    simulator,
    swap,
    ucry,
    x,
)


def test_qubit_zero_is_least_significant():
    state = simulator.run_statevector(Circuit(n_qubits=3).add(x(0)))
    assert np.isclose(abs(state.amps[1]), 1.0)


def test_bell_state_probabilities():
    circuit = Circuit(n_qubits=2).extend([h(0), cnot(0, 1)])
    probs = simulator.run_statevector(circuit).probabilities()
    assert np.allclose(probs, [0.5, 0.0, 0.0, 0.5])


def test_run_preserves_norm():
    circuit = Circuit(n_qubits=4).extend([h(0), ry(1, 0.3), cnot(0, 2), cswap(1, 2, 3), ry(3, 1.1, controls=[(0, 0)])])
    state = simulator.run_statevector(circuit)
    assert math.isclose(state.norm(), 1.0, abs_tol=1e-9)


def test_negative_control_fires_on_zero():
    circuit = Circuit(n_qubits=2).add(mcx(1, [(0, 0)]))
    state = simulator.run_statevector(circuit)
    assert np.isclose(abs(state.amps[2]), 1.0)


def test_overlapping_operands_rejected():
    with pytest.raises(OverlappingOperands):
        Circuit(n_qubits=2).add(cnot(1, 1))


def test_qubit_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        Circuit(n_qubits=2).add(h(2))


def test_capacity_cap():
    small = StatevectorSimulator(qubit_cap=3)
    with pytest.raises(CapacityExceeded):
        small.run_statevector(Circuit(n_qubits=4))


def test_gate_arity_validation():
    with pytest.raises(ValueError):
        GateInstance(kind=GateKind.RY, targets=(0,))


def test_qft_matches_fourier_amplitudes():
    n = 3
    j = 5
    initial = StateVector.zero(n)
    initial.amps[:] = 0
    initial.amps[j] = 1
    state = simulator.run_statevector(build_qft(n), initial)
    expected = np.exp(2j * np.pi * j * np.arange(1 << n) / (1 << n)) / math.sqrt(1 << n)
    assert state.equivalent(StateVector.from_amplitudes(expected))


def test_inverse_qft_undoes_qft(rng):
    n = 4
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    initial = StateVector.from_amplitudes(amps / np.linalg.norm(amps))
    circuit = build_qft(n).compose(build_inverse_qft(n))
    final = simulator.run_statevector(circuit, initial)
    assert np.allclose(final.amps, initial.amps, atol=1e-9)


def test_basis_state_tracking_agrees_with_statevector():
    phases = np.exp(1j * np.array([0.0, 0.5, 1.0, 1.5]))
    circuit = Circuit(n_qubits=3).extend([mcx(2, [(0, 1), (1, 0)]), diag([0, 2], phases), cnot(2, 1)])
    indices, amps = simulator.run_basis_states(circuit, range(8))
    for start in range(8):
        initial = StateVector.zero(3)
        initial.amps[:] = 0
        initial.amps[start] = 1
        final = simulator.run_statevector(circuit, initial)
        assert np.isclose(final.amps[indices[start]], amps[start])


def test_basis_state_tracking_rejects_superposing_gates():
    with pytest.raises(SimulationError):
        simulator.run_basis_states(Circuit(n_qubits=1).add(h(0)), [0])


def test_noiseless_sampling_is_seeded():
    circuit = Circuit(n_qubits=2).extend([h(0), h(1)])
    first = simulator.sample(circuit, shots=500, noise=NoiseModel.noiseless(seed=3))
    second = simulator.sample(circuit, shots=500, noise=NoiseModel.noiseless(seed=3))
    assert first.counts == second.counts
    assert sum(first.counts.values()) == 500


def test_sampling_respects_measured_qubits():
    circuit = Circuit(n_qubits=3).extend([x(2), h(0)]).measure([2])
    result = simulator.sample(circuit, shots=200)
    assert result.counts == {"1": 200}


def test_faults_spread_outcomes():
    noisy = DeviceModel(gate_errors={"H": 0.0, "CNOT": 0.5}, t2_eff=1e300)
    circuit = Circuit(n_qubits=2).extend([h(0), cnot(0, 1)])
    result = simulator.sample(circuit, shots=2000, noise=NoiseModel.from_device(noisy, seed=1))
    odd_parity = result.counts.get("01", 0) + result.counts.get("10", 0)
    assert odd_parity > 0
    assert sum(result.counts.values()) == 2000


def test_shot_counts_must_add_up():
    with pytest.raises(ValueError):
        ShotResult(counts={"0": 3}, shots=4)


def test_schedule_layers_durations(device):
    circuit = Circuit(n_qubits=3).extend([h(0), h(1), cnot(0, 1), h(2)])
    schedule = schedule_layers(circuit, device)
    assert schedule.K == 2
    assert schedule.layer_durations == [device.gate_durations["H"], device.gate_durations["CNOT"]]
    assert sorted(schedule.flattened()) == [0, 1, 2, 3]


# Dense reference: the full 2^n matrix built from each kind's local matrix

def _local_matrix(gate: GateInstance) -> np.ndarray:
    kind = gate.kind
    if kind in (GateKind.X, GateKind.CNOT, GateKind.MCX):
        return np.array([[0, 1], [1, 0]], dtype=np.complex128)
    if kind in (GateKind.Z, GateKind.CZ, GateKind.MCZ):
        return np.diag([1, -1]).astype(np.complex128)
    if kind == GateKind.Y:
        return np.array([[0, -1j], [1j, 0]])
    if kind == GateKind.H:
        return np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2)
    if kind == GateKind.RX:
        c, s = math.cos(gate.theta / 2), math.sin(gate.theta / 2)
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == GateKind.RY:
        c, s = math.cos(gate.theta / 2), math.sin(gate.theta / 2)
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if kind == GateKind.RZ:
        return np.diag([np.exp(-0.5j * gate.theta), np.exp(0.5j * gate.theta)])
    if kind == GateKind.P:
        return np.diag([1, np.exp(1j * gate.theta)])
    if kind in (GateKind.SWAP, GateKind.CSWAP):
        return np.eye(4, dtype=np.complex128)[[0, 2, 1, 3]]
    if kind == GateKind.DIAG:
        return np.diag(gate.phases)
    if kind == GateKind.UCRY:
        # local index = target bit + 2 * select value
        blocks = [_local_matrix(GateInstance(kind=GateKind.RY, targets=(0,), theta=float(a))) for a in gate.angles]
        size = 2 * len(blocks)
        matrix = np.zeros((size, size), dtype=np.complex128)
        for s, block in enumerate(blocks):
            matrix[2 * s:2 * s + 2, 2 * s:2 * s + 2] = block
        return matrix
    raise AssertionError(f"no reference for {kind.value}")


def _dense_unitary(gate: GateInstance, n: int) -> np.ndarray:
    local = _local_matrix(gate)
    targets = gate.targets
    dim = 1 << n
    unitary = np.zeros((dim, dim), dtype=np.complex128)
    for column in range(dim):
        if any(((column >> q) & 1) != p for q, p in gate.controls):
            unitary[column, column] = 1.0
            continue
        local_in = sum(((column >> q) & 1) << bit for bit, q in enumerate(targets))
        rest = column & ~sum(1 << q for q in targets)
        for local_out in range(1 << len(targets)):
            row = rest | sum(((local_out >> bit) & 1) << q for bit, q in enumerate(targets))
            unitary[row, column] += local[local_out, local_in]
    return unitary


GATE_CASES = [
    h(2),
    x(1),
    GateInstance(kind=GateKind.Y, targets=(3,)),
    GateInstance(kind=GateKind.Z, targets=(0,)),
    GateInstance(kind=GateKind.RX, targets=(1,), theta=0.7),
    GateInstance(kind=GateKind.RX, targets=(0,), controls=((2, 1),), theta=-1.9),
    ry(0, 1.3),
    ry(2, 0.9, controls=[(1, 0)]),
    rz(2, -0.4),
    phase(3, 2.1),
    phase(1, 0.6, controls=[(0, 1), (3, 0)]),
    cnot(0, 3),
    GateInstance(kind=GateKind.CZ, targets=(2,), controls=((1, 1),)),
    mcx(2, [(0, 1), (3, 0)]),
    mcz(1, [(0, 0), (2, 1), (3, 1)]),
    swap(0, 2),
    cswap(0, 1, 3),
    swap(1, 3).with_control(0, 0).with_control(2, 1),
    diag([1, 3], np.exp(1j * np.array([0.1, -0.8, 2.4, 1.7]))),
    diag([0, 2, 3], np.exp(1j * np.linspace(-3.0, 3.0, 8))),
    diag([1, 2], np.exp(1j * np.array([0.5, 0.0, -1.1, 3.0]))).with_control(0, 0),
    ucry(1, [3], np.array([0.4, -2.2])),
    ucry(1, [3, 0], np.array([0.3, -1.2, 2.7, 0.05])),
    ucry(0, [2], np.array([1.1, -0.6])).with_control(3, 1),
]


@pytest.mark.parametrize("gate", GATE_CASES, ids=lambda g: g.render())
def test_gate_matches_dense_reference(gate, rng):
    n = 4
    unitary = _dense_unitary(gate, n)
    assert np.allclose(unitary.conj().T @ unitary, np.eye(1 << n), atol=1e-12)
    for _ in range(100):
        amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        initial = StateVector.from_amplitudes(amps / np.linalg.norm(amps))
        applied = simulator.apply_gate(initial, gate)
        assert np.allclose(applied.amps, unitary @ initial.amps, atol=1e-9)
        assert math.isclose(applied.norm(), 1.0, abs_tol=1e-9)
        restored = simulator.apply_gate(applied, gate.inverse())
        assert np.allclose(restored.amps, initial.amps, atol=1e-9)


def _random_circuit(rng: np.random.Generator, n: int, depth: int) -> Circuit:
    circuit = Circuit(n_qubits=n)
    for _ in range(depth):
        a, b, c = (int(q) for q in rng.choice(n, size=3, replace=False))
        choice = int(rng.integers(6))
        if choice == 0:
            circuit.add(h(a))
        elif choice == 1:
            circuit.add(ry(a, float(rng.uniform(-math.pi, math.pi))))
        elif choice == 2:
            circuit.add(rz(a, float(rng.uniform(-math.pi, math.pi))))
        elif choice == 3:
            circuit.add(cnot(a, b))
        elif choice == 4:
            circuit.add(cswap(a, b, c))
        else:
            circuit.add(mcx(a, [(b, 1), (c, int(rng.integers(2)))]))
    return circuit


@pytest.mark.slow
def test_sampling_frequencies_match_probabilities(rng):
    shots = 100_000
    for trial in range(20):
        circuit = _random_circuit(rng, 4, 12)
        probs = simulator.run_statevector(circuit).probabilities()
        counts = simulator.sample(circuit, shots=shots, noise=NoiseModel.noiseless(seed=trial)).int_counts()
        for index, p in enumerate(probs):
            sigma = math.sqrt(shots * p * (1 - p))
            assert abs(counts.get(index, 0) - shots * p) <= 4 * sigma + 1


def test_schedule_layers_touch_disjoint_qubits(rng, device):
    for _ in range(25):
        circuit = _random_circuit(rng, 5, 30)
        schedule = schedule_layers(circuit, device)
        assert sorted(schedule.flattened()) == list(range(len(circuit.gates)))
        level = {}
        for k, layer in enumerate(schedule.layers):
            used = [q for i in layer for q in circuit.gates[i].operands()]
            assert len(used) == len(set(used))
            for i in layer:
                level[i] = k
        for i, gate in enumerate(circuit.gates):
            for j in range(i):
                if set(gate.operands()) & set(circuit.gates[j].operands()):
                    assert level[j] < level[i]
