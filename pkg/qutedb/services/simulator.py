"""
Statevector Simulator

Dense statevector simulation of gate circuits:
1. Apply gates directly on the amplitude tensor (multi-controlled gates are
   native, no decomposition)
2. Sample measurement shots, optionally with stochastic gate faults and
   layer dephasing (Monte Carlo trajectories)
3. Schedule circuits into ASAP layers for the cost model

Qubit 0 is the least significant bit of a basis-state index.
"""

import logging
import math
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config import DEFAULT_SHOTS, settings
from ..errors import (
    CapacityExceeded,
    IndexOutOfRange,
    OverlappingOperands,
    SimulationError,
    UnknownGateDuration,
)
from ..models import DeviceModel, NoiseModel

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-9
QFT_MAX_QUBITS = 12


class GateKind(str, Enum):
    H = "H"
    X = "X"
    Y = "Y"
    Z = "Z"
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    P = "P"
    CNOT = "CNOT"
    CZ = "CZ"
    CSWAP = "CSWAP"
    MCX = "MCX"
    MCZ = "MCZ"
    SWAP = "SWAP"
    DIAG = "DIAG"
    UCRY = "UCRY"


PARAMETRIC = {GateKind.RX, GateKind.RY, GateKind.RZ, GateKind.P}
X_FAMILY = {GateKind.X, GateKind.CNOT, GateKind.MCX}
Z_FAMILY = {GateKind.Z, GateKind.CZ, GateKind.MCZ}
SWAP_FAMILY = {GateKind.SWAP, GateKind.CSWAP}
# Gates that map basis states to basis states (up to phase)
BASIS_PRESERVING = X_FAMILY | Z_FAMILY | SWAP_FAMILY | {GateKind.Y, GateKind.RZ, GateKind.P, GateKind.DIAG}

_SQRT1_2 = 1.0 / math.sqrt(2.0)


class GateInstance(BaseModel):
    """One gate application: kind, target qubits, polarity-tagged controls"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: GateKind
    targets: Tuple[int, ...]
    controls: Tuple[Tuple[int, int], ...] = ()
    theta: Optional[float] = None
    phases: Optional[np.ndarray] = None
    angles: Optional[np.ndarray] = None
    duration: Optional[float] = None
    error_rate: Optional[float] = None
    label: Optional[str] = None

    @model_validator(mode="after")
    def _arity(self) -> "GateInstance":
        kind = self.kind
        n_targets = len(self.targets)
        if kind in SWAP_FAMILY:
            if n_targets != 2:
                raise ValueError(f"{kind.value} acts on two targets")
        elif kind == GateKind.DIAG:
            if self.phases is None or len(self.phases) != 1 << n_targets:
                raise ValueError("DIAG needs 2^len(targets) phases")
        elif kind == GateKind.UCRY:
            if n_targets < 2 or self.angles is None or len(self.angles) != 1 << (n_targets - 1):
                raise ValueError("UCRY needs a target, a select register and 2^len(select) angles")
        elif n_targets != 1:
            raise ValueError(f"{kind.value} acts on one target")
        if kind in (GateKind.CNOT, GateKind.CZ) and len(self.controls) != 1:
            raise ValueError(f"{kind.value} takes exactly one control")
        if kind == GateKind.CSWAP and len(self.controls) < 1:
            raise ValueError("CSWAP needs a control")
        if kind in PARAMETRIC and self.theta is None:
            raise ValueError(f"{kind.value} needs theta")
        for _, polarity in self.controls:
            if polarity not in (0, 1):
                raise ValueError("control polarity must be 0 or 1")
        return self

    @property
    def control_qubits(self) -> Tuple[int, ...]:
        return tuple(q for q, _ in self.controls)

    def operands(self) -> Tuple[int, ...]:
        return self.targets + self.control_qubits

    def validate_for(self, n_qubits: int) -> None:
        for q in self.operands():
            if q < 0 or q >= n_qubits:
                raise IndexOutOfRange(f"{self.kind.value}: qubit {q} outside 0..{n_qubits - 1}")
        targets = set(self.targets)
        controls = set(self.control_qubits)
        if len(targets) != len(self.targets) or len(controls) != len(self.controls):
            raise OverlappingOperands(f"{self.kind.value}: repeated operand")
        if targets & controls:
            raise OverlappingOperands(f"{self.kind.value}: targets and controls overlap on {sorted(targets & controls)}")

    def inverse(self) -> "GateInstance":
        if self.kind in PARAMETRIC:
            return self.model_copy(update={"theta": -self.theta})
        if self.kind == GateKind.DIAG:
            return self.model_copy(update={"phases": np.conj(self.phases)})
        if self.kind == GateKind.UCRY:
            return self.model_copy(update={"angles": -self.angles})
        return self

    def with_control(self, qubit: int, polarity: int = 1) -> "GateInstance":
        controls = self.controls + ((qubit, polarity),)
        return self.model_copy(update={"controls": controls, "kind": _promote(self.kind, len(controls))})

    def remap(self, mapping: Sequence[int]) -> "GateInstance":
        return self.model_copy(update={
            "targets": tuple(mapping[q] for q in self.targets),
            "controls": tuple((mapping[q], p) for q, p in self.controls),
        })

    def render(self) -> str:
        line = f"{self.kind.value} " + ",".join(f"q{q}" for q in self.targets)
        if self.controls:
            line += " ctrl=" + ",".join(f"q{q}{'+' if p else '-'}" for q, p in self.controls)
        if self.theta is not None:
            line += f" theta={self.theta:.12g}"
        if self.label:
            line += f"  # {self.label}"
        return line


def _promote(kind: GateKind, n_controls: int) -> GateKind:
    if kind in X_FAMILY:
        return GateKind.CNOT if n_controls == 1 else GateKind.MCX
    if kind in Z_FAMILY:
        return GateKind.CZ if n_controls == 1 else GateKind.MCZ
    if kind in SWAP_FAMILY:
        return GateKind.CSWAP if n_controls else GateKind.SWAP
    return kind


# Gate factories

def h(q: int) -> GateInstance:
    return GateInstance(kind=GateKind.H, targets=(q,))


def x(q: int) -> GateInstance:
    return GateInstance(kind=GateKind.X, targets=(q,))


def z(q: int) -> GateInstance:
    return GateInstance(kind=GateKind.Z, targets=(q,))


def ry(q: int, theta: float, controls: Iterable[Tuple[int, int]] = ()) -> GateInstance:
    return GateInstance(kind=GateKind.RY, targets=(q,), theta=theta, controls=tuple(controls))


def rz(q: int, theta: float) -> GateInstance:
    return GateInstance(kind=GateKind.RZ, targets=(q,), theta=theta)


def phase(q: int, theta: float, controls: Iterable[Tuple[int, int]] = ()) -> GateInstance:
    return GateInstance(kind=GateKind.P, targets=(q,), theta=theta, controls=tuple(controls))


def cnot(control: int, target: int) -> GateInstance:
    return GateInstance(kind=GateKind.CNOT, targets=(target,), controls=((control, 1),))


def mcx(target: int, controls: Iterable[Tuple[int, int]]) -> GateInstance:
    controls = tuple(controls)
    return GateInstance(kind=_promote(GateKind.MCX, len(controls)) if controls else GateKind.X,
                        targets=(target,), controls=controls)


def mcz(target: int, controls: Iterable[Tuple[int, int]]) -> GateInstance:
    controls = tuple(controls)
    return GateInstance(kind=_promote(GateKind.MCZ, len(controls)) if controls else GateKind.Z,
                        targets=(target,), controls=controls)


def swap(a: int, b: int) -> GateInstance:
    return GateInstance(kind=GateKind.SWAP, targets=(a, b))


def cswap(control: int, a: int, b: int) -> GateInstance:
    return GateInstance(kind=GateKind.CSWAP, targets=(a, b), controls=((control, 1),))


def ucry(target: int, select: Sequence[int], angles: np.ndarray, *, duration: Optional[float] = None,
         error_rate: Optional[float] = None, label: Optional[str] = None) -> GateInstance:
    """Multiplexed RY: RY(angles[s]) on target where s is the select register value"""
    return GateInstance(kind=GateKind.UCRY, targets=(target, *select),
                        angles=np.asarray(angles, dtype=np.float64),
                        duration=duration, error_rate=error_rate, label=label)


def diag(targets: Sequence[int], phases: np.ndarray, *, duration: Optional[float] = None,
         error_rate: Optional[float] = None, label: Optional[str] = None) -> GateInstance:
    return GateInstance(kind=GateKind.DIAG, targets=tuple(targets),
                        phases=np.asarray(phases, dtype=np.complex128),
                        duration=duration, error_rate=error_rate, label=label)


class Circuit(BaseModel):
    """Ordered gate program over named qubit registers"""
    n_qubits: int
    gates: List[GateInstance] = Field(default_factory=list)
    measured_qubits: List[int] = Field(default_factory=list)
    registers: Dict[str, List[int]] = Field(default_factory=dict)

    def add(self, gate: GateInstance) -> "Circuit":
        gate.validate_for(self.n_qubits)
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[GateInstance]) -> "Circuit":
        for gate in gates:
            self.add(gate)
        return self

    def validate(self) -> None:
        for gate in self.gates:
            gate.validate_for(self.n_qubits)
        for q in self.measured_qubits:
            if q < 0 or q >= self.n_qubits:
                raise IndexOutOfRange(f"measured qubit {q} outside 0..{self.n_qubits - 1}")

    def measure(self, qubits: Iterable[int]) -> "Circuit":
        self.measured_qubits = list(qubits)
        return self

    def inverse(self) -> "Circuit":
        return Circuit(
            n_qubits=self.n_qubits,
            gates=[g.inverse() for g in reversed(self.gates)],
            registers={k: list(v) for k, v in self.registers.items()},
        )

    def compose(self, other: "Circuit", qubits: Optional[Sequence[int]] = None) -> "Circuit":
        """Append other's gates, mapping its qubit i to qubits[i]"""
        mapping = list(qubits) if qubits is not None else list(range(other.n_qubits))
        if len(mapping) != other.n_qubits:
            raise IndexOutOfRange(f"qubit map of length {len(mapping)} for {other.n_qubits}-qubit circuit")
        for gate in other.gates:
            self.add(gate.remap(mapping))
        return self

    def controlled(self, qubit: int, polarity: int = 1) -> "Circuit":
        """Copy with an extra control on every gate (qubit must be unused)"""
        return Circuit(
            n_qubits=self.n_qubits,
            gates=[g.with_control(qubit, polarity) for g in self.gates],
            registers={k: list(v) for k, v in self.registers.items()},
        )

    def gate_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for gate in self.gates:
            counts[gate.kind.value] = counts.get(gate.kind.value, 0) + 1
        return counts

    def is_basis_preserving(self) -> bool:
        return all(g.kind in BASIS_PRESERVING for g in self.gates)

    def dump(self) -> str:
        """Line-oriented debug dump, one gate per line"""
        return "\n".join(g.render() for g in self.gates)


class StateVector(BaseModel):
    """2^n complex amplitudes; qubit 0 is the least significant index bit"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n_qubits: int
    amps: np.ndarray

    @model_validator(mode="after")
    def _shape(self) -> "StateVector":
        if self.amps.shape != (1 << self.n_qubits,):
            raise ValueError(f"expected {1 << self.n_qubits} amplitudes, got {self.amps.shape}")
        return self

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits=n_qubits, amps=amps)

    @classmethod
    def from_amplitudes(cls, amps: Sequence[complex]) -> "StateVector":
        arr = np.asarray(amps, dtype=np.complex128)
        n = int(round(math.log2(len(arr))))
        return cls(n_qubits=n, amps=arr.copy())

    def copy(self) -> "StateVector":
        return StateVector(n_qubits=self.n_qubits, amps=self.amps.copy())

    def norm(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def marginal(self, qubits: Sequence[int]) -> np.ndarray:
        """Born distribution over the listed qubits; bit i of the outcome is qubits[i]"""
        probs = self.probabilities().reshape((2,) * self.n_qubits)
        keep = [self.n_qubits - 1 - q for q in reversed(qubits)]
        drop = tuple(ax for ax in range(self.n_qubits) if ax not in keep)
        reduced = probs.sum(axis=drop) if drop else probs
        # remaining axes are in ascending original order; reorder to keep's order
        order = sorted(keep)
        reduced = np.transpose(reduced, [order.index(ax) for ax in keep])
        return reduced.reshape(-1)

    def fidelity(self, other: "StateVector") -> float:
        return float(abs(np.vdot(self.amps, other.amps)) ** 2)

    def equivalent(self, other: "StateVector", atol: float = 1e-9) -> bool:
        """Equality up to global phase"""
        if self.n_qubits != other.n_qubits:
            return False
        ref = int(np.argmax(np.abs(self.amps)))
        if abs(other.amps[ref]) < atol:
            return False
        rotation = self.amps[ref] / other.amps[ref]
        rotation /= abs(rotation)
        return bool(np.allclose(self.amps, other.amps * rotation, atol=atol))


class ShotResult(BaseModel):
    """Measurement counts over the measured qubits"""
    counts: Dict[str, int]
    shots: int
    measured_qubits: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _total(self) -> "ShotResult":
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts must add up to shots")
        return self

    @classmethod
    def from_array(cls, counts: np.ndarray, measured: Sequence[int], shots: int) -> "ShotResult":
        width = len(measured)
        table = {format(int(i), f"0{width}b"): int(c) for i in np.flatnonzero(counts) for c in [counts[i]]}
        return cls(counts=table, shots=shots, measured_qubits=list(measured))

    def int_counts(self) -> Dict[int, int]:
        return {int(bits, 2): c for bits, c in self.counts.items()}

    def frequency(self, bits: str) -> float:
        return self.counts.get(bits, 0) / self.shots

    def most_common(self) -> Tuple[str, int]:
        return max(self.counts.items(), key=lambda item: (item[1], item[0]))

    def outcomes(self) -> List[int]:
        """Multiset of measured integers, one entry per shot"""
        hits: List[int] = []
        for value, count in sorted(self.int_counts().items()):
            hits.extend([value] * count)
        return hits


class LayerSchedule(BaseModel):
    """ASAP layering of a circuit with per-layer duration and error sums"""
    layers: List[List[int]] = Field(default_factory=list)
    layer_durations: List[float] = Field(default_factory=list)
    layer_error_sums: List[float] = Field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.layers)

    def flattened(self) -> List[int]:
        return [i for layer in self.layers for i in layer]

    def concat(self, other: "LayerSchedule", offset: int) -> "LayerSchedule":
        """Schedule of two circuits run back to back (other's gate indices shifted)"""
        return LayerSchedule(
            layers=self.layers + [[i + offset for i in layer] for layer in other.layers],
            layer_durations=self.layer_durations + other.layer_durations,
            layer_error_sums=self.layer_error_sums + other.layer_error_sums,
        )


def _gate_duration(gate: GateInstance, durations: Mapping[str, float]) -> float:
    if gate.duration is not None:
        return gate.duration
    try:
        return durations[gate.kind.value]
    except KeyError:
        raise UnknownGateDuration(f"device has no duration for {gate.kind.value}") from None


def _gate_error(gate: GateInstance, errors: Mapping[str, float]) -> float:
    if gate.error_rate is not None:
        return gate.error_rate
    return errors.get(gate.kind.value, 0.0)


def _schedule(circuit: Circuit, durations: Mapping[str, float], errors: Mapping[str, float]) -> LayerSchedule:
    last_layer = [-1] * circuit.n_qubits
    layers: List[List[int]] = []
    for index, gate in enumerate(circuit.gates):
        level = max(last_layer[q] for q in gate.operands()) + 1
        if level == len(layers):
            layers.append([])
        layers[level].append(index)
        for q in gate.operands():
            last_layer[q] = level
    layer_durations = [max(_gate_duration(circuit.gates[i], durations) for i in layer) for layer in layers]
    layer_errors = [sum(_gate_error(circuit.gates[i], errors) for i in layer) for layer in layers]
    return LayerSchedule(layers=layers, layer_durations=layer_durations, layer_error_sums=layer_errors)


def schedule_layers(circuit: Circuit, device: DeviceModel) -> LayerSchedule:
    """Greedy ASAP layering; gates in one layer touch disjoint qubits"""
    return _schedule(circuit, device.gate_durations, device.gate_errors)


def _single_qubit_matrix(gate: GateInstance) -> np.ndarray:
    kind = gate.kind
    if kind == GateKind.H:
        return np.array([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]], dtype=np.complex128)
    if kind == GateKind.Y:
        return np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
    if kind == GateKind.RX:
        c, s = math.cos(gate.theta / 2), math.sin(gate.theta / 2)
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind == GateKind.RY:
        c, s = math.cos(gate.theta / 2), math.sin(gate.theta / 2)
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    raise SimulationError(f"no dense matrix path for {kind.value}")


def _axis_slice(n: int, fixed: Dict[int, int]) -> Tuple[slice, ...]:
    return tuple(slice(fixed[ax], fixed[ax] + 1) if ax in fixed else slice(None) for ax in range(n))


class StatevectorSimulator:
    """Dense statevector simulator with a configurable qubit cap"""

    def __init__(self, qubit_cap: int = settings.qubit_cap):
        self.qubit_cap = qubit_cap

    def _check_capacity(self, n_qubits: int) -> None:
        if n_qubits > self.qubit_cap:
            raise CapacityExceeded(f"{n_qubits} qubits exceed the simulator cap of {self.qubit_cap}")

    # Gate application

    def _apply(self, amps: np.ndarray, n: int, gate: GateInstance) -> None:
        """Apply gate in place on a contiguous amplitude array"""
        psi = amps.reshape((2,) * n)
        axis = lambda q: n - 1 - q  # noqa: E731
        sub = psi[_axis_slice(n, {axis(q): p for q, p in gate.controls})]
        kind = gate.kind

        if kind in SWAP_FAMILY:
            a, b = (axis(q) for q in gate.targets)
            s01 = sub[_axis_slice(n, {a: 0, b: 1})]
            s10 = sub[_axis_slice(n, {a: 1, b: 0})]
            held = s01.copy()
            s01[...] = s10
            s10[...] = held
            return

        if kind == GateKind.DIAG:
            m = len(gate.targets)
            source = [axis(q) for q in reversed(gate.targets)]
            moved = np.moveaxis(sub, source, list(range(n - m, n)))
            block = moved.reshape(-1, 1 << m) * gate.phases
            moved[...] = block.reshape(moved.shape)
            return

        if kind == GateKind.UCRY:
            select = gate.targets[1:]
            m = len(select)
            source = [axis(q) for q in reversed(select)] + [axis(gate.targets[0])]
            moved = np.moveaxis(sub, source, list(range(n - m - 1, n)))
            block = moved.reshape(-1, 1 << m, 2)
            c = np.cos(gate.angles / 2.0)
            s = np.sin(gate.angles / 2.0)
            b0 = c * block[:, :, 0] - s * block[:, :, 1]
            b1 = s * block[:, :, 0] + c * block[:, :, 1]
            moved[...] = np.stack([b0, b1], axis=-1).reshape(moved.shape)
            return

        t = axis(gate.targets[0])
        a0 = sub[_axis_slice(n, {t: 0})]
        a1 = sub[_axis_slice(n, {t: 1})]
        if kind in X_FAMILY:
            held = a0.copy()
            a0[...] = a1
            a1[...] = held
        elif kind in Z_FAMILY:
            a1 *= -1.0
        elif kind == GateKind.P:
            a1 *= np.exp(1j * gate.theta)
        elif kind == GateKind.RZ:
            a0 *= np.exp(-0.5j * gate.theta)
            a1 *= np.exp(0.5j * gate.theta)
        else:
            u = _single_qubit_matrix(gate)
            b0 = u[0, 0] * a0 + u[0, 1] * a1
            b1 = u[1, 0] * a0 + u[1, 1] * a1
            a0[...] = b0
            a1[...] = b1

    def apply_gate(self, state: StateVector, gate: GateInstance) -> StateVector:
        """Return a new state with the gate's unitary applied"""
        gate.validate_for(state.n_qubits)
        result = state.copy()
        self._apply(result.amps, result.n_qubits, gate)
        return result

    def run_statevector(self, circuit: Circuit, initial: Optional[StateVector] = None) -> StateVector:
        """Noiseless run from |0...0> (or the given state)"""
        self._check_capacity(circuit.n_qubits)
        circuit.validate()
        state = initial.copy() if initial is not None else StateVector.zero(circuit.n_qubits)
        if state.n_qubits != circuit.n_qubits:
            raise IndexOutOfRange(f"state has {state.n_qubits} qubits, circuit {circuit.n_qubits}")
        for gate in circuit.gates:
            self._apply(state.amps, circuit.n_qubits, gate)
        return state

    # Basis-state simulation of reversible circuits

    def run_basis_states(self, circuit: Circuit, indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Track many basis states through a basis-preserving circuit.

        Returns the final basis indices and accumulated phases. Exact for
        X/Y/Z/P/RZ/SWAP/DIAG families with any controls; no qubit cap beyond
        the 63-bit index.
        """
        if circuit.n_qubits > 62:
            raise CapacityExceeded("basis-state simulation is limited to 62 qubits")
        circuit.validate()
        idx = np.array(indices, dtype=np.int64)
        amp = np.ones(len(idx), dtype=np.complex128)
        for gate in circuit.gates:
            cmask = 0
            cval = 0
            for q, p in gate.controls:
                cmask |= 1 << q
                cval |= p << q
            active = (idx & cmask) == cval if cmask else np.ones(len(idx), dtype=bool)
            kind = gate.kind
            if kind in X_FAMILY:
                idx[active] ^= 1 << gate.targets[0]
            elif kind in Z_FAMILY:
                hit = active & (((idx >> gate.targets[0]) & 1) == 1)
                amp[hit] *= -1.0
            elif kind in SWAP_FAMILY:
                a, b = gate.targets
                differ = active & (((idx >> a) & 1) != ((idx >> b) & 1))
                idx[differ] ^= (1 << a) | (1 << b)
            elif kind == GateKind.Y:
                t = gate.targets[0]
                was_one = ((idx >> t) & 1) == 1
                amp[active & ~was_one] *= 1j
                amp[active & was_one] *= -1j
                idx[active] ^= 1 << t
            elif kind == GateKind.P:
                hit = active & (((idx >> gate.targets[0]) & 1) == 1)
                amp[hit] *= np.exp(1j * gate.theta)
            elif kind == GateKind.RZ:
                one = ((idx >> gate.targets[0]) & 1) == 1
                amp[active & one] *= np.exp(0.5j * gate.theta)
                amp[active & ~one] *= np.exp(-0.5j * gate.theta)
            elif kind == GateKind.DIAG:
                local = np.zeros(len(idx), dtype=np.int64)
                for bit, q in enumerate(gate.targets):
                    local |= ((idx >> q) & 1) << bit
                amp[active] *= gate.phases[local[active]]
            else:
                raise SimulationError(f"{kind.value} does not preserve basis states")
        return idx, amp

    # Sampling

    def sample(self, circuit: Circuit, shots: int = DEFAULT_SHOTS, noise: Optional[NoiseModel] = None) -> ShotResult:
        """Sample measurement outcomes over circuit.measured_qubits (all qubits if unset)"""
        if shots < 1:
            raise ValueError("shots must be at least 1")
        noise = noise or NoiseModel.noiseless()
        rng = np.random.default_rng(noise.seed)
        measured = circuit.measured_qubits or list(range(circuit.n_qubits))
        if noise.enabled:
            counts = self._sample_noisy(circuit, shots, noise, rng, measured)
        else:
            probs = self.run_statevector(circuit).marginal(measured)
            counts = rng.multinomial(shots, probs / probs.sum())
        return ShotResult.from_array(counts, measured, shots)

    def _sample_noisy(self, circuit: Circuit, shots: int, noise: NoiseModel,
                      rng: np.random.Generator, measured: Sequence[int]) -> np.ndarray:
        self._check_capacity(circuit.n_qubits)
        circuit.validate()
        schedule = _schedule(circuit, noise.gate_durations, noise.error_rates)
        order = schedule.flattened()
        gate_eps = np.array([_gate_error(circuit.gates[i], noise.error_rates) for i in order])
        layer_dephase = 1.0 - np.exp(-np.asarray(schedule.layer_durations) / noise.t2_eff)

        trajectories = max(1, min(shots, noise.max_trajectories))
        base, extra = divmod(shots, trajectories)
        counts = np.zeros(1 << len(measured), dtype=np.int64)
        ideal: Optional[np.ndarray] = None
        faulty = 0
        for t in range(trajectories):
            gate_faults = np.flatnonzero(rng.random(len(order)) < gate_eps)
            layer_faults = np.flatnonzero(rng.random(schedule.K) < layer_dephase)
            if len(gate_faults) == 0 and len(layer_faults) == 0:
                if ideal is None:
                    ideal = self.run_statevector(circuit).marginal(measured)
                probs = ideal
            else:
                faulty += 1
                probs = self._run_trajectory(circuit, schedule, set(gate_faults.tolist()),
                                             set(layer_faults.tolist()), rng).marginal(measured)
            allotted = base + (1 if t < extra else 0)
            if allotted:
                counts += rng.multinomial(allotted, probs / probs.sum())
        logger.debug(f"[Simulator] {faulty}/{trajectories} trajectories carried faults")
        return counts

    def _run_trajectory(self, circuit: Circuit, schedule: LayerSchedule, gate_faults: set,
                        layer_faults: set, rng: np.random.Generator) -> StateVector:
        n = circuit.n_qubits
        state = StateVector.zero(n)
        position = 0
        for k, layer in enumerate(schedule.layers):
            for index in layer:
                gate = circuit.gates[index]
                self._apply(state.amps, n, gate)
                if position in gate_faults:
                    self._depolarize(state.amps, n, gate.operands(), rng)
                position += 1
            if k in layer_faults:
                self._apply(state.amps, n, z(int(rng.integers(n))))
        return state

    def _depolarize(self, amps: np.ndarray, n: int, qubits: Sequence[int], rng: np.random.Generator) -> None:
        """Random non-identity Pauli string on the given qubits"""
        paulis = rng.integers(0, 4, size=len(qubits))
        while not paulis.any():
            paulis = rng.integers(0, 4, size=len(qubits))
        for q, p in zip(qubits, paulis):
            if p == 1:
                self._apply(amps, n, x(q))
            elif p == 2:
                self._apply(amps, n, GateInstance(kind=GateKind.Y, targets=(q,)))
            elif p == 3:
                self._apply(amps, n, z(q))


def build_qft(n: int) -> Circuit:
    """Textbook QFT: |j> -> 2^{-n/2} sum_k exp(2 pi i j k / 2^n) |k>"""
    if n < 1 or n > QFT_MAX_QUBITS:
        raise CapacityExceeded(f"QFT supports 1..{QFT_MAX_QUBITS} qubits, got {n}")
    circuit = Circuit(n_qubits=n)
    for j in reversed(range(n)):
        circuit.add(h(j))
        for k in reversed(range(j)):
            circuit.add(phase(j, math.pi / (1 << (j - k)), controls=[(k, 1)]))
    for i in range(n // 2):
        circuit.add(swap(i, n - 1 - i))
    return circuit


def build_inverse_qft(n: int) -> Circuit:
    return build_qft(n).inverse()


# Singleton instance
simulator = StatevectorSimulator()
