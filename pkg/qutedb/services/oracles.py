"""
Predicate Oracle Compiler

Compiles a predicate tree into a reversible phase-marking circuit over the
row-identifier register:
1. Load the referenced column values per row (QROM, one MCX per set bit)
2. Evaluate each leaf into a flag ancilla (equality, comparator, prefix block)
3. Combine flags with multi-controlled logic (And/Or/Not)
4. Flip the phase on the root flag, then uncompute everything

Oracles are verified and fused into a single diagonal gate over the rid
register before execution.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from ..errors import (
    AncillaLeak,
    CapacityExceeded,
    UnsupportedPredicate,
    WidthOverflow,
)
from ..models import DeviceModel
from .predicates import (
    And,
    Eq,
    Exists,
    Not,
    Or,
    Predicate,
    PrefixLike,
    Range,
    RidBelow,
    conjunction,
    prefix_code_range,
    text_code_range,
)
from .simulator import (
    Circuit,
    GateInstance,
    StatevectorSimulator,
    diag,
    mcx,
    schedule_layers,
    simulator,
    x,
    z,
)

logger = logging.getLogger(__name__)

MAX_ORACLE_QUBITS = 62

# A literal is (qubit, polarity); True/False are compile-time constants
Literal = Union[Tuple[int, int], bool]


class ColumnEncoding(BaseModel):
    """Unsigned basis encoding of one column, indexed by rid"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    bits: int
    values: np.ndarray
    dictionary: Optional[List[str]] = None

    @property
    def is_text(self) -> bool:
        return self.dictionary is not None


class QromLoader(BaseModel):
    """Per-rid classical value tables loaded into value registers"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    n_real: int
    columns: Dict[str, ColumnEncoding] = Field(default_factory=dict)

    @classmethod
    def from_values(cls, values: Sequence[int], bits: Optional[int] = None, name: str = "v",
                    n: Optional[int] = None) -> "QromLoader":
        arr = np.asarray(values, dtype=np.int64)
        if len(arr) and arr.min() < 0:
            raise WidthOverflow(f"column {name} holds negative values")
        top = int(arr.max()) if len(arr) else 0
        width = bits if bits is not None else max(1, top.bit_length())
        if top >= 1 << width:
            raise WidthOverflow(f"value {top} does not fit {width} bits")
        if n is None:
            n = max(1, math.ceil(math.log2(max(1, len(arr)))))
        return cls(n=n, n_real=len(arr), columns={name: ColumnEncoding(name=name, bits=width, values=arr)})

    @property
    def N(self) -> int:
        return 1 << self.n

    def column(self, name: str) -> ColumnEncoding:
        try:
            return self.columns[name]
        except KeyError:
            raise UnsupportedPredicate(f"column {name} has no quantum encoding") from None

    def value(self, name: str, rid: int) -> int:
        enc = self.column(name)
        return int(enc.values[rid]) if rid < self.n_real else 0

    def load_gates(self, name: str, register: Sequence[int]) -> List[GateInstance]:
        """|x>|0> -> |x>|v(x)>; padded rows load 0. Self-inverse."""
        enc = self.column(name)
        gates: List[GateInstance] = []
        for rid in range(self.n_real):
            v = int(enc.values[rid])
            if not v:
                continue
            controls = tuple((q, (rid >> q) & 1) for q in range(self.n))
            for bit in range(enc.bits):
                if (v >> bit) & 1:
                    gates.append(mcx(register[bit], controls))
        return gates


class PredicateOracle(BaseModel):
    """Compiled compute-phase-uncompute circuit marking rows where the predicate holds"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    predicate: Predicate
    circuit: Circuit
    n: int
    n_real: int
    rid_register: List[int]
    value_registers: Dict[str, List[int]] = Field(default_factory=dict)
    ancillas: List[int] = Field(default_factory=list)
    ancilla_counts: Dict[str, int] = Field(default_factory=dict)
    conjuncts: int = 1
    marked_count_hint: Optional[int] = None

    _diagonal: Optional[np.ndarray] = PrivateAttr(default=None)

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def width(self) -> int:
        return self.circuit.n_qubits

    def phase_diagonal(self, sim: StatevectorSimulator = simulator) -> np.ndarray:
        """+1/-1 phase the oracle applies to each rid basis state"""
        if self._diagonal is None:
            rids = np.arange(self.N, dtype=np.int64)
            final, phases = sim.run_basis_states(self.circuit, rids)
            leaked = np.flatnonzero(final != rids)
            if len(leaked):
                raise AncillaLeak(f"oracle left work qubits set for rid {int(leaked[0])}")
            if not np.allclose(np.abs(np.real(phases)), 1.0) or not np.allclose(np.imag(phases), 0.0):
                raise AncillaLeak("oracle applied a non-sign phase")
            self._diagonal = np.real(phases)
        return self._diagonal

    def marked(self) -> np.ndarray:
        return np.flatnonzero(self.phase_diagonal() < 0)

    def evaluate(self, rid: int) -> bool:
        return bool(self.phase_diagonal()[rid] < 0)

    def marked_count(self) -> int:
        return int(len(self.marked()))

    def fused_gate(self, device: Optional[DeviceModel] = None) -> GateInstance:
        """The verified oracle as one DIAG gate on the rid register.

        The fused gate inherits the oracle's scheduled latency and its
        compounded gate error, so noisy runs and the cost model see the
        full circuit.
        """
        device = device or DeviceModel()
        schedule = schedule_layers(self.circuit, device)
        duration = sum(t + device.t_ctrl for t in schedule.layer_durations) or None
        survive = 1.0
        for gate in self.circuit.gates:
            eps = gate.error_rate if gate.error_rate is not None else device.gate_errors.get(gate.kind.value, 0.0)
            survive *= 1.0 - eps
        return diag(self.rid_register, self.phase_diagonal(), duration=duration,
                    error_rate=1.0 - survive, label=f"oracle[{self.predicate.to_sql()}]")


class _OracleBuilder:
    def __init__(self, loader: QromLoader, b: Optional[int]):
        self.loader = loader
        self.b = b
        self.next_qubit = loader.n
        self.value_registers: Dict[str, List[int]] = {}
        self.loads: List[GateInstance] = []
        self.logic: List[GateInstance] = []
        self.ancillas: List[int] = []
        self.counts = {"a_orc": 0, "a_cmp": 0, "a_pref": 0}

    def _alloc(self, kind: str) -> int:
        q = self.next_qubit
        self.next_qubit += 1
        self.ancillas.append(q)
        self.counts[kind] += 1
        return q

    def _bits(self, enc: ColumnEncoding) -> int:
        if self.b is None:
            return enc.bits
        if enc.bits > self.b:
            raise WidthOverflow(f"column {enc.name} needs {enc.bits} bits, oracle width is {self.b}")
        return self.b

    def _register(self, column: str) -> Tuple[List[int], ColumnEncoding]:
        enc = self.loader.column(column)
        if column not in self.value_registers:
            width = self._bits(enc)
            reg = list(range(self.next_qubit, self.next_qubit + width))
            self.next_qubit += width
            self.value_registers[column] = reg
            self.loads.extend(self.loader.load_gates(column, reg))
        return self.value_registers[column], enc

    # Leaves

    def _equals(self, reg: List[int], code: int) -> Literal:
        if len(reg) == 1:
            # control encoding: the loaded bit itself is the literal
            return (reg[0], code & 1)
        flag = self._alloc("a_orc")
        self.logic.append(mcx(flag, [(q, (code >> i) & 1) for i, q in enumerate(reg)]))
        return (flag, 1)

    def _greater_than(self, reg: List[int], c: int, kind: str) -> Literal:
        """Flag v > c as an XOR of mutually exclusive first-difference terms"""
        width = len(reg)
        if c < 0:
            return True
        if c >= (1 << width) - 1:
            return False
        flag = self._alloc(kind)
        for i in range(width):
            if (c >> i) & 1:
                continue
            controls = [(reg[i], 1)] + [(reg[j], (c >> j) & 1) for j in range(i + 1, width)]
            self.logic.append(mcx(flag, controls))
        return (flag, 1)

    def _code_range(self, reg: List[int], lo: int, hi: int) -> Literal:
        top = (1 << len(reg)) - 1
        lo, hi = max(lo, 0), min(hi, top)
        if lo > hi:
            return False
        if lo == hi:
            return self._equals(reg, lo)
        ge = True if lo == 0 else self._greater_than(reg, lo - 1, "a_cmp")
        le = True if hi == top else self._negate(self._greater_than(reg, hi, "a_cmp"))
        return self._and([ge, le])

    def _prefix_blocks(self, reg: List[int], lo: int, hi: int) -> Literal:
        if lo > hi:
            return False
        blocks = _dyadic_blocks(lo, hi)
        if len(blocks) == 1 and blocks[0][1] == len(reg):
            return True
        flag = self._alloc("a_pref")
        for start, size_bits in blocks:
            self.logic.append(mcx(flag, [(reg[i], (start >> i) & 1) for i in range(size_bits, len(reg))]))
        return (flag, 1)

    def _integer_bounds(self, pred: Range) -> Tuple[int, int]:
        if pred.low is None:
            lo = 0
        elif pred.low_open:
            lo = math.floor(pred.low) + 1
        else:
            lo = math.ceil(pred.low)
        if pred.high is None:
            hi = 1 << 62
        elif pred.high_open:
            hi = math.ceil(pred.high) - 1
        else:
            hi = math.floor(pred.high)
        return lo, hi

    def leaf(self, pred: Predicate) -> Literal:
        if isinstance(pred, RidBelow):
            if pred.limit >= self.loader.N:
                return True
            if pred.limit <= 0:
                return False
            return self._negate(self._greater_than(list(range(self.loader.n)), pred.limit - 1, "a_cmp"))

        if isinstance(pred, Exists):
            if pred.resolved is None:
                raise UnsupportedPredicate("EXISTS must be resolved before oracle compilation")
            return pred.resolved

        if isinstance(pred, Eq):
            reg, enc = self._register(pred.column)
            if enc.is_text:
                if not isinstance(pred.value, str):
                    raise UnsupportedPredicate(f"text column {pred.column} compared with {pred.value!r}")
                lo, hi = text_code_range(enc.dictionary, pred.value, pred.value)
                return self._code_range(reg, lo, hi)
            if isinstance(pred.value, str) or float(pred.value) != int(pred.value):
                raise UnsupportedPredicate(f"{pred.to_sql()} is not an unsigned integer comparison")
            code = int(pred.value)
            if code < 0 or code >= 1 << len(reg):
                raise WidthOverflow(f"constant {code} exceeds {len(reg)} bits of {pred.column}")
            return self._equals(reg, code)

        if isinstance(pred, Range):
            reg, enc = self._register(pred.column)
            if enc.is_text:
                lo, hi = text_code_range(enc.dictionary, pred.low, pred.high, pred.low_open, pred.high_open)
            else:
                if isinstance(pred.low, str) or isinstance(pred.high, str):
                    raise UnsupportedPredicate(f"{pred.to_sql()} compares a numeric column with text")
                lo, hi = self._integer_bounds(pred)
            return self._code_range(reg, lo, hi)

        if isinstance(pred, PrefixLike):
            if not pred.is_prefix():
                raise UnsupportedPredicate(f"LIKE pattern {pred.pattern!r} has an interior wildcard")
            reg, enc = self._register(pred.column)
            if not enc.is_text:
                raise UnsupportedPredicate(f"LIKE on non-text column {pred.column}")
            if pred.pattern.endswith("%"):
                lo, hi = prefix_code_range(enc.dictionary, pred.prefix)
            else:
                lo, hi = text_code_range(enc.dictionary, pred.pattern, pred.pattern)
            return self._prefix_blocks(reg, lo, hi)

        raise UnsupportedPredicate(f"no oracle for {type(pred).__name__}")

    # Combinators

    def _negate(self, lit: Literal) -> Literal:
        if isinstance(lit, bool):
            return not lit
        q, pol = lit
        return (q, 1 - pol)

    def _and(self, lits: List[Literal]) -> Literal:
        if any(lit is False for lit in lits):
            return False
        seen: Dict[int, int] = {}
        for lit in lits:
            if lit is True:
                continue
            q, pol = lit
            if seen.get(q, pol) != pol:
                return False
            seen[q] = pol
        if not seen:
            return True
        if len(seen) == 1:
            return next(iter(seen.items()))
        flag = self._alloc("a_orc")
        self.logic.append(mcx(flag, list(seen.items())))
        return (flag, 1)

    def _or(self, lits: List[Literal]) -> Literal:
        # De Morgan: flag = NOT(AND of negations)
        return self._negate(self._and([self._negate(lit) for lit in lits]))

    def build(self, pred: Predicate) -> Literal:
        if isinstance(pred, And):
            return self._and([self.build(p) for p in pred.items])
        if isinstance(pred, Or):
            return self._or([self.build(p) for p in pred.items])
        if isinstance(pred, Not):
            return self._negate(self.build(pred.item))
        return self.leaf(pred)


def _dyadic_blocks(lo: int, hi: int) -> List[Tuple[int, int]]:
    """Split [lo, hi] into aligned blocks (start, log2 size)"""
    blocks = []
    while lo <= hi:
        size_bits = (lo & -lo).bit_length() - 1 if lo else 62
        while size_bits > 0 and lo + (1 << size_bits) - 1 > hi:
            size_bits -= 1
        blocks.append((lo, size_bits))
        lo += 1 << size_bits
    return blocks


def compile_oracle(pred: Predicate, loader: QromLoader, n: Optional[int] = None,
                   b: Optional[int] = None) -> PredicateOracle:
    """Compile pred into a phase oracle over the loader's rid register.

    Padded rids (>= loader.n_real) are excluded by an implicit RidBelow
    conjunct. b forces a common value-register width.
    """
    if n is not None and n != loader.n:
        raise WidthOverflow(f"loader has {loader.n} rid qubits, asked for {n}")
    effective = pred
    if loader.n_real < loader.N:
        effective = conjunction([pred, RidBelow(limit=loader.n_real)])

    builder = _OracleBuilder(loader, b)
    root = builder.build(effective)

    phase_gates: List[GateInstance] = []
    if root is True:
        # f == 1 everywhere: global phase -1 as (XZX)Z on rid qubit 0
        phase_gates = [x(0), z(0), x(0), z(0)]
    elif root is not False:
        q, pol = root
        phase_gates = [z(q)] if pol else [x(q), z(q), x(q)]

    width = builder.next_qubit
    if width > MAX_ORACLE_QUBITS:
        raise CapacityExceeded(f"oracle needs {width} qubits")
    compute = builder.loads + builder.logic
    circuit = Circuit(n_qubits=width, registers={"rid": list(range(loader.n)), "anc": list(builder.ancillas)})
    for name, reg in builder.value_registers.items():
        circuit.registers[f"val:{name}"] = reg
    circuit.extend(compute)
    circuit.extend(phase_gates)
    circuit.extend(g.inverse() for g in reversed(compute))

    logger.debug(f"[Compiler] oracle {pred.to_sql()}: {width} qubits, {len(circuit.gates)} gates")
    return PredicateOracle(
        predicate=pred,
        circuit=circuit,
        n=loader.n,
        n_real=loader.n_real,
        rid_register=list(range(loader.n)),
        value_registers=builder.value_registers,
        ancillas=builder.ancillas,
        ancilla_counts=builder.counts,
        conjuncts=max(1, len(pred.conjuncts())),
    )


def comparator_oracle(loader: QromLoader, column: str, threshold: Any,
                      extra: Optional[Predicate] = None) -> PredicateOracle:
    """Oracle marking rows with column < threshold (optionally AND extra)"""
    pred = Range(column=column, high=threshold, high_open=True)
    return compile_oracle(conjunction([pred, extra]) if extra is not None else pred, loader)
