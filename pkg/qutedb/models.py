import csv
import io
import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


# Default gate timings/errors of the shipped desk device. Durations in ns.
DEFAULT_GATE_DURATIONS: Dict[str, float] = {
    "H": 20.0, "X": 20.0, "Y": 20.0, "Z": 20.0,
    "RX": 20.0, "RY": 20.0, "RZ": 20.0, "P": 20.0,
    "CNOT": 40.0, "CZ": 40.0, "SWAP": 100.0, "CSWAP": 150.0,
    "MCX": 300.0, "MCZ": 300.0, "DIAG": 300.0,
}

DEFAULT_GATE_ERRORS: Dict[str, float] = {
    "H": 1e-6, "X": 1e-6, "Y": 1e-6, "Z": 1e-6,
    "RX": 1e-6, "RY": 1e-6, "RZ": 1e-6, "P": 1e-6,
    "CNOT": 1e-5, "CZ": 1e-5, "SWAP": 2e-5, "CSWAP": 3e-5,
    "MCX": 5e-6, "MCZ": 5e-6, "DIAG": 0.0,
}


class DeviceModel(BaseModel):
    """Hardware parameters consumed by the cost model and the noisy simulator"""
    name: str = "desk-default"
    gate_durations: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_GATE_DURATIONS))
    gate_errors: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_GATE_ERRORS))
    t_ctrl: float = 10.0
    t2_eff: float = 1e8
    t_readout: float = 1000.0
    qubit_cap: int = 24

    @field_validator("gate_durations")
    @classmethod
    def _positive_durations(cls, value: Dict[str, float]) -> Dict[str, float]:
        for kind, t in value.items():
            if t <= 0:
                raise ValueError(f"duration of {kind} must be positive")
        return value

    @field_validator("gate_errors")
    @classmethod
    def _error_range(cls, value: Dict[str, float]) -> Dict[str, float]:
        for kind, eps in value.items():
            if not 0.0 <= eps < 1.0:
                raise ValueError(f"error rate of {kind} must lie in [0, 1)")
        return value

    @field_validator("t2_eff")
    @classmethod
    def _positive_t2(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("t2_eff must be positive")
        return value

    def mean_gate_time(self) -> float:
        durations = list(self.gate_durations.values())
        return sum(durations) / len(durations) if durations else 0.0

    @classmethod
    def noiseless(cls, **overrides: Any) -> "DeviceModel":
        params: Dict[str, Any] = {
            "name": "noiseless",
            "gate_errors": {kind: 0.0 for kind in DEFAULT_GATE_ERRORS},
            "t2_eff": 1e300,
        }
        params.update(overrides)
        return cls(**params)


class NoiseModel(BaseModel):
    """Stochastic fault injection parameters for shot sampling"""
    error_rates: Dict[str, float] = Field(default_factory=dict)
    gate_durations: Dict[str, float] = Field(default_factory=dict)
    t2_eff: float = 1e300
    enabled: bool = False
    seed: int = 0
    max_trajectories: int = 256

    @field_validator("error_rates")
    @classmethod
    def _error_range(cls, value: Dict[str, float]) -> Dict[str, float]:
        for kind, eps in value.items():
            if not 0.0 <= eps < 1.0:
                raise ValueError(f"error rate of {kind} must lie in [0, 1)")
        return value

    @field_validator("t2_eff")
    @classmethod
    def _positive_t2(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("t2_eff must be positive")
        return value

    @classmethod
    def from_device(cls, device: DeviceModel, seed: int = 0, enabled: bool = True,
                    max_trajectories: int = 256) -> "NoiseModel":
        return cls(
            error_rates=dict(device.gate_errors),
            gate_durations=dict(device.gate_durations),
            t2_eff=device.t2_eff,
            enabled=enabled,
            seed=seed,
            max_trajectories=max_trajectories,
        )

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseModel":
        return cls(enabled=False, seed=seed)

    def with_seed(self, seed: int) -> "NoiseModel":
        return self.model_copy(update={"seed": seed})


class DepthModel(BaseModel):
    """Numeric stand-ins for the symbolic gate depths and ancilla budgets.

    All depths are in gate-layer units. Coefficients can be overridden from
    the settings file.
    """
    orc_per_qubit: float = 4.0
    diff_per_qubit: float = 2.0
    diff_const: float = 1.0
    cmp_per_bit: float = 6.0
    pref_per_bit: float = 2.0
    prep_per_dim: float = 2.0
    load_per_bit: float = 4.0
    rot: float = 1.0
    idx_per_qubit: float = 4.0
    key_per_bit: float = 2.0

    def d_orc(self, n: int, conjuncts: int = 1) -> float:
        return self.orc_per_qubit * n * max(1, conjuncts)

    def d_diff(self, n: int) -> float:
        return self.diff_per_qubit * n + self.diff_const

    def d_cmp(self, b: int) -> float:
        return self.cmp_per_bit * b

    def d_pref(self, prefix_bits: int) -> float:
        return self.pref_per_bit * prefix_bits

    def d_prep(self, d: int) -> float:
        return self.prep_per_dim * d

    def d_load(self, b_v: int) -> float:
        return self.load_per_bit * b_v

    def d_rot(self) -> float:
        return self.rot

    def d_idx(self, n: int) -> float:
        return self.idx_per_qubit * n

    def d_key(self, b_key: int) -> float:
        return self.key_per_bit * b_key

    # Ancilla budgets
    @staticmethod
    def a_orc(conjuncts: int = 1) -> int:
        return max(1, conjuncts) + (1 if conjuncts > 1 else 0)

    @staticmethod
    def a_cmp() -> int:
        return 2

    @staticmethod
    def a_pref() -> int:
        return 1

    @staticmethod
    def a_rot() -> int:
        return 1

    @staticmethod
    def q(d: int) -> int:
        return max(1, math.ceil(math.log2(max(1, d))))

    @staticmethod
    def a_prep(d: int) -> int:
        return 0


class CostConstants(BaseModel):
    """Classical and transfer constants of the cost model"""
    c_tuple_ns: float = 100.0
    t_load_ns: float = 1.0
    layer_time_ns: Optional[float] = None
    readout_ns: Optional[float] = None
    shots: int = 2000


class OperatorProfile(BaseModel):
    """Latency, success probability and approximation error of a quantum operator"""
    t_q: float
    p_q: float
    eps_q: float = 0.0

    @model_validator(mode="after")
    def _check(self) -> "OperatorProfile":
        if self.t_q <= 0:
            raise ValueError("t_q must be positive")
        if not 0.0 < self.p_q <= 1.0:
            raise ValueError("p_q must lie in (0, 1]")
        if self.eps_q < 0:
            raise ValueError("eps_q must be nonnegative")
        return self

    def render(self) -> str:
        return f"Tq={self.t_q:.4g}ns Pq={self.p_q:.4g} eps={self.eps_q:.4g}"


class AdaptationKind(str, Enum):
    INCREASE_SHOTS = "IncreaseShots"
    SWITCH_VARIANT = "SwitchVariant"
    FALLBACK = "Fallback"


class AdaptationAction(BaseModel):
    kind: AdaptationKind
    factor: int = 1

    def render(self) -> str:
        if self.kind == AdaptationKind.INCREASE_SHOTS:
            return f"{self.kind.value}({self.factor})"
        return self.kind.value


class RuntimeFeedback(BaseModel):
    """Observations from one completed shot batch of a quantum node"""
    observed_success: float
    expected_success: Optional[float] = None
    elapsed_ms: float = 0.0
    quality_ok: bool = True
    shot_factor: int = 1
    variant_available: bool = False
    variant_active: bool = False


class Policy(BaseModel):
    """Planner and runtime policy knobs"""
    realization: Literal["auto", "quantum", "classical"] = "auto"
    deferred_band: float = 0.2
    max_shot_factor: int = 8
    latency_budget_ms: Optional[float] = None
    queue_delay_ns: float = 0.0
    noise: bool = True


class Quality(BaseModel):
    kind: Literal["exact", "approximate", "sample"] = "exact"
    bound: Optional[float] = None

    @model_validator(mode="after")
    def _bounded(self) -> "Quality":
        if self.kind == "approximate" and (self.bound is None or not math.isfinite(self.bound)):
            raise ValueError("approximate results carry a finite bound")
        return self

    def render(self) -> str:
        if self.kind == "approximate":
            return f"approximate(±{self.bound:.4g})"
        return self.kind


class TraceEntry(BaseModel):
    """Execution record of one plan node"""
    node_id: int
    op: str
    realization: str
    algorithm: Optional[str] = None
    shots: int = 0
    rounds: int = 0
    adaptations: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    profile: Optional[OperatorProfile] = None
    elapsed_ms: float = 0.0

    def render(self) -> str:
        parts = [f"#{self.node_id} {self.op}", f"realization={self.realization}"]
        if self.algorithm:
            parts.append(f"alg={self.algorithm}")
        parts.append(f"shots={self.shots}")
        if self.rounds:
            parts.append(f"rounds={self.rounds}")
        if self.adaptations:
            parts.append("adapt=" + ",".join(self.adaptations))
        parts.append(f"time={self.elapsed_ms:.2f}ms")
        line = " ".join(parts)
        if self.notes:
            line += "  -- " + "; ".join(self.notes)
        return line


class ResultSet(BaseModel):
    """Query output: rows, their quality and the per-node execution trace"""
    columns: List[str] = Field(default_factory=list)
    rows: List[List[Any]] = Field(default_factory=list)
    quality: Quality = Field(default_factory=Quality)
    trace: List[TraceEntry] = Field(default_factory=list)
    message: Optional[str] = None

    def _cells(self) -> List[List[str]]:
        return [[_format_cell(v) for v in row] for row in self.rows]

    def to_table(self) -> str:
        if not self.columns:
            return self.message or ""
        cells = self._cells()
        widths = [len(c) for c in self.columns]
        for row in cells:
            for i, cell in enumerate(row):
                widths[i] = max(widths[i], len(cell))
        header = " | ".join(c.ljust(w) for c, w in zip(self.columns, widths))
        rule = "-+-".join("-" * w for w in widths)
        lines = [header, rule]
        lines += [" | ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in cells]
        footer = f"({len(self.rows)} row{'s' if len(self.rows) != 1 else ''}, {self.quality.render()})"
        lines.append(footer)
        return "\n".join(lines)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self._cells())
        return buffer.getvalue()

    def render_trace(self) -> str:
        return "\n".join(entry.render() for entry in self.trace)


def _format_cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return ";".join(_format_cell(v) for v in value)
    return str(value)


class SelectivitySpec(BaseModel):
    """Per-predicate target selectivities for synthetic data"""
    targets: List[float] = Field(default_factory=lambda: [0.02])
