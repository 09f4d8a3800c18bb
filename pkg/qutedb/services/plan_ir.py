"""
Plan intermediate representation.

One node type serves all three tiers: the logical tree carries operator
fields, the quantum-extended tier adds eligibility and the candidate
algorithm, the physical tier adds the bound realization, shot budget,
compiled artifacts and the operator profile.
"""

from enum import Enum
from typing import Any, Dict, Iterator, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..models import OperatorProfile, Policy
from .predicates import Predicate


class OpKind(str, Enum):
    SCAN = "Scan"
    FILTER = "Filter"
    PROJECT = "Project"
    EQUI_JOIN = "EquiJoin"
    NONEQUI_JOIN = "NonEquiJoin"
    SIM_JOIN = "SimilarityJoin"
    AGGREGATE = "Aggregate"
    EXISTS = "Exists"
    SAMPLE = "Sample"


class Binding(str, Enum):
    QUANTUM = "quantum"
    CLASSICAL = "classical"
    DEFERRED = "deferred"


# Candidate quantum algorithm per eligible operator
ALGORITHMS: Dict[str, str] = {
    "filter": "Grover (Search)",
    "equi_join": "Grover (Index Probing)",
    "nonequi_join": "Grover (Comparison Oracle)",
    "sim_join": "SWAP Test",
    "MIN": "Durr-Hoyer Minimum Finding",
    "MAX": "Durr-Hoyer Minimum Finding",
    "COUNT": "Amplitude Estimation",
    "SUM": "Normalization + Amplitude Estimation",
    "AVG": "Normalization + Amplitude Estimation",
    "exists": "Grover (Quantum Counting)",
    "sample": "Grover-filtered Sampling",
}


class OutputColumn(BaseModel):
    name: str
    type: str


class PlanNode(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    id: int = 0
    op: OpKind
    children: List["PlanNode"] = Field(default_factory=list)
    subqueries: List["PlanNode"] = Field(default_factory=list)
    output: List[OutputColumn] = Field(default_factory=list)

    # logical
    table: Optional[str] = None
    alias: Optional[str] = None
    predicate: Optional[Predicate] = None
    columns: List[str] = Field(default_factory=list)
    function: Optional[str] = None
    column: Optional[str] = None
    left: Optional[str] = None
    right: Optional[str] = None
    join_op: Optional[str] = None
    threshold: Optional[float] = None
    sample_k: Optional[int] = None
    exists_text: Optional[str] = None

    # quantum-extended
    eligible: bool = False
    algorithm: Optional[str] = None
    demotion: Optional[str] = None

    # physical
    binding: Binding = Binding.CLASSICAL
    shots: int = 0
    artifacts: Dict[str, Any] = Field(default_factory=dict)
    profile: Optional[OperatorProfile] = None
    quantum_ns: Optional[float] = None
    classical_ns: Optional[float] = None
    expected_ns: Optional[float] = None

    @property
    def binding_name(self) -> Optional[str]:
        return self.alias or self.table

    @property
    def has_fallback(self) -> bool:
        return self.eligible and self.binding != Binding.CLASSICAL

    def walk(self) -> Iterator["PlanNode"]:
        """Pre-order over children and EXISTS subqueries"""
        yield self
        for sub in self.subqueries:
            yield from sub.walk()
        for child in self.children:
            yield from child.walk()

    def base_scan(self) -> Optional["PlanNode"]:
        """The scan directly under this node (through at most one filter)"""
        if not self.children:
            return None
        child = self.children[0]
        if child.op == OpKind.SCAN:
            return child
        if child.op == OpKind.FILTER and child.children and child.children[0].op == OpKind.SCAN:
            return child.children[0]
        return None

    def detail(self) -> str:
        if self.op == OpKind.SCAN:
            return f"{self.table}" + (f" AS {self.alias}" if self.alias and self.alias != self.table else "")
        if self.op == OpKind.FILTER:
            return self.predicate.to_sql() if self.predicate is not None else ""
        if self.op == OpKind.PROJECT:
            return ", ".join(self.columns)
        if self.op in (OpKind.EQUI_JOIN, OpKind.NONEQUI_JOIN):
            return f"{self.left} {self.join_op} {self.right}"
        if self.op == OpKind.SIM_JOIN:
            return f"IP({self.left}, {self.right}) {self.join_op} {self.threshold}"
        if self.op == OpKind.AGGREGATE:
            text = f"{self.function}({self.column or '*'})"
            return text + (f" WHERE {self.predicate.to_sql()}" if self.predicate is not None else "")
        if self.op == OpKind.SAMPLE:
            text = f"k={self.sample_k}"
            return text + (f" WHERE {self.predicate.to_sql()}" if self.predicate is not None else "")
        if self.op == OpKind.EXISTS:
            return self.exists_text or ""
        return ""

    def explain_line(self, depth: int) -> str:
        parts = [f"{'  ' * depth}{self.op.value}({self.detail()})"]
        if self.op in (OpKind.SCAN, OpKind.PROJECT) or not self.eligible:
            parts.append("[realization=classical]")
        else:
            parts.append(f"[realization={self.binding.value}]")
        if self.algorithm:
            parts.append(f"[alg={self.algorithm}]")
        if self.profile is not None and self.eligible:
            parts.append(f"[{self.profile.render()}]")
        if self.has_fallback:
            parts.append("[fallback=classical]")
        if self.demotion:
            parts.append(f"[reason={self.demotion}]")
        return " ".join(parts)


PlanNode.model_rebuild()


def renumber(root: PlanNode) -> PlanNode:
    for i, node in enumerate(root.walk(), start=1):
        node.id = i
    return root


def render_plan(root: PlanNode) -> str:
    lines: List[str] = []

    def visit(node: PlanNode, depth: int) -> None:
        lines.append(node.explain_line(depth))
        for sub in node.subqueries:
            visit(sub, depth + 1)
        for child in node.children:
            visit(child, depth + 1)

    visit(root, 0)
    return "\n".join(lines)


class HybridPlan(BaseModel):
    """Physical plan plus the context it was bound under"""
    root: PlanNode
    statement: str = ""
    device: str = ""
    policy: Policy = Field(default_factory=Policy)
    seed: int = 0

    def nodes(self) -> List[PlanNode]:
        return list(self.root.walk())

    def explain(self) -> str:
        return render_plan(self.root)
