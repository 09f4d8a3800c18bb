"""
Engine exceptions.

Every failure the engine can report derives from QuteError. The family
classes let the executor demote a whole class of quantum-path failures to
the classical realization without listing each one.
"""

from typing import Optional


class QuteError(Exception):
    """Base class for all engine errors"""


class ConfigError(QuteError):
    pass


# Simulation

class SimulationError(QuteError):
    pass


class IndexOutOfRange(SimulationError):
    pass


class OverlappingOperands(SimulationError):
    pass


class CapacityExceeded(SimulationError):
    pass


class UnknownGateDuration(SimulationError):
    pass


class AncillaLeak(SimulationError):
    """An oracle left an ancilla or value qubit entangled after uncompute"""


# Circuit construction

class CompilationError(QuteError):
    pass


class UnsupportedPredicate(CompilationError):
    pass


class WidthOverflow(CompilationError):
    pass


class InvalidCounts(CompilationError):
    pass


class ZeroMatches(CompilationError):
    """Quantum counting estimated that nothing is marked"""

    def __init__(self, message: str = "counting estimated zero matches", estimate: int = 0):
        super().__init__(message)
        self.estimate = estimate


class ZeroVector(CompilationError):
    pass


class DimensionMismatch(CompilationError):
    pass


class ValueOutOfBounds(CompilationError):
    pass


# SQL front end

class SqlSyntaxError(QuteError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class UnsupportedFeature(QuteError):
    pass


class UnknownTable(QuteError):
    pass


class UnknownColumn(QuteError):
    pass


class TypeMismatch(QuteError):
    pass


# Storage

class StorageError(QuteError):
    pass


class DuplicateTable(StorageError):
    pass


class SchemaMismatch(StorageError):
    pass


class CsvParseError(StorageError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InfeasibleSelectivity(StorageError):
    pass


class NoIndex(StorageError):
    pass


# Planning

class PlanningError(QuteError):
    pass


class LayerErrorOverflow(PlanningError):
    def __init__(self, layer: int, error_sum: float):
        super().__init__(f"layer {layer} error sum {error_sum:.4g} >= 1")
        self.layer = layer
        self.error_sum = error_sum


class UnknownOperator(PlanningError):
    pass


class NoCrossover(PlanningError):
    def __init__(self, message: str = "quantum path never cheaper in sweep", rows: Optional[list] = None):
        super().__init__(message)
        self.rows = rows or []
