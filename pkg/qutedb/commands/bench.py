"""
Benchmark Commands

CSV-producing measurements for external plotting:
1. crossover: modeled classical vs quantum expected cost over powers of two,
   optionally with constants calibrated on small simulator runs
2. grover: measured versus analytic Grover success for N up to 2^10
3. calibrate: least-squares cost constants and the per-N deviation of the
   measurements from the fitted model
"""

import argparse
import csv
import io
import logging
import sys
import time
from typing import List, Optional, Sequence, TextIO

import numpy as np
from pydantic import BaseModel

from ..config import Settings
from ..errors import NoCrossover
from ..models import CostConstants, DeviceModel, NoiseModel
from ..services import optimizer
from ..services.estimation import uniform_superposition_gates
from ..services.grover import analytic_success, build_diffusion, grover_filter, grover_iterations
from ..services.oracles import QromLoader, compile_oracle
from ..services.predicates import Range
from ..services.simulator import Circuit, schedule_layers
from ..services.storage import ColumnDef, ColumnType, Table, TableDef, evaluate_predicate

logger = logging.getLogger(__name__)

# Sizes the simulator measures directly
MEASURED_SIZES = [1 << e for e in range(4, 11)]


def parse_size(text: str) -> int:
    """'2^40', '1<<40' or a plain integer"""
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        return int(base) ** int(exp)
    if "<<" in text:
        base, shift = text.split("<<", 1)
        return int(base) << int(shift)
    return int(text)


def _write_rows(header: Sequence[str], rows: Sequence[Sequence], stdout: TextIO) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    stdout.write(buffer.getvalue())


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _synthetic(N: int, selectivity: float, seed: int):
    """A UINT column holding a permutation of 0..N-1 and the predicate v < M"""
    rng = np.random.default_rng(seed)
    values = rng.permutation(N).astype(np.int64)
    M = max(1, round(selectivity * N))
    return values, M, Range(column="v", high=M, high_open=True)


# Grover success sweep

class GroverPoint(BaseModel):
    N: int
    M: int
    k: int
    analytic: float
    measured: float

    @property
    def deviation(self) -> float:
        return abs(self.measured - self.analytic)


def grover_sweep(device: DeviceModel, sizes: Sequence[int] = MEASURED_SIZES, selectivity: float = 0.02,
                 shots: int = 2000, seed: int = 0, noise: bool = True,
                 max_trajectories: int = 256) -> List[GroverPoint]:
    """Empirical Grover success next to sin^2((2k+1) theta) at each size"""
    points = []
    for N in sizes:
        values, M, pred = _synthetic(N, selectivity, seed + N)
        oracle = compile_oracle(pred, QromLoader.from_values(values, name="v"))
        model = NoiseModel.from_device(device, seed=seed + N, enabled=noise, max_trajectories=max_trajectories)
        run = grover_filter(oracle, M_est=M, shots=shots, noise=model, device=device)
        point = GroverPoint(N=N, M=M, k=run.k, analytic=analytic_success(N, M, run.k),
                            measured=run.success_estimate)
        logger.info(f"[Bench] grover N={N} M={M} k={run.k}: measured {point.measured:.4f} "
                    f"analytic {point.analytic:.4f}")
        points.append(point)
    return points


# Calibration

def grover_circuit(oracle, k: int) -> Circuit:
    """Grover circuit with the oracle's gates inline (not fused)"""
    n = oracle.n
    circuit = Circuit(n_qubits=oracle.width)
    circuit.extend(uniform_superposition_gates(range(n)))
    diffusion = build_diffusion(n).gates
    for _ in range(k):
        circuit.extend(oracle.circuit.gates)
        circuit.extend(diffusion)
    return circuit


def _classical_ns(table: Table, pred: Range, repeats: int) -> float:
    """Best-of-repeats wall time of a row-at-a-time scan"""
    rids = np.arange(table.n_rows, dtype=np.int64)
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter_ns()
        for i in range(table.n_rows):
            evaluate_predicate(pred, table, rids[i:i + 1])
        best = min(best, time.perf_counter_ns() - started)
    return float(best)


def measure(N: int, device: DeviceModel, seed: int = 0, selectivity: float = 0.02,
            repeats: int = 3) -> optimizer.Measurement:
    """Classical scan time and the scheduled Grover circuit's layers and device time"""
    values, M, pred = _synthetic(N, selectivity, seed + N)
    definition = TableDef(name="calibration", columns=[ColumnDef(name="v", type=ColumnType.UINT, bits=16)],
                          row_count=N)
    table = Table(definition, {"v": values})
    oracle = compile_oracle(pred, QromLoader.from_values(values, name="v"))
    schedule = schedule_layers(grover_circuit(oracle, grover_iterations(oracle.N, M)), device)
    return optimizer.Measurement(
        N=N,
        classical_ns=_classical_ns(table, pred, repeats),
        layers=schedule.K,
        quantum_ns=optimizer.estimate_time(schedule, device),
    )


def collect_measurements(device: DeviceModel, sizes: Sequence[int] = MEASURED_SIZES,
                         seed: int = 0) -> List[optimizer.Measurement]:
    measurements = []
    for N in sizes:
        measurements.append(measure(N, device, seed))
        logger.info(f"[Bench] measured N={N}")
    return measurements


def calibrated_constants(device: DeviceModel, base: CostConstants, seed: int = 0,
                         sizes: Sequence[int] = MEASURED_SIZES) -> CostConstants:
    return optimizer.calibrate(collect_measurements(device, sizes, seed)).constants(base)


# Commands

def crossover(config: Settings, device: DeviceModel, n_min: int = 1 << 4, n_max: int = 1 << 40,
              m_rule: str = "constant:1", op: str = "filter", include_transfer: bool = False,
              calibrated: bool = False, stdout: Optional[TextIO] = None,
              stderr: Optional[TextIO] = None) -> int:
    stdout, stderr = stdout or sys.stdout, stderr or sys.stderr
    constants = config.cost
    if calibrated:
        constants = calibrated_constants(device, constants, config.seed)
    try:
        report = optimizer.crossover_analysis(device, config.depth_model, constants, n_min, n_max, m_rule, op,
                                              include_transfer=include_transfer)
    except NoCrossover as e:
        stdout.write(optimizer.CrossoverReport(rows=e.rows).to_csv())
        stderr.write(f"error: {e}\n")
        return 1
    stdout.write(report.to_csv())
    stderr.write(f"crossover N*={report.n_star}\n")
    return 0


def grover(config: Settings, device: DeviceModel, n_max: int = 1 << 10, selectivity: float = 0.02,
           stdout: Optional[TextIO] = None) -> int:
    stdout = stdout or sys.stdout
    sizes = [N for N in MEASURED_SIZES if N <= n_max]
    points = grover_sweep(device, sizes, selectivity, config.default_shots, config.seed, config.noise,
                          config.max_trajectories)
    _write_rows(["N", "M", "k", "analytic", "measured", "deviation"],
                [[p.N, p.M, p.k, _fmt(p.analytic), _fmt(p.measured), _fmt(p.deviation)] for p in points],
                stdout)
    return 0


def calibrate(config: Settings, device: DeviceModel, stdout: Optional[TextIO] = None,
              stderr: Optional[TextIO] = None) -> int:
    stdout, stderr = stdout or sys.stdout, stderr or sys.stderr
    measurements = collect_measurements(device, MEASURED_SIZES, config.seed)
    fit = optimizer.calibrate(measurements)
    rows = []
    for m, c_dev, q_dev in zip(measurements, fit.classical_deviation, fit.quantum_deviation):
        rows.append([m.N, _fmt(m.classical_ns), _fmt(fit.c_tuple_ns * m.N), _fmt(c_dev),
                     _fmt(m.layers), _fmt(m.quantum_ns), _fmt(fit.layer_time_ns * m.layers), _fmt(q_dev)])
    _write_rows(["N", "classical_ns", "classical_fit_ns", "classical_deviation",
                 "layers", "quantum_ns", "quantum_fit_ns", "quantum_deviation"], rows, stdout)
    stderr.write(f"c_tuple_ns={fit.c_tuple_ns:.6g} layer_time_ns={fit.layer_time_ns:.6g} "
                 f"max_deviation={fit.max_deviation:.3f}\n")
    return 0


# Argument wiring

def _crossover(args: argparse.Namespace, config: Settings, device: DeviceModel) -> int:
    return crossover(config, device, parse_size(args.n_min), parse_size(args.n_max), args.matches, args.op,
                     args.include_transfer, args.calibrated)


def _grover(args: argparse.Namespace, config: Settings, device: DeviceModel) -> int:
    return grover(config, device, parse_size(args.n_max), args.selectivity)


def _calibrate(args: argparse.Namespace, config: Settings, device: DeviceModel) -> int:
    return calibrate(config, device)


def register(subparsers) -> None:
    bench = subparsers.add_parser("bench", help="cost-model and simulator benchmarks (CSV)")
    commands = bench.add_subparsers(dest="bench_command", required=True)

    parser = commands.add_parser("crossover", help="classical vs quantum expected cost sweep")
    parser.add_argument("--n-min", default="2^4")
    parser.add_argument("--n-max", default="2^40")
    parser.add_argument("--matches", default="constant:1", help="constant:<k> or fraction:<f>")
    parser.add_argument("--op", default="filter")
    parser.add_argument("--include-transfer", action="store_true")
    parser.add_argument("--calibrated", action="store_true",
                        help="fit c_tuple and the layer time on small simulator runs first")
    parser.set_defaults(handler=_crossover)

    parser = commands.add_parser("grover", help="measured vs analytic Grover success")
    parser.add_argument("--n-max", default="2^10")
    parser.add_argument("--selectivity", type=float, default=0.02)
    parser.set_defaults(handler=_grover)

    parser = commands.add_parser("calibrate", help="fit cost constants to simulator measurements")
    parser.set_defaults(handler=_calibrate)

