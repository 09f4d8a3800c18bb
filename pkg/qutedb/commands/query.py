"""
Query Commands

SQL entry points of the command line: the interactive loop, batch scripts
and EXPLAIN.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, TextIO

from ..config import Settings
from ..errors import QuteError
from ..models import DeviceModel, ResultSet
from ..services.executor import Engine
from ..services.sql_parser import parse_script

logger = logging.getLogger(__name__)

PROMPT = "qute> "
CONTINUATION = "  ... "
QUIT_COMMANDS = {"\\q", "quit", "exit"}


def render(result: ResultSet, output: str = "table") -> str:
    """Text for one statement result; CSV drops messages and traces"""
    if output == "csv":
        return result.to_csv() if result.columns else ""
    if result.columns and result.message:
        return f"{result.message}\n\n{result.to_table()}"
    return result.to_table()


def _emit(result: ResultSet, output: str, stdout: TextIO) -> None:
    text = render(result, output)
    if text:
        stdout.write(text.rstrip("\n") + "\n")


def statement_complete(buffer: str) -> bool:
    """True once the buffer ends in a ';' outside any string literal"""
    quoted = False
    last = ""
    for ch in buffer:
        if ch == "'":
            quoted = not quoted
        if not ch.isspace():
            last = ch
    return not quoted and last == ";"


def repl(engine: Engine, output: str = "table", stdin: Optional[TextIO] = None,
         stdout: Optional[TextIO] = None,
         stderr: Optional[TextIO] = None) -> int:
    """Read statements terminated by ';' until EOF or \\q"""
    stdin, stdout, stderr = stdin or sys.stdin, stdout or sys.stdout, stderr or sys.stderr
    interactive = stdin.isatty()
    buffer = ""
    while True:
        if interactive:
            stdout.write(CONTINUATION if buffer else PROMPT)
            stdout.flush()
        line = stdin.readline()
        if not line:
            break
        if not buffer and line.strip().lower() in QUIT_COMMANDS:
            break
        buffer += line
        if not statement_complete(buffer):
            continue
        text, buffer = buffer, ""
        try:
            for statement in parse_script(text):
                _emit(engine.execute(statement), output, stdout)
        except QuteError as e:
            stderr.write(f"error: {e}\n")
    if buffer.strip():
        stderr.write("error: incomplete statement at end of input\n")
    return 0


def run(engine: Engine, path: Path, output: str = "table", stdout: Optional[TextIO] = None,
        stderr: Optional[TextIO] = None) -> int:
    """Execute a script in order; stop at the first failing statement"""
    stdout, stderr = stdout or sys.stdout, stderr or sys.stderr
    try:
        statements = parse_script(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        stderr.write(f"error: cannot read {path}: {e.strerror}\n")
        return 1
    except QuteError as e:
        stderr.write(f"error: {path}: {e}\n")
        return 1
    for i, statement in enumerate(statements, start=1):
        try:
            _emit(engine.execute(statement), output, stdout)
        except QuteError as e:
            stderr.write(f"error: statement {i}: {e}\n")
            return 1
    logger.info(f"[Cli] ran {len(statements)} statements from {path}")
    return 0


def explain(engine: Engine, sql: str, stdout: Optional[TextIO] = None, stderr: Optional[TextIO] = None) -> int:
    """Print the bound hybrid plan of one SELECT"""
    stdout, stderr = stdout or sys.stdout, stderr or sys.stderr
    text = sql.strip().rstrip(";")
    try:
        stdout.write(engine.explain(text) + "\n")
    except QuteError as e:
        stderr.write(f"error: {e}\n")
        return 1
    return 0


# Argument wiring

def _engine(config: Settings, device: DeviceModel) -> Engine:
    return Engine(device=device, config=config)


def _repl(args: argparse.Namespace, config: Settings, device: DeviceModel) -> int:
    return repl(_engine(config, device), config.output)


def _run(args: argparse.Namespace, config: Settings, device: DeviceModel) -> int:
    return run(_engine(config, device), Path(args.file), config.output)


def _explain(args: argparse.Namespace, config: Settings, device: DeviceModel) -> int:
    return explain(_engine(config, device), args.sql)


def register(subparsers) -> None:
    parser = subparsers.add_parser("repl", help="interactive SQL shell")
    parser.set_defaults(handler=_repl)

    parser = subparsers.add_parser("run", help="execute a SQL script")
    parser.add_argument("file", help="path of the script")
    parser.set_defaults(handler=_run)

    parser = subparsers.add_parser("explain", help="print the hybrid plan of a SELECT")
    parser.add_argument("sql", help="the SELECT statement")
    parser.set_defaults(handler=_explain)


def default_handler(args: Optional[argparse.Namespace], config: Settings, device: DeviceModel) -> int:
    return _repl(args, config, device)
