"""Run an external SMT-LIB v2 solver in a child process and parse models.

One process per query, no incremental solving; the script goes to the
solver's standard input or a temporary file, and the verdict is read
from the textual output (a line saying sat, unsat, or unknown) with the
exit status ignored.
"""

from __future__ import annotations

import os
import subprocess
import tempfile
from dataclasses import dataclass

from . import presburger as P


class SolverUnavailable(Exception):
    pass


class SolverTimeout(Exception):
    pass


class MalformedOutput(Exception):
    pass


class MissingVariable(Exception):
    def __init__(self, name: str):
        super().__init__(f"model does not define {name!r}")
        self.name = name


class MalformedValue(Exception):
    pass


@dataclass(frozen=True)
class SolverConfig:
    executable: str
    arguments: tuple[str, ...] = ()
    timeout_seconds: float = 60.0
    via_stdin: bool = True

    def __post_init__(self) -> None:
        if self.timeout_seconds <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class SolverOutcome:
    status: str  # "sat" | "unsat" | "unknown"
    raw_model: str = ""


def invoke(script: str, config: SolverConfig) -> SolverOutcome:
    command = [config.executable, *config.arguments]
    temp_path = None
    try:
        if config.via_stdin:
            run = subprocess.run(
                command,
                input=script,
                capture_output=True,
                text=True,
                timeout=config.timeout_seconds,
            )
        else:
            fd, temp_path = tempfile.mkstemp(suffix=".smt2", text=True)
            with os.fdopen(fd, "w") as handle:
                handle.write(script)
            run = subprocess.run(
                command + [temp_path],
                capture_output=True,
                text=True,
                timeout=config.timeout_seconds,
            )
    except FileNotFoundError as error:
        raise SolverUnavailable(f"solver executable not found: {config.executable}") from error
    except PermissionError as error:
        raise SolverUnavailable(f"solver not executable: {config.executable}") from error
    except subprocess.TimeoutExpired as error:
        raise SolverTimeout(f"solver timed out after {config.timeout_seconds}s") from error
    finally:
        if temp_path is not None:
            try:
                os.unlink(temp_path)
            except OSError:
                pass

    lines = run.stdout.splitlines()
    for i, line in enumerate(lines):
        word = line.strip()
        if word in ("sat", "unsat", "unknown"):
            return SolverOutcome(word, "\n".join(lines[i + 1 :]))
    raise MalformedOutput(
        f"no sat/unsat/unknown line in solver output; stderr: {run.stderr.strip()[:500]}"
    )


def _tokenize_sexpr(text: str) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "()":
            out.append(ch)
            i += 1
        elif ch.isspace():
            i += 1
        elif ch == "|":
            j = text.index("|", i + 1)
            out.append(text[i + 1 : j])
            i = j + 1
        elif ch == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()|;":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def _parse_sexprs(tokens: list[str]):
    stack: list[list] = [[]]
    for token in tokens:
        if token == "(":
            stack.append([])
        elif token == ")":
            if len(stack) < 2:
                raise MalformedValue("unbalanced parentheses in model")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(token)
    if len(stack) != 1:
        raise MalformedValue("unbalanced parentheses in model")
    return stack[0]


def _int_of(expr) -> int:
    if isinstance(expr, str):
        try:
            return int(expr)
        except ValueError as error:
            raise MalformedValue(f"not an integer literal: {expr!r}") from error
    if isinstance(expr, list) and len(expr) == 2 and expr[0] == "-":
        return -_int_of(expr[1])
    raise MalformedValue(f"not an integer value: {expr!r}")


def parse_model(raw_model: str, variables: list[str] | tuple[str, ...]) -> dict[str, int]:
    """Integer values for the requested variables.

    Accepts both get-value style ``((x 2) (y (- 3)))`` and get-model
    style ``(model (define-fun x () Int 2) ...)`` output.
    """
    found: dict[str, int] = {}

    def walk(expr) -> None:
        if not isinstance(expr, list):
            return
        if len(expr) >= 5 and expr[0] == "define-fun" and isinstance(expr[1], str):
            if expr[2] == [] and expr[3] == "Int":
                found[expr[1]] = _int_of(expr[4])
                return
        if len(expr) == 2 and isinstance(expr[0], str) and expr[0] not in ("model", "-"):
            try:
                found[expr[0]] = _int_of(expr[1])
                return
            except MalformedValue:
                pass
        for sub in expr:
            walk(sub)

    for expr in _parse_sexprs(_tokenize_sexpr(raw_model)):
        walk(expr)
    out = {}
    for name in variables:
        if name not in found:
            raise MissingVariable(name)
        out[name] = found[name]
    return out


@dataclass
class ExternalBackend:
    """Presburger solving via an SMT-LIB v2 solver subprocess."""

    config: SolverConfig

    @property
    def box(self) -> None:
        return None  # external search is unconstrained

    def solve(self, formula: P.Formula) -> P.SolveResult:
        script = P.to_smtlib(formula)
        outcome = invoke(script, self.config)
        if outcome.status == "unsat":
            return P.SolveResult("unsat")
        if outcome.status == "unknown":
            return P.SolveResult("unknown", reason="external solver answered unknown")
        lifted, _ = P.lift_existentials(formula)
        names = sorted(P.free_variables(formula)) + list(lifted)
        model = parse_model(outcome.raw_model, names)
        return P.SolveResult("sat", model)
