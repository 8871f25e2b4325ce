"""Solver-agnostic MILP container, LP-file exchange, and solver driver.

Models are built in memory, written as CPLEX-LP text, solved by an
external process named through a command template, and read back from a
solution file. Keeping the exchange on files makes the toolkit work
with any LP-speaking solver (the bundled ``bessopt-solve`` shim, CBC,
HiGHS, ...) and makes runs reproducible: identical models emit
byte-identical LP files.

Variable names must not start with a digit, a period, or the letter
e/E (reserved by the LP number syntax).
"""

from __future__ import annotations

import math
import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ModelError, SolverError

VarId = int

_SENSES = ("<=", "=", ">=")
_NAME_RE = re.compile(r"[A-DF-Za-df-z_][A-Za-z0-9_\[\]\.]*$")

# Default external solver: the bundled shim. Any LP-format MILP solver
# works, e.g.
#   cbc:   "cbc {lp} -seconds {time_limit} -ratioGap {mip_gap} solve -solution {sol}"
#   highs: "highs --time_limit {time_limit} --mip_rel_gap {mip_gap} --solution_file {sol} {lp}"
DEFAULT_SOLVER_CMD = "bessopt-solve {lp} {sol} --time-limit {time_limit} --mip-gap {mip_gap}"
DEFAULT_TIME_LIMIT = 3600.0
DEFAULT_MIP_GAP = 1e-4


def format_number(x: float) -> str:
    """Fixed 12-significant-digit rendering used everywhere in LP output."""
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return f"{x:.12g}"


@dataclass
class Constraint:
    coeffs: dict[VarId, float]
    sense: str
    rhs: float
    name: str


class Model:
    """Linear objective, linear constraints, continuous/binary variables."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.var_kinds: list[str] = []
        self.var_lo: list[float] = []
        self.var_hi: list[float] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[VarId, float] = {}
        self.objective_offset: float = 0.0
        self._by_name: dict[str, VarId] = {}

    # -- construction ------------------------------------------------

    def add_variable(
        self,
        name: str,
        kind: str = "continuous",
        lo: float = 0.0,
        hi: float = math.inf,
    ) -> VarId:
        if kind not in ("continuous", "binary"):
            raise ModelError(f"unknown variable kind {kind!r}")
        if name in self._by_name:
            raise ModelError(f"duplicate variable name {name!r}")
        if not _NAME_RE.match(name):
            raise ModelError(f"invalid LP variable name {name!r}")
        if kind == "binary":
            lo, hi = 0.0, 1.0
        if lo > hi:
            raise ModelError(f"variable {name!r} has lo {lo} > hi {hi}")
        vid = len(self.var_names)
        self.var_names.append(name)
        self.var_kinds.append(kind)
        self.var_lo.append(lo)
        self.var_hi.append(hi)
        self._by_name[name] = vid
        return vid

    def check_owned(self, vid: VarId) -> None:
        if not 0 <= vid < len(self.var_names):
            raise ModelError(f"variable id {vid} not in this model")

    def var_id(self, name: str) -> VarId:
        return self._by_name[name]

    def add_constraint(
        self,
        coeffs: dict[VarId, float],
        sense: str,
        rhs: float,
        name: str | None = None,
    ) -> int:
        if sense not in _SENSES:
            raise ModelError(f"constraint sense must be one of {_SENSES}")
        clean = {}
        for vid, c in coeffs.items():
            self.check_owned(vid)
            if not math.isfinite(c):
                raise ModelError(f"non-finite coefficient on {self.var_names[vid]}")
            if c != 0.0:
                clean[vid] = clean.get(vid, 0.0) + c
        idx = len(self.constraints)
        self.constraints.append(Constraint(clean, sense, rhs, name or f"c{idx}"))
        return idx

    def set_objective(self, coeffs: dict[VarId, float], offset: float = 0.0) -> None:
        for vid in coeffs:
            self.check_owned(vid)
        self.objective = {v: c for v, c in coeffs.items() if c != 0.0}
        self.objective_offset = offset

    def add_objective_term(self, vid: VarId, coeff: float) -> None:
        self.check_owned(vid)
        if coeff != 0.0:
            self.objective[vid] = self.objective.get(vid, 0.0) + coeff

    @property
    def num_variables(self) -> int:
        return len(self.var_names)

    @property
    def num_binaries(self) -> int:
        return sum(1 for k in self.var_kinds if k == "binary")

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)


# -- LP writing -------------------------------------------------------


def _expr_lines(terms: list[tuple[float, str]], indent: str = " ") -> list[str]:
    """Render coefficient/name pairs as +/- separated chunks, wrapped."""
    parts: list[str] = []
    for i, (c, name) in enumerate(terms):
        mag = format_number(abs(c))
        if i == 0:
            parts.append(f"- {mag} {name}" if c < 0 else f"{mag} {name}")
        else:
            parts.append(f"- {mag} {name}" if c < 0 else f"+ {mag} {name}")
    lines, cur = [], indent
    for part in parts:
        if len(cur) + len(part) + 1 > 240 and cur.strip():
            lines.append(cur)
            cur = indent + "  "
        cur += ("" if cur == indent or cur.endswith("  ") else " ") + part
    lines.append(cur)
    return lines


def write_lp(model: Model, destination) -> None:
    """Emit the model as CPLEX-LP text, byte-identical across runs."""
    if model.num_variables == 0:
        raise ModelError("refusing to write an empty model")
    out: list[str] = [f"\\ Problem: {model.name}"]
    if model.objective_offset:
        out.append(f"\\ objective offset: {format_number(model.objective_offset)}")
    out.append("Minimize")
    obj_terms = [
        (c, model.var_names[v]) for v, c in model.objective.items() if c != 0.0
    ]
    if obj_terms:
        first = _expr_lines(obj_terms)
        out.append(" obj: " + first[0].lstrip())
        out.extend(first[1:])
    else:
        out.append(" obj: 0 " + model.var_names[0])
    out.append("Subject To")
    for con in model.constraints:
        terms = [(c, model.var_names[v]) for v, c in con.coeffs.items()]
        if not terms:
            raise ModelError(f"constraint {con.name} has no terms")
        body = _expr_lines(terms)
        sense = {"<=": "<=", ">=": ">=", "=": "="}[con.sense]
        body[-1] = f"{body[-1]} {sense} {format_number(con.rhs)}"
        out.append(f" {con.name}: " + body[0].lstrip())
        out.extend(body[1:])
    out.append("Bounds")
    for vid, name in enumerate(model.var_names):
        if model.var_kinds[vid] == "binary":
            continue
        lo, hi = model.var_lo[vid], model.var_hi[vid]
        if lo == -math.inf and hi == math.inf:
            out.append(f" {name} free")
        elif hi == math.inf:
            out.append(f" {name} >= {format_number(lo)}")
        elif lo == -math.inf:
            out.append(f" {name} <= {format_number(hi)}")
        elif lo == hi:
            out.append(f" {name} = {format_number(lo)}")
        else:
            out.append(f" {format_number(lo)} <= {name} <= {format_number(hi)}")
    binaries = [
        name
        for vid, name in enumerate(model.var_names)
        if model.var_kinds[vid] == "binary"
    ]
    if binaries:
        out.append("Binaries")
        cur = ""
        for name in binaries:
            if len(cur) + len(name) + 1 > 240:
                out.append(" " + cur.strip())
                cur = ""
            cur += name + " "
        if cur.strip():
            out.append(" " + cur.strip())
    out.append("End")
    text = "\n".join(out) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)


# -- LP parsing (independent of the builder, used by the shim and for
#    round-trip checks) ------------------------------------------------


@dataclass
class ParsedLP:
    """Plain-data image of an LP file."""

    sense: str  # "min" or "max"
    var_names: list[str]
    objective: dict[str, float]
    constraints: list[tuple[dict[str, float], str, float, str]]
    bounds: dict[str, tuple[float, float]]
    binaries: set[str] = field(default_factory=set)
    generals: set[str] = field(default_factory=set)


_TOKEN_RE = re.compile(
    r"(<=|>=|=<|=>|<|>|=|\+|-|:|[A-Za-z_\!\"#\$%&\(\)/,;\?@`'\{\}\|~\.][A-Za-z0-9_\!\"#\$%&\(\)/,;\?@`'\{\}\|~\.\[\]]*|[0-9\.][0-9\.eE\+\-]*)"
)
_SECTION_STARTS = {
    "minimize": "obj-min",
    "minimise": "obj-min",
    "min": "obj-min",
    "maximize": "obj-max",
    "maximise": "obj-max",
    "max": "obj-max",
    "subject": "constraints",
    "such": "constraints",
    "st": "constraints",
    "s.t.": "constraints",
    "bounds": "bounds",
    "bound": "bounds",
    "binaries": "binaries",
    "binary": "binaries",
    "bin": "binaries",
    "generals": "generals",
    "general": "generals",
    "gen": "generals",
    "end": "end",
}
_NUM_START = re.compile(r"^[0-9\.]|^[+-]?[0-9\.]")


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def parse_lp(source) -> ParsedLP:
    """Parse CPLEX-LP text into plain data.

    Supports the subset this package emits plus common variations:
    objective/constraint expressions with explicit +/- separators and
    line wrapping, bounds lines (including ``free`` and ``= fixed``),
    binary and general sections. Section keywords are recognized only
    at the start of a line, per the LP format.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        p = Path(source)
        text = p.read_text() if p.exists() else str(source)
    lines = []
    for raw in text.splitlines():
        body = raw.split("\\", 1)[0].rstrip()
        if body.strip():
            lines.append(body)

    parsed = ParsedLP("min", [], {}, [], {}, set(), set())
    seen: dict[str, None] = {}

    def note_var(name: str):
        if name not in seen:
            seen[name] = None
            parsed.var_names.append(name)

    tokens: list[str] = []
    line_start: list[bool] = []
    for line in lines:
        first = True
        for tok in _TOKEN_RE.findall(line):
            tokens.append(tok)
            line_start.append(first)
            first = False

    def section_at(j: int) -> str | None:
        if j >= len(tokens) or not line_start[j]:
            return None
        low = tokens[j].lower()
        if low in ("subject", "such"):
            nxt = tokens[j + 1] if j + 1 < len(tokens) else ""
            return "constraints" if nxt.lower() == "to" else None
        return _SECTION_STARTS.get(low)

    def read_expr(j: int) -> tuple[dict[str, float], int]:
        coeffs: dict[str, float] = {}
        sign = 1.0
        pending: float | None = None
        while j < len(tokens):
            tok = tokens[j]
            if tok in ("<=", ">=", "=", "<", ">", "=<", "=>"):
                break
            if section_at(j):
                break
            if tok == "+":
                j += 1
                continue
            if tok == "-":
                sign = -sign
                j += 1
                continue
            if _is_number(tok):
                val = float(tok)
                pending = (pending if pending is not None else 1.0) * val
                j += 1
                continue
            if j + 1 < len(tokens) and tokens[j + 1] == ":":
                break  # start of the next labelled constraint
            note_var(tok)
            c = sign * (pending if pending is not None else 1.0)
            coeffs[tok] = coeffs.get(tok, 0.0) + c
            sign, pending = 1.0, None
            j += 1
        if pending is not None:
            # trailing constant, folded into the rhs by the caller
            coeffs["__const__"] = coeffs.get("__const__", 0.0) + sign * pending
        return coeffs, j

    section = None
    i = 0
    while i < len(tokens):
        sec = section_at(i)
        if sec:
            i += 2 if tokens[i].lower() in ("subject", "such") else 1
            if sec == "end":
                break
            section = sec
            if sec == "obj-min":
                parsed.sense = "min"
            if sec == "obj-max":
                parsed.sense = "max"
            continue
        tok = tokens[i]
        nxt = tokens[i + 1] if i + 1 < len(tokens) else None
        if section in ("obj-min", "obj-max"):
            if nxt == ":":
                i += 2
                continue
            coeffs, i = read_expr(i)
            coeffs.pop("__const__", None)
            for k, v in coeffs.items():
                parsed.objective[k] = parsed.objective.get(k, 0.0) + v
        elif section == "constraints":
            name = f"r{len(parsed.constraints)}"
            if nxt == ":":
                name = tok
                i += 2
            coeffs, i = read_expr(i)
            if i >= len(tokens):
                raise SolverError(f"constraint {name} has no sense/rhs")
            sense = {"<": "<=", ">": ">=", "=<": "<=", "=>": ">="}.get(
                tokens[i], tokens[i]
            )
            i += 1
            rhs_coeffs, i = read_expr(i)
            rhs = rhs_coeffs.pop("__const__", 0.0)
            if rhs_coeffs:
                raise SolverError(f"variables on rhs of {name} are unsupported")
            rhs -= coeffs.pop("__const__", 0.0)
            parsed.constraints.append((coeffs, sense, rhs, name))
        elif section == "bounds":
            j = i
            toks = [tokens[j]]
            j += 1
            while j < len(tokens) and not line_start[j]:
                toks.append(tokens[j])
                j += 1

            def setb(name, lo=None, hi=None):
                note_var(name)
                cur = parsed.bounds.get(name, (0.0, math.inf))
                parsed.bounds[name] = (
                    cur[0] if lo is None else lo,
                    cur[1] if hi is None else hi,
                )

            def tofloat(t):
                v = float(t)  # accepts inf/-inf/infinity spellings
                if abs(v) >= 1e30:
                    v = math.copysign(math.inf, v)
                return v

            # normalize "- 5 <= x" token splits: merge sign into numbers
            norm: list[str] = []
            k = 0
            while k < len(toks):
                if toks[k] in ("+", "-") and k + 1 < len(toks) and _is_number(toks[k + 1]):
                    norm.append(toks[k] + toks[k + 1])
                    k += 2
                else:
                    norm.append(toks[k])
                    k += 1
            if len(norm) == 2 and norm[1].lower() == "free":
                setb(norm[0], -math.inf, math.inf)
            elif len(norm) == 5:
                lo, _s1, name, _s2, hi = norm
                setb(name, tofloat(lo), tofloat(hi))
            elif len(norm) == 3:
                name, op, val = norm
                if op in (">=", "=>", ">"):
                    setb(name, lo=tofloat(val))
                elif op in ("<=", "=<", "<"):
                    setb(name, hi=tofloat(val))
                elif op == "=":
                    setb(name, tofloat(val), tofloat(val))
                else:
                    raise SolverError(f"bad bounds line near {name}")
            else:
                raise SolverError(f"bad bounds line near {' '.join(norm)}")
            i = j
        elif section == "binaries":
            note_var(tok)
            parsed.binaries.add(tok)
            i += 1
        elif section == "generals":
            note_var(tok)
            parsed.generals.add(tok)
            i += 1
        else:
            raise SolverError(f"unexpected token {tok!r} before any section")
    for b in parsed.binaries:
        parsed.bounds.setdefault(b, (0.0, 1.0))
    return parsed


# -- Solutions ---------------------------------------------------------

_STATUS_ALIASES = {
    "optimal": "optimal",
    "feasible": "feasible",
    "stopped": "feasible",
    "infeasible": "infeasible",
    "unbounded": "unbounded",
    "error": "error",
}


@dataclass
class Solution:
    status: str
    objective: float | None
    assignment: dict[str, float]
    wall_time_s: float = 0.0
    mip_gap: float | None = None

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")

    def value(self, name: str) -> float:
        return self.assignment.get(name, 0.0)


def write_solution_generic(sol: Solution, destination) -> None:
    lines = [f"status {sol.status}"]
    if sol.objective is not None:
        lines.append(f"objective {sol.objective!r}")
    if sol.mip_gap is not None:
        lines.append(f"gap {sol.mip_gap!r}")
    for name, val in sol.assignment.items():
        lines.append(f"{name} {val!r}")
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)


def parse_solution_generic(text: str) -> Solution:
    status, objective, gap = "error", None, None
    assignment: dict[str, float] = {}
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        key = parts[0].lower()
        if key == "status" and len(parts) > 1:
            status = _STATUS_ALIASES.get(parts[1].lower(), "error")
        elif key == "objective" and len(parts) > 1:
            objective = float(parts[1])
        elif key == "gap" and len(parts) > 1:
            gap = float(parts[1])
        elif len(parts) >= 2:
            assignment[parts[0]] = float(parts[1])
    return Solution(status, objective, assignment, mip_gap=gap)


def parse_solution_cbc(text: str) -> Solution:
    lines = text.splitlines()
    if not lines:
        raise SolverError("empty cbc solution file")
    head = lines[0].lower()
    objective = None
    m = re.search(r"objective value\s+(-?[\d.eE+]+)", lines[0])
    if m:
        objective = float(m.group(1))
    if "optimal" in head:
        status = "optimal"
    elif "infeasible" in head:
        status = "infeasible"
    elif "unbounded" in head:
        status = "unbounded"
    elif "stopped" in head or "feasible" in head:
        status = "feasible"
    else:
        status = "error"
    assignment = {}
    for line in lines[1:]:
        parts = line.split()
        if len(parts) >= 3:
            assignment[parts[1]] = float(parts[2])
    return Solution(status, objective, assignment)


def parse_solution_highs(text: str) -> Solution:
    lines = text.splitlines()
    status = "error"
    objective = None
    assignment: dict[str, float] = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line == "Model status":
            i += 1
            while i < len(lines) and not lines[i].strip():
                i += 1
            if i < len(lines):
                status = _STATUS_ALIASES.get(lines[i].strip().lower(), "error")
        elif line.startswith("Objective"):
            parts = line.split()
            if len(parts) >= 2:
                objective = float(parts[1])
        elif line.startswith("# Columns"):
            n = int(line.split()[-1])
            for j in range(i + 1, i + 1 + n):
                parts = lines[j].split()
                assignment[parts[0]] = float(parts[1])
            i += n
        elif line.startswith("# Rows"):
            break
        i += 1
    return Solution(status, objective, assignment)


_SOLUTION_PARSERS = {
    "generic": parse_solution_generic,
    "cbc": parse_solution_cbc,
    "highs": parse_solution_highs,
}


def solve(
    model: Model,
    solver_cmd: str = DEFAULT_SOLVER_CMD,
    time_limit: float = DEFAULT_TIME_LIMIT,
    mip_gap: float = DEFAULT_MIP_GAP,
    workdir: str | Path | None = None,
    dialect: str = "generic",
    keep_files: bool = False,
) -> Solution:
    """Write the model, run the external solver, read the solution back.

    ``solver_cmd`` is a template with {lp}, {sol}, {time_limit} and
    {mip_gap} placeholders. The parsed objective is shifted by the
    model's constant objective offset.
    """
    import tempfile

    if dialect not in _SOLUTION_PARSERS:
        raise SolverError(f"unknown solution dialect {dialect!r}")
    ctx = None
    if workdir is None:
        ctx = tempfile.TemporaryDirectory(prefix="bessopt_")
        workdir = ctx.name
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    lp_path = workdir / f"{model.name}.lp"
    sol_path = workdir / f"{model.name}.sol"
    try:
        write_lp(model, lp_path)
        cmd = solver_cmd.format(
            lp=str(lp_path),
            sol=str(sol_path),
            time_limit=format_number(time_limit),
            mip_gap=format_number(mip_gap),
        )
        t0 = time.perf_counter()
        try:
            proc = subprocess.run(
                shlex.split(cmd),
                capture_output=True,
                text=True,
                timeout=time_limit + 120.0,
            )
        except FileNotFoundError as exc:
            raise SolverError(f"solver executable not found: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            raise SolverError(f"solver exceeded hard timeout: {exc}") from exc
        wall = time.perf_counter() - t0
        if not sol_path.exists():
            raise SolverError(
                f"solver wrote no solution file (exit {proc.returncode}): "
                f"{proc.stderr.strip()[:500] or proc.stdout.strip()[:500]}"
            )
        sol = _SOLUTION_PARSERS[dialect](sol_path.read_text())
        sol.wall_time_s = wall
        if sol.ok:
            _complete_assignment(model, sol)
            if sol.objective is not None:
                sol.objective += model.objective_offset
        return sol
    finally:
        if ctx is not None and keep_files:
            ctx.cleanup = lambda: None  # pragma: no cover
        if ctx is not None and not keep_files:
            ctx.cleanup()


def _complete_assignment(model: Model, sol: Solution) -> None:
    """Fill omitted variables with 0 and snap binaries to exact 0/1."""
    for vid, name in enumerate(model.var_names):
        val = sol.assignment.get(name, 0.0)
        if model.var_kinds[vid] == "binary":
            snapped = round(val)
            if abs(val - snapped) > 1e-5:
                raise SolverError(
                    f"binary {name} came back fractional ({val}); "
                    "solver integrality tolerance too loose"
                )
            val = float(min(1, max(0, snapped)))
        sol.assignment[name] = val
