"""Hybrid-automaton data model and the text model format.

The model format is line-oriented with `#` comments:

    vars x, t;
    settings { delta 0.01; horizon 10; depth unbounded; aggregation off;
               decompose all; rep sf; }
    location on { flow x' = -0.1*x + 3; flow t' = 1; inv x <= 24; }
    jump on -> off { guard x >= 23; reset t := 0; }
    init on { x >= 20; x <= 20; t = 0; }
    unsafe off { x >= 25; }

Only autonomous affine dynamics, affine resets, and linear constraints are
expressible.  Equality constraints expand to inequality pairs so every
condition is a plain system C x <= d.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .geometry import Condition

DECOMPOSE_MODES = ("none", "timed", "discrete", "all", "components")
REPRESENTATIONS = ("box", "sf")


class ParseError(ValueError):
    """Model-text diagnostic with a 1-based source position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True, eq=False)
class AffineFlow:
    """Dynamics x' = Ax + b."""

    a_matrix: np.ndarray
    b_vector: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_matrix, dtype=float)
        b = np.asarray(self.b_vector, dtype=float).ravel()
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
            raise ValueError("flow needs a square matrix and a matching vector")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_vector", b)

    @property
    def dim(self) -> int:
        return self.b_vector.shape[0]


@dataclass(frozen=True, eq=False)
class AffineReset:
    """Jump update x' = A'x + c; identity with zero offset means no reset."""

    a_matrix: np.ndarray
    c_vector: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_matrix, dtype=float)
        c = np.asarray(self.c_vector, dtype=float).ravel()
        if a.ndim != 2 or a.shape[0] != a.shape[1] or c.shape[0] != a.shape[0]:
            raise ValueError("reset needs a square matrix and a matching vector")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "c_vector", c)

    @staticmethod
    def identity(dim: int) -> "AffineReset":
        return AffineReset(np.eye(dim), np.zeros(dim))

    @property
    def is_identity(self) -> bool:
        d = self.c_vector.shape[0]
        return np.array_equal(self.a_matrix, np.eye(d)) and not self.c_vector.any()


@dataclass(frozen=True, eq=False)
class Location:
    name: str
    flow: AffineFlow
    invariant: Condition


@dataclass(frozen=True, eq=False)
class Jump:
    source: str
    target: str
    guard: Condition
    reset: AffineReset


@dataclass(frozen=True, eq=False)
class HybridAutomaton:
    """Autonomous affine hybrid automaton over an ordered variable list."""

    variables: tuple[str, ...]
    locations: tuple[Location, ...]
    jumps: tuple[Jump, ...]
    initial: Mapping[str, Condition]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "locations", tuple(self.locations))
        object.__setattr__(self, "jumps", tuple(self.jumps))
        object.__setattr__(self, "initial", MappingProxyType(dict(self.initial)))

    @property
    def dim(self) -> int:
        return len(self.variables)

    def location(self, name: str) -> Location:
        for loc in self.locations:
            if loc.name == name:
                return loc
        raise KeyError(name)

    def var_index(self, name: str) -> int:
        return self.variables.index(name)


@dataclass(frozen=True)
class ReachSettings:
    """Analysis parameters; `depth=None` means unbounded jump depth."""

    delta: float = 0.01
    horizon: float = 1.0
    depth: int | None = None
    aggregation: bool = False
    decompose: str = "none"
    rep: str = "box"

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("time step must be positive")
        if self.horizon <= 0:
            raise ValueError("time horizon must be positive")
        if self.depth is not None and self.depth < 0:
            raise ValueError("jump depth bound must be nonnegative")
        if self.decompose not in DECOMPOSE_MODES:
            raise ValueError(f"unknown decomposition mode {self.decompose!r}")
        if self.rep not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.rep!r}")


@dataclass(frozen=True, eq=False)
class UnsafeSpec:
    """Bad-state conditions per location name; "*" applies everywhere."""

    conditions: Mapping[str, Condition] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "conditions", MappingProxyType(dict(self.conditions)))

    def for_location(self, name: str) -> list[Condition]:
        out = []
        if name in self.conditions:
            out.append(self.conditions[name])
        if "*" in self.conditions:
            out.append(self.conditions["*"])
        return out

    @property
    def is_empty(self) -> bool:
        return not self.conditions


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|:=|<=|>=|==|[{};,='*+\-])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    value: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "newline":
            line += 1
            col = 1
        else:
            if kind == "number":
                tokens.append(_Token("number", value, line, col))
            elif kind == "ident":
                tokens.append(_Token("ident", value, line, col))
            elif kind == "op":
                tokens.append(_Token(value, value, line, col))
            col += len(value)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables: list[str] = []
        self.locations: list[Location] = []
        self.jumps: list[tuple] = []
        self.initial: dict[str, list] = {}
        self.unsafe: dict[str, Condition] = {}
        self.settings_kv: dict[str, str] = {}

    # -- token plumbing -------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            want = what or f"{kind!r}"
            raise ParseError(f"expected {want}, found {tok.value or 'end of input'!r}",
                             tok.line, tok.col)
        return self.advance()

    def fail(self, message: str) -> ParseError:
        tok = self.peek()
        return ParseError(message, tok.line, tok.col)

    # -- grammar --------------------------------------------------------

    def parse(self):
        if self.peek().kind == "eof":
            raise ParseError("empty model", 1, 1)
        while self.peek().kind != "eof":
            tok = self.expect("ident", "a declaration keyword")
            if tok.value == "vars":
                self.parse_vars()
            elif tok.value == "settings":
                self.parse_settings()
            elif tok.value == "location":
                self.parse_location()
            elif tok.value == "jump":
                self.parse_jump()
            elif tok.value == "init":
                self.parse_init()
            elif tok.value == "unsafe":
                self.parse_unsafe()
            else:
                raise ParseError(f"unknown declaration {tok.value!r}", tok.line, tok.col)
        return self.build()

    def parse_vars(self):
        if self.variables:
            raise self.fail("duplicate vars declaration")
        while True:
            tok = self.expect("ident", "a variable name")
            if tok.value in self.variables:
                raise ParseError(f"duplicate variable {tok.value!r}", tok.line, tok.col)
            self.variables.append(tok.value)
            if self.peek().kind == ",":
                self.advance()
                continue
            break
        self.expect(";")

    def parse_settings(self):
        self.expect("{")
        while self.peek().kind != "}":
            key = self.expect("ident", "a settings key").value
            if key in self.settings_kv:
                raise self.fail(f"duplicate setting {key!r}")
            tok = self.peek()
            if tok.kind not in ("ident", "number"):
                raise self.fail(f"expected a value for setting {key!r}")
            self.advance()
            self.settings_kv[key] = tok.value
            self.expect(";")
        self.expect("}")

    def require_vars(self, tok: _Token):
        if not self.variables:
            raise ParseError("vars must be declared before use", tok.line, tok.col)

    def parse_location(self):
        name_tok = self.expect("ident", "a location name")
        self.require_vars(name_tok)
        if any(loc.name == name_tok.value for loc in self.locations):
            raise ParseError(f"duplicate location {name_tok.value!r}",
                             name_tok.line, name_tok.col)
        n = len(self.variables)
        a = np.zeros((n, n))
        b = np.zeros(n)
        flow_set = [False] * n
        rows, bounds = [], []
        self.expect("{")
        while self.peek().kind != "}":
            kw = self.expect("ident", "'flow' or 'inv'")
            if kw.value == "flow":
                var_tok = self.expect("ident", "a variable name")
                idx = self.var_index(var_tok)
                self.expect("'")
                self.expect("=")
                coeffs, const = self.parse_linexpr()
                if flow_set[idx]:
                    raise ParseError(f"duplicate flow for {var_tok.value!r}",
                                     var_tok.line, var_tok.col)
                flow_set[idx] = True
                a[idx] = coeffs
                b[idx] = const
            elif kw.value == "inv":
                self.parse_constraint(rows, bounds)
            else:
                raise ParseError(f"expected 'flow' or 'inv', found {kw.value!r}",
                                 kw.line, kw.col)
            self.expect(";")
        self.expect("}")
        inv = Condition(np.array(rows), np.array(bounds)) if rows else Condition.true(n)
        self.locations.append(Location(name_tok.value, AffineFlow(a, b), inv))

    def parse_jump(self):
        src = self.expect("ident", "a source location")
        self.require_vars(src)
        self.expect("->")
        dst = self.expect("ident", "a target location")
        n = len(self.variables)
        rows, bounds = [], []
        reset_a = np.eye(n)
        reset_c = np.zeros(n)
        reset_set = [False] * n
        self.expect("{")
        while self.peek().kind != "}":
            kw = self.expect("ident", "'guard' or 'reset'")
            if kw.value == "guard":
                self.parse_constraint(rows, bounds)
            elif kw.value == "reset":
                var_tok = self.expect("ident", "a variable name")
                idx = self.var_index(var_tok)
                self.expect(":=")
                coeffs, const = self.parse_linexpr()
                if reset_set[idx]:
                    raise ParseError(f"duplicate reset for {var_tok.value!r}",
                                     var_tok.line, var_tok.col)
                reset_set[idx] = True
                reset_a[idx] = coeffs
                reset_c[idx] = const
            else:
                raise ParseError(f"expected 'guard' or 'reset', found {kw.value!r}",
                                 kw.line, kw.col)
            self.expect(";")
        self.expect("}")
        guard = Condition(np.array(rows), np.array(bounds)) if rows else Condition.true(n)
        self.jumps.append((src, dst, guard, AffineReset(reset_a, reset_c)))

    def parse_init(self):
        name_tok = self.expect("ident", "a location name")
        self.require_vars(name_tok)
        rows = self.initial.setdefault(name_tok.value, [[], []])
        self.expect("{")
        while self.peek().kind != "}":
            self.parse_constraint(rows[0], rows[1])
            self.expect(";")
        self.expect("}")

    def parse_unsafe(self):
        tok = self.peek()
        if tok.kind == "ident":
            name = self.advance().value
        elif tok.kind == "*":
            self.advance()
            name = "*"
        else:
            raise self.fail("expected a location name or '*'")
        self.require_vars(tok)
        if name in self.unsafe:
            raise ParseError(f"duplicate unsafe block for {name!r}", tok.line, tok.col)
        rows, bounds = [], []
        self.expect("{")
        while self.peek().kind != "}":
            self.parse_constraint(rows, bounds)
            self.expect(";")
        self.expect("}")
        if not rows:
            raise ParseError(f"empty unsafe block for {name!r}", tok.line, tok.col)
        self.unsafe[name] = Condition(np.array(rows), np.array(bounds))

    # -- expressions ----------------------------------------------------

    def var_index(self, tok: _Token) -> int:
        try:
            return self.variables.index(tok.value)
        except ValueError:
            raise ParseError(f"unknown variable {tok.value!r}", tok.line, tok.col) from None

    def parse_linexpr(self) -> tuple[np.ndarray, float]:
        """Linear expression as (coefficient vector, constant)."""
        coeffs = np.zeros(len(self.variables))
        const = 0.0
        first = True
        while True:
            tok = self.peek()
            if tok.kind in (";", "<=", ">=", "=", "==", "eof", "}"):
                if first:
                    raise self.fail("expected an expression")
                return coeffs, const
            if not first:
                if tok.kind not in ("+", "-"):
                    raise self.fail(f"expected '+', '-' or end of expression, "
                                    f"found {tok.value!r}")
            c, idx = self.parse_term()
            if idx is None:
                const += c
            else:
                coeffs[idx] += c
            first = False

    def parse_term(self) -> tuple[float, int | None]:
        sign = 1.0
        while self.peek().kind in ("+", "-"):
            if self.advance().kind == "-":
                sign = -sign
        coeff = sign
        var_idx = None
        while True:
            tok = self.peek()
            if tok.kind == "number":
                self.advance()
                coeff *= float(tok.value)
            elif tok.kind == "ident":
                if var_idx is not None:
                    raise ParseError("nonlinear term: product of two variables",
                                     tok.line, tok.col)
                self.advance()
                var_idx = self.var_index(tok)
            else:
                raise self.fail(f"expected a number or variable, found {tok.value!r}")
            if self.peek().kind == "*":
                self.advance()
                continue
            return coeff, var_idx

    def parse_constraint(self, rows: list, bounds: list):
        lc, lconst = self.parse_linexpr()
        op = self.peek()
        if op.kind not in ("<=", ">=", "=", "=="):
            raise self.fail(f"expected a comparison operator, found {op.value!r}")
        self.advance()
        rc, rconst = self.parse_linexpr()
        # +0.0 collapses negative zeros so printing round-trips exactly
        row = lc - rc + 0.0
        bound = rconst - lconst + 0.0
        if op.kind == "<=":
            rows.append(row)
            bounds.append(bound)
        elif op.kind == ">=":
            rows.append(-row + 0.0)
            bounds.append(-bound + 0.0)
        else:
            rows.append(row)
            bounds.append(bound)
            rows.append(-row + 0.0)
            bounds.append(-bound + 0.0)

    # -- assembly -------------------------------------------------------

    def build(self):
        n = len(self.variables)
        if n == 0:
            raise ParseError("model declares no variables", 1, 1)
        names = {loc.name for loc in self.locations}
        jumps = []
        for src, dst, guard, reset in self.jumps:
            for tok in (src, dst):
                if tok.value not in names:
                    raise ParseError(f"unresolved location {tok.value!r}",
                                     tok.line, tok.col)
            jumps.append(Jump(src.value, dst.value, guard, reset))
        initial = {}
        for name, (rows, bounds) in self.initial.items():
            if name not in names:
                raise ParseError(f"init references unknown location {name!r}", 1, 1)
            cond = Condition(np.array(rows), np.array(bounds)) if rows else Condition.true(n)
            initial[name] = cond
        if not initial:
            raise ParseError("model has no init block", 1, 1)
        for name in self.unsafe:
            if name != "*" and name not in names:
                raise ParseError(f"unsafe references unknown location {name!r}", 1, 1)
        automaton = HybridAutomaton(tuple(self.variables), tuple(self.locations),
                                    tuple(jumps), initial)
        settings = self.build_settings()
        return automaton, settings, UnsafeSpec(self.unsafe)

    def build_settings(self) -> ReachSettings:
        kv = dict(self.settings_kv)

        def number(key, default=None):
            if key not in kv:
                return default
            try:
                return float(kv.pop(key))
            except ValueError:
                raise ParseError(f"setting {key!r} needs a number", 1, 1) from None

        delta = number("delta", 0.01)
        horizon = number("horizon")
        if horizon is None:
            raise ParseError("setting 'horizon' is required", 1, 1)
        depth_raw = kv.pop("depth", "unbounded")
        depth = None if depth_raw == "unbounded" else int(float(depth_raw))
        agg_raw = kv.pop("aggregation", "off")
        if agg_raw not in ("on", "off"):
            raise ParseError("setting 'aggregation' must be on or off", 1, 1)
        decompose = kv.pop("decompose", "none")
        rep = kv.pop("rep", "box")
        if kv:
            raise ParseError(f"unknown setting {next(iter(kv))!r}", 1, 1)
        try:
            return ReachSettings(delta=delta, horizon=horizon, depth=depth,
                                 aggregation=(agg_raw == "on"),
                                 decompose=decompose, rep=rep)
        except ValueError as exc:
            raise ParseError(str(exc), 1, 1) from None


def parse_model(text: str) -> tuple[HybridAutomaton, ReachSettings, UnsafeSpec]:
    """Parse a model source into (automaton, settings, unsafe states)."""
    return _Parser(text).parse()


def validate(automaton: HybridAutomaton,
             unsafe: UnsafeSpec | None = None) -> list[str]:
    """Structural checks on a possibly hand-built automaton.

    Returns a list of human-readable diagnostics; empty means well formed.
    """
    out = []
    n = automaton.dim
    seen = set()
    for loc in automaton.locations:
        if loc.name in seen:
            out.append(f"duplicate location name {loc.name!r}")
        seen.add(loc.name)
        if loc.flow.dim != n:
            out.append(f"location {loc.name!r}: flow dimension {loc.flow.dim} != {n}")
        if loc.invariant.dim != n:
            out.append(f"location {loc.name!r}: invariant dimension mismatch")
    for jump in automaton.jumps:
        for end in (jump.source, jump.target):
            if end not in seen:
                out.append(f"jump references undeclared location {end!r}")
        if jump.guard.dim != n:
            out.append(f"jump {jump.source}->{jump.target}: guard dimension mismatch")
        if jump.reset.c_vector.shape[0] != n:
            out.append(f"jump {jump.source}->{jump.target}: reset dimension mismatch")
    if not automaton.initial:
        out.append("automaton has no initial condition")
    for name, cond in automaton.initial.items():
        if name not in seen:
            out.append(f"initial condition references undeclared location {name!r}")
        if cond.dim != n:
            out.append(f"initial condition for {name!r}: dimension mismatch")
    if unsafe is not None:
        for name, cond in unsafe.conditions.items():
            if name != "*" and name not in seen:
                out.append(f"unsafe condition references undeclared location {name!r}")
            if cond.dim != n:
                out.append(f"unsafe condition for {name!r}: dimension mismatch")
    return out


# -- pretty printing ----------------------------------------------------


def _fmt_expr(coeffs: np.ndarray, const: float, variables: tuple[str, ...]) -> str:
    parts = []
    for c, name in zip(coeffs, variables):
        if c == 0.0:
            continue
        parts.append((float(c), f"*{name}"))
    if const != 0.0 or not parts:
        parts.append((float(const), ""))
    pieces = []
    for i, (value, suffix) in enumerate(parts):
        mag = repr(abs(value)) + suffix
        if i == 0:
            pieces.append(mag if value >= 0 else f"-{mag}")
        else:
            pieces.append(f"+ {mag}" if value >= 0 else f"- {mag}")
    return " ".join(pieces)


def _fmt_rows(keyword: str, cond: Condition, variables: tuple[str, ...]) -> list[str]:
    lines = []
    prefix = f"  {keyword} " if keyword else "  "
    for row, bound in zip(cond.c_matrix, cond.d_vector):
        lhs = _fmt_expr(row, 0.0, variables) if row.any() else "0"
        lines.append(f"{prefix}{lhs} <= {repr(float(bound))};")
    return lines


def format_model(automaton: HybridAutomaton,
                 settings: ReachSettings | None = None,
                 unsafe: UnsafeSpec | None = None) -> str:
    """Render a model back to source text; re-parsing yields an equal model."""
    v = automaton.variables
    lines = [f"vars {', '.join(v)};", ""]
    if settings is not None:
        depth = "unbounded" if settings.depth is None else str(settings.depth)
        lines += [
            "settings {",
            f"  delta {repr(settings.delta)};",
            f"  horizon {repr(settings.horizon)};",
            f"  depth {depth};",
            f"  aggregation {'on' if settings.aggregation else 'off'};",
            f"  decompose {settings.decompose};",
            f"  rep {settings.rep};",
            "}",
            "",
        ]
    for loc in automaton.locations:
        lines.append(f"location {loc.name} {{")
        for i, name in enumerate(v):
            row = loc.flow.a_matrix[i]
            b = loc.flow.b_vector[i]
            if row.any() or b != 0.0:
                lines.append(f"  flow {name}' = {_fmt_expr(row, b, v)};")
        lines += _fmt_rows("inv", loc.invariant, v)
        lines += ["}", ""]
    for jump in automaton.jumps:
        lines.append(f"jump {jump.source} -> {jump.target} {{")
        lines += _fmt_rows("guard", jump.guard, v)
        for i, name in enumerate(v):
            row = jump.reset.a_matrix[i]
            c = jump.reset.c_vector[i]
            ident_row = row[i] == 1.0 and np.count_nonzero(row) == 1
            if not ident_row or c != 0.0:
                lines.append(f"  reset {name} := {_fmt_expr(row, c, v)};")
        lines += ["}", ""]
    for name, cond in automaton.initial.items():
        lines.append(f"init {name} {{")
        lines += _fmt_rows("", cond, v)
        lines += ["}", ""]
    if unsafe is not None:
        for name, cond in unsafe.conditions.items():
            lines.append(f"unsafe {name} {{")
            lines += _fmt_rows("", cond, v)
            lines += ["}", ""]
    return "\n".join(lines) + "\n"
