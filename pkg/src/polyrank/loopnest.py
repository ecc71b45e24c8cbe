"""Loop-nest IR, the nest-description format, and microkernel handling.

A nest document is line oriented::

    nest matmul
    param M = 4
    loop i lower 0 upper M
    loop j lower 0 upper N step 1
    let ij = i * 2
    microkernel gemm_microkernel
      arg &C[i][0]
      loop k lower 0 upper K
    end
    statement S
      read A[i][k]
      write C[i][j]
      body C[i][j] += A[i][k] * B[k][j];
    annotation #pragma omp parallel for

Keywords are matched at the start of a line; indentation is ignored.
``annotation``, ``arg`` and ``body`` take the rest of the line verbatim;
on every other line ``#`` starts a comment. Loops inside a ``microkernel``
block form the microkernel band (innermost, contiguous); the block's loops
are the loop-equivalent of the call and are analyzed like any other loop.
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

from .affine import (
    Aff,
    Expr,
    ExprSyntaxError,
    NonAffineExpression,
    UnboundParameter,
    parse_expr,
)
from .intset import AffineConstraint, IntRel, IntSet, Kind, Space

__all__ = [
    "LoopTag",
    "Mode",
    "Loop",
    "Let",
    "ArrayRef",
    "Statement",
    "MicrokernelSpec",
    "KernelCall",
    "LoopNest",
    "AccessRelations",
    "ParseError",
    "NotSupported",
    "MissingMicrokernelSpec",
    "InvalidNest",
    "parse_nest",
    "iteration_space",
    "access_relations",
    "footprint",
    "restore_microkernel",
    "inline_microkernel",
    "emit_source",
    "UnboundParameter",
    "NonAffineExpression",
]


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line = line
        self.column = column


class NotSupported(ValueError):
    pass


class MissingMicrokernelSpec(ValueError):
    pass


class InvalidNest(ValueError):
    pass


class LoopTag(enum.Enum):
    NORMAL = "normal"
    MICROKERNEL_BAND = "band"


class Mode(enum.Enum):
    READ = "read"
    WRITE = "write"


@dataclass(frozen=True)
class Loop:
    var: str
    lower: Expr
    upper: tuple[Expr, ...]  # exclusive; the effective bound is the min
    step: int = 1
    tag: LoopTag = LoopTag.NORMAL

    @property
    def is_band(self) -> bool:
        return self.tag is LoopTag.MICROKERNEL_BAND


@dataclass(frozen=True)
class Let:
    """Scalar definition folded into subscripts, e.g. ``ij = oj * STRIDE_H``."""

    name: str
    expr: Expr
    in_band: bool = False


@dataclass(frozen=True)
class ArrayRef:
    array: str
    index: tuple[Expr, ...]
    mode: Mode

    def __str__(self):
        return self.array + "".join(f"[{e}]" for e in self.index)


@dataclass(frozen=True)
class Statement:
    id: str
    refs: tuple[ArrayRef, ...]
    body: str | None = None

    @property
    def reads(self) -> tuple[ArrayRef, ...]:
        return tuple(r for r in self.refs if r.mode is Mode.READ)

    @property
    def writes(self) -> tuple[ArrayRef, ...]:
        return tuple(r for r in self.refs if r.mode is Mode.WRITE)


@dataclass(frozen=True)
class MicrokernelSpec:
    callee: str
    band_loop_vars: tuple[str, ...]
    call_args: tuple[str, ...] = ()


@dataclass(frozen=True)
class KernelCall:
    """Band loops collapsed into a call; keeps what inlining needs back."""

    spec: MicrokernelSpec
    band: tuple[Loop, ...]
    lets: tuple[Let, ...] = ()


@dataclass(frozen=True)
class LoopNest:
    loops: tuple[Loop, ...]
    stmt: Statement
    params: tuple[tuple[str, int], ...] = ()
    annotations: tuple[str, ...] = ()
    lets: tuple[Let, ...] = ()
    microkernel: MicrokernelSpec | None = None
    call: KernelCall | None = None
    name: str = "nest"

    @property
    def param_env(self) -> dict[str, int]:
        return dict(self.params)

    @property
    def loop_vars(self) -> tuple[str, ...]:
        return tuple(l.var for l in self.loops)

    @property
    def band_loops(self) -> tuple[Loop, ...]:
        return tuple(l for l in self.loops if l.is_band)

    @property
    def outer_loops(self) -> tuple[Loop, ...]:
        return tuple(l for l in self.loops if not l.is_band)

    def loop(self, var: str) -> Loop:
        for l in self.loops:
            if l.var == var:
                return l
        raise KeyError(var)

    def let_env(self) -> dict[str, Aff | int]:
        """Parameters plus lets lowered to affine forms over loop variables."""
        env: dict[str, Aff | int] = dict(self.params)
        for let in self.lets:
            env[let.name] = let.expr.to_aff(env, self.loop_vars)
        return env

    def lower(self, expr: Expr) -> Aff:
        return expr.to_aff(self.let_env(), self.loop_vars)

    def loop_bounds(self, loop: Loop) -> tuple[Aff, tuple[Aff, ...]]:
        env = self.let_env()
        return loop.lower.to_aff(env, self.loop_vars), tuple(u.to_aff(env, self.loop_vars) for u in loop.upper)

    def ref_index(self, ref: ArrayRef) -> tuple[Aff, ...]:
        env = self.let_env()
        return tuple(e.to_aff(env, self.loop_vars) for e in ref.index)

    def trip_count(self, loop: Loop) -> int:
        """Trip count of a loop whose bounds do not depend on other loops."""
        lo, ups = self.loop_bounds(loop)
        if not lo.is_constant or not all(u.is_constant for u in ups):
            raise InvalidNest(f"loop {loop.var} has non-constant bounds")
        hi = min(u.const for u in ups)
        return max(0, -(-(hi - lo.const) // loop.step))

    @property
    def space(self) -> Space:
        return Space(self.stmt.id, self.loop_vars)

    def arrays(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.stmt.refs:
            seen.setdefault(r.array, None)
        return tuple(seen)

    def validate(self) -> "LoopNest":
        if self.call is not None:
            inline_microkernel(self).validate()
            return self
        names = self.loop_vars
        if len(set(names)) != len(names):
            raise InvalidNest(f"duplicate loop variable in {names}")
        clash = (set(names) | {l.name for l in self.lets}) & set(self.param_env)
        if clash:
            raise InvalidNest(f"names used both as parameter and variable: {sorted(clash)}")
        env: dict[str, Aff | int] = dict(self.params)
        for let in self.lets:
            env[let.name] = let.expr.to_aff(env, names)
        for pos, loop in enumerate(self.loops):
            if loop.step <= 0:
                raise InvalidNest(f"loop {loop.var} has non-positive step {loop.step}")
            for e in (loop.lower, *loop.upper):
                aff = e.to_aff(env, names)
                inner = aff.variables() - set(names[:pos])
                if inner:
                    raise InvalidNest(f"bound of loop {loop.var} uses {sorted(inner)}, which are not outer loops")
        band = [i for i, l in enumerate(self.loops) if l.is_band]
        if band and band != list(range(len(self.loops) - len(band), len(self.loops))):
            raise InvalidNest("microkernel band loops must be innermost and contiguous")
        if self.microkernel is not None:
            if tuple(self.loops[i].var for i in band) != self.microkernel.band_loop_vars:
                raise InvalidNest("microkernel band variables do not match the band loops")
        arity: dict[str, int] = {}
        for ref in self.stmt.refs:
            for e in ref.index:
                e.to_aff(env, names)
            if arity.setdefault(ref.array, len(ref.index)) != len(ref.index):
                raise InvalidNest(f"array {ref.array} used with inconsistent arity")
        if not self.stmt.refs:
            raise InvalidNest(f"statement {self.stmt.id} has no references")
        return self


# --- parsing ------------------------------------------------------------------

_VERBATIM = ("annotation", "arg", "body")
_LOOP_RE = re.compile(r"^loop\s+(\w+)\s+lower\s+(.+?)\s+upper\s+(.+?)(?:\s+step\s+(.+?))?\s*$")
_REF_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*((?:\[[^\]]*\]\s*)+)$")


def _strip_comment(line: str) -> str:
    stripped = line.strip()
    if stripped.startswith("#"):
        return ""
    word = stripped.split(None, 1)[0] if stripped else ""
    if word in _VERBATIM:
        return stripped
    return re.sub(r"\s#.*$", "", stripped).strip()


def _expr(text: str, lineno: int, col: int) -> Expr:
    try:
        return parse_expr(text)
    except ExprSyntaxError as exc:
        raise ParseError(str(exc), lineno, col + exc.column - 1) from None


def _parse_ref(text: str, mode: Mode, lineno: int, col: int) -> ArrayRef:
    m = _REF_RE.match(text)
    if not m:
        raise ParseError(f"malformed array reference {text!r}", lineno, col)
    name, subs = m.group(1), m.group(2)
    index = []
    base = col + text.index(subs)
    for sm in re.finditer(r"\[([^\]]*)\]", subs):
        for part in sm.group(1).split(","):
            index.append(_expr(part, lineno, base + sm.start(1)))
    return ArrayRef(name, tuple(index), mode)


def parse_nest(text: str) -> LoopNest:
    """Parse a nest document into a validated LoopNest with all parameters bound."""
    name = "nest"
    params: dict[str, int] = {}
    loops: list[Loop] = []
    lets: list[Let] = []
    annotations: list[str] = []
    stmts: list[tuple[str, list[ArrayRef], list[str], int]] = []
    mk_callee: str | None = None
    mk_args: list[str] = []
    mk_vars: list[str] = []
    in_mk = False
    mk_done = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        col = raw.index(line[0]) + 1
        word, _, rest = line.partition(" ")
        rest = rest.strip()
        rcol = col + len(line) - len(rest) if rest else col + len(word)
        if word == "nest":
            name = rest or name
        elif word == "param":
            m = re.match(r"^(\w+)\s*=\s*(.+)$", rest)
            if not m:
                raise ParseError("expected 'param NAME = VALUE'", lineno, rcol)
            value = _expr(m.group(2), lineno, rcol).to_aff(params)
            if not value.is_constant:
                raise ParseError(f"parameter {m.group(1)} is not constant", lineno, rcol)
            params[m.group(1)] = value.const
        elif word == "loop":
            if stmts:
                raise NotSupported(f"line {lineno}: loops after a statement (imperfect or multi-statement nest)")
            if mk_done:
                raise ParseError("loop after the microkernel block; the band must be innermost", lineno, col)
            m = _LOOP_RE.match(line)
            if not m:
                raise ParseError("expected 'loop VAR lower EXPR upper EXPR [step N]'", lineno, col)
            step = 1
            if m.group(4):
                step_aff = _expr(m.group(4), lineno, col + m.start(4)).to_aff(params)
                if not step_aff.is_constant or step_aff.const <= 0:
                    raise ParseError("step must be a positive constant", lineno, col + m.start(4))
                step = step_aff.const
            loops.append(
                Loop(
                    m.group(1),
                    _expr(m.group(2), lineno, col + m.start(2)),
                    (_expr(m.group(3), lineno, col + m.start(3)),),
                    step,
                    LoopTag.MICROKERNEL_BAND if in_mk else LoopTag.NORMAL,
                )
            )
            if in_mk:
                mk_vars.append(m.group(1))
        elif word == "let":
            m = re.match(r"^(\w+)\s*=\s*(.+)$", rest)
            if not m:
                raise ParseError("expected 'let NAME = EXPR'", lineno, rcol)
            lets.append(Let(m.group(1), _expr(m.group(2), lineno, rcol + m.start(2)), in_mk))
        elif word == "annotation":
            annotations.append(rest)
        elif word == "microkernel":
            if mk_callee is not None:
                raise NotSupported(f"line {lineno}: more than one microkernel block")
            if not rest:
                raise ParseError("microkernel needs a callee name", lineno, rcol)
            mk_callee = rest.split()[0]
            in_mk = True
        elif word == "arg":
            if not in_mk:
                raise ParseError("'arg' outside a microkernel block", lineno, col)
            mk_args.append(rest)
        elif word == "end":
            if not in_mk:
                raise ParseError("'end' without microkernel block", lineno, col)
            in_mk = False
            mk_done = True
        elif word == "statement":
            if stmts:
                raise NotSupported(f"line {lineno}: only single-statement nests are supported")
            stmts.append((rest or "S", [], [], lineno))
        elif word in ("read", "write", "body"):
            if not stmts:
                raise ParseError(f"'{word}' outside a statement block", lineno, col)
            if word == "body":
                stmts[-1][2].append(rest)
            else:
                mode = Mode.READ if word == "read" else Mode.WRITE
                stmts[-1][1].append(_parse_ref(rest, mode, lineno, rcol))
        else:
            raise ParseError(f"unknown keyword {word!r}", lineno, col)

    if in_mk:
        raise ParseError("unterminated microkernel block", len(text.splitlines()), 1)
    if not stmts:
        raise ParseError("no statement block", max(1, len(text.splitlines())), 1)
    sid, refs, body, sline = stmts[0]
    if not refs:
        raise ParseError(f"statement {sid} has no references", sline, 1)
    mk = MicrokernelSpec(mk_callee, tuple(mk_vars), tuple(mk_args)) if mk_callee else None
    nest = LoopNest(
        loops=tuple(loops),
        stmt=Statement(sid, tuple(refs), " ".join(body) if body else None),
        params=tuple(params.items()),
        annotations=tuple(annotations),
        lets=tuple(lets),
        microkernel=mk,
        name=name,
    )
    return nest.validate()


# --- polyhedral views ---------------------------------------------------------


def _loop_constraints(nest: LoopNest) -> list[AffineConstraint]:
    dims = nest.loop_vars
    cons = []
    for loop in nest.loops:
        lo, ups = nest.loop_bounds(loop)
        v = Aff.var(loop.var)
        cons.append(AffineConstraint.from_aff(v - lo, dims))
        for u in ups:
            cons.append(AffineConstraint.from_aff(u - v - 1, dims))
        if loop.step > 1:
            cons.append(AffineConstraint.from_aff(v - lo, dims, Kind.EQ, loop.step))
    return cons


def iteration_constraints(nest: LoopNest) -> list[AffineConstraint]:
    """Constraints of the iteration space, over ``nest.loop_vars``."""
    return _loop_constraints(_inlined(nest))


def _inlined(nest: LoopNest) -> LoopNest:
    return inline_microkernel(nest) if nest.call is not None else nest


@functools.lru_cache(maxsize=8)
def iteration_space(nest: LoopNest) -> IntSet:
    """One point per execution of the statement, dims ordered outermost first."""
    nest = _inlined(nest)
    return IntSet.from_constraints(nest.space, [_loop_constraints(nest)])


@dataclass(frozen=True)
class AccessRelations:
    per_ref: tuple[IntRel, ...]
    reads: dict[str, IntRel] = field(hash=False)
    writes: dict[str, IntRel] = field(hash=False)

    def arrays(self) -> list[str]:
        return sorted(set(self.reads) | set(self.writes))


def array_space(nest: LoopNest, array: str) -> Space:
    for r in nest.stmt.refs:
        if r.array == array:
            return Space(array, tuple(f"{array.lower()}{k}" for k in range(len(r.index))))
    raise KeyError(array)


def ref_relation(nest: LoopNest, ref: ArrayRef) -> IntRel:
    nest = _inlined(nest)
    return IntRel.affine_map(nest.space, array_space(nest, ref.array), nest.ref_index(ref))


@functools.lru_cache(maxsize=32)
def access_relations(nest: LoopNest) -> AccessRelations:
    """Per-reference access maps plus per-array unions of reads and writes."""
    nest = _inlined(nest)
    per_ref = tuple(ref_relation(nest, r) for r in nest.stmt.refs)
    reads: dict[str, IntRel] = {}
    writes: dict[str, IntRel] = {}
    for ref, rel in zip(nest.stmt.refs, per_ref):
        bucket = reads if ref.mode is Mode.READ else writes
        bucket[ref.array] = bucket[ref.array].union(rel) if ref.array in bucket else rel
    return AccessRelations(per_ref, reads, writes)


def footprint(nest: LoopNest, iters: IntSet) -> int:
    """Distinct array elements touched by ``iters``, summed over arrays."""
    acc = access_relations(nest)
    total = 0
    for array in acc.arrays():
        touched = None
        for rel in (acc.reads.get(array), acc.writes.get(array)):
            if rel is None:
                continue
            img = rel.apply(iters)
            touched = img if touched is None else touched.union(img)
        total += touched.cardinality()
    return total


# --- microkernel substitution -------------------------------------------------


def restore_microkernel(nest: LoopNest) -> LoopNest:
    """Collapse the band loops back into the microkernel call."""
    if nest.call is not None:
        return nest
    if nest.microkernel is None or not nest.band_loops:
        raise MissingMicrokernelSpec(f"nest {nest.name} has no microkernel band to restore")
    call = KernelCall(nest.microkernel, nest.band_loops, tuple(l for l in nest.lets if l.in_band))
    return replace(
        nest,
        loops=nest.outer_loops,
        lets=tuple(l for l in nest.lets if not l.in_band),
        call=call,
    )


def inline_microkernel(nest: LoopNest) -> LoopNest:
    """Inverse of restore_microkernel."""
    if nest.call is None:
        return nest
    return replace(
        nest,
        loops=nest.loops + nest.call.band,
        lets=nest.lets + nest.call.lets,
        call=None,
    )


# --- emission -----------------------------------------------------------------


def _let_anchor(let: Let, order: Sequence[str], anchors: dict[str, int]) -> int:
    pos = -1
    for name in let.expr.names():
        if name in order:
            pos = max(pos, order.index(name))
        elif name in anchors:
            pos = max(pos, anchors[name])
    return pos


def _loop_header(loop: Loop) -> str:
    upper = [str(u) for u in loop.upper]
    bound = upper[0] if len(upper) == 1 else f"min({', '.join(upper)})"
    inc = f"++{loop.var}" if loop.step == 1 else f"{loop.var} += {loop.step}"
    return f"for ({loop.var} = {loop.lower}; {loop.var} < {bound}; {inc}) {{"


def _default_body(stmt: Statement) -> str:
    target = stmt.writes[0] if stmt.writes else None
    args = ", ".join(str(r) for r in stmt.reads)
    if target is None:
        return f"{stmt.id}({args});"
    return f"{target} = {stmt.id}({args});"


def emit_source(nest: LoopNest, title: str | None = None, indent: str = "  ") -> str:
    """C-like rendering of the nest; restored nests emit the microkernel call."""
    lines: list[str] = []
    if title:
        lines.append(f"/* {title} */")
    if nest.params:
        lines.append("/* parameters: " + ", ".join(f"{k} = {v}" for k, v in nest.params) + " */")
    body_loops = list(nest.loops)
    lets = list(nest.lets)
    order = [l.var for l in body_loops]
    if nest.call is not None:
        order_all = order + [l.var for l in nest.call.band]
    else:
        order_all = order
    anchors: dict[str, int] = {}
    placed: dict[int, list[Let]] = {}
    for let in lets:
        a = _let_anchor(let, order_all, anchors)
        anchors[let.name] = a
        placed.setdefault(a, []).append(let)
    for let in placed.get(-1, []):
        lines.append(f"{let.name} = {let.expr};")
    lines.extend(nest.annotations)
    depth = 0
    band_open = False
    for pos, loop in enumerate(body_loops):
        if loop.is_band and not band_open and nest.microkernel is not None:
            lines.append(indent * depth + f"/* {nest.microkernel.callee} operation begins */")
            band_open = True
        lines.append(indent * depth + _loop_header(loop))
        depth += 1
        for let in placed.get(pos, []):
            lines.append(indent * depth + f"{let.name} = {let.expr};")
    if nest.call is not None:
        spec = nest.call.spec
        lines.append(indent * depth + f"{spec.callee}({', '.join(spec.call_args)});")
    else:
        lines.append(indent * depth + (nest.stmt.body or _default_body(nest.stmt)))
    for pos in range(len(body_loops) - 1, -1, -1):
        depth -= 1
        lines.append(indent * depth + "}")
        if band_open and body_loops[pos].is_band and (pos == 0 or not body_loops[pos - 1].is_band):
            lines.append(indent * depth + f"/* {nest.microkernel.callee} operation ends */")
    return "\n".join(lines) + "\n"
