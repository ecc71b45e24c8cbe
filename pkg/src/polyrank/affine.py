"""Small expression language for loop bounds and array subscripts.

Expressions are kept as a tiny AST so they can be printed back as C-like
source, and lowered to affine forms once parameters are bound.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

__all__ = [
    "Aff",
    "Expr",
    "Num",
    "Var",
    "BinOp",
    "Neg",
    "parse_expr",
    "ExprSyntaxError",
    "NonAffineExpression",
    "UnboundParameter",
]


class ExprSyntaxError(ValueError):
    def __init__(self, msg: str, column: int):
        super().__init__(f"{msg} (column {column})")
        self.column = column


class NonAffineExpression(ValueError):
    pass


class UnboundParameter(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unbound parameter {self.name!r}"


class Aff:
    """Affine form ``sum(coeffs[v] * v) + const`` with integer coefficients."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: Mapping[str, int] | None = None, const: int = 0):
        self.coeffs = {k: int(v) for k, v in (coeffs or {}).items() if v != 0}
        self.const = int(const)

    @classmethod
    def var(cls, name: str) -> "Aff":
        return cls({name: 1})

    @property
    def is_constant(self) -> bool:
        return not self.coeffs

    def coeff(self, name: str) -> int:
        return self.coeffs.get(name, 0)

    def variables(self) -> set[str]:
        return set(self.coeffs)

    def __add__(self, other: "Aff | int") -> "Aff":
        if isinstance(other, int):
            return Aff(self.coeffs, self.const + other)
        merged = dict(self.coeffs)
        for k, v in other.coeffs.items():
            merged[k] = merged.get(k, 0) + v
        return Aff(merged, self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "Aff":
        return Aff({k: -v for k, v in self.coeffs.items()}, -self.const)

    def __sub__(self, other: "Aff | int") -> "Aff":
        return self + (-other)

    def __rsub__(self, other: int) -> "Aff":
        return (-self) + other

    def __mul__(self, k: int) -> "Aff":
        return Aff({v: c * k for v, c in self.coeffs.items()}, self.const * k)

    __rmul__ = __mul__

    def substitute(self, env: Mapping[str, "Aff"]) -> "Aff":
        out = Aff({}, self.const)
        for v, c in self.coeffs.items():
            out = out + (env[v] * c if v in env else Aff({v: c}))
        return out

    def evaluate(self, env: Mapping[str, int]) -> int:
        return self.const + sum(c * env[v] for v, c in self.coeffs.items())

    def vector(self, names: Iterable[str]) -> list[int]:
        return [self.coeffs.get(n, 0) for n in names]

    def __eq__(self, other):
        if isinstance(other, int):
            return self.is_constant and self.const == other
        if not isinstance(other, Aff):
            return NotImplemented
        return self.coeffs == other.coeffs and self.const == other.const

    def __hash__(self):
        return hash((tuple(sorted(self.coeffs.items())), self.const))

    def __repr__(self):
        return f"Aff({self.coeffs}, {self.const})"

    def __str__(self):
        parts = []
        for v, c in self.coeffs.items():
            if c == 1:
                term = v
            elif c == -1:
                term = f"-{v}"
            else:
                term = f"{c}*{v}"
            parts.append(term)
        if self.const or not parts:
            parts.append(str(self.const))
        text = " + ".join(parts)
        return text.replace("+ -", "- ")


# --- AST ---------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "%": 2}


class Expr:
    """Base class of the expression AST."""

    prec = 3

    def names(self) -> set[str]:
        raise NotImplementedError

    def to_aff(self, env: Mapping[str, "Aff | int"], loop_vars: Iterable[str] = ()) -> Aff:
        """Lower to an affine form.

        ``env`` binds parameters (ints) and let-variables (Aff). Names in
        ``loop_vars`` stay symbolic; anything else raises UnboundParameter.
        """
        raise NotImplementedError

    def __add__(self, other: "Expr") -> "Expr":
        return BinOp("+", self, _wrap(other))

    def __sub__(self, other: "Expr") -> "Expr":
        return BinOp("-", self, _wrap(other))

    def __mul__(self, other: "Expr") -> "Expr":
        return BinOp("*", self, _wrap(other))


def _wrap(x: Union["Expr", int]) -> "Expr":
    return Num(x) if isinstance(x, int) else x


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: int

    def names(self):
        return set()

    def to_aff(self, env, loop_vars=()):
        return Aff({}, self.value)

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str

    def names(self):
        return {self.name}

    def to_aff(self, env, loop_vars=()):
        if self.name in env:
            val = env[self.name]
            return Aff({}, val) if isinstance(val, int) else val
        if self.name in set(loop_vars):
            return Aff.var(self.name)
        raise UnboundParameter(self.name)

    def __str__(self):
        return self.name


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr

    def names(self):
        return self.operand.names()

    def to_aff(self, env, loop_vars=()):
        return -self.operand.to_aff(env, loop_vars)

    def __str__(self):
        inner = str(self.operand)
        if self.operand.prec < 3:
            inner = f"({inner})"
        return f"-{inner}"


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def prec(self):  # type: ignore[override]
        return _PREC[self.op]

    def names(self):
        return self.left.names() | self.right.names()

    def to_aff(self, env, loop_vars=()):
        a = self.left.to_aff(env, loop_vars)
        b = self.right.to_aff(env, loop_vars)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            if a.is_constant:
                return b * a.const
            if b.is_constant:
                return a * b.const
            raise NonAffineExpression(f"product of non-constant terms in {self}")
        if not (a.is_constant and b.is_constant):
            raise NonAffineExpression(f"'{self.op}' over non-constant operands in {self}")
        if b.const == 0:
            raise NonAffineExpression(f"division by zero in {self}")
        if self.op == "/":
            return Aff({}, a.const // b.const)
        return Aff({}, a.const % b.const)

    def __str__(self):
        left = str(self.left)
        if self.left.prec < self.prec:
            left = f"({left})"
        right = str(self.right)
        # left-associative: equal precedence on the right needs parens for - / %
        if self.right.prec < self.prec or (self.right.prec == self.prec and self.op in "-/%"):
            right = f"({right})"
        return f"{left} {self.op} {right}"


# --- parser ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_]\w*)|(.))")


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        col = m.start(m.lastindex) + 1 if m.lastindex else pos + 1
        if m.group(1):
            toks.append(("int", int(m.group(1)), col))
        elif m.group(2):
            toks.append(("name", m.group(2), col))
        elif m.group(3):
            toks.append(("op", m.group(3), col))
        pos = m.end()
    toks.append(("end", None, len(text) + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, val, col = self.take()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"expected {op!r}", col)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/%":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        kind, val, col = self.peek()
        if kind == "op" and val == "-":
            self.take()
            operand = self.unary()
            if isinstance(operand, Num):
                return Num(-operand.value)
            return Neg(operand)
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.atom()

    def atom(self) -> Expr:
        kind, val, col = self.take()
        if kind == "int":
            return Num(val)
        if kind == "name":
            return Var(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError("expected a number, name or '('", col)


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    node = p.expr()
    kind, val, col = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {val!r}", col)
    return node
