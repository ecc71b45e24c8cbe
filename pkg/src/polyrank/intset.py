"""Exact finite integer sets and relations over affine constraints.

Sets are materialized: an ``IntSet`` owns a lexicographically sorted,
duplicate-free ``(n, d)`` array of points. Constraint systems are turned
into points by bounded enumeration: each conjunction is projected dimension
by dimension (Fourier-Motzkin over the rationals, with integer tightening),
and the projections give per-prefix lower/upper bounds for the next
dimension. The projections over-approximate, so every enumerated point is
re-checked against the original constraints.

Relations stay symbolic (a union of conjunctions over ``in ++ out``
dimensions); they are only enumerated relative to a concrete input set, or
searched depth-first for lexicographic extrema of their domain.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .affine import Aff

__all__ = [
    "Space",
    "Kind",
    "AffineConstraint",
    "IntSet",
    "IntRel",
    "Order",
    "SpaceMismatch",
    "EmptySet",
    "UnboundedSet",
    "union",
    "intersect",
    "subtract",
    "apply",
    "lexmin",
    "lexmax",
    "cardinality",
    "lex_order_set",
]


class SpaceMismatch(ValueError):
    pass


class EmptySet(ValueError):
    pass


class UnboundedSet(ValueError):
    pass


class Space(NamedTuple):
    name: str
    dims: tuple[str, ...]

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def __str__(self):
        return f"{self.name}[{', '.join(self.dims)}]"


class Kind(enum.Enum):
    EQ = "="
    GE = ">="


class Order(enum.Enum):
    STRICTLY_BEFORE = "<<"
    BEFORE_OR_EQUAL = "<<="


@dataclass(frozen=True)
class AffineConstraint:
    """``coeffs . x + const`` compared against zero.

    With ``kind=EQ`` and ``modulus > 0`` the constraint is a congruence:
    ``(coeffs . x + const) mod modulus == 0``. Congruences encode strided
    loops; they filter points but do not take part in bound derivation.
    """

    coeffs: tuple[int, ...]
    const: int
    kind: Kind = Kind.GE
    modulus: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(int(c) for c in self.coeffs))
        object.__setattr__(self, "const", int(self.const))
        if not any(self.coeffs) and self.const == 0:
            raise ValueError("constraint with all-zero coefficients and constant")
        if self.modulus < 0 or (self.modulus and self.kind is not Kind.EQ):
            raise ValueError("modulus is only valid on EQ constraints and must be positive")

    @classmethod
    def from_aff(cls, aff: Aff, dims: Sequence[str], kind: Kind = Kind.GE, modulus: int = 0):
        extra = aff.variables() - set(dims)
        if extra:
            raise SpaceMismatch(f"constraint mentions {sorted(extra)} outside {list(dims)}")
        return cls(tuple(aff.vector(dims)), aff.const, kind, modulus)

    @property
    def ndim(self) -> int:
        return len(self.coeffs)

    def holds(self, pts: np.ndarray) -> np.ndarray:
        val = pts @ np.asarray(self.coeffs, dtype=np.int64) + self.const
        if self.kind is Kind.GE:
            return val >= 0
        if self.modulus:
            return val % self.modulus == 0
        return val == 0

    def format(self, dims: Sequence[str]) -> str:
        aff = Aff(dict(zip(dims, self.coeffs)), 0)
        lhs = str(aff) if aff.coeffs else "0"
        if self.modulus:
            return f"({lhs} + {self.const}) mod {self.modulus} = 0".replace("+ -", "- ")
        rhs = -self.const
        op = ">=" if self.kind is Kind.GE else "="
        if all(c <= 0 for c in self.coeffs):
            lhs = str(-aff)
            rhs = -rhs
            op = "<=" if self.kind is Kind.GE else "="
        return f"{lhs} {op} {rhs}"


# --- conjunction engine -------------------------------------------------------

# Elimination rows are (coeffs: tuple, const: int, is_eq: bool).


def _normalize(row):
    coeffs, const, is_eq = row
    g = 0
    for c in coeffs:
        g = math.gcd(g, c)
    if g == 0:
        return row
    if is_eq:
        if const % g:
            return None  # no integer solution
        return tuple(c // g for c in coeffs), const // g, True
    return tuple(c // g for c in coeffs), const // g, False


def _trivial(row) -> bool | None:
    """True if trivially satisfied, False if trivially violated, None otherwise."""
    coeffs, const, is_eq = row
    if any(coeffs):
        return None
    return const == 0 if is_eq else const >= 0


def _eliminate(rows, k):
    """Project out the last dimension ``k`` of ``rows``; returns rows over dims < k."""
    eqs = [r for r in rows if r[2] and r[0][k] != 0]
    out = []
    if eqs:
        pivot = min(eqs, key=lambda r: abs(r[0][k]))
        a = pivot[0][k]
        sa = 1 if a > 0 else -1
        for r in rows:
            if r is pivot:
                continue
            b = r[0][k]
            if b == 0:
                out.append(r)
                continue
            coeffs = tuple(abs(a) * x - sa * b * y for x, y in zip(r[0], pivot[0]))
            out.append((coeffs, abs(a) * r[1] - sa * b * pivot[1], r[2]))
    else:
        lower = [r for r in rows if r[0][k] > 0]
        upper = [r for r in rows if r[0][k] < 0]
        out = [r for r in rows if r[0][k] == 0]
        for lo in lower:
            for up in upper:
                p, q = lo[0][k], -up[0][k]
                coeffs = tuple(q * x + p * y for x, y in zip(lo[0], up[0]))
                out.append((coeffs, q * lo[1] + p * up[1], False))
    eq_rows = []
    seen = set()
    tightest: dict[tuple, int] = {}  # inequalities with equal coefficients: keep the smallest constant
    for r in out:
        r = (r[0][:k], r[1], r[2])
        r = _normalize(r)
        if r is None:
            return None
        t = _trivial(r)
        if t is True:
            continue
        if t is False:
            return None
        if r[2]:
            if r not in seen:
                seen.add(r)
                eq_rows.append(r)
        elif r[0] not in tightest or r[1] < tightest[r[0]]:
            tightest[r[0]] = r[1]
    for coeffs, const in tightest.items():
        neg = tuple(-c for c in coeffs)
        if neg in tightest and const + tightest[neg] < 0:
            return None
    return eq_rows + [(c, v, False) for c, v in tightest.items()]


@functools.lru_cache(maxsize=4096)
def _project(ndim: int, rows: tuple) -> tuple | None:
    """All successive projections of ``rows`` (index k holds rows over dims < k), or None if empty."""
    projections: list = [None] * (ndim + 1)
    projections[ndim] = list(rows)
    for k in range(ndim, 0, -1):
        proj = _eliminate(projections[k], k - 1)
        if proj is None:
            return None
        projections[k - 1] = proj
    return tuple(projections)


class _Level:
    """Bounds on dimension k as functions of dims < k.

    ``x_k >= ceil((L . x + e) / l)`` for each lower row and
    ``x_k <= floor((U . x + f) / u)`` for each upper row.
    """

    def __init__(self, rows, k):
        lo, up = [], []
        for coeffs, const, is_eq in rows:
            a = coeffs[k]
            if a == 0:
                continue
            rest = coeffs[:k]
            if is_eq:
                if a < 0:
                    a, rest, const = -a, tuple(-c for c in rest), -const
                lo.append((tuple(-c for c in rest), -const, a))
                up.append((tuple(-c for c in rest), -const, a))
            elif a > 0:
                lo.append((tuple(-c for c in rest), -const, a))
            else:
                up.append((rest, const, -a))
        self.k = k
        self.lo_rows = lo
        self.up_rows = up
        self.L = np.array([r[0] for r in lo], dtype=np.int64).reshape(len(lo), k)
        self.e = np.array([r[1] for r in lo], dtype=np.int64)
        self.l = np.array([r[2] for r in lo], dtype=np.int64)
        self.U = np.array([r[0] for r in up], dtype=np.int64).reshape(len(up), k)
        self.f = np.array([r[1] for r in up], dtype=np.int64)
        self.u = np.array([r[2] for r in up], dtype=np.int64)

    @property
    def bounded(self) -> bool:
        return bool(self.lo_rows) and bool(self.up_rows)

    def bounds(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        num_lo = pts @ self.L.T + self.e
        lo = (-((-num_lo) // self.l)).max(axis=1)
        num_up = pts @ self.U.T + self.f
        hi = (num_up // self.u).min(axis=1)
        return lo, hi

    def scalar_bounds(self, prefix: Sequence[int]) -> tuple[int, int]:
        lo = max(-((-(sum(c * x for c, x in zip(r[0], prefix)) + r[1])) // r[2]) for r in self.lo_rows)
        hi = min((sum(c * x for c, x in zip(r[0], prefix)) + r[1]) // r[2] for r in self.up_rows)
        return lo, hi


class _Conj:
    """One conjunction of affine constraints over ``ndim`` dimensions."""

    def __init__(self, ndim: int, constraints: Iterable[AffineConstraint], dim_names: Sequence[str] = ()):
        self.ndim = ndim
        self.constraints = tuple(constraints)
        for c in self.constraints:
            if c.ndim != ndim:
                raise SpaceMismatch(f"constraint arity {c.ndim} != {ndim}")
        self.dim_names = tuple(dim_names) or tuple(f"x{i}" for i in range(ndim))
        self._levels: list[_Level] | None = None
        self._checks: list[list] | None = None
        self.infeasible = False

    def _prepare(self):
        if self._levels is not None:
            return
        rows = []
        for c in self.constraints:
            if c.modulus:
                continue
            r = _normalize((c.coeffs, c.const, c.kind is Kind.EQ))
            if r is None:
                self.infeasible = True
                break
            rows.append(r)
        projections = None
        if not self.infeasible:
            projections = _project(self.ndim, tuple(rows))
            self.infeasible = projections is None
        if self.infeasible:
            projections = [[] for _ in range(self.ndim + 1)]
        self._levels = [_Level(projections[k + 1], k) for k in range(self.ndim)]
        self._checks = projections

    def _require_bounded(self, k: int):
        level = self._levels[k]
        if not level.bounded:
            raise UnboundedSet(f"dimension {self.dim_names[k]!r} is not bounded")

    def holds(self, pts: np.ndarray) -> np.ndarray:
        mask = np.ones(len(pts), dtype=bool)
        for c in self.constraints:
            mask &= c.holds(pts)
        return mask

    def _prefix_ok(self, pts: np.ndarray) -> np.ndarray:
        m = pts.shape[1]
        mask = np.ones(len(pts), dtype=bool)
        for coeffs, const, is_eq in self._checks[m]:
            val = pts @ np.asarray(coeffs, dtype=np.int64) + const
            mask &= (val == 0) if is_eq else (val >= 0)
        return mask

    def check_bounded(self, start: int = 0):
        self._prepare()
        if self.infeasible:
            return
        for k in range(start, self.ndim):
            self._require_bounded(k)

    def enumerate(self, prefix: np.ndarray | None = None, upto: int | None = None) -> np.ndarray:
        """All points extending each row of ``prefix`` (lex order preserved).

        With ``upto < ndim`` the result is the rational shadow on the first
        ``upto`` dims (a superset of the integer projection).
        """
        self._prepare()
        if prefix is None:
            prefix = np.zeros((1, 0), dtype=np.int64)
        upto = self.ndim if upto is None else upto
        m = prefix.shape[1]
        if upto == self.ndim:
            self.check_bounded(m)
        if self.infeasible:
            return np.zeros((0, upto), dtype=np.int64)
        pts = prefix[self._prefix_ok(prefix)] if m else prefix
        for k in range(m, upto):
            self._require_bounded(k)
            lo, hi = self._levels[k].bounds(pts)
            counts = np.maximum(hi - lo + 1, 0)
            total = int(counts.sum())
            starts = np.cumsum(counts) - counts
            offsets = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
            col = np.repeat(lo, counts) + offsets
            pts = np.column_stack([np.repeat(pts, counts, axis=0), col])
        if upto == self.ndim:
            pts = pts[self.holds(pts)]
        return pts

    def iter_points(self, prefix: tuple = (), upto: int | None = None, reverse: bool = False) -> Iterator[tuple]:
        """Depth-first walk in lex (or reverse lex) order."""
        self._prepare()
        upto = self.ndim if upto is None else upto
        if self.infeasible:
            return
        if prefix:
            arr = np.asarray([prefix], dtype=np.int64)
            if not self._prefix_ok(arr)[0]:
                return
        yield from self._walk(tuple(prefix), upto, reverse)

    def _walk(self, prefix, upto, reverse):
        k = len(prefix)
        if k == upto:
            if upto == self.ndim:
                if not self.holds(np.asarray([prefix], dtype=np.int64))[0]:
                    return
            yield prefix
            return
        self._require_bounded(k)
        lo, hi = self._levels[k].scalar_bounds(prefix)
        values = range(hi, lo - 1, -1) if reverse else range(lo, hi + 1)
        for v in values:
            yield from self._walk(prefix + (v,), upto, reverse)

    def format(self) -> str:
        return " and ".join(c.format(self.dim_names) for c in self.constraints) or "true"


# --- row utilities -------------------------------------------------------------

_KEY_LIMIT = 1 << 62


def _row_keys(*arrays: np.ndarray):
    """Order-preserving int64 keys shared across arrays, or None on overflow."""
    nonempty = [a for a in arrays if len(a)]
    if not nonempty:
        return [np.zeros(len(a), dtype=np.int64) for a in arrays]
    d = nonempty[0].shape[1]
    lo = np.min([a.min(axis=0) for a in nonempty], axis=0) if d else np.zeros(0, np.int64)
    hi = np.max([a.max(axis=0) for a in nonempty], axis=0) if d else np.zeros(0, np.int64)
    span = (hi - lo + 1).tolist()
    mult = []
    acc = 1
    for s in reversed(span):
        mult.append(acc)
        acc *= s
        if acc >= _KEY_LIMIT:
            return None
    mult = np.asarray(mult[::-1], dtype=np.int64)
    return [((a - lo) @ mult) if len(a) else np.zeros(0, np.int64) for a in arrays]


def _unique_rows(arr: np.ndarray) -> np.ndarray:
    if len(arr) <= 1:
        return arr
    keys = _row_keys(arr)
    if keys is None:
        return np.unique(arr, axis=0)
    _, idx = np.unique(keys[0], return_index=True)
    return arr[idx]


def _member_mask(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) == 0 or len(b) == 0:
        return np.zeros(len(a), dtype=bool)
    keys = _row_keys(a, b)
    if keys is None:
        bset = set(map(tuple, b.tolist()))
        return np.fromiter((tuple(r) in bset for r in a.tolist()), dtype=bool, count=len(a))
    return np.isin(keys[0], keys[1])


def _lex_bisect(pts: np.ndarray, p: Sequence[int], right: bool) -> int:
    """Insertion index of ``p`` in lex-sorted ``pts`` (bisect_left / bisect_right)."""
    p = tuple(p)
    lo, hi = 0, len(pts)
    while lo < hi:
        mid = (lo + hi) // 2
        row = tuple(pts[mid].tolist())
        if row < p or (right and row == p):
            lo = mid + 1
        else:
            hi = mid
    return lo


# --- sets ---------------------------------------------------------------------


class IntSet:
    """Finite set of integer tuples in a named space.

    Immutable. Construct with :meth:`from_constraints`, :meth:`from_points`
    or :meth:`empty`; set algebra returns new sets.
    """

    __slots__ = ("space", "_pts", "disjuncts")

    def __init__(self, space: Space, points: np.ndarray, disjuncts=None, *, _canonical: bool = False):
        space = Space(space[0], tuple(space[1]))
        pts = np.asarray(points, dtype=np.int64).reshape(-1, space.ndim)
        if not _canonical:
            pts = _unique_rows(pts)
        pts.setflags(write=False)
        self.space = space
        self._pts = pts
        self.disjuncts = disjuncts

    @classmethod
    def empty(cls, space: Space) -> "IntSet":
        return cls(space, np.zeros((0, len(space[1])), dtype=np.int64), _canonical=True)

    @classmethod
    def from_points(cls, space: Space, points: Iterable[Sequence[int]]) -> "IntSet":
        rows = [tuple(p) for p in points]
        for r in rows:
            if len(r) != len(space[1]):
                raise SpaceMismatch(f"point {r} does not belong to {space}")
        return cls(space, np.array(rows, dtype=np.int64).reshape(len(rows), len(space[1])))

    @classmethod
    def from_constraints(cls, space: Space, disjuncts: Sequence[Sequence[AffineConstraint]]) -> "IntSet":
        """Union of conjunctions. Raises UnboundedSet for infinite sets."""
        space = Space(space[0], tuple(space[1]))
        parts = []
        conjs = []
        for conj_cons in disjuncts:
            conj = _Conj(space.ndim, conj_cons, space.dims)
            conjs.append(conj)
            parts.append(conj.enumerate())
        pts = np.vstack(parts) if parts else np.zeros((0, space.ndim), np.int64)
        return cls(space, pts, disjuncts=tuple(conjs))

    @classmethod
    def box(cls, space: Space, bounds: Sequence[tuple[int, int]]) -> "IntSet":
        """Rectangular set; each bound pair is (inclusive lower, exclusive upper)."""
        dims = space[1]
        cons = []
        for j, (lo, hi) in enumerate(bounds):
            e = [0] * len(dims)
            e[j] = 1
            cons.append(AffineConstraint(tuple(e), -lo))
            cons.append(AffineConstraint(tuple(-x for x in e), hi - 1))
        return cls.from_constraints(space, [cons])

    # -- views
    @property
    def points(self) -> np.ndarray:
        return self._pts

    @property
    def ndim(self) -> int:
        return self.space.ndim

    def __len__(self):
        return len(self._pts)

    def cardinality(self) -> int:
        return len(self._pts)

    def is_empty(self) -> bool:
        return len(self._pts) == 0

    def __iter__(self):
        return iter(map(tuple, self._pts.tolist()))

    def __contains__(self, point) -> bool:
        p = np.asarray(point, dtype=np.int64).reshape(1, -1)
        if p.shape[1] != self.ndim:
            return False
        return bool(_member_mask(p, self._pts)[0])

    def _check(self, other: "IntSet"):
        if self.space != other.space:
            raise SpaceMismatch(f"{self.space} vs {other.space}")

    # -- algebra
    def union(self, other: "IntSet") -> "IntSet":
        self._check(other)
        if other.is_empty():
            return self
        if self.is_empty():
            return other
        return IntSet(self.space, np.vstack([self._pts, other._pts]))

    def intersect(self, other: "IntSet") -> "IntSet":
        self._check(other)
        return IntSet(self.space, self._pts[_member_mask(self._pts, other._pts)], _canonical=True)

    def subtract(self, other: "IntSet") -> "IntSet":
        self._check(other)
        return IntSet(self.space, self._pts[~_member_mask(self._pts, other._pts)], _canonical=True)

    __or__ = union
    __and__ = intersect
    __sub__ = subtract

    def lex_order_set(self, p: Sequence[int], mode: Order) -> "IntSet":
        p = tuple(p)
        if len(p) != self.ndim:
            raise SpaceMismatch(f"point {p} is not in {self.space}")
        # points are lex sorted, so the result is a prefix
        cut = _lex_bisect(self._pts, p, right=mode is Order.BEFORE_OR_EQUAL)
        return IntSet(self.space, self._pts[:cut], _canonical=True)

    def lexmin(self) -> tuple[int, ...]:
        if self.is_empty():
            raise EmptySet(f"lexmin of empty set in {self.space}")
        return tuple(self._pts[0].tolist())

    def lexmax(self) -> tuple[int, ...]:
        if self.is_empty():
            raise EmptySet(f"lexmax of empty set in {self.space}")
        return tuple(self._pts[-1].tolist())

    def is_equal(self, other: "IntSet") -> bool:
        """Extensional equality: mutual subtraction is empty."""
        self._check(other)
        return self.subtract(other).is_empty() and other.subtract(self).is_empty()

    def __eq__(self, other):
        if not isinstance(other, IntSet):
            return NotImplemented
        return self.space == other.space and self.is_equal(other)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self):
        return f"IntSet({self.space}, {len(self)} points)"

    def __str__(self):
        head = f"{self.space.name}[{', '.join(self.space.dims)}]"
        if self.disjuncts is not None:
            body = " or ".join(c.format() for c in self.disjuncts)
            return f"{{ {head} : {body} }}"
        shown = [f"{self.space.name}[{', '.join(map(str, p))}]" for p in self._pts[:16].tolist()]
        if len(self) > 16:
            shown.append(f"... ({len(self)} points)")
        return "{ " + "; ".join(shown) + " }"


# --- relations ----------------------------------------------------------------


def _primed(in_dims: Sequence[str], out_dims: Sequence[str]) -> tuple[str, ...]:
    taken = set(in_dims)
    names = []
    for d in out_dims:
        n = d
        while n in taken:
            n += "'"
        taken.add(n)
        names.append(n)
    return tuple(names)


class IntRel:
    """Relation between two spaces as a union of affine conjunctions.

    Constraints range over the concatenated ``in_dims ++ out_dims``.
    """

    __slots__ = ("in_space", "out_space", "disjuncts", "_conjs")

    def __init__(self, in_space: Space, out_space: Space, disjuncts: Sequence[Sequence[AffineConstraint]]):
        self.in_space = Space(in_space[0], tuple(in_space[1]))
        self.out_space = Space(out_space[0], tuple(out_space[1]))
        self.disjuncts = tuple(tuple(d) for d in disjuncts)
        names = self.in_space.dims + _primed(self.in_space.dims, self.out_space.dims)
        n = self.n_in + self.n_out
        self._conjs = tuple(_Conj(n, d, names) for d in self.disjuncts)

    @classmethod
    def affine_map(cls, in_space: Space, out_space: Space, exprs: Sequence[Aff], extra=()) -> "IntRel":
        """``{ in -> out : out_k = exprs[k](in) }``, optionally with extra constraints."""
        in_space = Space(in_space[0], tuple(in_space[1]))
        out_space = Space(out_space[0], tuple(out_space[1]))
        if len(exprs) != len(out_space.dims):
            raise SpaceMismatch(f"{len(exprs)} expressions for {out_space}")
        n_in, n_out = len(in_space.dims), len(out_space.dims)
        cons = list(extra)
        for k, e in enumerate(exprs):
            vec = e.vector(in_space.dims)
            extra_vars = e.variables() - set(in_space.dims)
            if extra_vars:
                raise SpaceMismatch(f"expression {e} uses {sorted(extra_vars)} outside {in_space}")
            out = [0] * n_out
            out[k] = -1
            cons.append(AffineConstraint(tuple(vec) + tuple(out), e.const, Kind.EQ))
        return cls(in_space, out_space, [cons])

    @property
    def n_in(self) -> int:
        return len(self.in_space.dims)

    @property
    def n_out(self) -> int:
        return len(self.out_space.dims)

    def union(self, other: "IntRel") -> "IntRel":
        if (self.in_space, self.out_space) != (other.in_space, other.out_space):
            raise SpaceMismatch(f"{self.in_space}->{self.out_space} vs {other.in_space}->{other.out_space}")
        return IntRel(self.in_space, self.out_space, self.disjuncts + other.disjuncts)

    def _functional(self, conj: _Conj):
        """(A, c) with ``out = in @ A.T + c`` if ``conj`` is a plain affine map, else None."""
        n_in = self.n_in
        rows = {}
        for c in conj.constraints:
            out = c.coeffs[n_in:]
            nz = [k for k, v in enumerate(out) if v]
            if not nz:
                continue
            if c.kind is not Kind.EQ or c.modulus or len(nz) != 1 or abs(out[nz[0]]) != 1 or nz[0] in rows:
                return None
            rows[nz[0]] = c
        if len(rows) != self.n_out:
            return None
        A = np.zeros((self.n_out, n_in), dtype=np.int64)
        b = np.zeros(self.n_out, dtype=np.int64)
        for k, c in rows.items():
            # a*y + v.x + const = 0  ->  y = -(v.x + const) / a, with a = +-1
            a = c.coeffs[n_in + k]
            A[k] = [-a * v for v in c.coeffs[:n_in]]
            b[k] = -a * c.const
        domain = [c for c in conj.constraints if not any(c.coeffs[n_in:])]
        return A, b, domain

    def _pairs_of(self, pts: np.ndarray, chunk: int) -> Iterator[np.ndarray]:
        for conj in self._conjs:
            func = self._functional(conj)
            if func is not None:
                A, b, domain = func
                src = pts
                for c in domain:
                    src = src[AffineConstraint(c.coeffs[: self.n_in], c.const, c.kind, c.modulus).holds(src)]
                yield np.column_stack([src, src @ A.T + b])
                continue
            for start in range(0, max(len(pts), 1), chunk):
                block = pts[start:start + chunk]
                if len(block) == 0:
                    continue
                yield conj.enumerate(block)

    def apply(self, s: IntSet, chunk: int = 1 << 16) -> IntSet:
        """Image of ``s``: ``{ y : exists x in s, (x -> y) in self }``."""
        if s.space != self.in_space:
            raise SpaceMismatch(f"cannot apply {self.in_space}->{self.out_space} to {s.space}")
        if s.is_empty():
            return IntSet.empty(self.out_space)
        parts = [p[:, self.n_in:] for p in self._pairs_of(s.points, chunk)]
        return IntSet(self.out_space, np.vstack(parts) if parts else np.zeros((0, self.n_out), np.int64))

    def pair_blocks(self, domain: IntSet | None = None, chunk: int = 4096) -> Iterator[np.ndarray]:
        """``(x, y)`` rows in blocks (unsorted across blocks, possibly repeated across disjuncts)."""
        if domain is not None:
            if domain.space != self.in_space:
                raise SpaceMismatch(f"{domain.space} vs {self.in_space}")
            yield from self._pairs_of(domain.points, chunk)
            return
        for conj in self._conjs:
            cand = conj.enumerate(upto=self.n_in)
            for start in range(0, len(cand), chunk):
                yield conj.enumerate(cand[start:start + chunk])

    def pairs(self, domain: IntSet | None = None, chunk: int = 4096) -> np.ndarray:
        """All ``(x, y)`` rows, lex sorted. Without ``domain`` the relation itself must bound ``x``."""
        parts = list(self.pair_blocks(domain, chunk))
        if not parts:
            return np.zeros((0, self.n_in + self.n_out), np.int64)
        return _unique_rows(np.vstack(parts))

    def domain(self) -> IntSet:
        pts = self.pairs()
        return IntSet(self.in_space, pts[:, : self.n_in])

    def _domain_extreme(self, reverse: bool) -> tuple[int, ...] | None:
        best = None
        for conj in self._conjs:
            for cand in conj.iter_points((), self.n_in, reverse):
                if next(conj.iter_points(cand), None) is not None:
                    if best is None or (cand > best if reverse else cand < best):
                        best = cand
                    break
        return best

    def lexmin_domain(self) -> tuple[int, ...]:
        """Same point as ``lexmin(self.domain())`` without enumerating the relation."""
        best = self._domain_extreme(False)
        if best is None:
            raise EmptySet("relation has an empty domain")
        return best

    def lexmax_domain(self) -> tuple[int, ...]:
        best = self._domain_extreme(True)
        if best is None:
            raise EmptySet("relation has an empty domain")
        return best

    def is_empty(self) -> bool:
        return all(next(c.iter_points(), None) is None for c in self._conjs)

    def __repr__(self):
        return f"IntRel({self.in_space} -> {self.out_space}, {len(self.disjuncts)} disjuncts)"

    def __str__(self):
        out_dims = _primed(self.in_space.dims, self.out_space.dims)
        head = f"{self.in_space.name}[{', '.join(self.in_space.dims)}] -> {self.out_space.name}[{', '.join(out_dims)}]"
        body = " or ".join(c.format() for c in self._conjs)
        return f"{{ {head} : {body} }}"


# --- functional spellings -----------------------------------------------------


def union(a: IntSet, b: IntSet) -> IntSet:
    return a.union(b)


def intersect(a: IntSet, b: IntSet) -> IntSet:
    return a.intersect(b)


def subtract(a: IntSet, b: IntSet) -> IntSet:
    return a.subtract(b)


def apply(r: IntRel, s: IntSet) -> IntSet:
    return r.apply(s)


def lexmin(s: IntSet) -> tuple[int, ...]:
    return s.lexmin()


def lexmax(s: IntSet) -> tuple[int, ...]:
    return s.lexmax()


def cardinality(s: IntSet) -> int:
    return s.cardinality()


def lex_order_set(s: IntSet, p: Sequence[int], mode: Order) -> IntSet:
    return s.lex_order_set(p, mode)
