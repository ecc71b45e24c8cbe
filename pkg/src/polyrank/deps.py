"""RAR/RAW/WAR/WAW dependences as iteration-to-iteration relations."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .intset import AffineConstraint, IntRel, Kind
from .loopnest import LoopNest, Mode, inline_microkernel, iteration_constraints

__all__ = ["DepKind", "Dependence", "dependence_relation", "compute_dependences", "union_all", "is_reduction"]


class DepKind(enum.Enum):
    RAR = "RAR"
    RAW = "RAW"
    WAR = "WAR"
    WAW = "WAW"

    @classmethod
    def of(cls, src: Mode, tgt: Mode) -> "DepKind":
        return {
            (Mode.READ, Mode.READ): cls.RAR,
            (Mode.WRITE, Mode.READ): cls.RAW,
            (Mode.READ, Mode.WRITE): cls.WAR,
            (Mode.WRITE, Mode.WRITE): cls.WAW,
        }[(src, tgt)]


@dataclass(frozen=True)
class Dependence:
    id: str
    kind: DepKind
    src_ref: int  # index into nest.stmt.refs
    tgt_ref: int
    array: str
    label: str
    rel: IntRel = field(compare=False, repr=False)

    def __str__(self):
        return f"{self.id} {self.kind.value} {self.label}: {self.rel}"


def dependence_relation(nest: LoopNest, src_ref: int, tgt_ref: int) -> IntRel:
    """``{ s -> t : s, t in I, src(s) = tgt(t), s lexicographically before t }``."""
    nest = inline_microkernel(nest)
    refs = nest.stmt.refs
    a, b = refs[src_ref], refs[tgt_ref]
    if a.array != b.array:
        raise ValueError(f"references to different arrays: {a.array}, {b.array}")
    n = len(nest.loops)
    zeros = (0,) * n
    dom = iteration_constraints(nest)
    base = [AffineConstraint(c.coeffs + zeros, c.const, c.kind, c.modulus) for c in dom]
    base += [AffineConstraint(zeros + c.coeffs, c.const, c.kind, c.modulus) for c in dom]
    dims = nest.loop_vars
    for fa, fb in zip(nest.ref_index(a), nest.ref_index(b)):
        coeffs = tuple(fa.vector(dims)) + tuple(-x for x in fb.vector(dims))
        const = fa.const - fb.const
        if any(coeffs):
            base.append(AffineConstraint(coeffs, const, Kind.EQ))
        elif const != 0:
            return IntRel(nest.space, nest.space, [])
    disjuncts = []
    for level in range(n):
        cons = list(base)
        for p in range(level):
            e = [0] * (2 * n)
            e[p], e[n + p] = 1, -1
            cons.append(AffineConstraint(tuple(e), 0, Kind.EQ))
        e = [0] * (2 * n)
        e[level], e[n + level] = -1, 1
        cons.append(AffineConstraint(tuple(e), -1))
        disjuncts.append(cons)
    return IntRel(nest.space, nest.space, disjuncts)


def compute_dependences(nest: LoopNest) -> list[Dependence]:
    """One dependence per ordered reference pair on the same array with a nonempty relation.

    Pairs are visited in reference order (source outer, target inner), a
    reference paired with itself included.
    """
    nest = inline_microkernel(nest)
    refs = nest.stmt.refs
    out = []
    for i, a in enumerate(refs):
        for j, b in enumerate(refs):
            if a.array != b.array:
                continue
            rel = dependence_relation(nest, i, j)
            if rel.is_empty():
                continue
            out.append(
                Dependence(
                    id=f"d{len(out)}",
                    kind=DepKind.of(a.mode, b.mode),
                    src_ref=i,
                    tgt_ref=j,
                    array=a.array,
                    label=f"{a} -> {b}",
                    rel=rel,
                )
            )
    return out


def union_all(deps: list[Dependence]) -> IntRel | None:
    """All dependence pairs as one relation, or None without dependences."""
    if not deps:
        return None
    rel = deps[0].rel
    for d in deps[1:]:
        rel = rel.union(d.rel)
    return rel


def is_reduction(nest: LoopNest, dep: Dependence) -> bool:
    """True when ``dep`` only links the read and write of an accumulation such as ``C[i][j] +=``.

    The accumulated array must be touched by exactly one read and one write
    with identical subscripts.
    """
    refs = [r for r in nest.stmt.refs if r.array == dep.array]
    if len(refs) != 2:
        return False
    modes = {r.mode for r in refs}
    if modes != {Mode.READ, Mode.WRITE}:
        return False
    return nest.ref_index(refs[0]) == nest.ref_index(refs[1])
