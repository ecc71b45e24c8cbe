"""Minimum and maximum working sets per dependence."""

from __future__ import annotations

from dataclasses import dataclass

from .deps import DepKind, Dependence, compute_dependences
from .intset import IntSet, Order
from .loopnest import LoopNest, footprint, inline_microkernel, iteration_space

__all__ = ["WorkingSetRecord", "working_sets", "ws_all", "interval_set"]


@dataclass(frozen=True)
class WorkingSetRecord:
    dep_id: str
    kind: DepKind
    array: str
    label: str
    ws_min: int
    ws_max: int
    source: tuple[int, ...]
    first_target: tuple[int, ...]
    last_target: tuple[int, ...]


def interval_set(iters: IntSet, start, stop) -> IntSet:
    """Iterations between ``start`` and ``stop`` in program order, both included."""
    return iters.lex_order_set(stop, Order.BEFORE_OR_EQUAL).subtract(iters.lex_order_set(start, Order.STRICTLY_BEFORE))


def working_sets(nest: LoopNest, deps: list[Dependence] | None = None) -> list[WorkingSetRecord]:
    """For each dependence take its lexicographically first source and count the
    distinct elements touched up to the first and up to the last target of
    that source."""
    nest = inline_microkernel(nest)
    if deps is None:
        deps = compute_dependences(nest)
    iters = iteration_space(nest)
    sizes: dict[tuple, int] = {}

    def size(start, stop):
        # dependences on one array often share endpoints
        if (start, stop) not in sizes:
            sizes[start, stop] = footprint(nest, interval_set(iters, start, stop))
        return sizes[start, stop]

    records = []
    for d in deps:
        source = d.rel.lexmin_domain()
        targets = d.rel.apply(IntSet.from_points(nest.space, [source]))
        first, last = targets.lexmin(), targets.lexmax()
        ws_min = size(source, first)
        ws_max = size(source, last)
        records.append(WorkingSetRecord(d.id, d.kind, d.array, d.label, ws_min, ws_max, source, first, last))
    return records


def ws_all(records: list[WorkingSetRecord]) -> list[int]:
    """Both sizes of every record, in record order."""
    out = []
    for r in records:
        out.extend((r.ws_min, r.ws_max))
    return out
