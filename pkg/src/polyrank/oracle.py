"""Brute-force checks that do not go through the integer-set engine.

The nest is executed directly (nested Python loops over the lowered
bounds), accesses are recorded in program order, and working sets and
dependence pairs are recomputed from that trace. ``lru_simulate`` is a
fully associative, element-granular LRU model used only as a diagnostic.
"""

from __future__ import annotations

import bisect
import enum
import functools
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .cachefit import MachineDescriptor
from .deps import Dependence
from .loopnest import LoopNest, Mode, inline_microkernel

__all__ = [
    "Which",
    "SpaceTooLarge",
    "Access",
    "LevelStats",
    "executed_iterations",
    "trace",
    "brute_dependence_pairs",
    "enumerate_working_set",
    "lru_simulate",
    "lru_report",
    "dependence_endpoints",
]

MAX_POINTS = 10**6


class SpaceTooLarge(ValueError):
    pass


class Which(enum.Enum):
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class Access:
    array: str
    index: tuple[int, ...]
    mode: Mode


@dataclass(frozen=True)
class LevelStats:
    name: str
    accesses: int
    hits: int
    misses: int

    @property
    def miss_ratio(self) -> float:
        return self.misses / self.accesses if self.accesses else 0.0


@functools.lru_cache(maxsize=4)
def executed_iterations(nest: LoopNest, limit: int = MAX_POINTS) -> np.ndarray:
    """Iteration vectors in execution order, by running the loops."""
    nest = inline_microkernel(nest)
    bounds = [nest.loop_bounds(l) for l in nest.loops]
    steps = [l.step for l in nest.loops]
    names = nest.loop_vars
    out: list[tuple[int, ...]] = []
    env: dict[str, int] = {}

    def run(depth: int):
        if depth == len(names):
            out.append(tuple(env[n] for n in names))
            if len(out) > limit:
                raise SpaceTooLarge(f"more than {limit} iterations")
            return
        lo, ups = bounds[depth]
        start = lo.evaluate(env)
        stop = min(u.evaluate(env) for u in ups)
        for v in range(start, stop, steps[depth]):
            env[names[depth]] = v
            run(depth + 1)
        env.pop(names[depth], None)

    run(0)
    return np.array(out, dtype=np.int64).reshape(len(out), len(names))


def _addresses(nest: LoopNest, iters: np.ndarray) -> list[np.ndarray]:
    nest = inline_microkernel(nest)
    out = []
    for ref in nest.stmt.refs:
        affs = nest.ref_index(ref)
        A = np.array([a.vector(nest.loop_vars) for a in affs], dtype=np.int64).reshape(len(affs), len(nest.loops))
        c = np.array([a.const for a in affs], dtype=np.int64)
        out.append(iters @ A.T + c)
    return out


def trace(nest: LoopNest) -> list[Access]:
    """Every access in program order; references in statement order within an iteration."""
    nest = inline_microkernel(nest)
    iters = executed_iterations(nest)
    addrs = [a.tolist() for a in _addresses(nest, iters)]
    refs = nest.stmt.refs
    out = []
    for i in range(len(iters)):
        for r, ref in enumerate(refs):
            out.append(Access(ref.array, tuple(addrs[r][i]), ref.mode))
    return out


def _occurrences(addr: list[tuple]) -> dict[tuple, list[int]]:
    occ: dict[tuple, list[int]] = {}
    for i, a in enumerate(addr):
        occ.setdefault(a, []).append(i)
    return occ


def brute_dependence_pairs(nest: LoopNest, src_ref: int, tgt_ref: int) -> np.ndarray:
    """Every (s, t) with s executed before t touching the same element, as sorted rows."""
    nest = inline_microkernel(nest)
    iters = executed_iterations(nest)
    addrs = _addresses(nest, iters)
    src = list(map(tuple, addrs[src_ref].tolist()))
    occ = _occurrences(list(map(tuple, addrs[tgt_ref].tolist())))
    rows = []
    for s, elem in enumerate(src):
        lst = occ.get(elem)
        if not lst:
            continue
        for t in lst[bisect.bisect_right(lst, s):]:
            rows.append((s, t))
    n = iters.shape[1]
    if not rows:
        return np.zeros((0, 2 * n), dtype=np.int64)
    idx = np.array(rows, dtype=np.int64)
    # execution order is lexicographic order, so index pairs sort the same way
    return np.hstack([iters[idx[:, 0]], iters[idx[:, 1]]])


@functools.lru_cache(maxsize=4)
def _element_keys(nest: LoopNest) -> tuple[np.ndarray, ...]:
    """Per reference, one integer per executed iteration naming the touched element.

    Keys are row-major offsets within the bounding box of each array, so two
    references get equal keys exactly when they touch the same element of
    the same array.
    """
    iters = executed_iterations(nest)
    addrs = _addresses(nest, iters)
    refs = nest.stmt.refs
    keys: list[np.ndarray | None] = [None] * len(refs)
    for array in dict.fromkeys(r.array for r in refs):
        idx = [i for i, r in enumerate(refs) if r.array == array]
        stacked = np.vstack([addrs[i] for i in idx])
        if stacked.shape[1] == 0 or stacked.shape[0] == 0:
            for i in idx:
                keys[i] = np.zeros(len(iters), dtype=np.int64)
            continue
        lo = stacked.min(axis=0)
        ext = stacked.max(axis=0) - lo + 1
        strides = np.ones(len(ext), dtype=np.int64)
        for d in range(len(ext) - 2, -1, -1):
            strides[d] = strides[d + 1] * ext[d + 1]
        for i in idx:
            keys[i] = (addrs[i] - lo) @ strides
    return tuple(keys)


def _source_and_targets(nest: LoopNest, src_ref: int, tgt_ref: int):
    keys = _element_keys(nest)
    src, tgt = keys[src_ref], keys[tgt_ref]
    if len(src) == 0:
        return None
    # last position at which the target reference touches each element
    last_at = {}
    for pos, k in enumerate(tgt.tolist()):
        last_at[k] = pos
    positions = np.arange(len(src))
    last = np.array([last_at.get(k, -1) for k in src.tolist()], dtype=np.int64)
    ok = last > positions
    if not ok.any():
        return None
    s = int(np.argmax(ok))
    later = np.nonzero(tgt[s + 1:] == src[s])[0] + s + 1
    return s, int(later[0]), int(later[-1])


def enumerate_working_set(nest: LoopNest, dep: Dependence, which: Which) -> int:
    """Distinct (array, index) pairs touched from the dependence's first source
    through its first (MIN) or last (MAX) target, both inclusive."""
    nest = inline_microkernel(nest)
    found = _source_and_targets(nest, dep.src_ref, dep.tgt_ref)
    if found is None:
        raise ValueError(f"dependence {dep.id} has no pairs")
    s, first, last = found
    stop = first if which is Which.MIN else last
    keys = _element_keys(nest)
    refs = nest.stmt.refs
    total = 0
    for array in dict.fromkeys(r.array for r in refs):
        touched = np.concatenate([keys[i][s:stop + 1] for i, r in enumerate(refs) if r.array == array])
        total += len(np.unique(touched))
    return total


def dependence_endpoints(nest: LoopNest, dep: Dependence) -> tuple[tuple, tuple, tuple] | None:
    """(source, first target, last target) found by brute force."""
    nest = inline_microkernel(nest)
    found = _source_and_targets(nest, dep.src_ref, dep.tgt_ref)
    if found is None:
        return None
    iters = executed_iterations(nest)
    return tuple(tuple(iters[i].tolist()) for i in found)


def lru_simulate(accesses: Iterable[Access], machine: MachineDescriptor) -> list[LevelStats]:
    """Per-level hit/miss counts for inclusive fully associative LRU caches.

    Every level tracks the whole access stream; a level's accesses are the
    misses of the level above it. LRU stack inclusion makes this equal to
    an inclusive hierarchy.
    """
    caps = [max(1, l.size_bytes // machine.element_bytes) for l in machine.levels]
    stacks: list[OrderedDict] = [OrderedDict() for _ in caps]
    misses = [0] * len(caps)
    total = 0
    for acc in accesses:
        key = (acc.array, acc.index)
        total += 1
        for li, (stack, cap) in enumerate(zip(stacks, caps)):
            if key in stack:
                stack.move_to_end(key)
            else:
                misses[li] += 1
                stack[key] = None
                if len(stack) > cap:
                    stack.popitem(last=False)
    out = []
    incoming = total
    for level, m in zip(machine.levels, misses):
        out.append(LevelStats(level.name, incoming, incoming - m, m))
        incoming = m
    return out


def lru_report(stats: Sequence[LevelStats]) -> list[str]:
    lines = ["# LRU simulation (diagnostic only, not used for ranking)"]
    for s in stats:
        lines.append(f"{s.name}: accesses {s.accesses} hits {s.hits} misses {s.misses} miss_ratio {s.miss_ratio:.4f}")
    return lines
