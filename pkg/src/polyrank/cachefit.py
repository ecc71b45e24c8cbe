"""Greedy placement of working sets into cache levels (smallest first)."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Sequence

__all__ = [
    "CacheLevel",
    "MemoryLevel",
    "MachineDescriptor",
    "CacheFitResult",
    "EmptyMachine",
    "MachineFileError",
    "parse_machine",
    "load_machine",
    "default_machine",
    "assign_to_caches",
    "MEMORY",
]

MEMORY = "mem"


class EmptyMachine(ValueError):
    pass


class MachineFileError(ValueError):
    pass


@dataclass(frozen=True)
class CacheLevel:
    name: str
    size_bytes: int
    latency_cycles: Fraction
    bandwidth_bytes_per_cycle: Fraction


@dataclass(frozen=True)
class MemoryLevel:
    latency_cycles: Fraction
    bandwidth_bytes_per_cycle: Fraction


@dataclass(frozen=True)
class MachineDescriptor:
    levels: tuple[CacheLevel, ...]
    mem: MemoryLevel
    element_bytes: int = 4

    def __post_init__(self):
        if not self.levels:
            raise EmptyMachine("machine has no cache levels")
        if self.element_bytes <= 0:
            raise ValueError("element_bytes must be positive")
        sizes = [l.size_bytes for l in self.levels]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"cache sizes must strictly increase outward: {sizes}")
        for l in self.levels:
            if l.size_bytes <= 0 or l.latency_cycles <= 0 or l.bandwidth_bytes_per_cycle <= 0:
                raise ValueError(f"level {l.name} needs positive size, latency and bandwidth")
        if self.mem.latency_cycles <= 0 or self.mem.bandwidth_bytes_per_cycle <= 0:
            raise ValueError("memory latency and bandwidth must be positive")

    @property
    def level_names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.levels)

    def to_text(self) -> str:
        lines = [
            f"level {l.name} size {l.size_bytes} latency {l.latency_cycles} bandwidth {l.bandwidth_bytes_per_cycle}"
            for l in self.levels
        ]
        lines.append(f"mem latency {self.mem.latency_cycles} bandwidth {self.mem.bandwidth_bytes_per_cycle}")
        lines.append(f"element_bytes {self.element_bytes}")
        return "\n".join(lines) + "\n"


def _num(tok: str, lineno: int) -> Fraction:
    try:
        return Fraction(tok)
    except (ValueError, ZeroDivisionError):
        raise MachineFileError(f"line {lineno}: bad number {tok!r}") from None


def _keyed(tokens: list[str], keys: Sequence[str], lineno: int) -> dict[str, str]:
    if len(tokens) != 2 * len(keys):
        raise MachineFileError(f"line {lineno}: expected {' '.join(k + ' <value>' for k in keys)}")
    pairs = dict(zip(tokens[::2], tokens[1::2]))
    if set(pairs) != set(keys):
        raise MachineFileError(f"line {lineno}: expected keys {list(keys)}, got {list(pairs)}")
    return pairs


def parse_machine(text: str) -> MachineDescriptor:
    """Parse ``level``/``mem``/``element_bytes`` lines; ``#`` starts a comment."""
    levels = []
    mem = None
    element_bytes = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "level":
            if len(tokens) < 2:
                raise MachineFileError(f"line {lineno}: level needs a name")
            kv = _keyed(tokens[2:], ("size", "latency", "bandwidth"), lineno)
            size = _num(kv["size"], lineno)
            if size.denominator != 1:
                raise MachineFileError(f"line {lineno}: size must be an integer byte count")
            levels.append(CacheLevel(tokens[1], int(size), _num(kv["latency"], lineno), _num(kv["bandwidth"], lineno)))
        elif head == "mem":
            kv = _keyed(tokens[1:], ("latency", "bandwidth"), lineno)
            mem = MemoryLevel(_num(kv["latency"], lineno), _num(kv["bandwidth"], lineno))
        elif head == "element_bytes":
            if len(tokens) != 2 or not tokens[1].isdigit():
                raise MachineFileError(f"line {lineno}: expected 'element_bytes <int>'")
            element_bytes = int(tokens[1])
        else:
            raise MachineFileError(f"line {lineno}: unknown entry {head!r}")
    if not levels:
        raise EmptyMachine("machine description lists no cache levels")
    if mem is None:
        raise MachineFileError("machine description lacks a 'mem' line")
    try:
        return MachineDescriptor(tuple(levels), mem, element_bytes or 4)
    except EmptyMachine:
        raise
    except ValueError as exc:
        raise MachineFileError(str(exc)) from None


def load_machine(path: str | Path) -> MachineDescriptor:
    return parse_machine(Path(path).read_text())


def default_machine() -> MachineDescriptor:
    """32KB / 1MB / 39MB hierarchy with placeholder latencies and bandwidths."""
    return parse_machine(resources.files("polyrank.data").joinpath("cascadelake.machine").read_text())


@dataclass(frozen=True)
class CacheFitResult:
    level_names: tuple[str, ...]
    per_level_ws: tuple[int, ...]
    mem_ws: int
    placement: tuple[str, ...] = field(default=())  # per input position: level name or MEMORY

    def ws(self, level: str) -> int:
        if level == MEMORY:
            return self.mem_ws
        return self.per_level_ws[self.level_names.index(level)]

    @property
    def total(self) -> int:
        return sum(self.per_level_ws) + self.mem_ws


def assign_to_caches(ws_all: Sequence[int], machine: MachineDescriptor) -> CacheFitResult:
    """Place each working set (element count) in the fastest level that still has room.

    Sizes are visited smallest first, ties by input position.
    """
    if machine is None or not machine.levels:
        raise EmptyMachine("no cache levels to assign to")
    for w in ws_all:
        if w < 0:
            raise ValueError(f"negative working set size {w}")
    eb = machine.element_bytes
    filled = [0] * len(machine.levels)
    mem = 0
    placement = [MEMORY] * len(ws_all)
    for idx in sorted(range(len(ws_all)), key=lambda i: (ws_all[i], i)):
        w = ws_all[idx]
        for li, level in enumerate(machine.levels):
            if (w + filled[li]) * eb <= level.size_bytes:
                filled[li] += w
                placement[idx] = level.name
                break
        else:
            mem += w
    return CacheFitResult(machine.level_names, tuple(filled), mem, tuple(placement))
