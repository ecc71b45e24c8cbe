"""Latency/bandwidth-weighted cost of a cache placement, and ranking by it."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .cachefit import CacheFitResult, MachineDescriptor

__all__ = ["VariantScore", "EmptyInput", "cost", "rank_by_cost", "format_fraction"]


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class VariantScore:
    variant_id: str
    cost: Fraction
    fit: CacheFitResult


def cost(fit: CacheFitResult, machine: MachineDescriptor) -> Fraction:
    """Sum over levels of ws * latency / bandwidth, plus the memory term (exact)."""
    if fit.level_names != machine.level_names:
        raise ValueError(f"fit levels {fit.level_names} do not match machine {machine.level_names}")
    total = Fraction(0)
    for ws, level in zip(fit.per_level_ws, machine.levels):
        total += ws * Fraction(level.latency_cycles) / Fraction(level.bandwidth_bytes_per_cycle)
    total += fit.mem_ws * Fraction(machine.mem.latency_cycles) / Fraction(machine.mem.bandwidth_bytes_per_cycle)
    return total


def rank_by_cost(scores: Sequence[VariantScore], k: int = 1) -> list[str]:
    """Lowest cost first, ties by variant id; at most ``k`` ids."""
    if not scores:
        raise EmptyInput("no variants to rank")
    if k < 1:
        raise ValueError("k must be at least 1")
    ordered = sorted(scores, key=lambda s: (s.cost, s.variant_id))
    return [s.variant_id for s in ordered[:k]]


def format_fraction(x: Fraction) -> str:
    """Exact decimal when it terminates, ``p/q`` otherwise."""
    x = Fraction(x)
    den = x.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{x.numerator}/{x.denominator}"
    digits = max(twos, fives)
    if digits == 0:
        return str(x.numerator)
    scaled = x * 10**digits
    sign = "-" if scaled < 0 else ""
    n = abs(int(scaled))
    whole, frac = divmod(n, 10**digits)
    return f"{sign}{whole}.{frac:0{digits}d}"
