"""Loop interchange and tiling around a fixed microkernel band.

A variant is described by a recipe string::

    perm=ofm_tile,oj,ifm_tile,kj,ki;tile=oj:2

``perm`` lists non-band loops in their new relative order; loops it omits
keep their original order and stay outermost (so ``img`` is untouched when
left out). ``tile=x:t`` splits loop ``x`` into a tile loop ``x_t``, which
takes ``x``'s place, and an intra-tile loop ``x`` sunk just above the
band. A partial last tile is covered by a ``min`` upper bound. The empty
recipe (``identity``) leaves the nest as is.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .affine import BinOp, Num, Var
from .deps import DepKind, Dependence, compute_dependences, is_reduction
from .loopnest import InvalidNest, Loop, LoopNest, inline_microkernel

__all__ = [
    "Recipe",
    "VariantConfig",
    "ConfigRejected",
    "InvalidPermutation",
    "TileSizeNonPositive",
    "parse_recipe",
    "parse_variant_config",
    "apply_recipe",
    "generate_variants",
    "default_conv_config",
    "all_orders_config",
]


class ConfigRejected(ValueError):
    pass


class InvalidPermutation(ConfigRejected):
    pass


class TileSizeNonPositive(ConfigRejected):
    pass


@dataclass(frozen=True)
class Recipe:
    perm: tuple[str, ...] = ()
    tiles: tuple[tuple[str, int], ...] = ()

    def __str__(self):
        if not self.perm and not self.tiles:
            return "identity"
        parts = [f"perm={','.join(self.perm)}"]
        if self.tiles:
            parts.append("tile=" + ",".join(f"{v}:{t}" for v, t in self.tiles))
        return ";".join(parts)


def parse_recipe(text: str) -> Recipe:
    text = text.strip()
    if text in ("", "identity"):
        return Recipe()
    perm: tuple[str, ...] = ()
    tiles: list[tuple[str, int]] = []
    for part in text.split(";"):
        if not part.strip():
            continue
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigRejected(f"recipe part {part!r} is not key=value")
        if key == "perm":
            perm = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "tile":
            for item in value.split(","):
                if not item.strip():
                    continue
                var, sep, size = item.partition(":")
                try:
                    tiles.append((var.strip(), int(size)))
                except ValueError:
                    raise ConfigRejected(f"bad tile entry {item!r}") from None
        else:
            raise ConfigRejected(f"unknown recipe key {key!r}")
    return Recipe(perm, tuple(sorted(tiles)))


@dataclass(frozen=True)
class VariantConfig:
    permutations: tuple[tuple[str, ...], ...] = ((),)
    tiling: tuple[tuple[str, tuple[int, ...]], ...] = ()  # candidate sizes besides "untiled"
    max_variants: int | None = None

    def recipes(self) -> Iterable[Recipe]:
        choices = [[None, *sizes] for _, sizes in self.tiling]
        names = [v for v, _ in self.tiling]
        for perm in self.permutations or ((),):
            for picks in itertools.product(*choices):
                tiles = tuple(sorted((v, t) for v, t in zip(names, picks) if t is not None))
                yield Recipe(tuple(perm), tiles)


def all_orders_config(loops: Sequence[str], tiling=(), max_variants: int | None = None) -> VariantConfig:
    return VariantConfig(tuple(itertools.permutations(loops)), tuple(tiling), max_variants)


def default_conv_config() -> VariantConfig:
    """Orders of the five loops between ``img`` and the band; ``oj`` untiled or tiled by 2 or 4."""
    return all_orders_config(("ofm_tile", "ifm_tile", "oj", "kj", "ki"), (("oj", (2, 4)),), max_variants=24)


def parse_variant_config(text: str) -> VariantConfig:
    """Lines: ``permute a b c`` (all orders), ``perm a,b,c`` (one order),
    ``tile x 2 4`` (candidate sizes), ``max_variants N``; ``#`` comments."""
    perms: list[tuple[str, ...]] = []
    tiling: dict[str, tuple[int, ...]] = {}
    cap = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "permute":
            perms.extend(itertools.permutations(rest))
        elif head == "perm":
            perms.append(tuple(v.strip() for v in " ".join(rest).split(",") if v.strip()))
        elif head == "tile":
            if len(rest) < 2:
                raise ConfigRejected(f"line {lineno}: expected 'tile VAR SIZE...'")
            try:
                sizes = tuple(int(x) for x in rest[1:])
            except ValueError:
                raise ConfigRejected(f"line {lineno}: tile sizes must be integers") from None
            for t in sizes:
                if t <= 0:
                    raise TileSizeNonPositive(f"line {lineno}: tile size {t} for {rest[0]}")
            tiling[rest[0]] = tuple(dict.fromkeys(sizes))
        elif head == "max_variants":
            if len(rest) != 1 or not rest[0].isdigit() or int(rest[0]) < 1:
                raise ConfigRejected(f"line {lineno}: expected 'max_variants <positive int>'")
            cap = int(rest[0])
        else:
            raise ConfigRejected(f"line {lineno}: unknown entry {head!r}")
    return VariantConfig(tuple(perms) or ((),), tuple(sorted(tiling.items())), cap)


# --- transformation -----------------------------------------------------------


def _new_order(nest: LoopNest, recipe: Recipe) -> list[str]:
    outer = [l.var for l in nest.outer_loops]
    band = {l.var for l in nest.band_loops}
    seen = set()
    for v in recipe.perm:
        if v in band:
            raise InvalidPermutation(f"loop {v!r} belongs to the microkernel band and cannot move")
        if v not in outer:
            raise InvalidPermutation(f"unknown loop {v!r}")
        if v in seen:
            raise InvalidPermutation(f"loop {v!r} listed twice")
        seen.add(v)
    return [v for v in outer if v not in seen] + list(recipe.perm)


def _moved_range(nest: LoopNest, order: Sequence[str], tiled: Iterable[str]) -> tuple[int, int] | None:
    outer = [l.var for l in nest.outer_loops]
    touched = [i for i, (a, b) in enumerate(zip(outer, order)) if a != b]
    for v in tiled:
        touched.extend(range(outer.index(v), len(outer)))
    if not touched:
        return None
    return min(touched), max(touched)


def _check_dependences(nest: LoopNest, deps: Sequence[Dependence], span: tuple[int, int]):
    """Reject unless distances of every non-reduction true dependence not carried
    outside ``span`` are non-negative on every loop of ``span``."""
    a, b = span
    n = len(nest.loops)
    for d in deps:
        if d.kind is DepKind.RAR or is_reduction(nest, d):
            continue
        for block in d.rel.pair_blocks():
            dist = block[:, n:] - block[:, :n]
            live = np.all(dist[:, :a] == 0, axis=1) if a else np.ones(len(dist), dtype=bool)
            bad = live & np.any(dist[:, a:b + 1] < 0, axis=1)
            if bad.any():
                row = block[np.argmax(bad)]
                raise ConfigRejected(
                    f"{d.kind.value} dependence {d.label} from {tuple(row[:n])} to {tuple(row[n:])} "
                    f"forbids reordering loops {[l.var for l in nest.loops[a:b + 1]]}"
                )


def _tile_name(var: str, taken: set[str]) -> str:
    name = f"{var}_t"
    while name in taken:
        name += "t"
    return name


def apply_recipe(nest: LoopNest, recipe: Recipe, deps: Sequence[Dependence] | None = None) -> LoopNest:
    """Build the variant nest for ``recipe``; raises ConfigRejected when illegal."""
    nest = inline_microkernel(nest)
    order = _new_order(nest, recipe)
    outer = [l.var for l in nest.outer_loops]
    tiles = dict(recipe.tiles)
    if len(tiles) != len(recipe.tiles):
        raise ConfigRejected("a loop is tiled twice")
    for v, t in tiles.items():
        if v not in outer:
            kind = "band loop" if v in nest.loop_vars else "unknown loop"
            raise ConfigRejected(f"cannot tile {kind} {v!r}")
        if t <= 0:
            raise TileSizeNonPositive(f"tile size {t} for {v}")

    # bounds may only use loops that stay outside
    placed: set[str] = set()
    final = [(_tile_name(v, set(nest.loop_vars)) if v in tiles else v) for v in order]
    final += [v for v in order if v in tiles]
    env = nest.let_env()
    for v in final:
        if v in tiles or v in outer:
            loop = nest.loop(v)
            used = set()
            for e in (loop.lower, *loop.upper):
                used |= e.to_aff(env, nest.loop_vars).variables()
            if v in tiles and used:
                raise ConfigRejected(f"cannot tile {v!r}: its bounds depend on {sorted(used)}")
            missing = used - placed
            if missing:
                raise ConfigRejected(f"loop {v!r} would be placed outside {sorted(missing)}, which its bounds use")
            placed.add(v)

    span = _moved_range(nest, order, tiles)
    if span is not None:
        if deps is None:
            deps = compute_dependences(nest)
        _check_dependences(nest, deps, span)

    taken = set(nest.loop_vars)
    tile_loops: list[Loop] = []
    intra: list[Loop] = []
    for v in order:
        loop = nest.loop(v)
        if v not in tiles:
            tile_loops.append(loop)
            continue
        trip = nest.trip_count(loop)
        t = min(tiles[v], max(trip, 1))
        stride = t * loop.step
        ntiles = -(-trip // t)
        tv = _tile_name(v, taken)
        taken.add(tv)
        tile_loops.append(Loop(tv, Num(0), (Num(ntiles),)))
        start = BinOp("*", Var(tv), Num(stride))
        if not (isinstance(loop.lower, Num) and loop.lower.value == 0):
            start = BinOp("+", loop.lower, start)
        uppers = (BinOp("+", start, Num(stride)),)
        if trip % t:
            uppers += loop.upper
        intra.append(Loop(v, start, uppers, loop.step))
    loops = tuple(tile_loops + intra) + nest.band_loops
    out = replace(nest, loops=loops, name=f"{nest.name}[{recipe}]")
    try:
        return out.validate()
    except InvalidNest as exc:
        raise ConfigRejected(str(exc)) from None


def generate_variants(
    nest: LoopNest, cfg: VariantConfig, rejected: list[tuple[str, str]] | None = None
) -> list[tuple[str, LoopNest]]:
    """Variants for every recipe of ``cfg`` in enumeration order, capped at ``max_variants``.

    An illegal recipe raises ConfigRejected, unless ``rejected`` is given, in
    which case ``(recipe id, reason)`` is appended to it and generation goes on.
    """
    nest = inline_microkernel(nest)
    deps = compute_dependences(nest)
    out = []
    seen = set()
    for recipe in cfg.recipes():
        if cfg.max_variants is not None and len(out) >= cfg.max_variants:
            break
        rid = str(recipe)
        if rid in seen:
            continue
        seen.add(rid)
        try:
            out.append((rid, apply_recipe(nest, recipe, deps)))
        except ConfigRejected as exc:
            if rejected is None:
                raise
            rejected.append((rid, str(exc)))
    return out
