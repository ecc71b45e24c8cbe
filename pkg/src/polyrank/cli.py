"""Command-line driver: analyze, rank, train, emit, oracle-check.

Exit status 0 on success, 1 for parse and analysis errors, 2 for I/O and
configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import dnnrank
from .affine import ExprSyntaxError, NonAffineExpression, UnboundParameter
from .cachefit import (
    CacheFitResult,
    EmptyMachine,
    MachineDescriptor,
    MachineFileError,
    assign_to_caches,
    default_machine,
    load_machine,
)
from .costrank import VariantScore, cost, format_fraction, rank_by_cost
from .deps import compute_dependences
from .intset import EmptySet, UnboundedSet
from .loopnest import (
    InvalidNest,
    LoopNest,
    MissingMicrokernelSpec,
    NotSupported,
    ParseError,
    emit_source,
    inline_microkernel,
    parse_nest,
    restore_microkernel,
)
from .oracle import (
    SpaceTooLarge,
    Which,
    brute_dependence_pairs,
    enumerate_working_set,
    lru_report,
    lru_simulate,
    trace,
)
from .presets import parse_preset
from .reuse import WorkingSetRecord, working_sets, ws_all
from .variants import (
    ConfigRejected,
    VariantConfig,
    all_orders_config,
    apply_recipe,
    default_conv_config,
    generate_variants,
    parse_recipe,
    parse_variant_config,
)

ANALYSIS_ERRORS = (
    ParseError,
    ExprSyntaxError,
    NotSupported,
    NonAffineExpression,
    UnboundParameter,
    InvalidNest,
    MissingMicrokernelSpec,
    UnboundedSet,
    EmptySet,
    SpaceTooLarge,
)
CONFIG_ERRORS = (
    OSError,
    MachineFileError,
    EmptyMachine,
    ConfigRejected,
    dnnrank.WeightsFileError,
    dnnrank.EmptyDataset,
)


class MalformedRow(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class AnalysisFailed(Exception):
    """An analysis ran but produced a wrong or unusable answer."""


@dataclass
class VariantAnalysis:
    variant_id: str
    nest: LoopNest
    records: list[WorkingSetRecord]
    fit: CacheFitResult
    cost: Fraction


# --- inputs -------------------------------------------------------------------------


def load_nest(args) -> LoopNest:
    if args.nest and args.preset:
        raise ConfigRejected("give either --nest or --preset, not both")
    if args.nest:
        path = Path(args.nest)
        if not path.is_file():
            raise FileNotFoundError(f"nest file not found: {path}")
        return parse_nest(path.read_text())
    if args.preset:
        try:
            return parse_preset(args.preset)
        except ValueError as exc:
            if isinstance(exc, ANALYSIS_ERRORS):
                raise
            raise ConfigRejected(f"bad preset {args.preset!r}: {exc}") from None
    raise ConfigRejected("one of --nest or --preset is required")


def load_machine_arg(path: str | None) -> MachineDescriptor:
    if path is None:
        return default_machine()
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"machine file not found: {p}")
    return load_machine(p)


def default_variant_config(nest: LoopNest) -> VariantConfig:
    """Conv-template nests get the conv space; otherwise every order of the non-band loops."""
    outer = [l.var for l in nest.outer_loops]
    conv = default_conv_config()
    if set(conv.permutations[0]) <= set(outer):
        return conv
    movable = outer[1:] if nest.microkernel is not None and len(outer) > 1 else outer
    return all_orders_config(movable, max_variants=24)


def load_variant_config(path: str | None, nest: LoopNest) -> tuple[VariantConfig, bool]:
    """Config and whether it was given explicitly (explicit recipes must all be legal)."""
    if path is None:
        return default_variant_config(nest), False
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"variant config not found: {p}")
    return parse_variant_config(p.read_text()), True


def parse_dataset(text: str) -> list[dnnrank.Example]:
    """Rows of eight non-negative integers (A's then B's L1, L2, L3, mem) and a label A or B."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) != 9:
            raise MalformedRow(lineno, f"expected 8 statistics and a label, got {len(toks)} fields")
        try:
            vals = [int(t) for t in toks[:8]]
        except ValueError:
            raise MalformedRow(lineno, "statistics must be integers") from None
        if min(vals) < 0:
            raise MalformedRow(lineno, "statistics must be non-negative")
        label = toks[8].upper()
        if label not in ("A", "B"):
            raise MalformedRow(lineno, f"label must be A or B, got {toks[8]!r}")
        if sum(vals) == 0:
            raise MalformedRow(lineno, "all statistics are zero")
        outcome = dnnrank.Outcome.WIN_A if label == "A" else dnnrank.Outcome.WIN_B
        rows.append((dnnrank.VariantStats(*vals[:4]), dnnrank.VariantStats(*vals[4:]), outcome))
    return rows


def format_dataset(rows: Sequence[dnnrank.Example]) -> str:
    out = []
    for a, b, lab in rows:
        out.append(" ".join(map(str, a.as_tuple() + b.as_tuple())) + " " + lab.value)
    return "\n".join(out) + "\n"


# --- analysis -------------------------------------------------------------------------


def analyze_variant(variant_id: str, nest: LoopNest, machine: MachineDescriptor) -> VariantAnalysis:
    nest = inline_microkernel(nest)
    records = working_sets(nest, compute_dependences(nest))
    fit = assign_to_caches(ws_all(records), machine)
    return VariantAnalysis(variant_id, nest, records, fit, cost(fit, machine))


def _machine_line(m: MachineDescriptor) -> str:
    parts = [f"{l.name} {l.size_bytes}B" for l in m.levels]
    return "machine: " + ", ".join(parts) + f"; element_bytes {m.element_bytes}"


def _variant_text(a: VariantAnalysis) -> list[str]:
    lines = [f"variant {a.variant_id}"]
    for r in a.records:
        lines.append(
            f"  {r.dep_id} {r.kind.value} {r.array} {r.label} ws_min={r.ws_min} ws_max={r.ws_max}"
            f" source={list(r.source)} first={list(r.first_target)} last={list(r.last_target)}"
        )
    placed = " ".join(f"{n}={w}" for n, w in zip(a.fit.level_names, a.fit.per_level_ws))
    lines.append(f"  placement {placed} mem={a.fit.mem_ws}")
    lines.append(f"  cost {format_fraction(a.cost)}")
    return lines


def _variant_rows(a: VariantAnalysis) -> list[str]:
    rows = []
    for r in a.records:
        rows.append("\t".join(["dep", a.variant_id, r.dep_id, r.kind.value, r.array, r.label, str(r.ws_min), str(r.ws_max)]))
    for n, w in zip(a.fit.level_names, a.fit.per_level_ws):
        rows.append("\t".join(["fit", a.variant_id, n, str(w)]))
    rows.append("\t".join(["fit", a.variant_id, "mem", str(a.fit.mem_ws)]))
    rows.append("\t".join(["cost", a.variant_id, format_fraction(a.cost)]))
    return rows


def _header(fmt: str, nest: LoopNest, machine: MachineDescriptor) -> list[str]:
    if fmt == "rows":
        return ["\t".join(["#record", "variant", "fields..."])]
    return [f"nest: {nest.name}", _machine_line(machine)]


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


# --- commands -------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    nest = load_nest(args)
    machine = load_machine_arg(args.machine)
    recipe = parse_recipe(args.recipe or "")
    variant = apply_recipe(nest, recipe)
    a = analyze_variant(str(recipe), variant, machine)
    lines = _header(args.format, nest, machine)
    lines += _variant_rows(a) if args.format == "rows" else _variant_text(a)
    _write("\n".join(lines) + "\n", args.out)
    return 0


def rank_variants(
    nest: LoopNest,
    machine: MachineDescriptor,
    cfg: VariantConfig,
    strict: bool,
    ranker: str = "cost",
    weights: str | None = None,
    k: int = 1,
):
    """Analyze every variant of ``cfg`` and order them; returns (analyses, order, wins, rejected)."""
    model = dnnrank.load_weights(weights) if ranker == "dnn" else None
    rejected: list[tuple[str, str]] = []
    variants = generate_variants(nest, cfg, None if strict else rejected)
    if not variants:
        raise ConfigRejected("no legal variants to rank")
    analyses = [analyze_variant(vid, v, machine) for vid, v in variants]
    scores = [VariantScore(a.variant_id, a.cost, a.fit) for a in analyses]
    wins = None
    if model is None:
        order = rank_by_cost(scores, k=len(scores))
    else:
        stats = [dnnrank.VariantStats.from_fit(a.fit) for a in analyses]
        ids = [a.variant_id for a in analyses]
        wins = dnnrank.tournament(model, stats, ids)
        order = dnnrank.tournament_rank(model, stats, k=len(ids), costs=[a.cost for a in analyses], ids=ids)
    return analyses, order, wins, rejected


def cmd_rank(args) -> int:
    if args.top_k < 1:
        raise ConfigRejected("--top-k must be at least 1")
    nest = load_nest(args)
    machine = load_machine_arg(args.machine)
    cfg, strict = load_variant_config(args.variants, nest)
    analyses, order, wins, rejected = rank_variants(nest, machine, cfg, strict, args.ranker, args.weights, args.top_k)
    by_id = {a.variant_id: a for a in analyses}
    top = order[: args.top_k]

    out_dir = Path(args.out) if args.out else None
    emitted = []
    for rank, vid in enumerate(top, start=1):
        name = f"variant_{rank:02d}.c"
        v = by_id[vid].nest
        if v.microkernel is not None:
            v = restore_microkernel(v)
        src = emit_source(v, title=f"rank {rank}: {vid}")
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / name).write_text(src)
        emitted.append((name, vid))

    if args.format == "rows":
        lines = _header("rows", nest, machine)
        for a in analyses:
            lines += _variant_rows(a)
        for rank, vid in enumerate(order, start=1):
            w = "" if wins is None else str(wins[vid])
            lines.append("\t".join(["rank", str(rank), vid, format_fraction(by_id[vid].cost), w]))
        for rid, why in rejected:
            lines.append("\t".join(["rejected", rid, why]))
        for name, vid in emitted:
            lines.append("\t".join(["emitted", name, vid]))
    else:
        lines = _header("text", nest, machine)
        lines.append(f"ranker: {args.ranker}")
        lines.append(f"variants: {len(analyses)}")
        lines.append("")
        for a in analyses:
            lines += _variant_text(a)
        lines.append("")
        lines.append("ranking")
        for rank, vid in enumerate(order, start=1):
            extra = "" if wins is None else f" wins={wins[vid]}"
            lines.append(f"  {rank}. {vid} cost={format_fraction(by_id[vid].cost)}{extra}")
        if rejected:
            lines.append("rejected")
            for rid, why in rejected:
                lines.append(f"  {rid}: {why}")
        lines.append("emitted")
        for name, vid in emitted:
            lines.append(f"  {name} {vid}")
    report = "\n".join(lines) + "\n"
    if out_dir is not None:
        (out_dir / "report.txt").write_text(report)
    sys.stdout.write(report)
    return 0


def cmd_train(args) -> int:
    path = Path(args.dataset)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    rows = parse_dataset(path.read_text())
    res = dnnrank.train(rows, epochs=args.epochs, learning_rate=args.lr, seed=args.seed, batch_size=args.batch_size, split=args.split)
    if args.out:
        dnnrank.save_weights(res.ranker, args.out)

    def pct(x: float) -> str:
        return "n/a" if x != x else f"{x:.4f}"

    lines = [
        f"train rows: {res.n_train}",
        f"held-out rows: {res.n_heldout}",
        f"train accuracy: {pct(res.train_accuracy)}",
        f"held-out accuracy: {pct(res.heldout_accuracy)}",
    ]
    if res.losses:
        lines.append(f"final loss: {res.losses[-1]:.6f}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_emit(args) -> int:
    nest = load_nest(args)
    recipe = parse_recipe(args.recipe or "")
    variant = apply_recipe(nest, recipe)
    if variant.microkernel is not None and not args.inline:
        variant = restore_microkernel(variant)
    _write(emit_source(variant, title=f"{nest.name} variant {recipe}"), args.out)
    return 0


def cmd_oracle_check(args) -> int:
    nest = load_nest(args)
    machine = load_machine_arg(args.machine)
    if args.variants:
        cfg, strict = load_variant_config(args.variants, nest)
        variants = generate_variants(nest, cfg, None if strict else [])
    else:
        variants = [("identity", inline_microkernel(nest))]
    lines = ["oracle check (brute-force execution against the set-based analysis)"]
    failures = 0
    for vid, v in variants:
        deps = compute_dependences(v)
        records = working_sets(v, deps)
        lines.append(f"variant {vid}")
        for d, r in zip(deps, records):
            lo = enumerate_working_set(v, d, Which.MIN)
            hi = enumerate_working_set(v, d, Which.MAX)
            ok = (lo, hi) == (r.ws_min, r.ws_max)
            if args.pairs:
                brute = brute_dependence_pairs(v, d.src_ref, d.tgt_ref)
                ours = d.rel.pairs()
                ok = ok and brute.shape == ours.shape and bool((brute == ours).all())
            failures += not ok
            lines.append(
                f"  {d.id} {d.label} analysis={r.ws_min}/{r.ws_max} oracle={lo}/{hi} {'ok' if ok else 'MISMATCH'}"
            )
        if args.lru:
            fit = assign_to_caches(ws_all(records), machine)
            placed = " ".join(f"{n}={w}" for n, w in zip(fit.level_names, fit.per_level_ws))
            lines.append(f"  analytic placement {placed} mem={fit.mem_ws}")
            lines += ["  " + l for l in lru_report(lru_simulate(trace(v), machine))]
    lines.append(f"{failures} mismatches")
    sys.stdout.write("\n".join(lines) + "\n")
    return 1 if failures else 0


# --- entry point ------------------------------------------------------------------------


def _add_nest_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nest", help="loop-nest description file")
    p.add_argument("--preset", help="built-in nest: conv:<10 ints> or matmul:M,N,K")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyrank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="working sets, cache placement and cost of one nest")
    _add_nest_args(p)
    p.add_argument("--machine", help="machine description (default: built-in three-level machine)")
    p.add_argument("--recipe", help="variant recipe to apply first, e.g. 'perm=k,j,i'")
    p.add_argument("--format", choices=("text", "rows"), default="text")
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("rank", help="generate variants, rank them and emit the top k")
    _add_nest_args(p)
    p.add_argument("--machine")
    p.add_argument("--variants", help="variant config file")
    p.add_argument("--ranker", choices=("cost", "dnn"), default="cost")
    p.add_argument("--weights", help="weights file for --ranker dnn")
    p.add_argument("--top-k", type=int, default=1)
    p.add_argument("--out", help="directory for report.txt and emitted sources")
    p.add_argument("--format", choices=("text", "rows"), default="text")
    p.add_argument("--seed", type=int, default=0, help="unused by ranking; accepted for uniform invocation")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("train", help="train the pairwise ranker")
    p.add_argument("--dataset", required=True, help="rows: 8 statistics and a label A or B")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--split", type=float, default=0.7, help="training share; the held-out count is rounded down")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="weights file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("emit", help="print the source of one variant")
    _add_nest_args(p)
    p.add_argument("--recipe", help="variant recipe (default: identity)")
    p.add_argument("--inline", action="store_true", help="keep the microkernel band as loops")
    p.add_argument("--out", help="also write the source to this file")
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("oracle-check", help="compare the analysis with brute-force execution")
    _add_nest_args(p)
    p.add_argument("--machine")
    p.add_argument("--variants", help="check every variant of this config")
    p.add_argument("--pairs", action="store_true", help="also compare dependence pair sets")
    p.add_argument("--lru", action="store_true", help="append the LRU simulation diagnostic")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def _message(exc: BaseException) -> str:
    if isinstance(exc, KeyError) and exc.args:
        return str(exc.args[0])
    return str(exc) or type(exc).__name__


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MalformedRow as exc:
        print(f"error: malformed row: {exc}", file=sys.stderr)
        return 2
    except CONFIG_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {_message(exc)}", file=sys.stderr)
        return 2
    except ANALYSIS_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {_message(exc)}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {type(exc).__name__}: {_message(exc)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
