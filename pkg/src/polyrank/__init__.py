"""Exact working-set analysis and ranking of loop-nest variants around a fixed microkernel."""

from .cachefit import CacheFitResult, MachineDescriptor, assign_to_caches, default_machine, load_machine, parse_machine
from .costrank import VariantScore, cost, rank_by_cost
from .deps import Dependence, DepKind, compute_dependences
from .intset import IntRel, IntSet, Space
from .loopnest import LoopNest, emit_source, inline_microkernel, iteration_space, parse_nest, restore_microkernel
from .presets import ConvPreset, conv_nest, matmul_nest, parse_preset
from .reuse import WorkingSetRecord, working_sets, ws_all
from .variants import ConfigRejected, Recipe, VariantConfig, apply_recipe, generate_variants, parse_recipe

__version__ = "0.1.0"

__all__ = [
    "CacheFitResult",
    "MachineDescriptor",
    "assign_to_caches",
    "default_machine",
    "load_machine",
    "parse_machine",
    "VariantScore",
    "cost",
    "rank_by_cost",
    "Dependence",
    "DepKind",
    "compute_dependences",
    "IntRel",
    "IntSet",
    "Space",
    "LoopNest",
    "emit_source",
    "inline_microkernel",
    "iteration_space",
    "parse_nest",
    "restore_microkernel",
    "ConvPreset",
    "conv_nest",
    "matmul_nest",
    "parse_preset",
    "WorkingSetRecord",
    "working_sets",
    "ws_all",
    "ConfigRejected",
    "Recipe",
    "VariantConfig",
    "apply_recipe",
    "generate_variants",
    "parse_recipe",
]
