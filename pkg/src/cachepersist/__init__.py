"""Exact and classical persistence analysis for LRU caches."""

from .cfg import (Access, AccessKind, CacheConfig, CfgError, CfgSyntaxError,
                  ControlFlowGraph, Edge, IrreducibleLoopError, MemoryBlock, Scope,
                  detect_natural_loops, parse_cfg, print_cfg, project_to_cache_set)
from .exact_explicit import TOP
from .oracle import brute_force_persistent, find_witness, lru_simulate
from .solver import (AnalysisReport, analyze_program, analyze_scope, differential_check,
                     emit_persistence_constraints, make_domain, solve_fixpoint)
from .zdd import ZddHandle, ZddManager

__version__ = "0.1.0"
