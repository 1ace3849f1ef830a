"""Static permission-gap analysis for framework/application bundles.

Map each public framework entry point to the permissions it may check,
find the entry points an application may call, and report declared
permissions the application never needs.
"""
from .callgraph import CHA, RTA, CallGraph, DispatchContext, build_call_graph, framework_graph
from .corpus import Corpus, CorpusSpec, generate_corpus
from .datasets import load_worked_example
from .estimator import PermissionMapper
from .ir import (
    Manifest, MethodRef, PermissionSet, Program, ServiceTable, SinkConfig, entry_points,
    parse_manifest, parse_program, parse_service_table, parse_sink_config, serialize_program,
    validate, validate_manifest,
)
from .mapper import (
    AccessVector, GapReport, InferredVector, PermissionAccessMatrix, compute_gap, map_framework,
    multiply,
)
from .oracle import ExecConfig, ExecTrace, exact_required, execute
from .sniffer import AppScan, scan_app

__version__ = "0.1.0"

__all__ = [
    "CHA", "RTA", "CallGraph", "DispatchContext", "build_call_graph", "framework_graph",
    "Corpus", "CorpusSpec", "generate_corpus", "load_worked_example", "PermissionMapper",
    "Manifest", "MethodRef", "PermissionSet", "Program", "ServiceTable", "SinkConfig",
    "entry_points", "parse_manifest", "parse_program", "parse_service_table", "parse_sink_config",
    "serialize_program", "validate", "validate_manifest",
    "AccessVector", "GapReport", "InferredVector", "PermissionAccessMatrix", "compute_gap",
    "map_framework", "multiply", "ExecConfig", "ExecTrace", "exact_required", "execute",
    "AppScan", "scan_app",
]
