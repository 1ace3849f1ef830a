"""Permission access matrix, the boolean calculus over it, and gap reports.

Rows of the matrix are framework entry points, columns are permissions.
Each row is stored as a Python int used as a fixed-width bitset (bit j
set iff column j), so ``AV x M`` is a word-parallel OR over selected rows.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .callgraph import CHA, MODES, DispatchContext, framework_graph
from .ir import (
    MethodRef, PermissionSet, Program, ServiceTable, SinkConfig, entry_points,
    has_dynamic_features,
)
from .pep import DEFAULT_ASCENT_BUDGET, DISCARDED, RESOLVED, UNRESOLVED, PepAnalyzer, PepResolution

log = logging.getLogger(__name__)


class DimensionError(ValueError):
    pass


class UnknownPermissionError(ValueError):
    pass


class DynamicFeatureError(RuntimeError):
    """Program uses reflection and the caller did not force the analysis."""

    def __init__(self, program, methods):
        self.methods = tuple(methods)
        listing = ", ".join(str(m) for m in self.methods)
        super().__init__(f"{program} uses reflective features in {listing}; "
                         "results would be unsound (use --force to analyze anyway)")


def _bits_from(indices: Iterable[int]) -> int:
    v = 0
    for i in indices:
        v |= 1 << int(i)  # numpy integers would overflow past 63
    return v


def _indices(bits: int) -> list[int]:
    out = []
    i = 0
    while bits:
        if bits & 1:
            out.append(i)
        bits >>= 1
        i += 1
    return out


@dataclass(frozen=True)
class AccessVector:
    rows: tuple[MethodRef, ...]
    bits: int = 0

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i: int) -> bool:
        if not 0 <= i < len(self.rows):
            raise IndexError(i)
        return bool(self.bits >> i & 1)

    @classmethod
    def from_bools(cls, rows, values) -> "AccessVector":
        rows = tuple(rows)
        values = list(values)
        if len(values) != len(rows):
            raise DimensionError(f"vector of length {len(values)} for {len(rows)} rows")
        return cls(rows, _bits_from(i for i, v in enumerate(values) if v))

    def indices(self) -> list[int]:
        return _indices(self.bits)

    def entries(self) -> list[MethodRef]:
        return [self.rows[i] for i in self.indices()]

    def to_array(self) -> np.ndarray:
        out = np.zeros(len(self.rows), dtype=bool)
        out[self.indices()] = True
        return out

    def to_json(self) -> dict:
        return {"rows": [str(r) for r in self.rows], "set": self.indices()}


@dataclass(frozen=True)
class InferredVector:
    cols: PermissionSet
    bits: int = 0

    def __len__(self):
        return len(self.cols)

    def __getitem__(self, j: int) -> bool:
        if not 0 <= j < len(self.cols):
            raise IndexError(j)
        return bool(self.bits >> j & 1)

    def to_set(self) -> PermissionSet:
        names = self.cols.to_list()
        return PermissionSet(names[j] for j in _indices(self.bits))

    def to_array(self) -> np.ndarray:
        out = np.zeros(len(self.cols), dtype=bool)
        out[_indices(self.bits)] = True
        return out


@dataclass(frozen=True)
class PermissionAccessMatrix:
    rows: tuple[MethodRef, ...]
    cols: PermissionSet
    bits: tuple[int, ...]
    unresolved_rows: frozenset[int] = frozenset()
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if len(self.bits) != len(self.rows):
            raise DimensionError(f"{len(self.bits)} bit rows for {len(self.rows)} entry points")
        limit = 1 << len(self.cols)
        if any(b < 0 or b >= limit for b in self.bits):
            raise DimensionError("row bitset wider than the column space")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.cols)

    def __getitem__(self, ij) -> bool:
        i, j = ij
        return bool(self.bits[i] >> j & 1)

    def row_set(self, i: int) -> PermissionSet:
        names = self.cols.to_list()
        return PermissionSet(names[j] for j in _indices(self.bits[i]))

    def row_index(self) -> dict[MethodRef, int]:
        return {r: i for i, r in enumerate(self.rows)}

    def cells(self) -> list[tuple[int, int]]:
        return [(i, j) for i, b in enumerate(self.bits) for j in _indices(b)]

    def to_array(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        for i, j in self.cells():
            out[i, j] = True
        return out

    @classmethod
    def from_array(cls, rows, cols, array) -> "PermissionAccessMatrix":
        array = np.asarray(array, dtype=bool)
        rows, cols = tuple(rows), PermissionSet(cols)
        if array.shape != (len(rows), len(cols)):
            raise DimensionError(f"array shape {array.shape} != ({len(rows)}, {len(cols)})")
        return cls(rows, cols, tuple(_bits_from(np.flatnonzero(r)) for r in array))

    def stats(self) -> dict:
        counts = [bin(b).count("1") for b in self.bits]
        mapped = [c for c in counts if c]
        return {
            "entry_points": len(self.rows),
            "permissions": len(self.cols),
            "mapped_rows": len(mapped),
            "median_permissions": statistics.median(mapped) if mapped else 0,
            "max_permissions": max(mapped) if mapped else 0,
            "set_bits": sum(counts),
            "unresolved_rows": len(self.unresolved_rows),
        }

    def to_json(self) -> dict:
        return {
            "rows": [str(r) for r in self.rows],
            "cols": self.cols.to_list(),
            "cells": [list(c) for c in self.cells()],
            "unresolved": sorted(self.unresolved_rows),
            "meta": dict(sorted(self.meta.items())),
        }

    @classmethod
    def from_json(cls, doc) -> "PermissionAccessMatrix":
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        try:
            rows = tuple(MethodRef.parse(r) for r in doc["rows"])
            names = list(doc["cols"])
            if names != sorted(set(names)):
                raise DimensionError("columns must be sorted and unique")
            bits = [0] * len(rows)
            for i, j in doc.get("cells", []):
                if not (0 <= i < len(rows) and 0 <= j < len(names)):
                    raise DimensionError(f"cell ({i}, {j}) outside {len(rows)}x{len(names)}")
                bits[i] |= 1 << j
            unresolved = frozenset(doc.get("unresolved", []))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DimensionError):
                raise
            raise DimensionError(f"malformed matrix document: {exc}") from None
        return cls(rows, PermissionSet(names), tuple(bits), unresolved, dict(doc.get("meta", {})))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["entry_point"] + self.cols.to_list())
        for i, r in enumerate(self.rows):
            w.writerow([str(r)] + [int(self[i, j]) for j in range(len(self.cols))])
        return buf.getvalue()


@dataclass(frozen=True)
class GapReport:
    declared: PermissionSet
    inferred: PermissionSet
    gap: PermissionSet
    missing: PermissionSet
    soundness_flags: tuple[str, ...] = ()

    @property
    def attack_surface_area(self) -> int:
        return len(self.gap)

    def to_json(self) -> dict:
        return {
            "declared": self.declared.to_list(),
            "inferred": self.inferred.to_list(),
            "gap": self.gap.to_list(),
            "missing": self.missing.to_list(),
            "attack_surface_area": self.attack_surface_area,
            "soundness_flags": list(self.soundness_flags),
        }


# -- operations -------------------------------------------------------------


def assemble_matrix(resolutions: Sequence[Sequence[PepResolution]], entries: Sequence[MethodRef],
                    sc: SinkConfig, strict: bool = False, meta: Optional[dict] = None) -> PermissionAccessMatrix:
    """Condense per-entry-point PEP resolutions into the access matrix.

    Unresolved sites mark their row in ``unresolved_rows``; in strict mode
    they additionally set the whole row.
    """
    if len(resolutions) != len(entries):
        raise DimensionError(f"{len(resolutions)} resolution lists for {len(entries)} entry points")
    cols = sc.vocabulary
    col_index = {p: j for j, p in enumerate(cols)}
    full = (1 << len(cols)) - 1
    bits, unresolved = [], set()
    for i, res in enumerate(resolutions):
        row = 0
        for r in res:
            if r.status == RESOLVED:
                for p in r.permissions:
                    row |= 1 << col_index[p]
            elif r.status == UNRESOLVED:
                unresolved.add(i)
                if strict:
                    row = full
            elif r.status != DISCARDED:
                raise ValueError(f"unknown resolution status {r.status!r}")
        bits.append(row)
    return PermissionAccessMatrix(tuple(entries), cols, tuple(bits), frozenset(unresolved), meta or {})


def multiply(av: AccessVector, m: PermissionAccessMatrix) -> InferredVector:
    """Boolean vector-matrix product (AND for multiplication, OR for addition)."""
    if tuple(av.rows) != tuple(m.rows):
        raise DimensionError("access vector and matrix have different entry-point rows")
    acc = 0
    bits = av.bits
    i = 0
    while bits:
        if bits & 1:
            acc |= m.bits[i]
        bits >>= 1
        i += 1
    return InferredVector(m.cols, acc)


def compute_gap(declared: Iterable[str], ip: InferredVector, flags: Iterable[str] = ()) -> GapReport:
    declared = PermissionSet(declared)
    unknown = declared - ip.cols
    if unknown:
        raise UnknownPermissionError(f"declared permissions not in vocabulary: {', '.join(unknown)}")
    inferred = ip.to_set()
    return GapReport(declared, inferred, declared - inferred, inferred - declared,
                     tuple(sorted(set(flags))))


# -- framework mapping --------------------------------------------------------


_WORKER: dict = {}


def _init_worker(fw, services, sinks):
    _WORKER["ctx"] = DispatchContext(fw, None, services, sinks)
    _WORKER["an"] = PepAnalyzer(_WORKER["ctx"])


def _map_chunk(args):
    roots, mode, max_depth, ascent_budget = args
    ctx, an = _WORKER["ctx"], _WORKER["an"]
    out = []
    for root in roots:
        g = framework_graph(root, ctx, mode, max_depth)
        out.append(an.resolve_graph(g, ascent_budget))
    return out


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("PERMGAP_JOBS", "1")))
    except ValueError:
        return 1


def map_resolutions(fw: Program, services: Optional[ServiceTable], sinks: SinkConfig,
                    mode: str = CHA, max_depth: Optional[int] = None,
                    ascent_budget: int = DEFAULT_ASCENT_BUDGET, jobs: int = 1,
                    entries: Optional[Sequence[MethodRef]] = None) -> list[list[PepResolution]]:
    """PEP resolutions for every entry point, one independent graph per root."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    entries = list(entry_points(fw) if entries is None else entries)
    services = services if services is not None else ServiceTable()
    if jobs <= 1 or len(entries) < 2:
        _init_worker(fw, services, sinks)
        try:
            return _map_chunk((entries, mode, max_depth, ascent_budget))
        finally:
            _WORKER.clear()
    size = max(1, -(-len(entries) // (jobs * 4)))
    chunks = [entries[i:i + size] for i in range(0, len(entries), size)]
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(fw, services, sinks)) as pool:
        parts = pool.map(_map_chunk, [(c, mode, max_depth, ascent_budget) for c in chunks])
        return [res for part in parts for res in part]


def map_framework(fw: Program, services: Optional[ServiceTable], sinks: SinkConfig,
                  mode: str = CHA, strict: bool = False, force: bool = False,
                  max_depth: Optional[int] = None, ascent_budget: int = DEFAULT_ASCENT_BUDGET,
                  jobs: int = 1):
    """Compute the framework's access matrix.

    Returns ``(matrix, resolutions)``. Raises DynamicFeatureError when the
    framework contains reflective markers and ``force`` is false.
    """
    dyn = has_dynamic_features(fw)
    if dyn and not force:
        raise DynamicFeatureError(fw.name, dyn.flagged)
    entries = entry_points(fw)
    resolutions = map_resolutions(fw, services, sinks, mode, max_depth, ascent_budget, jobs, entries)
    flags = []
    if dyn:
        flags.append("unsound: framework uses reflection (forced)")
    meta = {
        "mode": mode,
        "strict": strict,
        "max_depth": max_depth,
        "ascent_budget": ascent_budget,
        "framework": fw.name,
        "flags": flags,
    }
    m = assemble_matrix(resolutions, entries, sinks, strict, meta)
    for res in resolutions:
        for r in res:
            if r.status == UNRESOLVED:
                log.warning("unresolved PEP %s", r.diagnostic())
    return m, resolutions


def matrix_flags(m: PermissionAccessMatrix) -> list[str]:
    flags = list(m.meta.get("flags", []))
    if m.unresolved_rows and not m.meta.get("strict"):
        flags.append(f"unresolved PEPs in {len(m.unresolved_rows)} entry points excluded from the map")
    return flags
