"""Per-root call graph construction with CHA or RTA dispatch.

Service lookups (``get_service``) are redirected through the service
table: a virtual call whose receiver local only ever holds a service
reference dispatches to the bound implementation class exactly.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

from .ir import (
    ClassTable, GetService, Invoke, MethodDef, MethodRef, Move,
    NewObj, Program, ServiceTable, SinkConfig, defined_local,
)

CHA = "cha"
RTA = "rta"
MODES = (CHA, RTA)


class ResolutionError(LookupError):
    pass


@dataclass(frozen=True, order=True)
class PepSite:
    method: MethodRef
    site_index: int
    sink: MethodRef
    arg_shape: str = "single"


@dataclass(frozen=True)
class MethodInfo:
    """Per-method facts the graph builder needs, computed once per context."""
    ref: MethodRef
    sites: tuple[tuple[int, Invoke], ...]
    allocated: frozenset[str]
    service_classes: frozenset[str]
    # receiver local -> (bound classes, whether the local has non-service sources)
    service_locals: dict = field(default_factory=dict)


class DispatchContext:
    """Read-only resolution context shared by all graph builds.

    ``instantiated`` seeds rapid type analysis; the service table's init
    classes are always part of it.
    """

    def __init__(self, framework: Program, app: Optional[Program] = None,
                 services: Optional[ServiceTable] = None, sinks: Optional[SinkConfig] = None,
                 instantiated: Iterable[str] = ()):
        self.framework = framework
        self.app = app
        self.hierarchy = ClassTable(framework, app)
        self.services = services if services is not None else ServiceTable()
        self.sinks = sinks
        self.instantiated = frozenset(instantiated) | frozenset(self.services.init_classes)
        self._info: dict[MethodRef, Optional[MethodInfo]] = {}
        self._candidates: dict[MethodRef, tuple[tuple[str, MethodRef], ...]] = {}

    @cached_property
    def public_framework_classes(self) -> frozenset[str]:
        return frozenset(c.name for c in self.framework.classes if c.is_public)

    def is_intrinsic(self, ref: MethodRef) -> bool:
        return self.sinks is not None and self.sinks.is_intrinsic(ref)

    def method(self, ref: MethodRef) -> Optional[MethodDef]:
        return self.hierarchy.methods.get(ref)

    def info(self, ref: MethodRef) -> Optional[MethodInfo]:
        if ref in self._info:
            return self._info[ref]
        m = self.method(ref)
        result = None if m is None or self.is_intrinsic(ref) else self._analyze(ref, m)
        self._info[ref] = result
        return result

    def _analyze(self, ref: MethodRef, m: MethodDef) -> MethodInfo:
        sites, allocated, svc_classes = [], set(), set()
        sources: dict[int, set] = {i: {None} for i in range(m.arity)}
        moves = []
        for idx, ins in enumerate(m.body):
            if isinstance(ins, Invoke):
                sites.append((idx, ins))
            elif isinstance(ins, NewObj):
                allocated.add(ins.cls)
            elif isinstance(ins, GetService):
                bound = self.bound_class(ins.service)
                svc_classes.add(bound)
                sources.setdefault(ins.dst, set()).add(bound)
                continue
            elif isinstance(ins, Move):
                moves.append((ins.src, ins.dst))
                sources.setdefault(ins.dst, set())
                continue
            d = defined_local(ins)
            if d is not None:
                sources.setdefault(d, set()).add(None)
        changed = True
        while changed:
            changed = False
            for src, dst in moves:
                extra = sources.get(src, set()) - sources[dst]
                if extra:
                    sources[dst] |= extra
                    changed = True
        svc_locals = {}
        for loc, srcs in sources.items():
            bound = frozenset(s for s in srcs if s is not None)
            if bound:
                svc_locals[loc] = (bound, None in srcs)
        return MethodInfo(ref, tuple(sites), frozenset(allocated), frozenset(svc_classes), svc_locals)

    def bound_class(self, service: str) -> str:
        try:
            return self.services.bindings[service]
        except KeyError:
            raise ResolutionError(f"service {service!r} is not bound") from None

    def virtual_candidates(self, target: MethodRef) -> tuple[tuple[str, MethodRef], ...]:
        """(receiver class, implementation) for every subtype of the static class."""
        hit = self._candidates.get(target)
        if hit is not None:
            return hit
        h = self.hierarchy
        if h.lookup(target) is None:
            raise ResolutionError(f"unresolved call target {target}")
        out = []
        for cls in sorted(h.subtypes(target.cls)):
            impl = h.dispatch(cls, target.name, target.arity)
            if impl is not None:
                out.append((cls, impl))
        result = tuple(out)
        self._candidates[target] = result
        return result


def resolve_service(site: GetService, ctx: DispatchContext) -> str:
    return ctx.bound_class(site.service)


def resolve_call(site: Invoke, ctx: DispatchContext, mode: str = CHA,
                 instantiated: Optional[frozenset[str]] = None,
                 receiver_services: Optional[tuple[frozenset[str], bool]] = None) -> set[MethodRef]:
    """Possible callees of an invoke.

    ``instantiated`` defaults to the context's seed set (RTA only).
    ``receiver_services`` is the (bound classes, has other sources) pair for
    the receiver local when it may hold a service reference.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    target = site.target
    if ctx.is_intrinsic(target):
        return {target}
    if site.kind != "virtual":
        decl = ctx.hierarchy.lookup(target)
        if decl is None:
            raise ResolutionError(f"unresolved call target {target}")
        return {decl}
    h = ctx.hierarchy
    out: set[MethodRef] = set()
    other = True
    if receiver_services is not None:
        bound, other = receiver_services
        for cls in bound:
            impl = h.dispatch(cls, target.name, target.arity)
            if impl is not None:
                out.add(impl)
    if other:
        candidates = ctx.virtual_candidates(target)
        if mode == CHA:
            out.update(impl for _, impl in candidates)
        else:
            inst = ctx.instantiated if instantiated is None else instantiated
            out.update(impl for cls, impl in candidates if cls in inst)
    elif h.lookup(target) is None:
        raise ResolutionError(f"unresolved call target {target}")
    return out


@dataclass(frozen=True)
class CallGraph:
    root: MethodRef
    nodes: frozenset[MethodRef]
    edges: frozenset[tuple[MethodRef, int, MethodRef]]
    mode: str = CHA
    instantiated: frozenset[str] = frozenset()

    @cached_property
    def callers(self) -> dict[MethodRef, tuple[tuple[MethodRef, int], ...]]:
        index: dict[MethodRef, list] = {}
        for caller, site, callee in sorted(self.edges):
            index.setdefault(callee, []).append((caller, site))
        return {k: tuple(v) for k, v in index.items()}

    @cached_property
    def callees(self) -> dict[tuple[MethodRef, int], tuple[MethodRef, ...]]:
        index: dict = {}
        for caller, site, callee in sorted(self.edges):
            index.setdefault((caller, site), []).append(callee)
        return {k: tuple(v) for k, v in index.items()}

    def to_json(self, pep_nodes: Iterable[MethodRef] = ()) -> dict:
        peps = set(pep_nodes)
        return {
            "root": str(self.root),
            "mode": self.mode,
            "nodes": [{"id": str(n), "pep": n in peps} for n in sorted(self.nodes)],
            "edges": [[str(a), i, str(b)] for a, i, b in sorted(self.edges)],
        }

    def to_dot(self, pep_nodes: Iterable[MethodRef] = ()) -> str:
        peps = set(pep_nodes)
        lines = [f"digraph {json.dumps(str(self.root))} {{"]
        for n in sorted(self.nodes):
            attrs = ' [shape=box, style=filled, fillcolor="#c8f0c8", label="PEP ' + str(n) + '"]' \
                if n in peps else ""
            lines.append(f"  {json.dumps(str(n))}{attrs};")
        for a, i, b in sorted(self.edges):
            lines.append(f"  {json.dumps(str(a))} -> {json.dumps(str(b))} [label={i}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _reach(root, ctx, mode, instantiated, max_depth, expand_framework):
    nodes = {root}
    edges = set()
    allocated = set()
    depth = {root: 0}
    queue = deque([root])
    h = ctx.hierarchy
    while queue:
        cur = queue.popleft()
        if not expand_framework and h.is_framework(cur):
            continue
        info = ctx.info(cur)
        if info is None:
            continue
        allocated |= info.allocated
        allocated |= info.service_classes
        if max_depth is not None and depth[cur] >= max_depth:
            continue
        for idx, ins in info.sites:
            recv = info.service_locals.get(ins.receiver) if ins.kind == "virtual" else None
            for callee in resolve_call(ins, ctx, mode, instantiated, recv):
                edges.add((cur, idx, callee))
                if callee not in nodes:
                    nodes.add(callee)
                    depth[callee] = depth[cur] + 1
                    queue.append(callee)
    return nodes, edges, allocated


def build_call_graph(root: MethodRef, ctx: DispatchContext, mode: str = CHA,
                     max_depth: Optional[int] = None, extra_instantiated: Iterable[str] = (),
                     expand_framework: bool = True) -> CallGraph:
    """Least call graph rooted at ``root``.

    In RTA mode the instantiated set starts from the context seed plus
    ``extra_instantiated`` and grows with every allocation (and service
    lookup) in reached bodies until dispatch is stable. With
    ``expand_framework=False`` framework callees are recorded as nodes but
    their bodies are not explored (application scans).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if ctx.method(root) is None and not ctx.is_intrinsic(root):
        raise ResolutionError(f"unresolved root {root}")
    if max_depth is not None and max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    if mode == CHA:
        nodes, edges, _ = _reach(root, ctx, mode, None, max_depth, expand_framework)
        return CallGraph(root, frozenset(nodes), frozenset(edges), CHA)
    inst = ctx.instantiated | frozenset(extra_instantiated)
    while True:
        nodes, edges, allocated = _reach(root, ctx, mode, inst, max_depth, expand_framework)
        if allocated <= inst:
            return CallGraph(root, frozenset(nodes), frozenset(edges), RTA, inst)
        inst = inst | allocated


def framework_graph(root: MethodRef, ctx: DispatchContext, mode: str = CHA,
                    max_depth: Optional[int] = None) -> CallGraph:
    """Graph for a framework entry point.

    Under RTA, public framework classes count as instantiated: callers
    outside the framework may pass objects of any class they can create.
    """
    extra = ctx.public_framework_classes if mode == RTA else ()
    return build_call_graph(root, ctx, mode, max_depth, extra)


def reachable_pep_sites(g: CallGraph, ctx: DispatchContext,
                        sc: Optional[SinkConfig] = None) -> list[PepSite]:
    sc = sc if sc is not None else ctx.sinks
    if sc is None or not sc.check_sinks:
        return []
    sinks = sc.sink_map
    out = []
    for node in g.nodes:
        info = ctx.info(node)
        if info is None:
            continue
        for idx, ins in info.sites:
            sink = sinks.get(ins.target)
            if sink is not None:
                out.append(PepSite(node, idx, sink.signature, sink.arg_shape))
    return sorted(out)
