"""Access-vector extraction: which framework entry points an app may call."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .callgraph import CHA, RTA, DispatchContext, ResolutionError, build_call_graph
from .ir import APPLICATION, FRAMEWORK, Invoke, Manifest, MethodRef, Program, entry_points, has_dynamic_features
from .mapper import AccessVector, DynamicFeatureError


@dataclass(frozen=True)
class BoundarySite:
    method: MethodRef
    site_index: int
    entry: MethodRef

    def to_json(self):
        return {"method": str(self.method), "site": self.site_index, "entry": str(self.entry)}


@dataclass(frozen=True)
class AppScan:
    av: AccessVector
    reached_app_methods: frozenset[MethodRef]
    boundary_sites: tuple[BoundarySite, ...]
    roots: tuple[MethodRef, ...] = ()
    flags: tuple[str, ...] = field(default=())

    def to_json(self) -> dict:
        doc = self.av.to_json()
        doc["boundary_sites"] = [b.to_json() for b in self.boundary_sites]
        doc["roots"] = [str(r) for r in self.roots]
        doc["flags"] = list(self.flags)
        return doc


def callback_roots(app: Program, ctx: DispatchContext) -> list[MethodRef]:
    """Application methods overriding a framework method.

    The framework may call these on application objects, so they are
    scanned like manifest roots.
    """
    h = ctx.hierarchy
    out = []
    for c in app.classes:
        fw_supers = set()
        stack = list(h.direct_supertypes(c.name))
        seen = set(stack)
        while stack:
            cur = stack.pop()
            if h.origin.get(cur) == FRAMEWORK:
                fw_supers.add(cur)
            for s in h.direct_supertypes(cur):
                if s not in seen:
                    seen.add(s)
                    stack.append(s)
        for m in c.methods:
            if m.is_abstract:
                continue
            if any(MethodRef(s, m.name, m.arity) in h.methods for s in fw_supers):
                out.append(c.ref(m))
    return sorted(out)


def scan_app(app: Program, fw: Program, manifest: Manifest, ctx: Optional[DispatchContext] = None,
             mode: str = CHA, force: bool = False, max_depth: Optional[int] = None) -> AppScan:
    if app.kind != APPLICATION:
        raise ValueError(f"expected an application program, got {app.kind}")
    dyn = has_dynamic_features(app)
    if dyn and not force:
        raise DynamicFeatureError(app.name, dyn.flagged)
    if ctx is None or ctx.app is not app:
        services = ctx.services if ctx is not None else None
        sinks = ctx.sinks if ctx is not None else None
        ctx = DispatchContext(fw, app, services, sinks)
    entries = entry_points(fw)
    index = {e: i for i, e in enumerate(entries)}
    for r in manifest.roots:
        if r not in app.method_map:
            raise ResolutionError(f"manifest root {r} is not an application method")
    callbacks = [r for r in callback_roots(app, ctx) if r not in manifest.roots]
    roots = [(r, ()) for r in sorted(manifest.roots)]
    extra = ctx.public_framework_classes if mode == RTA else ()
    roots += [(r, extra) for r in callbacks]

    h = ctx.hierarchy
    reached, sites, hidden = set(), set(), set()
    for root, seed in roots:
        g = build_call_graph(root, ctx, mode, max_depth, seed, expand_framework=False)
        reached |= {n for n in g.nodes if h.origin.get(n.cls) == APPLICATION}
        for caller, idx, callee in g.edges:
            if h.origin.get(caller.cls) != APPLICATION or h.origin.get(callee.cls) != FRAMEWORK:
                continue
            if callee in index:
                sites.add(BoundarySite(caller, idx, callee))
            elif not ctx.is_intrinsic(callee):
                hidden.add(callee)
    bits = 0
    for s in sites:
        bits |= 1 << index[s.entry]
    flags = []
    if dyn:
        flags.append("unsound: application uses reflection (forced)")
    if hidden:
        flags.append("application reaches non-entry framework methods: "
                     + ", ".join(str(x) for x in sorted(hidden)))
    return AppScan(AccessVector(tuple(entries), bits), frozenset(reached),
                   tuple(sorted(sites, key=lambda s: (s.method, s.site_index, s.entry))),
                   tuple(r for r, _ in roots), tuple(flags))


def _syntactic_targets(app: Program, fw: Program):
    """Every (invoke, possible callee) in the app, by class hierarchy alone."""
    ctx = DispatchContext(fw, app)
    h = ctx.hierarchy
    for _, m in app.methods():
        for ins in m.body:
            if not isinstance(ins, Invoke):
                continue
            yield ins.target
            decl = h.lookup(ins.target)
            if decl is None:
                continue
            yield decl
            if ins.kind == "virtual":
                for _, impl in ctx.virtual_candidates(ins.target):
                    yield impl


def direct_usage_check(app: Program, fw: Program, methods_of_interest: Iterable[MethodRef]) -> bool:
    """True iff any instruction of ``app`` may invoke a method of interest.

    No reachability: every instruction counts, reachable from a root or
    not. Virtual calls count for every override the hierarchy allows.
    """
    wanted = set(methods_of_interest)
    return any(t in wanted for t in _syntactic_targets(app, fw))


def direct_usage_vector(app: Program, fw: Program) -> AccessVector:
    entries = entry_points(fw)
    index = {e: i for i, e in enumerate(entries)}
    bits = 0
    for t in _syntactic_targets(app, fw):
        if t in index:
            bits |= 1 << index[t]
    return AccessVector(tuple(entries), bits)
