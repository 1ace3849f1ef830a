"""Permission enforcement points: identity regions and permission strings.

For every check-sink call site reached by a call graph this module
decides whether the check runs under the service's own identity (and can
be discarded) and otherwise recovers the permission names the check may
test by walking the method's control-flow graph backwards.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .callgraph import CallGraph, DispatchContext, PepSite, reachable_pep_sites
from .ir import (
    ArrayStore, Branch, ConstStr, Goto, Invoke, MethodDef, MethodRef, Move,
    PermissionSet, Return, SinkConfig, defined_local,
)

RESOLVED = "resolved"
UNRESOLVED = "unresolved"
DISCARDED = "discarded_identity"

DEFAULT_ASCENT_BUDGET = 5

__all__ = [
    "PepSite", "PepResolution", "UnitGraph", "Identity", "build_unit_graph",
    "identity_in_states", "identity_discard", "resolve_permission_arg", "PepAnalyzer",
    "RESOLVED", "UNRESOLVED", "DISCARDED", "DEFAULT_ASCENT_BUDGET",
]


@dataclass(frozen=True)
class PepResolution:
    site: PepSite
    status: str
    permissions: PermissionSet = PermissionSet()
    reason: str = ""

    def diagnostic(self) -> str:
        return f"{self.site.method}\t{self.site.site_index}\t{self.site.sink}\t{self.reason}"


@dataclass(frozen=True)
class UnitGraph:
    succ: tuple[tuple[int, ...], ...]
    pred: tuple[tuple[int, ...], ...]

    def __len__(self):
        return len(self.succ)


def build_unit_graph(m: MethodDef) -> UnitGraph:
    """Statement-level CFG; node 0 is the entry, falling off the end returns."""
    n = len(m.body)
    labels = m.labels
    succ = []
    for i, ins in enumerate(m.body):
        if isinstance(ins, Return):
            succ.append(())
        elif isinstance(ins, Goto):
            succ.append((labels[ins.id],))
        elif isinstance(ins, Branch):
            nxt = (i + 1,) if i + 1 < n else ()
            succ.append(tuple(dict.fromkeys(nxt + (labels[ins.id],))) if nxt else (labels[ins.id],))
        else:
            succ.append((i + 1,) if i + 1 < n else ())
    pred: list[list[int]] = [[] for _ in range(n)]
    for i, ss in enumerate(succ):
        for s in ss:
            pred[s].append(i)
    return UnitGraph(tuple(succ), tuple(tuple(p) for p in pred))


class Identity(Enum):
    CALLER = "caller"
    CLEARED = "cleared"
    UNKNOWN = "unknown"


def _join(a: Optional[Identity], b: Optional[Identity]) -> Optional[Identity]:
    if a is None:
        return b
    if b is None or a == b:
        return a
    return Identity.UNKNOWN


def identity_in_states(m: MethodDef, sc: SinkConfig, cfg: Optional[UnitGraph] = None) -> list[Optional[Identity]]:
    """Forward must-analysis of the calling identity; None marks unreachable nodes."""
    cfg = cfg or build_unit_graph(m)
    n = len(cfg)
    in_state: list[Optional[Identity]] = [None] * n
    out_state: list[Optional[Identity]] = [None] * n
    if n == 0:
        return in_state
    work = list(range(n - 1, -1, -1))
    pending = set(work)
    while work:
        i = work.pop()
        pending.discard(i)
        state = Identity.CALLER if i == 0 else None
        for p in cfg.pred[i]:
            state = _join(state, out_state[p])
        in_state[i] = state
        out = state
        ins = m.body[i]
        if state is not None and isinstance(ins, Invoke):
            if ins.target == sc.clear_identity_sig:
                out = Identity.CLEARED
            elif ins.target == sc.restore_identity_sig:
                out = Identity.CALLER
        if out != out_state[i]:
            out_state[i] = out
            for s in cfg.succ[i]:
                if s not in pending:
                    pending.add(s)
                    work.append(s)
    return in_state


@dataclass(frozen=True)
class _Trace:
    literals: frozenset[str]
    params: frozenset[int]


class PepAnalyzer:
    """Caches intra-procedural facts across the graphs of one context."""

    def __init__(self, ctx: DispatchContext, sc: Optional[SinkConfig] = None):
        self.ctx = ctx
        self.sc = sc if sc is not None else ctx.sinks
        if self.sc is None:
            raise ValueError("a sink configuration is required")
        self._cfg: dict[MethodRef, UnitGraph] = {}
        self._identity: dict[MethodRef, list] = {}
        self._strings: dict[tuple, _Trace] = {}
        self._arrays: dict[tuple, tuple] = {}

    def cfg(self, ref: MethodRef) -> UnitGraph:
        g = self._cfg.get(ref)
        if g is None:
            g = self._cfg[ref] = build_unit_graph(self.ctx.method(ref))
        return g

    def identity_at(self, site: PepSite) -> Optional[Identity]:
        states = self._identity.get(site.method)
        if states is None:
            m = self.ctx.method(site.method)
            states = self._identity[site.method] = identity_in_states(m, self.sc, self.cfg(site.method))
        return states[site.site_index]

    # -- intra-procedural backward chases --------------------------------

    def string_values(self, ref: MethodRef, node: int, local: int) -> _Trace:
        """Literals and parameters that may flow into ``local`` just before ``node``."""
        key = (ref, node, local)
        hit = self._strings.get(key)
        if hit is not None:
            return hit
        m = self.ctx.method(ref)
        cfg = self.cfg(ref)
        literals, params = set(), set()
        seen = set()
        stack = []

        def above(n, v):
            for p in cfg.pred[n]:
                if (p, v) not in seen:
                    seen.add((p, v))
                    stack.append((p, v))
            if n == 0 and v < m.arity:
                params.add(v)

        above(node, local)
        while stack:
            n, v = stack.pop()
            ins = m.body[n]
            if defined_local(ins) == v:
                if isinstance(ins, ConstStr):
                    literals.add(ins.literal)
                elif isinstance(ins, Move):
                    above(n, ins.src)
                continue
            above(n, v)
        result = _Trace(frozenset(literals), frozenset(params))
        self._strings[key] = result
        return result

    def array_stores(self, ref: MethodRef, node: int, local: int):
        """Stores into any alias of ``local`` backward-reachable from ``node``.

        Returns ``(stores, params)`` where stores are ``(node, src local)``
        pairs and params are parameter aliases live at method entry.
        """
        key = (ref, node, local)
        hit = self._arrays.get(key)
        if hit is not None:
            return hit
        m = self.ctx.method(ref)
        cfg = self.cfg(ref)
        aliases = {local}
        moves = [(ins.dst, ins.src) for ins in m.body if isinstance(ins, Move)]
        changed = True
        while changed:
            changed = False
            for dst, src in moves:
                if (dst in aliases) != (src in aliases):
                    aliases |= {dst, src}
                    changed = True
        reach = set()
        stack = list(cfg.pred[node])
        while stack:
            n = stack.pop()
            if n not in reach:
                reach.add(n)
                stack.extend(cfg.pred[n])
        stores = tuple(sorted((n, m.body[n].src) for n in reach
                              if isinstance(m.body[n], ArrayStore) and m.body[n].arr in aliases))
        entry_live = node == 0 or 0 in reach
        params = frozenset(a for a in aliases if a < m.arity) if entry_live else frozenset()
        result = (stores, params)
        self._arrays[key] = result
        return result

    # -- inter-procedural ascent ---------------------------------------------

    def resolve(self, site: PepSite, g: CallGraph, ascent_budget: int = DEFAULT_ASCENT_BUDGET) -> PepResolution:
        ins = self.ctx.method(site.method).body[site.site_index]
        sink = self.sc.sink_map[site.sink]
        local = ins.args[sink.perm_arg_index]
        memo: dict = {}
        problems: set[str] = set()
        if sink.arg_shape == "array":
            found = self._ascend_array(site.method, site.site_index, local, ascent_budget, g, memo, problems)
        else:
            found = self._ascend_string(site.method, site.site_index, local, ascent_budget, g, memo, problems)
        perms = PermissionSet(p for p in found if p in self.sc.vocabulary)
        if problems:
            return PepResolution(site, UNRESOLVED, PermissionSet(), "; ".join(sorted(problems)))
        if not perms:
            return PepResolution(site, UNRESOLVED, PermissionSet(), "no permission literal reaches the check")
        return PepResolution(site, RESOLVED, perms)

    def _from_callers(self, ref, params, budget, g, memo, problems, array):
        out = set()
        for k in sorted(params):
            if budget <= 0:
                problems.add("ascent budget exhausted")
                continue
            callers = g.callers.get(ref, ())
            if not callers:
                problems.add(f"parameter {k} of {ref} has no caller in the graph of {g.root}")
                continue
            for caller, idx in callers:
                call = self.ctx.method(caller).body[idx]
                actual = call.args[k]
                if array:
                    out |= self._ascend_array(caller, idx, actual, budget - 1, g, memo, problems)
                else:
                    out |= self._ascend_string(caller, idx, actual, budget - 1, g, memo, problems)
        return out

    def _ascend_string(self, ref, node, local, budget, g, memo, problems) -> set[str]:
        key = ("s", ref, node, local, budget)
        if key in memo:
            return memo[key]
        memo[key] = set()
        tr = self.string_values(ref, node, local)
        out = set(tr.literals)
        out |= self._from_callers(ref, tr.params, budget, g, memo, problems, array=False)
        memo[key] = out
        return out

    def _ascend_array(self, ref, node, local, budget, g, memo, problems) -> set[str]:
        key = ("a", ref, node, local, budget)
        if key in memo:
            return memo[key]
        memo[key] = set()
        stores, params = self.array_stores(ref, node, local)
        out = set()
        for n, src in stores:
            out |= self._ascend_string(ref, n, src, budget, g, memo, problems)
        out |= self._from_callers(ref, params, budget, g, memo, problems, array=True)
        memo[key] = out
        return out

    # -- whole graph ----------------------------------------------------------

    def resolve_graph(self, g: CallGraph, ascent_budget: int = DEFAULT_ASCENT_BUDGET) -> list[PepResolution]:
        out = []
        for site in reachable_pep_sites(g, self.ctx, self.sc):
            if self.identity_at(site) is Identity.CLEARED:
                out.append(PepResolution(site, DISCARDED, PermissionSet(), "service identity"))
            else:
                out.append(self.resolve(site, g, ascent_budget))
        return out


def identity_discard(g: CallGraph, sites: Iterable[PepSite], ctx: DispatchContext,
                     sc: Optional[SinkConfig] = None) -> list[PepResolution]:
    """Resolutions for the sites that definitely run under the service identity."""
    an = PepAnalyzer(ctx, sc)
    return [PepResolution(s, DISCARDED, PermissionSet(), "service identity")
            for s in sites if an.identity_at(s) is Identity.CLEARED]


def resolve_permission_arg(site: PepSite, g: CallGraph, ctx: DispatchContext,
                           sc: Optional[SinkConfig] = None,
                           ascent_budget: int = DEFAULT_ASCENT_BUDGET) -> PepResolution:
    return PepAnalyzer(ctx, sc).resolve(site, g, ascent_budget)
