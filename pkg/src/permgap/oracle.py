"""Bounded exhaustive interpreter over PBIR.

Explores every outcome of every ``branch`` from each manifest root and
records the permission checks executed under the caller's identity. This
is the dynamic under-approximation the static pipeline is checked
against, and on loop-free programs it computes the required permissions
exactly.

The interpreter deliberately does not reuse the static analysis: dispatch
follows the runtime class of the receiver object, with its own lookup.

Exploration is exact but shares work. A call is summarized by
(method, arguments, reachable arrays, identity, entry context); since
calls return no value, its only effect on the caller is the final state
of the arrays it could reach, so equal keys have equal futures.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .ir import (
    APPLICATION, FRAMEWORK, ArrayNew, ArrayStore, Branch, ConstStr, GetService, Goto,
    Invoke, Label, Manifest, MethodRef, Move, NewObj, PermissionSet, Program, Reflective,
    Return, ServiceTable, SinkConfig, entry_points,
)


class OracleError(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class ExecConfig:
    loop_bound: int = 3
    path_budget: float = 100_000
    step_budget: float = 10_000_000
    max_call_depth: float = 64

    def __post_init__(self):
        for name in ("loop_bound", "path_budget", "step_budget", "max_call_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def unbounded(cls) -> "ExecConfig":
        return cls(loop_bound=1 << 30, path_budget=math.inf, step_budget=math.inf, max_call_depth=math.inf)


@dataclass
class ExecTrace:
    recorded_checks: PermissionSet
    invoked_entries: frozenset[MethodRef]
    exhausted: bool
    per_entry: dict = field(default_factory=dict)
    executed: frozenset = frozenset()
    # check sites (method, instruction index) reached under the caller's identity
    caller_sites: frozenset = frozenset()

    def to_json(self) -> dict:
        return {
            "checks": self.recorded_checks.to_list(),
            "entries": sorted(str(e) for e in self.invoked_entries),
            "exhausted": self.exhausted,
            "per_entry": {str(e): sorted(p) for e, p in sorted(self.per_entry.items())},
        }


class _Budget(Exception):
    pass


def _is_array(v) -> bool:
    return type(v) is tuple and v[0] == "a"


class Interpreter:
    """Executes one application against one framework."""

    def __init__(self, app: Optional[Program], fw: Program, st: Optional[ServiceTable],
                 sc: SinkConfig, cfg: ExecConfig = ExecConfig()):
        self.cfg = cfg
        self.sc = sc
        self.st = st if st is not None else ServiceTable()
        self.classes = {}
        self.kind_of = {}
        self.methods = {}
        for p in (fw, app):
            if p is None:
                continue
            for ref, m in p.methods():
                if any(isinstance(i, Reflective) for i in m.body):
                    raise OracleError(f"{ref} contains a reflective marker")
            for c in p.classes:
                self.classes.setdefault(c.name, c)
                self.kind_of.setdefault(c.name, p.kind)
                for m in c.methods:
                    self.methods.setdefault(c.ref(m), m)
        self.entries = frozenset(entry_points(fw))
        self.sinks = sc.sink_map
        self.checks: set[str] = set()
        self.invoked: set[MethodRef] = set()
        self.per_entry: dict[MethodRef, set[str]] = {}
        self.executed: set = set()
        self.caller_sites: set = set()
        self.exhausted = False
        self.paths = 0
        self.steps = 0
        self._summaries: dict = {}
        self._dispatch_cache: dict = {}
        self._labels: dict = {}

    # -- method lookup ---------------------------------------------------------

    def _static_target(self, ref: MethodRef) -> MethodRef:
        cls = ref.cls
        seen = set()
        queue = [cls]
        while queue:
            cur = queue.pop(0)
            if cur in seen or cur not in self.classes:
                continue
            seen.add(cur)
            cand = MethodRef(cur, ref.name, ref.arity)
            if cand in self.methods:
                return cand
            c = self.classes[cur]
            queue.extend(([c.superclass] if c.superclass else []) + list(c.interfaces))
        raise OracleError(f"cannot resolve {ref}")

    def _runtime_target(self, cls: str, name: str, arity: int) -> MethodRef:
        key = (cls, name, arity)
        hit = self._dispatch_cache.get(key)
        if hit is not None:
            return hit
        cur = cls
        while cur is not None and cur in self.classes:
            ref = MethodRef(cur, name, arity)
            m = self.methods.get(ref)
            if m is not None:
                if m.is_abstract:
                    raise OracleError(f"abstract method {ref} invoked on {cls} object")
                self._dispatch_cache[key] = ref
                return ref
            cur = self.classes[cur].superclass
        # interface default methods
        stack = [cls]
        seen = set()
        while stack:
            cur = stack.pop(0)
            if cur in seen or cur not in self.classes:
                continue
            seen.add(cur)
            ref = MethodRef(cur, name, arity)
            m = self.methods.get(ref)
            if m is not None and not m.is_abstract:
                self._dispatch_cache[key] = ref
                return ref
            c = self.classes[cur]
            stack.extend(([c.superclass] if c.superclass else []) + list(c.interfaces))
        raise OracleError(f"no implementation of {name}/{arity} for runtime class {cls}")

    def _label_slots(self, ref):
        hit = self._labels.get(ref)
        if hit is None:
            m = self.methods[ref]
            names = [i.id for i in m.body if isinstance(i, Label)]
            hit = self._labels[ref] = ({n: k for k, n in enumerate(names)},
                                       {i.id: idx for idx, i in enumerate(m.body) if isinstance(i, Label)})
        return hit

    # -- heap canonicalization -----------------------------------------------

    @staticmethod
    def _canonical(values, heap):
        mapping: dict[int, int] = {}
        order: list[int] = []
        stack = [v for v in reversed(values)]
        while stack:
            v = stack.pop()
            if _is_array(v) and v[1] not in mapping:
                mapping[v[1]] = len(order)
                order.append(v[1])
                stack.extend(reversed(heap[v[1]]))

        def remap(v):
            return ("a", mapping[v[1]]) if _is_array(v) else v

        args = tuple(remap(v) for v in values)
        sub = tuple(tuple(remap(x) for x in heap[i]) for i in order)
        return args, sub, order

    @staticmethod
    def _compact(heap, keep):
        """Keep arrays 0..keep-1 and whatever they reach; renumber the rest."""
        mapping = {i: i for i in range(keep)}
        order = list(range(keep))
        stack = [x for i in range(keep) for x in heap[i]]
        while stack:
            v = stack.pop()
            if _is_array(v) and v[1] not in mapping:
                mapping[v[1]] = len(order)
                order.append(v[1])
                stack.extend(heap[v[1]])

        def remap(v):
            return ("a", mapping[v[1]]) if _is_array(v) else v

        return tuple(tuple(remap(x) for x in heap[i]) for i in order)

    # -- execution -------------------------------------------------------------

    def _record(self, values, ident, entry_ctx):
        if not ident:
            return
        for v in values:
            if isinstance(v, str) and v in self.sc.vocabulary:
                self.checks.add(v)
                if entry_ctx is not None:
                    self.per_entry.setdefault(entry_ctx, set()).add(v)

    def call(self, ref: MethodRef, args: tuple, heap: tuple, ident: bool, depth: int,
             entry_ctx: Optional[MethodRef]) -> list[tuple]:
        """All possible final heaps after running ``ref``; side effects are recorded."""
        if depth > self.cfg.max_call_depth:
            self.exhausted = True
            self.paths += 1
            return []
        cargs, sub, order = self._canonical(args, heap)
        key = (ref, cargs, sub, ident, entry_ctx)
        if self._recursive:
            key += (depth,)
        outcomes = self._summaries.get(key)
        if outcomes is None:
            self._summaries[key] = ()
            outcomes = self._run(ref, cargs, sub, ident, depth, entry_ctx)
            self._summaries[key] = outcomes
        results = []
        k = len(order)
        for final in outcomes:
            new = list(heap)
            ids = order + [len(heap) + j for j in range(len(final) - k)]
            new.extend([()] * (len(final) - k))

            def remap(v):
                return ("a", ids[v[1]]) if _is_array(v) else v

            for j, arr in enumerate(final):
                new[ids[j]] = tuple(remap(x) for x in arr)
            results.append(tuple(new))
        return results

    def _run(self, ref, args, heap, ident, depth, entry_ctx) -> tuple:
        m = self.methods[ref]
        self.executed.add((entry_ctx, ref))
        slots, label_at = self._label_slots(ref)
        body = m.body
        n = len(body)
        keep = len(heap)
        locals0 = tuple(args) + (None,) * m.locals
        start = (0, locals0, heap, ident, (0,) * len(slots))
        seen = {start}
        stack = [start]
        finals = []
        is_app = self.kind_of.get(ref.cls) == APPLICATION
        cfg = self.cfg

        def read(loc, v):
            if v is None:
                raise OracleError(f"{ref}: read of uninitialized local {loc}")
            return v

        def push(state):
            if state not in seen:
                seen.add(state)
                stack.append(state)

        while stack:
            if self.paths >= cfg.path_budget or self.steps >= cfg.step_budget:
                self.exhausted = True
                raise _Budget()
            pc, loc, hp, idn, visits = stack.pop()
            if pc >= n:
                finals.append(hp)
                self.paths += 1
                continue
            self.steps += 1
            ins = body[pc]
            t = type(ins)
            if t is ConstStr:
                push((pc + 1, loc[:ins.dst] + (ins.literal,) + loc[ins.dst + 1:], hp, idn, visits))
            elif t is Move:
                v = read(ins.src, loc[ins.src])
                push((pc + 1, loc[:ins.dst] + (v,) + loc[ins.dst + 1:], hp, idn, visits))
            elif t is NewObj:
                push((pc + 1, loc[:ins.dst] + (("o", ins.cls),) + loc[ins.dst + 1:], hp, idn, visits))
            elif t is GetService:
                bound = self.st.bindings.get(ins.service)
                if bound is None:
                    raise OracleError(f"{ref}: service {ins.service!r} is not bound")
                push((pc + 1, loc[:ins.dst] + (("o", bound),) + loc[ins.dst + 1:], hp, idn, visits))
            elif t is ArrayNew:
                arr = ("a", len(hp))
                push((pc + 1, loc[:ins.dst] + (arr,) + loc[ins.dst + 1:], hp + ((None,) * ins.length,), idn, visits))
            elif t is ArrayStore:
                a = read(ins.arr, loc[ins.arr])
                if not _is_array(a):
                    raise OracleError(f"{ref}@{pc}: array_store into a non-array")
                cells = hp[a[1]]
                if ins.index >= len(cells):
                    raise OracleError(f"{ref}@{pc}: index {ins.index} out of bounds")
                v = read(ins.src, loc[ins.src])
                cells = cells[:ins.index] + (v,) + cells[ins.index + 1:]
                push((pc + 1, loc, hp[:a[1]] + (cells,) + hp[a[1] + 1:], idn, visits))
            elif t is Label:
                k = slots[ins.id]
                if visits[k] >= cfg.loop_bound:
                    self.exhausted = True
                    self.paths += 1
                    continue
                push((pc + 1, loc, hp, idn, visits[:k] + (visits[k] + 1,) + visits[k + 1:]))
            elif t is Goto:
                push((label_at[ins.id], loc, hp, idn, visits))
            elif t is Branch:
                push((label_at[ins.id], loc, hp, idn, visits))
                push((pc + 1, loc, hp, idn, visits))
            elif t is Return:
                finals.append(hp)
                self.paths += 1
            elif t is Invoke:
                for state in self._invoke(ref, pc, ins, loc, hp, idn, visits, depth, entry_ctx, is_app, read):
                    push(state)
            else:
                raise OracleError(f"{ref}@{pc}: cannot execute {ins!r}")
        return tuple(sorted({self._compact(h, keep) for h in finals}, key=repr))

    def _invoke(self, ref, pc, ins, loc, hp, idn, visits, depth, entry_ctx, is_app, read):
        target = ins.target
        if target == self.sc.clear_identity_sig:
            return [(pc + 1, loc, hp, False, visits)]
        if target == self.sc.restore_identity_sig:
            return [(pc + 1, loc, hp, True, visits)]
        sink = self.sinks.get(target)
        if sink is not None:
            v = read(ins.args[sink.perm_arg_index], loc[ins.args[sink.perm_arg_index]])
            if idn:
                self.caller_sites.add((ref, pc))
            if sink.arg_shape == "array":
                if _is_array(v):
                    self._record(hp[v[1]], idn, entry_ctx)
            else:
                self._record((v,), idn, entry_ctx)
            return [(pc + 1, loc, hp, idn, visits)]
        args = tuple(read(a, loc[a]) for a in ins.args)
        if ins.kind == "virtual":
            recv = read(ins.receiver, loc[ins.receiver])
            if not (type(recv) is tuple and recv[0] == "o"):
                raise OracleError(f"{ref}@{pc}: virtual call on a non-object")
            callee = self._runtime_target(recv[1], target.name, target.arity)
        else:
            callee = self._static_target(target)
            if self.methods[callee].is_abstract:
                raise OracleError(f"{ref}@{pc}: call to abstract {callee}")
        ctx = entry_ctx
        callee_kind = self.kind_of.get(callee.cls)
        if is_app and callee_kind == FRAMEWORK:
            if callee in self.entries:
                self.invoked.add(callee)
            ctx = callee
        elif callee_kind == APPLICATION:
            ctx = None
        return [(pc + 1, loc, h, idn, visits)
                for h in self.call(callee, args, hp, idn, depth + 1, ctx)]

    _recursive = True

    def run_roots(self, roots) -> ExecTrace:
        self._recursive = _may_recurse(self)
        try:
            for r in sorted(roots):
                if r not in self.methods:
                    raise OracleError(f"unknown root {r}")
                m = self.methods[r]
                if m.arity:
                    raise OracleError(f"root {r} takes parameters")
                self.call(r, (), (), True, 0, None)
        except _Budget:
            pass
        return self.trace()

    def trace(self) -> ExecTrace:
        return ExecTrace(PermissionSet(self.checks), frozenset(self.invoked), self.exhausted,
                         {e: PermissionSet(self.per_entry.get(e, ())) for e in self.invoked | set(self.per_entry)},
                         frozenset(self.executed), frozenset(self.caller_sites))


def _call_edges(interp: Interpreter):
    """Conservative static call relation (hierarchy-based), for precondition checks."""
    subs: dict[str, set[str]] = {c: {c} for c in interp.classes}
    changed = True
    while changed:
        changed = False
        for name, c in interp.classes.items():
            for sup in ([c.superclass] if c.superclass else []) + list(c.interfaces):
                if sup in subs and not subs[name] <= subs[sup]:
                    subs[sup] |= subs[name]
                    changed = True
    edges: dict[MethodRef, set[MethodRef]] = {}
    for ref, m in interp.methods.items():
        out = edges.setdefault(ref, set())
        for ins in m.body:
            if not isinstance(ins, Invoke) or ins.target in interp.sc.intrinsics:
                continue
            t = ins.target
            for cls in subs.get(t.cls, {t.cls}):
                for cand in (MethodRef(cls, t.name, t.arity),):
                    if cand in interp.methods:
                        out.add(cand)
            try:
                out.add(interp._static_target(t))
            except OracleError:
                pass
    return edges


def _may_recurse(interp: Interpreter) -> bool:
    edges = _call_edges(interp)
    color: dict = {}
    for start in edges:
        if start in color:
            continue
        stack = [(start, iter(edges[start]))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif color.get(nxt) == 1:
                return True
            elif nxt not in color:
                color[nxt] = 1
                stack.append((nxt, iter(edges.get(nxt, ()))))
    return False


def has_loops(p: Program) -> bool:
    """True if any body jumps backwards (to a label at or before the jump)."""
    for _, m in p.methods():
        labels = m.labels
        for i, ins in enumerate(m.body):
            if isinstance(ins, (Goto, Branch)) and labels[ins.id] <= i:
                return True
    return False


def execute(app: Program, fw: Program, manifest: Manifest, st: Optional[ServiceTable],
            sc: SinkConfig, cfg: ExecConfig = ExecConfig()) -> ExecTrace:
    """Explore every run from each manifest root within the configured bounds."""
    return Interpreter(app, fw, st, sc, cfg).run_roots(manifest.roots)


def execute_method(root: MethodRef, fw: Program, st: Optional[ServiceTable], sc: SinkConfig,
                   cfg: ExecConfig = ExecConfig(), app: Optional[Program] = None) -> ExecTrace:
    """Run a single parameterless method (e.g. a framework entry point)."""
    interp = Interpreter(app, fw, st, sc, cfg)
    interp._recursive = _may_recurse(interp)
    try:
        interp.call(root, (), (), True, 0, root if interp.kind_of.get(root.cls) == FRAMEWORK else None)
    except _Budget:
        pass
    return interp.trace()


def check_loop_free(app: Optional[Program], fw: Program, st, sc) -> None:
    for p in (fw, app):
        if p is not None and has_loops(p):
            raise PreconditionError(f"{p.name} contains a loop")
    if _may_recurse(Interpreter(app, fw, st, sc)):
        raise PreconditionError("call structure may be recursive")


def exact_required(app: Program, fw: Program, manifest: Manifest, st: Optional[ServiceTable],
                   sc: SinkConfig) -> PermissionSet:
    """Permissions the app requires, by complete exploration of a loop-free program."""
    check_loop_free(app, fw, st, sc)
    trace = execute(app, fw, manifest, st, sc, ExecConfig.unbounded())
    assert not trace.exhausted
    return trace.recorded_checks


def trace_from_json(doc) -> ExecTrace:
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    return ExecTrace(PermissionSet(doc["checks"]),
                     frozenset(MethodRef.parse(e) for e in doc["entries"]),
                     bool(doc["exhausted"]),
                     {MethodRef.parse(e): PermissionSet(p) for e, p in doc.get("per_entry", {}).items()})
