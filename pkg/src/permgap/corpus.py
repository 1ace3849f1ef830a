"""Seeded generator of framework/application bundles with known answers.

The generator builds programs from a plan whose dynamic call relation it
knows exactly, so the set of permissions an app requires (the ground
truth) is computed from the plan, not by analysing the generated code.
Every planted branch is a nondeterministic two-way branch, hence every
planned call and check is executable.
"""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .ir import (
    APPLICATION, FRAMEWORK, ArrayNew, ArrayStore, Branch, CheckSink, ClassDef, ConstStr,
    GetService, Invoke, Label, Manifest, MethodDef, MethodRef, Move, NewObj, PermissionSet,
    Program, ServiceTable, SinkConfig, dumps, manifest_to_json, parse_manifest, parse_program,
    parse_service_table, parse_sink_config, serialize_program, service_table_to_json,
    sink_config_to_json, validate, validate_manifest,
)

CHECK = MethodRef("android.content.Context", "enforcePermission", 1)
CHECK_ALL = MethodRef("android.content.Context", "enforcePermissions", 1)
CLEAR = MethodRef("android.os.Binder", "clearCallingIdentity", 0)
RESTORE = MethodRef("android.os.Binder", "restoreCallingIdentity", 0)

LEVELS = 4


class InfeasibleSpecError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusSpec:
    n_classes: int = 10
    n_methods: int = 30
    n_permissions: int = 8
    n_services: int = 1
    p_branch: float = 0.3
    p_identity_region: float = 0.2
    acyclic: bool = True
    # chance a virtual pattern also allocates its decoy class (imprecise for RTA)
    p_ambiguity: float = 0.0
    # chance of an entry point whose check argument comes from the app
    p_opaque: float = 0.0
    app_methods: int = 4
    verify: bool = True

    def check(self):
        for name in ("n_classes", "n_methods", "app_methods"):
            if getattr(self, name) < 1:
                raise InfeasibleSpecError(f"{name} must be positive")
        if self.n_permissions < 1:
            raise InfeasibleSpecError("n_permissions must be positive: the sink vocabulary cannot be empty")
        if self.n_services < 0:
            raise InfeasibleSpecError("n_services must be non-negative")
        for name in ("p_branch", "p_identity_region", "p_ambiguity", "p_opaque"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InfeasibleSpecError(f"{name} must lie in [0, 1]")
        if 1 + 2 * self.n_services > self.n_classes:
            raise InfeasibleSpecError(
                f"{self.n_services} services need {1 + 2 * self.n_services} classes, spec has {self.n_classes}")
        if 1 + 2 * self.n_services > self.n_methods:
            raise InfeasibleSpecError(f"{self.n_services} services need more than {self.n_methods} methods")


@dataclass
class Corpus:
    framework: Program
    app: Program
    manifest: Manifest
    services: ServiceTable
    sinks: SinkConfig
    ground_truth: PermissionSet
    meta: dict = field(default_factory=dict)

    FILES = ("framework.json", "app.json", "manifest.json", "services.json", "sinks.json", "ground_truth.json")

    def documents(self) -> dict[str, bytes]:
        truth = {"ground_truth": self.ground_truth.to_list(), "meta": self.meta}
        return {
            "framework.json": serialize_program(self.framework),
            "app.json": serialize_program(self.app),
            "manifest.json": dumps(manifest_to_json(self.manifest)).encode(),
            "services.json": dumps(service_table_to_json(self.services)).encode(),
            "sinks.json": dumps(sink_config_to_json(self.sinks)).encode(),
            "ground_truth.json": (json.dumps(truth, indent=2, sort_keys=True) + "\n").encode(),
        }

    def write(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for name, data in self.documents().items():
            (out / name).write_bytes(data)
        return out

    @classmethod
    def load(cls, directory) -> "Corpus":
        d = Path(directory)
        truth = json.loads((d / "ground_truth.json").read_text())
        return cls(
            parse_program((d / "framework.json").read_bytes()),
            parse_program((d / "app.json").read_bytes()),
            parse_manifest((d / "manifest.json").read_bytes()),
            parse_service_table((d / "services.json").read_bytes()),
            parse_sink_config((d / "sinks.json").read_bytes()),
            PermissionSet(truth["ground_truth"]),
            truth.get("meta", {}),
        )


class _Body:
    """Instruction buffer with fresh locals and labels."""

    def __init__(self, arity=0):
        self.arity = arity
        self.next_local = arity
        self.next_label = 0
        self.code = []

    def local(self) -> int:
        v = self.next_local
        self.next_local += 1
        return v

    def label(self) -> str:
        self.next_label += 1
        return f"L{self.next_label}"

    def emit(self, *ins):
        self.code.extend(ins)

    def guarded(self, rng: random.Random, p: float, fn):
        if rng.random() < p:
            lab = self.label()
            self.emit(Branch(lab))
            fn()
            self.emit(Label(lab))
        else:
            fn()

    def looped(self, fn):
        lab = self.label()
        self.emit(Label(lab))
        fn()
        self.emit(Branch(lab))

    def method(self, name, public=False, constructor=False) -> MethodDef:
        return MethodDef(name, self.arity, public, constructor, self.next_local - self.arity, tuple(self.code))


@dataclass
class _Plan:
    """What each method does when executed (under the caller's identity)."""
    perms: dict = field(default_factory=dict)   # MethodRef -> set of vocabulary permissions
    calls: dict = field(default_factory=dict)   # MethodRef -> set of MethodRef

    def add_perm(self, ref, perm, vocab):
        if perm in vocab:
            self.perms.setdefault(ref, set()).add(perm)

    def add_call(self, ref, callee):
        self.calls.setdefault(ref, set()).add(callee)

    def reachable(self, roots):
        seen = set(roots)
        stack = list(roots)
        while stack:
            for c in self.calls.get(stack.pop(), ()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen


def _permission_names(n):
    return [f"android.permission.PERM_{i:03d}" for i in range(n)]


def _fake(rng):
    return f"android.permission.FAKE_{rng.randrange(1000):03d}"


class _Generator:
    def __init__(self, seed: int, spec: CorpusSpec):
        self.rng = random.Random(seed)
        self.seed = seed
        self.spec = spec
        self.vocab = _permission_names(spec.n_permissions)
        self.plan = _Plan()
        self.classes: dict[str, dict] = {}    # name -> {super, interfaces, public, methods: {name: MethodDef}}
        self.level: dict[MethodRef, int] = {}
        self.ambiguous = False
        self.opaque = False

    # -- class/method bookkeeping -------------------------------------------

    def cls(self, name, public=False, superclass=None, interfaces=()):
        self.classes[name] = {"super": superclass, "interfaces": tuple(interfaces),
                              "public": public, "methods": {}}

    def put(self, cls, m: MethodDef):
        self.classes[cls]["methods"][(m.name, m.arity)] = m

    def program(self, kind, name, names) -> Program:
        out = []
        for cname in names:
            c = self.classes[cname]
            methods = tuple(c["methods"][k] for k in sorted(c["methods"]))
            out.append(ClassDef(cname, c["super"], c["interfaces"], c["public"], methods))
        return Program(kind, name, tuple(out))

    def perm(self):
        return self.rng.choice(self.vocab)

    # -- framework statements -------------------------------------------------

    def stmt_check_direct(self, ref, body: _Body):
        rng = self.rng
        perm = self.perm()
        v = body.local()
        body.emit(ConstStr(v, perm))
        if rng.random() < 0.3:
            lab = body.label()
            body.emit(Branch(lab), ConstStr(v, rng.choice([_fake(rng), self.perm()])), Label(lab))
            self.plan.add_perm(ref, body.code[-2].literal, self.vocab)
        if rng.random() < 0.4:
            w = body.local()
            body.emit(Move(w, v))
            v = w
        body.emit(Invoke("static", CHECK, None, (v,)))
        self.plan.add_perm(ref, perm, self.vocab)

    def stmt_check_array(self, ref, body: _Body):
        rng = self.rng
        n = rng.randint(1, 3)
        a = body.local()
        body.emit(ArrayNew(a, n))
        for i in range(n):
            lit = self.perm() if i == 0 or rng.random() < 0.8 else _fake(rng)
            v = body.local()
            body.emit(ConstStr(v, lit))
            self.plan.add_perm(ref, lit, self.vocab)
            if i > 0:
                body.guarded(rng, self.spec.p_branch, lambda a=a, i=i, v=v: body.emit(ArrayStore(a, i, v)))
            else:
                body.emit(ArrayStore(a, i, v))
        if rng.random() < 0.4:
            b = body.local()
            body.emit(Move(b, a))
            a = b
        body.emit(Invoke("static", CHECK_ALL, None, (a,)))

    def stmt_identity(self, ref, body: _Body):
        perm = self.perm()
        v = body.local()
        if self.rng.random() < 0.5:
            body.emit(Invoke("static", CLEAR, None, ()), ConstStr(v, perm),
                      Invoke("static", CHECK, None, (v,)), Invoke("static", RESTORE, None, ()))
        else:
            lab = body.label()
            body.emit(Branch(lab), Invoke("static", CLEAR, None, ()), Label(lab), ConstStr(v, perm),
                      Invoke("static", CHECK, None, (v,)), Invoke("static", RESTORE, None, ()))
            self.plan.add_perm(ref, perm, self.vocab)

    def stmt_call(self, ref, body: _Body, callee: MethodRef, *, array_arg=None, literal=None):
        args = ()
        if literal is not None:
            v = body.local()
            body.emit(ConstStr(v, literal))
            args = (v,)
        elif array_arg is not None:
            a = body.local()
            body.emit(ArrayNew(a, len(array_arg)))
            for i, lit in enumerate(array_arg):
                v = body.local()
                body.emit(ConstStr(v, lit), ArrayStore(a, i, v))
            args = (a,)
        body.emit(Invoke("static", callee, None, args))
        self.plan.add_call(ref, callee)

    # -- framework construction --------------------------------------------------

    def build_framework(self):
        rng, spec = self.rng, self.spec
        budget_classes = spec.n_classes - 2 * spec.n_services
        budget_methods = spec.n_methods

        services = []
        for k in range(spec.n_services):
            iface, impl = f"fw.svc.IService{k}", f"fw.svc.Service{k}Impl"
            self.cls(iface, public=False)
            self.cls(impl, public=False, interfaces=(iface,))
            services.append((f"svc{k}", iface, impl))
        budget_methods -= 2 * spec.n_services  # one operation each, at least

        n_vpat = 0
        while budget_classes - 3 >= 2 and budget_methods - 3 >= 3 and n_vpat < 1 + spec.n_classes // 8:
            if rng.random() < 0.25 and n_vpat > 0:
                break
            n_vpat += 1
            budget_classes -= 3
            budget_methods -= 3
        pubvirt = budget_classes - 2 >= 2 and budget_methods - 2 >= 3 and rng.random() < 0.6
        if pubvirt:
            budget_classes -= 2
            budget_methods -= 2
        n_param = min(max(0, budget_methods // 5), 6)
        budget_methods -= n_param
        opaque = budget_methods >= 3 and rng.random() < spec.p_opaque
        if opaque:
            budget_methods -= 1

        n_api = max(1, budget_classes // 2)
        n_helper = budget_classes - n_api
        api = [f"fw.Api{i}" for i in range(n_api)]
        helpers = [f"fw.internal.Helper{i}" for i in range(n_helper)]
        for c in api:
            self.cls(c, public=True)
        for c in helpers:
            self.cls(c, public=False)
        hosts_hidden = helpers or api

        # ordinary methods: entries at level 0, the rest spread over deeper levels
        ordinary: list[tuple[MethodRef, int, bool, bool]] = []
        n_entries = max(1, budget_methods // 3)
        for i in range(max(1, budget_methods)):
            if i < n_entries:
                owner = api[i % n_api]
                ctor = i == 0 or rng.random() < 0.15
                name = "<init>" if ctor and (("<init>", 0) not in self.classes[owner]["methods"]) else f"api{i}"
                ref = MethodRef(owner, name, 0)
                level, public = 0, True
                if rng.random() < 0.2:
                    level = 1
            else:
                owner = rng.choice(hosts_hidden)
                ref = MethodRef(owner, f"m{i}", 0)
                level, public = rng.randint(1, LEVELS), owner in api and rng.random() < 0.3
                if public:
                    level = max(level, 1)
            self.classes[owner]["methods"][(ref.name, 0)] = None
            ordinary.append((ref, level, public, ref.name == "<init>"))
            self.level[ref] = level

        # parameter helpers: deepest level, hidden, arity 1
        param_helpers = []
        for i in range(n_param):
            owner = rng.choice(hosts_hidden)
            ref = MethodRef(owner, f"check{i}", 1)
            shape = "array" if rng.random() < 0.3 else "single"
            param_helpers.append((ref, shape))
            self.level[ref] = LEVELS + 1 + (n_param - i)
        for idx, (ref, shape) in enumerate(param_helpers):
            b = _Body(arity=1)
            chained = [h for h, s in param_helpers[idx + 1:] if s == shape]
            p = 0
            if rng.random() < 0.3:
                w = b.local()
                b.emit(Move(w, p))
                p = w
            if chained and rng.random() < 0.5:
                nxt = rng.choice(chained)
                b.emit(Invoke("static", nxt, None, (p,)))
                self.plan.add_call(ref, nxt)
            else:
                b.emit(Invoke("static", CHECK_ALL if shape == "array" else CHECK, None, (p,)))
            self.put(ref.cls, b.method(ref.name))
        param_shape = dict(param_helpers)

        # virtual patterns: hidden abstract base, implementation, decoy
        vpatterns = []
        for k in range(n_vpat):
            base, impl, decoy = f"fw.v{k}.Base", f"fw.v{k}.Impl", f"fw.v{k}.Decoy"
            self.cls(base, public=False)
            self.cls(impl, public=False, superclass=base)
            self.cls(decoy, public=False, superclass=base)
            self.put(base, MethodDef("run", 0, False, False, 0, (), is_abstract=True))
            level = rng.randint(2, LEVELS)
            self.level[MethodRef(impl, "run", 0)] = level
            self.level[MethodRef(decoy, "run", 0)] = level
            vpatterns.append((base, impl, decoy, level))

        ops = []
        for name, iface, impl in services:
            self.put(iface, MethodDef("op", 0, False, False, 0, (), is_abstract=True))
            level = rng.randint(1, LEVELS)
            self.level[MethodRef(impl, "op", 0)] = level
            ops.append((name, iface, impl, level))

        pv = None
        if pubvirt:
            pbase, pext = "fw.widget.View", "fw.widget.FancyView"
            self.cls(pbase, public=True)
            self.cls(pext, public=True, superclass=pbase)
            for c in (pbase, pext):
                self.level[MethodRef(c, "draw", 0)] = 0
            pv = (pbase, pext)

        opaque_ref = None
        if opaque:
            opaque_ref = MethodRef(api[0], "checkCustom", 1)
            b = _Body(arity=1)
            b.emit(Invoke("static", CHECK, None, (0,)))
            self.put(api[0], b.method("checkCustom", public=True))
            self.opaque = True

        # bodies of ordinary methods, service operations, pattern implementations
        callable_refs = [r for r, _, _, _ in ordinary]
        deeper = {}
        for lvl in range(LEVELS + 2):
            deeper[lvl] = [r for r in callable_refs if self.level[r] > lvl]
        hosts: dict[MethodRef, list] = {}
        # plant each service operation and virtual pattern in a shallower method
        for name, iface, impl, level in ops:
            cands = [r for r in callable_refs if self.level[r] < level] or callable_refs[:1]
            hosts.setdefault(rng.choice(cands), []).append(("service", name, iface, impl))
        for base, impl, decoy, level in vpatterns:
            cands = [r for r in callable_refs if self.level[r] < level] or callable_refs[:1]
            hosts.setdefault(rng.choice(cands), []).append(("virtual", base, impl, decoy))

        bodies = [(r, lvl, pub, ctor) for r, lvl, pub, ctor in ordinary]
        bodies += [(MethodRef(impl, "op", 0), level, False, False) for _, _, impl, level in ops]
        bodies += [(MethodRef(impl, "run", 0), level, False, False) for _, impl, _, level in vpatterns]
        if pv:
            bodies += [(MethodRef(c, "draw", 0), 0, True, False) for c in pv]

        for ref, lvl, public, ctor in bodies:
            b = _Body()
            for planted in hosts.get(ref, ()):
                self._plant(ref, b, planted)
            n_stmts = rng.randint(1, 3)
            for _ in range(n_stmts):
                self._framework_stmt(ref, b, lvl, deeper, param_helpers, param_shape)
            if not self.spec.acyclic and rng.random() < 0.15:
                back = [r for r in callable_refs if 0 < self.level[r] <= max(lvl, 1)]
                if back:
                    tgt = rng.choice(back)
                    lab = b.label()
                    b.emit(Branch(lab))
                    self.stmt_call(ref, b, tgt)
                    b.emit(Label(lab))
            self.put(ref.cls, b.method(ref.name, public=public, constructor=ctor))

        for base, impl, decoy, level in vpatterns:
            b = _Body()
            self.stmt_check_direct(MethodRef("<decoy>", "run", 0), b)
            self.put(decoy, b.method("run"))

        self.fw_entries = [r for r, _, pub, _ in ordinary if pub and self.classes[r.cls]["public"]]
        self.fw_entries += [MethodRef(c, "draw", 0) for c in (pv or ())]
        self.pv = pv
        self.opaque_ref = opaque_ref
        self.services = services
        names = sorted(self.classes)
        fw = self.program(FRAMEWORK, f"framework-{self.seed}", names)
        st = ServiceTable({n: impl for n, _, impl in services}, tuple(sorted(impl for _, _, impl in services)))
        return fw, st

    def _plant(self, ref, b: _Body, planted):
        if planted[0] == "service":
            _, name, iface, impl = planted
            s = b.local()
            b.emit(GetService(s, name), Invoke("virtual", MethodRef(iface, "op", 0), s, ()))
            self.plan.add_call(ref, MethodRef(impl, "op", 0))
        else:
            _, base, impl, decoy = planted
            x = b.local()
            b.emit(NewObj(x, impl))
            if self.rng.random() < self.spec.p_ambiguity:
                y = b.local()
                b.emit(NewObj(y, decoy))
                self.ambiguous = True
            b.emit(Invoke("virtual", MethodRef(base, "run", 0), x, ()))
            self.plan.add_call(ref, MethodRef(impl, "run", 0))

    def _framework_stmt(self, ref, b: _Body, lvl, deeper, param_helpers, param_shape):
        rng, spec = self.rng, self.spec
        targets = deeper.get(lvl, [])
        if rng.random() < spec.p_identity_region:
            self.stmt_identity(ref, b)
            return
        kinds = ["call"] * 4 + ["direct"] * 2 + ["array"]
        if param_helpers:
            kinds += ["param"] * 2
        kind = rng.choice(kinds)
        if kind == "call" and not targets:
            kind = "direct"

        def act():
            if kind == "call":
                self.stmt_call(ref, b, rng.choice(targets))
            elif kind == "direct":
                self.stmt_check_direct(ref, b)
            elif kind == "array":
                self.stmt_check_array(ref, b)
            else:
                helper, shape = rng.choice(param_helpers)
                if shape == "array":
                    lits = [self.perm() for _ in range(rng.randint(1, 2))]
                    self.stmt_call(ref, b, helper, array_arg=lits)
                else:
                    lits = [self.perm()]
                    self.stmt_call(ref, b, helper, literal=lits[0])
                for lit in lits:
                    self.plan.add_perm(ref, lit, self.vocab)

        if not spec.acyclic and rng.random() < 0.15:
            b.looped(lambda: b.guarded(rng, spec.p_branch, act))
        else:
            b.guarded(rng, spec.p_branch, act)

    # -- application --------------------------------------------------------------

    def build_app(self):
        rng, spec = self.rng, self.spec
        main = "app.Main"
        self.cls(main, public=True)
        app_classes = [main]
        entries = sorted(self.fw_entries)
        statics = [e for e in entries if e.name != "<init>" and e.name != "draw"]
        ctors = [e for e in entries if e.name == "<init>"]
        helpers = [MethodRef(main, f"step{i}", 0) for i in range(spec.app_methods)]
        level = {h: rng.randint(1, 3) for h in helpers}
        roots = [MethodRef(main, "onCreate", 0)]
        if rng.random() < 0.4:
            roots.append(MethodRef(main, "onStart", 0))
        for r in roots:
            level[r] = 0

        task = None
        if rng.random() < 0.5:
            task = ("app.Task", "app.TaskImpl", "app.TaskDecoy")
            self.cls(task[0], public=False)
            self.cls(task[1], public=False, superclass=task[0])
            self.cls(task[2], public=False, superclass=task[0])
            self.put(task[0], MethodDef("run", 0, False, False, 0, (), is_abstract=True))
            app_classes += list(task)
            level[MethodRef(task[1], "run", 0)] = 2
            level[MethodRef(task[2], "run", 0)] = 2

        def entry_call(ref, b):
            choice = rng.random()
            if self.pv and choice < 0.2:
                pbase, pext = self.pv
                x = b.local()
                b.emit(NewObj(x, pext))
                if rng.random() < spec.p_ambiguity:
                    y = b.local()
                    b.emit(NewObj(y, pbase))
                    self.ambiguous = True
                b.emit(Invoke("virtual", MethodRef(pbase, "draw", 0), x, ()))
                self.plan.add_call(ref, MethodRef(pext, "draw", 0))
            elif ctors and choice < 0.35:
                e = rng.choice(ctors)
                x = b.local()
                b.emit(NewObj(x, e.cls), Invoke("direct", e, x, ()))
                self.plan.add_call(ref, e)
            elif statics:
                self.stmt_call(ref, b, rng.choice(statics))
            elif ctors:
                e = ctors[0]
                x = b.local()
                b.emit(NewObj(x, e.cls), Invoke("direct", e, x, ()))
                self.plan.add_call(ref, e)

        order = roots + helpers + ([MethodRef(task[1], "run", 0)] if task else [])
        for ref in order:
            b = _Body()
            lvl = level[ref]
            if task and lvl < 2 and rng.random() < 0.4:
                x = b.local()
                b.emit(NewObj(x, task[1]), Invoke("virtual", MethodRef(task[0], "run", 0), x, ()))
                self.plan.add_call(ref, MethodRef(task[1], "run", 0))
            for _ in range(rng.randint(1, 3)):
                deeper = [h for h in helpers if level[h] > lvl]
                if deeper and rng.random() < 0.35:
                    tgt = rng.choice(deeper)
                    b.guarded(rng, max(spec.p_branch, 0.5), lambda tgt=tgt: self.stmt_call(ref, b, tgt))
                else:
                    b.guarded(rng, max(spec.p_branch, 0.5), lambda: entry_call(ref, b))
            if ref in roots and self.opaque_ref is not None and rng.random() < 0.7:
                self.stmt_call(ref, b, self.opaque_ref, literal="com.example.CUSTOM")
            self.put(ref.cls, b.method(ref.name, public=True))
        if task:
            b = _Body()
            entry_call(MethodRef("<decoy>", "run", 0), b)
            self.put(task[2], b.method("run", public=True))
        # dead code: never called from a root
        b = _Body()
        if statics:
            self.stmt_call(MethodRef("<dead>", "unused", 0), b, rng.choice(statics))
        self.put(main, b.method("unused", public=True))

        app = self.program(APPLICATION, f"app-{self.seed}", sorted(app_classes))
        return app, roots


def generate_corpus(seed: int, spec: Optional[CorpusSpec] = None) -> Corpus:
    """Deterministically generate a framework, an application and their answer."""
    spec = spec or CorpusSpec()
    spec.check()
    g = _Generator(seed, spec)
    fw, st = g.build_framework()
    app, roots = g.build_app()
    reach = g.plan.reachable(roots)
    truth = PermissionSet(p for ref in reach for p in g.plan.perms.get(ref, ()))
    rng = g.rng
    declared = set(truth)
    if declared and rng.random() < 0.2:
        declared.discard(rng.choice(sorted(declared)))
    extras = [p for p in g.vocab if p not in truth]
    for p in rng.sample(extras, min(len(extras), rng.randint(0, 2))):
        declared.add(p)
    sinks = SinkConfig(PermissionSet(g.vocab),
                       (CheckSink(CHECK, 0, "single"), CheckSink(CHECK_ALL, 0, "array")),
                       CLEAR, RESTORE)
    manifest = Manifest(f"app-{seed}", PermissionSet(declared), tuple(sorted(roots)))
    meta = {
        "seed": seed,
        "spec": asdict(spec),
        "virtual_ambiguity": g.ambiguous,
        "opaque_checks": g.opaque,
    }
    corpus = Corpus(fw, app, manifest, st, sinks, truth, meta)
    if spec.verify:
        _verify(corpus)
    return corpus


def _verify(c: Corpus):
    from .oracle import exact_required

    for report in (validate(c.framework, None, c.services, c.sinks),
                   validate(c.app, c.framework, c.services, c.sinks),
                   validate_manifest(c.manifest, c.app, c.sinks)):
        if report:
            raise AssertionError("generated corpus does not validate:\n" + "\n".join(map(str, report)))
    if c.meta["spec"]["acyclic"]:
        got = exact_required(c.app, c.framework, c.manifest, c.services, c.sinks)
        if got != c.ground_truth:
            raise AssertionError(f"planted ground truth {c.ground_truth} != interpreter {got}")
