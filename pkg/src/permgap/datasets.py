"""Small hand-built bundles used in docs, tests and the CLI demo."""
from __future__ import annotations

from .corpus import CHECK, CHECK_ALL, CLEAR, RESTORE, Corpus
from .ir import (
    APPLICATION, FRAMEWORK, Branch, CheckSink, ClassDef, ConstStr, Invoke, Label, Manifest,
    MethodDef, MethodRef, PermissionSet, Program, ServiceTable, SinkConfig,
)

WORKED_APP_EDGES = (
    ("s", "n2"), ("s", "n3"), ("s", "e3"),
    ("n2", "e1"), ("n2", "n3"),
    ("n3", "n5"), ("n3", "n4"),
    ("n5", "n2"), ("n5", "n4"), ("n5", "e2"),
)
WORKED_FW_EDGES = (
    ("e1", "f1"), ("e2", "f2"), ("e3", "f3"),
    ("f1", "f4"), ("f2", "f5"), ("f5", "ck1"),
    ("f4", "f6"), ("f4", "ck1"),
    ("e4", "f8"), ("f8", "f9"), ("f8", "ck2"),
)
WORKED_CHECKS = {"ck1": "p1", "ck2": "p2"}
WORKED_VOCABULARY = ("p1", "p2", "p3")

API = "fw.Api"
INTERNAL = "fw.Internal"
MAIN = "app.Main"


def _ref(node: str) -> MethodRef:
    if node.startswith("e"):
        return MethodRef(API, node, 0)
    if node.startswith(("f", "ck")):
        return MethodRef(INTERNAL, node, 0)
    return MethodRef(MAIN, node, 0)


def _method(name, callees, public, check=None) -> MethodDef:
    # every call is optional: a two-way branch jumps over it
    body = []
    locals_ = 0
    for i, callee in enumerate(callees):
        lab = f"skip{i}"
        body += [Branch(lab), Invoke("static", _ref(callee), None, ()), Label(lab)]
    if check is not None:
        body += [ConstStr(0, check), Invoke("static", CHECK, None, (0,))]
        locals_ = 1
    return MethodDef(name, 0, public, False, locals_, tuple(body))


def _methods(nodes, edges, public, checks=None):
    checks = checks or {}
    out = []
    for n in nodes:
        callees = [b for a, b in edges if a == n]
        out.append(_method(n, callees, public, checks.get(n)))
    return tuple(out)


def load_worked_example(acyclic: bool = False) -> Corpus:
    """Four entry points, nine internal methods, two checks and a five-method app.

    The app calls e1, e2 and e3 but not e4, so it needs p1 only; it has a
    recursive cycle n2 -> n3 -> n5 -> n2 unless ``acyclic`` drops n5 -> n2.
    """
    app_edges = tuple(e for e in WORKED_APP_EDGES if not (acyclic and e == ("n5", "n2")))
    fw = Program(FRAMEWORK, "worked-framework", (
        ClassDef(API, None, (), True, _methods(["e1", "e2", "e3", "e4"], WORKED_FW_EDGES, True)),
        ClassDef(INTERNAL, None, (), False, _methods(
            ["f1", "f2", "f3", "f4", "f5", "f6", "f8", "f9", "ck1", "ck2"],
            WORKED_FW_EDGES, False, WORKED_CHECKS)),
    ))
    app = Program(APPLICATION, "worked-app", (
        ClassDef(MAIN, None, (), True, _methods(["s", "n2", "n3", "n4", "n5"], app_edges, True)),
    ))
    sinks = SinkConfig(PermissionSet(WORKED_VOCABULARY),
                       (CheckSink(CHECK, 0, "single"), CheckSink(CHECK_ALL, 0, "array")),
                       CLEAR, RESTORE)
    manifest = Manifest("worked-app", PermissionSet(["p1", "p2"]), (_ref("s"),))
    meta = {"seed": None, "spec": {"acyclic": acyclic}, "virtual_ambiguity": False, "opaque_checks": False}
    return Corpus(fw, app, manifest, ServiceTable({}, ()), sinks, PermissionSet(["p1"]), meta)
