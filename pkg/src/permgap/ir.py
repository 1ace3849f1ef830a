"""Permission-based intermediate representation (PBIR).

A PBIR document is UTF-8 JSON describing either a framework or an
application: classes, methods and instruction bodies. Sidecar documents
(manifest, service table, sink configuration) use the same encoding.

Instructions are encoded as JSON arrays::

    ["const_str", dst, "literal"]
    ["move", dst, src]
    ["new_obj", dst, "Class"]
    ["array_new", dst, length]
    ["array_store", arr, index, src]
    ["invoke", "static"|"virtual"|"direct", "Class::name/arity", recv|null, [args]]
    ["get_service", dst, "service"]
    ["label", "L"] / ["goto", "L"] / ["branch", "L"]
    ["reflective"]
    ["return"]

``branch`` is a nondeterministic two-way branch: control either falls
through or jumps to the label.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Optional, Union

FRAMEWORK = "framework"
APPLICATION = "application"
INVOKE_KINDS = ("static", "virtual", "direct")
ARG_SHAPES = ("single", "array")


class IRError(ValueError):
    """Malformed PBIR or sidecar document."""

    def __init__(self, message, line=None, column=None, path=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if path:
            where.append(f"at {path}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.column = column
        self.path = path


class WrongKindError(ValueError):
    pass


# -- method references and permission sets ---------------------------------


@dataclass(frozen=True, order=True, slots=True)
class MethodRef:
    cls: str
    name: str
    arity: int

    def __str__(self):
        return f"{self.cls}::{self.name}/{self.arity}"

    @classmethod
    def parse(cls, text: str) -> "MethodRef":
        if not isinstance(text, str):
            raise IRError(f"method reference must be a string, got {text!r}")
        owner, sep, rest = text.partition("::")
        name, slash, arity = rest.rpartition("/")
        if not sep or not slash or not owner or not name or not arity.isdigit():
            raise IRError(f"malformed method reference {text!r}")
        return cls(owner, name, int(arity))


class PermissionSet:
    """Immutable, lexicographically ordered set of permission names."""

    __slots__ = ("_items", "_set")

    def __init__(self, items: Iterable[str] = ()):
        self._set = frozenset(items)
        self._items = tuple(sorted(self._set))

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __contains__(self, item):
        return item in self._set

    def __eq__(self, other):
        if isinstance(other, PermissionSet):
            return self._set == other._set
        if isinstance(other, (set, frozenset)):
            return self._set == other
        return NotImplemented

    def __hash__(self):
        return hash(self._set)

    def __or__(self, other):
        return PermissionSet(self._set | set(other))

    def __and__(self, other):
        return PermissionSet(self._set & set(other))

    def __sub__(self, other):
        return PermissionSet(self._set - set(other))

    def __le__(self, other):
        return self._set <= set(other)

    def __ge__(self, other):
        return self._set >= set(other)

    def __lt__(self, other):
        return self._set < set(other)

    def __gt__(self, other):
        return self._set > set(other)

    def __repr__(self):
        return f"PermissionSet({list(self._items)!r})"

    def index(self, item) -> int:
        return self._items.index(item)

    def to_list(self) -> list[str]:
        return list(self._items)


# -- instructions ------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ConstStr:
    dst: int
    literal: str


@dataclass(frozen=True, slots=True)
class Move:
    dst: int
    src: int


@dataclass(frozen=True, slots=True)
class NewObj:
    dst: int
    cls: str


@dataclass(frozen=True, slots=True)
class ArrayNew:
    dst: int
    length: int


@dataclass(frozen=True, slots=True)
class ArrayStore:
    arr: int
    index: int
    src: int


@dataclass(frozen=True, slots=True)
class Invoke:
    kind: str
    target: MethodRef
    receiver: Optional[int]
    args: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class GetService:
    dst: int
    service: str


@dataclass(frozen=True, slots=True)
class Label:
    id: str


@dataclass(frozen=True, slots=True)
class Goto:
    id: str


@dataclass(frozen=True, slots=True)
class Branch:
    id: str


@dataclass(frozen=True, slots=True)
class Reflective:
    pass


@dataclass(frozen=True, slots=True)
class Return:
    pass


Instruction = Union[ConstStr, Move, NewObj, ArrayNew, ArrayStore, Invoke,
                    GetService, Label, Goto, Branch, Reflective, Return]


def defined_local(ins: Instruction) -> Optional[int]:
    if isinstance(ins, (ConstStr, Move, NewObj, ArrayNew, GetService)):
        return ins.dst
    return None


def used_locals(ins: Instruction) -> tuple[int, ...]:
    if isinstance(ins, Move):
        return (ins.src,)
    if isinstance(ins, ArrayStore):
        return (ins.arr, ins.src)
    if isinstance(ins, Invoke):
        if ins.receiver is None:
            return ins.args
        return (ins.receiver,) + ins.args
    return ()


# -- program structure -------------------------------------------------------


@dataclass(frozen=True)
class MethodDef:
    name: str
    arity: int
    is_public: bool = True
    is_constructor: bool = False
    locals: int = 0
    body: tuple[Instruction, ...] = ()
    is_abstract: bool = False

    @property
    def n_locals(self) -> int:
        """Size of the local frame: parameters occupy ``0 .. arity-1``."""
        return self.arity + self.locals

    @cached_property
    def labels(self) -> dict[str, int]:
        return {ins.id: i for i, ins in enumerate(self.body) if isinstance(ins, Label)}


@dataclass(frozen=True)
class ClassDef:
    name: str
    superclass: Optional[str] = None
    interfaces: tuple[str, ...] = ()
    is_public: bool = True
    methods: tuple[MethodDef, ...] = ()

    def ref(self, m: MethodDef) -> MethodRef:
        return MethodRef(self.name, m.name, m.arity)


@dataclass(frozen=True)
class Program:
    kind: str
    name: str
    classes: tuple[ClassDef, ...] = ()

    @cached_property
    def class_map(self) -> dict[str, ClassDef]:
        return {c.name: c for c in self.classes}

    @cached_property
    def method_map(self) -> dict[MethodRef, MethodDef]:
        out = {}
        for c in self.classes:
            for m in c.methods:
                out.setdefault(c.ref(m), m)
        return out

    def methods(self) -> Iterator[tuple[MethodRef, MethodDef]]:
        for c in self.classes:
            for m in c.methods:
                yield c.ref(m), m


@dataclass(frozen=True)
class Manifest:
    app_name: str
    declared: PermissionSet = field(default_factory=PermissionSet)
    roots: tuple[MethodRef, ...] = ()


@dataclass(frozen=True)
class ServiceTable:
    bindings: dict = field(default_factory=dict)
    init_classes: tuple[str, ...] = ()


@dataclass(frozen=True)
class CheckSink:
    signature: MethodRef
    perm_arg_index: int
    arg_shape: str = "single"


@dataclass(frozen=True)
class SinkConfig:
    vocabulary: PermissionSet
    check_sinks: tuple[CheckSink, ...]
    clear_identity_sig: MethodRef
    restore_identity_sig: MethodRef

    @cached_property
    def sink_map(self) -> dict[MethodRef, CheckSink]:
        return {s.signature: s for s in self.check_sinks}

    @cached_property
    def intrinsics(self) -> frozenset[MethodRef]:
        return frozenset(self.sink_map) | {self.clear_identity_sig, self.restore_identity_sig}

    def is_intrinsic(self, ref: MethodRef) -> bool:
        return ref in self.intrinsics


# -- parsing ----------------------------------------------------------------


def _load_json(document):
    if isinstance(document, (bytes, bytearray)):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IRError(f"document is not UTF-8: {exc}") from None
    if isinstance(document, str):
        try:
            return json.loads(document)
        except json.JSONDecodeError as exc:
            raise IRError(f"syntax error: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    return document


def _expect(cond, message, path):
    if not cond:
        raise IRError(message, path=path)


def _int(value, path, minimum=0):
    _expect(isinstance(value, int) and not isinstance(value, bool) and value >= minimum,
            f"expected integer >= {minimum}, got {value!r}", path)
    return value


def _str(value, path):
    _expect(isinstance(value, str) and value != "", f"expected non-empty string, got {value!r}", path)
    return value


def _bool(value, path):
    _expect(isinstance(value, bool), f"expected boolean, got {value!r}", path)
    return value


def _parse_instruction(raw, path) -> Instruction:
    _expect(isinstance(raw, list) and raw and isinstance(raw[0], str),
            "instruction must be a non-empty array starting with an opcode", path)
    op, args = raw[0], raw[1:]

    def arity(n):
        _expect(len(args) == n, f"{op} takes {n} operands, got {len(args)}", path)

    if op == "const_str":
        arity(2)
        _expect(isinstance(args[1], str), "const_str literal must be a string", path)
        return ConstStr(_int(args[0], path), args[1])
    if op == "move":
        arity(2)
        return Move(_int(args[0], path), _int(args[1], path))
    if op == "new_obj":
        arity(2)
        return NewObj(_int(args[0], path), _str(args[1], path))
    if op == "array_new":
        arity(2)
        return ArrayNew(_int(args[0], path), _int(args[1], path))
    if op == "array_store":
        arity(3)
        return ArrayStore(_int(args[0], path), _int(args[1], path), _int(args[2], path))
    if op == "invoke":
        arity(4)
        kind, target, recv, call_args = args
        _expect(kind in INVOKE_KINDS, f"unknown invoke kind {kind!r}", path)
        try:
            ref = MethodRef.parse(target)
        except IRError as exc:
            raise IRError(str(exc), path=path) from None
        if recv is not None:
            recv = _int(recv, path)
        _expect(isinstance(call_args, list), "invoke arguments must be an array", path)
        return Invoke(kind, ref, recv, tuple(_int(a, path) for a in call_args))
    if op == "get_service":
        arity(2)
        return GetService(_int(args[0], path), _str(args[1], path))
    if op in ("label", "goto", "branch"):
        arity(1)
        return {"label": Label, "goto": Goto, "branch": Branch}[op](_str(args[0], path))
    if op == "reflective":
        arity(0)
        return Reflective()
    if op == "return":
        arity(0)
        return Return()
    raise IRError(f"unknown opcode {op!r}", path=path)


def _parse_method(raw, path) -> MethodDef:
    _expect(isinstance(raw, dict), "method must be an object", path)
    known = {"name", "arity", "public", "constructor", "abstract", "locals", "body"}
    extra = set(raw) - known
    _expect(not extra, f"unknown method keys {sorted(extra)}", path)
    _expect("name" in raw and "arity" in raw, "method requires name and arity", path)
    body_raw = raw.get("body", [])
    _expect(isinstance(body_raw, list), "body must be an array", path)
    body = tuple(_parse_instruction(ins, f"{path}.body[{i}]") for i, ins in enumerate(body_raw))
    labels = set()
    for i, ins in enumerate(body):
        if isinstance(ins, Label):
            _expect(ins.id not in labels, f"duplicate label {ins.id!r}", f"{path}.body[{i}]")
            labels.add(ins.id)
    for i, ins in enumerate(body):
        if isinstance(ins, (Goto, Branch)) and ins.id not in labels:
            raise IRError(f"unresolved label {ins.id!r}", path=f"{path}.body[{i}]")
    is_abstract = _bool(raw.get("abstract", False), path)
    _expect(not (is_abstract and body), "abstract method cannot have a body", path)
    return MethodDef(
        name=_str(raw["name"], path),
        arity=_int(raw["arity"], path),
        is_public=_bool(raw.get("public", False), path),
        is_constructor=_bool(raw.get("constructor", False), path),
        locals=_int(raw.get("locals", 0), path),
        body=body,
        is_abstract=is_abstract,
    )


def _parse_class(raw, path) -> ClassDef:
    _expect(isinstance(raw, dict), "class must be an object", path)
    extra = set(raw) - {"name", "super", "interfaces", "public", "methods"}
    _expect(not extra, f"unknown class keys {sorted(extra)}", path)
    _expect("name" in raw, "class requires a name", path)
    ifaces = raw.get("interfaces", [])
    _expect(isinstance(ifaces, list), "interfaces must be an array", path)
    methods = raw.get("methods", [])
    _expect(isinstance(methods, list), "methods must be an array", path)
    sup = raw.get("super")
    return ClassDef(
        name=_str(raw["name"], path),
        superclass=_str(sup, path) if sup is not None else None,
        interfaces=tuple(_str(x, path) for x in ifaces),
        is_public=_bool(raw.get("public", False), path),
        methods=tuple(_parse_method(m, f"{path}.methods[{i}]") for i, m in enumerate(methods)),
    )


def parse_program(document) -> Program:
    """Parse a PBIR document (bytes, str or already-decoded JSON)."""
    raw = _load_json(document)
    _expect(isinstance(raw, dict), "top level must be an object", "$")
    extra = set(raw) - {"kind", "name", "classes"}
    _expect(not extra, f"unknown top-level keys {sorted(extra)}", "$")
    kind = raw.get("kind")
    _expect(kind in (FRAMEWORK, APPLICATION), f"kind must be framework or application, got {kind!r}", "$.kind")
    classes_raw = raw.get("classes", [])
    _expect(isinstance(classes_raw, list), "classes must be an array", "$.classes")
    classes = []
    seen = set()
    for i, c in enumerate(classes_raw):
        cls = _parse_class(c, f"$.classes[{i}]")
        if cls.name in seen:
            raise IRError(f"duplicate class {cls.name!r}", path=f"$.classes[{i}]")
        seen.add(cls.name)
        classes.append(cls)
    name = raw.get("name", kind)
    return Program(kind=kind, name=_str(name, "$.name"), classes=tuple(classes))


# -- serialization ------------------------------------------------------------


def instruction_to_json(ins: Instruction) -> list:
    if isinstance(ins, ConstStr):
        return ["const_str", ins.dst, ins.literal]
    if isinstance(ins, Move):
        return ["move", ins.dst, ins.src]
    if isinstance(ins, NewObj):
        return ["new_obj", ins.dst, ins.cls]
    if isinstance(ins, ArrayNew):
        return ["array_new", ins.dst, ins.length]
    if isinstance(ins, ArrayStore):
        return ["array_store", ins.arr, ins.index, ins.src]
    if isinstance(ins, Invoke):
        return ["invoke", ins.kind, str(ins.target), ins.receiver, list(ins.args)]
    if isinstance(ins, GetService):
        return ["get_service", ins.dst, ins.service]
    if isinstance(ins, Label):
        return ["label", ins.id]
    if isinstance(ins, Goto):
        return ["goto", ins.id]
    if isinstance(ins, Branch):
        return ["branch", ins.id]
    if isinstance(ins, Reflective):
        return ["reflective"]
    if isinstance(ins, Return):
        return ["return"]
    raise TypeError(f"not an instruction: {ins!r}")


def program_to_json(p: Program) -> dict:
    classes = []
    for c in p.classes:
        doc = {"name": c.name}
        if c.superclass is not None:
            doc["super"] = c.superclass
        if c.interfaces:
            doc["interfaces"] = list(c.interfaces)
        doc["public"] = c.is_public
        methods = []
        for m in c.methods:
            md = {"name": m.name, "arity": m.arity, "public": m.is_public,
                  "constructor": m.is_constructor}
            if m.is_abstract:
                md["abstract"] = True
            md["locals"] = m.locals
            md["body"] = [instruction_to_json(ins) for ins in m.body]
            methods.append(md)
        doc["methods"] = methods
        classes.append(doc)
    return {"kind": p.kind, "name": p.name, "classes": classes}


def _compact(value) -> str:
    return json.dumps(value, ensure_ascii=False, separators=(", ", ": "))


def _format(value, indent: int, key=None) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f'{inner}{json.dumps(k, ensure_ascii=False)}: {_format(v, indent + 1, k)}'
                 for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        if key == "body" or all(not isinstance(v, (dict, list)) for v in value):
            if key != "body":
                return _compact(value)
            return "[\n" + ",\n".join(inner + _compact(v) for v in value) + "\n" + pad + "]"
        return "[\n" + ",\n".join(inner + _format(v, indent + 1) for v in value) + "\n" + pad + "]"
    return json.dumps(value, ensure_ascii=False)


def dumps(doc) -> str:
    """Canonical text for any PBIR/sidecar JSON value (stable, newline-terminated)."""
    return _format(doc, 0) + "\n"


def serialize_program(p: Program) -> bytes:
    return dumps(program_to_json(p)).encode("utf-8")


# -- sidecar documents ----------------------------------------------------------


def parse_manifest(document) -> Manifest:
    raw = _load_json(document)
    _expect(isinstance(raw, dict), "manifest must be an object", "$")
    _expect("app" in raw, "manifest requires 'app'", "$")
    declared = raw.get("declared", [])
    roots = raw.get("roots", [])
    _expect(isinstance(declared, list) and all(isinstance(x, str) for x in declared),
            "declared must be an array of strings", "$.declared")
    _expect(isinstance(roots, list), "roots must be an array", "$.roots")
    try:
        refs = tuple(MethodRef.parse(r) for r in roots)
    except IRError as exc:
        raise IRError(str(exc), path="$.roots") from None
    return Manifest(_str(raw["app"], "$.app"), PermissionSet(declared), tuple(sorted(set(refs))))


def manifest_to_json(m: Manifest) -> dict:
    return {"app": m.app_name, "declared": m.declared.to_list(), "roots": [str(r) for r in sorted(m.roots)]}


def parse_service_table(document) -> ServiceTable:
    raw = _load_json(document)
    _expect(isinstance(raw, dict), "service table must be an object", "$")
    bindings = raw.get("bindings", {})
    _expect(isinstance(bindings, dict) and all(isinstance(v, str) for v in bindings.values()),
            "bindings must map service names to class names", "$.bindings")
    init = raw.get("init", [])
    _expect(isinstance(init, list) and all(isinstance(v, str) for v in init),
            "init must be an array of class names", "$.init")
    return ServiceTable(dict(sorted(bindings.items())), tuple(sorted(set(init))))


def service_table_to_json(st: ServiceTable) -> dict:
    return {"bindings": dict(sorted(st.bindings.items())), "init": sorted(st.init_classes)}


def parse_sink_config(document) -> SinkConfig:
    raw = _load_json(document)
    _expect(isinstance(raw, dict), "sink config must be an object", "$")
    vocab = raw.get("vocabulary", [])
    _expect(isinstance(vocab, list) and all(isinstance(v, str) for v in vocab),
            "vocabulary must be an array of strings", "$.vocabulary")
    _expect(len(vocab) > 0, "vocabulary must be non-empty", "$.vocabulary")
    sinks = []
    for i, s in enumerate(raw.get("sinks", [])):
        path = f"$.sinks[{i}]"
        _expect(isinstance(s, dict) and "sig" in s, "sink requires 'sig'", path)
        shape = s.get("shape", "single")
        _expect(shape in ARG_SHAPES, f"unknown sink shape {shape!r}", path)
        try:
            sig = MethodRef.parse(s["sig"])
        except IRError as exc:
            raise IRError(str(exc), path=path) from None
        idx = _int(s.get("arg", 0), path)
        _expect(idx < sig.arity, "sink argument index out of range", path)
        sinks.append(CheckSink(sig, idx, shape))
    try:
        clear = MethodRef.parse(raw.get("clear_sig"))
        restore = MethodRef.parse(raw.get("restore_sig"))
    except IRError as exc:
        raise IRError(str(exc), path="$.clear_sig/$.restore_sig") from None
    sigs = [s.signature for s in sinks]
    _expect(len(set(sigs)) == len(sigs), "duplicate sink signature", "$.sinks")
    _expect(clear != restore and not ({clear, restore} & set(sigs)),
            "sink and identity signatures must be distinct", "$")
    return SinkConfig(PermissionSet(vocab), tuple(sorted(sinks, key=lambda s: s.signature)), clear, restore)


def sink_config_to_json(sc: SinkConfig) -> dict:
    return {
        "vocabulary": sc.vocabulary.to_list(),
        "sinks": [{"sig": str(s.signature), "arg": s.perm_arg_index, "shape": s.arg_shape}
                  for s in sc.check_sinks],
        "clear_sig": str(sc.clear_identity_sig),
        "restore_sig": str(sc.restore_identity_sig),
    }


# -- class hierarchy ------------------------------------------------------------


class ClassTable:
    """Combined class table over one or more programs (framework first)."""

    def __init__(self, *programs: Program):
        self.programs = tuple(p for p in programs if p is not None)
        self.classes: dict[str, ClassDef] = {}
        self.origin: dict[str, str] = {}
        self.methods: dict[MethodRef, MethodDef] = {}
        for p in self.programs:
            for c in p.classes:
                if c.name in self.classes:
                    continue
                self.classes[c.name] = c
                self.origin[c.name] = p.kind
                for m in c.methods:
                    self.methods.setdefault(c.ref(m), m)
        self._subtypes: dict[str, frozenset[str]] = {}
        self._lookup: dict[MethodRef, Optional[MethodRef]] = {}
        self._dispatch: dict[tuple[str, str, int], Optional[MethodRef]] = {}

    def direct_supertypes(self, name: str) -> tuple[str, ...]:
        c = self.classes.get(name)
        if c is None:
            return ()
        sup = (c.superclass,) if c.superclass is not None else ()
        return sup + c.interfaces

    @cached_property
    def _children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {name: [] for name in self.classes}
        for name in sorted(self.classes):
            for sup in self.direct_supertypes(name):
                if sup in out:
                    out[sup].append(name)
        return out

    def subtypes(self, name: str) -> frozenset[str]:
        """All classes that are ``name`` or (transitively) extend/implement it."""
        hit = self._subtypes.get(name)
        if hit is not None:
            return hit
        seen = {name}
        queue = deque([name])
        while queue:
            for child in self._children.get(queue.popleft(), ()):
                if child not in seen:
                    seen.add(child)
                    queue.append(child)
        result = frozenset(seen)
        self._subtypes[name] = result
        return result

    def superclass_chain(self, name: str) -> Iterator[ClassDef]:
        seen = set()
        while name is not None and name in self.classes and name not in seen:
            seen.add(name)
            c = self.classes[name]
            yield c
            name = c.superclass

    def lookup(self, ref: MethodRef) -> Optional[MethodRef]:
        """Static resolution: the declaration ``ref`` names, searching supertypes."""
        if ref in self._lookup:
            return self._lookup[ref]
        found = None
        if ref in self.methods:
            found = ref
        else:
            queue = deque([ref.cls])
            seen = {ref.cls}
            while queue and found is None:
                cur = queue.popleft()
                cand = MethodRef(cur, ref.name, ref.arity)
                if cand in self.methods:
                    found = cand
                    break
                for sup in self.direct_supertypes(cur):
                    if sup not in seen:
                        seen.add(sup)
                        queue.append(sup)
        self._lookup[ref] = found
        return found

    def dispatch(self, cls: str, name: str, arity: int) -> Optional[MethodRef]:
        """Concrete method a receiver of runtime class ``cls`` executes, or None."""
        key = (cls, name, arity)
        if key in self._dispatch:
            return self._dispatch[key]
        found = None
        for c in self.superclass_chain(cls):
            ref = MethodRef(c.name, name, arity)
            m = self.methods.get(ref)
            if m is not None:
                found = None if m.is_abstract else ref
                break
        else:
            # default methods declared on interfaces
            queue = deque(self.direct_supertypes(cls))
            seen = set(queue)
            while queue:
                cur = queue.popleft()
                ref = MethodRef(cur, name, arity)
                m = self.methods.get(ref)
                if m is not None and not m.is_abstract:
                    found = ref
                    break
                for sup in self.direct_supertypes(cur):
                    if sup not in seen:
                        seen.add(sup)
                        queue.append(sup)
        self._dispatch[key] = found
        return found

    def is_framework(self, ref: MethodRef) -> bool:
        return self.origin.get(ref.cls) == FRAMEWORK


# -- queries ------------------------------------------------------------------


def entry_points(p: Program) -> list[MethodRef]:
    """Public, concrete methods (constructors included) of public framework classes."""
    if p.kind != FRAMEWORK:
        raise WrongKindError(f"entry points are defined for frameworks, not {p.kind}")
    return sorted(c.ref(m) for c in p.classes if c.is_public
                  for m in c.methods if m.is_public and not m.is_abstract)


@dataclass(frozen=True)
class DynamicFeatures:
    flagged: tuple[MethodRef, ...] = ()

    @property
    def clean(self) -> bool:
        return not self.flagged

    def __bool__(self):
        return bool(self.flagged)


def has_dynamic_features(p: Program) -> DynamicFeatures:
    return DynamicFeatures(tuple(sorted(
        ref for ref, m in p.methods() if any(isinstance(i, Reflective) for i in m.body))))


# -- validation -----------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Issue:
    kind: str
    where: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.where}: {self.message}"


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    def __bool__(self):
        return bool(self.issues)

    def __len__(self):
        return len(self.issues)

    def __iter__(self):
        return iter(self.issues)

    @property
    def ok(self) -> bool:
        return not self.issues

    def kinds(self) -> list[str]:
        return [i.kind for i in self.issues]

    def add(self, kind, where, message):
        self.issues.append(Issue(kind, str(where), message))


def _check_hierarchy(p: Program, table: ClassTable, report: ValidationReport):
    names = [c.name for c in p.classes]
    dup = sorted({n for n in names if names.count(n) > 1})
    for n in dup:
        report.add("duplicate_class", n, "class declared more than once")
    for c in p.classes:
        for sup in ((c.superclass,) if c.superclass else ()) + c.interfaces:
            if sup not in table.classes:
                report.add("unresolved_class", c.name, f"supertype {sup!r} is not defined")
        if len(set(c.interfaces)) != len(c.interfaces):
            report.add("duplicate_interface", c.name, "interface listed twice")
        sigs = [(m.name, m.arity) for m in c.methods]
        for name, arity in sorted({s for s in sigs if sigs.count(s) > 1}):
            report.add("duplicate_method", c.name, f"{name}/{arity} declared more than once")
        # cycles through superclass or interface edges
        stack, seen = [c.name], set()
        while stack:
            cur = stack.pop()
            for sup in table.direct_supertypes(cur):
                if sup == c.name:
                    report.add("inheritance_cycle", c.name, "class is its own supertype")
                    stack = []
                    break
                if sup not in seen:
                    seen.add(sup)
                    stack.append(sup)


def _check_method(p, cref, m, table, st, sc, report):
    where = str(cref)
    n = m.n_locals
    array_len: dict[int, int] = {}
    for ins in m.body:
        if isinstance(ins, ArrayNew):
            array_len[ins.dst] = max(array_len.get(ins.dst, 0), ins.length)
    for idx, ins in enumerate(m.body):
        site = f"{where}@{idx}"
        d = defined_local(ins)
        for loc in ((d,) if d is not None else ()) + used_locals(ins):
            if loc >= n:
                report.add("local_out_of_range", site, f"local {loc} >= {n}")
        if isinstance(ins, (Goto, Branch)) and ins.id not in m.labels:
            report.add("unresolved_label", site, f"label {ins.id!r} not in body")
        elif isinstance(ins, NewObj):
            c = table.classes.get(ins.cls)
            if c is None:
                report.add("unresolved_class", site, f"class {ins.cls!r} is not defined")
            elif p.kind == APPLICATION and table.origin[ins.cls] == FRAMEWORK and not c.is_public:
                report.add("inaccessible_class", site, f"application instantiates non-public {ins.cls}")
        elif isinstance(ins, ArrayStore):
            if ins.arr in array_len and ins.index >= array_len[ins.arr]:
                report.add("array_index_out_of_range", site,
                           f"index {ins.index} >= length {array_len[ins.arr]}")
        elif isinstance(ins, GetService):
            if p.kind == APPLICATION:
                report.add("inaccessible_service", site,
                           "applications reach services through framework entry points")
            elif st is None or ins.service not in st.bindings:
                report.add("missing_binding", site, f"service {ins.service!r} has no binding")
        elif isinstance(ins, Invoke):
            t = ins.target
            if len(ins.args) != t.arity:
                report.add("arity_mismatch", site, f"{t} called with {len(ins.args)} arguments")
            if ins.kind == "virtual" and ins.receiver is None:
                report.add("missing_receiver", site, f"virtual call to {t} without receiver")
            if sc is not None and sc.is_intrinsic(t):
                continue
            decl = table.lookup(t)
            if decl is None:
                close = [r for r in table.methods if r.cls == t.cls and r.name == t.name]
                if close and len(ins.args) == t.arity:
                    report.add("arity_mismatch", site, f"{t} has no overload of arity {t.arity}")
                elif not close:
                    report.add("unresolved_method", site, f"{t} does not resolve")
                continue
            target_def = table.methods[decl]
            if ins.kind != "virtual" and target_def.is_abstract:
                report.add("abstract_call", site, f"non-virtual call to abstract {decl}")
            if p.kind == APPLICATION and table.origin.get(decl.cls) == FRAMEWORK:
                owner = table.classes[decl.cls]
                if not (target_def.is_public and (owner.is_public or ins.kind == "virtual")):
                    report.add("inaccessible_method", site, f"application calls non-public {decl}")


def validate(p: Program, companion: Optional[Program] = None, st: Optional[ServiceTable] = None,
             sc: Optional[SinkConfig] = None) -> ValidationReport:
    """Check every structural invariant; the report is empty iff all hold."""
    report = ValidationReport()
    table = ClassTable(p, companion) if p.kind == FRAMEWORK else ClassTable(companion, p)
    _check_hierarchy(p, table, report)
    for c in p.classes:
        for m in c.methods:
            _check_method(p, c.ref(m), m, table, st, sc, report)
    if p.kind == FRAMEWORK and st is not None:
        for svc, cls in sorted(st.bindings.items()):
            if cls not in p.class_map:
                report.add("unknown_service_class", svc, f"bound class {cls!r} not in framework")
        for cls in st.init_classes:
            if cls not in p.class_map:
                report.add("unknown_init_class", cls, "init class not in framework")
    if sc is not None:
        for s in sc.check_sinks:
            if s.perm_arg_index >= s.signature.arity:
                report.add("invalid_sink", s.signature, "argument index out of range")
    report.issues.sort()
    return report


def validate_manifest(manifest: Manifest, app: Program, sc: Optional[SinkConfig] = None) -> ValidationReport:
    report = ValidationReport()
    for r in manifest.roots:
        m = app.method_map.get(r)
        if m is None:
            report.add("unresolved_root", r, "manifest root is not an application method")
        elif m.arity != 0 or m.is_abstract:
            report.add("invalid_root", r, "roots must be concrete methods without parameters")
    if sc is not None:
        for perm in manifest.declared:
            if perm not in sc.vocabulary:
                report.add("unknown_permission", perm, "declared permission is not in the vocabulary")
    report.issues.sort()
    return report
