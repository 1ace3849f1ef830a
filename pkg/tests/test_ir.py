import json

import pytest
from hypothesis import given, settings, strategies as st

from builders import CK, application, call, check, cls, framework, manifest, meth, ref, services, sinks
from permgap.corpus import CorpusSpec, generate_corpus
from permgap.datasets import load_worked_example
from permgap.ir import (
    ClassTable, IRError, MethodRef, PermissionSet, WrongKindError, entry_points, has_dynamic_features,
    manifest_to_json, parse_manifest, parse_program, parse_service_table, parse_sink_config,
    serialize_program, service_table_to_json, sink_config_to_json, validate, validate_manifest,
)


def test_empty_framework_parses():
    p = parse_program({"kind": "framework", "classes": []})
    assert p.classes == ()
    assert entry_points(p) == []


def test_round_trip_is_bit_identical(worked):
    data = serialize_program(worked.framework)
    again = serialize_program(parse_program(data))
    assert data == again
    assert parse_program(data) == worked.framework


def test_syntax_error_reports_position():
    with pytest.raises(IRError) as exc:
        parse_program('{"kind": "framework",\n "classes": [}')
    assert exc.value.line == 2
    assert exc.value.column is not None


@pytest.mark.parametrize("doc, fragment", [
    ({"kind": "framework", "classes": [{"name": "A"}, {"name": "A"}]}, "duplicate class"),
    ({"kind": "framework", "classes": [{"name": "A", "methods": [
        {"name": "m", "arity": 0, "body": [["goto", "nowhere"]]}]}]}, "unresolved label"),
    ({"kind": "framework", "classes": [{"name": "A", "methods": [
        {"name": "m", "arity": 0, "body": [["label", "x"], ["label", "x"]]}]}]}, "duplicate label"),
    ({"kind": "library", "classes": []}, "kind"),
    ({"kind": "framework", "classes": [], "extra": 1}, "unknown top-level"),
    ({"kind": "framework", "classes": [{"name": "A", "methods": [
        {"name": "m", "arity": 0, "body": [["jump"]]}]}]}, "unknown opcode"),
    ({"kind": "framework", "classes": [{"name": "A", "methods": [
        {"name": "m", "arity": 0, "body": [["invoke", "static", "broken", None, []]]}]}]}, "malformed"),
])
def test_parse_errors(doc, fragment):
    with pytest.raises(IRError, match=fragment):
        parse_program(doc)


def test_method_ref_parse_and_order():
    r = MethodRef.parse("a.B::run/2")
    assert (r.cls, r.name, r.arity) == ("a.B", "run", 2)
    assert str(r) == "a.B::run/2"
    assert MethodRef("A", "m", 0) < MethodRef("A", "n", 0) < MethodRef("B", "a", 0)
    for bad in ("A::m", "Am/0", "::m/0", "A::m/x"):
        with pytest.raises(IRError):
            MethodRef.parse(bad)


def test_permission_set_is_sorted_and_set_like():
    a = PermissionSet(["b", "a", "b"])
    assert list(a) == ["a", "b"]
    assert a | ["c"] == PermissionSet("abc")
    assert a - ["a"] == {"b"}
    assert PermissionSet("a") < a and a <= a and not a < a


def test_sidecar_round_trips():
    m = manifest(["p2", "p1"], roots=("app.Main::b/0", "app.Main::a/0"))
    assert parse_manifest(json.dumps(manifest_to_json(m))) == m
    s = services({"svc": "fw.Impl"}, ["fw.Impl"])
    assert parse_service_table(json.dumps(service_table_to_json(s))) == s
    sc = sinks()
    assert parse_sink_config(json.dumps(sink_config_to_json(sc))) == sc


def test_entry_points_need_public_class_and_method():
    fw = framework(
        cls("A", meth("pub"), meth("hidden", public=False), meth("abs", abstract=True)),
        cls("B", meth("pub"), public=False),
    )
    assert entry_points(fw) == [ref("A::pub/0")]
    with pytest.raises(WrongKindError):
        entry_points(application(cls("X")))


def test_worked_example_entry_points(worked):
    assert [str(e) for e in entry_points(worked.framework)] == [f"fw.Api::e{i}/0" for i in (1, 2, 3, 4)]


def test_dispatch_and_lookup():
    fw = framework(
        cls("I", meth("run", abstract=True), meth("dflt")),
        cls("Base", meth("run"), ifaces=("I",)),
        cls("Sub", sup="Base"),
        cls("Over", meth("run"), sup="Base"),
    )
    t = ClassTable(fw)
    assert t.subtypes("I") == {"I", "Base", "Sub", "Over"}
    assert t.dispatch("Sub", "run", 0) == ref("Base::run/0")
    assert t.dispatch("Over", "run", 0) == ref("Over::run/0")
    assert t.dispatch("Sub", "dflt", 0) == ref("I::dflt/0")
    assert t.dispatch("I", "run", 0) is None
    assert t.lookup(ref("Sub::run/0")) == ref("Base::run/0")
    assert t.lookup(ref("Sub::nothing/0")) is None


def test_dynamic_features_flagged():
    fw = framework(cls("A", meth("m", [("reflective",)]), meth("n")))
    assert has_dynamic_features(fw).flagged == (ref("A::m/0"),)
    assert has_dynamic_features(framework(cls("A", meth("n")))).clean


def kinds(report):
    return set(report.kinds())


def test_validate_clean_worked_example(worked):
    assert not validate(worked.framework, None, worked.services, worked.sinks)
    assert not validate(worked.app, worked.framework, worked.services, worked.sinks)
    assert not validate_manifest(worked.manifest, worked.app, worked.sinks)


def test_validate_reports_structural_problems():
    fw = framework(
        cls("A", meth("m", [("const_str", 9, "x")], locals=1),
            meth("m"),
            meth("n", [call("A::m/0", 0)]),
            meth("o", [call("Nope::x/0")]),
            meth("q", [call("A::m/0", kind="virtual")]),
            meth("r", [("new_obj", 0, "Ghost"), ("get_service", 0, "unbound")]),
            meth("s", [("array_new", 0, 1), ("const_str", 1, "v"), ("array_store", 0, 3, 1)]),
            meth("t", [call("A::abs/0")]),
            meth("abs", abstract=True),
            sup="C"),
        cls("C", sup="A"),
    )
    report = validate(fw, None, services({"svc": "Missing"}, ["Absent"]), sinks())
    assert {"local_out_of_range", "duplicate_method", "arity_mismatch", "unresolved_method",
            "missing_receiver", "unresolved_class", "missing_binding", "array_index_out_of_range",
            "abstract_call", "inheritance_cycle", "unknown_service_class",
            "unknown_init_class"} <= kinds(report)


def test_validate_app_access_rules():
    fw = framework(cls("fw.Pub", meth("open"), meth("secret", public=False)),
                   cls("fw.Hidden", meth("x"), public=False))
    app = application(cls("app.Main", meth("main", [
        call("fw.Pub::secret/0"),
        ("new_obj", 0, "fw.Hidden"),
        ("get_service", 1, "svc"),
        call("fw.Pub::open/0"),
    ])))
    report = validate(app, fw, services(), sinks())
    assert kinds(report) == {"inaccessible_method", "inaccessible_class", "inaccessible_service"}


def test_sink_and_identity_calls_need_no_declaration():
    fw = framework(cls("A", meth("m", check("p1"))))
    assert not validate(fw, None, services(), sinks())
    assert "unresolved_method" in kinds(validate(fw, None, services(), None))


def test_validate_manifest():
    app = application(cls("app.Main", meth("main"), meth("withArg", arity=1)))
    m = manifest(["p9"], roots=("app.Main::main/0", "app.Main::withArg/1", "app.Main::ghost/0"))
    assert kinds(validate_manifest(m, app, sinks())) == {"unknown_permission", "invalid_root", "unresolved_root"}


def test_report_issues_sorted_and_deterministic():
    fw = framework(cls("A", meth("b", [call("X::y/0")]), meth("a", [call("X::z/0")])))
    r1, r2 = validate(fw), validate(fw)
    assert r1.issues == r2.issues == sorted(r1.issues)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_generated_programs_round_trip(seed, acyclic):
    c = generate_corpus(seed, CorpusSpec(acyclic=acyclic, verify=False))
    for p in (c.framework, c.app):
        data = serialize_program(p)
        assert serialize_program(parse_program(data)) == data


def test_sink_lookup_uses_signature():
    sc = sinks()
    assert ref(CK) in sc.sink_map
    assert sc.is_intrinsic(sc.clear_identity_sig)
    assert not sc.is_intrinsic(ref("A::m/0"))


def test_fixture_cyclic_flag():
    assert load_worked_example(acyclic=True).app != load_worked_example().app
