import json

import pytest

from builders import CK, CK_ALL, CLR, RST, application, call, check, cls, framework, manifest, meth, ref, services, sinks
from permgap.oracle import (
    ExecConfig, OracleError, PreconditionError, exact_required, execute, execute_method, has_loops,
    trace_from_json,
)


def run(fw, app, cfg=ExecConfig(), svc=None):
    return execute(app, fw, manifest(), svc or services(), sinks(), cfg)


def main_app(*body):
    return application(cls("app.Main", meth("main", list(body))))


def test_worked_example_records_p1(worked):
    t = execute(worked.app, worked.framework, worked.manifest, worked.services, worked.sinks)
    assert t.recorded_checks == {"p1"}
    assert sorted(map(str, t.invoked_entries)) == ["fw.Api::e1/0", "fw.Api::e2/0", "fw.Api::e3/0"]
    assert t.per_entry[ref("fw.Api::e3/0")] == set()
    doc = t.to_json()
    assert set(doc) == {"checks", "entries", "exhausted", "per_entry"}
    assert doc["checks"] == ["p1"]


def test_worked_example_exact_on_acyclic_variant(worked, worked_acyclic):
    args = (worked_acyclic.app, worked_acyclic.framework, worked_acyclic.manifest,
            worked_acyclic.services, worked_acyclic.sinks)
    assert exact_required(*args) == {"p1"}
    with pytest.raises(PreconditionError):
        exact_required(worked.app, worked.framework, worked.manifest, worked.services, worked.sinks)


def test_identity_regions():
    fw = framework(cls("fw.Api",
                       meth("full", [call(CLR)] + check("p1") + [call(RST)]),
                       meth("mixed", [("branch", "L"), call(CLR), ("label", "L")] + check("p2") + [call(RST)]),
                       meth("after", [call(CLR), call(RST)] + check("p3"))))
    t = run(fw, main_app(call("fw.Api::full/0"), call("fw.Api::mixed/0")))
    assert t.recorded_checks == {"p2"}
    assert t.caller_sites == {(ref("fw.Api::mixed/0"), 4)}
    assert run(fw, main_app(call("fw.Api::after/0"))).recorded_checks == {"p3"}


def test_runtime_dispatch_and_services():
    fw = framework(
        cls("fw.Api", meth("go", [("new_obj", 0, "fw.Impl"), call("fw.Base::run/0", kind="virtual", recv=0),
                                  ("get_service", 1, "svc"), call("fw.ISvc::op/0", kind="virtual", recv=1)])),
        cls("fw.Base", meth("run", abstract=True), public=False),
        cls("fw.Impl", meth("run", check("p1")), sup="fw.Base", public=False),
        cls("fw.Decoy", meth("run", check("p2")), sup="fw.Base", public=False),
        cls("fw.ISvc", meth("op", abstract=True), public=False),
        cls("fw.SvcImpl", meth("op", check("p3")), ifaces=("fw.ISvc",), public=False),
    )
    t = run(fw, main_app(call("fw.Api::go/0")), svc=services({"svc": "fw.SvcImpl"}, ["fw.SvcImpl"]))
    assert t.recorded_checks == {"p1", "p3"}


def test_arrays_are_read_at_check_time():
    fw = framework(cls("fw.Api", meth("go", [
        ("array_new", 0, 2), ("const_str", 1, "p1"), ("array_store", 0, 0, 1),
        call("fw.Api::helper/1", 0),
        ("const_str", 2, "p3"), ("array_store", 0, 1, 2)]),
        meth("helper", [call(CK_ALL, 0)], arity=1, public=False)))
    t = run(fw, main_app(call("fw.Api::go/0")))
    assert t.recorded_checks == {"p1"}


def test_helper_mutating_caller_array():
    fw = framework(cls("fw.Api", meth("go", [
        ("array_new", 0, 1), call("fw.Api::fill/1", 0), call(CK_ALL, 0)]),
        meth("fill", [("branch", "L"), ("const_str", 1, "p2"), ("array_store", 0, 0, 1), ("label", "L")],
             arity=1, public=False)))
    t = run(fw, main_app(call("fw.Api::go/0")))
    assert t.recorded_checks == {"p2"}


def test_non_vocabulary_strings_are_not_recorded():
    fw = framework(cls("fw.Api", meth("go", check("custom.X"))))
    assert run(fw, main_app(call("fw.Api::go/0"))).recorded_checks == set()


def test_loop_bound_and_exhaustion():
    fw = framework(cls("fw.Api", meth("go", check("p1"))))
    app = main_app(("label", "top"), call("fw.Api::go/0"), ("branch", "top"))
    assert has_loops(app)
    t = run(fw, app, ExecConfig(loop_bound=2))
    assert t.recorded_checks == {"p1"} and t.exhausted
    with pytest.raises(PreconditionError):
        exact_required(app, fw, manifest(), services(), sinks())


def test_path_budget_stops_exploration():
    body = []
    for i in range(20):
        # distinct locals keep the 2^20 paths from merging into one state
        body += [("const_str", i + 2, "a"), ("branch", f"L{i}"), ("const_str", i + 2, "b"), ("label", f"L{i}")]
    fw = framework(cls("fw.Api", meth("go", body + check("p1", 1), locals=24)))
    t = run(fw, main_app(call("fw.Api::go/0")), ExecConfig(path_budget=5))
    assert t.exhausted


def test_recursion_bounded_by_call_depth():
    fw = framework(cls("fw.Api", meth("go", [("branch", "end"), call("fw.Api::go/0"), ("label", "end")] + check("p2"))))
    t = run(fw, main_app(call("fw.Api::go/0")), ExecConfig(max_call_depth=4))
    assert t.recorded_checks == {"p2"} and t.exhausted


def test_uninitialized_read_is_an_error():
    fw = framework(cls("fw.Api", meth("go", [call(CK, 3)])))
    with pytest.raises(OracleError):
        run(fw, main_app(call("fw.Api::go/0")))


def test_execute_method_and_trace_round_trip():
    fw = framework(cls("fw.Api", meth("go", check("p1") + [call("fw.Api::other/0")]), meth("other", check("p3"))))
    t = execute_method(ref("fw.Api::go/0"), fw, services(), sinks())
    assert t.recorded_checks == {"p1", "p3"}
    assert t.per_entry == {ref("fw.Api::go/0"): {"p1", "p3"}}
    back = trace_from_json(json.dumps(t.to_json()))
    assert back.recorded_checks == t.recorded_checks and back.per_entry == t.per_entry


def test_unbounded_config():
    cfg = ExecConfig.unbounded()
    assert cfg.path_budget > 10 ** 9 and cfg.step_budget > 10 ** 9
