import pytest

from builders import CK, CK_ALL, CLR, RST, call, check, cls, framework, meth, ref, services, sinks
from permgap.callgraph import CHA, DispatchContext, framework_graph
from permgap.ir import PermissionSet
from permgap.pep import (
    DISCARDED, RESOLVED, UNRESOLVED, Identity, PepAnalyzer, build_unit_graph, identity_discard,
    identity_in_states, resolve_permission_arg,
)


def resolve(*classes, root="fw.Api::e/0", budget=5):
    fw = framework(*classes)
    ctx = DispatchContext(fw, services=services(), sinks=sinks())
    g = framework_graph(ref(root), ctx, CHA)
    return PepAnalyzer(ctx).resolve_graph(g, budget)


def only(resolutions):
    assert len(resolutions) == 1, resolutions
    return resolutions[0]


def test_direct_literal_through_moves():
    r = only(resolve(cls("fw.Api", meth("e", [("const_str", 0, "p1"), ("move", 1, 0), ("move", 2, 1),
                                               call(CK, 2)]))))
    assert r.status == RESOLVED and r.permissions == {"p1"}


def test_branches_merge_literals_and_drop_non_vocabulary():
    r = only(resolve(cls("fw.Api", meth("e", [
        ("const_str", 0, "p1"), ("branch", "L"), ("const_str", 0, "p2"), ("branch", "L"),
        ("const_str", 0, "not.a.permission"), ("label", "L"), call(CK, 0)]))))
    assert r.permissions == {"p1", "p2"}


def test_redefinition_kills_earlier_literal():
    r = only(resolve(cls("fw.Api", meth("e", [("const_str", 0, "p1"), ("const_str", 0, "p2"), call(CK, 0)]))))
    assert r.permissions == {"p2"}


def test_array_stores_through_alias():
    r = only(resolve(cls("fw.Api", meth("e", [
        ("array_new", 0, 3), ("move", 1, 0),
        ("const_str", 2, "p1"), ("array_store", 1, 0, 2),
        ("const_str", 3, "p3"), ("array_store", 0, 1, 3),
        ("const_str", 4, "junk"), ("array_store", 0, 2, 4),
        call(CK_ALL, 1),
        ("const_str", 5, "p2"), ("array_store", 0, 0, 5),
    ]))))
    # the store after the check cannot flow into it
    assert r.status == RESOLVED and r.permissions == {"p1", "p3"}


def test_parameter_ascends_to_all_callers():
    r = resolve(cls("fw.Api",
                    meth("e", check("p1") + [("const_str", 1, "p2"), call("fw.Api::h/1", 1),
                                             ("const_str", 2, "p3"), call("fw.Api::h/1", 2)]),
                    meth("h", [("move", 1, 0), call(CK, 1)], arity=1, public=False)))
    by_method = {str(x.site.method): x for x in r}
    assert by_method["fw.Api::h/1"].permissions == {"p2", "p3"}


def test_array_parameter_ascends():
    r = resolve(cls("fw.Api",
                    meth("e", [("array_new", 0, 1), ("const_str", 1, "p3"), ("array_store", 0, 0, 1),
                               call("fw.Api::h/1", 0)]),
                    meth("h", [call(CK_ALL, 0)], arity=1, public=False)))
    assert only(r).permissions == {"p3"}


def chain(n):
    """e passes "p1" through n helper levels before the check."""
    methods = [meth("e", [("const_str", 0, "p1"), call("fw.Api::h0/1", 0)])]
    for i in range(n - 1):
        methods.append(meth(f"h{i}", [call(f"fw.Api::h{i + 1}/1", 0)], arity=1, public=False))
    methods.append(meth(f"h{n - 1}", [call(CK, 0)], arity=1, public=False))
    return cls("fw.Api", *methods)


@pytest.mark.parametrize("depth, budget, status", [
    (1, 5, RESOLVED), (5, 5, RESOLVED), (6, 5, UNRESOLVED), (6, 6, RESOLVED), (1, 0, UNRESOLVED),
])
def test_ascent_budget(depth, budget, status):
    r = only(resolve(chain(depth), budget=budget))
    assert r.status == status
    if status == UNRESOLVED:
        assert "budget" in r.reason


def test_parameter_without_caller_is_unresolved():
    r = only(resolve(cls("fw.Api", meth("e", [call(CK, 0)], arity=1)), root="fw.Api::e/1"))
    assert r.status == UNRESOLVED and "no caller" in r.reason
    assert r.diagnostic().split("\t")[:3] == ["fw.Api::e/1", "0", CK]


def test_partial_escape_is_unresolved():
    r = only(resolve(cls("fw.Api", meth("e", [("branch", "L"), ("const_str", 0, "p1"), ("label", "L"),
                                               call(CK, 0)], arity=1)), root="fw.Api::e/1"))
    assert r.status == UNRESOLVED


def test_no_vocabulary_literal_is_unresolved():
    r = only(resolve(cls("fw.Api", meth("e", check("custom.PERMISSION")))))
    assert r.status == UNRESOLVED


# -- identity -------------------------------------------------------------------

CLEAR = call(CLR)
RESTORE = call(RST)


def test_full_region_is_discarded():
    r = only(resolve(cls("fw.Api", meth("e", [CLEAR] + check("p1") + [RESTORE]))))
    assert r.status == DISCARDED


@pytest.mark.parametrize("body", [
    [("branch", "L"), CLEAR, ("label", "L")] + check("p1") + [RESTORE],   # clear on one path only
    [CLEAR, RESTORE] + check("p1"),                                      # after restore
    check("p1") + [CLEAR, RESTORE],                                      # before clear
    [CLEAR, ("branch", "L"), RESTORE, ("label", "L")] + check("p1"),     # restore on one path only
])
def test_checks_outside_must_regions_are_kept(body):
    r = only(resolve(cls("fw.Api", meth("e", body))))
    assert r.status == RESOLVED and r.permissions == {"p1"}


def test_identity_loop_converges():
    body = [("label", "top"), CLEAR] + check("p1") + [RESTORE, ("branch", "top")]
    m = framework(cls("fw.Api", meth("e", body))).method_map[ref("fw.Api::e/0")]
    states = identity_in_states(m, sinks())
    assert states[0] is Identity.CALLER
    assert states[3] is Identity.CLEARED


def test_unreachable_nodes_have_no_state():
    m = framework(cls("fw.Api", meth("e", [("return",)] + check("p1")))).method_map[ref("fw.Api::e/0")]
    assert identity_in_states(m, sinks())[1:] == [None, None]


def test_unit_graph_edges():
    m = framework(cls("A", meth("m", [("label", "x"), ("branch", "x"), ("goto", "y"), ("label", "y"),
                                      ("return",)]))).method_map[ref("A::m/0")]
    g = build_unit_graph(m)
    assert g.succ == ((1,), (2, 0), (3,), (4,), ())
    assert g.pred[0] == (1,)


def test_module_level_helpers(worked):
    fw = framework(cls("fw.Api", meth("e", [CLEAR] + check("p1") + [RESTORE] + check("p2", 1))))
    ctx = DispatchContext(fw, sinks=sinks())
    g = framework_graph(ref("fw.Api::e/0"), ctx)
    sites = PepAnalyzer(ctx).resolve_graph(g)
    discarded = identity_discard(g, [s.site for s in sites], ctx)
    assert [d.site.site_index for d in discarded] == [2]
    kept = [s.site for s in sites if s.status != DISCARDED][0]
    assert resolve_permission_arg(kept, g, ctx).permissions == PermissionSet(["p2"])
