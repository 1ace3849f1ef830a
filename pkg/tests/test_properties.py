"""Invariants over generated bundles, driven by hypothesis-chosen seeds."""
from hypothesis import given, settings, strategies as st

from harness import CHA, RTA, analyse, instance
from permgap.callgraph import DispatchContext
from permgap.mapper import PermissionAccessMatrix, map_framework
from permgap.oracle import exact_required
from permgap.sniffer import direct_usage_vector, scan_app

seeds = st.integers(min_value=0, max_value=2 ** 20)
props = settings(max_examples=40, deadline=None)


@props
@given(seeds)
def test_static_covers_dynamic_in_every_configuration(seed):
    o = analyse(instance(seed))
    assert o.soundness_violations() == []


@props
@given(seeds)
def test_precision_orders(seed):
    o = analyse(instance(seed))
    for strict in (False, True):
        assert o.inferred[(RTA, strict)] <= o.inferred[(CHA, strict)]
    for mode in (CHA, RTA):
        assert o.inferred[(mode, False)] <= o.inferred[(mode, True)]


@props
@given(seeds)
def test_discarded_sites_never_run_under_caller_identity(seed):
    o = analyse(instance(seed))
    assert o.discard_violations() == {}


@props
@given(seeds)
def test_reachability_scan_within_syntactic_scan(seed):
    c = instance(seed)
    direct = direct_usage_vector(c.app, c.framework)
    for mode in (CHA, RTA):
        ctx = DispatchContext(c.framework, c.app, c.services, c.sinks)
        av = scan_app(c.app, c.framework, c.manifest, ctx, mode).av
        assert av.bits & ~direct.bits == 0


@props
@given(seeds)
def test_acyclic_rta_equals_exact_when_unambiguous(seed):
    from harness import exactness_eligible
    c = instance(seed, acyclic=True)
    o = analyse(c, configs=[(RTA, False)])
    if exactness_eligible(o):
        assert o.inferred[(RTA, False)] == exact_required(c.app, c.framework, c.manifest, c.services, c.sinks)


@props
@given(seeds, st.booleans())
def test_matrix_serialization_round_trip(seed, strict):
    c = instance(seed)
    m, _ = map_framework(c.framework, c.services, c.sinks, RTA, strict)
    assert PermissionAccessMatrix.from_json(m.to_json()) == m
    assert m.to_json() == map_framework(c.framework, c.services, c.sinks, RTA, strict)[0].to_json()


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_generation_deterministic(seed):
    assert instance(seed).documents() == instance(seed).documents()
