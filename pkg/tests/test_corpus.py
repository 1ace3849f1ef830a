import pytest

from permgap.corpus import Corpus, CorpusSpec, InfeasibleSpecError, generate_corpus
from permgap.ir import validate, validate_manifest
from permgap.oracle import exact_required, has_loops


def test_generation_is_deterministic(tmp_path):
    a = generate_corpus(1).write(tmp_path / "a")
    b = generate_corpus(1).write(tmp_path / "b")
    for name in Corpus.FILES:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert generate_corpus(2).documents() != generate_corpus(1).documents()


def test_bundle_round_trip(tmp_path):
    c = generate_corpus(5)
    back = Corpus.load(c.write(tmp_path))
    assert back.framework == c.framework and back.app == c.app
    assert back.manifest == c.manifest and back.ground_truth == c.ground_truth
    assert back.meta == c.meta


def test_tiny_spec():
    c = generate_corpus(0, CorpusSpec(n_classes=3, n_methods=6, n_permissions=3))
    assert len(c.sinks.vocabulary) == 3
    assert sum(len(k.methods) for k in c.framework.classes) == 6


@pytest.mark.parametrize("spec", [
    CorpusSpec(n_permissions=0),
    CorpusSpec(n_classes=4, n_services=2),
    CorpusSpec(n_methods=0),
    CorpusSpec(p_branch=1.5),
])
def test_infeasible_specs(spec):
    with pytest.raises(InfeasibleSpecError):
        generate_corpus(0, spec)


@pytest.mark.parametrize("seed", range(40))
def test_acyclic_ground_truth_matches_interpreter(seed):
    c = generate_corpus(seed, CorpusSpec(verify=False, p_opaque=0.3, p_ambiguity=0.3))
    assert not validate(c.framework, None, c.services, c.sinks)
    assert not validate(c.app, c.framework, c.services, c.sinks)
    assert not validate_manifest(c.manifest, c.app, c.sinks)
    assert not has_loops(c.framework) and not has_loops(c.app)
    assert exact_required(c.app, c.framework, c.manifest, c.services, c.sinks) == c.ground_truth


def test_cyclic_instances_contain_loops():
    assert any(has_loops(generate_corpus(s, CorpusSpec(acyclic=False)).framework) for s in range(10))


def test_scenarios_are_planted():
    from permgap.callgraph import RTA
    from permgap.mapper import map_framework
    from permgap.pep import DISCARDED, RESOLVED

    seen = set()
    for seed in range(30):
        c = generate_corpus(seed, CorpusSpec(verify=False, p_identity_region=0.3))
        seen |= {k.name.split(".")[1] for k in c.framework.classes if k.name.count(".") > 1}
        _, res = map_framework(c.framework, c.services, c.sinks, mode=RTA)
        for r in (x for rows in res for x in rows):
            seen.add((r.status, r.site.arg_shape, r.site.method.arity > 0))
    assert {"svc", "v0"} <= seen
    assert (DISCARDED, "single", False) in seen
    assert (RESOLVED, "array", False) in seen
    assert (RESOLVED, "single", True) in seen
