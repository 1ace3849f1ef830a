"""Acceptance gate: one PASS/FAIL line per criterion.

Lines are printed at the end of the pytest run (see conftest.py) and also
when the file is executed directly.
"""
import time

import numpy as np

from harness import CHA, CONFIGS, RTA, analyse, exactness_eligible, instance
from permgap.callgraph import DispatchContext
from permgap.cli import main as cli_main
from permgap.corpus import CorpusSpec, generate_corpus
from permgap.datasets import load_worked_example
from permgap.ir import MethodRef
from permgap.mapper import AccessVector, PermissionAccessMatrix, compute_gap, map_framework, multiply
from permgap.oracle import exact_required
from permgap.sniffer import scan_app

RESULTS: list[str] = []

N_SOUNDNESS = 1000
N_EXACT = 500
SOUNDNESS_LIMIT_S = 600
EXACT_LIMIT_S = 300
WORKED_LIMIT_S = 1.0
SCALE_LIMIT_S = 300


def report(name: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_worked_example_exact(tmp_path):
    t0 = time.perf_counter()
    c = load_worked_example()
    m, _ = map_framework(c.framework, c.services, c.sinks)
    ctx = DispatchContext(c.framework, c.app, c.services, c.sinks)
    av = scan_app(c.app, c.framework, c.manifest, ctx).av
    ip = multiply(av, m)
    gap = compute_gap(c.manifest.declared, ip)
    elapsed = time.perf_counter() - t0
    bundle = c.write(tmp_path / "fig1")
    code = cli_main(["gap", "--bundle", str(bundle), "--out", str(tmp_path / "gap.json")])
    ok = (m.to_array().astype(int).tolist() == [[1, 0, 0], [1, 0, 0], [0, 0, 0], [0, 1, 0]]
          and av.to_array().astype(int).tolist() == [1, 1, 1, 0]
          and ip.to_array().astype(int).tolist() == [1, 0, 0]
          and ip.to_set() == {"p1"} and gap.gap == {"p2"} and code == 2
          and elapsed < WORKED_LIMIT_S)
    report("worked example", ok,
           f"M={m.to_array().astype(int).tolist()} AV={av.to_array().astype(int).tolist()} "
           f"IP={ip.to_array().astype(int).tolist()} gap={gap.gap.to_list()} gap-exit={code} "
           f"in {elapsed * 1000:.0f} ms")


def test_soundness_and_precision_ordering():
    t0 = time.perf_counter()
    violations, order_violations, strict_instances = [], [], []
    kinds = {"cyclic": 0, "acyclic": 0, "discard": 0, "services": 0, "array": 0, "param": 0}
    for seed in range(N_SOUNDNESS):
        o = analyse(instance(seed))
        c = o.corpus
        kinds["cyclic" if not c.meta["spec"]["acyclic"] else "acyclic"] += 1
        kinds["discard"] += bool(o.discarded[RTA])
        kinds["services"] += bool(c.services.bindings)
        kinds["array"] += any("enforcePermissions" in str(i) for _, m in c.framework.methods() for i in m.body)
        kinds["param"] += any(m.arity > 0 for _, m in c.framework.methods())
        if o.soundness_violations():
            violations.append((seed, o.soundness_violations()))
        for strict in (False, True):
            if not o.inferred[(RTA, strict)] <= o.inferred[(CHA, strict)]:
                order_violations.append((seed, strict))
        if o.inferred[(RTA, False)] < o.inferred[(CHA, False)]:
            strict_instances.append(seed)
    elapsed = time.perf_counter() - t0
    sound = (not violations and elapsed < SOUNDNESS_LIMIT_S)
    try:
        report("soundness", sound,
               f"{N_SOUNDNESS} instances x {len(CONFIGS)} configurations, {len(violations)} violations "
               f"{violations[:3]}; mix {kinds}; {elapsed:.1f} s")
    finally:
        report("precision ordering", not order_violations and bool(strict_instances),
               f"{len(order_violations)} violations over {N_SOUNDNESS} instances; "
               f"{len(strict_instances)} strict (first seeds {strict_instances[:5]})")


def test_exactness_on_acyclic():
    t0 = time.perf_counter()
    checked, mismatches, seed = 0, [], 0
    while checked < N_EXACT:
        c = instance(seed, acyclic=True)
        o = analyse(c, configs=[(RTA, False)])
        if exactness_eligible(o):
            exact = exact_required(c.app, c.framework, c.manifest, c.services, c.sinks)
            if o.inferred[(RTA, False)] != exact or exact != c.ground_truth:
                mismatches.append(seed)
            checked += 1
        seed += 1
    elapsed = time.perf_counter() - t0
    report("exactness", not mismatches and elapsed < EXACT_LIMIT_S,
           f"{checked} eligible acyclic instances (of {seed} generated), {len(mismatches)} mismatches "
           f"{mismatches[:5]}; {elapsed:.1f} s")


def _union(av_bits, row_sets):
    out = set()
    for i, s in enumerate(row_sets):
        if av_bits >> i & 1:
            out |= s
    return out


def test_calculus_equivalence():
    rng = np.random.default_rng(20240601)
    mismatches = 0
    rows6 = tuple(MethodRef("E", f"m{i}", 0) for i in range(6))
    cols4 = [f"p{j}" for j in range(4)]
    small = 0
    for _ in range(10_000):
        arr = rng.random((6, 4)) < rng.random()
        m = PermissionAccessMatrix.from_array(rows6, cols4, arr)
        row_sets = [{cols4[j] for j in range(4) if arr[i, j]} for i in range(6)]
        for bits in range(64):
            small += 1
            if set(multiply(AccessVector(rows6, bits), m).to_set()) != _union(bits, row_sets):
                mismatches += 1
    large = 0
    for _ in range(10_000):
        r, k = int(rng.integers(1, 200)), int(rng.integers(1, 80))
        rows = tuple(MethodRef("E", f"m{i}", 0) for i in range(r))
        cols = [f"q{j:03d}" for j in range(k)]
        arr = rng.random((r, k)) < rng.random() * 0.2
        av = rng.random(r) < rng.random()
        m = PermissionAccessMatrix.from_array(rows, cols, arr)
        got = multiply(AccessVector.from_bools(rows, av), m)
        want = _union(sum(1 << i for i in range(r) if av[i]),
                      [{cols[j] for j in np.flatnonzero(arr[i])} for i in range(r)])
        large += 1
        if set(got.to_set()) != want or not np.array_equal(got.to_array(), (av.astype(int) @ arr.astype(int)) > 0):
            mismatches += 1
    report("calculus equivalence", mismatches == 0,
           f"{small} exhaustive-AV products over 10^4 random 6x4 matrices + {large} larger instances, "
           f"{mismatches} mismatches")


def test_identity_discard_safety():
    checked, violations, seed = 0, [], 0
    while checked < 300:
        c = instance(seed)
        seed += 1
        o = analyse(c, configs=[(CHA, False), (RTA, False)])
        # instances where some region is cleared on only one path
        if not any(has_partial_clear(m) for _, m in c.framework.methods()):
            continue
        checked += 1
        if o.discard_violations():
            violations.append(seed - 1)
    report("identity discard safety", not violations,
           f"{checked} instances with partially cleared regions, {len(violations)} violations {violations[:5]}")


def has_partial_clear(m):
    # a clear call immediately preceded by a branch is skipped on one path
    body = m.body
    for i in range(1, len(body)):
        if getattr(body[i], "target", None) is not None and body[i].target.name == "clearCallingIdentity" \
                and type(body[i - 1]).__name__ == "Branch":
            return True
    return False


def _cli_outputs(tmp_path, bundle, jobs, tag):
    outs = []
    for cmd in ("map", "gap"):
        for mode in ("cha", "rta"):
            out = tmp_path / f"{tag}-{cmd}-{mode}.json"
            cli_main([cmd, "--bundle", str(bundle), "--mode", mode, "--jobs", str(jobs), "--out", str(out)])
            outs.append(out.read_bytes())
    return outs


def test_determinism(tmp_path):
    bundles = [load_worked_example().write(tmp_path / "fig1"),
               generate_corpus(4242, CorpusSpec(n_classes=40, n_methods=400, n_permissions=20,
                                                n_services=3, p_opaque=0.5)).write(tmp_path / "gen")]
    differing = []
    for b in bundles:
        runs = [_cli_outputs(tmp_path, b, 1, f"{b.name}-r{i}") for i in range(3)]
        runs.append(_cli_outputs(tmp_path, b, 8, f"{b.name}-j8"))
        if any(r != runs[0] for r in runs[1:]):
            differing.append(b.name)
    report("determinism", not differing,
           f"map/gap outputs (cha, rta) over {len(bundles)} bundles, 3 runs + --jobs 8; differing: {differing}")


def test_scale_smoke(tmp_path):
    c = generate_corpus(70, CorpusSpec(n_classes=400, n_methods=10_000, n_permissions=70, n_services=8,
                                       verify=False))
    b = c.write(tmp_path / "big")
    t0 = time.perf_counter()
    code = cli_main(["map", "--bundle", str(b), "--mode", "rta", "--out", str(tmp_path / "map.json")])
    elapsed = time.perf_counter() - t0
    n_methods = sum(len(k.methods) for k in c.framework.classes)
    report("scale smoke test", code == 0 and elapsed < SCALE_LIMIT_S and n_methods == 10_000,
           f"{n_methods} methods, {len(c.sinks.vocabulary)} permissions, rta map exit {code} in {elapsed:.1f} s")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
