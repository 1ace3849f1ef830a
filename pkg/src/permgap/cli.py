"""Command-line entry point.

Exit codes: 0 success, 1 operational error, 2 permission gap found (gap),
3 a row of the first input misses permissions of the second (diff).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .callgraph import CHA, MODES, DispatchContext
from .corpus import CorpusSpec, generate_corpus
from .ir import APPLICATION, FRAMEWORK, IRError, MethodRef, PermissionSet, entry_points
from .mapper import (
    DimensionError, DynamicFeatureError, PermissionAccessMatrix, UnknownPermissionError,
    compute_gap, default_jobs, map_framework, matrix_flags, multiply,
)
from .oracle import ExecConfig, OracleError, execute, trace_from_json
from .pep import DEFAULT_ASCENT_BUDGET
from .sniffer import scan_app
from .validation import (
    check_app_bundle, check_framework_bundle, check_manifest, check_program, check_services,
    check_sinks,
)

log = logging.getLogger("permgap")

OK, ERROR, GAP_FOUND, SUBSET_ROWS = 0, 1, 2, 3

BUNDLE_FILES = {
    "framework": "framework.json",
    "app": "app.json",
    "manifest": "manifest.json",
    "services": "services.json",
    "sinks": "sinks.json",
}


class UsageError(ValueError):
    pass


def _emit(text: str, out: Optional[str]):
    if not text.endswith("\n"):
        text += "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def _path(args, name: str, required: bool = True) -> Optional[str]:
    value = getattr(args, name, None)
    if value is None and getattr(args, "bundle", None):
        candidate = Path(args.bundle) / BUNDLE_FILES[name]
        if candidate.exists():
            value = str(candidate)
    if value is None and required:
        raise UsageError(f"--{name} is required (or --bundle DIR containing {BUNDLE_FILES[name]})")
    return value


def _framework(args):
    fw = check_program(_path(args, "framework"), FRAMEWORK)
    services = check_services(_path(args, "services", required=False))
    sinks = check_sinks(_path(args, "sinks"))
    check_framework_bundle(fw, services, sinks)
    return fw, services, sinks


def _application(args, fw, services, sinks):
    app = check_program(_path(args, "app"), APPLICATION)
    manifest = check_manifest(_path(args, "manifest"))
    check_app_bundle(app, fw, manifest, services, sinks)
    return app, manifest


def _map(args, fw, services, sinks) -> PermissionAccessMatrix:
    m, _ = map_framework(fw, services, sinks, args.mode, args.strict, args.force,
                         args.max_depth, args.ascent_budget, args.jobs)
    return m


# -- subcommands ------------------------------------------------------------------


def cmd_map(args) -> int:
    fw, services, sinks = _framework(args)
    m = _map(args, fw, services, sinks)
    stats = m.stats()
    if args.format == "csv":
        _emit(m.to_csv(), args.out)
        print(_json(stats), file=sys.stderr)
    elif args.format == "text":
        lines = [f"{k}: {v}" for k, v in stats.items()]
        lines += [f"{r}\t{' '.join(m.row_set(i)) or '-'}" for i, r in enumerate(m.rows)]
        _emit("\n".join(lines), args.out)
    else:
        doc = m.to_json()
        doc["stats"] = stats
        _emit(_json(doc), args.out)
    return OK


def _load_map(path, fw, args) -> PermissionAccessMatrix:
    m = PermissionAccessMatrix.from_json(Path(path).read_text())
    if list(m.rows) != entry_points(fw):
        raise DimensionError(f"cached map {path} was built for different entry points")
    cached_mode = m.meta.get("mode")
    if cached_mode is not None and cached_mode != args.mode:
        log.warning("cached map was computed in %s mode, scanning in %s mode", cached_mode, args.mode)
    return m


def cmd_gap(args) -> int:
    fw, services, sinks = _framework(args)
    app, manifest = _application(args, fw, services, sinks)
    unknown = manifest.declared - sinks.vocabulary
    if unknown:
        raise UnknownPermissionError(f"declared permissions not in vocabulary: {', '.join(unknown)}")
    m = _load_map(args.map, fw, args) if args.map else _map(args, fw, services, sinks)
    ctx = DispatchContext(fw, app, services, sinks)
    s = scan_app(app, fw, manifest, ctx, args.mode, args.force, args.max_depth)
    report = compute_gap(manifest.declared, multiply(s.av, m), matrix_flags(m) + list(s.flags))
    if args.format == "text":
        lines = [f"declared: {' '.join(report.declared) or '-'}",
                 f"inferred: {' '.join(report.inferred) or '-'}",
                 f"gap: {' '.join(report.gap) or '-'}",
                 f"missing: {' '.join(report.missing) or '-'}",
                 f"attack surface area: {report.attack_surface_area}"]
        lines += [f"flag: {f}" for f in report.soundness_flags]
        _emit("\n".join(lines), args.out)
    else:
        _emit(_json(report.to_json()), args.out)
    for f in report.soundness_flags:
        log.warning("%s", f)
    return GAP_FOUND if report.gap else OK


def cmd_scan(args) -> int:
    fw, services, sinks = _framework(args)
    app, manifest = _application(args, fw, services, sinks)
    ctx = DispatchContext(fw, app, services, sinks)
    s = scan_app(app, fw, manifest, ctx, args.mode, args.force, args.max_depth)
    if args.format == "text":
        _emit("\n".join(str(e) for e in s.av.entries()) or "-", args.out)
    else:
        _emit(_json(s.to_json()), args.out)
    for f in s.flags:
        log.warning("%s", f)
    return OK


def cmd_exec(args) -> int:
    fw, services, sinks = _framework(args)
    app, manifest = _application(args, fw, services, sinks)
    cfg = ExecConfig(loop_bound=args.loop_bound, path_budget=args.path_budget)
    trace = execute(app, fw, manifest, services, sinks, cfg)
    if args.format == "text":
        _emit("\n".join(trace.recorded_checks) or "-", args.out)
    else:
        _emit(_json(trace.to_json()), args.out)
    if trace.exhausted:
        log.warning("exploration hit a bound; the recorded checks are a lower bound")
    return OK


def cmd_gen(args) -> int:
    spec = CorpusSpec(n_classes=args.n_classes, n_methods=args.n_methods,
                      n_permissions=args.n_permissions, n_services=args.n_services,
                      p_branch=args.p_branch, p_identity_region=args.p_identity_region,
                      acyclic=not args.cyclic, p_ambiguity=args.p_ambiguity, p_opaque=args.p_opaque)
    corpus = generate_corpus(args.seed, spec)
    if not args.out:
        raise UsageError("gen needs --out DIR")
    corpus.write(args.out)
    print(_json({"bundle": str(args.out), "ground_truth": corpus.ground_truth.to_list()}))
    return OK


@dataclass
class DiffReport:
    compared: int = 0
    identical: int = 0
    superset_by_1: int = 0
    superset_by_2_plus: int = 0
    subset: int = 0
    subset_rows: list = field(default_factory=list)

    def add(self, row: MethodRef, left: PermissionSet, right: PermissionSet):
        self.compared += 1
        if not right <= left:
            self.subset += 1
            self.subset_rows.append({"row": str(row), "absent": (right - left).to_list()})
        elif left == right:
            self.identical += 1
        elif len(left - right) == 1:
            self.superset_by_1 += 1
        else:
            self.superset_by_2_plus += 1

    def to_json(self) -> dict:
        return {
            "compared": self.compared,
            "identical": self.identical,
            "superset_by_1": self.superset_by_1,
            "superset_by_2_plus": self.superset_by_2_plus,
            "subset": self.subset,
            "subset_rows": self.subset_rows,
        }


def _dynamic_rows(path: Path) -> dict[MethodRef, PermissionSet]:
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    rows: dict[MethodRef, PermissionSet] = {}
    for f in files:
        trace = trace_from_json(f.read_text())
        for e, perms in trace.per_entry.items():
            rows[e] = rows.get(e, PermissionSet()) | perms
    return rows


def diff_maps(left: PermissionAccessMatrix, right) -> DiffReport:
    """Compare ``left`` row by row against a map or against {entry: observed permissions}."""
    if isinstance(right, PermissionAccessMatrix):
        if left.rows != right.rows or left.cols != right.cols:
            raise DimensionError("maps have different rows or columns")
        pairs = [(r, left.row_set(i), right.row_set(i)) for i, r in enumerate(left.rows)]
    else:
        index = left.row_index()
        strange = sorted(e for e in right if e not in index)
        if strange:
            raise DimensionError(f"observed entry points missing from the map: {', '.join(map(str, strange))}")
        pairs = [(e, left.row_set(index[e]), right[e]) for e in sorted(right)]
    report = DiffReport()
    for row, a, b in pairs:
        report.add(row, a, b)
    return report


def cmd_diff(args) -> int:
    left = PermissionAccessMatrix.from_json(Path(args.left).read_text())
    right_path = Path(args.right)
    right = None
    if right_path.is_file():
        doc = json.loads(right_path.read_text())
        if "cells" in doc:
            right = PermissionAccessMatrix.from_json(doc)
    if right is None:
        right = _dynamic_rows(right_path)
    report = diff_maps(left, right)
    if args.format == "text":
        _emit("\n".join(f"{k}: {v}" for k, v in report.to_json().items() if k != "subset_rows"), args.out)
    else:
        _emit(_json(report.to_json()), args.out)
    return SUBSET_ROWS if report.subset else OK


# -- parser -------------------------------------------------------------------------


def _nonneg(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _prob(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would read as "gap found"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="permgap", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, app=False, analysis=True, formats=("json", "text")):
        sp.add_argument("--bundle", help="directory holding the input documents")
        sp.add_argument("--framework")
        sp.add_argument("--services")
        sp.add_argument("--sinks")
        if app:
            sp.add_argument("--app")
            sp.add_argument("--manifest")
        if analysis:
            sp.add_argument("--mode", choices=MODES, default=CHA)
            sp.add_argument("--strict", action="store_true",
                            help="unresolved checks map their entry point to every permission")
            sp.add_argument("--force", action="store_true", help="analyse programs with reflective markers")
            sp.add_argument("--max-depth", type=_nonneg, default=None)
            sp.add_argument("--ascent-budget", type=_nonneg, default=DEFAULT_ASCENT_BUDGET)
            sp.add_argument("--jobs", type=_pos, default=default_jobs())
        sp.add_argument("--format", choices=formats, default="json")
        sp.add_argument("--out")

    sp = sub.add_parser("map", help="compute the framework's permission map")
    common(sp, formats=("json", "csv", "text"))
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("gap", help="report declared permissions the app never needs")
    common(sp, app=True)
    sp.add_argument("--map", help="permission map produced by `map` (skips framework analysis)")
    sp.set_defaults(func=cmd_gap)

    sp = sub.add_parser("scan", help="entry points the app may call")
    common(sp, app=True)
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("exec", help="run the app exhaustively and record checks")
    common(sp, app=True, analysis=False)
    sp.add_argument("--loop-bound", type=_pos, default=ExecConfig.loop_bound)
    sp.add_argument("--path-budget", type=_pos, default=ExecConfig.path_budget)
    sp.set_defaults(func=cmd_exec)

    sp = sub.add_parser("gen", help="generate a seeded bundle with its ground truth")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    d = CorpusSpec()
    sp.add_argument("--n-classes", type=_pos, default=d.n_classes)
    sp.add_argument("--n-methods", type=_pos, default=d.n_methods)
    sp.add_argument("--n-permissions", type=_nonneg, default=d.n_permissions)
    sp.add_argument("--n-services", type=_nonneg, default=d.n_services)
    sp.add_argument("--p-branch", type=_prob, default=d.p_branch)
    sp.add_argument("--p-identity-region", type=_prob, default=d.p_identity_region)
    sp.add_argument("--p-ambiguity", type=_prob, default=d.p_ambiguity)
    sp.add_argument("--p-opaque", type=_prob, default=d.p_opaque)
    sp.add_argument("--cyclic", action="store_true", help="allow loops and recursion")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("diff", help="compare a map with another map or with exec traces")
    sp.add_argument("left", help="permission map (JSON)")
    sp.add_argument("right", help="permission map, exec trace, or directory of traces")
    sp.add_argument("--format", choices=("json", "text"), default="json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_diff)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (IRError, ValueError, LookupError, OSError, DynamicFeatureError, OracleError,
            json.JSONDecodeError) as exc:
        # ValueError covers validation, dimension, vocabulary and spec errors
        print(f"permgap {args.command}: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
