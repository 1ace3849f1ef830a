"""Input checking and coercion shared by the estimator and the CLI."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

from .callgraph import MODES
from .ir import (
    FRAMEWORK, Manifest, Program, ServiceTable, SinkConfig, ValidationReport,
    parse_manifest, parse_program, parse_service_table, parse_sink_config,
    validate, validate_manifest,
)


class InvalidInputError(ValueError):
    """Raised when a validation report has issues; carries the report."""

    def __init__(self, what: str, report: ValidationReport):
        self.report = report
        lines = "\n".join(f"  {issue}" for issue in report)
        super().__init__(f"{what} failed validation:\n{lines}")


def _document(source):
    if isinstance(source, (str, Path)) and not (isinstance(source, str) and source.lstrip().startswith("{")):
        return Path(source).read_bytes()
    return source


def check_program(source, kind: Optional[str] = None) -> Program:
    """A Program from a Program, a path, a JSON string or a parsed document."""
    p = source if isinstance(source, Program) else parse_program(_document(source))
    if kind is not None and p.kind != kind:
        raise ValueError(f"expected a {kind} program, got {p.kind} program {p.name!r}")
    return p


def check_manifest(source) -> Manifest:
    return source if isinstance(source, Manifest) else parse_manifest(_document(source))


def check_services(source) -> ServiceTable:
    if source is None:
        return ServiceTable()
    return source if isinstance(source, ServiceTable) else parse_service_table(_document(source))


def check_sinks(source) -> SinkConfig:
    if source is None:
        raise ValueError("a sink configuration is required")
    return source if isinstance(source, SinkConfig) else parse_sink_config(_document(source))


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    return mode


def check_count(name: str, value, minimum: int = 0, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def check_framework_bundle(fw: Program, services: ServiceTable, sinks: SinkConfig) -> None:
    if fw.kind != FRAMEWORK:
        raise ValueError(f"expected a framework program, got {fw.kind}")
    report = validate(fw, None, services, sinks)
    if report:
        raise InvalidInputError(f"framework {fw.name!r}", report)


def check_app_bundle(app: Program, fw: Program, manifest: Manifest, services: ServiceTable,
                     sinks: SinkConfig) -> None:
    report = validate(app, fw, services, sinks)
    if report:
        raise InvalidInputError(f"application {app.name!r}", report)
    report = validate_manifest(manifest, app, sinks)
    if report:
        raise InvalidInputError(f"manifest of {manifest.app_name!r}", report)
