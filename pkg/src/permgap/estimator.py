"""Estimator-style wrapper: fit on a framework, transform/predict applications."""
from __future__ import annotations

from typing import Iterable, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .callgraph import CHA, DispatchContext
from .ir import APPLICATION, FRAMEWORK, PermissionSet
from .mapper import GapReport, compute_gap, map_framework, matrix_flags, multiply
from .pep import DEFAULT_ASCENT_BUDGET
from .sniffer import AppScan, scan_app
from .validation import (
    check_app_bundle, check_count, check_framework_bundle, check_manifest, check_mode,
    check_program, check_services, check_sinks,
)


class PermissionMapper(BaseEstimator, TransformerMixin):
    """Maps framework entry points to permissions, then applications to permissions.

    ``fit`` takes a framework program and builds the access matrix.
    ``transform`` takes a sequence of ``(app, manifest)`` pairs (or objects
    with ``app`` and ``manifest`` attributes) and returns their boolean
    access vectors, one row per app. ``predict`` returns the inferred
    permission vectors over ``permissions_``.
    """

    def __init__(self, services=None, sinks=None, mode: str = CHA, strict: bool = False,
                 force: bool = False, max_depth: Optional[int] = None,
                 ascent_budget: int = DEFAULT_ASCENT_BUDGET, jobs: int = 1, validate: bool = True):
        self.services = services
        self.sinks = sinks
        self.mode = mode
        self.strict = strict
        self.force = force
        self.max_depth = max_depth
        self.ascent_budget = ascent_budget
        self.jobs = jobs
        self.validate = validate

    def fit(self, X, y=None):
        check_mode(self.mode)
        check_count("max_depth", self.max_depth, 0, allow_none=True)
        check_count("ascent_budget", self.ascent_budget, 0)
        check_count("jobs", self.jobs, 1)
        fw = check_program(X, FRAMEWORK)
        services = check_services(self.services)
        sinks = check_sinks(self.sinks)
        if self.validate:
            check_framework_bundle(fw, services, sinks)
        m, resolutions = map_framework(fw, services, sinks, self.mode, self.strict, self.force,
                                       self.max_depth, self.ascent_budget, self.jobs)
        self.framework_ = fw
        self.services_ = services
        self.sinks_ = sinks
        self.matrix_ = m
        self.resolutions_ = resolutions
        self.entry_points_ = list(m.rows)
        self.permissions_ = m.cols.to_list()
        self.n_features_in_ = len(m.rows)
        return self

    # -- per application ---------------------------------------------------------

    @staticmethod
    def _pair(item):
        if isinstance(item, tuple) and len(item) == 2:
            return item
        return item.app, item.manifest

    def scan(self, app, manifest) -> AppScan:
        check_is_fitted(self, "matrix_")
        app = check_program(app, APPLICATION)
        manifest = check_manifest(manifest)
        if self.validate:
            check_app_bundle(app, self.framework_, manifest, self.services_, self.sinks_)
        ctx = DispatchContext(self.framework_, app, self.services_, self.sinks_)
        return scan_app(app, self.framework_, manifest, ctx, self.mode, self.force, self.max_depth)

    def inferred(self, app, manifest) -> PermissionSet:
        return multiply(self.scan(app, manifest).av, self.matrix_).to_set()

    def gap(self, app, manifest) -> GapReport:
        manifest = check_manifest(manifest)
        s = self.scan(app, manifest)
        flags = matrix_flags(self.matrix_) + list(s.flags)
        return compute_gap(manifest.declared, multiply(s.av, self.matrix_), flags)

    # -- batch ---------------------------------------------------------------------

    def transform(self, X: Iterable) -> np.ndarray:
        check_is_fitted(self, "matrix_")
        rows = [self.scan(*self._pair(item)).av.to_array() for item in X]
        return np.array(rows, dtype=bool).reshape(len(rows), len(self.entry_points_))

    def predict(self, X: Iterable) -> np.ndarray:
        check_is_fitted(self, "matrix_")
        out = []
        for item in X:
            av = self.scan(*self._pair(item)).av
            out.append(multiply(av, self.matrix_).to_array())
        return np.array(out, dtype=bool).reshape(len(out), len(self.permissions_))
