"""Domain configuration: JSON schema, validation, and Domain construction.

Configs either name a preset or spell out (dimension, metric, phi, ...).
Validation failures carry the offending field path and exit the CLI with
code 2.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .fields import ExpressionError, parse_expression
from .geometry import Domain, GeometryError, MetricField, StarBoundary
from .presets import PRESETS, make_preset, preset_names

__all__ = ["ConfigError", "load_config", "build_domain"]


class ConfigError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


_TOP_KEYS = {
    "preset", "dimension", "metric", "phi", "boundary", "interior_point",
    "box", "collar", "integrator", "flags",
}


def _expect(cond, path, message):
    if not cond:
        raise ConfigError(path, message)


def _get_number(obj, key, path, default=None, positive=False):
    if key not in obj:
        if default is not None:
            return default
        raise ConfigError(f"{path}.{key}", "missing required number")
    v = obj[key]
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool),
            f"{path}.{key}", f"expected a number, got {v!r}")
    if positive:
        _expect(v > 0, f"{path}.{key}", f"must be positive, got {v}")
    return float(v)


def load_config(path):
    try:
        with open(path) as f:
            obj = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError("", f"cannot read config {path}: {e}") from e
    if not isinstance(obj, dict):
        raise ConfigError("", "config must be a JSON object")
    return obj


def _parse_expr(text, n, path):
    _expect(isinstance(text, str), path, f"expected an expression string, got {text!r}")
    try:
        return parse_expression(text, n)
    except ExpressionError as e:
        raise ConfigError(path, str(e)) from e


def _build_metric(spec, n):
    if spec is None:
        return MetricField.euclidean(n)
    _expect(isinstance(spec, dict), "metric", "expected an object")
    kind = spec.get("kind")
    _expect(kind in ("euclidean", "diagonal", "general"), "metric.kind",
            f"expected euclidean|diagonal|general, got {kind!r}")
    if kind == "euclidean":
        return MetricField.euclidean(n)
    entries = spec.get("entries")
    if kind == "diagonal":
        _expect(isinstance(entries, list) and len(entries) == n, "metric.entries",
                f"expected {n} diagonal entry expressions")
        return MetricField.diagonal(
            [_parse_expr(e, n, f"metric.entries[{i}]") for i, e in enumerate(entries)]
        )
    _expect(isinstance(entries, list) and len(entries) == n, "metric.entries",
            f"expected an {n}x{n} nested list of expressions")
    rows = []
    for i, row in enumerate(entries):
        _expect(isinstance(row, list) and len(row) == n, f"metric.entries[{i}]",
                f"expected {n} entries")
        rows.append([_parse_expr(e, n, f"metric.entries[{i}][{j}]") for j, e in enumerate(row)])
    return MetricField.general(rows)


def build_domain(config):
    """Validate a config dict and construct the Domain (geometry checks included)."""
    _expect(isinstance(config, dict), "", "config must be an object")
    for key in config:
        _expect(key in _TOP_KEYS, key, f"unknown config key (expected one of {sorted(_TOP_KEYS)})")

    if "preset" in config:
        name = config["preset"]
        _expect(isinstance(name, str) and name in PRESETS, "preset",
                f"expected one of {preset_names()}, got {name!r}")
        domain = make_preset(name)
    else:
        _expect("phi" in config, "phi", "missing (provide phi or preset)")
        n = config.get("dimension", 2)
        _expect(isinstance(n, int) and n >= 2, "dimension", f"expected an integer >= 2, got {n!r}")
        phi = _parse_expr(config["phi"], n, "phi")
        metric = _build_metric(config.get("metric"), n)
        anchor = config.get("interior_point", [0.0] * n)
        _expect(isinstance(anchor, list) and len(anchor) == n, "interior_point",
                f"expected a point in R^{n}")
        bspec = config.get("boundary", {"kind": "star"})
        _expect(isinstance(bspec, dict), "boundary", "expected an object")
        kind = bspec.get("kind", "star")
        _expect(kind == "star", "boundary.kind",
                "custom domains support star-shaped boundaries only")
        center = bspec.get("center", anchor)
        _expect(isinstance(center, list) and len(center) == n, "boundary.center",
                f"expected a point in R^{n}")
        _expect(n == 2, "dimension", "custom boundary construction is implemented for n = 2")
        boundary = [StarBoundary(phi, tuple(float(c) for c in center))]
        box = config.get("box")
        if box is not None:
            _expect(isinstance(box, list) and len(box) == n
                    and all(isinstance(b, list) and len(b) == 2 for b in box),
                    "box", f"expected {n} [lo, hi] pairs")
            box = np.array(box, dtype=float)
        phi_max = _estimate_phi_max(phi, anchor)
        domain = Domain(
            n=n, metric=metric, phi=phi, boundary=boundary,
            collar_eps=0.05 * phi_max, name="custom",
            interior_point=tuple(float(c) for c in anchor), box=box,
        )

    collar = config.get("collar", {})
    _expect(isinstance(collar, dict), "collar", "expected an object")
    for key in collar:
        _expect(key in ("phi_threshold", "num_q", "num_r"), f"collar.{key}", "unknown key")
    if "phi_threshold" in collar:
        domain.collar_eps = _get_number(collar, "phi_threshold", "collar", positive=True)
    if "num_q" in collar:
        domain.collar_nq = int(_get_number(collar, "num_q", "collar", positive=True))
    if "num_r" in collar:
        domain.collar_nr = int(_get_number(collar, "num_r", "collar", positive=True))

    integ = config.get("integrator", {})
    _expect(isinstance(integ, dict), "integrator", "expected an object")
    for key in integ:
        _expect(key in ("tol", "max_time"), f"integrator.{key}", "unknown key")
    domain.tol = _get_number(integ, "tol", "integrator", default=domain.tol, positive=True)
    domain.max_time = _get_number(integ, "max_time", "integrator",
                                  default=domain.max_time, positive=True)

    flags = config.get("flags", {})
    _expect(isinstance(flags, dict), "flags", "expected an object")
    for key in flags:
        _expect(key in ("so_invariant", "separable"), f"flags.{key}", "unknown key")
    if "so_invariant" in flags:
        _expect(isinstance(flags["so_invariant"], bool), "flags.so_invariant",
                "expected a boolean")
        domain.so_invariant = flags["so_invariant"]
    if "separable" in flags:
        sep = flags["separable"]
        _expect(isinstance(sep, dict) and "phi_i" in sep, "flags.separable",
                "expected {'phi_i': [expressions]}")
        exprs = sep["phi_i"]
        _expect(isinstance(exprs, list) and len(exprs) == domain.n, "flags.separable.phi_i",
                f"expected {domain.n} expressions")
        domain.separable_phis = [
            _parse_expr(e, domain.n, f"flags.separable.phi_i[{i}]")
            for i, e in enumerate(exprs)
        ]

    try:
        domain.validate()
    except GeometryError as e:
        raise ConfigError("domain", str(e)) from e
    return domain


def _estimate_phi_max(phi, anchor):
    """Crude interior maximum of phi for the default collar width."""
    x0 = np.asarray(anchor, dtype=float)
    best = phi.value(x0)
    rng = np.random.default_rng(12345)
    scale = 1.0
    for _ in range(256):
        x = x0 + scale * rng.uniform(-1.0, 1.0, len(x0))
        try:
            v = phi.value(x)
        except ExpressionError:
            continue
        if math.isfinite(v):
            best = max(best, v)
    if best <= 0:
        raise ConfigError("phi", "could not find positive interior values")
    return best
