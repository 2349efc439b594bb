"""Configuration documents: TOML schema, initial-data expressions, presets.

A run is described by six sections:

    [model]       variant = "continuum" | "finite" | "two-compartment"
                  p, d, K (continuum / two-compartment)
                  a_c, p_c, d_c, K_c, K_l, a_l, p_l, d_l (finite)
    [profile]     kind + shape parameters (see SelfRenewalProfile)
    [grid]        x_lo, x_hi, n_nodes
    [initial]     u1/u2 expressions or atom lists (continuum),
                  v1/v2 (two-compartment), c1/c2/l1/l2 (finite)
    [integrator]  dt, t_end, snapshot_times, record_every
    [output]      dir, observers, observer_every, plots, trajectory

Initial-data expressions form a small arithmetic grammar: numbers, x, + - *
/ ^ (also **) and parentheses -- enough for polynomial initial data without
embedding a general evaluator.  Atom lists [[position, weight], ...] are
mollified onto the grid at [initial].mollify_epsilon.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .core import (FiniteCloneState, Grid, ModelParams, SelfRenewalProfile)
from .dynamics import IntegratorConfig
from .errors import CloneDynError, ConfigError
from .measures import DiscreteMeasure, mollify

VARIANTS = ("continuum", "finite", "two-compartment")
OBSERVER_NAMES = ("V", "flat_dist", "conc_frac")


# ---------------------------------------------------------------------------
# initial-data expression grammar
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<var>x)
  | (?P<op>\*\*|[-+*/^()])
  | (?P<ws>\s+)
  | (?P<bad>.)
""", re.VERBOSE)


def _tokenize(text):
    tokens = []
    for m in _TOKEN.finditer(text):
        if m.lastgroup == "ws":
            continue
        if m.lastgroup == "bad":
            raise ConfigError(f"unexpected character {m.group()!r} at "
                              f"position {m.start()} in {text!r}")
        kind = m.lastgroup
        value = m.group()
        if kind == "op" and value == "**":
            value = "^"
        tokens.append((kind, value))
    return tokens


class _ExprParser:
    """Recursive-descent parser for the polynomial grammar."""

    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expect_op=None):
        tok = self.peek()
        if tok is None:
            raise ConfigError(f"unexpected end of expression in "
                              f"{self.text!r}")
        if expect_op is not None and tok != ("op", expect_op):
            raise ConfigError(f"expected {expect_op!r} in {self.text!r}, "
                              f"got {tok[1]!r}")
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek() is not None:
            raise ConfigError(f"trailing input {self.peek()[1]!r} in "
                              f"{self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek() in (("op", "-"), ("op", "+")):
            op = self.take()[1]
            child = self.unary()
            return child if op == "+" else ("neg", child)
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            node = ("^", node, self.unary())
        return node

    def atom(self):
        tok = self.take()
        kind, value = tok
        if kind == "num":
            return ("num", float(value))
        if kind == "var":
            return ("var",)
        if tok == ("op", "("):
            node = self.expr()
            self.take(expect_op=")")
            return node
        raise ConfigError(f"unexpected token {value!r} in {self.text!r}")


def _eval_node(node, x):
    op = node[0]
    if op == "num":
        return node[1]
    if op == "var":
        return x
    if op == "neg":
        return -_eval_node(node[1], x)
    a = _eval_node(node[1], x)
    b = _eval_node(node[2], x)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return a ** b


def parse_expression(text: str):
    """Compile an initial-data expression into a vectorized callable."""
    ast = _ExprParser(str(text)).parse()

    def fn(x):
        x = np.asarray(x, dtype=float)
        out = _eval_node(ast, x)
        out = np.asarray(out, dtype=float)
        if out.ndim == 0:
            out = np.full(x.shape, float(out))
        return out

    return fn


# ---------------------------------------------------------------------------
# section helpers
# ---------------------------------------------------------------------------

def _section(doc, name, required=True):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _get(sec, sec_name, key, kind, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"[{sec_name}] {key} is required")
        return default
    value = sec[key]
    if kind is float and isinstance(value, (int, float)) \
            and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return int(value)
    if kind is bool and isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    if kind is list and isinstance(value, list):
        return value
    raise ConfigError(f"[{sec_name}] {key} must be a {kind.__name__}, "
                      f"got {value!r}")


# ---------------------------------------------------------------------------
# RunConfig
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    variant: str
    grid: Optional[Grid]
    profile: Optional[SelfRenewalProfile]
    params: Optional[ModelParams]
    integrator: IntegratorConfig
    u1_0: Optional[np.ndarray] = None
    u2_0: Optional[np.ndarray] = None
    v1_0: Optional[float] = None
    v2_0: Optional[float] = None
    finite_initial: Optional[FiniteCloneState] = None
    observers: tuple = ()
    observer_every: int = 100
    out_dir: str = "out"
    plots: bool = False
    trajectory_name: str = "trajectory.csv"
    source: dict = field(default_factory=dict)


def _parse_profile(doc) -> SelfRenewalProfile:
    sec = _section(doc, "profile")
    kind = _get(sec, "profile", "kind", str, required=True)
    grid_sec = _section(doc, "grid", required=False)
    x_lo = _get(grid_sec, "grid", "x_lo", float, default=0.0)
    x_hi = _get(grid_sec, "grid", "x_hi", float, default=1.0)
    domain = (x_lo, x_hi)
    try:
        if kind == "constant":
            return SelfRenewalProfile.constant(
                _get(sec, "profile", "value", float, required=True), domain)
        if kind == "single-bump":
            return SelfRenewalProfile.single_bump(
                _get(sec, "profile", "peak", float, required=True),
                _get(sec, "profile", "floor", float, required=True),
                _get(sec, "profile", "center", float, required=True),
                _get(sec, "profile", "width", float, required=True), domain)
        if kind == "two-bump":
            centers = _get(sec, "profile", "centers", list, required=True)
            widths = _get(sec, "profile", "widths", list, required=True)
            return SelfRenewalProfile.two_bump(
                _get(sec, "profile", "peak", float, required=True),
                _get(sec, "profile", "floor", float, required=True),
                centers, widths, domain)
        if kind in ("piecewise-linear", "tabulated"):
            xs = _get(sec, "profile", "xs", list, required=True)
            values = _get(sec, "profile", "values", list, required=True)
            ctor = SelfRenewalProfile.piecewise_linear \
                if kind == "piecewise-linear" else SelfRenewalProfile.tabulated
            return ctor(xs, values)
    except CloneDynError as exc:
        raise ConfigError(f"[profile] {exc}") from exc
    raise ConfigError(f"[profile] unknown kind {kind!r}")


def _parse_density(sec, key, grid: Grid):
    """One initial density: expression string or mollified atom list."""
    expr = sec.get(key)
    atoms = sec.get(f"{key}_atoms")
    if (expr is None) == (atoms is None):
        raise ConfigError(f"[initial] give exactly one of {key} (expression)"
                          f" or {key}_atoms (atom list)")
    if expr is not None:
        if not isinstance(expr, str):
            raise ConfigError(f"[initial] {key} must be an expression string")
        vals = parse_expression(expr)(grid.nodes)
        if not np.all(np.isfinite(vals)):
            raise ConfigError(f"[initial] {key} evaluates to non-finite "
                              "values on the grid")
        if np.any(vals < 0.0):
            raise ConfigError(f"[initial] {key} is negative somewhere on "
                              "the grid")
        return vals
    eps = sec.get("mollify_epsilon")
    if eps is None:
        raise ConfigError("[initial] mollify_epsilon is required with "
                          "atom lists")
    try:
        pairs = [(float(a), float(w)) for a, w in atoms]
    except (TypeError, ValueError):
        raise ConfigError(f"[initial] {key}_atoms must be a list of "
                          "[position, weight] pairs") from None
    mu = DiscreteMeasure([p for p, _ in pairs], [w for _, w in pairs])
    try:
        return mollify(mu, float(eps), grid)
    except CloneDynError as exc:
        raise ConfigError(f"[initial] {exc}") from exc


def parse_config(doc: dict) -> RunConfig:
    """Validate a configuration document and construct all run objects."""
    model = _section(doc, "model")
    variant = _get(model, "model", "variant", str, default="continuum")
    if variant not in VARIANTS:
        raise ConfigError(f"[model] variant must be one of {VARIANTS}, "
                          f"got {variant!r}")

    integ_sec = _section(doc, "integrator")
    try:
        integrator = IntegratorConfig(
            dt=_get(integ_sec, "integrator", "dt", float, required=True),
            t_end=_get(integ_sec, "integrator", "t_end", float,
                       required=True),
            snapshot_times=tuple(_get(integ_sec, "integrator",
                                      "snapshot_times", list, default=[])),
            record_every=_get(integ_sec, "integrator", "record_every", int,
                              default=1))
    except CloneDynError as exc:
        raise ConfigError(f"[integrator] {exc}") from exc

    out_sec = _section(doc, "output", required=False)
    observers = tuple(_get(out_sec, "output", "observers", list, default=[]))
    for name in observers:
        if name not in OBSERVER_NAMES:
            raise ConfigError(f"[output] unknown observer {name!r}; "
                              f"available: {OBSERVER_NAMES}")
    cfg = RunConfig(
        variant=variant, grid=None, profile=None, params=None,
        integrator=integrator, observers=observers,
        observer_every=_get(out_sec, "output", "observer_every", int,
                            default=100),
        out_dir=_get(out_sec, "output", "dir", str, default="out"),
        plots=_get(out_sec, "output", "plots", bool, default=False),
        trajectory_name=_get(out_sec, "output", "trajectory", str,
                             default="trajectory.csv"),
        source=doc)

    initial = _section(doc, "initial")

    if variant == "finite":
        try:
            cfg.finite_initial = FiniteCloneState(
                0.0,
                _get(initial, "initial", "c1", float, required=True),
                _get(initial, "initial", "c2", float, required=True),
                _get(initial, "initial", "l1", list, default=[]),
                _get(initial, "initial", "l2", list, default=[]),
                a_c=_get(model, "model", "a_c", float, required=True),
                p_c=_get(model, "model", "p_c", float, required=True),
                d_c=_get(model, "model", "d_c", float, required=True),
                a_l=_get(model, "model", "a_l", list, default=[]),
                p_l=_get(model, "model", "p_l", list, default=[]),
                d_l=_get(model, "model", "d_l", list, default=[]),
                K_c=_get(model, "model", "K_c", float, required=True),
                K_l=_get(model, "model", "K_l", float, required=True))
        except CloneDynError as exc:
            raise ConfigError(f"[model]/[initial] finite variant: {exc}") \
                from exc
        return cfg

    try:
        cfg.params = ModelParams(
            p=_get(model, "model", "p", float, required=True),
            d=_get(model, "model", "d", float, required=True),
            K=_get(model, "model", "K", float, required=True))
    except CloneDynError as exc:
        raise ConfigError(f"[model] {exc}") from exc

    cfg.profile = _parse_profile(doc)

    if variant == "two-compartment":
        if cfg.profile.kind != "constant":
            raise ConfigError("[profile] two-compartment runs need a "
                              "constant profile (a single a value)")
        cfg.v1_0 = _get(initial, "initial", "v1", float, required=True)
        cfg.v2_0 = _get(initial, "initial", "v2", float, required=True)
        if cfg.v1_0 < 0 or cfg.v2_0 < 0:
            raise ConfigError("[initial] v1 and v2 must be >= 0")
        return cfg

    grid_sec = _section(doc, "grid")
    try:
        cfg.grid = Grid(_get(grid_sec, "grid", "x_lo", float, default=0.0),
                        _get(grid_sec, "grid", "x_hi", float, default=1.0),
                        _get(grid_sec, "grid", "n_nodes", int, required=True))
    except CloneDynError as exc:
        raise ConfigError(f"[grid] {exc}") from exc
    cfg.u1_0 = _parse_density(initial, "u1", cfg.grid)
    cfg.u2_0 = _parse_density(initial, "u2", cfg.grid)
    return cfg


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _fig1_doc():
    return {
        "model": {"variant": "continuum", "p": 1.0, "d": 0.2, "K": 0.01},
        "profile": {"kind": "single-bump", "peak": 0.9, "floor": 0.55,
                    "center": 0.5, "width": 0.05},
        "grid": {"x_lo": 0.0, "x_hi": 1.0, "n_nodes": 201},
        "initial": {"u1": "1000 - 500*x", "u2": "1000*x^2"},
        "integrator": {"dt": 0.01, "t_end": 200.0,
                       "snapshot_times": [0.0, 50.0, 100.0, 200.0]},
        "output": {"observers": ["V", "flat_dist", "conc_frac"],
                   "observer_every": 100, "plots": True},
    }


def _fig2_doc():
    doc = _fig1_doc()
    doc["profile"] = {"kind": "two-bump", "peak": 0.9, "floor": 0.55,
                      "centers": [0.3, 0.7], "widths": [0.05, 0.05]}
    # no flat_dist: with two isolated maximizers the limit (and hence the
    # distance target) is not predictable from the initial data
    doc["output"]["observers"] = ["V", "conc_frac"]
    return doc


PRESETS = {"fig1": _fig1_doc, "fig2": _fig2_doc}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: "
                          f"{', '.join(sorted(PRESETS))}")
    return PRESETS[name]()


def dump_toml(doc: dict) -> str:
    """Serialize a (flat, two-level) config document back to TOML text."""
    lines = []
    for sec_name, sec in doc.items():
        lines.append(f"[{sec_name}]")
        for key, value in sec.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, float):
        return format(value, ".12g") if value != int(value) \
            else f"{value:.1f}"
    return str(value)
