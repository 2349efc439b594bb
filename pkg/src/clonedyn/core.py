"""Model vocabulary: rate parameters, self-renewal profiles, spatial grids,
and population states.

The continuum model tracks two densities u1 (dividing cells) and u2 (mature
cells) over a one-dimensional structure variable x.  The self-renewal
fraction a(x) is the fitness coordinate: clones with larger a(x) win the
feedback-mediated competition.  Everything downstream (dynamics, analysis,
metrics) is phrased in terms of the types defined here.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, cached_property

import numpy as np

from .errors import DomainError, ShapeError

# Profile values are clamped to the open interval (1/2, 1); the clamp width
# keeps 2a(x) - 1 and 1 - a(x) bounded away from zero in floating point.
A_CLAMP = 1e-9

_PROFILE_KINDS = ("constant", "single-bump", "two-bump", "piecewise-linear",
                  "tabulated")


@dataclass(frozen=True)
class ModelParams:
    """The three positive rate constants of the model.

    p  -- proliferation rate of compartment 1 (1/time)
    d  -- clearance rate of compartment 2 (1/time)
    K  -- feedback coefficient (1/cell-count) in s = 1/(1 + K*rho2)
    """

    p: float
    d: float
    K: float

    def __post_init__(self):
        for name in ("p", "d", "K"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise DomainError(f"ModelParams.{name} must be positive and "
                                  f"finite, got {value!r}")


@dataclass(frozen=True)
class Grid:
    """Uniform node set on a closed interval [x_lo, x_hi]."""

    x_lo: float
    x_hi: float
    n_nodes: int

    def __post_init__(self):
        if not (np.isfinite(self.x_lo) and np.isfinite(self.x_hi)):
            raise DomainError("grid endpoints must be finite")
        if self.x_hi <= self.x_lo:
            raise DomainError(f"grid needs x_hi > x_lo, got "
                              f"[{self.x_lo}, {self.x_hi}]")
        if self.n_nodes < 2:
            raise DomainError(f"grid needs at least 2 nodes, got {self.n_nodes}")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n_nodes - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(self.x_lo, self.x_hi, self.n_nodes)
        x.flags.writeable = False
        return x

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        """Composite trapezoid quadrature weights (h/2 at the ends)."""
        w = np.full(self.n_nodes, self.h)
        w[0] *= 0.5
        w[-1] *= 0.5
        w.flags.writeable = False
        return w

    def index_of(self, x: float) -> int:
        """Nearest node index for a position inside the domain."""
        if x < self.x_lo - 1e-12 or x > self.x_hi + 1e-12:
            raise DomainError(f"position {x} outside [{self.x_lo}, {self.x_hi}]")
        return int(round((x - self.x_lo) / self.h))


def _bump(u):
    """C^inf bump on (-1, 1): exp(1 - 1/(1 - u^2)), zero outside, peak 1."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    # the exponent underflows harmlessly to 0 near |u| = 1
    with np.errstate(over="ignore", under="ignore"):
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


@dataclass(frozen=True)
class SelfRenewalProfile:
    """The self-renewal fraction a(x) on a closed interval.

    Supported kinds: constant, single-bump, two-bump, piecewise-linear,
    tabulated.  Bump profiles are floor + (peak - floor) * k((x-c)/w) with k
    the standard compactly supported bump, so the peak value is attained
    exactly at the center and the profile equals the floor outside the
    support.  Piecewise-linear and tabulated profiles interpolate linearly
    between their nodes.

    Every evaluation is clamped to (1/2 + A_CLAMP, 1 - A_CLAMP): the model
    requires 1/2 < a(x) < 1 everywhere.
    """

    kind: str
    x_lo: float
    x_hi: float
    peak: float
    floor: float
    centers: tuple = ()
    widths: tuple = ()
    table_x: tuple = ()
    table_a: tuple = ()

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, value, domain=(0.0, 1.0)):
        return cls("constant", domain[0], domain[1], value, value)

    @classmethod
    def single_bump(cls, peak, floor, center, width, domain=(0.0, 1.0)):
        return cls("single-bump", domain[0], domain[1], peak, floor,
                   centers=(float(center),), widths=(float(width),))

    @classmethod
    def two_bump(cls, peak, floor, centers, widths, domain=(0.0, 1.0)):
        return cls("two-bump", domain[0], domain[1], peak, floor,
                   centers=tuple(float(c) for c in centers),
                   widths=tuple(float(w) for w in widths))

    @classmethod
    def piecewise_linear(cls, xs, values):
        xs = tuple(float(v) for v in xs)
        values = tuple(float(v) for v in values)
        return cls("piecewise-linear", xs[0], xs[-1],
                   max(values), min(values), table_x=xs, table_a=values)

    @classmethod
    def tabulated(cls, xs, values):
        xs = tuple(float(v) for v in xs)
        values = tuple(float(v) for v in values)
        return cls("tabulated", xs[0], xs[-1],
                   max(values), min(values), table_x=xs, table_a=values)

    # -- validation --------------------------------------------------------

    def __post_init__(self):
        if self.kind not in _PROFILE_KINDS:
            raise DomainError(f"unknown profile kind {self.kind!r}; expected "
                              f"one of {_PROFILE_KINDS}")
        if self.x_hi <= self.x_lo:
            raise DomainError("profile domain must have positive length")
        for name, value in (("peak", self.peak), ("floor", self.floor)):
            if not (0.5 < value < 1.0):
                raise DomainError(f"profile {name} must lie in (1/2, 1), "
                                  f"got {value}")
        if self.floor > self.peak:
            raise DomainError("profile floor must not exceed its peak")
        if self.kind in ("single-bump", "two-bump"):
            n_bumps = 1 if self.kind == "single-bump" else 2
            if len(self.centers) != n_bumps or len(self.widths) != n_bumps:
                raise DomainError(f"{self.kind} profile needs {n_bumps} "
                                  "center(s) and width(s)")
            for c, w in zip(self.centers, self.widths):
                if w <= 0.0:
                    raise DomainError("bump width must be positive")
                if not (self.x_lo <= c <= self.x_hi):
                    raise DomainError(f"bump center {c} outside domain")
            if self.kind == "two-bump":
                (c1, c2), (w1, w2) = self.centers, self.widths
                if abs(c2 - c1) < w1 + w2:
                    raise DomainError("two-bump supports overlap; separate "
                                      "the centers or shrink the widths")
        if self.kind in ("piecewise-linear", "tabulated"):
            xs = np.asarray(self.table_x)
            if len(xs) < 2 or np.any(np.diff(xs) <= 0):
                raise DomainError("table abscissae must be strictly "
                                  "increasing with at least 2 entries")
            if len(self.table_a) != len(xs):
                raise DomainError("table_x and table_a lengths differ")

    # -- evaluation --------------------------------------------------------

    def _eval_raw(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full_like(x, self.peak)
        if self.kind in ("single-bump", "two-bump"):
            out = np.full_like(x, self.floor)
            amp = self.peak - self.floor
            for c, w in zip(self.centers, self.widths):
                out += amp * _bump((x - c) / w)
            return out
        return np.interp(x, self.table_x, self.table_a)

    def __call__(self, x):
        return eval_profile(self, x)


def eval_profile(profile: SelfRenewalProfile, x):
    """Evaluate a(x); scalar in, scalar out.  x must lie in the domain."""
    arr = np.asarray(x, dtype=float)
    span = profile.x_hi - profile.x_lo
    tol = 1e-12 * max(span, 1.0)
    if np.any(arr < profile.x_lo - tol) or np.any(arr > profile.x_hi + tol):
        raise DomainError(f"profile evaluated outside its domain "
                          f"[{profile.x_lo}, {profile.x_hi}]")
    vals = profile._eval_raw(np.atleast_1d(arr))
    vals = np.clip(vals, 0.5 + A_CLAMP, 1.0 - A_CLAMP)
    if arr.ndim == 0:
        return float(vals[0])
    return vals


@lru_cache(maxsize=128)
def profile_on_grid(profile: SelfRenewalProfile, grid: Grid) -> np.ndarray:
    """a(x) sampled at the grid nodes, cached (both arguments are frozen)."""
    vals = eval_profile(profile, grid.nodes)
    vals.flags.writeable = False
    return vals


def argmax_set(profile: SelfRenewalProfile, grid: Grid, tol: float = 0.0):
    """Node indices where a(x_i) >= (1 - tol) * max_j a(x_j).

    tol is a relative tolerance; tol = 0 picks the exact discrete maximizers.
    """
    if tol < 0.0:
        raise DomainError(f"argmax tolerance must be >= 0, got {tol}")
    vals = profile_on_grid(profile, grid)
    cutoff = (1.0 - tol) * float(vals.max())
    return [int(i) for i in np.nonzero(vals >= cutoff)[0]]


def signal(rho2, params: ModelParams):
    """Feedback signal s = 1/(1 + K * rho2); strictly decreasing in rho2."""
    arr = np.asarray(rho2, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError(f"signal needs rho2 >= 0, got {rho2!r}")
    out = 1.0 / (1.0 + params.K * arr)
    if arr.ndim == 0:
        return float(out)
    return out


class PopulationState:
    """Grid densities (u1, u2) of the continuum system at one instant.

    Entries must be finite and nonnegative.  Construction with
    ``validate=False`` skips the checks; the integrator uses that internally
    for Runge-Kutta stage states, which may transiently dip negative.
    """

    __slots__ = ("t", "u1", "u2")

    def __init__(self, t, u1, u2, *, validate=True):
        if validate:
            u1 = np.array(u1, dtype=float)
            u2 = np.array(u2, dtype=float)
            if u1.ndim != 1 or u2.ndim != 1 or len(u1) != len(u2):
                raise ShapeError("u1 and u2 must be 1-d vectors of equal "
                                 f"length, got shapes {u1.shape}, {u2.shape}")
            for name, vec in (("u1", u1), ("u2", u2)):
                if not np.all(np.isfinite(vec)):
                    raise DomainError(f"{name} contains non-finite entries")
                if np.any(vec < 0.0):
                    raise DomainError(f"{name} contains negative entries")
        self.t = float(t)
        self.u1 = u1
        self.u2 = u2

    @property
    def n_nodes(self):
        return len(self.u1)

    def __repr__(self):
        return (f"PopulationState(t={self.t:g}, n_nodes={len(self.u1)}, "
                f"sum_u1={float(np.sum(self.u1)):.6g}, "
                f"sum_u2={float(np.sum(self.u2)):.6g})")


class TwoCompartmentState:
    """State (v1, v2) of the constant-a reduction at one instant."""

    __slots__ = ("t", "v1", "v2")

    def __init__(self, t, v1, v2, *, validate=True):
        if validate:
            for name, value in (("v1", v1), ("v2", v2)):
                if not np.isfinite(value) or value < 0.0:
                    raise DomainError(f"{name} must be finite and >= 0, "
                                      f"got {value!r}")
        self.t = float(t)
        self.v1 = float(v1)
        self.v2 = float(v2)

    def __repr__(self):
        return (f"TwoCompartmentState(t={self.t:g}, v1={self.v1:.6g}, "
                f"v2={self.v2:.6g})")


class FiniteCloneState:
    """State of the finite n-clone system: one healthy line (c1, c2) plus n
    leukemic clones (l1[i], l2[i]) with per-clone self-renewal, proliferation
    and clearance parameters.  The signal couples everything:

        s = 1 / (1 + K_c * c2 + K_l * sum_i l2[i])
    """

    __slots__ = ("t", "c1", "c2", "l1", "l2", "a_c", "p_c", "d_c",
                 "a_l", "p_l", "d_l", "K_c", "K_l")

    def __init__(self, t, c1, c2, l1, l2, *, a_c, p_c, d_c,
                 a_l=(), p_l=(), d_l=(), K_c, K_l, validate=True):
        l1 = np.asarray(l1, dtype=float)
        l2 = np.asarray(l2, dtype=float)
        a_l = np.asarray(a_l, dtype=float)
        p_l = np.asarray(p_l, dtype=float)
        d_l = np.asarray(d_l, dtype=float)
        if validate:
            n = len(l1)
            if not (len(l2) == len(a_l) == len(p_l) == len(d_l) == n):
                raise ShapeError("clone arrays l1, l2, a_l, p_l, d_l must "
                                 "share one length")
            pops = np.concatenate(([c1, c2], l1, l2))
            if not np.all(np.isfinite(pops)) or np.any(pops < 0.0):
                raise DomainError("populations must be finite and >= 0")
            a_all = np.concatenate(([a_c], a_l))
            if np.any(a_all <= 0.0) or np.any(a_all >= 1.0):
                raise DomainError("self-renewal fractions must lie in (0, 1)")
            rates = np.concatenate(([p_c, d_c, K_c, K_l], p_l, d_l))
            if np.any(rates <= 0.0) or not np.all(np.isfinite(rates)):
                raise DomainError("rates p, d and feedback constants must be "
                                  "positive and finite")
        self.t = float(t)
        self.c1 = float(c1)
        self.c2 = float(c2)
        self.l1 = l1
        self.l2 = l2
        self.a_c = float(a_c)
        self.p_c = float(p_c)
        self.d_c = float(d_c)
        self.a_l = a_l
        self.p_l = p_l
        self.d_l = d_l
        self.K_c = float(K_c)
        self.K_l = float(K_l)

    @property
    def n_clones(self):
        return len(self.l1)

    def signal_value(self) -> float:
        return 1.0 / (1.0 + self.K_c * self.c2 + self.K_l * float(np.sum(self.l2)))

    def __repr__(self):
        return (f"FiniteCloneState(t={self.t:g}, n_clones={self.n_clones}, "
                f"c=({self.c1:.6g}, {self.c2:.6g}))")
