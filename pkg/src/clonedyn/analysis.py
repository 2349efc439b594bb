"""Quantities the stability theory makes computable: the positive
equilibrium of the constant-a reduction, its Lyapunov function, a-priori
bound certificates derived from the initial data, exponential ratio
envelopes, the constant-a perturbation integral, and the predicted limit
measure of the continuum system.

The bound certificate is the centerpiece: five constants M1..M5 and an
exponent gamma, computable before any integration, that every admissible
trajectory must respect.  check_bounds turns them into runtime invariants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (Grid, ModelParams, PopulationState, SelfRenewalProfile,
                   argmax_set, eval_profile, profile_on_grid)
from .dynamics import (IntegratorConfig, Trajectory, simulate_continuum,
                       total_mass)
from .errors import ConfigError, DomainError
from .measures import DiscreteMeasure, flat_metric, mollify

#: relative slack applied to every certificate comparison; the bounds are
#: exact for the flow, the slack absorbs integrator round-off only.
BOUND_TOL = 1e-6

#: quotient sup in M1 ignores nodes where u2(0) falls below this fraction of
#: its maximum (the quotient u1/u2 is unbounded where u2 vanishes).
QUOTIENT_FLOOR = 1e-9


@dataclass(frozen=True)
class EquilibriumPoint:
    """Positive steady state of the constant-a reduction."""

    a_bar: float
    rho1_bar: float
    rho2_bar: float


def steady_state(a_bar: float, params: ModelParams) -> EquilibriumPoint:
    """Closed-form equilibrium rho2 = (2a-1)/K, rho1 = d rho2 / p.

    Requires a_bar in (1/2, 1); at a_bar <= 1/2 the positive equilibrium
    degenerates to extinction.
    """
    if not (0.5 < a_bar < 1.0):
        raise DomainError(f"no positive equilibrium for a_bar={a_bar}; "
                          "need 1/2 < a_bar < 1")
    rho2 = (2.0 * a_bar - 1.0) / params.K
    rho1 = params.d * rho2 / params.p
    # internal residual check: both rates must vanish at the fixed point
    s = 1.0 / (1.0 + params.K * rho2)
    r1 = (2.0 * a_bar * s - 1.0) * params.p * rho1
    r2 = 2.0 * (1.0 - a_bar * s) * params.p * rho1 - params.d * rho2
    scale = max(params.p * rho1, params.d * rho2, 1.0)
    if max(abs(r1), abs(r2)) > 1e-12 * scale:
        raise ArithmeticError("equilibrium residual exceeded 1e-12; "
                              "parameters are numerically degenerate")
    return EquilibriumPoint(float(a_bar), float(rho1), float(rho2))


# ---------------------------------------------------------------------------
# Lyapunov function of the two-compartment system
# ---------------------------------------------------------------------------

def _G(xi, a, K):
    """Feedback factor G(xi) = 2 (1 - a / (1 + K xi)), positive for xi >= 0."""
    return 2.0 * (1.0 - a / (1.0 + K * np.asarray(xi, dtype=float)))


def _G_antideriv(xi, a, K):
    """Closed form of int dxi / G(xi) = (xi + (a/K) log(1 + K xi - a)) / 2.

    Differentiating: d/dxi = (1 + a/(1 + K xi - a))/2 = (1 + K xi) /
    (2 (1 + K xi - a)) = 1/G.  The log argument stays positive for xi >= 0
    because a < 1.
    """
    xi = np.asarray(xi, dtype=float)
    return 0.5 * (xi + (a / K) * np.log(1.0 + K * xi - a))


def lyapunov(v1, v2, eq: EquilibriumPoint, params: ModelParams):
    """Energy V(v1, v2) of the constant-a system: nonnegative, zero exactly
    at (rho1_bar, rho2_bar), non-increasing along trajectories.

        V = V1 / (p G(rho2_bar)) + V2 / d
        V1 = v1/rho1_bar - 1 - log(v1/rho1_bar)
        V2 = v2/rho2_bar - 1 - (G(rho2_bar)/rho2_bar) *
             int_{rho2_bar}^{v2} dxi / G(xi)

    Accepts scalars or arrays (vectorized over trajectory samples).
    """
    a, K = eq.a_bar, params.K
    if abs((2.0 * a - 1.0) / K - eq.rho2_bar) > 1e-9 * max(eq.rho2_bar, 1.0):
        raise ConfigError("equilibrium point inconsistent with params; "
                          "build it with steady_state(a_bar, params)")
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if np.any(v1 <= 0.0):
        raise DomainError("lyapunov needs v1 > 0 (logarithmic divergence)")
    if np.any(v2 < 0.0):
        raise DomainError("lyapunov needs v2 >= 0")
    r1 = v1 / eq.rho1_bar
    V1 = r1 - 1.0 - np.log(r1)
    G_eq = float(_G(eq.rho2_bar, a, K))
    integral = _G_antideriv(v2, a, K) - _G_antideriv(eq.rho2_bar, a, K)
    V2 = v2 / eq.rho2_bar - 1.0 - (G_eq / eq.rho2_bar) * integral
    V = V1 / (params.p * G_eq) + V2 / params.d
    if V.ndim == 0:
        return float(V)
    return V


@dataclass
class DescentReport:
    passed: bool
    max_increase: float
    tolerance: float
    V0: float
    V_final: float
    t_worst: float
    n_samples: int


def lyapunov_descent_check(trajectory: Trajectory, eq: EquilibriumPoint,
                           params: ModelParams = None) -> DescentReport:
    """Evaluate V at every recorded sample of a two-compartment run and
    report the largest forward-difference increase.  Passes iff
    max increase <= 1e-8 * (1 + V(0))."""
    meta = trajectory.metadata
    if meta.get("variant") not in (None, "two-compartment"):
        raise ConfigError(f"descent check expects a two-compartment "
                          f"trajectory, got variant={meta.get('variant')!r}")
    a_traj = meta.get("a_bar")
    if a_traj is not None and abs(a_traj - eq.a_bar) > 1e-12:
        raise ConfigError(f"trajectory was run at a_bar={a_traj}, "
                          f"equilibrium built for a_bar={eq.a_bar}")
    if params is None:
        params = meta.get("params")
    if params is None:
        raise ConfigError("params not found in trajectory metadata; "
                          "pass them explicitly")
    V = lyapunov(trajectory.rho1, trajectory.rho2, eq, params)
    V = np.atleast_1d(V)
    diffs = np.diff(V)
    max_inc = float(diffs.max()) if len(diffs) else 0.0
    max_inc = max(max_inc, 0.0)
    tol = 1e-8 * (1.0 + float(V[0]))
    t_worst = float(trajectory.times[int(np.argmax(diffs)) + 1]) \
        if len(diffs) else float(trajectory.times[0])
    return DescentReport(passed=max_inc <= tol, max_increase=max_inc,
                         tolerance=tol, V0=float(V[0]), V_final=float(V[-1]),
                         t_worst=t_worst, n_samples=len(V))


# ---------------------------------------------------------------------------
# a-priori bound certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundsCertificate:
    """Constants computable from the initial data that the flow never
    violates: quotient bound M1, mass bounds M2 (rho1) and M3 (rho2), the
    interpolation pair (M4, gamma) with rho2 <= M4 rho1^gamma, and the mass
    floor M5 <= rho1."""

    M1: float
    M2: float
    M3: float
    M4: float
    M5: float
    gamma: float
    a_bar: float
    a_min: float
    rho1_0: float
    rho2_0: float
    quotient_nodes: int  # nodes admitted into the sup of u1(0)/u2(0)

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("M1", "M2", "M3", "M4", "M5", "gamma", "a_bar", "a_min",
                 "rho1_0", "rho2_0", "quotient_nodes")}


def bounds_certificate(initial: PopulationState, profile: SelfRenewalProfile,
                       params: ModelParams, grid: Grid) -> BoundsCertificate:
    """Compute M1..M5 and gamma from the initial data.

    The quotient sup of u1(0)/u2(0) is taken over nodes where u2(0) is at
    least QUOTIENT_FLOOR times its maximum; initial data vanishing somewhere
    in compartment 2 (e.g. a density ~ x^2 at x = 0) would otherwise make
    the quotient unbounded at isolated points.
    """
    p, d, K = params.p, params.d, params.K
    u1 = np.asarray(initial.u1, dtype=float)
    u2 = np.asarray(initial.u2, dtype=float)
    rho1_0 = total_mass(u1, grid)
    rho2_0 = total_mass(u2, grid)
    if rho1_0 <= 0.0:
        raise DomainError("certificate undefined for rho1(0) = 0; the model "
                          "assumes strictly positive dividing-cell mass")
    a_vals = profile_on_grid(profile, grid)
    a_bar = float(a_vals.max())
    a_min = float(a_vals.min())

    u2_max = float(u2.max())
    mask = u2 >= QUOTIENT_FLOOR * u2_max if u2_max > 0.0 \
        else np.zeros_like(u2, dtype=bool)
    sup_U = float((u1[mask] / u2[mask]).max()) if mask.any() else 0.0

    M1 = max(sup_U, (2.0 * p * a_bar + d) / (2.0 * p * (1.0 - a_bar)))
    M2 = max(rho1_0, (2.0 * a_bar - 1.0) * M1 / K)
    M3 = max(rho2_0, 2.0 * p * M2 / d)
    gamma = min(0.5 * d / p, 0.9)
    M4 = max(rho2_0 / rho1_0 ** gamma,
             2.0 * p * M2 ** (1.0 - gamma) / (d - gamma * p))
    M5 = min(rho1_0, ((2.0 * a_min - 1.0) / (K * M4)) ** (1.0 / gamma))
    return BoundsCertificate(M1=M1, M2=M2, M3=M3, M4=M4, M5=M5, gamma=gamma,
                             a_bar=a_bar, a_min=a_min, rho1_0=rho1_0,
                             rho2_0=rho2_0,
                             quotient_nodes=int(np.count_nonzero(mask)))


@dataclass
class BoundViolation:
    bound: str
    t_first: float
    count: int
    worst: float


@dataclass
class BoundsReport:
    passed: bool
    n_samples: int
    violations: list = field(default_factory=list)

    def to_dict(self):
        return {"passed": self.passed, "n_samples": self.n_samples,
                "violations": [vars(v) for v in self.violations]}


def check_bounds(trajectory: Trajectory, cert: BoundsCertificate,
                 tol: float = BOUND_TOL) -> BoundsReport:
    """Assert the four certificate inequalities at every recorded sample.

    Violations are collected into the report, not raised: a failing bound on
    a converged run is a finding, not a crash.
    """
    rho1 = trajectory.rho1
    rho2 = trajectory.rho2
    t = trajectory.times
    checks = (
        ("rho1 <= M2", rho1, cert.M2 * (1.0 + tol), np.greater),
        ("rho2 <= M3", rho2, cert.M3 * (1.0 + tol), np.greater),
        ("rho2 <= M4*rho1^gamma", rho2,
         cert.M4 * rho1 ** cert.gamma * (1.0 + tol), np.greater),
        ("rho1 >= M5", rho1, cert.M5 * (1.0 - tol), np.less),
    )
    report = BoundsReport(passed=True, n_samples=len(t))
    for name, values, limit, cmp in checks:
        bad = cmp(values, limit)
        if np.any(bad):
            i = int(np.argmax(bad))
            worst = float((values - limit).max()) if cmp is np.greater \
                else float((limit - values).max())
            report.violations.append(BoundViolation(
                bound=name, t_first=float(t[i]),
                count=int(np.count_nonzero(bad)), worst=worst))
    report.passed = not report.violations
    return report


# ---------------------------------------------------------------------------
# ratio envelopes and the constant-a perturbation
# ---------------------------------------------------------------------------

def decay_envelope(x1: float, x2: float, initial: PopulationState,
                   cert: BoundsCertificate, params: ModelParams,
                   profile: SelfRenewalProfile, grid: Grid):
    """Exponential envelope dominating the ratio u1(t, x1)/u1(t, x2) when
    a(x1) < a(x2):

        ratio(t) <= ratio(0) * exp(2 p (a(x1) - a(x2)) t / (1 + K M3)).

    Returns a vectorized callable t -> bound.
    """
    a1 = eval_profile(profile, x1)
    a2 = eval_profile(profile, x2)
    if a1 >= a2:
        raise DomainError(f"decay envelope needs a(x1) < a(x2); got "
                          f"a({x1}) = {a1} >= a({x2}) = {a2}")
    u1_at_x1 = float(np.interp(x1, grid.nodes, initial.u1))
    u1_at_x2 = float(np.interp(x2, grid.nodes, initial.u1))
    if u1_at_x2 <= 0.0:
        raise DomainError(f"decay envelope needs u1(0, x2) > 0 at x2={x2}")
    ratio0 = u1_at_x1 / u1_at_x2
    rate = 2.0 * params.p * (a1 - a2) / (1.0 + params.K * cert.M3)

    def envelope(t):
        t = np.asarray(t, dtype=float)
        out = ratio0 * np.exp(rate * t)
        return float(out) if out.ndim == 0 else out

    return envelope


def perturbation_f(state: PopulationState, a_bar: float,
                   params: ModelParams, profile: SelfRenewalProfile,
                   grid: Grid):
    """Forcing (f1, f2 = -f1) that turns the exact mass system into the
    constant-a system plus a perturbation:

        f1 = (2 p / (1 + K rho2)) * int (a(x) - a_bar) u1 dx.

    Along concentrating trajectories f1 is absolutely integrable in t, which
    is what makes the constant-a equilibrium attract the true masses.
    """
    a_vals = profile_on_grid(profile, grid)
    rho2 = total_mass(state.u2, grid)
    weighted = float(grid.trapezoid_weights @ ((a_vals - a_bar) * state.u1))
    f1 = 2.0 * params.p / (1.0 + params.K * rho2) * weighted
    return f1, -f1


# ---------------------------------------------------------------------------
# limit prediction and measure-data stability
# ---------------------------------------------------------------------------

def _contiguous_groups(indices):
    groups = []
    start = prev = indices[0]
    for i in indices[1:]:
        if i == prev + 1:
            prev = i
            continue
        groups.append((start, prev))
        start = prev = i
    groups.append((start, prev))
    return groups


def predict_limit(initial: PopulationState, profile: SelfRenewalProfile,
                  params: ModelParams, grid: Grid,
                  tol: float = 1e-12) -> DiscreteMeasure:
    """Stationary u1 limit measure implied by the profile's argmax structure.

    Single maximizer x_bar: the Dirac rho1_bar * delta_{x_bar}.  Argmax set
    of positive length (including constant profiles): the initial density
    restricted to the set, rescaled to total mass rho1_bar.  Several
    isolated maximizers admit no prediction (the split depends on the
    initial data and on the profile shape near each peak) and raise.
    """
    idx = argmax_set(profile, grid, tol=tol)
    groups = _contiguous_groups(idx)
    if len(groups) > 1:
        raise DomainError(
            f"profile has {len(groups)} isolated maximizers; the limiting "
            "mass split is not predictable from the initial data alone -- "
            "simulate instead")
    a_vals = profile_on_grid(profile, grid)
    eq = steady_state(float(a_vals.max()), params)
    lo, hi = groups[0]
    if lo == hi:
        return DiscreteMeasure.dirac(float(grid.nodes[lo]), eq.rho1_bar)
    sel = np.arange(lo, hi + 1)
    base = grid.trapezoid_weights[sel] * np.asarray(initial.u1)[sel]
    total = float(base.sum())
    if total <= 0.0:
        raise DomainError("initial u1 carries no mass on the argmax set; "
                          "limit prediction undefined")
    return DiscreteMeasure(grid.nodes[sel].copy(),
                           base * (eq.rho1_bar / total))


@dataclass
class StabilityReport:
    passed: bool
    eps_mu: float
    eps_nu: float
    dist0: float
    distT: float
    alpha: float
    t_end: float
    deterministic: bool

    def to_dict(self):
        return dict(vars(self))


def stability_check(mu0: DiscreteMeasure, nu0: DiscreteMeasure,
                    epsilons, T: float, params: ModelParams,
                    profile: SelfRenewalProfile, grid: Grid,
                    dt: float = 0.01) -> StabilityReport:
    """Continuous dependence on mollified measure data.

    Both measures are mollified at their widths, both mollified densities
    are integrated to T (with an empty mature compartment), and the flat
    distance of the solutions is compared against exp(alpha T) times the
    initial flat distance, with the conservative rate
    alpha = max(2, M2 + d).  The comparison runs in log space: the bound is
    deliberately loose and would overflow otherwise.
    """
    eps_mu, eps_nu = float(epsilons[0]), float(epsilons[1])
    d_mu = mollify(mu0, eps_mu, grid)
    d_nu = mollify(nu0, eps_nu, grid)
    dist0 = flat_metric(DiscreteMeasure.from_density(d_mu, grid),
                        DiscreteMeasure.from_density(d_nu, grid))
    config = IntegratorConfig(dt=dt, t_end=float(T),
                              snapshot_times=(float(T),),
                              record_every=10 ** 9)
    zeros = np.zeros(grid.n_nodes)
    u1_T = []
    M2 = 0.0
    for dens in (d_mu, d_nu):
        cert = bounds_certificate(PopulationState(0.0, dens, zeros),
                                  profile, params, grid)
        M2 = max(M2, cert.M2)
        traj = simulate_continuum(dens, zeros, params, profile, grid, config,
                                  observers=())
        u1_T.append(DiscreteMeasure.from_density(traj.snapshots[-1].u1, grid))
    distT = flat_metric(u1_T[0], u1_T[1])
    alpha = max(2.0, M2 + params.d)
    if dist0 > 0.0:
        passed = math.log(distT) <= math.log(dist0) + alpha * T + 1e-9 \
            if distT > 0.0 else True
        deterministic = True
    else:
        deterministic = distT <= 1e-9
        passed = deterministic
    return StabilityReport(passed=passed, eps_mu=eps_mu, eps_nu=eps_nu,
                           dist0=dist0, distT=distT, alpha=alpha,
                           t_end=float(T), deterministic=deterministic)
