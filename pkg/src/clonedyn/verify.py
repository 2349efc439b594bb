"""Independent oracles and seeded property suites.

The flat-metric LP is cross-checked against a dynamic program that
maximizes over piecewise-linear test functions exactly: the value function
"max of the partial objective as a function of the current test value" is
concave piecewise-linear, and the Lipschitz coupling between consecutive
support points is a sliding-window maximum, which for a concave function
just splits the graph at its peak and inserts a plateau.  No linear algebra
is shared with the LP path, so agreement is meaningful evidence.

A second, cruder oracle discretizes the test-function values onto a level
grid and exhausts that finite class; it is accurate only to the level
spacing but is assumption-free, and triangulates the other two.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .analysis import (bounds_certificate, check_bounds,
                       lyapunov_descent_check, decay_envelope, steady_state)
from .core import (FiniteCloneState, Grid, ModelParams, PopulationState,
                   SelfRenewalProfile, profile_on_grid)
from .dynamics import (IntegratorConfig, Observer, rhs_finite,
                       rhs_two_compartment, simulate_continuum,
                       simulate_finite, simulate_two_compartment)
from .errors import MassMismatchError, NumericsError
from .measures import (DiscreteMeasure, _signed_support, flat_metric,
                       flat_upper_bound, wasserstein1)


# ---------------------------------------------------------------------------
# oracle 1: exact maximization over piecewise-linear test functions
# ---------------------------------------------------------------------------

class _ConcavePL:
    """Concave piecewise-linear function stored as breakpoints."""

    __slots__ = ("xs", "vs")

    def __init__(self, xs, vs):
        self.xs = list(xs)
        self.vs = list(vs)

    @classmethod
    def linear(cls, slope, lo=-1.0, hi=1.0):
        return cls([lo, hi], [slope * lo, slope * hi])

    def add_linear(self, slope):
        self.vs = [v + slope * x for x, v in zip(self.xs, self.vs)]

    def window_max(self, delta):
        """Replace f by psi -> max_{|q - psi| <= delta} f(q).

        For concave f with peak attained on [xs[i0], xs[i1]] this shifts the
        rising branch left, the falling branch right, and bridges them with
        a plateau of the peak value.
        """
        vmax = max(self.vs)
        i0 = self.vs.index(vmax)
        i1 = len(self.vs) - 1 - self.vs[::-1].index(vmax)
        xs = [x - delta for x in self.xs[:i0 + 1]] \
            + [x + delta for x in self.xs[i1:]]
        vs = self.vs[:i0 + 1] + self.vs[i1:]
        self.xs, self.vs = xs, vs

    def eval_at(self, x):
        xs, vs = self.xs, self.vs
        if x <= xs[0]:
            return vs[0]
        if x >= xs[-1]:
            return vs[-1]
        j = bisect.bisect_right(xs, x)
        x0, x1 = xs[j - 1], xs[j]
        w = (x - x0) / (x1 - x0)
        return (1.0 - w) * vs[j - 1] + w * vs[j]

    def clip_domain(self, lo, hi):
        v_lo = self.eval_at(lo)
        v_hi = self.eval_at(hi)
        xs, vs = [lo], [v_lo]
        for x, v in zip(self.xs, self.vs):
            if lo < x < hi:
                xs.append(x)
                vs.append(v)
        xs.append(hi)
        vs.append(v_hi)
        self.xs, self.vs = xs, vs

    def max_value(self):
        return max(self.vs)


def flat_metric_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact flat distance by dynamic programming over the sorted support.

    The optimum over all admissible test functions is attained by one that
    is piecewise linear with kinks only at support points, so optimizing the
    support values alone is exact.
    """
    xs, c = _signed_support(mu, nu)
    if len(xs) == 0 or not np.any(c):
        return 0.0
    V = _ConcavePL.linear(float(c[0]))
    for i in range(1, len(xs)):
        V.window_max(float(xs[i] - xs[i - 1]))
        V.clip_domain(-1.0, 1.0)
        V.add_linear(float(c[i]))
    return max(V.max_value(), 0.0)


# ---------------------------------------------------------------------------
# oracle 2: exhaustive search over level-quantized test functions
# ---------------------------------------------------------------------------

def flat_metric_grid(mu: DiscreteMeasure, nu: DiscreteMeasure,
                     n_levels: int = 81) -> float:
    """Maximize over test functions whose support values are restricted to a
    uniform level grid on [-1, 1].  A lower bound on the true distance,
    tight to about sum|weights| * spacing / 2."""
    xs, c = _signed_support(mu, nu)
    if len(xs) == 0 or not np.any(c):
        return 0.0
    levels = np.linspace(-1.0, 1.0, n_levels)
    spacing = levels[1] - levels[0]
    best = c[0] * levels
    for i in range(1, len(xs)):
        reach = int(np.floor((xs[i] - xs[i - 1]) / spacing + 1e-12))
        if reach >= n_levels - 1:
            shifted = np.full(n_levels, best.max())
        elif reach == 0:
            shifted = best.copy()
        else:
            padded = np.full(n_levels + 2 * reach, -np.inf)
            padded[reach:reach + n_levels] = best
            windows = np.lib.stride_tricks.sliding_window_view(
                padded, 2 * reach + 1)
            shifted = windows.max(axis=1)
        best = shifted + c[i] * levels
    return float(best.max())


def flat_grid_tolerance(mu: DiscreteMeasure, nu: DiscreteMeasure,
                        n_levels: int = 81) -> float:
    """Worst-case gap of flat_metric_grid below the true value.

    Two loss sources when rounding the optimal test function onto the level
    grid: +-spacing/2 per support point, plus the slope capacity forfeited
    by rounding each adjacent reach down to a whole number of levels
    ((gap mod spacing), accumulating along the support chain).  Gaps >= 2
    are unconstraining (the value range is only 2 wide) and lose nothing.
    Rounding can start from either end, so take the smaller bound.
    """
    xs, c = _signed_support(mu, nu)
    if len(xs) == 0:
        return 1e-12
    spacing = 2.0 / (n_levels - 1)
    gaps = np.diff(xs)
    loss = np.where(gaps < 2.0, np.mod(gaps, spacing), 0.0)
    cum = np.concatenate(([0.0], np.cumsum(loss)))
    c_abs = np.abs(c)
    fwd = float(c_abs @ (spacing / 2.0 + cum))
    bwd = float(c_abs @ (spacing / 2.0 + cum[-1] - cum))
    return min(fwd, bwd) + 1e-12


# ---------------------------------------------------------------------------
# oracle 3: Wasserstein-1 as a transport LP
# ---------------------------------------------------------------------------

def wasserstein1_lp(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Optimal transport LP over the full coupling matrix (small supports)."""
    mu = mu.collapsed()
    nu = nu.collapsed()
    if abs(mu.mass - nu.mass) > 1e-9 * max(mu.mass, 1.0):
        raise MassMismatchError(f"transport LP needs equal masses, got "
                                f"{mu.mass} vs {nu.mass}")
    m, n = len(mu.positions), len(nu.positions)
    cost = np.abs(mu.positions[:, None] - nu.positions[None, :]).ravel()
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    b_eq = np.concatenate((mu.weights, nu.weights))
    # one marginal row is redundant; dropping it avoids a rank warning
    res = linprog(cost, A_eq=A_eq[:-1], b_eq=b_eq[:-1],
                  bounds=(0.0, None), method="highs")
    if not res.success:
        raise NumericsError(f"transport LP failed: {res.message}")
    return float(res.fun)


# ---------------------------------------------------------------------------
# suite plumbing
# ---------------------------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    seed: int
    n_cases: int
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures

    def summary(self):
        state = "pass" if self.passed else "FAIL"
        line = f"{self.name}: {state} ({self.n_cases} cases"
        if self.failures:
            line += f", {len(self.failures)} failures; first: " \
                    f"{self.failures[0]}"
        return line + ")"


def _random_measure(rng, max_atoms=6, span=3.0, max_weight=2.0):
    n = int(rng.integers(1, max_atoms + 1))
    pos = rng.uniform(-span, span, n)
    w = rng.uniform(0.0, max_weight, n)
    return DiscreteMeasure(pos, w)


def _positive_poly(rng, grid: Grid, scale=1000.0):
    """Random quadratic in x, strictly positive on the grid."""
    x = grid.nodes
    for _ in range(50):
        c = rng.uniform(-scale, scale, 3)
        vals = c[0] + c[1] * x + c[2] * x * x
        if vals.min() > scale * 1e-3:
            return vals
    return np.abs(c[0]) + 1.0 + 0.0 * x


def _random_profile(rng, grid: Grid) -> SelfRenewalProfile:
    kind = rng.choice(["constant", "single-bump", "two-bump"])
    domain = (grid.x_lo, grid.x_hi)
    peak = float(rng.uniform(0.65, 0.95))
    floor = float(rng.uniform(0.52, peak - 0.05))
    if kind == "constant":
        return SelfRenewalProfile.constant(peak, domain)
    if kind == "single-bump":
        center = float(rng.uniform(0.25, 0.75))
        width = float(rng.uniform(0.05, 0.2))
        return SelfRenewalProfile.single_bump(peak, floor, center, width,
                                              domain)
    widths = rng.uniform(0.04, 0.12, 2)
    c1 = float(rng.uniform(0.15, 0.35))
    c2 = float(rng.uniform(0.65, 0.85))
    return SelfRenewalProfile.two_bump(peak, floor, (c1, c2), tuple(widths),
                                       domain)


def _draw_params(rng) -> ModelParams:
    return ModelParams(p=float(rng.uniform(0.5, 2.0)),
                       d=float(rng.uniform(0.1, 1.0)),
                       K=float(rng.uniform(0.005, 0.1)))


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def suite_metrics(seed: int = 0, n_cases: int = 200) -> SuiteResult:
    """Metric axioms, invariances, oracle agreement, and W1 consistency."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("metrics", seed, n_cases)

    def fail(case, msg):
        result.failures.append(f"case {case}: {msg}")

    # pinned analytic cases
    for h in (0.1, 0.5, 1.0, 2.0, 3.0):
        d = flat_metric(DiscreteMeasure.dirac(0.0), DiscreteMeasure.dirac(h))
        if abs(d - min(h, 2.0)) > 1e-9:
            fail("dirac-pair", f"flat(d0, d{h}) = {d}, expected {min(h, 2)}")
    for c in (0.5, 1.0, 3.7):
        d = flat_metric(DiscreteMeasure.dirac(1.3, c), DiscreteMeasure.zero())
        if abs(d - c) > 1e-9:
            fail("dirac-vs-zero", f"flat(c*delta, 0) = {d}, expected {c}")

    for case in range(n_cases):
        mu = _random_measure(rng)
        nu = _random_measure(rng)
        kappa = _random_measure(rng)
        d = flat_metric(mu, nu)
        if abs(d - flat_metric(nu, mu)) > 1e-9:
            fail(case, "symmetry violated")
        if flat_metric(mu, mu) != 0.0:
            fail(case, "flat(mu, mu) != 0")
        theta = float(rng.uniform(0.1, 3.0))
        if abs(flat_metric(mu.scaled(theta), nu.scaled(theta))
               - theta * d) > 1e-9 * max(1.0, theta):
            fail(case, "scale invariance violated")
        offset = float(rng.uniform(-5.0, 5.0))
        if abs(flat_metric(mu.shifted(offset), nu.shifted(offset)) - d) \
                > 1e-9:
            fail(case, "translation invariance violated")
        if d > flat_upper_bound(mu, nu) + 1e-9:
            fail(case, "upper-bound inequality violated")
        if d > flat_metric(mu, kappa) + flat_metric(kappa, nu) + 1e-9:
            fail(case, "triangle inequality violated")
        oracle = flat_metric_oracle(mu, nu)
        if abs(d - oracle) > 1e-6:
            fail(case, f"LP={d} vs exact-PL oracle={oracle}")
        grid_val = flat_metric_grid(mu, nu)
        if not (grid_val - 1e-9 <= d
                <= grid_val + flat_grid_tolerance(mu, nu)):
            fail(case, f"LP={d} outside level-grid bracket "
                       f"[{grid_val}, +{flat_grid_tolerance(mu, nu)}]")
        # probability-measure consistency
        mu_p, nu_p = mu.normalized(), nu.normalized()
        w1 = wasserstein1(mu_p, nu_p)
        if flat_metric(mu_p, nu_p) > w1 + 1e-9:
            fail(case, "flat exceeded W1 on probability measures")
        if abs(w1 - wasserstein1_lp(mu_p, nu_p)) > 1e-8:
            fail(case, "CDF W1 disagrees with transport LP")
    return result


def suite_lyapunov(seed: int = 0, n_cases: int = 100, t_end: float = 500.0,
                   dt: float = 0.01, decay_target: float = 1e-6) \
        -> SuiteResult:
    """Descent of V along random two-compartment runs, plus decay to the
    equilibrium by the horizon."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("lyapunov", seed, n_cases)
    config = IntegratorConfig(dt=dt, t_end=t_end)
    for case in range(n_cases):
        params = _draw_params(rng)
        a = float(rng.uniform(0.6, 0.95))
        eq = steady_state(a, params)
        v1_0 = eq.rho1_bar * float(np.exp(rng.uniform(-2.0, 2.0)))
        v2_0 = eq.rho2_bar * float(np.exp(rng.uniform(-2.0, 2.0)))
        traj = simulate_two_compartment(v1_0, v2_0, a, params, config)
        report = lyapunov_descent_check(traj, eq)
        if not report.passed:
            result.failures.append(
                f"case {case}: max V increase {report.max_increase:.3e} > "
                f"tol {report.tolerance:.3e} at t={report.t_worst:g}")
        if report.V_final > decay_target * report.V0:
            result.failures.append(
                f"case {case}: V({t_end:g}) = {report.V_final:.3e} did not "
                f"fall below {decay_target:g} * V(0) = "
                f"{decay_target * report.V0:.3e}")
    return result


def suite_bounds(seed: int = 0, n_cases: int = 100, t_end: float = 100.0,
                 dt: float = 0.05, n_nodes: int = 101) -> SuiteResult:
    """Certificate inequalities along random admissible continuum runs."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("bounds", seed, n_cases)
    grid = Grid(0.0, 1.0, n_nodes)
    config = IntegratorConfig(dt=dt, t_end=t_end)
    for case in range(n_cases):
        params = _draw_params(rng)
        profile = _random_profile(rng, grid)
        u1_0 = _positive_poly(rng, grid)
        u2_0 = _positive_poly(rng, grid)
        initial = PopulationState(0.0, u1_0, u2_0)
        cert = bounds_certificate(initial, profile, params, grid)
        traj = simulate_continuum(u1_0, u2_0, params, profile, grid, config)
        report = check_bounds(traj, cert)
        if not report.passed:
            v = report.violations[0]
            result.failures.append(
                f"case {case}: {v.bound} violated first at t={v.t_first:g} "
                f"({v.count} samples, worst excess {v.worst:.3e})")
    return result


def suite_reduction(seed: int = 0, n_cases: int = 20, t_end: float = 50.0,
                    dt: float = 0.05) -> SuiteResult:
    """Consistency of the three variants where they must coincide."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("reduction", seed, n_cases)
    grid = Grid(0.0, 1.0, 41)
    config = IntegratorConfig(dt=dt, t_end=t_end)
    for case in range(n_cases):
        params = _draw_params(rng)
        a = float(rng.uniform(0.6, 0.95))
        profile = SelfRenewalProfile.constant(a, (grid.x_lo, grid.x_hi))
        c1 = float(rng.uniform(1.0, 100.0))
        c2 = float(rng.uniform(1.0, 100.0))

        # continuum with x-independent data == two-compartment masses
        traj_c = simulate_continuum(np.full(grid.n_nodes, c1),
                                    np.full(grid.n_nodes, c2),
                                    params, profile, grid, config)
        traj_2 = simulate_two_compartment(c1, c2, a, params, config)
        scale = max(traj_2.rho1.max(), traj_2.rho2.max(), 1.0)
        gap = max(float(np.abs(traj_c.rho1 - traj_2.rho1).max()),
                  float(np.abs(traj_c.rho2 - traj_2.rho2).max()))
        if gap > 1e-9 * scale:
            result.failures.append(
                f"case {case}: continuum/two-compartment masses differ by "
                f"{gap:.3e}")

        # finite system with zero clones == two-compartment, derivative-level
        st = FiniteCloneState(0.0, c1, c2, [], [], a_c=a, p_c=params.p,
                              d_c=params.d, K_c=params.K, K_l=params.K)
        r = rhs_finite(st)
        dv1, dv2 = rhs_two_compartment(c1, c2, a, params)
        if max(abs(r.dc1 - dv1), abs(r.dc2 - dv2)) > 1e-14 * max(1.0, scale):
            result.failures.append(
                f"case {case}: n=0 finite rhs disagrees with reduction")

        # permutation symmetry: identical clones stay identical (RK4 applies
        # the same float ops to both, so the match must be exact)
        st2 = FiniteCloneState(
            0.0, c1, c2, [5.0, 5.0], [3.0, 3.0], a_c=a, p_c=params.p,
            d_c=params.d, a_l=[0.8, 0.8], p_l=[params.p, params.p],
            d_l=[params.d, params.d], K_c=params.K, K_l=params.K)
        clone_gap = Observer(
            "clone_gap", lambda t, st: max(abs(st.l1[0] - st.l1[1]),
                                           abs(st.l2[0] - st.l2[1])))
        traj_f = simulate_finite(st2, IntegratorConfig(dt=dt, t_end=10.0),
                                 observers=[clone_gap])
        if np.nanmax(traj_f.extras["clone_gap"]) != 0.0:
            result.failures.append(
                f"case {case}: identical clones diverged by "
                f"{np.nanmax(traj_f.extras['clone_gap']):.3e}")
    return result


def suite_envelopes(seed: int = 0, n_cases: int = 20, t_end: float = 50.0,
                    dt: float = 0.02) -> SuiteResult:
    """Ratio envelopes: domination for a(x1) < a(x2), constancy for equal
    a-values, along random single-bump runs."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("envelopes", seed, n_cases)
    grid = Grid(0.0, 1.0, 101)
    for case in range(n_cases):
        params = _draw_params(rng)
        peak = float(rng.uniform(0.7, 0.95))
        floor = float(rng.uniform(0.52, peak - 0.1))
        center = float(grid.nodes[grid.index_of(rng.uniform(0.35, 0.65))])
        profile = SelfRenewalProfile.single_bump(peak, floor, center, 0.1,
                                                 (0.0, 1.0))
        u1_0 = _positive_poly(rng, grid)
        u2_0 = _positive_poly(rng, grid)
        initial = PopulationState(0.0, u1_0, u2_0)
        cert = bounds_certificate(initial, profile, params, grid)
        i_peak = grid.index_of(center)
        i_lo, i_eq1, i_eq2 = 4, 1, grid.n_nodes - 2
        obs = [Observer(f"u1@{i}", (lambda i: lambda t, st: st.u1[i])(i))
               for i in (i_lo, i_peak, i_eq1, i_eq2)]
        traj = simulate_continuum(u1_0, u2_0, params, profile, grid,
                                  IntegratorConfig(dt=dt, t_end=t_end), obs)
        env = decay_envelope(grid.nodes[i_lo], center, initial, cert, params,
                             profile, grid)
        ratio = traj.extras[f"u1@{i_lo}"] / traj.extras[f"u1@{i_peak}"]
        bound = env(traj.times)
        if np.any(ratio > bound * (1.0 + 1e-9) + 1e-300):
            k = int(np.argmax(ratio - bound))
            result.failures.append(
                f"case {case}: ratio {ratio[k]:.6e} exceeded envelope "
                f"{bound[k]:.6e} at t={traj.times[k]:g}")
        # equal profile values at the two far-from-bump nodes
        a_vals = profile_on_grid(profile, grid)
        if a_vals[i_eq1] == a_vals[i_eq2]:
            r = traj.extras[f"u1@{i_eq1}"] / traj.extras[f"u1@{i_eq2}"]
            drift = float(np.abs(r / r[0] - 1.0).max())
            if drift > 1e-6:
                result.failures.append(
                    f"case {case}: equal-a ratio drifted by {drift:.3e}")
    return result


ALL_SUITES = {
    "metrics": suite_metrics,
    "lyapunov": suite_lyapunov,
    "bounds": suite_bounds,
    "reduction": suite_reduction,
    "envelopes": suite_envelopes,
}


def run_suites(names, seed: int = 0, n_cases=None):
    """Run the named suites (or all) and return their results."""
    if not names or names == ["all"]:
        names = list(ALL_SUITES)
    results = []
    for name in names:
        if name not in ALL_SUITES:
            raise KeyError(f"unknown suite {name!r}; available: "
                           f"{', '.join(ALL_SUITES)}")
        kwargs = {"seed": seed}
        if n_cases is not None:
            kwargs["n_cases"] = n_cases
        results.append(ALL_SUITES[name](**kwargs))
    return results
