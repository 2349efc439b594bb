"""Right-hand sides and time integration for the three model variants.

Variants:
  * continuum     -- densities (u1, u2) on a grid, coupled through the
                     global signal s = 1/(1 + K * integral of u2);
  * finite        -- one healthy line plus n leukemic clones (ODE system);
  * two-compartment -- the constant-a reduction (v1, v2).

Integration is fixed-step classical Runge-Kutta 4.  The signal mass is
recomputed from the current stage state at every RK stage, so the integro-
differential coupling is treated exactly rather than frozen per step.
Scalar observables (rho1, rho2, s) are recorded densely; full field
snapshots only at configured times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

import numpy as np

from .core import (FiniteCloneState, Grid, ModelParams, PopulationState,
                   SelfRenewalProfile, TwoCompartmentState, profile_on_grid)
from .errors import (BlowupError, ConfigError, DomainError, NegativityError,
                     ShapeError)

#: entries in [-NEG_TOL, 0) are clamped to zero after each step; anything
#: below -NEG_TOL aborts the run (positivity is exact in the model, so a
#: visible undershoot means the step size is too large).
NEG_TOL = 1e-12


def total_mass(density, grid: Grid) -> float:
    """Composite trapezoid approximation of the integral of a grid density.

    Exact for affine densities; second-order convergent otherwise.
    """
    density = np.asarray(density, dtype=float)
    if density.shape != (grid.n_nodes,):
        raise ShapeError(f"density has shape {density.shape}, grid expects "
                         f"({grid.n_nodes},)")
    return float(grid.trapezoid_weights @ density)


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def rhs_continuum(state: PopulationState, params: ModelParams,
                  profile: SelfRenewalProfile, grid: Grid):
    """Nodewise derivatives (du1/dt, du2/dt) of the continuum system.

    du1/dt = (2 a(x) s - 1) p u1
    du2/dt = 2 (1 - a(x) s) p u1 - d u2,   s = 1/(1 + K * rho2)
    """
    if len(state.u1) != grid.n_nodes:
        raise ShapeError(f"state has {len(state.u1)} nodes, grid "
                         f"{grid.n_nodes}")
    a = profile_on_grid(profile, grid)
    rho2 = float(grid.trapezoid_weights @ state.u2)
    s = 1.0 / (1.0 + params.K * rho2)
    two_as = 2.0 * s * a
    du1 = (two_as - 1.0) * params.p * state.u1
    du2 = (2.0 - two_as) * params.p * state.u1 - params.d * state.u2
    return du1, du2


def rhs_two_compartment(v1: float, v2: float, a: float, params: ModelParams):
    """Derivatives of the constant-a reduction.

    dv1 = (2a/(1+K v2) - 1) p v1;  dv2 = 2(1 - a/(1+K v2)) p v1 - d v2.
    """
    s = 1.0 / (1.0 + params.K * v2)
    two_as = 2.0 * a * s
    dv1 = (two_as - 1.0) * params.p * v1
    dv2 = (2.0 - two_as) * params.p * v1 - params.d * v2
    return dv1, dv2


@dataclass
class FiniteCloneRates:
    """Derivative record matching FiniteCloneState's populations."""
    dc1: float
    dc2: float
    dl1: np.ndarray
    dl2: np.ndarray


def rhs_finite(state: FiniteCloneState) -> FiniteCloneRates:
    """All 2(n+1) derivatives of the finite n-clone system.

    Every line follows the same two-compartment template; the coupling is
    purely through the shared signal s = 1/(1 + K_c c2 + K_l sum l2).
    """
    s = state.signal_value()
    dc1 = (2.0 * state.a_c * s - 1.0) * state.p_c * state.c1
    dc2 = 2.0 * (1.0 - state.a_c * s) * state.p_c * state.c1 \
        - state.d_c * state.c2
    dl1 = (2.0 * state.a_l * s - 1.0) * state.p_l * state.l1
    dl2 = 2.0 * (1.0 - state.a_l * s) * state.p_l * state.l1 \
        - state.d_l * state.l2
    return FiniteCloneRates(dc1, dc2, dl1, dl2)


# ---------------------------------------------------------------------------
# trajectories and integrator configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings.

    record_every thins the dense scalar record (1 = every step); observers
    are evaluated at recorded samples, each at its own stride.
    """

    dt: float
    t_end: float
    method: str = "rk4"
    snapshot_times: tuple = ()
    record_every: int = 1

    def __post_init__(self):
        if self.method != "rk4":
            raise ConfigError(f"unsupported method {self.method!r}; only "
                              "fixed-step 'rk4' is implemented")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0.0 and math.isfinite(self.t_end)):
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.dt > self.t_end:
            raise ConfigError(f"dt={self.dt} exceeds t_end={self.t_end}")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        object.__setattr__(self, "snapshot_times",
                           tuple(float(t) for t in self.snapshot_times))
        for ts in self.snapshot_times:
            if ts < 0.0 or ts > self.t_end + 1e-9:
                raise ConfigError(f"snapshot time {ts} outside [0, t_end]")


@dataclass
class Observer:
    """Named scalar diagnostic sampled along a run.

    fn(t, state) -> float; ``every`` is a stride over *recorded* samples, so
    costly diagnostics (LP-based distances) can run sparsely while masses
    stay dense.  Skipped samples are stored as NaN and serialized as empty
    CSV cells.
    """

    name: str
    fn: Callable[[float, object], float]
    every: int = 1


@dataclass
class Snapshot:
    t: float
    u1: np.ndarray
    u2: np.ndarray


# canonical CSV column order for the common observers
_EXTRA_ORDER = ("V", "flat_dist", "conc_frac")


class Trajectory:
    """Recorded run: dense scalars, sparse extras, optional field snapshots."""

    def __init__(self, times, rho1, rho2, s, extras=None, snapshots=None,
                 metadata=None):
        self.times = np.asarray(times, dtype=float)
        self.rho1 = np.asarray(rho1, dtype=float)
        self.rho2 = np.asarray(rho2, dtype=float)
        self.s = np.asarray(s, dtype=float)
        self.extras = {k: np.asarray(v, dtype=float)
                       for k, v in (extras or {}).items()}
        self.snapshots = list(snapshots or [])
        self.metadata = dict(metadata or {})
        if np.any(np.diff(self.times) <= 0.0):
            raise DomainError("trajectory times must be strictly increasing")

    @property
    def n_samples(self):
        return len(self.times)

    def index_at(self, t: float) -> int:
        """Index of the recorded sample closest to time t."""
        return int(np.argmin(np.abs(self.times - t)))

    def extra_columns(self):
        named = [k for k in _EXTRA_ORDER if k in self.extras]
        rest = [k for k in self.extras if k not in _EXTRA_ORDER]
        return named + rest

    def to_csv(self, path):
        cols = self.extra_columns()
        header = "t,rho1,rho2,s" + ("," + ",".join(cols) if cols else "")
        arrays = [self.times, self.rho1, self.rho2, self.s] \
            + [self.extras[k] for k in cols]
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for i in range(self.n_samples):
                cells = []
                for arr in arrays:
                    v = arr[i]
                    cells.append("" if np.isnan(v) else format(v, ".12g"))
                fh.write(",".join(cells) + "\n")

    def snapshots_to_csv(self, out_dir, grid: Grid, prefix="snapshot"):
        """One `x,u1,u2` file per stored snapshot; returns written paths."""
        import os
        paths = []
        x = grid.nodes
        for snap in self.snapshots:
            name = f"{prefix}_t{format(snap.t, 'g')}.csv"
            path = os.path.join(out_dir, name)
            with open(path, "w") as fh:
                fh.write("x,u1,u2\n")
                for xi, a, b in zip(x, snap.u1, snap.u2):
                    fh.write(f"{format(xi, '.12g')},{format(a, '.12g')},"
                             f"{format(b, '.12g')}\n")
            paths.append(path)
        return paths


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def _plan_steps(dt: float, t_end: float):
    """Number of full dt steps plus an optional shortened final step."""
    n_full = int(math.floor(t_end / dt + 1e-9))
    rem = t_end - n_full * dt
    if rem <= 1e-9 * dt:
        rem = 0.0
    return n_full, rem


def _snap_steps(config: IntegratorConfig, total_steps: int):
    """Map requested snapshot times onto step indices (nearest step)."""
    out = {}
    for ts in config.snapshot_times:
        k = int(round(ts / config.dt))
        k = min(k, total_steps)
        out.setdefault(k, ts)
    return out


class _Recorder:
    """Accumulates the dense scalar record and the observer columns."""

    def __init__(self, observers):
        self.observers = list(observers)
        self.times, self.rho1, self.rho2, self.s = [], [], [], []
        self.extras = {o.name: [] for o in self.observers}
        self._n_recorded = 0

    def record(self, t, scalars, state, is_last):
        rho1, rho2, s = scalars
        self.times.append(t)
        self.rho1.append(rho1)
        self.rho2.append(rho2)
        self.s.append(s)
        j = self._n_recorded
        for obs in self.observers:
            due = (j % obs.every == 0) or is_last
            self.extras[obs.name].append(
                float(obs.fn(t, state)) if due else math.nan)
        self._n_recorded += 1

    def build(self, snapshots, metadata):
        extras = {k: v for k, v in self.extras.items()}
        return Trajectory(self.times, self.rho1, self.rho2, self.s,
                          extras=extras, snapshots=snapshots,
                          metadata=metadata)


def _check_step(y_new, t_prev, t_new):
    if not np.all(np.isfinite(y_new)):
        raise BlowupError(
            f"non-finite state at t={t_new:g}; last valid time t={t_prev:g}",
            t_last=t_prev)
    lowest = float(y_new.min())
    if lowest < -NEG_TOL:
        raise NegativityError(
            f"state undershot to {lowest:.3e} at t={t_new:g} (tolerance "
            f"{-NEG_TOL:.0e}); reduce dt", t_last=t_prev)
    if lowest < 0.0:
        np.maximum(y_new, 0.0, out=y_new)
    return y_new


def integrate(rhs, initial, config: IntegratorConfig, observers=(), *,
              grid: Optional[Grid] = None, params: Optional[ModelParams] = None,
              metadata=None):
    """Fixed-step RK4 integration of one of the three model variants.

    rhs is a callable consuming the state type of ``initial``:
      PopulationState      -> (du1, du2)         [e.g. partial(rhs_continuum, ...)]
      FiniteCloneState     -> FiniteCloneRates   [rhs_finite]
      TwoCompartmentState  -> rhs(v1, v2) -> (dv1, dv2)
                              [e.g. partial(rhs_two_compartment, a=.., params=..)]

    grid and params supply the mass quadrature / signal constants where the
    state itself does not carry them (continuum: both; two-compartment:
    params).  A bare (v1, v2) pair is accepted for the reduction.
    """
    if isinstance(initial, tuple) and len(initial) == 2:
        initial = TwoCompartmentState(0.0, initial[0], initial[1])
    meta = dict(metadata or {})
    meta.setdefault("dt", config.dt)
    meta.setdefault("t_end", config.t_end)
    if isinstance(initial, TwoCompartmentState):
        if params is None:
            raise ConfigError("two-compartment integration needs params= "
                              "for the signal record")
        meta.setdefault("variant", "two-compartment")
        meta.setdefault("params", params)
        return _integrate_two_comp(rhs, initial, config, observers, params,
                                   meta)
    if isinstance(initial, PopulationState):
        if grid is None or params is None:
            raise ConfigError("continuum integration needs grid= and params=")
        meta.setdefault("variant", "continuum")
        meta.setdefault("params", params)
        meta.setdefault("grid", grid)
        return _integrate_continuum(rhs, initial, config, observers, grid,
                                    params, meta)
    if isinstance(initial, FiniteCloneState):
        meta.setdefault("variant", "finite")
        return _integrate_finite(rhs, initial, config, observers, meta)
    raise ConfigError(f"unsupported initial state type "
                      f"{type(initial).__name__}")


def _integrate_continuum(rhs, initial, config, observers, grid, params, meta):
    n = len(initial.u1)
    if n != grid.n_nodes:
        raise ShapeError(f"initial state has {n} nodes, grid {grid.n_nodes}")
    w = grid.trapezoid_weights
    K = params.K

    def deriv(y, t):
        st = PopulationState(t, y[:n], y[n:], validate=False)
        du1, du2 = rhs(st)
        return np.concatenate((du1, du2))

    def scalars(y):
        rho1 = float(w @ y[:n])
        rho2 = float(w @ y[n:])
        return rho1, rho2, 1.0 / (1.0 + K * rho2)

    def view(y, t):
        return PopulationState(t, y[:n], y[n:], validate=False)

    def snap(y, t):
        return Snapshot(t, y[:n].copy(), y[n:].copy())

    y0 = np.concatenate((np.asarray(initial.u1, dtype=float),
                         np.asarray(initial.u2, dtype=float)))
    return _run_vector(deriv, scalars, view, snap, y0, initial.t, config,
                       observers, meta)


def _integrate_finite(rhs, initial, config, observers, meta):
    n = initial.n_clones

    def make(y, t):
        return FiniteCloneState(
            t, y[0], y[1], y[2:2 + n], y[2 + n:],
            a_c=initial.a_c, p_c=initial.p_c, d_c=initial.d_c,
            a_l=initial.a_l, p_l=initial.p_l, d_l=initial.d_l,
            K_c=initial.K_c, K_l=initial.K_l, validate=False)

    def deriv(y, t):
        r = rhs(make(y, t))
        return np.concatenate(([r.dc1, r.dc2], np.atleast_1d(r.dl1),
                               np.atleast_1d(r.dl2)))

    def scalars(y):
        rho1 = float(y[0] + np.sum(y[2:2 + n]))
        l2_sum = float(np.sum(y[2 + n:]))
        rho2 = float(y[1] + l2_sum)
        s = 1.0 / (1.0 + initial.K_c * y[1] + initial.K_l * l2_sum)
        return rho1, rho2, s

    y0 = np.concatenate(([initial.c1, initial.c2], initial.l1, initial.l2))
    return _run_vector(deriv, scalars, make, None, y0, initial.t, config,
                       observers, meta)


def _run_vector(deriv, scalars, view, snap, y0, t0, config, observers, meta):
    n_full, rem = _plan_steps(config.dt, config.t_end)
    total_steps = n_full + (1 if rem else 0)
    snap_at = _snap_steps(config, total_steps) if snap else {}
    rec = _Recorder(observers)
    snapshots = []

    y = np.array(y0, dtype=float)
    t = t0
    rec.record(t, scalars(y), view(y, t), total_steps == 0)
    if 0 in snap_at:
        snapshots.append(snap(y, t))

    dt = config.dt
    for k in range(1, total_steps + 1):
        h = dt if k <= n_full else rem
        t_new = t0 + (k * dt if k <= n_full else config.t_end)
        k1 = deriv(y, t)
        k2 = deriv(y + (0.5 * h) * k1, t + 0.5 * h)
        k3 = deriv(y + (0.5 * h) * k2, t + 0.5 * h)
        k4 = deriv(y + h * k3, t + h)
        y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        y = _check_step(y_new, t, t_new)
        t = t_new
        is_last = k == total_steps
        if k % config.record_every == 0 or is_last:
            rec.record(t, scalars(y), view(y, t), is_last)
        if k in snap_at:
            snapshots.append(snap(y, t))
    return rec.build(snapshots, meta)


def _integrate_two_comp(rhs, initial, config, observers, params, meta):
    """Scalar fast path: numpy overhead dominates a 2-ODE step, so the
    reduction integrates on plain floats (~10x faster for long sweeps)."""
    n_full, rem = _plan_steps(config.dt, config.t_end)
    total_steps = n_full + (1 if rem else 0)
    rec = _Recorder(observers)
    K = params.K

    v1, v2 = float(initial.v1), float(initial.v2)
    t0 = initial.t
    t = t0
    rec.record(t, (v1, v2, 1.0 / (1.0 + K * v2)),
               TwoCompartmentState(t, v1, v2, validate=False),
               total_steps == 0)

    dt = config.dt
    for k in range(1, total_steps + 1):
        h = dt if k <= n_full else rem
        t_new = t0 + (k * dt if k <= n_full else config.t_end)
        a1, b1 = rhs(v1, v2)
        a2, b2 = rhs(v1 + 0.5 * h * a1, v2 + 0.5 * h * b1)
        a3, b3 = rhs(v1 + 0.5 * h * a2, v2 + 0.5 * h * b2)
        a4, b4 = rhs(v1 + h * a3, v2 + h * b3)
        w1 = v1 + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        w2 = v2 + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if not (math.isfinite(w1) and math.isfinite(w2)):
            raise BlowupError(f"non-finite state at t={t_new:g}; last valid "
                              f"time t={t:g}", t_last=t)
        lowest = min(w1, w2)
        if lowest < -NEG_TOL:
            raise NegativityError(
                f"state undershot to {lowest:.3e} at t={t_new:g}; reduce dt",
                t_last=t)
        v1, v2 = max(w1, 0.0), max(w2, 0.0)
        t = t_new
        is_last = k == total_steps
        if k % config.record_every == 0 or is_last:
            rec.record(t, (v1, v2, 1.0 / (1.0 + K * v2)),
                       TwoCompartmentState(t, v1, v2, validate=False),
                       is_last)
    return rec.build([], meta)


# ---------------------------------------------------------------------------
# convenience front-ends
# ---------------------------------------------------------------------------

def simulate_continuum(u1_0, u2_0, params: ModelParams,
                       profile: SelfRenewalProfile, grid: Grid,
                       config: IntegratorConfig, observers=()):
    initial = PopulationState(0.0, u1_0, u2_0)
    a_vals = profile_on_grid(profile, grid)
    rhs = partial(rhs_continuum, params=params, profile=profile, grid=grid)
    meta = {"variant": "continuum", "params": params, "profile": profile,
            "grid": grid, "a_bar": float(a_vals.max()),
            "a_min": float(a_vals.min())}
    return integrate(rhs, initial, config, observers, grid=grid,
                     params=params, metadata=meta)


def simulate_two_compartment(v1_0, v2_0, a: float, params: ModelParams,
                             config: IntegratorConfig, observers=()):
    if not (0.5 < a < 1.0):
        raise DomainError(f"constant self-renewal must lie in (1/2, 1), "
                          f"got {a}")
    initial = TwoCompartmentState(0.0, v1_0, v2_0)
    rhs = partial(rhs_two_compartment, a=a, params=params)
    meta = {"variant": "two-compartment", "params": params, "a_bar": a}
    return integrate(rhs, initial, config, observers, params=params,
                     metadata=meta)


def simulate_finite(initial: FiniteCloneState, config: IntegratorConfig,
                    observers=()):
    return integrate(rhs_finite, initial, config, observers,
                     metadata={"variant": "finite"})
