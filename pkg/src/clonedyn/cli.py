"""Command-line front end.

Subcommands:

    run          integrate a configured model, write CSV/JSON/SVG outputs
    metric       distances between two measures stored as CSV atom lists
    verify       randomized self-check suites (metrics, lyapunov, bounds,
                 reduction, envelopes)
    equilibrium  closed-form steady state for given (a_bar, p, d, K)
    sweep        re-run a base config across values of one parameter

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(blow-up, negativity, lost mass), 4 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time

import numpy as np

from . import svgplot
from .analysis import (bounds_certificate, check_bounds, lyapunov,
                       predict_limit, steady_state)
from .config import (RunConfig, load_config, parse_config, preset)
from .core import Grid, PopulationState, argmax_set, profile_on_grid
from .dynamics import (Observer, simulate_continuum, simulate_finite,
                       simulate_two_compartment, total_mass)
from .errors import CloneDynError, ConfigError, DomainError
from .measures import (DiscreteMeasure, flat_metric, flat_upper_bound,
                       concentration_stats, read_measure, wasserstein1)
from .verify import ALL_SUITES, run_suites

#: concentration windows default to this many grid spacings around each peak
CONC_WINDOW_CELLS = 5


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _nan_guard(fn):
    """Observers must not kill a run; undefined diagnostics record NaN."""
    def wrapped(t, state):
        try:
            return float(fn(t, state))
        except (CloneDynError, FloatingPointError, ZeroDivisionError):
            return float("nan")
    return wrapped


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _build_observers(cfg: RunConfig):
    """Turn observer names from [output] into Observer instances.

    Also returns a context dict with run-level reference data (predicted
    equilibrium, concentration window).  The equilibrium entry is filled
    in whether or not observers were requested, since it only depends on
    the profile and parameters.
    """
    if cfg.variant == "finite":
        if cfg.observers:
            raise ConfigError("[output] observers are only defined for the "
                              "continuum and two-compartment variants")
        return [], {}
    built = []
    context = {}
    if cfg.variant == "two-compartment":
        if set(cfg.observers) - {"V"}:
            raise ConfigError("[output] only the V observer applies to "
                              "two-compartment runs (no spatial structure)")
        eq = steady_state(cfg.profile.peak, cfg.params)
        context["equilibrium"] = eq
        if cfg.observers:
            built.append(Observer("V", _nan_guard(
                lambda t, st: lyapunov(st.v1, st.v2, eq, cfg.params)),
                every=1))
        return built, context

    grid, params, profile = cfg.grid, cfg.params, cfg.profile
    a_bar = float(profile_on_grid(profile, grid).max())
    eq = steady_state(a_bar, params)
    context["equilibrium"] = eq
    for name in cfg.observers:
        if name == "V":
            built.append(Observer("V", _nan_guard(
                lambda t, st: lyapunov(total_mass(st.u1, grid),
                                       total_mass(st.u2, grid),
                                       eq, params)), every=1))
        elif name == "flat_dist":
            initial = PopulationState(0.0, cfg.u1_0, cfg.u2_0)
            try:
                target = predict_limit(initial, profile, params, grid)
            except DomainError as exc:
                raise ConfigError(
                    f"[output] flat_dist observer unavailable: {exc}") \
                    from exc
            context["limit_measure"] = target
            built.append(Observer("flat_dist", _nan_guard(
                lambda t, st: flat_metric(
                    DiscreteMeasure.from_density(st.u1, grid), target)),
                every=cfg.observer_every))
        elif name == "conc_frac":
            centers = argmax_set(profile, grid)
            window = CONC_WINDOW_CELLS * grid.h
            context["conc_centers"] = [float(grid.nodes[i]) for i in centers]
            context["conc_window"] = window
            built.append(Observer("conc_frac", _nan_guard(
                lambda t, st: concentration_stats(st.u1, grid, centers,
                                                  window)),
                every=cfg.observer_every))
    return built, context


def _simulate(cfg: RunConfig, observers):
    if cfg.variant == "continuum":
        return simulate_continuum(cfg.u1_0, cfg.u2_0, cfg.params,
                                  cfg.profile, cfg.grid, cfg.integrator,
                                  observers)
    if cfg.variant == "two-compartment":
        return simulate_two_compartment(cfg.v1_0, cfg.v2_0,
                                        cfg.profile.peak, cfg.params,
                                        cfg.integrator, observers)
    return simulate_finite(cfg.finite_initial, cfg.integrator, observers)


def _last_finite(arr):
    arr = np.asarray(arr, dtype=float)
    finite = np.flatnonzero(np.isfinite(arr))
    return float(arr[finite[-1]]) if len(finite) else None


def _run_plots(cfg, traj, out_dir, files):
    t = traj.times
    path = os.path.join(out_dir, "masses.svg")
    svgplot.line_chart(path, [(t, traj.rho1, "rho1"), (t, traj.rho2, "rho2")],
                       title="compartment masses", xlabel="t",
                       ylabel="mass")
    files.append(path)
    if "V" in traj.extras:
        path = os.path.join(out_dir, "lyapunov.svg")
        svgplot.line_chart(path, [(t, traj.extras["V"], "V")],
                           title="Lyapunov energy", xlabel="t", ylabel="V",
                           logy=True)
        files.append(path)
    if traj.snapshots:
        x = cfg.grid.nodes
        path = os.path.join(out_dir, "density.svg")
        series = [(x, snap.u1, f"u1 t={snap.t:g}")
                  for snap in traj.snapshots]
        svgplot.line_chart(path, series, title="dividing-cell density",
                           xlabel="x", ylabel="u1")
        files.append(path)


def cmd_run(args):
    if args.preset:
        doc = preset(args.preset)
    else:
        doc = load_config(args.config)
    cfg = parse_config(doc)
    if args.out:
        cfg.out_dir = args.out
    observers, context = _build_observers(cfg)

    os.makedirs(cfg.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    traj = _simulate(cfg, observers)
    runtime = time.perf_counter() - t0

    files = []
    traj_path = os.path.join(cfg.out_dir, cfg.trajectory_name)
    traj.to_csv(traj_path)
    files.append(traj_path)
    if traj.snapshots:
        files.extend(traj.snapshots_to_csv(cfg.out_dir, cfg.grid))

    summary = {
        "variant": cfg.variant,
        "dt": cfg.integrator.dt,
        "t_end": cfg.integrator.t_end,
        "n_samples": traj.n_samples,
        "runtime_seconds": round(runtime, 6),
        "final": {"t": float(traj.times[-1]),
                  "rho1": float(traj.rho1[-1]),
                  "rho2": float(traj.rho2[-1]),
                  "s": float(traj.s[-1])},
    }

    eq = context.get("equilibrium")
    if eq is not None:
        summary["equilibrium"] = {
            "a_bar": eq.a_bar, "rho1_bar": eq.rho1_bar,
            "rho2_bar": eq.rho2_bar,
            "rho1_rel_err": abs(traj.rho1[-1] - eq.rho1_bar) / eq.rho1_bar,
            "rho2_rel_err": abs(traj.rho2[-1] - eq.rho2_bar) / eq.rho2_bar,
        }
    if "conc_frac" in traj.extras:
        summary["concentration"] = {
            "fraction": _last_finite(traj.extras["conc_frac"]),
            "window": context.get("conc_window"),
            "centers": context.get("conc_centers"),
        }
    if "flat_dist" in traj.extras:
        summary["flat_distance_final"] = _last_finite(
            traj.extras["flat_dist"])
    if "V" in traj.extras:
        summary["lyapunov"] = {"V0": float(traj.extras["V"][0]),
                               "V_final": _last_finite(traj.extras["V"])}

    if cfg.variant == "continuum":
        try:
            cert = bounds_certificate(
                PopulationState(0.0, cfg.u1_0, cfg.u2_0), cfg.profile,
                cfg.params, cfg.grid)
            report = check_bounds(traj, cert)
            summary["bounds"] = {"certificate": cert.to_dict(),
                                 **report.to_dict()}
        except DomainError as exc:
            summary["bounds"] = {"skipped": str(exc)}

    if cfg.plots and not args.no_plots:
        _run_plots(cfg, traj, cfg.out_dir, files)

    summary_path = os.path.join(cfg.out_dir, "summary.json")
    summary["files"] = [os.path.basename(f) for f in files]
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
        fh.write("\n")

    print(f"variant: {cfg.variant}")
    print(f"integrated to t={traj.times[-1]:g} "
          f"({traj.n_samples} samples, {runtime:.2f}s)")
    print(f"final masses: rho1={traj.rho1[-1]:.6g} "
          f"rho2={traj.rho2[-1]:.6g} s={traj.s[-1]:.6g}")
    if eq is not None:
        e = summary["equilibrium"]
        print(f"equilibrium ({eq.rho1_bar:g}, {eq.rho2_bar:g}): "
              f"rel err rho1={e['rho1_rel_err']:.3e} "
              f"rho2={e['rho2_rel_err']:.3e}")
    if "concentration" in summary and \
            summary["concentration"]["fraction"] is not None:
        print(f"concentration fraction: "
              f"{summary['concentration']['fraction']:.6g}")
    if "flat_distance_final" in summary and \
            summary["flat_distance_final"] is not None:
        print(f"flat distance to predicted limit: "
              f"{summary['flat_distance_final']:.6g}")
    if "bounds" in summary:
        if "passed" in summary["bounds"]:
            state = "pass" if summary["bounds"]["passed"] else "FAIL"
            print(f"a-priori bounds: {state}")
        else:
            print(f"a-priori bounds: skipped ({summary['bounds']['skipped']})")
    print(f"outputs in {cfg.out_dir}/")
    return 0


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------

def cmd_metric(args):
    mu = read_measure(args.mu)
    nu = read_measure(args.nu)
    m_mu, m_nu = mu.mass, nu.mass
    print(f"mass_mu: {m_mu:.12g}")
    print(f"mass_nu: {m_nu:.12g}")
    print(f"flat: {flat_metric(mu, nu):.12g}")
    scale = max(1.0, abs(m_mu), abs(m_nu))
    if abs(m_mu - m_nu) <= 1e-9 * scale and m_mu > 0.0 and \
            np.all(np.asarray(mu.weights) >= 0.0) and \
            np.all(np.asarray(nu.weights) >= 0.0):
        w1 = m_mu * wasserstein1(mu.normalized(), nu.normalized())
        print(f"wasserstein1: {w1:.12g}")
    else:
        print(f"wasserstein1: n/a (needs equal-mass nonnegative measures; "
              f"masses {m_mu:.6g} vs {m_nu:.6g})")
    print(f"flat_upper_bound: {flat_upper_bound(mu, nu):.12g}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args):
    if args.list:
        for name in ALL_SUITES:
            print(name)
        return 0
    try:
        results = run_suites(args.suites, seed=args.seed,
                             n_cases=args.cases)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    failed = False
    for res in results:
        print(res.summary())
        failed = failed or not res.passed
    return 4 if failed else 0


# ---------------------------------------------------------------------------
# equilibrium
# ---------------------------------------------------------------------------

def cmd_equilibrium(args):
    from .core import ModelParams
    params = ModelParams(p=args.p, d=args.d, K=args.K)
    eq = steady_state(args.a_bar, params)
    s_bar = 1.0 / (1.0 + params.K * eq.rho2_bar)
    if args.json:
        print(json.dumps({"a_bar": eq.a_bar, "rho1_bar": eq.rho1_bar,
                          "rho2_bar": eq.rho2_bar, "s_bar": s_bar},
                         indent=2))
    else:
        print(f"a_bar: {eq.a_bar:.12g}")
        print(f"rho1_bar: {eq.rho1_bar:.12g}")
        print(f"rho2_bar: {eq.rho2_bar:.12g}")
        print(f"s_bar: {s_bar:.12g}")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _set_dotted(doc, dotted, value):
    if "." not in dotted:
        raise ConfigError(f"--param must be section.key, got {dotted!r}")
    sec_name, key = dotted.split(".", 1)
    sec = doc.setdefault(sec_name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{sec_name}] is not a table")
    sec[key] = value


def cmd_sweep(args):
    base = preset(args.preset) if args.preset else load_config(args.config)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be a comma list of numbers, "
                          f"got {args.values!r}") from None
    if not values:
        raise ConfigError("--values is empty")

    rows = []
    for value in values:
        doc = copy.deepcopy(base)
        _set_dotted(doc, args.param, value)
        doc.setdefault("output", {})["plots"] = False
        cfg = parse_config(doc)
        observers, context = _build_observers(cfg)
        traj = _simulate(cfg, observers)
        eq = context.get("equilibrium")
        rows.append({
            "value": value,
            "rho1": float(traj.rho1[-1]),
            "rho2": float(traj.rho2[-1]),
            "s": float(traj.s[-1]),
            "rho1_bar": eq.rho1_bar if eq else float("nan"),
            "rho2_bar": eq.rho2_bar if eq else float("nan"),
        })
        print(f"{args.param}={value:g}: rho1={rows[-1]['rho1']:.6g} "
              f"rho2={rows[-1]['rho2']:.6g}")

    out_dir = args.out or "out"
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "sweep.csv")
    cols = ("value", "rho1", "rho2", "s", "rho1_bar", "rho2_bar")
    with open(csv_path, "w") as fh:
        fh.write(f"# param: {args.param}\n")
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(format(row[c], ".12g") for c in cols) + "\n")
    svg_path = os.path.join(out_dir, "sweep.svg")
    xs = [r["value"] for r in rows]
    svgplot.line_chart(svg_path,
                       [(xs, [r["rho1"] for r in rows], "rho1 final"),
                        (xs, [r["rho2"] for r in rows], "rho2 final")],
                       title=f"sweep over {args.param}", xlabel=args.param,
                       ylabel="mass")
    print(f"wrote {csv_path} and {svg_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing / dispatch
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="clonedyn",
        description="structured-population clonal selection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate a configured model")
    src = p_run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="TOML configuration file")
    src.add_argument("--preset", help="built-in configuration "
                                      "(fig1, fig2)")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--no-plots", action="store_true",
                       help="skip SVG output even if the config asks "
                            "for plots")
    p_run.set_defaults(fn=cmd_run)

    p_metric = sub.add_parser(
        "metric", help="distances between two measure CSV files "
                       "(position,weight rows)")
    p_metric.add_argument("mu")
    p_metric.add_argument("nu")
    p_metric.set_defaults(fn=cmd_metric)

    p_verify = sub.add_parser("verify", help="randomized self-check suites")
    p_verify.add_argument("suites", nargs="*",
                          help=f"suites to run (default all): "
                               f"{', '.join(ALL_SUITES)}")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--cases", type=int, default=None,
                          help="cases per suite (default: suite-specific)")
    p_verify.add_argument("--list", action="store_true",
                          help="list available suites and exit")
    p_verify.set_defaults(fn=cmd_verify)

    p_eq = sub.add_parser("equilibrium",
                          help="closed-form positive steady state")
    p_eq.add_argument("--a-bar", type=float, required=True)
    p_eq.add_argument("--p", type=float, required=True)
    p_eq.add_argument("--d", type=float, required=True)
    p_eq.add_argument("--K", type=float, required=True)
    p_eq.add_argument("--json", action="store_true")
    p_eq.set_defaults(fn=cmd_equilibrium)

    p_sweep = sub.add_parser("sweep",
                             help="re-run a config across parameter values")
    src = p_sweep.add_mutually_exclusive_group(required=True)
    src.add_argument("--config")
    src.add_argument("--preset")
    p_sweep.add_argument("--param", required=True,
                         help="dotted config path, e.g. model.p")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    p_sweep.add_argument("--out", help="output directory (default out/)")
    p_sweep.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CloneDynError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
