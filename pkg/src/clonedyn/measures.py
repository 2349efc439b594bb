"""Finite positive measures on the line and the metric machinery used to
witness weak* convergence of densities to their limit measures.

The flat (bounded-Lipschitz) metric is computed exactly as a small linear
program: the dual supremum over test functions with sup-norm and Lipschitz
constant both at most 1 is attained by a piecewise-linear function whose
kinks sit on the merged support, so adjacent-pair Lipschitz constraints are
sufficient in one dimension.  Wasserstein-1 uses the closed-form CDF
integral, valid for equal-mass (here: probability) measures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import Grid
from .errors import (ConfigError, DomainError, MassMismatchError,
                     NumericsError, ResolutionError, ShapeError)


class DiscreteMeasure:
    """Finite positive measure as weighted atoms (positions, weights >= 0)."""

    __slots__ = ("positions", "weights")

    def __init__(self, positions, weights):
        positions = np.atleast_1d(np.asarray(positions, dtype=float))
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        if positions.shape != weights.shape or positions.ndim != 1:
            raise ShapeError("positions and weights must be 1-d arrays of "
                             "equal length")
        if not (np.all(np.isfinite(positions)) and
                np.all(np.isfinite(weights))):
            raise DomainError("measure atoms must be finite")
        if np.any(weights < 0.0):
            raise DomainError("measure weights must be >= 0")
        self.positions = positions
        self.weights = weights

    @classmethod
    def zero(cls):
        return cls(np.empty(0), np.empty(0))

    @classmethod
    def dirac(cls, x, mass=1.0):
        return cls([x], [mass])

    @classmethod
    def from_density(cls, density, grid: Grid):
        """Grid density -> atoms at the nodes with trapezoid weights, so that
        mass(measure) == total_mass(density) exactly."""
        density = np.asarray(density, dtype=float)
        if density.shape != (grid.n_nodes,):
            raise ShapeError(f"density has shape {density.shape}, grid "
                             f"expects ({grid.n_nodes},)")
        return cls(grid.nodes.copy(), grid.trapezoid_weights * density)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def normalized(self) -> "DiscreteMeasure":
        m = self.mass
        if m <= 0.0:
            raise DomainError("cannot normalize a zero-mass measure")
        return DiscreteMeasure(self.positions, self.weights / m)

    def shifted(self, offset: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.positions + offset, self.weights)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        if factor < 0.0:
            raise DomainError("scale factor must be >= 0")
        return DiscreteMeasure(self.positions, self.weights * factor)

    def collapsed(self) -> "DiscreteMeasure":
        """Sorted support with duplicate positions merged."""
        xs, inv = np.unique(self.positions, return_inverse=True)
        w = np.zeros_like(xs)
        np.add.at(w, inv, self.weights)
        return DiscreteMeasure(xs, w)

    def __repr__(self):
        return (f"DiscreteMeasure(n_atoms={len(self.positions)}, "
                f"mass={self.mass:.6g})")


def _signed_support(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Merged sorted support with net weights of mu - nu."""
    pos = np.concatenate((mu.positions, nu.positions))
    w = np.concatenate((mu.weights, -nu.weights))
    xs, inv = np.unique(pos, return_inverse=True)
    c = np.zeros_like(xs)
    np.add.at(c, inv, w)
    return xs, c


def flat_metric(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact bounded-Lipschitz (flat) distance.

    Solves  max  sum_i psi_i (mu_i - nu_i)
            s.t. -1 <= psi_i <= 1,
                 |psi_{i+1} - psi_i| <= x_{i+1} - x_i  (adjacent support pts)

    which equals the sup over all Lipschitz-1, bounded-by-1 test functions:
    any feasible psi extends piecewise-linearly off the support without
    violating either constraint, and only support values enter the integral.
    """
    xs, c = _signed_support(mu, nu)
    if len(xs) == 0 or not np.any(c):
        return 0.0
    m = len(xs)
    if m == 1:
        return abs(float(c[0]))
    dx = np.diff(xs)
    # two inequality rows per adjacent pair: +/- (psi_{i+1} - psi_i) <= dx_i
    rows = np.zeros((2 * (m - 1), m))
    idx = np.arange(m - 1)
    rows[2 * idx, idx + 1] = 1.0
    rows[2 * idx, idx] = -1.0
    rows[2 * idx + 1, idx + 1] = -1.0
    rows[2 * idx + 1, idx] = 1.0
    b = np.repeat(dx, 2)
    res = linprog(-c, A_ub=rows, b_ub=b, bounds=(-1.0, 1.0), method="highs")
    if not res.success:
        raise NumericsError(f"flat-metric LP failed: {res.message}")
    return max(float(-res.fun), 0.0)


def wasserstein1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """W1 distance between probability measures via the CDF integral
    int |F_mu - F_nu| dx over the merged support hull."""
    for name, m in (("mu", mu.mass), ("nu", nu.mass)):
        if abs(m - 1.0) > 1e-12:
            raise MassMismatchError(
                f"wasserstein1 needs probability measures; mass({name}) = "
                f"{m!r} (masses: mu={mu.mass!r}, nu={nu.mass!r}); "
                "normalize first")
    xs = np.unique(np.concatenate((mu.positions, nu.positions)))
    if len(xs) < 2:
        return 0.0

    def cdf_on(xs_ref, measure):
        c = np.zeros_like(xs_ref)
        idx = np.searchsorted(xs_ref, measure.positions)
        np.add.at(c, idx, measure.weights)
        return np.cumsum(c)

    gap = np.abs(cdf_on(xs, mu) - cdf_on(xs, nu))[:-1]
    return float(np.sum(gap * np.diff(xs)))


def flat_upper_bound(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Upper bound min(rho_mu, rho_nu) * W1(normalized) + |rho_mu - rho_nu|
    on the flat distance; collapses to the mass gap when either side is
    empty (the transport term is vacuous)."""
    rho_mu, rho_nu = mu.mass, nu.mass
    gap = abs(rho_mu - rho_nu)
    if rho_mu <= 0.0 or rho_nu <= 0.0:
        return gap
    w1 = wasserstein1(mu.normalized(), nu.normalized())
    return min(rho_mu, rho_nu) * w1 + gap


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

_KERNEL_NORM = None  # lazily computed integral of exp(-1/(1-u^2)) on (-1, 1)


def bump_kernel(u):
    """Standard compactly supported mollifier C exp(-1/(1-u^2)) on (-1, 1),
    normalized to unit integral."""
    global _KERNEL_NORM
    if _KERNEL_NORM is None:
        from scipy.integrate import quad
        _KERNEL_NORM = quad(lambda v: np.exp(-1.0 / (1.0 - v * v)),
                            -1.0, 1.0, points=[0.0])[0]
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    with np.errstate(under="ignore"):
        out[inside] = np.exp(-1.0 / (1.0 - ui * ui)) / _KERNEL_NORM
    return out


def mollify(mu: DiscreteMeasure, epsilon: float, grid: Grid) -> np.ndarray:
    """Density of mu convolved with the width-epsilon bump kernel, sampled on
    the grid and renormalized so the trapezoid mass equals mass(mu) exactly
    (kernel truncation at the boundary would otherwise leak mass)."""
    if epsilon <= 0.0:
        raise DomainError(f"mollification width must be positive, "
                          f"got {epsilon}")
    if grid.h > epsilon / 4.0 + 1e-15:
        raise ResolutionError(
            f"grid spacing h={grid.h:g} too coarse for epsilon={epsilon:g}; "
            f"need h <= epsilon/4 = {epsilon / 4.0:g}")
    x = grid.nodes
    out = np.zeros(grid.n_nodes)
    for pos, w in zip(mu.positions, mu.weights):
        if w == 0.0:
            continue
        out += (w / epsilon) * bump_kernel((x - pos) / epsilon)
    target = mu.mass
    if target == 0.0:
        return out
    got = float(grid.trapezoid_weights @ out)
    if got <= 0.0:
        raise NumericsError("mollified density lost all mass on the grid; "
                            "atoms may lie outside the domain")
    return out * (target / got)


def concentration_stats(density, grid: Grid, center_indices, window: float):
    """Fraction of the density's mass within ``window`` of any center node.

    The windowed mass is a trapezoid integral over each contiguous node block
    (half weights at block edges), so a uniform density on [0,1] with a
    single window [0.4, 0.6] scores exactly 0.2.
    """
    if window <= 0.0:
        raise DomainError(f"window must be positive, got {window}")
    density = np.asarray(density, dtype=float)
    if density.shape != (grid.n_nodes,):
        raise ShapeError(f"density has shape {density.shape}, grid expects "
                         f"({grid.n_nodes},)")
    total = float(grid.trapezoid_weights @ density)
    if total <= 0.0:
        raise DomainError("concentration fraction undefined for zero mass")
    x = grid.nodes
    mask = np.zeros(grid.n_nodes, dtype=bool)
    for i in center_indices:
        mask |= np.abs(x - x[int(i)]) <= window + 1e-12
    inside = 0.0
    # integrate block-by-block so window edges carry half trapezoid weight
    j = 0
    while j < grid.n_nodes:
        if not mask[j]:
            j += 1
            continue
        k = j
        while k + 1 < grid.n_nodes and mask[k + 1]:
            k += 1
        if k == j:
            inside += grid.h * density[j]  # isolated node: midpoint cell
        else:
            block_w = np.full(k - j + 1, grid.h)
            block_w[0] = block_w[-1] = grid.h / 2.0
            inside += float(block_w @ density[j:k + 1])
        j = k + 1
    return min(inside / total, 1.0)


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def write_measure(path, mu: DiscreteMeasure):
    with open(path, "w") as fh:
        fh.write("position,weight\n")
        for x, w in zip(mu.positions, mu.weights):
            fh.write(f"{format(x, '.12g')},{format(w, '.12g')}\n")


def read_measure(path) -> DiscreteMeasure:
    positions, weights = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1 and line.lower().replace(" ", "") == \
                    "position,weight":
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected "
                                  f"'position,weight', got {line!r}")
            try:
                positions.append(float(parts[0]))
                weights.append(float(parts[1]))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric entry "
                                  f"in {line!r}") from None
    if not positions:
        return DiscreteMeasure.zero()
    return DiscreteMeasure(positions, weights)


def write_density(path, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    with open(path, "w") as fh:
        fh.write("x,u\n")
        for xi, ui in zip(x, u):
            fh.write(f"{format(xi, '.12g')},{format(ui, '.12g')}\n")
