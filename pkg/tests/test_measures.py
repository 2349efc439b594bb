import numpy as np
import pytest
from scipy.integrate import quad

from clonedyn import (ConfigError, DiscreteMeasure, DomainError, Grid,
                      MassMismatchError, ResolutionError, bump_kernel,
                      concentration_stats, flat_metric, flat_upper_bound,
                      mollify, read_measure, wasserstein1, write_measure)


# ------------------------------------------------------------------ measures

def test_measure_mass_and_collapse():
    mu = DiscreteMeasure([0.5, 0.5, 1.0], [1.0, 2.0, 3.0])
    assert mu.mass == pytest.approx(6.0)
    col = mu.collapsed()
    assert list(col.positions) == [0.5, 1.0]
    assert list(col.weights) == [3.0, 3.0]


def test_from_density_uses_quadrature_weights():
    grid = Grid(0.0, 1.0, 5)
    mu = DiscreteMeasure.from_density(np.full(5, 2.0), grid)
    assert mu.mass == pytest.approx(2.0)
    assert mu.weights[0] == pytest.approx(2.0 * grid.h / 2.0)


def test_normalized_rejects_zero_mass():
    with pytest.raises(DomainError):
        DiscreteMeasure.zero().normalized()


# --------------------------------------------------------------- flat metric

def test_flat_dirac_pairs_min_h_2():
    for h in (0.1, 0.5, 1.0, 2.0, 3.0):
        d = flat_metric(DiscreteMeasure.dirac(0.0),
                        DiscreteMeasure.dirac(h))
        assert d == pytest.approx(min(h, 2.0), abs=1e-9), h


def test_flat_mass_difference_same_point():
    d = flat_metric(DiscreteMeasure.dirac(1.0, 3.0),
                    DiscreteMeasure.dirac(1.0, 1.0))
    assert d == pytest.approx(2.0, abs=1e-12)


def test_flat_identity_and_symmetry():
    mu = DiscreteMeasure([0.0, 1.0, 2.5], [1.0, 0.5, 2.0])
    nu = DiscreteMeasure([0.3, 1.7], [1.5, 1.5])
    assert flat_metric(mu, mu) == pytest.approx(0.0, abs=1e-12)
    assert flat_metric(mu, nu) == pytest.approx(flat_metric(nu, mu),
                                                abs=1e-10)


def test_flat_triangle_inequality():
    rng = np.random.default_rng(11)
    for _ in range(20):
        ms = [DiscreteMeasure(rng.uniform(-2, 2, 4), rng.uniform(0, 2, 4))
              for _ in range(3)]
        d02 = flat_metric(ms[0], ms[2])
        d01 = flat_metric(ms[0], ms[1])
        d12 = flat_metric(ms[1], ms[2])
        assert d02 <= d01 + d12 + 1e-9


def test_flat_zero_against_empty_measure():
    mu = DiscreteMeasure.dirac(0.0, 1.5)
    assert flat_metric(mu, DiscreteMeasure.zero()) == pytest.approx(
        1.5, abs=1e-12)
    assert flat_metric(DiscreteMeasure.zero(), DiscreteMeasure.zero()) == 0.0


# ------------------------------------------------------------- wasserstein-1

def test_w1_dirac_pair():
    d = wasserstein1(DiscreteMeasure.dirac(0.0), DiscreteMeasure.dirac(0.5))
    assert d == pytest.approx(0.5, abs=1e-14)


def test_w1_uniform_density_vs_central_dirac():
    # CDFs cross at the midpoint node: integral |x - step| = 2 * (1/8)
    grid = Grid(0.0, 1.0, 201)
    mu = DiscreteMeasure.from_density(np.ones(201), grid)
    nu = DiscreteMeasure.dirac(0.5)
    assert wasserstein1(mu, nu) == pytest.approx(0.25, abs=1e-12)


def test_w1_translation_covariance():
    rng = np.random.default_rng(5)
    mu = DiscreteMeasure(rng.uniform(0, 1, 5),
                         rng.uniform(0, 1, 5)).normalized()
    nu = DiscreteMeasure(rng.uniform(0, 1, 4),
                         rng.uniform(0, 1, 4)).normalized()
    base = wasserstein1(mu, nu)
    assert wasserstein1(mu.shifted(2.0), nu.shifted(2.0)) == pytest.approx(
        base, abs=1e-12)


def test_w1_requires_probability_measures():
    with pytest.raises(MassMismatchError):
        wasserstein1(DiscreteMeasure.dirac(0.0, 2.0),
                     DiscreteMeasure.dirac(1.0, 1.0))


def test_flat_below_w1_and_upper_bound():
    rng = np.random.default_rng(6)
    for _ in range(20):
        mu = DiscreteMeasure(rng.uniform(-1, 1, 4),
                             rng.uniform(0.1, 1, 4))
        nu = DiscreteMeasure(rng.uniform(-1, 1, 3),
                             rng.uniform(0.1, 1, 3))
        d_flat = flat_metric(mu, nu)
        assert d_flat <= flat_upper_bound(mu, nu) + 1e-9
        if abs(mu.mass - nu.mass) < 1e-12:
            w1 = mu.mass * wasserstein1(mu.normalized(), nu.normalized())
            assert d_flat <= w1 + 1e-9


# -------------------------------------------------------------- mollifier

def test_bump_kernel_unit_mass_and_support():
    val, _ = quad(bump_kernel, -1.0, 1.0)
    assert val == pytest.approx(1.0, abs=1e-10)
    assert bump_kernel(1.0) == 0.0
    assert bump_kernel(-1.2) == 0.0
    assert bump_kernel(0.0) > bump_kernel(0.5) > 0.0


def test_mollify_preserves_mass_exactly():
    grid = Grid(0.0, 1.0, 201)
    mu = DiscreteMeasure([0.3, 0.6], [2.0, 5.0])
    dens = mollify(mu, 0.05, grid)
    assert float(grid.trapezoid_weights @ dens) == pytest.approx(
        7.0, abs=1e-12)
    assert np.all(dens >= 0.0)


def test_mollify_support_and_symmetry():
    grid = Grid(0.0, 1.0, 401)
    dens = mollify(DiscreteMeasure.dirac(0.5), 0.1, grid)
    x = grid.nodes
    assert np.all(dens[np.abs(x - 0.5) > 0.1 + 1e-12] == 0.0)
    assert np.allclose(dens, dens[::-1], atol=1e-12)


def test_mollify_shrinks_flat_distance():
    grid = Grid(0.0, 1.0, 401)
    mu = DiscreteMeasure.dirac(0.5)
    dists = []
    for eps in (0.2, 0.1, 0.05):
        nu = DiscreteMeasure.from_density(mollify(mu, eps, grid), grid)
        dists.append(flat_metric(mu, nu))
    assert dists[0] > dists[1] > dists[2]
    assert dists[2] <= 0.05


def test_mollify_resolution_guard():
    grid = Grid(0.0, 1.0, 11)  # h = 0.1
    with pytest.raises(ResolutionError):
        mollify(DiscreteMeasure.dirac(0.5), 0.2, grid)  # needs h <= 0.05


# ------------------------------------------------------------- concentration

def test_concentration_uniform_density_exact():
    grid = Grid(0.0, 1.0, 101)
    dens = np.ones(101)
    frac = concentration_stats(dens, grid, [50], 0.1)
    assert frac == pytest.approx(0.2, abs=1e-12)


def test_concentration_all_mass_in_window():
    grid = Grid(0.0, 1.0, 101)
    dens = np.zeros(101)
    dens[48:53] = 7.0
    frac = concentration_stats(dens, grid, [50], 5 * grid.h)
    assert frac == pytest.approx(1.0, abs=1e-12)


def test_concentration_two_windows():
    grid = Grid(0.0, 1.0, 101)
    dens = np.ones(101)
    frac = concentration_stats(dens, grid, [25, 75], 0.1)
    assert frac == pytest.approx(0.4, abs=1e-12)


# --------------------------------------------------------------- serializers

def test_measure_csv_roundtrip(tmp_path):
    mu = DiscreteMeasure([0.25, 0.75], [1.5, 2.5])
    path = tmp_path / "mu.csv"
    write_measure(path, mu)
    back = read_measure(path)
    assert np.array_equal(back.positions, mu.positions)
    assert np.array_equal(back.weights, mu.weights)


def test_read_measure_reports_bad_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("position,weight\n0.5,1.0\noops\n")
    with pytest.raises(ConfigError, match="3"):
        read_measure(path)
