import numpy as np
import pytest

from clonedyn import (DomainError, FiniteCloneState, Grid, ModelParams,
                      PopulationState, SelfRenewalProfile, ShapeError,
                      argmax_set, eval_profile, profile_on_grid, signal)


# ---------------------------------------------------------------- parameters

def test_params_positive():
    ModelParams(p=1.0, d=0.2, K=0.01)
    for bad in ({"p": 0.0, "d": 0.2, "K": 0.01},
                {"p": 1.0, "d": -1.0, "K": 0.01},
                {"p": 1.0, "d": 0.2, "K": 0.0}):
        with pytest.raises(DomainError):
            ModelParams(**bad)


def test_signal_formula():
    params = ModelParams(p=1.0, d=0.2, K=0.01)
    assert signal(0.0, params) == 1.0
    assert signal(100.0, params) == pytest.approx(0.5, abs=1e-15)
    arr = signal(np.array([0.0, 100.0, 300.0]), params)
    assert arr[2] == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(DomainError):
        signal(-1.0, params)


# ---------------------------------------------------------------------- grid

def test_grid_nodes_and_weights():
    grid = Grid(0.0, 1.0, 5)
    assert grid.h == pytest.approx(0.25)
    assert np.allclose(grid.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    w = grid.trapezoid_weights
    # half weights at the ends, total weight = interval length
    assert w[0] == pytest.approx(grid.h / 2.0)
    assert w[2] == pytest.approx(grid.h)
    assert w.sum() == pytest.approx(1.0)


def test_grid_index_of():
    grid = Grid(0.0, 1.0, 101)
    assert grid.index_of(0.5) == 50
    assert grid.index_of(0.503) == 50
    assert grid.index_of(1.0) == 100


def test_grid_validation():
    with pytest.raises(DomainError):
        Grid(1.0, 0.0, 11)
    with pytest.raises(DomainError):
        Grid(0.0, 1.0, 1)


def test_grid_arrays_read_only():
    grid = Grid(0.0, 1.0, 11)
    with pytest.raises(ValueError):
        grid.nodes[0] = 5.0
    with pytest.raises(ValueError):
        grid.trapezoid_weights[0] = 5.0


# ------------------------------------------------------------------- profile

def test_constant_profile():
    prof = SelfRenewalProfile.constant(0.75)
    x = np.linspace(0.0, 1.0, 7)
    assert np.all(eval_profile(prof, x) == 0.75)


def test_single_bump_peak_and_floor():
    prof = SelfRenewalProfile.single_bump(0.9, 0.55, 0.5, 0.05)
    assert eval_profile(prof, 0.5) == pytest.approx(0.9, abs=1e-15)
    # outside the support the profile sits exactly at the floor
    assert eval_profile(prof, 0.2) == 0.55
    assert eval_profile(prof, 0.8) == 0.55
    vals = eval_profile(prof, np.linspace(0, 1, 101))
    assert np.all(vals >= 0.55) and np.all(vals <= 0.9)


def test_two_bump_profile():
    prof = SelfRenewalProfile.two_bump(0.9, 0.55, (0.3, 0.7), (0.05, 0.05))
    assert eval_profile(prof, 0.3) == pytest.approx(0.9, abs=1e-15)
    assert eval_profile(prof, 0.7) == pytest.approx(0.9, abs=1e-15)
    assert eval_profile(prof, 0.5) == 0.55


def test_two_bump_overlap_rejected():
    with pytest.raises(DomainError):
        SelfRenewalProfile.two_bump(0.9, 0.55, (0.4, 0.5), (0.1, 0.1))


def test_profile_range_enforced():
    with pytest.raises(DomainError):
        SelfRenewalProfile.constant(0.5)      # boundary excluded
    with pytest.raises(DomainError):
        SelfRenewalProfile.constant(1.0)
    with pytest.raises(DomainError):
        SelfRenewalProfile.single_bump(0.9, 0.4, 0.5, 0.05)


def test_profile_domain_enforced():
    prof = SelfRenewalProfile.single_bump(0.9, 0.55, 0.5, 0.05)
    with pytest.raises(DomainError):
        eval_profile(prof, 1.5)


def test_piecewise_linear_interpolates():
    prof = SelfRenewalProfile.piecewise_linear([0.0, 0.5, 1.0],
                                               [0.6, 0.9, 0.6])
    assert eval_profile(prof, 0.25) == pytest.approx(0.75, abs=1e-12)


def test_tabulated_matches_nodes():
    xs = np.linspace(0.0, 1.0, 11)
    vals = 0.6 + 0.2 * np.sin(np.pi * xs) ** 2
    prof = SelfRenewalProfile.tabulated(xs, vals)
    assert np.allclose(eval_profile(prof, xs), vals, atol=1e-12)


def test_profile_on_grid_matches_eval():
    prof = SelfRenewalProfile.single_bump(0.9, 0.55, 0.5, 0.05)
    grid = Grid(0.0, 1.0, 201)
    assert np.array_equal(profile_on_grid(prof, grid),
                          eval_profile(prof, grid.nodes))


def test_argmax_set_single_peak():
    prof = SelfRenewalProfile.single_bump(0.9, 0.55, 0.5, 0.05)
    grid = Grid(0.0, 1.0, 201)
    idx = argmax_set(prof, grid)
    assert list(idx) == [100]
    assert grid.nodes[idx[0]] == pytest.approx(0.5)


def test_argmax_set_constant_profile_is_everything():
    prof = SelfRenewalProfile.constant(0.8)
    grid = Grid(0.0, 1.0, 11)
    assert len(argmax_set(prof, grid)) == 11


def test_argmax_set_two_peaks():
    prof = SelfRenewalProfile.two_bump(0.9, 0.55, (0.3, 0.7), (0.05, 0.05))
    grid = Grid(0.0, 1.0, 201)
    idx = list(argmax_set(prof, grid))
    assert idx == [60, 140]


# -------------------------------------------------------------------- states

def test_population_state_validation():
    u = np.ones(5)
    st = PopulationState(0.0, u, u)
    assert st.n_nodes == 5
    with pytest.raises(DomainError):
        PopulationState(0.0, -u, u)
    with pytest.raises(ShapeError):
        PopulationState(0.0, u, np.ones(4))


def test_finite_state_validation_and_signal():
    st = FiniteCloneState(0.0, 10.0, 5.0, [1.0], [2.0],
                          a_c=0.9, p_c=1.0, d_c=0.2,
                          a_l=[0.7], p_l=[1.0], d_l=[0.2],
                          K_c=0.01, K_l=0.02)
    assert st.n_clones == 1
    assert st.signal_value() == pytest.approx(1.0 / (1.0 + 0.05 + 0.04))
    with pytest.raises(DomainError):
        FiniteCloneState(0.0, -1.0, 5.0, [], [], a_c=0.9, p_c=1.0,
                         d_c=0.2, a_l=[], p_l=[], d_l=[], K_c=0.01,
                         K_l=0.02)
    with pytest.raises(DomainError):
        FiniteCloneState(0.0, 1.0, 5.0, [], [], a_c=1.5, p_c=1.0,
                         d_c=0.2, a_l=[], p_l=[], d_l=[], K_c=0.01,
                         K_l=0.02)
