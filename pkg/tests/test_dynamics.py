import math

import numpy as np
import pytest

from clonedyn import (BlowupError, ConfigError, Grid, IntegratorConfig,
                      ModelParams, NegativityError, Observer,
                      PopulationState, SelfRenewalProfile, integrate,
                      rhs_continuum, rhs_two_compartment, simulate_continuum,
                      simulate_finite, simulate_two_compartment, total_mass)
from clonedyn.core import FiniteCloneState

PARAMS = ModelParams(p=1.0, d=0.2, K=0.01)


def test_total_mass_trapezoid_hand_value():
    # 1000 x^2 on three nodes {0, 1/2, 1}: 0.5*(0/2 + 250 + 1000/2) = 375
    grid = Grid(0.0, 1.0, 3)
    u = 1000.0 * grid.nodes ** 2
    assert total_mass(u, grid) == pytest.approx(375.0, abs=1e-12)


def test_integrator_config_validation():
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=-0.1, t_end=1.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_end=0.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_end=1.0, snapshot_times=(2.0,))
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_end=1.0, method="euler")
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_end=1.0, record_every=0)


# --------------------------------------------------------------- rhs algebra

def test_rhs_continuum_signs():
    grid = Grid(0.0, 1.0, 11)
    prof = SelfRenewalProfile.constant(0.9)
    u1 = np.full(11, 10.0)
    u2 = np.zeros(11)
    st = PopulationState(0.0, u1, u2)
    du1, du2 = rhs_continuum(st, PARAMS, prof, grid)
    # empty mature compartment: s = 1, growth at rate (2a-1)p
    assert np.allclose(du1, (2 * 0.9 - 1) * 10.0)
    assert np.allclose(du2, 2 * (1 - 0.9) * 10.0)


def test_rhs_two_compartment_matches_continuum_constant_a():
    grid = Grid(0.0, 1.0, 41)
    prof = SelfRenewalProfile.constant(0.75)
    u1 = np.full(41, 3.0)
    u2 = np.full(41, 7.0)
    st = PopulationState(0.0, u1, u2)
    du1, du2 = rhs_continuum(st, PARAMS, prof, grid)
    rho1 = total_mass(u1, grid)
    rho2 = total_mass(u2, grid)
    dv1, dv2 = rhs_two_compartment(rho1, rho2, 0.75, PARAMS)
    assert total_mass(du1, grid) == pytest.approx(dv1, rel=1e-14)
    assert total_mass(du2, grid) == pytest.approx(dv2, rel=1e-14)


# ----------------------------------------------------------------- integrate

def test_pure_decay_matches_exponential():
    # v1 = 0 decouples v2: dv2/dt = -d v2
    traj = integrate(lambda v1, v2: rhs_two_compartment(v1, v2, 0.75,
                                                        PARAMS),
                     (0.0, 1.0), IntegratorConfig(dt=0.01, t_end=1.0),
                     params=PARAMS)
    assert traj.rho2[-1] == pytest.approx(math.exp(-0.2), abs=1e-10)
    assert traj.rho1[-1] == 0.0


def test_rk4_step_halving_fourth_order():
    def final(dt):
        traj = simulate_two_compartment(30.0, 10.0, 0.9, PARAMS,
                                        IntegratorConfig(dt=dt, t_end=10.0))
        return traj.rho2[-1]

    ref = final(0.1 / 256)
    errors = [abs(final(dt) - ref) for dt in (0.1, 0.05, 0.025)]
    ratios = [errors[i] / errors[i + 1] for i in range(2)]
    assert all(12.0 < r < 20.0 for r in ratios), ratios


def test_fractional_final_step():
    traj = integrate(lambda v1, v2: (0.0, -0.2 * v2), (0.0, 1.0),
                     IntegratorConfig(dt=0.3, t_end=1.0), params=PARAMS)
    assert traj.times[-1] == pytest.approx(1.0, abs=1e-14)
    assert traj.rho2[-1] == pytest.approx(math.exp(-0.2), abs=1e-7)


def test_record_every_thins_samples():
    cfg = IntegratorConfig(dt=0.01, t_end=1.0, record_every=10)
    traj = simulate_two_compartment(1.0, 0.1, 0.75, PARAMS, cfg)
    assert traj.n_samples == 11
    assert traj.times[1] == pytest.approx(0.1)


def test_blowup_raises_with_last_time():
    # RK4 amplification for dv/dt = -d v at d*dt = 10 exceeds 1, so the
    # iteration diverges to overflow
    with pytest.raises(BlowupError) as err:
        integrate(lambda v1, v2: (0.0, -1.0 * v2), (0.0, 1.0),
                  IntegratorConfig(dt=10.0, t_end=1e5), params=PARAMS)
    assert err.value.t_last is not None


def test_negativity_raises_and_suggests_smaller_dt():
    with pytest.raises(NegativityError) as err:
        integrate(lambda v1, v2: (-100.0, 0.0), (1.0, 1.0),
                  IntegratorConfig(dt=0.1, t_end=1.0), params=PARAMS)
    assert "reduce dt" in str(err.value)


def test_tiny_undershoot_clamped_to_zero():
    # a right-hand side that lands the state at -1e-13: inside tolerance,
    # clamped, integration continues
    def rhs(v1, v2):
        return (-(1.0 + 1e-13), 0.0)

    traj = integrate(rhs, (1.0, 1.0), IntegratorConfig(dt=1.0, t_end=1.0),
                     params=PARAMS)
    assert traj.rho1[-1] == 0.0


def test_snapshots_at_requested_times():
    grid = Grid(0.0, 1.0, 21)
    prof = SelfRenewalProfile.single_bump(0.9, 0.55, 0.5, 0.2)
    u1 = np.full(21, 10.0)
    u2 = np.full(21, 1.0)
    cfg = IntegratorConfig(dt=0.01, t_end=2.0, snapshot_times=(0.0, 1.0, 2.0))
    traj = simulate_continuum(u1, u2, PARAMS, prof, grid, cfg)
    assert [s.t for s in traj.snapshots] == pytest.approx([0.0, 1.0, 2.0])
    assert np.array_equal(traj.snapshots[0].u1, u1)


def test_observers_stride_and_nan_gaps():
    calls = []

    def probe(t, state):
        calls.append(t)
        return state.v1

    cfg = IntegratorConfig(dt=0.1, t_end=1.0)
    traj = simulate_two_compartment(1.0, 0.1, 0.75, PARAMS, cfg,
                                    observers=(Observer("probe", probe,
                                                        every=5),))
    col = traj.extras["probe"]
    assert len(col) == traj.n_samples == 11
    recorded = np.isfinite(col)
    # every 5th recorded sample plus the final one
    assert list(np.flatnonzero(recorded)) == [0, 5, 10]
    assert len(calls) == 3


def test_mass_identities_along_run():
    # d(rho1)/dt = (2 a s - 1) p rho1 for constant a: cross-check the
    # recorded signal column against the mass ODE via finite differences
    params = ModelParams(p=1.0, d=0.5, K=0.1)
    traj = simulate_two_compartment(4.0, 2.0, 0.8, params,
                                    IntegratorConfig(dt=0.001, t_end=2.0))
    mid = slice(1, -1)
    drho1 = np.gradient(traj.rho1, traj.times)
    expected = (2 * 0.8 * traj.s - 1.0) * params.p * traj.rho1
    err = np.abs(drho1[mid] - expected[mid]).max()
    assert err < 5e-4 * np.abs(expected).max()


def test_finite_reduces_to_two_compartment_without_leukemic_clones():
    params = ModelParams(p=1.0, d=0.2, K=0.01)
    st = FiniteCloneState(0.0, 8.0, 3.0, [], [], a_c=0.9, p_c=1.0, d_c=0.2,
                          a_l=[], p_l=[], d_l=[], K_c=0.01, K_l=0.01)
    cfg = IntegratorConfig(dt=0.01, t_end=10.0)
    tf = simulate_finite(st, cfg)
    tc = simulate_two_compartment(8.0, 3.0, 0.9, params, cfg)
    assert tf.rho1[-1] == pytest.approx(tc.rho1[-1], rel=1e-12)
    assert tf.rho2[-1] == pytest.approx(tc.rho2[-1], rel=1e-12)


def test_trajectory_csv_roundtrip_and_determinism(tmp_path):
    cfg = IntegratorConfig(dt=0.01, t_end=1.0, record_every=10)
    paths = []
    for tag in ("a", "b"):
        traj = simulate_two_compartment(1.0, 0.1, 0.75, PARAMS, cfg)
        path = tmp_path / f"{tag}.csv"
        traj.to_csv(path)
        paths.append(path)
    data_a = paths[0].read_bytes()
    assert data_a == paths[1].read_bytes()
    header = data_a.decode().splitlines()[0]
    assert header == "t,rho1,rho2,s"
    body = np.genfromtxt(paths[0], delimiter=",", skip_header=1)
    assert body.shape == (11, 4)


def test_metadata_carries_run_context():
    grid = Grid(0.0, 1.0, 11)
    prof = SelfRenewalProfile.single_bump(0.9, 0.55, 0.5, 0.2)
    traj = simulate_continuum(np.full(11, 1.0), np.zeros(11), PARAMS, prof,
                              grid, IntegratorConfig(dt=0.1, t_end=0.5))
    assert traj.metadata["variant"] == "continuum"
    assert traj.metadata["a_bar"] == pytest.approx(0.9, abs=1e-9)
    assert traj.metadata["params"] is PARAMS
