import math

import numpy as np
import pytest

from densym.errors import DomainError, InvalidModel, NonFiniteState
from densym.mc import (BumpDensity, MCConfig, derived_seed, estimate_expectation, estimate_q, estimate_q_grid,
                       simulate_paths, splitmix64)
from densym.model import build_transformed, custom, heston
from densym.speed import SpeedDensity


def brownian_z():
    # Z_T = z0 + W_T exactly; Y is a CIR that never matters for Z
    return custom("0.2 - r", "0", "sqrt(r)", "1", 0.0)


def test_splitmix_reference_values():
    # reference outputs of the splitmix64 generator seeded at 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert derived_seed(5, 0) == 5 ^ 0xE220A8397B1DCDAF


def test_config_validation():
    with pytest.raises(InvalidModel):
        MCConfig(10, 5, n_streams=3)
    with pytest.raises(InvalidModel):
        MCConfig(0, 5)
    with pytest.raises(InvalidModel):
        MCConfig(10, 5, scheme="milstein")


def test_gaussian_oracle_for_z():
    cfg = MCConfig(100_000, 20, seed=3)
    s = simulate_paths(brownian_z(), (0.5, 1.0), cfg)
    dz = s.z - 1.0
    assert abs(dz.mean()) <= 3 * math.sqrt(1.0 / 1e5)
    assert dz.var(ddof=1) == pytest.approx(1.0, rel=0.02)
    assert np.all(s.y >= 0)


def test_indicator_half():
    est = estimate_expectation(brownian_z(), lambda y, z: (z <= 0.0).astype(float), (0.3, 0.0),
                               MCConfig(50_000, 10, seed=9))
    assert abs(est.value - 0.5) <= 3 * est.std_error


def test_constant_payoffs(desk):
    cfg = MCConfig(1000, 10, seed=1)
    for c in (0.0, 1.0):
        est = estimate_expectation(desk, lambda y, z: c, (0.2, 0.0), cfg)
        assert est.value == c and est.std_error == 0.0


def test_determinism_and_stream_invariance(desk):
    cfg = MCConfig(200_000, 25, seed=42)
    a = simulate_paths(desk, (1.0, 0.0), cfg)
    b = simulate_paths(desk, (1.0, 0.0), cfg)
    c = simulate_paths(desk, (1.0, 0.0), cfg.replace(n_streams=8))
    assert np.array_equal(a.y, b.y) and np.array_equal(a.z, b.z)
    assert np.array_equal(a.y, c.y) and np.array_equal(a.z, c.z)
    d = simulate_paths(desk, (1.0, 0.0), cfg.replace(seed=43))
    assert not np.array_equal(a.y, d.y)


def test_clt_scaling(desk):
    ratios = []
    for k in range(5):
        g = lambda y, z: y
        small = estimate_expectation(desk, g, (0.2, 0.0), MCConfig(4000, 10, seed=k))
        big = estimate_expectation(desk, g, (0.2, 0.0), MCConfig(16000, 10, seed=100 + k))
        ratios.append(big.std_error / small.std_error)
    assert all(0.4 <= r <= 0.6 for r in ratios)


def test_validation_errors(desk):
    cfg = MCConfig(100, 5)
    with pytest.raises(DomainError):
        simulate_paths(desk, (-0.1, 0.0), cfg)
    with pytest.raises(InvalidModel):
        simulate_paths(custom("0.1", "0", "0*r", "1", 0.0), (0.1, 0.0), cfg)


def test_non_finite_state_reports_step_and_path():
    m = custom("0.1 + exp(exp(r))", "0", "sqrt(r)", "1", 0.0)
    with pytest.raises(NonFiniteState, match=r"step \d+, path \d+"):
        simulate_paths(m, (3.0, 0.0), MCConfig(10, 50))


def test_bump_density_mass_and_sampling():
    rho = BumpDensity(0.5, 0.2, -0.1, 0.4)
    assert rho.mass() == pytest.approx(1.0, abs=1e-6)
    y, z = rho.sample(np.random.default_rng(0), 50_000)
    lo_y, hi_y, lo_z, hi_z = rho.support
    assert y.min() > lo_y and y.max() < hi_y and z.min() > lo_z and z.max() < hi_z
    assert y.mean() == pytest.approx(0.5, abs=3e-3) and z.mean() == pytest.approx(-0.1, abs=6e-3)
    with pytest.raises(InvalidModel):
        BumpDensity(0.1, 0.2, 0.0, 1.0)


def test_q_disjoint_support_and_domain(desk, desk_t, desk_sd):
    rho = BumpDensity(2.5, 0.5, 0.0, 0.5)
    m = heston(0.1, 5.0, 0.3, -0.5, horizon_T=0.05)
    est = estimate_q(build_transformed(m), SpeedDensity(m), rho, (0.1, 0.0), MCConfig(20_000, 20, seed=1))
    assert abs(est.value) <= 3 * est.std_error + 1e-300
    with pytest.raises(DomainError):
        estimate_q(desk_t, desk_sd, rho, (0.0, 0.0), MCConfig(10, 1))


def test_q_short_time_limit():
    m = heston(0.1, 0.5, 0.3, -0.5, horizon_T=1e-4)
    rho = BumpDensity(0.4, 0.2, 0.0, 0.5)
    est = estimate_q(build_transformed(m), SpeedDensity(m), rho, (0.4, 0.0), MCConfig(20_000, 1, seed=4))
    assert est.value == pytest.approx(rho.peak, rel=0.05)


def test_q_seed_consistency_and_nonnegativity(desk_t, desk_sd):
    rho = BumpDensity(0.2, 0.1, 0.0, 0.3)
    a = estimate_q(desk_t, desk_sd, rho, (0.22, -0.05), MCConfig(40_000, 50, seed=1))
    b = estimate_q(desk_t, desk_sd, rho, (0.22, -0.05), MCConfig(40_000, 50, seed=2))
    assert abs(a.value - b.value) <= 3 * math.hypot(a.std_error, b.std_error)
    assert a.value >= -3 * a.std_error


def test_q_grid_matches_pointwise_rows(desk_t, desk_sd):
    rho = BumpDensity(0.2, 0.1, 0.0, 0.3)
    cfg = MCConfig(5000, 20, seed=7)
    vals, errs = estimate_q_grid(desk_t, desk_sd, rho, [0.15, 0.25], [-0.1, 0.0, 0.1], cfg)
    assert vals.shape == errs.shape == (2, 3)
    assert np.all(vals >= 0) and np.all(errs >= 0)
    row_cfg = cfg.replace(seed=derived_seed(cfg.seed, (1 << 32) + 1))
    point = estimate_q(desk_t, desk_sd, rho, (0.25, 0.0), row_cfg)
    assert vals[1, 1] == pytest.approx(point.value, rel=1e-12)
