import math

import numpy as np
import pytest

from densym import verify as V
from densym.errors import DegenerateSamples, DomainError, StepTooLarge, SupportEscape
from densym.mc import BumpDensity, MCConfig, TerminalSamples
from densym.model import build_transformed, cir_rate_logprice, custom, heston
from densym.speed import SpeedDensity


# --- chain oracle -------------------------------------------------------------

def test_two_state_chain():
    chain = V.ChainOracle(np.array([1.0, 2.0]), np.array([[-2.0, 2.0], [3.0, -3.0]]), np.array([1.0, 2 / 3]))
    assert V.chain_symmetry_check(None, 2, 0.7, chain=chain) <= 1e-14


def test_cir_chain_detailed_balance(desk):
    chain = V.build_chain(desk, 100)
    assert np.max(np.abs(chain.generator.sum(axis=1))) <= 1e-13 * max(1.0, np.abs(chain.generator).max())
    off = chain.generator - np.diag(np.diag(chain.generator))
    assert np.all(off >= 0) and np.count_nonzero(np.triu(off, 2)) == 0
    for t in (0.1, 1.0):
        assert V.chain_symmetry_check(desk, 100, t, chain=chain) <= 1e-12


@pytest.mark.parametrize("model", [
    heston(0.02, 1.5, 0.4, 0.3),
    cir_rate_logprice(0.05, 0.8, 0.25, nu=0.2),
    custom("0.3 - r^2", "0", "sqrt(2*r)", "1", 0.0),
    custom("0.1", "0", "r/(1 + r)", "1", 0.0, r_max=5.0),
])
@pytest.mark.parametrize("t", [0.1, 1.0])
def test_chain_symmetry_for_valid_models(model, t):
    assert V.chain_symmetry_check(model, 200, t) <= 1e-12


def test_chain_weights_approximate_speed_density(desk, desk_sd):
    chain = V.build_chain(desk, 200, r_max=2.0)
    i = np.arange(10, 200, 19)
    for a, b in zip(i[:-1], i[1:]):
        expected = desk_sd.mu_ratio(chain.states[a], chain.states[b])
        assert chain.m[a] / chain.m[b] == pytest.approx(expected, rel=0.01)


def test_chain_state_cap(desk):
    with pytest.raises(ValueError):
        V.chain_symmetry_check(desk, 401, 1.0)


# --- KDE ------------------------------------------------------------------------

def test_kde_single_sample():
    h = 0.3
    est, _ = V.kde_density((np.array([0.5]), np.array([-1.0])), [(0.5, -1.0)], bandwidth=(h, h))
    assert est[0] == pytest.approx(1 / (2 * math.pi * h * h), rel=1e-14)


@pytest.fixture(scope="module")
def normal_pairs():
    rng = np.random.default_rng(12)
    return TerminalSamples(rng.standard_normal(100_000), rng.standard_normal(100_000), 12)


def test_kde_gaussian_oracle(normal_pairs):
    est, unc = V.kde_density(normal_pairs, [(0.0, 0.0)])
    assert est[0] == pytest.approx(1 / (2 * math.pi), rel=0.05)
    assert 0 < unc[0] < 0.05 * est[0]


def test_kde_far_point(normal_pairs):
    hy, hz = V.silverman_bandwidth(normal_pairs.y, normal_pairs.z)
    far = normal_pairs.y.max() + 10 * hy
    est, _ = V.kde_density(normal_pairs, [(far, 0.0)])
    assert est[0] <= 1e-8


def test_kde_integrates_to_one(normal_pairs):
    ys = np.linspace(-6, 6, 61)
    pts = [(y, z) for y in ys for z in ys]
    est, _ = V.kde_density(normal_pairs, pts)
    total = np.trapezoid(np.trapezoid(est.reshape(61, 61), ys, axis=1), ys)
    assert total == pytest.approx(1.0, abs=0.02)


def test_kde_field_max(normal_pairs):
    bw = V.silverman_bandwidth(normal_pairs.y, normal_pairs.z)
    assert V.kde_field_max(normal_pairs, bw) == pytest.approx(1 / (2 * math.pi), rel=0.08)


def test_kde_degenerate():
    y = np.zeros(2000)
    with pytest.raises(DegenerateSamples):
        V.kde_density((y, np.arange(2000.0)), [(0, 0)])
    with pytest.raises(DegenerateSamples):
        V.kde_density((np.arange(10.0), np.arange(10.0)), [(0, 0)])


# --- corollary ------------------------------------------------------------------

def test_corollary_identical_processes():
    # lambda = 0 and beta2 = 0: the transformed model is the model itself
    m = custom("0.5 - r", "0", "sqrt(r)", "1", 0.0)
    xi = (0.5, 0.0)
    res = V.corollary_symmetry_check(m, [(xi, xi)], MCConfig(200_000, 50, seed=5))
    se_l, se_r = res.std_errors[0]
    assert abs(res.lhs[0] - res.rhs[0]) <= 2 * (se_l + se_r)
    assert not res.flagged[0]


def test_corollary_mirrored_pairs(desk):
    xi, x = (0.2, 0.0), (0.3, 0.13)
    cfg = MCConfig(300_000, 100, seed=11)
    fwd = V.corollary_symmetry_check(desk, [(xi, x)], cfg)
    rev = V.corollary_symmetry_check(desk, [(x, xi)], cfg)
    assert fwd.passed() and rev.passed()
    assert fwd.rel_residual[0] <= 0.10 and rev.rel_residual[0] <= 0.10


def test_corollary_rejects_boundary_points(desk):
    with pytest.raises(DomainError):
        V.corollary_symmetry_check(desk, [((0.0, 0.0), (0.2, 0.0))], MCConfig(2000, 5))


def test_relative_residual_guard():
    assert V._relative(np.array([0.0]), np.array([0.0]))[0] == 0.0


# --- theorem check ---------------------------------------------------------------

def test_theorem_zero_payoff(desk):
    g = lambda y, z: 0.0 * y
    grid = V.NodeGrid(np.linspace(0.05, 0.5, 11), np.linspace(-1, 1, 11))
    chk = V.theorem1_two_way_check(desk, g, V.default_rho(desk), np.ones(grid.shape), grid, MCConfig(1000, 5))
    assert chk.lhs.value == 0.0 and chk.rhs == 0.0 and chk.passed


def test_theorem_disjoint_supports():
    m = heston(0.1, 0.5, 0.3, -0.5, horizon_T=1e-3)
    rho = BumpDensity(0.2, 0.1, 0.0, 0.1)
    g = BumpDensity(1.5, 0.2, 2.0, 0.3)
    grid = V.q_grid_for(g, 15)
    q = np.zeros(grid.shape)
    chk = V.theorem1_two_way_check(m, g, rho, q, grid, MCConfig(5000, 5, seed=1), np.zeros(grid.shape))
    assert chk.lhs.value == 0.0 and chk.rhs == 0.0 and chk.passed


def test_theorem_support_escape(desk):
    g = BumpDensity(0.3, 0.1, 0.0, 0.5)
    grid = V.NodeGrid(np.linspace(0.19, 0.41, 10), np.linspace(-1, 1, 10))
    with pytest.raises(SupportEscape):
        V.theorem1_two_way_check(desk, g, V.default_rho(desk), np.ones(grid.shape), grid, MCConfig(100, 2))


def test_integrate_against_uncertainty_rules():
    grid = V.NodeGrid(np.linspace(0, 1, 5), np.linspace(0, 2, 9))
    g = lambda y, z: np.ones_like(y)
    q = np.ones(grid.shape)
    val, unc = V.integrate_against(g, q, grid, 0.3)
    assert val == pytest.approx(2.0) and unc == 0.3
    # fully correlated along z, independent across y rows
    _, unc = V.integrate_against(g, q, grid, np.ones(grid.shape))
    wy = np.array([0.125, 0.25, 0.25, 0.25, 0.125])
    assert unc == pytest.approx(math.sqrt(np.sum((wy * 2.0) ** 2)))


# --- adjoint identity -------------------------------------------------------------

def test_adjoint_locality(desk, desk_t, desk_sd):
    v = V.polynomial_bump(1.0, 0.0, 0.2, 0.2)
    assert V.adjoint_identity_residual(desk, desk_t, desk_sd, v, (2.0, 1.0), 1e-2) == 0.0


def test_adjoint_second_order_heston(desk, desk_t, desk_sd):
    v = V.gaussian_bump(1.0, 0.0, 0.3, 0.5)
    r1 = V.adjoint_identity_residual(desk, desk_t, desk_sd, v, (1.0, 0.0), 1e-2)
    r2 = V.adjoint_identity_residual(desk, desk_t, desk_sd, v, (1.0, 0.0), 5e-3)
    assert 3.2 <= r1 / r2 <= 4.8


def test_adjoint_fails_with_literal_sign(desk, desk_sd):
    literal = build_transformed(desk, convention="literal")
    v = V.gaussian_bump(1.0, 0.0, 0.3, 0.5)
    res = [V.adjoint_identity_residual(desk, literal, desk_sd, v, (0.9, -0.2), h) for h in V.ADJOINT_STEPS]
    assert max(V.empirical_orders(res)) < 0.5


def test_adjoint_dimensional_reduction():
    m = custom("0.4 - r", "0", "sqrt(r)", "1", 0.0)
    tm, sd = build_transformed(m), SpeedDensity(m)
    v = V.gaussian_bump(0.6, 0.1, 0.2, 0.3)
    res = [V.adjoint_identity_residual(m, tm, sd, v, (0.5, 0.0), h) for h in V.ADJOINT_STEPS]
    assert min(V.empirical_orders(res)) >= 1.8


def test_adjoint_random_bumps_monotone(desk, desk_t, desk_sd):
    rng = np.random.default_rng(3)
    for _ in range(3):
        yc, zc = rng.uniform(0.5, 1.5), rng.uniform(-0.5, 0.5)
        v = V.gaussian_bump(yc, zc, rng.uniform(0.2, 0.4), rng.uniform(0.3, 0.6))
        for x in [(yc, zc), (yc + 0.1, zc - 0.1), (yc - 0.1, zc + 0.2)]:
            res = [V.adjoint_identity_residual(desk, desk_t, desk_sd, v, x, h) for h in V.ADJOINT_STEPS]
            assert res[0] > res[1] > res[2]
            assert min(V.empirical_orders(res)) >= 1.8


def test_adjoint_step_too_large(desk, desk_t, desk_sd):
    with pytest.raises(StepTooLarge):
        V.adjoint_identity_residual(desk, desk_t, desk_sd, V.gaussian_bump(0.1, 0, 0.1, 0.1), (0.03, 0.0), 1e-2)


def test_analytic_test_function_derivatives():
    for v in (V.gaussian_bump(0.7, 0.2, 0.3, 0.4), V.polynomial_bump(0.7, 0.2, 0.5, 0.6)):
        y, z, e = 0.8, 0.0, 1e-5
        assert v.dy(y, z) == pytest.approx((v.value(y + e, z) - v.value(y - e, z)) / (2 * e), rel=1e-6)
        assert v.dz(y, z) == pytest.approx((v.value(y, z + e) - v.value(y, z - e)) / (2 * e), rel=1e-6)
        assert v.dyz(y, z) == pytest.approx((v.dy(y, z + e) - v.dy(y, z - e)) / (2 * e), rel=1e-6)
        assert v.dyy(y, z) == pytest.approx((v.dy(y + e, z) - v.dy(y - e, z)) / (2 * e), rel=1e-6)
        assert v.dzz(y, z) == pytest.approx((v.dz(y, z + e) - v.dz(y, z - e)) / (2 * e), rel=1e-6)


# --- suites ---------------------------------------------------------------------

def test_suite_rows(desk):
    rows = V.run_suite(desk, "chain", 1) + V.run_suite(desk, "adjoint", 1)
    assert len(rows) == 2 + 9 and all(r.passed == "true" for r in rows)
    with pytest.raises(ValueError):
        V.run_suite(desk, "nope", 1)
