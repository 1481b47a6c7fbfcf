"""Cross-checks of the density symmetry.

* ``chain_symmetry_check``: reversible birth-death chain built from the first
  component; detailed balance of ``exp(tG)`` is the discrete 1-D symmetry.
* ``kde_density`` and ``corollary_symmetry_check``: forward and transformed
  Monte Carlo samples compared pointwise after weighting by the speed density.
* ``theorem1_two_way_check``: ``E g(X_T)`` against ``int g q``.
* ``adjoint_identity_residual``: ``L*(mu v) - mu L~ v`` by finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.ndimage import gaussian_filter

from .errors import DegenerateSamples, DomainError, ExpmFailure, StepTooLarge, SupportEscape
from .mc import BumpDensity, MCConfig, MCEstimate, TerminalSamples, derived_seed, estimate_expectation, \
    estimate_q_grid, simulate_paths
from .model import ModelSpec, TransformedModel, build_transformed, coefficient_a
from .speed import SpeedDensity

MAX_CHAIN_STATES = 400
KERNEL_L2 = 1.0 / (4.0 * math.pi)  # int K^2 for the 2-D standard Gaussian product kernel


# ---------------------------------------------------------------------------
# 1-D chain oracle

@dataclass
class ChainOracle:
    states: np.ndarray
    generator: np.ndarray
    m: np.ndarray

    @property
    def n_states(self) -> int:
        return self.states.size


def build_chain(model: ModelSpec, n_states: int, r_max: float | None = None) -> ChainOracle:
    """Birth-death chain on a uniform grid of ``(0, r_max]`` approximating the Y generator.

    Rates are central where both are positive and upwinded otherwise, with
    reflection at the ends. Weights solve ``m_i up_i = m_{i+1} down_{i+1}``;
    the generator is assembled from the symmetric conductances
    ``c_i = m_i up_i`` divided by ``m``.
    """
    if n_states < 2:
        raise ValueError("need at least 2 states")
    r_max = model.rmax if r_max is None else r_max
    ds = r_max / n_states
    s = ds * np.arange(1, n_states + 1)
    a = np.asarray(coefficient_a(model, 1, 1, s))
    b = np.asarray(model.beta1(s))
    up = a / ds**2 + b / (2 * ds)
    down = a / ds**2 - b / (2 * ds)
    bad = (up < 0) | (down < 0)
    up = np.where(bad, a / ds**2 + np.maximum(b, 0.0) / ds, up)
    down = np.where(bad, a / ds**2 + np.maximum(-b, 0.0) / ds, down)
    up[-1] = 0.0
    down[0] = 0.0
    log_m = np.concatenate([[0.0], np.cumsum(np.log(up[:-1]) - np.log(down[1:]))])
    m = np.exp(log_m - log_m.max())
    cond = 0.5 * (m[:-1] * up[:-1] + m[1:] * down[1:])
    G = np.zeros((n_states, n_states))
    i = np.arange(n_states - 1)
    G[i, i + 1] = cond / m[:-1]
    G[i + 1, i] = cond / m[1:]
    G[np.arange(n_states), np.arange(n_states)] = -G.sum(axis=1)
    return ChainOracle(s, G, m)


def chain_symmetry_check(model: ModelSpec, n_states: int, t: float, r_max: float | None = None,
                         chain: ChainOracle | None = None) -> float:
    """``max |m_i P_ij(t) - m_j P_ji(t)|`` with ``P = expm(tG)`` and ``max m = 1``."""
    if n_states > MAX_CHAIN_STATES:
        raise ValueError(f"n_states is capped at {MAX_CHAIN_STATES}")
    chain = chain or build_chain(model, n_states, r_max)
    P = scipy.linalg.expm(t * chain.generator)
    if not np.all(np.isfinite(P)):
        raise ExpmFailure("matrix exponential is not finite")
    S = chain.m[:, None] * P
    return float(np.max(np.abs(S - S.T)))


# ---------------------------------------------------------------------------
# kernel density estimates

def silverman_bandwidth(y: np.ndarray, z: np.ndarray) -> tuple[float, float]:
    n = y.size
    if n < 1000:
        raise DegenerateSamples("automatic bandwidth needs at least 1000 samples")
    sy, sz = float(np.std(y, ddof=1)), float(np.std(z, ddof=1))
    if sy == 0.0 or sz == 0.0:
        raise DegenerateSamples("sample variance is zero along one axis")
    factor = n ** (-1.0 / 6.0)
    return sy * factor, sz * factor


def kde_density(samples: TerminalSamples | tuple[np.ndarray, np.ndarray], eval_points: Sequence,
                bandwidth: tuple[float, float] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian product-kernel density at ``eval_points``; returns ``(estimate, uncertainty)``.

    The uncertainty proxy is ``sqrt(p * int K^2 / (N h_y h_z))``.
    """
    y, z = (samples.y, samples.z) if isinstance(samples, TerminalSamples) else samples
    y, z = np.asarray(y, float), np.asarray(z, float)
    hy, hz = bandwidth if bandwidth is not None else silverman_bandwidth(y, z)
    pts = np.atleast_2d(np.asarray(eval_points, float))
    n = y.size
    est = np.empty(len(pts))
    norm = 1.0 / (n * 2.0 * math.pi * hy * hz)
    for k, (py, pz) in enumerate(pts):
        ky = np.exp(-0.5 * ((y - py) / hy) ** 2)
        kz = np.exp(-0.5 * ((z - pz) / hz) ** 2)
        est[k] = float(np.dot(ky, kz)) * norm
    unc = np.sqrt(est * KERNEL_L2 / (n * hy * hz))
    return est, unc


def kde_field_max(samples: TerminalSamples, bandwidth: tuple[float, float]) -> float:
    """Peak of the density estimate, from a binned KDE with bins of half a bandwidth."""
    hy, hz = bandwidth
    y, z = samples.y, samples.z
    ny = max(8, int(math.ceil((y.max() - y.min()) / (0.5 * hy))) + 1)
    nz = max(8, int(math.ceil((z.max() - z.min()) / (0.5 * hz))) + 1)
    ny, nz = min(ny, 2000), min(nz, 2000)
    hist, ey, ez = np.histogram2d(y, z, bins=(ny, nz))
    dy, dz = ey[1] - ey[0], ez[1] - ez[0]
    smooth = gaussian_filter(hist, sigma=(hy / dy, hz / dz), mode="constant")
    return float(smooth.max() / (y.size * dy * dz))


# ---------------------------------------------------------------------------
# Corollary-type pointwise symmetry

@dataclass
class SymmetryResidual:
    points: list
    lhs: np.ndarray
    rhs: np.ndarray
    rel_residual: np.ndarray
    std_errors: list
    flagged: np.ndarray
    bandwidths: list = field(default_factory=list)

    def passed(self, tol: float = 0.10) -> bool:
        keep = ~self.flagged
        return bool(np.any(keep) and np.all(self.rel_residual[keep] <= tol))


def _relative(lhs, rhs):
    return np.abs(lhs - rhs) / np.maximum(np.maximum(lhs, rhs), 1e-300)


def corollary_symmetry_check(model: ModelSpec, points: Sequence, cfg: MCConfig,
                             tmodel: TransformedModel | None = None, sd: SpeedDensity | None = None,
                             low_density: float = 0.10) -> SymmetryResidual:
    """Compare ``mu(xi1) p(T, xi, x)`` with ``mu(x1) p~(T, x, xi)`` for each pair.

    Forward samples start at ``xi`` under the model, transformed samples at
    ``x`` under the transformed model; both densities come from KDE. Runs
    are shared between pairs with the same starting point. Pairs whose
    density estimates fall below ``low_density`` times the field maximum are
    flagged and do not count towards `SymmetryResidual.passed`.
    """
    tmodel = tmodel or build_transformed(model)
    sd = sd or SpeedDensity(model)
    fwd: dict[tuple, tuple] = {}
    bwd: dict[tuple, tuple] = {}

    def run(cache, key, mdl, salt):
        if key not in cache:
            seed = derived_seed(cfg.seed, salt + len(cache))
            samples = simulate_paths(mdl, key, cfg.replace(seed=seed))
            bw = silverman_bandwidth(samples.y, samples.z)
            cache[key] = (samples, bw, kde_field_max(samples, bw))
        return cache[key]

    lhs, rhs, ses, flags, bws = [], [], [], [], []
    for xi, x in points:
        xi, x = tuple(map(float, xi)), tuple(map(float, x))
        if xi[0] <= 0 or x[0] <= 0:
            raise DomainError("symmetry points must be interior (y > 0)")
        s_f, bw_f, max_f = run(fwd, xi, model, 1 << 40)
        s_b, bw_b, max_b = run(bwd, x, tmodel.as_model(), 1 << 41)
        if x[0] < 2 * bw_f[0] or xi[0] < 2 * bw_b[0]:
            raise DomainError("evaluation points must sit at least two bandwidths above y = 0")
        p, up = kde_density(s_f, [x], bw_f)
        pt, upt = kde_density(s_b, [xi], bw_b)
        ratio = sd.mu_ratio(xi[0], x[0])
        lhs.append(ratio * p[0])
        rhs.append(pt[0])
        ses.append((ratio * up[0], upt[0]))
        flags.append(p[0] < low_density * max_f or pt[0] < low_density * max_b)
        bws.append((bw_f, bw_b))
    lhs_a, rhs_a = np.array(lhs), np.array(rhs)
    return SymmetryResidual([(tuple(a), tuple(b)) for a, b in points], lhs_a, rhs_a,
                            _relative(lhs_a, rhs_a), ses, np.array(flags, dtype=bool), bws)


# ---------------------------------------------------------------------------
# two-way expectation identity

@dataclass(frozen=True)
class NodeGrid:
    """Tensor grid over a box inside D (no boundary row)."""

    y_nodes: np.ndarray
    z_nodes: np.ndarray

    @property
    def shape(self):
        return len(self.y_nodes), len(self.z_nodes)

    def mesh(self):
        return np.meshgrid(self.y_nodes, self.z_nodes, indexing="ij")


@dataclass
class TheoremCheck:
    lhs: MCEstimate
    rhs: float
    rhs_uncertainty: float
    passed: bool

    @property
    def tolerance(self) -> float:
        return 3.0 * (self.lhs.std_error + self.rhs_uncertainty)


def _check_support(g, grid) -> None:
    support = getattr(g, "support", None)
    if support is None:
        return
    y_lo, y_hi, z_lo, z_hi = support
    ys, zs = np.asarray(grid.y_nodes), np.asarray(grid.z_nodes)
    wy, wz = ys[-1] - ys[0], zs[-1] - zs[0]
    if (y_lo - ys[0] < 0.1 * wy and ys[0] > 0) or ys[-1] - y_hi < 0.1 * wy or \
            z_lo - zs[0] < 0.1 * wz or zs[-1] - z_hi < 0.1 * wz:
        raise SupportEscape("payoff support reaches within 10% of the grid edge")


def integrate_against(g: Callable, q_values: np.ndarray, grid, q_uncertainty=None) -> tuple[float, float]:
    """Trapezoid ``int g q`` and its uncertainty.

    A per-node uncertainty array is combined as fully correlated within a
    y-row (rows share paths) and independent across rows.
    """
    Y, Z = grid.mesh()
    gv = np.asarray(g(Y, Z), float)
    ys, zs = np.asarray(grid.y_nodes), np.asarray(grid.z_nodes)
    value = float(np.trapezoid(np.trapezoid(gv * q_values, zs, axis=1), ys))
    if q_uncertainty is None:
        return value, 0.0
    if np.ndim(q_uncertainty) == 0:
        return value, float(q_uncertainty)
    wz = np.array([_trap_weight(zs, j) for j in range(zs.size)])
    wy = np.array([_trap_weight(ys, i) for i in range(ys.size)])
    rows = np.abs(gv * np.asarray(q_uncertainty)) @ wz
    return value, float(np.sqrt(np.sum((wy * rows) ** 2)))


def _trap_weight(nodes: np.ndarray, k: int) -> float:
    left = nodes[k] - nodes[k - 1] if k > 0 else 0.0
    right = nodes[k + 1] - nodes[k] if k + 1 < nodes.size else 0.0
    return 0.5 * (left + right)


def theorem1_two_way_check(model: ModelSpec, g: Callable, rho: BumpDensity, q_values: np.ndarray, grid,
                           cfg: MCConfig, q_uncertainty=None) -> TheoremCheck:
    """``E g(X_T)`` with ``X_0 ~ rho`` against the quadrature of ``g q`` on ``grid``.

    Passes when the gap is within three times the summed uncertainties.
    """
    _check_support(g, grid)
    lhs = estimate_expectation(model, g, rho, cfg)
    rhs, unc = integrate_against(g, q_values, grid, q_uncertainty)
    return TheoremCheck(lhs, rhs, unc, abs(lhs.value - rhs) <= 3.0 * (lhs.std_error + unc))


# ---------------------------------------------------------------------------
# adjoint identity

@dataclass(frozen=True)
class TestFunction:
    """Smooth function of ``(y, z)`` with analytic first and second derivatives."""

    value: Callable
    dy: Callable
    dz: Callable
    dyy: Callable
    dyz: Callable
    dzz: Callable

    __test__ = False  # not a pytest class


def gaussian_bump(yc: float, zc: float, sy: float, sz: float) -> TestFunction:
    def v(y, z):
        return np.exp(-0.5 * ((y - yc) / sy) ** 2 - 0.5 * ((z - zc) / sz) ** 2)

    def py(y):
        return -(y - yc) / sy**2

    def pz(z):
        return -(z - zc) / sz**2

    return TestFunction(
        value=v,
        dy=lambda y, z: py(y) * v(y, z),
        dz=lambda y, z: pz(z) * v(y, z),
        dyy=lambda y, z: (py(y) ** 2 - 1.0 / sy**2) * v(y, z),
        dyz=lambda y, z: py(y) * pz(z) * v(y, z),
        dzz=lambda y, z: (pz(z) ** 2 - 1.0 / sz**2) * v(y, z),
    )


def polynomial_bump(yc: float, zc: float, hy: float, hz: float) -> TestFunction:
    """``(1 - ty^2)^4 (1 - tz^2)^4`` on the box; zero outside."""
    def f(t):
        return np.where(np.abs(t) < 1, (1 - t * t) ** 4, 0.0)

    def f1(t):
        return np.where(np.abs(t) < 1, -8 * t * (1 - t * t) ** 3, 0.0)

    def f2(t):
        return np.where(np.abs(t) < 1, -8 * (1 - t * t) ** 3 + 48 * t * t * (1 - t * t) ** 2, 0.0)

    def ty(y):
        return (y - yc) / hy

    def tz(z):
        return (z - zc) / hz

    return TestFunction(
        value=lambda y, z: f(ty(y)) * f(tz(z)),
        dy=lambda y, z: f1(ty(y)) / hy * f(tz(z)),
        dz=lambda y, z: f(ty(y)) * f1(tz(z)) / hz,
        dyy=lambda y, z: f2(ty(y)) / hy**2 * f(tz(z)),
        dyz=lambda y, z: f1(ty(y)) / hy * f1(tz(z)) / hz,
        dzz=lambda y, z: f(ty(y)) * f2(tz(z)) / hz**2,
    )


def apply_forward_operator(model: ModelSpec, F: Callable, x: Sequence[float], h: float) -> float:
    """``L* F(x) = sum d_ij(a_ij F) - sum d_i(beta_i F)`` by central differences of the products."""
    y, z = float(x[0]), float(x[1])

    def prod(i, j):
        return lambda yy, zz: np.asarray(coefficient_a(model, i, j, yy)) * F(yy, zz)

    def drift(c):
        return lambda yy, zz: np.asarray(c(yy)) * F(yy, zz)

    f11, f12, f22 = prod(1, 1), prod(1, 2), prod(2, 2)
    g1, g2 = drift(model.beta1), drift(model.beta2)
    d11 = (f11(y + h, z) - 2 * f11(y, z) + f11(y - h, z)) / h**2
    d12 = (f12(y + h, z + h) - f12(y + h, z - h) - f12(y - h, z + h) + f12(y - h, z - h)) / (4 * h**2)
    d22 = (f22(y, z + h) - 2 * f22(y, z) + f22(y, z - h)) / h**2
    d1 = (g1(y + h, z) - g1(y - h, z)) / (2 * h)
    d2 = (g2(y, z + h) - g2(y, z - h)) / (2 * h)
    return float(d11 + 2 * d12 + d22 - d1 - d2)


def adjoint_identity_terms(model: ModelSpec, tmodel: TransformedModel, sd: SpeedDensity, v: TestFunction,
                           x: Sequence[float], h: float) -> tuple[float, float]:
    """``(L*(mu v)(x), mu(x) L~v(x))`` with ``L~`` the transformed generator."""
    y, z = float(x[0]), float(x[1])
    if y < 4 * h:
        raise StepTooLarge(f"stencil of width {h:g} leaves D at y = {y:g}")

    def mu_v(yy, zz):
        return np.asarray(sd.mu(yy)) * v.value(yy, zz)

    lhs = apply_forward_operator(model, mu_v, (y, z), h)
    a11, a12, a22 = (float(coefficient_a(model, i, j, y)) for i, j in ((1, 1), (1, 2), (2, 2)))
    gen = (a11 * v.dyy(y, z) + 2 * a12 * v.dyz(y, z) + a22 * v.dzz(y, z)
           + float(model.beta1(y)) * v.dy(y, z) + float(tmodel.beta2_tilde(y)) * v.dz(y, z))
    return lhs, float(sd.mu(y)) * float(gen)


def adjoint_identity_residual(model: ModelSpec, tmodel: TransformedModel, sd: SpeedDensity, v: TestFunction,
                              x: Sequence[float], h: float) -> float:
    """``|L*(mu v)(x) - mu(x) L~v(x)|``; raises `StepTooLarge` when ``x.y < 4h``."""
    lhs, rhs = adjoint_identity_terms(model, tmodel, sd, v, x, h)
    return abs(lhs - rhs)


def empirical_orders(residuals: Sequence[float]) -> list[float]:
    """``log2`` of successive residual ratios for steps halving each time."""
    r = np.asarray(residuals, float)
    return list(np.log2(r[:-1] / r[1:]))


# ---------------------------------------------------------------------------
# desk-scale suites

SUITES = ("chain", "adjoint", "corollary", "theorem1")
ADJOINT_STEPS = (1e-2, 5e-3, 2.5e-3)
MIN_ORDER = 1.8


@dataclass(frozen=True)
class SuiteBudget:
    n_paths: int = 1_000_000
    n_steps: int = 400
    q_grid_paths: int = 100_000
    q_grid_nodes: int = 40
    pde_nodes: int = 200
    pde_steps: int = 400
    chain_states: int = 100
    n_streams: int = 1


@dataclass
class ReportRow:
    check: str
    point: str
    lhs: float
    rhs: float
    residual: float
    tolerance: float
    passed: str


def model_scales(model: ModelSpec) -> tuple[float, float]:
    """Typical ``y`` level and the ``z`` spread over the horizon at that level."""
    s = model.typical_scale or 1.0
    zs = math.sqrt(2.0 * float(coefficient_a(model, 2, 2, s)) * model.horizon_T)
    return s, (zs if zs > 0 else 1.0)


def default_rho(model: ModelSpec) -> BumpDensity:
    s, zs = model_scales(model)
    return BumpDensity(s, 0.5 * s, 0.0, 0.67 * zs)


def default_payoff(model: ModelSpec) -> BumpDensity:
    s, zs = model_scales(model)
    return BumpDensity(s, 0.75 * s, -0.22 * zs, 1.34 * zs)


def default_symmetry_pairs(model: ModelSpec) -> list:
    s, zs = model_scales(model)
    p = [(s, 0.0), (1.25 * s, -0.3 * zs), (1.5 * s, 0.3 * zs), (0.75 * s, 0.15 * zs)]
    return [(p[0], p[1]), (p[1], p[2]), (p[2], p[3]), (p[3], p[0]), (p[0], p[2])]


def default_adjoint_cases(model: ModelSpec) -> tuple[list, list]:
    s, zs = model_scales(model)
    ys, zf = 5.0 * s, zs / math.sqrt(0.2)
    bumps = [gaussian_bump(1.0 * ys, 0.0, 0.3 * ys, 0.5 * zf), gaussian_bump(0.5 * ys, 0.2 * zf, 0.2 * ys, 0.4 * zf),
             polynomial_bump(0.8 * ys, -0.1 * zf, 0.6 * ys, 0.9 * zf)]
    points = [(1.0 * ys, 0.0), (0.6 * ys, 0.3 * zf), (0.9 * ys, -0.2 * zf)]
    return bumps, points


def _fmt_point(*pts) -> str:
    return ";".join("(" + " ".join(f"{c:.6g}" for c in p) + ")" for p in pts)


def q_grid_for(g: BumpDensity, n_nodes: int) -> NodeGrid:
    """Nodes covering ``g``'s support with a 15% margin on each side."""
    y_lo, y_hi, z_lo, z_hi = g.support
    my, mz = 0.15 * (y_hi - y_lo), 0.15 * (z_hi - z_lo)
    if y_lo - my <= 0.0:
        raise SupportEscape("payoff support is too close to y = 0 for a q grid inside D")
    return NodeGrid(np.linspace(y_lo - my, y_hi + my, n_nodes),
                    np.linspace(z_lo - mz, z_hi + mz, n_nodes))


def pde_truncation(model: ModelSpec, *bumps: BumpDensity) -> tuple[float, float, float]:
    """``(y_max, z_min, z_max)``: ``max(10 s, 4 * support top)`` and the z-supports widened by ``6 sqrt(a22 T)``."""
    s, _ = model_scales(model)
    y_top = max(b.support[1] for b in bumps)
    spread = 6.0 * math.sqrt(float(coefficient_a(model, 2, 2, s)) * model.horizon_T)
    z_lo = min(b.support[2] for b in bumps) - spread
    z_hi = max(b.support[3] for b in bumps) + spread
    return max(10.0 * s, 4.0 * y_top), z_lo, z_hi


def pde_density(tmodel: TransformedModel, sd: SpeedDensity, rho: BumpDensity, n_nodes: int, n_steps: int,
                g: BumpDensity | None = None):
    """``q`` from the backward solve with terminal data ``rho / mu``; returns ``(field, grid)``."""
    from .pde import assemble_density, make_grid, solve_backward, terminal_rho_over_mu

    y_max, z_lo, z_hi = pde_truncation(tmodel.base, *(b for b in (rho, g) if b is not None))
    grid = make_grid(n_nodes, n_nodes, y_max, z_lo, z_hi)
    u, _ = solve_backward(tmodel, grid, terminal_rho_over_mu(rho, sd, grid), n_steps)
    return assemble_density(u, sd), grid


def run_suite(model: ModelSpec, suite: str, seed: int, budget: SuiteBudget = SuiteBudget(),
              rho: BumpDensity | None = None, g: BumpDensity | None = None) -> list[ReportRow]:
    """Run one named suite (or ``"all"``) and return report rows."""
    names = SUITES if suite == "all" else (suite,)
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}")
    tmodel = build_transformed(model)
    sd = SpeedDensity(model)
    rows: list[ReportRow] = []
    cfg = MCConfig(budget.n_paths, budget.n_steps, seed=seed, n_streams=budget.n_streams)
    for name in names:
        if name == "chain":
            chain = build_chain(model, budget.chain_states)
            for t in (0.1, 1.0):
                v = chain_symmetry_check(model, budget.chain_states, t, chain=chain)
                rows.append(ReportRow("chain", f"n={budget.chain_states};t={t:g}", v, 0.0, v, 1e-12,
                                      str(v <= 1e-12).lower()))
        elif name == "adjoint":
            bumps, points = default_adjoint_cases(model)
            for k, v in enumerate(bumps):
                for x in points:
                    res = [adjoint_identity_residual(model, tmodel, sd, v, x, h) for h in ADJOINT_STEPS]
                    lhs, rhs = adjoint_identity_terms(model, tmodel, sd, v, x, ADJOINT_STEPS[-1])
                    order = float(min(empirical_orders(res))) if min(res) > 0 else math.inf
                    ok = order >= MIN_ORDER and all(a > b for a, b in zip(res, res[1:]))
                    rows.append(ReportRow("adjoint", f"bump{k}@{_fmt_point(x)}", lhs, rhs, order, MIN_ORDER,
                                          str(ok).lower()))
        elif name == "corollary":
            res = corollary_symmetry_check(model, default_symmetry_pairs(model),
                                           cfg.replace(seed=derived_seed(seed, 1)), tmodel, sd)
            for k, (xi, x) in enumerate(res.points):
                ok = "flagged" if res.flagged[k] else str(bool(res.rel_residual[k] <= 0.10)).lower()
                rows.append(ReportRow("corollary", _fmt_point(xi, x), float(res.lhs[k]), float(res.rhs[k]),
                                      float(res.rel_residual[k]), 0.10, ok))
        else:
            rho_ = rho or default_rho(model)
            g_ = g or default_payoff(model)
            lhs_cfg = cfg.replace(seed=derived_seed(seed, 2))
            grid = q_grid_for(g_, budget.q_grid_nodes)
            q, se = estimate_q_grid(tmodel, sd, rho_, grid.y_nodes, grid.z_nodes,
                                    MCConfig(budget.q_grid_paths, budget.n_steps, seed=derived_seed(seed, 3),
                                             n_streams=budget.n_streams))
            for source, (vals, unc, qgrid) in (
                    ("mc", (q, se, grid)),
                    ("pde", _pde_route(tmodel, sd, rho_, g_, budget))):
                chk = theorem1_two_way_check(model, g_, rho_, vals, qgrid, lhs_cfg, unc)
                rows.append(ReportRow("theorem1", source, chk.lhs.value, chk.rhs, abs(chk.lhs.value - chk.rhs),
                                      chk.tolerance, str(chk.passed).lower()))
    return rows


def _pde_route(tmodel, sd, rho, g, budget: SuiteBudget):
    """PDE density with uncertainty ``|fine - coarse|`` of ``int g q`` on a halved grid."""
    fine, grid = pde_density(tmodel, sd, rho, budget.pde_nodes, budget.pde_steps, g)
    coarse, cgrid = pde_density(tmodel, sd, rho, (budget.pde_nodes + 1) // 2, max(1, budget.pde_steps // 2), g)
    unc = abs(integrate_against(g, fine.values, grid)[0] - integrate_against(g, coarse.values, cgrid)[0])
    return fine.values, unc, grid
