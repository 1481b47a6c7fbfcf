"""Backward Kolmogorov solver on a truncated half-plane grid.

Solves ``u_t + L u = 0`` on ``(0, T) x D`` with terminal data ``g``, where

    L = a11 d_yy + 2 a12 d_yz + a22 d_zz + beta1 d_y + beta2 d_z,

and on ``y = 0`` the degenerate row ``u_t + a22 d_zz u + beta1 d_y u + beta2 d_z u = 0``.
Time runs backwards in ``tau = T - t``. Nodes are indexed row-major, ``k = i*nz + j``
with ``i`` along ``y``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (CFLViolation, GridTooCoarse, InvalidModel, LinearSolveFailure, NegativeDensity,
                     OverflowGuard)
from .model import ModelSpec, TransformedModel, coefficient_a
from .speed import SpeedDensity

FAR_EDGE_CLOSURES = ("upwind", "one-sided")
STEPPERS = ("craig-sneyd", "explicit-euler")


@dataclass(frozen=True)
class Grid2D:
    y_nodes: np.ndarray
    z_nodes: np.ndarray
    stretching: str = "uniform"

    def __post_init__(self):
        y, z = np.asarray(self.y_nodes, float), np.asarray(self.z_nodes, float)
        if y.size < 3 or z.size < 3:
            raise GridTooCoarse("at least 3 nodes per axis")
        if y[0] != 0.0:
            raise InvalidModel("y_nodes must start at 0")
        for name, nodes in (("y", y), ("z", z)):
            h = np.diff(nodes)
            if np.any(h <= 0):
                raise InvalidModel(f"{name}_nodes must be strictly increasing")
            ratio = h[1:] / h[:-1]
            if np.any(ratio > 3.0) or np.any(ratio < 1.0 / 3.0):
                raise GridTooCoarse(f"neighbouring {name} spacings differ by more than a factor 3")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.y_nodes), len(self.z_nodes)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.y_nodes, self.z_nodes, indexing="ij")


def make_grid(ny: int, nz: int, y_max: float, z_min: float, z_max: float,
              stretching: str = "sinh", cluster: float = 4.0) -> Grid2D:
    """Tensor grid; ``stretching="sinh"`` clusters y-nodes at 0 with parameter ``cluster``."""
    xi = np.linspace(0.0, 1.0, ny)
    if stretching == "sinh":
        y = y_max * np.sinh(cluster * xi) / math.sinh(cluster)
    elif stretching == "uniform":
        y = y_max * xi
    else:
        raise ValueError(f"unknown stretching {stretching!r}")
    y[0] = 0.0
    return Grid2D(y, np.linspace(z_min, z_max, nz), "sinh-clustered-at-0" if stretching == "sinh" else "uniform")


@dataclass
class DensityField:
    grid: Grid2D
    values: np.ndarray
    quantity: str
    time_stamp: float
    # False where the node carries no density value (y = 0)
    valid: np.ndarray | None = None
    clipped: int = 0


@dataclass
class SolveReport:
    scheme: str
    time_steps: int
    max_residual_constant_test: float
    min_value: float
    max_value: float
    wall_time: float
    far_edge: str = "upwind"
    upwinded_rows: int = 0
    history_min: list = field(default_factory=list)
    history_max: list = field(default_factory=list)


@dataclass
class Operator:
    """Split sparse discretisation of L: ``A = A0 + A1 + A2``.

    ``A0`` holds the mixed derivative, ``A1`` the y-direction terms and ``A2``
    the z-direction terms.
    """

    A0: sp.csr_matrix
    A1: sp.csr_matrix
    A2: sp.csr_matrix
    upwinded_rows: int

    @property
    def A(self) -> sp.csr_matrix:
        return (self.A0 + self.A1 + self.A2).tocsr()


def _coefficients(model, y: np.ndarray) -> dict[str, np.ndarray]:
    base = model.base if isinstance(model, TransformedModel) else model
    beta2 = model.beta2_tilde if isinstance(model, TransformedModel) else model.beta2
    return {
        "a11": np.asarray(coefficient_a(base, 1, 1, y), float) * np.ones_like(y),
        "a12": np.asarray(coefficient_a(base, 1, 2, y), float) * np.ones_like(y),
        "a22": np.asarray(coefficient_a(base, 2, 2, y), float) * np.ones_like(y),
        "b1": np.asarray(base.beta1(y), float) * np.ones_like(y),
        "b2": np.asarray(beta2(y), float) * np.ones_like(y),
    }


def _line_stencil(nodes: np.ndarray, diff: np.ndarray, drift: np.ndarray, far_edge: str,
                  first_row: str):
    """Three-point (or one-sided) weights for ``diff * d2 + drift * d1`` along one line.

    ``diff`` and ``drift`` are per-node arrays shaped ``(n_lines, n)``. Returns a list of
    ``(offset, weights)`` with ``weights`` shaped like ``diff``, plus an upwinding mask.
    ``first_row`` is ``"one-sided"`` (second-order forward first derivative, no
    second derivative: the degenerate y = 0 row) or ``"far"`` (artificial edge).
    """
    n = nodes.size
    h = np.diff(nodes)
    w = {off: np.zeros_like(diff) for off in (-1, 0, 1, 2, -2)}
    upwind = np.zeros(diff.shape, dtype=bool)

    hm, hp = h[:-1], h[1:]
    d, b = diff[:, 1:-1], drift[:, 1:-1]
    lower = d * 2.0 / (hm * (hm + hp)) - b * hp / (hm * (hm + hp))
    upper = d * 2.0 / (hp * (hm + hp)) + b * hm / (hp * (hm + hp))
    bad = (lower < 0.0) | (upper < 0.0)
    lower = np.where(bad, d * 2.0 / (hm * (hm + hp)) + np.maximum(-b, 0.0) / hm, lower)
    upper = np.where(bad, d * 2.0 / (hp * (hm + hp)) + np.maximum(b, 0.0) / hp, upper)
    w[-1][:, 1:-1] = lower
    w[1][:, 1:-1] = upper
    w[0][:, 1:-1] = -(lower + upper)
    upwind[:, 1:-1] = bad

    def far(idx, inward, h1, h2):
        # idx: edge node, inward: +1 (low edge) or -1 (high edge)
        dd, bb = diff[:, idx], drift[:, idx]
        if far_edge == "one-sided":
            s2 = (2.0 / (h1 * (h1 + h2)), -2.0 / (h1 * h2), 2.0 / (h2 * (h1 + h2)))
            s1 = (-(2 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2)))
            sign = inward
            for k, off in enumerate((0, 1, 2)):
                w[sign * off][:, idx] += dd * s2[k] + sign * bb * s1[k]
        else:
            # normal diffusion dropped; drift upwinded towards the interior only
            inflow = np.maximum(inward * bb, 0.0) / h1
            w[inward][:, idx] += inflow
            w[0][:, idx] -= inflow

    if first_row == "one-sided":
        h1, h2 = h[0], h[1]
        b0 = drift[:, 0]
        w[0][:, 0] = -b0 * (2 * h1 + h2) / (h1 * (h1 + h2))
        w[1][:, 0] = b0 * (h1 + h2) / (h1 * h2)
        w[2][:, 0] = -b0 * h1 / (h2 * (h1 + h2))
    else:
        far(0, +1, h[0], h[1])
    far(n - 1, -1, h[-1], h[-2])
    return w, upwind


def discretize_L(model: ModelSpec | TransformedModel, grid: Grid2D, far_edge: str = "upwind") -> Operator:
    """Finite-difference operator for ``L`` including the y = 0 row and far-edge rows.

    Second derivatives use three-point central differences on the nonuniform
    grid; drifts are central unless that makes an off-diagonal negative, in
    which case that row is upwinded. Rows sum to zero.
    """
    if far_edge not in FAR_EDGE_CLOSURES:
        raise ValueError(f"far_edge must be one of {FAR_EDGE_CLOSURES}")
    y, z = np.asarray(grid.y_nodes, float), np.asarray(grid.z_nodes, float)
    ny, nz = y.size, z.size
    c = _coefficients(model, y)
    if not all(np.all(np.isfinite(v)) for v in c.values()):
        raise GridTooCoarse("coefficients are not finite on the grid")
    if c["b1"][0] < 0:
        raise InvalidModel("beta1(0) must be >= 0 for the boundary row")
    idx = np.arange(ny * nz).reshape(ny, nz)
    n = ny * nz

    # y-direction: lines are columns j, nodes along i
    wy, upy = _line_stencil(y, np.tile(c["a11"], (nz, 1)), np.tile(c["b1"], (nz, 1)), far_edge,
                            first_row="one-sided")
    rows, cols, vals = [], [], []
    for off, wts in wy.items():
        i = np.arange(ny)
        ok = (i + off >= 0) & (i + off < ny)
        wt = wts.T  # (ny, nz)
        rr = idx[ok, :]
        cc = idx[(i + off)[ok], :]
        rows.append(rr.ravel()); cols.append(cc.ravel()); vals.append(wt[ok, :].ravel())
    A1 = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))

    # z-direction: lines are rows i, nodes along j
    diff = np.repeat(c["a22"][:, None], nz, axis=1)
    drift = np.repeat(c["b2"][:, None], nz, axis=1)
    wz, upz = _line_stencil(z, diff, drift, far_edge, first_row="far")
    rows, cols, vals = [], [], []
    for off, wts in wz.items():
        j = np.arange(nz)
        ok = (j + off >= 0) & (j + off < nz)
        rows.append(idx[:, ok].ravel()); cols.append(idx[:, (j + off)[ok]].ravel())
        vals.append(wts[:, ok].ravel())
    A2 = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))

    # mixed term on strictly interior nodes
    rows, cols, vals = [], [], []
    ii, jj = np.meshgrid(np.arange(1, ny - 1), np.arange(1, nz - 1), indexing="ij")
    hy = (y[2:] - y[:-2])[:, None] * np.ones((1, nz - 2))
    hz = (z[2:] - z[:-2])[None, :] * np.ones((ny - 2, 1))
    coef = 2.0 * c["a12"][1:-1, None] / (hy * hz)
    if np.any(coef != 0.0):
        for di, dj, s in ((1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)):
            rows.append(idx[ii, jj].ravel()); cols.append(idx[ii + di, jj + dj].ravel())
            vals.append((s * coef).ravel())
        A0 = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    else:
        A0 = sp.csr_matrix((n, n))

    if far_edge == "upwind":
        # rows other than the degenerate one must have nonnegative off-diagonals
        M = (A1 + A2).tocoo()
        offd = (M.row != M.col) & (M.data < 0) & (M.row >= nz)
        if np.any(offd):
            raise GridTooCoarse(f"{int(offd.sum())} negative off-diagonal entries after upwinding")
    return Operator(A0, A1, A2, int(upy.sum() + upz.sum()))


def boundary_row(model: ModelSpec | TransformedModel, grid: Grid2D, z_index: int) -> dict[int, float]:
    """Stencil ``{flat_index: weight}`` of the y = 0 row at ``z_index``."""
    op = discretize_L(model, grid)
    row = op.A.getrow(z_index)
    return {int(k): float(v) for k, v in zip(row.indices, row.data)}


def _strictly_dominant(M: sp.csr_matrix) -> bool:
    diag = np.abs(M.diagonal())
    off = np.asarray(abs(M).sum(axis=1)).ravel() - diag
    return bool(np.all(diag > off))


def solve_backward(model: ModelSpec | TransformedModel, grid: Grid2D, g: np.ndarray, n_time_steps: int,
                   stepper: str = "craig-sneyd", horizon: float | None = None, far_edge: str = "upwind",
                   theta: float = 0.5, track_extrema: bool = False) -> tuple[DensityField, SolveReport]:
    """Solve backwards from ``u(T) = g`` to ``t = 0``.

    ``stepper="craig-sneyd"`` treats the mixed term explicitly and the y and z
    terms implicitly with weight ``theta``; ``"explicit-euler"`` checks the
    CFL bound ``dt * max|A_kk| <= 1``.
    """
    if stepper not in STEPPERS:
        raise ValueError(f"stepper must be one of {STEPPERS}")
    start = time.perf_counter()
    base = model.base if isinstance(model, TransformedModel) else model
    T = base.horizon_T if horizon is None else horizon
    g = np.asarray(g, dtype=float)
    if g.shape != grid.shape or not np.all(np.isfinite(g)):
        raise InvalidModel("terminal data must be finite and match the grid")
    op = discretize_L(model, grid, far_edge=far_edge)
    A = op.A
    dt = T / n_time_steps
    u = g.ravel().copy()
    n = u.size
    ones = np.ones(n)
    const_resid = float(np.max(np.abs(A @ ones)))
    hist_min, hist_max = [float(u.min())], [float(u.max())]

    if stepper == "explicit-euler":
        rate = float(np.max(np.abs(A.diagonal())))
        if dt * rate > 1.0:
            raise CFLViolation(f"dt * max|diag| = {dt * rate:.3g} > 1; use at least "
                               f"{math.ceil(T * rate)} time steps")
        for _ in range(n_time_steps):
            u = u + dt * (A @ u)
            if track_extrema:
                hist_min.append(float(u.min())); hist_max.append(float(u.max()))
    else:
        eye = sp.identity(n, format="csc")
        M1 = (eye - theta * dt * op.A1).tocsc()
        M2 = (eye - theta * dt * op.A2).tocsc()
        for name, M in (("y", M1), ("z", M2)):
            if not _strictly_dominant(M.tocsr()):
                raise LinearSolveFailure(f"implicit {name}-sweep matrix is not strictly diagonally dominant")
        lu1, lu2 = splu(M1), splu(M2)
        A0, A1, A2 = op.A0, op.A1, op.A2
        for _ in range(n_time_steps):
            y0 = u + dt * (A @ u)
            y1 = lu1.solve(y0 - theta * dt * (A1 @ u))
            y2 = lu2.solve(y1 - theta * dt * (A2 @ u))
            yh = y0 + 0.5 * dt * (A0 @ (y2 - u))
            y1 = lu1.solve(yh - theta * dt * (A1 @ u))
            u = lu2.solve(y1 - theta * dt * (A2 @ u))
            if track_extrema:
                hist_min.append(float(u.min())); hist_max.append(float(u.max()))
    values = u.reshape(grid.shape)
    if not np.all(np.isfinite(values)):
        raise LinearSolveFailure("solution is not finite")
    report = SolveReport(scheme=stepper, time_steps=n_time_steps, max_residual_constant_test=const_resid,
                         min_value=float(values.min()), max_value=float(values.max()),
                         wall_time=time.perf_counter() - start, far_edge=far_edge,
                         upwinded_rows=op.upwinded_rows, history_min=hist_min, history_max=hist_max)
    return DensityField(grid, values, "u", 0.0), report


def terminal_rho_over_mu(rho, sd: SpeedDensity, grid: Grid2D) -> np.ndarray:
    """``rho / mu`` on the grid, formed as ``exp(log rho - log mu)``; 0 off the support."""
    Y, Z = grid.mesh()
    rv = np.asarray(rho(Y, Z), float)
    out = np.zeros(grid.shape)
    live = (rv > 0.0) & (Y > 0.0)
    if np.any(live):
        out[live] = np.exp(np.log(rv[live]) - np.asarray(sd.log_mu(Y[live])))
    return out


def assemble_density(u: DensityField, sd: SpeedDensity, clip_tol: float = 1e-12) -> DensityField:
    """``p = mu(y) u`` at nodes with ``y > 0``; the y = 0 row is marked invalid."""
    if u.quantity != "u":
        raise InvalidModel("assemble_density expects a field of quantity 'u'")
    y = np.asarray(u.grid.y_nodes, float)
    valid = np.zeros(u.grid.shape, dtype=bool)
    valid[y > 0.0, :] = True
    p = np.zeros(u.grid.shape)
    log_mu = np.asarray(sd.log_mu(y[y > 0.0]))[:, None]
    vals = u.values[y > 0.0, :]
    with np.errstate(divide="ignore"):
        mag = log_mu + np.log(np.abs(vals))
    if np.any(mag > np.log(np.finfo(float).max)):
        raise OverflowGuard("mu * u exceeds the floating point range")
    p[y > 0.0, :] = np.exp(log_mu) * vals
    neg = p < 0.0
    if np.any(p < -clip_tol):
        raise NegativeDensity(f"density value {float(p.min()):.3g} below -{clip_tol:g}")
    clipped = int(neg.sum())
    p[neg] = 0.0
    return DensityField(u.grid, p, "p", u.time_stamp, valid=valid, clipped=clipped)


def trapezoid_2d(values: np.ndarray, grid: Grid2D) -> float:
    return float(np.trapezoid(np.trapezoid(values, grid.z_nodes, axis=1), grid.y_nodes))
