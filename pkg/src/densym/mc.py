"""Monte Carlo simulation of decoupled systems and the density estimators.

Paths are grouped in fixed-size blocks. Each block draws from its own
PCG64 generator seeded with ``seed ^ splitmix64(block_index)``, and streams
(workers) only decide which blocks they process. Results are therefore
identical for any ``n_streams``.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import BoundaryMassWarning, DomainError, InvalidModel, NonFiniteState
from .model import ModelSpec, TransformedModel
from .speed import SpeedDensity

MASK64 = (1 << 64) - 1
BLOCK_SIZE = 1 << 16
SCHEMES = ("full-truncation-euler",)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derived_seed(seed: int, index: int) -> int:
    return (seed & MASK64) ^ splitmix64(index)


def worker_count(n_streams: int) -> int:
    env = os.environ.get("DENSYM_THREADS")
    limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(n_streams, limit))


@dataclass(frozen=True)
class MCConfig:
    n_paths: int
    n_steps: int
    seed: int = 0
    n_streams: int = 1
    scheme: str = "full-truncation-euler"

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1 or self.n_streams < 1:
            raise InvalidModel("n_paths, n_steps and n_streams must be >= 1")
        if self.n_paths % self.n_streams:
            raise InvalidModel("n_paths must be divisible by n_streams")
        if self.scheme not in SCHEMES:
            raise InvalidModel(f"unknown scheme {self.scheme!r}")

    def replace(self, **changes) -> "MCConfig":
        fields = dict(n_paths=self.n_paths, n_steps=self.n_steps, seed=self.seed,
                      n_streams=self.n_streams, scheme=self.scheme)
        fields.update(changes)
        return MCConfig(**fields)


@dataclass(frozen=True)
class MCEstimate:
    value: float
    std_error: float
    n_paths: int
    seed: int

    @classmethod
    def from_samples(cls, values: np.ndarray, seed: int) -> "MCEstimate":
        n = values.size
        se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(values)), se, n, seed)


@dataclass
class TerminalSamples:
    y: np.ndarray
    z: np.ndarray
    seed: int

    def __len__(self):
        return self.y.size


def bump(t):
    """Polynomial bump ``(1 - t^2)^4`` on ``|t| < 1``."""
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, (1.0 - t * t) ** 4, 0.0)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
# degree-8 polynomial: the 8-point rule is exact
_BUMP_MASS = float(np.sum(_GL_WEIGHTS * (1.0 - _GL_NODES**2) ** 4))


@dataclass(frozen=True)
class BumpDensity:
    """Product of two rescaled polynomial bumps, normalised to unit mass.

    Support is ``[y_center -+ y_half] x [z_center -+ z_half]`` and must lie
    in ``y > 0``.
    """

    y_center: float
    y_half: float
    z_center: float
    z_half: float

    def __post_init__(self):
        if self.y_half <= 0 or self.z_half <= 0:
            raise InvalidModel("half widths must be positive")
        if self.y_center - self.y_half <= 0:
            raise InvalidModel("support must lie in y > 0")

    @property
    def support(self) -> tuple[float, float, float, float]:
        return (self.y_center - self.y_half, self.y_center + self.y_half,
                self.z_center - self.z_half, self.z_center + self.z_half)

    @property
    def peak(self) -> float:
        return 1.0 / (_BUMP_MASS**2 * self.y_half * self.z_half)

    def __call__(self, y, z):
        ty = (np.asarray(y, dtype=float) - self.y_center) / self.y_half
        tz = (np.asarray(z, dtype=float) - self.z_center) / self.z_half
        return self.peak * bump(ty) * bump(tz)

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        return (self.y_center + self.y_half * _sample_bump(rng, n),
                self.z_center + self.z_half * _sample_bump(rng, n))

    def mass(self) -> float:
        y_lo, y_hi, z_lo, z_hi = self.support
        return integrate.dblquad(lambda z, y: float(self(y, z)), y_lo, y_hi, z_lo, z_hi,
                                 epsabs=1e-10, epsrel=1e-10)[0]


def _sample_bump(rng: np.random.Generator, n: int) -> np.ndarray:
    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        t = rng.uniform(-1.0, 1.0, size=2 * need + 16)
        u = rng.uniform(0.0, 1.0, size=t.size)
        accepted = t[u < (1.0 - t * t) ** 4][:need]
        out[filled:filled + accepted.size] = accepted
        filled += accepted.size
    return out


def _simulate_block(model: ModelSpec, x0, initial, n_steps: int, dt: float, seed: int, n: int,
                    offset: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(seed))
    if initial is not None:
        y, z = initial.sample(rng, n)
    else:
        y = np.full(n, float(x0[0]))
        z = np.full(n, float(x0[1]))
    b1, b2 = model.beta1.func, model.beta2.func
    s1, s2 = model.sigma1.func, model.sigma2.func
    sq = math.sqrt(dt)
    lam = model.lam
    lamc = math.sqrt(1.0 - lam * lam)
    for step in range(n_steps):
        dw = rng.standard_normal((2, n))
        yp = np.maximum(y, 0.0)
        dv = dw[0] * sq
        dz = (lam * dw[0] + lamc * dw[1]) * sq
        z = z + b2(yp) * dt + s2(yp) * dz
        y = y + b1(yp) * dt + s1(yp) * dv
        if not math.isfinite(float(y.sum() + z.sum())):
            bad = int(np.flatnonzero(~(np.isfinite(y) & np.isfinite(z)))[0])
            raise NonFiniteState(f"non-finite state at step {step + 1}, path {offset + bad}")
    return np.maximum(y, 0.0), z


def simulate_paths(model: ModelSpec, x0: Sequence[float] | None, cfg: MCConfig,
                   initial: BumpDensity | None = None) -> TerminalSamples:
    """Terminal values of the full-truncation Euler scheme.

    Coefficients are evaluated at ``max(Y, 0)``; reported ``Y`` is truncated
    at 0. Exactly one of ``x0`` and ``initial`` is used (``initial`` wins).
    """
    model.check()
    if initial is None:
        if x0 is None or len(x0) != 2:
            raise InvalidModel("x0 must be a point (y, z)")
        if x0[0] < 0:
            raise DomainError("initial y must be >= 0")
    dt = model.horizon_T / cfg.n_steps
    n_blocks = -(-cfg.n_paths // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, cfg.n_paths - b * BLOCK_SIZE) for b in range(n_blocks)]
    ys: list = [None] * n_blocks
    zs: list = [None] * n_blocks

    def run_stream(stream: int):
        for b in range(stream, n_blocks, cfg.n_streams):
            ys[b], zs[b] = _simulate_block(model, x0, initial, cfg.n_steps, dt,
                                           derived_seed(cfg.seed, b), sizes[b], b * BLOCK_SIZE)

    workers = worker_count(cfg.n_streams)
    if workers == 1:
        for s in range(cfg.n_streams):
            run_stream(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_stream, range(cfg.n_streams)))
    return TerminalSamples(np.concatenate(ys), np.concatenate(zs), cfg.seed)


def estimate_expectation(model: ModelSpec, g: Callable, x0_or_density, cfg: MCConfig) -> MCEstimate:
    """Estimate ``E g(X_T)`` from a point or a `BumpDensity` initial law."""
    if isinstance(x0_or_density, BumpDensity):
        samples = simulate_paths(model, None, cfg, initial=x0_or_density)
    else:
        samples = simulate_paths(model, x0_or_density, cfg)
    values = np.broadcast_to(np.asarray(g(samples.y, samples.z), dtype=float), samples.y.shape)
    return MCEstimate.from_samples(values, cfg.seed)


def _q_contributions(y: np.ndarray, z: np.ndarray, x1: float, rho: BumpDensity,
                     sd: SpeedDensity) -> np.ndarray:
    rv = np.asarray(rho(y, z))
    out = np.zeros_like(y)
    live = (y > 0.0) & (rv > 0.0)
    if np.any(live):
        log_ratio = sd.log_mu(x1) - np.asarray(sd.log_mu(y[live]))
        out[live] = rv[live] * np.exp(log_ratio)
    y_lo, y_hi, z_lo, z_hi = rho.support
    if y_lo <= 0.0 <= y_hi:
        on_boundary = (y == 0.0) & (z >= z_lo) & (z <= z_hi)
        if on_boundary.mean() > 1e-3:
            warnings.warn("paths ending at y = 0 inside the initial-density support", BoundaryMassWarning)
    return out


def estimate_q(tmodel: TransformedModel, sd: SpeedDensity, rho: BumpDensity,
               x: Sequence[float], cfg: MCConfig) -> MCEstimate:
    """Density of ``X_T`` (started from ``rho``) at ``x`` via the transformed model.

    ``q(T, x) = mu(x1) E[rho(X~_T^x) / mu(Y_T)]``, with the speed-density
    factors combined as one ratio.
    """
    if not x[0] > 0.0:
        raise DomainError("q is only defined for y > 0")
    samples = simulate_paths(tmodel.as_model(), x, cfg)
    return MCEstimate.from_samples(_q_contributions(samples.y, samples.z, x[0], rho, sd), cfg.seed)


def estimate_q_grid(tmodel: TransformedModel, sd: SpeedDensity, rho: BumpDensity,
                    y_nodes: Sequence[float], z_nodes: Sequence[float],
                    cfg: MCConfig) -> tuple[np.ndarray, np.ndarray]:
    """``estimate_q`` on a tensor grid, returning ``(values, std_errors)`` of shape (ny, nz).

    The transformed ``Z`` increment does not depend on the starting ``z``, so
    one simulation per ``y`` node serves the whole row (common random
    numbers along ``z``). Row ``i`` uses seed ``derived_seed(seed, 2**32 + i)``.
    """
    y_nodes = np.asarray(y_nodes, dtype=float)
    z_nodes = np.asarray(z_nodes, dtype=float)
    values = np.zeros((y_nodes.size, z_nodes.size))
    errors = np.zeros_like(values)
    model = tmodel.as_model()
    for i, y0 in enumerate(y_nodes):
        if not y0 > 0.0:
            raise DomainError("q is only defined for y > 0")
        row_cfg = cfg.replace(seed=derived_seed(cfg.seed, (1 << 32) + i))
        samples = simulate_paths(model, (y0, 0.0), row_cfg)
        for j, z0 in enumerate(z_nodes):
            est = MCEstimate.from_samples(
                _q_contributions(samples.y, samples.z + z0, y0, rho, sd), row_cfg.seed)
            values[i, j], errors[i, j] = est.value, est.std_error
    return values, errors
