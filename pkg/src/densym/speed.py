"""Speed density of the first component, evaluated in log form.

    mu(r) = 1/a11(r) * exp( int_base^r beta1(l)/a11(l) dl )

The integral is computed in ``s = log l`` where the typical ``1/l``
singularity of ``beta1/a11`` at the origin becomes bounded. Unit-width
panels in ``s`` are integrated by adaptive Gauss-Kronrod (7/15) and memoised;
a query adds the partial panel ``[floor(s), s]``.
"""
from __future__ import annotations

import heapq
import math

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError, NonFiniteCoefficient, QuadratureFailure
from .model import ModelSpec

# Kronrod 15-point abscissae (positive half, descending) and weights; the
# odd-indexed abscissae are the 7-point Gauss nodes.
_XK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_X15 = np.concatenate([-_XK[:-1], _XK[::-1]])
_W15 = np.concatenate([_WK[:-1], _WK[::-1]])
_W7 = np.zeros(15)
_W7[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])

BACKENDS = ("quadrature", "closed-form-heston", "closed-form-cir")


def gauss_kronrod(f, a, b):
    """Vectorised G7/K15 rule on ``[a, b]``; returns ``(kronrod, |kronrod - gauss|)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = center[..., None] + half[..., None] * _X15
    fx = np.asarray(f(x), dtype=float)
    k15 = half * (fx @ _W15)
    g7 = half * (fx @ _W7)
    return k15, np.abs(k15 - g7)


def adaptive_gk(f, a: float, b: float, rtol: float = 1e-10, atol: float = 1e-13,
                max_intervals: int = 2000) -> float:
    """Globally adaptive G7/K15 quadrature of a vectorised integrand."""
    if a == b:
        return 0.0
    val, err = gauss_kronrod(f, np.array([a]), np.array([b]))
    heap = [(-float(err[0]), a, b, float(val[0]))]
    total, total_err = float(val[0]), float(err[0])
    while total_err > max(atol, rtol * abs(total)):
        if len(heap) >= max_intervals or not math.isfinite(total):
            raise QuadratureFailure(
                f"quadrature on [{a:g}, {b:g}] did not reach tolerance (estimate {total_err:.3g})")
        neg_err, lo, hi, v = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        vals, errs = gauss_kronrod(f, np.array([lo, mid]), np.array([mid, hi]))
        total += float(vals.sum()) - v
        total_err += float(errs.sum()) + neg_err
        heapq.heappush(heap, (-float(errs[0]), lo, mid, float(vals[0])))
        heapq.heappush(heap, (-float(errs[1]), mid, hi, float(vals[1])))
    # re-sum in interval order so the result does not depend on heap history
    return float(sum(v for _, lo, _, v in sorted(heap, key=lambda item: item[1])))


class SpeedDensity:
    """Speed density of ``model``'s first component, normalised at ``base_point``.

    ``backend="auto"`` picks the closed form when ``Y`` is a CIR process and
    quadrature otherwise. The panel memo is an insert-only dict; concurrent
    callers may duplicate work but always see complete values.
    """

    def __init__(self, model: ModelSpec, base_point: float = 1.0, backend: str = "auto",
                 r_max: float | None = None, rtol: float = 1e-10, use_cache: bool = True):
        if not base_point > 0:
            raise DomainError("base_point must be positive")
        if backend == "auto":
            backend = {"heston": "closed-form-heston", "cir-rate-logprice": "closed-form-cir"}.get(
                model.preset, "quadrature")
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        if backend != "quadrature" and not model.is_cir:
            raise ValueError(f"{backend} requires a CIR first component")
        self.model = model
        self.base_point = float(base_point)
        self.backend = backend
        self.r_max = float(r_max) if r_max is not None else model.rmax
        self.rtol = rtol
        self.use_cache = use_cache
        self._panels: dict[int, float] = {}
        self._spline: tuple[float, float, CubicSpline] | None = None

    # -- quadrature backend ------------------------------------------------
    def _integrand(self, s):
        l = np.exp(s)
        with np.errstate(all="ignore"):
            a11 = 0.5 * np.asarray(self.model.sigma1(l)) ** 2
            out = np.asarray(self.model.beta1(l)) / a11 * l
        if not np.all(np.isfinite(out)):
            raise NonFiniteCoefficient("beta1/a11 is not finite on the integration path")
        return out

    def _panel(self, k: int) -> float:
        if self.use_cache and k in self._panels:
            return self._panels[k]
        val = adaptive_gk(self._integrand, float(k), float(k + 1), rtol=self.rtol, atol=1e-14)
        if self.use_cache:
            self._panels[k] = val
        return val

    def _anchor(self, k: int) -> float:
        # integral over s in [0, k], summed outward from 0 in a fixed order
        if k >= 0:
            return math.fsum(self._panel(j) for j in range(0, k))
        return -math.fsum(self._panel(j) for j in range(k, 0))

    def _cumulative(self, s: np.ndarray) -> np.ndarray:
        """Integral of the s-integrand over ``[0, s]``."""
        k = np.floor(s)
        partial, err = gauss_kronrod(self._integrand, k, s)
        bad = err > np.maximum(1e-14, self.rtol * np.abs(partial))
        for idx in np.flatnonzero(bad):
            partial[idx] = adaptive_gk(self._integrand, float(k[idx]), float(s[idx]),
                                       rtol=self.rtol, atol=1e-14)
        anchors = {int(kk): self._anchor(int(kk)) for kk in np.unique(k)}
        return np.array([anchors[int(kk)] for kk in k]) + partial

    def _log_mu_quadrature(self, r: np.ndarray) -> np.ndarray:
        s = np.log(r)
        base = self._cumulative(np.array([math.log(self.base_point)]))[0]
        with np.errstate(all="ignore"):
            a11 = 0.5 * np.asarray(self.model.sigma1(r)) ** 2
        return -np.log(a11) + (self._cumulative(s) - base)

    def _log_mu_closed(self, r: np.ndarray) -> np.ndarray:
        p = self.model.params
        a, b, sig = p["a"], p["b"], p["sigma"]
        c = 2.0 / sig**2
        base = self.base_point
        return np.log(c / r) + c * a * np.log(r / base) - c * b * (r - base)

    # -- public ----------------------------------------------------------------
    def _check(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if not np.all(np.isfinite(r)) or np.any(r <= 0.0):
            raise DomainError("speed density is defined for 0 < r only")
        if np.any(r > self.r_max):
            raise DomainError(f"r = {float(np.max(r)):g} exceeds r_max = {self.r_max:g}")
        return r

    def log_mu(self, r, interpolate: bool = False):
        """``log mu(r)``; ``interpolate=True`` uses a cubic spline on memoised nodes."""
        r = self._check(r)
        flat = np.atleast_1d(r).ravel()
        if self.backend != "quadrature":
            out = self._log_mu_closed(flat)
        elif interpolate:
            out = self._interpolated(flat)
        else:
            out = self._log_mu_quadrature(flat)
        out = out.reshape(np.shape(r))
        return float(out) if out.ndim == 0 else out

    def _interpolated(self, r: np.ndarray) -> np.ndarray:
        s = np.log(r)
        lo, hi = math.floor(float(s.min())), math.ceil(float(s.max())) + 1
        cached = self._spline
        if cached is None or lo < cached[0] or hi > cached[1]:
            if cached is not None:
                lo, hi = min(lo, cached[0]), max(hi, cached[1])
            nodes = np.arange(lo * 32, hi * 32 + 1) / 32.0
            nodes = nodes[np.exp(nodes) <= self.r_max]
            if nodes.size < 4 or nodes[-1] < s.max():
                nodes = np.append(nodes[nodes < math.log(self.r_max)], math.log(self.r_max))
            spline = CubicSpline(nodes, self._log_mu_quadrature(np.exp(nodes)))
            cached = (lo, hi, spline)
            self._spline = cached
        return cached[2](s)

    def mu(self, r):
        return np.exp(self.log_mu(r))

    def mu_ratio(self, r1, r2):
        """``mu(r1)/mu(r2)`` without forming either factor; independent of ``base_point``."""
        out = np.exp(np.asarray(self.log_mu(r1)) - np.asarray(self.log_mu(r2)))
        return float(out) if np.ndim(out) == 0 else out
