"""Decoupled two-dimensional diffusion models and the drift transform.

A model is the system

    dY = beta1(Y) dt + sigma1(Y) dV
    dZ = beta2(Y) dt + sigma2(Y) dW,     d<V, W> = lam dt,

with ``Y >= 0``. All coefficients depend on the first coordinate only. The
transformed model keeps ``beta1`` and the volatilities and replaces the
second drift by ``2 a11 h' + 2 beta1 h - beta2`` with ``h = lam sigma2/sigma1``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DegenerateSigma, InvalidModel, NonFiniteCoefficient
from .expr import compile_expression

PRESETS = ("heston", "cir-rate-logprice", "custom")
CONVENTIONS = ("adjoint", "literal")
# right-limit point used for beta2_tilde at r = 0 when the direct value is 0/0
R_FLOOR = 1e-8


def _shaped(out, r):
    r = np.asarray(r, dtype=float)
    out = np.broadcast_to(np.asarray(out, dtype=float), r.shape)
    if out.ndim == 0:
        return float(out)
    return np.array(out)


@dataclass(frozen=True)
class CoefficientFn:
    """Scalar coefficient on ``[0, inf)``, extended to ``r < 0`` by its value at 0.

    ``func`` must accept numpy arrays. Without ``dfunc`` the derivative is a
    central difference with step ``max(1e-6, 1e-6 r)``.
    """

    func: Callable
    dfunc: Callable | None = None
    kind: str = "closed-form-preset"
    name: str = ""

    def eval(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(all="ignore"):
            out = self.func(np.maximum(r, 0.0))
        return _shaped(out, r)

    __call__ = eval

    def deriv(self, r):
        r = np.asarray(r, dtype=float)
        if self.dfunc is not None:
            with np.errstate(all="ignore"):
                out = np.where(r < 0.0, 0.0, self.dfunc(np.maximum(r, 0.0)))
            return _shaped(out, r)
        step = np.maximum(1e-6, 1e-6 * np.abs(r))
        out = (np.asarray(self.eval(r + step)) - np.asarray(self.eval(r - step))) / (2.0 * step)
        return _shaped(out, r)

    @property
    def uses_fd(self) -> bool:
        return self.dfunc is None


def constant(value: float, name: str = "") -> CoefficientFn:
    value = float(value)
    return CoefficientFn(lambda r: value + 0.0 * r, lambda r: 0.0 * r, name=name or repr(value))


ZERO = constant(0.0, "0")


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients, correlation and horizon of a decoupled system."""

    beta1: CoefficientFn
    beta2: CoefficientFn
    sigma1: CoefficientFn
    sigma2: CoefficientFn
    lam: float
    horizon_T: float = 1.0
    preset: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    # closed form of sigma2/sigma1 when the plain quotient is 0/0 at r = 0
    sigma_ratio: CoefficientFn | None = None
    r_max: float | None = None
    transformed: bool = False

    def __post_init__(self):
        if not abs(self.lam) < 1.0:
            raise InvalidModel(f"correlation must satisfy |lambda| < 1, got {self.lam}")
        if not self.horizon_T > 0.0:
            raise InvalidModel(f"horizon_T must be positive, got {self.horizon_T}")
        if self.preset not in PRESETS:
            raise InvalidModel(f"unknown preset {self.preset!r}")

    @property
    def typical_scale(self) -> float | None:
        a, b = self.params.get("a"), self.params.get("b")
        if a is not None and b is not None and b > 0 and a > 0:
            return a / b
        return None

    @property
    def rmax(self) -> float:
        if self.r_max is not None:
            return float(self.r_max)
        scale = self.typical_scale
        return 50.0 * scale if scale is not None else 50.0

    @property
    def is_cir(self) -> bool:
        """True when Y is a CIR process with closed-form speed density."""
        return self.preset in ("heston", "cir-rate-logprice")

    def sample_grid(self, n: int = 64) -> np.ndarray:
        return np.logspace(-7, math.log10(self.rmax), n)

    def check(self, grid: Sequence[float] | None = None) -> None:
        """Raise `InvalidModel` unless the boundary and positivity requirements hold."""
        r = np.asarray(self.sample_grid() if grid is None else grid, dtype=float)
        r = r[r > 0]
        if abs(self.sigma1(0.0)) > 1e-14:
            raise InvalidModel(f"sigma1(0) must be 0, got {self.sigma1(0.0)}")
        if self.beta1(0.0) < 0.0:
            raise InvalidModel(f"beta1(0) must be >= 0, got {self.beta1(0.0)}")
        s1 = np.asarray(self.sigma1(r))
        if not np.all(s1 > 0.0):
            bad = r[~(s1 > 0.0)][0]
            raise InvalidModel(f"sigma1 must be positive for r > 0; sigma1({bad:g}) = {self.sigma1(bad)}")
        s2 = np.asarray(self.sigma2(np.concatenate([[0.0], r])))
        if not np.all(s2 >= 0.0):
            raise InvalidModel("sigma2 must be nonnegative")

    def replace(self, **changes) -> "ModelSpec":
        return dataclasses.replace(self, **changes)


def heston(a: float, b: float, sigma: float, lam: float, horizon_T: float = 1.0,
           r_max: float | None = None) -> ModelSpec:
    """Variance ``Y`` is CIR, ``Z`` is the log-price."""
    if sigma <= 0:
        raise InvalidModel("sigma must be positive")
    return ModelSpec(
        beta1=CoefficientFn(lambda r: a - b * r, lambda r: -b + 0.0 * r, name="a-b*r"),
        beta2=CoefficientFn(lambda r: -0.5 * r, lambda r: -0.5 + 0.0 * r, name="-r/2"),
        sigma1=CoefficientFn(lambda r: sigma * np.sqrt(r), lambda r: 0.5 * sigma / np.sqrt(r),
                             name="sigma*sqrt(r)"),
        sigma2=CoefficientFn(np.sqrt, lambda r: 0.5 / np.sqrt(r), name="sqrt(r)"),
        lam=lam,
        horizon_T=horizon_T,
        preset="heston",
        params={"a": a, "b": b, "sigma": sigma},
        sigma_ratio=constant(1.0 / sigma, "1/sigma"),
        r_max=r_max,
    )


def cir_rate_logprice(a: float, b: float, sigma: float, nu: float, lam: float = 0.0,
                      horizon_T: float = 1.0, r_max: float | None = None) -> ModelSpec:
    """CIR short rate ``Y`` with log-price ``dZ = (Y - nu^2/2) dt + nu dW`` (no killing)."""
    if sigma <= 0:
        raise InvalidModel("sigma must be positive")
    return ModelSpec(
        beta1=CoefficientFn(lambda r: a - b * r, lambda r: -b + 0.0 * r, name="a-b*r"),
        beta2=CoefficientFn(lambda r: r - 0.5 * nu**2, lambda r: 1.0 + 0.0 * r, name="r-nu^2/2"),
        sigma1=CoefficientFn(lambda r: sigma * np.sqrt(r), lambda r: 0.5 * sigma / np.sqrt(r),
                             name="sigma*sqrt(r)"),
        sigma2=constant(nu, "nu"),
        lam=lam,
        horizon_T=horizon_T,
        preset="cir-rate-logprice",
        params={"a": a, "b": b, "sigma": sigma, "nu": nu},
        sigma_ratio=CoefficientFn(lambda r: nu / (sigma * np.sqrt(r)),
                                  lambda r: -0.5 * nu / (sigma * r**1.5), name="nu/(sigma*sqrt(r))"),
        r_max=r_max,
    )


def custom(beta1: str, beta2: str, sigma1: str, sigma2: str, lam: float,
           horizon_T: float = 1.0, params: Mapping[str, float] | None = None,
           r_max: float | None = None) -> ModelSpec:
    """Model from expression strings in the variable ``r`` (see `densym.expr`)."""
    params = dict(params or {})

    def coef(text):
        return CoefficientFn(compile_expression(text, params), None, kind="user-expression", name=text)

    return ModelSpec(coef(beta1), coef(beta2), coef(sigma1), coef(sigma2), lam=lam,
                     horizon_T=horizon_T, preset="custom", params=params, r_max=r_max)


def coefficient_a(model: ModelSpec, i: int, j: int, r):
    """Diffusion matrix entry ``lam_ij sigma_i sigma_j / 2`` with ``lam_ii = 1``."""
    if i not in (1, 2) or j not in (1, 2):
        raise ValueError("indices must be 1 or 2")
    sig = {1: model.sigma1, 2: model.sigma2}
    weight = 1.0 if i == j else model.lam
    if weight == 0.0:
        return _shaped(0.0, r)
    out = weight * np.asarray(sig[i](r)) * np.asarray(sig[j](r)) / 2.0
    if not np.all(np.isfinite(out)):
        raise NonFiniteCoefficient(f"a_{i}{j} is not finite on the requested points")
    return _shaped(out, r)


def _a_fn(model: ModelSpec, i: int, j: int) -> CoefficientFn:
    sig = {1: model.sigma1, 2: model.sigma2}
    weight = 1.0 if i == j else model.lam
    si, sj = sig[i], sig[j]
    dfunc = None
    if si.dfunc is not None and sj.dfunc is not None:
        def dfunc(r):
            return weight * (si.dfunc(r) * sj.func(r) + si.func(r) * sj.dfunc(r)) / 2.0
    return CoefficientFn(lambda r: weight * si.func(r) * sj.func(r) / 2.0, dfunc,
                         kind=si.kind, name=f"a{i}{j}")


@dataclass(frozen=True)
class TransformedModel:
    base: ModelSpec
    beta2_tilde: CoefficientFn
    h: CoefficientFn
    a11: CoefficientFn
    a12: CoefficientFn
    a22: CoefficientFn
    convention: str = "adjoint"

    def as_model(self) -> ModelSpec:
        """The system driven by the transformed drift, for simulation or PDE solves."""
        return self.base.replace(beta2=self.beta2_tilde, transformed=True)


def _h_functions(model: ModelSpec) -> tuple[Callable, Callable, bool]:
    lam = model.lam
    if lam == 0.0:
        return (lambda r: 0.0 * r), (lambda r: 0.0 * r), False
    if model.sigma_ratio is not None:
        ratio = model.sigma_ratio
        if ratio.dfunc is not None:
            return (lambda r: lam * ratio.func(r)), (lambda r: lam * ratio.dfunc(r)), False
    s1, s2 = model.sigma1, model.sigma2

    def h(r):
        return lam * s2.func(r) / s1.func(r)

    if s1.dfunc is not None and s2.dfunc is not None:
        def dh(r):
            v1 = s1.func(r)
            return lam * (s2.dfunc(r) * v1 - s2.func(r) * s1.dfunc(r)) / v1**2
        return h, dh, False

    def dh(r):
        step = np.maximum(1e-6, 1e-6 * np.abs(r))
        # h is undefined at 0, so fall back to a forward difference there
        left = np.where(r - step > 0.0, r - step, r)
        return (h(r + step) - h(left)) / (r + step - left)

    return h, dh, True


def build_transformed(model: ModelSpec, convention: str = "adjoint",
                      grid: Sequence[float] | None = None) -> TransformedModel:
    """Build the transformed model used by the backward density representation.

    ``convention="adjoint"`` uses ``2 a11 h' + 2 beta1 h - beta2``, which is the
    drift for which ``L*(mu v) = mu L~ v`` holds. ``"literal"`` keeps ``+beta2``
    and reproduces the drift printed for the Heston example; it is exposed for
    comparison only.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    r = np.asarray(model.sample_grid() if grid is None else grid, dtype=float)
    r = r[r > 0]
    s1 = np.asarray(model.sigma1(r))
    if np.any(s1 == 0.0):
        raise DegenerateSigma(f"sigma1 vanishes at r = {r[s1 == 0.0][0]:g} > 0")
    sign = -1.0 if convention == "adjoint" else 1.0
    h, dh, h_fd = _h_functions(model)
    b1, b2 = model.beta1.func, model.beta2.func
    s1f = model.sigma1.func

    def correction(r):
        a11 = 0.5 * s1f(r) ** 2
        return 2.0 * a11 * dh(r) + 2.0 * b1(r) * h(r)

    def raw(r):
        return correction(r) + sign * b2(r)

    def beta2_tilde(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(all="ignore"):
            out = np.asarray(raw(r), dtype=float)
            bad = ~np.isfinite(out)
            if np.any(bad & (r <= 0.0)):
                out = np.where(bad & (r <= 0.0), raw(np.full_like(r, R_FLOOR)), out)
            if np.any(bad & (r > 0.0)):
                s1v = np.asarray(s1f(r))
                if np.any((s1v == 0.0) & (r > 0.0)):
                    raise DegenerateSigma("sigma1 vanishes at a positive r")
                raise NonFiniteCoefficient("beta2_tilde is not finite at a positive r")
        return out

    def h_ext(r):
        with np.errstate(all="ignore"):
            out = np.asarray(h(r), dtype=float)
            return np.where(np.isfinite(out), out, h(np.full_like(out, R_FLOOR)))

    dh_ext = None if h_fd else dh
    vals = np.asarray(beta2_tilde(r))
    if not np.all(np.isfinite(vals)):
        raise NonFiniteCoefficient("beta2_tilde is not finite on the sample grid")
    return TransformedModel(
        base=model,
        beta2_tilde=CoefficientFn(beta2_tilde, None, kind=model.beta2.kind, name="beta2_tilde"),
        h=CoefficientFn(h_ext, dh_ext, kind=model.sigma1.kind, name="h"),
        a11=_a_fn(model, 1, 1),
        a12=_a_fn(model, 1, 2),
        a22=_a_fn(model, 2, 2),
        convention=convention,
    )


# ---------------------------------------------------------------------------
# assumption checks

ASSUMPTION_ITEMS = (
    "symmetry.holder_continuity",
    "symmetry.boundary_and_growth",
    "symmetry.h_regularity",
    "symmetry.approx_convergence",
    "symmetry.approx_ellipticity",
    "symmetry.approx_h_derivative",
    "pde.linear_growth",
    "pde.positivity",
    "pde.continuity",
    "pde.c1_regularity",
    "pde.diffusion_comparability",
    "pde.non_exit",
)

PASS, FAIL, UNVERIFIABLE = "pass", "fail", "unverifiable"


@dataclass
class AssumptionCheck:
    item: str
    status: str
    detail: str
    evidence: dict = field(default_factory=dict)


@dataclass
class AssumptionReport:
    checks: list[AssumptionCheck]
    growth_constant_estimate: float
    notes: list[str] = field(default_factory=list)

    def status(self, item: str) -> str:
        return next(c.status for c in self.checks if c.item == item)

    @property
    def all_pass(self) -> bool:
        return all(c.status == PASS for c in self.checks)


def _finite(*arrays) -> bool:
    return all(np.all(np.isfinite(np.asarray(a))) for a in arrays)


def _growth_ratio(model: ModelSpec, r: np.ndarray) -> np.ndarray:
    return (np.abs(model.beta1(r)) + np.abs(model.sigma1(r))) / (1.0 + r)


def _superlinear(ratio: np.ndarray) -> bool:
    top = ratio[-max(3, len(ratio) // 4):]
    return bool(np.all(np.diff(top) > 0) and ratio[-1] > 1.5 * np.max(ratio[: len(ratio) // 2 + 1]))


def non_exit_trend(model: ModelSpec, decades: Sequence[int] = tuple(range(2, 9))) -> dict:
    """Decade-by-decade partial integrals of the non-exit integrand near 0.

    Works in log space on ``t = log r``. The integral is classified as divergent
    when every decade contributes positively and the last two decade ratios
    are at least 0.95 (log-type or faster growth).
    """
    lo = -float(max(decades)) * math.log(10.0) - 1.0
    t = np.linspace(lo, 0.0, 20001)
    r = np.exp(t)
    with np.errstate(all="ignore"):
        a11 = 0.5 * np.asarray(model.sigma1(r)) ** 2
        g = np.asarray(model.beta1(r)) / a11 * r
    if not _finite(g):
        return {"divergent": False, "reason": "integrand not finite near 0"}
    # phi(r) = int_1^r beta1/a11
    phi = cumulative_trapezoid(g, t, initial=0.0)
    phi -= phi[-1]
    # inner(r) = int_r^1 exp(phi(s)) ds, accumulated from the right in log space
    log_terms = phi + t
    dt = t[1] - t[0]
    seg = np.logaddexp(log_terms[:-1], log_terms[1:]) + math.log(0.5 * dt)
    log_inner = np.empty_like(t)
    log_inner[-1] = -np.inf
    log_inner[:-1] = np.logaddexp.accumulate(seg[::-1])[::-1]
    log_f = log_inner - phi - np.log(a11) + t
    partial = {}
    for k in decades:
        sel = (t >= -(k + 1) * math.log(10.0)) & (t <= -k * math.log(10.0))
        vals = log_f[sel]
        partial[k] = float(np.logaddexp.reduce(vals) + math.log(dt)) if vals.size else -np.inf
    logs = np.array([partial[k] for k in decades])
    ratios = np.exp(np.diff(logs))
    divergent = bool(np.all(np.isfinite(logs)) and ratios.size >= 2 and np.all(ratios[-2:] >= 0.95))
    return {"divergent": divergent, "log_decade_integrals": logs.tolist(), "ratios": ratios.tolist()}


def validate_assumptions(model: ModelSpec, grid: Sequence[float] | None = None) -> AssumptionReport:
    """Check the structural assumptions on a sampled grid.

    Uniform statements are only checked on the samples and reported as
    ``pass`` with a ``(sampled)`` detail. Presets with a CIR first component
    use closed-form classifications where available.
    """
    r = np.asarray(model.sample_grid() if grid is None else grid, dtype=float)
    r = np.unique(r[r > 0])
    if r.size == 0:
        raise ValueError("grid must contain positive points")
    r0 = np.concatenate([[0.0], r])
    small = np.array([1e-3, 1e-4, 1e-5, 1e-6, 1e-7])
    checks: dict[str, AssumptionCheck] = {}
    notes: list[str] = []

    def add(item, ok, detail, **evidence):
        status = ok if isinstance(ok, str) else (PASS if ok else FAIL)
        checks[item] = AssumptionCheck(item, status, detail, evidence)

    with np.errstate(all="ignore"):
        b1, b2 = np.asarray(model.beta1(r0)), np.asarray(model.beta2(r0))
        s1, s2 = np.asarray(model.sigma1(r0)), np.asarray(model.sigma2(r0))
    finite = _finite(b1, b2, s1, s2)

    # local Hoelder/Lipschitz quotient
    dr = np.diff(r0)
    quotient = (np.abs(np.diff(b1)) + np.diff(s1) ** 2) / dr
    qmax = float(np.max(quotient)) if finite else float("inf")
    add("symmetry.holder_continuity", finite and qmax <= 1e8,
        "continuity and local Hoelder-1/2 bound (sampled)" if finite else "non-finite coefficient values",
        max_quotient=qmax)

    ratio = _growth_ratio(model, r0)
    growth_n = float(np.max(ratio)) if finite else float("inf")
    boundary_ok = b1[0] >= 0.0 and abs(s1[0]) <= 1e-14
    positive = bool(np.all(s1[1:] > 0.0)) and bool(np.all(s2 >= 0.0))
    superlinear = finite and _superlinear(ratio)
    problems = []
    if b1[0] < 0.0:
        problems.append(f"beta1(0) = {b1[0]:g} < 0")
    if abs(s1[0]) > 1e-14:
        problems.append(f"sigma1(0) = {s1[0]:g} != 0")
    if not positive:
        problems.append("sigma1 > 0 / sigma2 >= 0 violated on grid")
    if superlinear:
        problems.append("growth ratio increasing at the top of the grid")
    add("symmetry.boundary_and_growth", finite and boundary_ok and positive and not superlinear,
        "; ".join(problems) or "boundary values, positivity, linear growth (sampled)",
        beta1_0=float(b1[0]), sigma1_0=float(s1[0]), growth_constant=growth_n)

    # h regularity and a11 h'(0) = 0
    if model.lam == 0.0:
        add("symmetry.h_regularity", True, "lambda = 0: h vanishes identically")
        h_ok = True
    else:
        h, dh, h_fd = _h_functions(model)
        with np.errstate(all="ignore"):
            hv, dhv = h(r), dh(r)
            a11h = 0.5 * np.asarray(model.sigma1(small)) ** 2 * dh(small)
            b1h = np.asarray(model.beta1(small)) * h(small)
        ok_finite = _finite(hv, dhv, a11h, b1h)
        mags = np.abs(a11h)
        lim_ok = ok_finite and (bool(np.all(np.diff(mags) <= 1e-15)) and mags[-1] < 1e-6)
        b1h_ok = ok_finite and abs(b1h[-1] - b1h[-2]) <= 1e-3 * (1.0 + abs(b1h[-2]))
        h_ok = lim_ok and b1h_ok
        detail = []
        if not ok_finite:
            detail.append("h, h' or products not finite near 0")
        if ok_finite and not lim_ok:
            detail.append("|a11 h'| does not decrease below 1e-6 as r -> 0")
        if ok_finite and not b1h_ok:
            detail.append("beta1 h has no numerical limit at 0")
        add("symmetry.h_regularity", h_ok, "; ".join(detail) or "a11 h'(0) = 0 and beta1 h continuous (limit test)",
            a11_hprime=mags.tolist(), beta1_h=np.asarray(b1h).tolist(), fd_derivative=h_fd)

    # existence of smooth approximations: sufficient conditions only
    base_ok = checks["symmetry.holder_continuity"].status == PASS and \
        checks["symmetry.boundary_and_growth"].status == PASS
    ratio_const = False
    if model.sigma_ratio is not None:
        rv = np.asarray(model.sigma_ratio(r))
        ratio_const = _finite(rv) and np.ptp(rv) <= 1e-10 * max(1.0, float(np.max(np.abs(rv))))
    else:
        with np.errstate(all="ignore"):
            rv = s2[1:] / s1[1:]
        ratio_const = _finite(rv) and np.ptp(rv) <= 1e-10 * max(1.0, float(np.max(np.abs(rv))))
    if base_ok and model.lam == 0.0:
        approx = (PASS, "sufficient: lambda = 0")
    elif base_ok and ratio_const:
        approx = (PASS, "sufficient: sigma2 = c sigma1")
    elif base_ok and h_ok and _finite(model.sigma1.deriv(r), model.sigma2.deriv(r)):
        approx = (PASS, "sufficient: C1 volatilities with regular h")
    else:
        approx = (UNVERIFIABLE, "no sufficient condition applies; approximation sequence cannot be sampled")
    for item in ("symmetry.approx_convergence", "symmetry.approx_ellipticity", "symmetry.approx_h_derivative"):
        add(item, approx[0], approx[1])

    add("pde.linear_growth", finite and not superlinear,
        "linear growth of |sigma1| + |beta1| (sampled)", growth_constant=growth_n)

    both_pos = bool(np.all(s1[1:] > 0.0) and np.all(s2[1:] > 0.0))
    add("pde.positivity", both_pos and boundary_ok,
        "sigma_i > 0 on r > 0, sigma1(0) = 0, beta1(0) >= 0" if both_pos and boundary_ok
        else "positivity or boundary values violated")

    tiny = np.array([R_FLOOR])
    cont = []
    for c in (model.beta1, model.beta2, model.sigma1, model.sigma2):
        v0, v1 = c(0.0), float(np.asarray(c(tiny))[0])
        cont.append(math.isfinite(v0) and math.isfinite(v1) and abs(v1 - v0) <= 1e-3 * (1.0 + abs(v0)))
    add("pde.continuity", finite and all(cont), "continuity at 0 and smoothness on the grid (sampled)")

    a11 = _a_fn(model, 1, 1)
    a22 = _a_fn(model, 2, 2)
    rr = np.concatenate([tiny, r])
    with np.errstate(all="ignore"):
        derivs = [model.beta1.deriv(rr), model.beta2.deriv(rr), a11.deriv(rr), a22.deriv(rr)]
    bounded = _finite(*derivs) and all(float(np.max(np.abs(d))) <= 1e8 for d in derivs)
    add("pde.c1_regularity", bounded, "beta_i, a_ii continuously differentiable up to 0 (sampled)",
        max_abs_derivs=[float(np.max(np.abs(d))) if _finite(d) else float("inf") for d in derivs])

    if model.lam == 0.0:
        add("pde.diffusion_comparability", True, "lambda = 0")
    else:
        near = np.concatenate([small, r[r <= 1e-2]])
        with np.errstate(all="ignore"):
            q = np.asarray(model.sigma1(near)) / np.asarray(model.sigma2(near))
            a12d = _a_fn(model, 1, 2).deriv(np.concatenate([tiny, near]))
        ok = _finite(q, a12d) and np.all(q > 0) and np.max(q) / np.min(q) <= 1e6
        add("pde.diffusion_comparability", ok,
            "sigma1/sigma2 bounded above and below near 0, a12 C1 (sampled)" if ok
            else "sigma1/sigma2 not comparable near 0 or a12 not C1",
            ratio_range=[float(np.min(q)), float(np.max(q))] if _finite(q) else None)

    if model.is_cir:
        a = model.params["a"]
        add("pde.non_exit", a >= 0.0, f"closed form: CIR boundary 0 is not exit iff a >= 0 (a = {a:g})")
    else:
        trend = non_exit_trend(model)
        add("pde.non_exit", trend["divergent"],
            "decade partial integrals grow without ceiling" if trend["divergent"]
            else "decade partial integrals appear to converge", **trend)

    if model.lam != 0.0:
        notes.append(f"beta2_tilde(0) is taken as the right limit at r = {R_FLOOR:g} when the direct value is undefined")
    return AssumptionReport([checks[k] for k in ASSUMPTION_ITEMS], growth_n, notes)
