"""Archimedean side: spectral test functions, Bessel-kernel transforms,
Selberg kernel, (modified) Zagier transforms and the weight-2 machinery.

Conventions
-----------
* h is the spectral test function, even in t.
* g(rho) = (1/2pi) int h(t) e^{-i rho t} dt,  Q(v) = g(2 asinh sqrt v) / 2,
  k(u) = -(1/pi) int_u^inf (v-u)^{-1/2} dQ(v): the point-pair kernel.
* H^-(x) = (1/pi) int K_{2it}(x) sinh(pi t) t h(t) dt.
* M is the modified Zagier transform, Mhat(a) = int M(t) e(-a t) dt.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from scipy import integrate as _sint
from scipy import special as _sp

from .numkernel import (ComplexValue, DomainError, Estimate, NonConvergence, QuadratureSpec,
                        bessel_i_imag_scaled, bessel_j1, bessel_k_imag_scaled, composite_nodes,
                        gauss_nodes, gauss_panels, integrate)

FAMILY1 = "family1"
FAMILY2 = "family2"
ZERO = "zero"
CUSTOM = "custom"

SIGMA_GAP = 3.0 / 16.0


class BudgetExceeded(RuntimeError):
    pass


def _sech(x):
    """sech for real or complex arrays without overflow on the real axis."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return 1.0 / np.cosh(x)
    a = np.abs(x)
    e = np.exp(-a)
    return 2.0 * e / (1.0 + e * e)


# ---------------------------------------------------------------------------
# spectral test functions

@dataclass(frozen=True)
class ArchTestFunction:
    """Spectral test function h.

    family1: (t^2 + 1/4)/T^2 [sech((t - T)/D) + sech((t + T)/D)], 1 <= D < T/100
    family2: (t^2 + 1/4)/T^2 exp(-(t/T)^2)
    zero:    h = 0
    custom:  user callable, even, negligible beyond t_max
    """

    variant: str
    T: float = 1.0
    delta: Optional[float] = None
    fn: Optional[Callable] = None
    t_max: Optional[float] = None

    def __post_init__(self):
        if self.variant not in (FAMILY1, FAMILY2, ZERO, CUSTOM):
            raise ValueError(f"unknown test function variant {self.variant!r}")
        if self.variant in (FAMILY1, FAMILY2) and not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be positive")
        if self.variant == FAMILY1:
            d = self.delta
            if d is None or not (1.0 <= d < self.T / 100.0):
                raise ValueError(f"family1 requires 1 <= Delta < T/100 (got T={self.T}, Delta={d})")
        if self.variant == CUSTOM and (self.fn is None or self.t_max is None):
            raise ValueError("custom test functions need fn and t_max")

    @classmethod
    def family1(cls, T: float, delta: float) -> "ArchTestFunction":
        return cls(FAMILY1, float(T), float(delta))

    @classmethod
    def family2(cls, T: float) -> "ArchTestFunction":
        return cls(FAMILY2, float(T))

    @classmethod
    def zero(cls) -> "ArchTestFunction":
        return cls(ZERO)

    def __call__(self, t):
        t = np.asarray(t)
        if self.variant == ZERO:
            return np.zeros_like(t, dtype=complex if np.iscomplexobj(t) else float)
        if self.variant == CUSTOM:
            return self.fn(t)
        T = self.T
        poly = (t * t + 0.25) / (T * T)
        if self.variant == FAMILY2:
            return poly * np.exp(-(t / T) ** 2)
        D = self.delta
        return poly * (_sech((t - T) / D) + _sech((t + T) / D))

    @property
    def is_zero(self) -> bool:
        return self.variant == ZERO

    def cutoff(self) -> float:
        """A point beyond which h is below ~1e-18 of its size."""
        if self.variant == ZERO:
            return 1.0
        if self.variant == CUSTOM:
            return float(self.t_max)
        if self.variant == FAMILY2:
            return self.T * math.sqrt(48.0)
        return self.T + 48.0 * self.delta

    def tail_moment(self, X: float, k: int = 1) -> float:
        """Upper bound for int_X^inf |h(t)| t^k dt."""
        if self.variant == ZERO:
            return 0.0
        if self.variant == CUSTOM:
            return 0.0 if X >= self.t_max else math.inf
        T = self.T
        if self.variant == FAMILY2:
            s = X * X / (T * T)
            out = 0.0
            for j, coef in ((k + 2, 1.0 / (T * T)), (k, 0.25 / (T * T))):
                a = 0.5 * (j + 1)
                out += coef * 0.5 * T ** (j + 1) * _sp.gamma(a) * _sp.gammaincc(a, s)
            return float(out)
        D = self.delta
        if X < T:
            return math.inf
        # h <= 4 (t^2 + 1/4)/T^2 exp(-(t - T)/D) for t >= T
        out = 0.0
        for j, coef in ((k + 2, 1.0), (k, 0.25)):
            acc = 0.0
            fall = 1.0
            for i in range(j + 1):
                acc += fall * X ** (j - i) * D ** (i + 1)
                fall *= (j - i)
            out += coef * acc
        return float(4.0 / (T * T) * math.exp(-(X - T) / D) * out)

    def support_start(self) -> float:
        """Below this point h is under ~e^{-48} of its peak (family1 only)."""
        if self.variant == FAMILY1:
            return max(self.T - 48.0 * self.delta, 0.0)
        return 0.0

    def head_bound(self) -> float:
        """Relative size of h on [0, support_start]."""
        return 4.0 * math.exp(-48.0) if self.variant == FAMILY1 else 0.0

    def breakpoints(self) -> list:
        """Panel edges that resolve the bulk of h on [0, cutoff]."""
        if self.variant == FAMILY1:
            lo = max(self.T - 48.0 * self.delta, 0.0)
            return list(np.linspace(lo, self.cutoff(), 49))
        return list(np.linspace(0.0, self.cutoff(), 9))

    def describe(self) -> dict:
        return {"variant": self.variant, "T": self.T, "delta": self.delta}


def h_eval(h: ArchTestFunction, t):
    """h(t) for real or complex t with |Im t| < 1/2."""
    if np.any(np.abs(np.imag(np.asarray(t))) >= 0.5):
        raise DomainError("h is evaluated only on |Im t| < 1/2")
    v = h(t)
    return v if np.ndim(v) else (complex(v) if np.iscomplexobj(v) else float(v))


def _spectral_nodes(h: ArchTestFunction, panels: int = 64, order: int = 24, lo: float = 0.0):
    return composite_nodes(np.linspace(lo, h.cutoff(), panels + 1), order)


def f_infty_identity(h: ArchTestFunction, spec: Optional[QuadratureSpec] = None) -> Estimate:
    """f_inf(1) = (1/4pi) int h(t) t tanh(pi t) dt."""
    if h.is_zero:
        return Estimate(0.0, 0.0, True, 0)
    spec = spec or QuadratureSpec("truncated-infinite", abs_tol=1e-13, rel_tol=1e-11)
    f = lambda t: float(h(t)) * t * math.tanh(math.pi * t)
    if spec.method == "adaptive-Gauss":
        # split at the bulk of h so QUADPACK sees the peak
        edges = [0.0, h.cutoff() / 4, h.cutoff() / 2, h.cutoff()]
        parts = [integrate(f, (a, b), spec) for a, b in zip(edges[:-1], edges[1:])]
        tail = h.tail_moment(h.cutoff(), 1)
        val = sum(p.value for p in parts)
        err = sum(p.error for p in parts) + tail
        est = Estimate(val, err, all(p.converged for p in parts), sum(p.nodes for p in parts))
    else:
        X0 = h.T if h.variant == FAMILY1 else 0.0
        env = lambda X: h.tail_moment(max(X, X0), 1) if X >= X0 else math.inf
        est = integrate(f, (0.0, math.inf), spec, envelope=env, breakpoints=h.breakpoints())
    s = 1.0 / (2.0 * math.pi)
    return Estimate(est.value * s, est.error * s, est.converged, est.nodes)


# ---------------------------------------------------------------------------
# H^- transform

def _k_form_integrand(h: ArchTestFunction, x: float):
    def f(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        for i, tv in enumerate(t.flat):
            ks, _ = bessel_k_imag_scaled(tv, x)
            # K sinh(pi t) = [e^{pi t} K] (1 - e^{-2 pi t}) / 2, no overflow
            out.flat[i] = ks * 0.5 * (-math.expm1(-2.0 * math.pi * tv)) * tv
        return out * h(t)
    return f


def _i_form_integrand(h: ArchTestFunction, x: float):
    def f(t):
        t = np.asarray(t, dtype=float)
        sc = bessel_i_imag_scaled(t, x)
        # 1/cosh(pi t) = 2 e^{-pi t} / (1 + e^{-2 pi t})
        return -sc.imag * 2.0 / (1.0 + np.exp(-2.0 * math.pi * t)) * t * h(t)
    return f


def _spectral_integral(f, h: ArchTestFunction, spec: QuadratureSpec, lo: float = 0.0,
                       noise: float = 1e-13) -> Estimate:
    """int_lo^cutoff f over the region where h is not negligible.

    Stopping uses max(abs_tol, noise * int |f|) as the absolute floor, since
    the oscillatory integrands can cancel far below their own rounding level.
    """
    a = max(lo, h.support_start())
    b = h.cutoff()
    x, w = composite_nodes(np.linspace(a, b, 33), 24)
    scale = float(np.sum(w * np.abs(f(x))))
    floor = max(spec.abs_tol, noise * scale)
    est = gauss_panels(f, a, b, abs_tol=floor, rel_tol=spec.rel_tol, order=24, panels=16,
                       max_nodes=spec.max_nodes)
    # the skipped piece [lo, a] is bounded by the h-tail below a
    return Estimate(est.value, est.error + h.head_bound() * scale, est.converged, est.nodes + x.size)


def h_minus_transform(h: ArchTestFunction, x: float, route: str = "K-form",
                      spec: Optional[QuadratureSpec] = None) -> Estimate:
    """H^-(x) via the K-Bessel definition or the I-Bessel rewrite."""
    x = float(x)
    if not x > 0:
        raise DomainError("H^-(x) needs x > 0")
    if h.is_zero:
        return Estimate(0.0, 0.0, True, 0)
    spec = spec or QuadratureSpec(abs_tol=1e-15, rel_tol=1e-10)
    if route == "K-form":
        # K_{2it} from the tilted trapezoid carries ~1e-11 relative phase noise at t ~ 100
        est = _spectral_integral(_k_form_integrand(h, x), h, spec, noise=1e-11)
        s = 2.0 / math.pi
    elif route == "I-form":
        est = _spectral_integral(_i_form_integrand(h, x), h, spec)
        s = 1.0
    else:
        raise ValueError(f"unknown route {route!r}")
    return Estimate(float(est.value) * s, est.error * abs(s), est.converged, est.nodes)


def h_minus_bound_constant(h: ArchTestFunction, spec: Optional[QuadratureSpec] = None) -> float:
    """A with |H^-(x)| <= A x^2 e^x for every x > 0.

    Shift the I-form contour to Im t = -1 (the pole of 1/cosh at -i/2 is
    cancelled by the zero of h) and bound |I_{2+2i tau}(x)| by the Poisson
    integral: (x/2)^2 e^x (3 pi / 8) / (sqrt(pi) |Gamma(5/2 + 2 i tau)|).
    """
    if h.is_zero:
        return 0.0
    if h.variant == CUSTOM:
        raise ValueError("the contour-shift bound needs a known holomorphy strip")

    def f(tau):
        tau = np.asarray(tau, dtype=float)
        z = tau - 1j
        hv = np.abs(h(z.astype(complex)))
        logw = -(np.logaddexp(math.pi * tau, -math.pi * tau) - math.log(2.0)) \
            - _sp.loggamma(2.5 + 2j * tau).real
        return np.abs(z) * hv * np.exp(logw)

    spec = spec or QuadratureSpec(abs_tol=1e-16, rel_tol=1e-10)
    est = gauss_panels(f, -h.cutoff(), h.cutoff(), abs_tol=spec.abs_tol, rel_tol=spec.rel_tol, panels=16)
    const = 0.5 * (3.0 * math.pi / 8.0) / (4.0 * math.sqrt(math.pi))
    # pad by the quadrature error so the bound stays an upper bound
    return float(const * (est.value + est.error) * (1.0 + 1e-9))


def h_minus_shape_constant(h: ArchTestFunction, xs: Sequence[float], spec=None) -> float:
    """max over xs of |H^-(x)| / (f_inf(1) (x/T)^2 e^{4 pi x})."""
    f1 = f_infty_identity(h).value
    worst = 0.0
    for x in xs:
        v = abs(h_minus_transform(h, x, "K-form", spec).value)
        shape = f1 * (x / h.T) ** 2 * math.exp(4 * math.pi * x)
        worst = max(worst, v / shape)
    return worst


# ---------------------------------------------------------------------------
# Selberg kernel

class SelbergKernel:
    """Point-pair kernel k(u) attached to h, with its inverse chain.

    Built once per h: g and g' by Gauss-Legendre in t, k on a Chebyshev
    grid in the geodesic radius, then interpolated.
    """

    def __init__(self, h: ArchTestFunction, degree: int = 160, rel_floor: float = 1e-13,
                 spec: Optional[QuadratureSpec] = None):
        self.h = h
        spec = spec or QuadratureSpec()
        self.t_nodes, self.t_weights = _spectral_nodes(h, panels=32, order=24)
        self.h_vals = h(self.t_nodes)
        self.zero = h.is_zero
        if self.zero:
            self.rho_max = 0.0
            self.support_u = 0.0
            return
        # beyond rho_res the fixed t-grid no longer resolves cos(rho t) and g is aliasing noise
        width = float(self.t_nodes.max() - self.t_nodes.min())
        rho_res = min(60.0, 0.5 * math.pi * self.t_nodes.size / max(width, 1e-300))
        rr = np.linspace(0.0, rho_res, 3001)
        gv = np.abs(self.g(rr))
        floor = max(spec.abs_tol / 100.0, rel_floor * gv.max())
        idx = np.nonzero(gv > floor)[0]
        self.rho_max = float(rr[idx[-1]] + 0.5) if idx.size else 1.0
        self.v_max = math.sinh(self.rho_max / 2) ** 2
        self.degree = degree
        nodes = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
        rp = 0.5 * self.rho_max * (nodes + 1.0)
        kv = self.k_direct(np.sinh(rp / 2) ** 2)
        self.coef = _cheb.chebfit(nodes, kv, degree)
        self.coef_tail = float(np.abs(self.coef[-8:]).max())
        rr2 = np.linspace(0.0, self.rho_max, 4001)
        kk = np.abs(self(np.sinh(rr2 / 2) ** 2))
        idx = np.nonzero(kk > max(spec.abs_tol / 100.0, rel_floor * kk.max()))[0]
        self.support_rho = float(rr2[idx[-1]]) if idx.size else 0.0
        self.support_u = math.sinh(self.support_rho / 2) ** 2

    def g(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        return (np.cos(np.outer(rho, self.t_nodes)) @ (self.h_vals * self.t_weights)) / math.pi

    def g_prime(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        return -(np.sin(np.outer(rho, self.t_nodes)) @ (self.t_nodes * self.h_vals * self.t_weights)) / math.pi

    def k_direct(self, u, n: int = 300):
        """k(u) = -(2/pi) int_0^W Q'(u + w^2) dw with Q'(v) = g'(rho) / (2 sqrt(v(1+v)))."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.zeros(u.size)
        for i, uu in enumerate(u):
            if uu >= self.v_max:
                continue
            w, ww = gauss_nodes(0.0, math.sqrt(self.v_max - uu), n)
            v = uu + w * w
            rho = 2.0 * np.arcsinh(np.sqrt(v))
            qp = self.g_prime(rho) / (2.0 * np.sqrt(v * (1.0 + v)))
            out[i] = -(2.0 / math.pi) * (qp @ ww)
        return out

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.zero:
            return np.zeros_like(u)
        r = 2.0 * np.arcsinh(np.sqrt(np.maximum(u, 0.0)))
        z = 2.0 * r / self.rho_max - 1.0
        return np.where(r < self.rho_max, _cheb.chebval(np.minimum(z, 1.0), self.coef), 0.0)

    def h_from_kernel(self, t, n_r: int = 400, n_w: int = 200):
        """Forward Selberg transform of the interpolated k, evaluated at t."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.zero:
            return 0.0 if scalar else np.zeros(t.size)
        U = self.support_u
        rho_u = 2.0 * math.asinh(math.sqrt(U))
        r, rw = gauss_nodes(0.0, rho_u, n_r)
        v = np.sinh(r / 2) ** 2
        Q = np.empty(r.size)
        for i, vv in enumerate(v):
            w, ww = gauss_nodes(0.0, math.sqrt(max(U - vv, 0.0)), n_w)
            Q[i] = 2.0 * (self(vv + w * w) @ ww)
        g = 2.0 * Q
        out = 2.0 * (np.cos(np.outer(t, r)) @ (g * rw))
        return float(out[0]) if scalar else out


@lru_cache(maxsize=32)
def selberg_kernel_for(h: ArchTestFunction) -> SelbergKernel:
    return SelbergKernel(h)


def selberg_kernel(h: ArchTestFunction, u: float, spec: Optional[QuadratureSpec] = None) -> float:
    """k(u) for u >= 0."""
    if u < 0:
        raise DomainError("u must be non-negative")
    return float(selberg_kernel_for(h)(u))


# ---------------------------------------------------------------------------
# modified Zagier transform

def _cos_map(a: float, b: float, n: int, panels: int):
    """Nodes on [a, b] through y = a + (b-a)(1 - cos th)/2, clustering at both ends."""
    th, tw = composite_nodes(np.linspace(0.0, math.pi, panels + 1), n)
    y = a + 0.5 * (b - a) * (1.0 - np.cos(th))
    return y, tw * 0.5 * (b - a) * np.sin(th)


def _plane(row, pieces, n: int, tol: float, max_panels: int = 256):
    """int row(y) dy over consecutive pieces with cos-mapped Gauss panels, doubled until stable."""
    total, err = 0.0, 0.0
    ok = True
    nodes = 0
    for a, b in pieces:
        if not b > a:
            continue
        panels = 4
        prev = None
        while True:
            y, w = _cos_map(a, b, n, panels)
            val = float(np.sum(w * np.array([row(yy) for yy in y])))
            nodes += y.size
            if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
                break
            if panels >= max_panels:
                ok = False
                break
            prev = val
            panels *= 2
        total += val
        err += abs(val - prev) if prev is not None else math.inf
    return Estimate(total, err, ok, nodes)


def _modified_zagier_plane(kern: SelbergKernel, t: float, tol: float) -> Estimate:
    U = kern.support_u
    if t * t >= 4 * U:
        return Estimate(0.0, 0.0, True, 0)
    R = math.sqrt(4 * U - t * t)
    A = 1.0 + 0.25 * t * t
    y_star = 0.5 * (-R + math.sqrt(R * R + 4 * A))
    y_max = 0.5 * (R + math.sqrt(R * R + 4 * A))
    wg, ww = gauss_nodes(0.0, 1.0, 48)

    def row(y):
        # u <= U  <=>  |w^2 - (A - y^2)| <= R y  with w = x + t/2
        hi = A - y * y + R * y
        lo = A - y * y - R * y
        if hi <= 0:
            return 0.0
        w_hi = math.sqrt(hi)
        w_lo = math.sqrt(lo) if lo > 0 else 0.0
        w = w_lo + (w_hi - w_lo) * wg
        x = w - 0.5 * t
        u = ((x * x + y * y + t * x - 1.0) ** 2 + t * t * y * y) / (4.0 * y * y)
        side = (w_hi - w_lo) * float(kern(u) @ ww)
        # the band is symmetric in w; count both halves
        return 2.0 * side / y

    return _plane(row, [(0.0, y_star), (y_star, y_max)], 32, tol)


def _modified_zagier_fourier(h: ArchTestFunction, t: float, spec: QuadratureSpec) -> Estimate:
    alpha = 2.0 * math.asinh(0.5 * t)
    est = gauss_panels(lambda r: h(r) * np.cos(alpha * r), 0.0, h.cutoff(),
                       abs_tol=spec.abs_tol, rel_tol=spec.rel_tol, panels=8)
    return Estimate(0.5 * float(est.value), 0.5 * est.error, est.converged, est.nodes)


def kernel_line_integral(kern: SelbergKernel, t: float, n: int = 400) -> float:
    """int k((t^2/4 + 1) x^2 + t^2/4) dx over the line."""
    U = kern.support_u
    a = 0.25 * t * t
    if a >= U:
        return 0.0
    X = math.sqrt((U - a) / (a + 1.0))
    x, w = gauss_nodes(-X, X, n)
    return float(kern((a + 1.0) * x * x + a) @ w)


@dataclass(frozen=True)
class PrefactorFit:
    constant: float
    residual: float
    printed_form_residual: float
    t_grid: tuple

    def to_dict(self):
        return {"constant": self.constant, "residual": self.residual,
                "printed_form_residual": self.printed_form_residual, "t_grid": list(self.t_grid)}


def kernel_prefactor_fit(h: ArchTestFunction, t_grid: Sequence[float] = (0.25, 0.5, 1.0, 1.5, 2.0, 3.0),
                         spec: Optional[QuadratureSpec] = None) -> PrefactorFit:
    """Least-squares C in M(t) = C sqrt(t^2 + 4) int k(...) dx against the plane route.

    Also reports how badly the alternative shape pi sqrt(1 + t^2) fits with
    its own best constant, as a relative residual.
    """
    kern = selberg_kernel_for(h)
    tol = (spec or QuadratureSpec()).rel_tol
    M = np.array([_modified_zagier_plane(kern, t, tol).value for t in t_grid])
    line = np.array([kernel_line_integral(kern, t) for t in t_grid])
    ts = np.asarray(t_grid, dtype=float)
    q = np.sqrt(ts * ts + 4.0) * line
    C = float(q @ M / (q @ q))
    resid = float(np.max(np.abs(M - C * q)) / np.max(np.abs(M)))
    q2 = math.pi * np.sqrt(1.0 + ts * ts) * line
    c2 = float(q2 @ M / (q2 @ q2))
    resid2 = float(np.max(np.abs(M - c2 * q2)) / np.max(np.abs(M)))
    return PrefactorFit(C, resid, resid2, tuple(float(t) for t in t_grid))


@lru_cache(maxsize=32)
def _cached_fit(h: ArchTestFunction) -> PrefactorFit:
    return kernel_prefactor_fit(h)


def modified_zagier(h: ArchTestFunction, t: float, route: str = "fourier-1D",
                    spec: Optional[QuadratureSpec] = None, prefactor: Optional[float] = None) -> Estimate:
    """M(t) by the plane integral, the line-kernel form or the Fourier form."""
    t = float(t)
    spec = spec or QuadratureSpec(abs_tol=1e-14, rel_tol=1e-11)
    if h.is_zero:
        return Estimate(0.0, 0.0, True, 0)
    if route == "fourier-1D":
        return _modified_zagier_fourier(h, t, spec)
    kern = selberg_kernel_for(h)
    if route == "plane-2D":
        return _modified_zagier_plane(kern, t, spec.rel_tol)
    if route == "kernel-1D":
        C = _cached_fit(h).constant if prefactor is None else float(prefactor)
        val = C * math.sqrt(t * t + 4.0) * kernel_line_integral(kern, t)
        return Estimate(val, kern.coef_tail * 10, True, 400)
    raise ValueError(f"unknown route {route!r}")


def modified_zagier_hat(h: ArchTestFunction, a: float, spec: Optional[QuadratureSpec] = None) -> Estimate:
    """Mhat(a) = (1/(2 pi a)) int_R K_{2it}(4 pi a) sinh(pi t) t h(t) dt."""
    a = float(a)
    if not a > 0:
        raise DomainError("Mhat(a) needs a > 0")
    if h.is_zero:
        return Estimate(0.0, 0.0, True, 0)
    spec = spec or QuadratureSpec(abs_tol=1e-15, rel_tol=1e-10)
    x = 4.0 * math.pi * a

    def f(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        for i, tv in enumerate(t.flat):
            ks, _ = bessel_k_imag_scaled(tv, x)
            out.flat[i] = ks * math.copysign(0.5 * -math.expm1(-2.0 * math.pi * abs(tv)), tv) * tv
        return out * h(t)

    c = h.cutoff()
    est = gauss_panels(f, -c, c, abs_tol=spec.abs_tol, rel_tol=spec.rel_tol, panels=16,
                       max_nodes=spec.max_nodes)
    s = 1.0 / (2.0 * math.pi * a)
    return Estimate(float(est.value) * s, est.error * s, est.converged, est.nodes)


def modified_zagier_fourier_direct(h: ArchTestFunction, a: float, n: int = 96) -> float:
    """Mhat(a) = 2 int_0^tmax M(t) cos(2 pi a t) dt with M from the plane route."""
    kern = selberg_kernel_for(h)
    t_sup = 2.0 * math.sqrt(kern.support_u)
    t, w = composite_nodes(np.linspace(0.0, t_sup, 5), n // 4)
    M = np.array([_modified_zagier_plane(kern, tv, 1e-10).value for tv in t])
    return float(2.0 * np.sum(w * M * np.cos(2 * math.pi * a * t)))


def zagier_transform(h: ArchTestFunction, t: float, spec: Optional[QuadratureSpec] = None) -> Estimate:
    """Z(t) = int_H k(u(z + t, -1/z)) dx dy / y, zero outside |t| <= 2 sqrt(1 + U)."""
    t = float(t)
    spec = spec or QuadratureSpec(rel_tol=1e-10)
    if h.is_zero:
        return Estimate(0.0, 0.0, True, 0)
    kern = selberg_kernel_for(h)
    U = kern.support_u
    c0 = 1.0 - 0.25 * t * t
    if U + c0 <= 0:
        return Estimate(0.0, 0.0, True, 0)
    s = math.sqrt(U + c0)
    y_lo = max(s - math.sqrt(U), 0.0)
    y_hi = s + math.sqrt(U)
    wg, ww = gauss_nodes(0.0, 1.0, 48)

    def row(y):
        # |z^2 + t z + 1|^2 <= 4 U y^2 with w = x + t/2, W = w^2:
        # W in [-(c0 + y^2) - 2 y s, -(c0 + y^2) + 2 y s]
        hi = -(c0 + y * y) + 2.0 * y * s
        lo = -(c0 + y * y) - 2.0 * y * s
        if hi <= 0:
            return 0.0
        w_hi = math.sqrt(hi)
        w_lo = math.sqrt(lo) if lo > 0 else 0.0
        w = w_lo + (w_hi - w_lo) * wg
        x = w - 0.5 * t
        u = ((x * x - y * y + t * x + 1.0) ** 2 + y * y * (2.0 * x + t) ** 2) / (4.0 * y * y)
        return 2.0 * (w_hi - w_lo) * float(kern(u) @ ww) / y

    pieces = [(y_lo, y_hi)]
    if c0 < 0:
        # the hole lo > 0 closes where y^2 + 2 s y + c0 = 0
        y_h = -s + math.sqrt(s * s - c0)
        if y_lo < y_h < y_hi:
            pieces = [(y_lo, y_h), (y_h, y_hi)]
    return _plane(row, pieces, 32, spec.rel_tol)


# ---------------------------------------------------------------------------
# weight 2

def _as_matrix(g) -> np.ndarray:
    g = np.asarray(g, dtype=float).reshape(2, 2)
    return g


def matrix_coeff(g, kappa: int = 2) -> ComplexValue:
    """Weight-kappa discrete-series coefficient; 0 when det g < 0."""
    g = _as_matrix(g)
    if kappa < 2:
        raise ValueError("kappa must be >= 2")
    (a, b), (c, d) = g
    det = a * d - b * c
    if det == 0:
        raise DomainError("matrix is singular")
    if det < 0:
        return ComplexValue(0.0, 0.0)
    z = complex(-b + c, a + d)
    val = (kappa - 1) / (4 * math.pi) * det ** (kappa / 2) * (2j) ** kappa / z ** kappa
    return ComplexValue.of(val)


def rotation(theta: float) -> np.ndarray:
    return np.array([[math.cos(theta), math.sin(theta)], [-math.sin(theta), math.cos(theta)]])


def cartan_radius(g) -> float:
    """r = log(s1/s2) for the singular values of g/sqrt(det g)."""
    g = _as_matrix(g)
    det = float(np.linalg.det(g))
    if not det > 0:
        raise DomainError("cartan_radius needs det g > 0")
    s = np.linalg.svd(g / math.sqrt(det), compute_uv=False)
    return float(math.log(s[0] / s[1]))


def _sig(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smoothstep(x):
    """C-infinity cutoff: 1 on (-inf, 0], 0 on [1, inf), nonincreasing."""
    a = _sig(1.0 - np.asarray(x, dtype=float))
    return a / (_sig(x) + a)


@dataclass(frozen=True)
class TruncationProfile:
    T: float

    def __post_init__(self):
        if not self.T >= 1:
            raise ValueError("truncation radius T must be >= 1")

    def __call__(self, r):
        return smoothstep(np.asarray(r, dtype=float) - self.T)


def _lambda_quad(t: complex, T: float, ns: int, nx: int):
    xg, wg = np.polynomial.legendre.leggauss(nx)
    total = 0j
    ch0, ch1 = math.cosh(T), math.cosh(T + 1)
    for a, b in ((-(T + 1), -T), (-T, T), (T, T + 1)):
        s, w = gauss_nodes(a, b, ns)
        y = np.exp(s)[:, None]
        bb = y + 1.0
        xt = np.sqrt(np.clip(2 * y * ch0 - y * y - 1, 0, None))
        x1 = np.sqrt(np.clip(2 * y * ch1 - y * y - 1, 0, None))
        x = 0.5 * (x1 - xt) * xg + 0.5 * (x1 + xt)
        xw = 0.5 * (x1 - xt) * wg
        r = np.arccosh(np.maximum((x * x + y * y + 1) / (2 * y), 1.0))
        band = np.sum(xw * 2.0 * smoothstep(r - T) * (x * x - bb * bb) / (x * x + bb * bb) ** 2, axis=1)
        J = (-2.0 * xt / (xt * xt + bb * bb))[:, 0] + band
        total += np.sum(w * J * np.exp(s * (1j * t + 0.5)))
    return -total / math.pi


def lambda_t_principal(t, profile: TruncationProfile, spec: Optional[QuadratureSpec] = None) -> Estimate:
    """lambda_T(t) = -(1/pi) int rho(r(z) - T) / (x + i(y+1))^2 y^{it - 1/2} dx dy.

    The x-integral over r <= T is done in closed form; the band
    T < r < T + 1 and the y-integral by Gauss-Legendre in log y.
    The value field holds a ComplexValue.
    """
    t = complex(t)
    if abs(t.imag) > SIGMA_GAP:
        raise DomainError("lambda_T(t) is only evaluated for |Im t| <= 3/16")
    spec = spec or QuadratureSpec()
    T = profile.T
    ns = int(max(160, 30 * (T + 1) + 20 * abs(t)))
    nx = 160
    if 2 * 3 * ns * nx > spec.max_nodes * 8:
        raise BudgetExceeded(f"lambda_T at T={T} needs {6 * ns * nx} nodes")
    v1 = _lambda_quad(t, T, ns, nx)
    v2 = _lambda_quad(t, T, 2 * ns, 2 * nx)
    err = abs(v2 - v1)
    ok = err <= spec.tol_for(abs(v2))
    return Estimate(ComplexValue.of(v2), err, ok, 6 * ns * nx * 5)


def lambda_envelope(T: float, A: int = 1, sigma: float = SIGMA_GAP, ns: int = 300, nx: int = 300) -> float:
    """M_1(T) = int_0^inf |int d/dy [rho(r_T)/(x + i(1+y))^2] dx| y^{sigma - 1/2 + 1} dy.

    Only A = 1 is implemented.  The y-derivative of 1/(x+ib)^2 integrates
    to zero over the line, so only the band and the outside region remain.
    """
    if A != 1:
        raise NotImplementedError("only the first derivative envelope is implemented")
    xg, wg = np.polynomial.legendre.leggauss(nx)
    tot = 0.0
    eps = 1e-6
    for a, b in ((-(T + 1), -T), (-T, T), (T, T + 1), (T + 1, T + 40)):
        s, w = gauss_nodes(a, b, ns)
        y = np.exp(s)[:, None]
        bb = y + 1.0
        xt = np.sqrt(np.clip(2 * y * math.cosh(T) - y * y - 1, 0, None))
        x1 = np.sqrt(np.clip(2 * y * math.cosh(T + 1) - y * y - 1, 0, None))
        x = 0.5 * (x1 - xt) * xg + 0.5 * (x1 + xt)
        xw = 0.5 * (x1 - xt) * wg
        q = (x * x + y * y + 1) / (2 * y)
        r = np.arccosh(np.maximum(q, 1.0))
        ry = (y * y - x * x - 1) / (y * np.sqrt(np.maximum((x * x + y * y + 1) ** 2 - 4 * y * y, 1e-300)))
        drho = (smoothstep(r - T + eps) - smoothstep(r - T - eps)) / (2 * eps)
        z = x + 1j * bb
        band = 2 * np.sum(xw * (drho * ry / z ** 2 + (smoothstep(r - T) - 1.0) * (-2j) / z ** 3).real, axis=1)
        outside = 2 * (1j / (x1 + 1j * bb) ** 2).real[:, 0]
        tot += np.sum(w * np.abs(band + outside) * np.exp(s * (sigma + 1.5)))
    return float(tot)


def lambda_t_discrete(profile: TruncationProfile, spec: Optional[QuadratureSpec] = None) -> Estimate:
    """int rho^T |f|^2 / int |f|^2 for the weight-2 coefficient in Cartan coordinates.

    |f(k a_r k')|^2 is proportional to cosh(r/2)^{-4} and the invariant
    measure to sinh r dr dtheta dtheta'; the angular integrals cancel.
    """
    spec = spec or QuadratureSpec("adaptive-Gauss", abs_tol=1e-14, rel_tol=1e-12)
    T = profile.T
    # sinh r / cosh^4(r/2) = 2 tanh(r/2) sech^2(r/2), which stays finite for large r
    dens = lambda r: 2.0 * math.tanh(0.5 * r) * float(_sech(0.5 * r)) ** 2
    inner = integrate(dens, (0.0, T), spec)
    band = integrate(lambda r: float(profile(r)) * dens(r), (T, T + 1.0), spec)
    den = integrate(dens, (0.0, math.inf), spec)
    num = inner.value + band.value
    val = num / den.value
    err = (inner.error + band.error) / den.value + val * den.error / den.value
    ok = inner.converged and band.converged and den.converged
    return Estimate(val, err, ok, inner.nodes + band.nodes + den.nodes)


# ---------------------------------------------------------------------------
# cells

def first_cell_arch(m1: float, m2: float) -> float:
    """4 pi m1 m2 exp(-2 pi (m1 + m2))."""
    if not (m1 > 0 and m2 > 0):
        raise DomainError("m1, m2 must be positive")
    return 4.0 * math.pi * m1 * m2 * math.exp(-2.0 * math.pi * (m1 + m2))


def second_cell_closed_form(mu: float, m1: float, m2: float) -> float:
    """-8 pi^2 sqrt(mu m1 m2) exp(-2 pi (m1 + m2)) J1(4 pi sqrt(mu m1 m2))."""
    s = math.sqrt(mu * m1 * m2)
    return -8.0 * math.pi ** 2 * s * math.exp(-2.0 * math.pi * (m1 + m2)) * bessel_j1(4.0 * math.pi * s)


def _fourier_line(g, w: float, eps: float, sign: int = 1):
    """int_R g(s) e^{i sign w s} ds for complex g via four QAWF calls."""
    flags = []

    def q(fun, wt):
        val, err, info = _sint.quad(fun, 0.0, np.inf, weight=wt, wvar=w, epsabs=eps, limlst=100,
                                    full_output=1)[:3]
        flags.append(err)
        return val

    rc = q(lambda s: (g(s) + g(-s)).real, "cos")
    ic = q(lambda s: (g(s) + g(-s)).imag, "cos")
    rs = q(lambda s: (g(s) - g(-s)).real, "sin")
    is_ = q(lambda s: (g(s) - g(-s)).imag, "sin")
    # (R + iI)(cos + i sign sin)
    return complex(rc - sign * is_, ic + sign * rs), sum(flags)


def second_cell_arch(mu: float, m1: float, m2: float, route: str = "closed-form",
                     spec: Optional[QuadratureSpec] = None, shift: float = 0.5) -> Estimate:
    """Archimedean second-cell integral for weight 2.

    quadrature route: int int f(n(-t1) w_mu n(t2)) e(-(m1 t1 - m2 t2)) dt1 dt2
    with f = -(mu/pi) / ((t1 + i)(t2 - i) + mu)^2.  Both lines are moved off
    the real axis (t1 down, t2 up, by ``shift`` < 1), which leaves no zero of
    the denominator in between and removes most of the exp(-2 pi (m1 + m2))
    cancellation; then nested QUADPACK Fourier integrals.
    """
    if not (mu > 0 and m1 > 0 and m2 > 0):
        raise DomainError("mu, m1, m2 must be positive")
    if route == "closed-form":
        return Estimate(second_cell_closed_form(mu, m1, m2), 0.0, True, 0)
    if route != "quadrature":
        raise ValueError(f"unknown route {route!r}")
    spec = spec or QuadratureSpec(abs_tol=1e-13)
    if not 0 < shift < 1:
        raise ValueError("shift must lie in (0, 1)")
    al = be = 1.0 - shift
    w1, w2 = 2 * math.pi * m1, 2 * math.pi * m2
    errs = [0.0]

    def inner(s1):
        A = s1 + 1j * al
        v, e = _fourier_line(lambda s2: 1.0 / (A * (s2 - 1j * be) + mu) ** 2, w2, spec.abs_tol)
        errs[0] = max(errs[0], e)
        return v

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _sint.IntegrationWarning)
        tot, e_out = _fourier_line(inner, w1, spec.abs_tol * 1e-2, sign=-1)
    pref = -(mu / math.pi) * math.exp(-2 * math.pi * (m1 + m2) * shift)
    err = abs(pref) * (e_out + 4 * errs[0] * 10)
    val = pref * tot
    return Estimate(float(val.real), err + abs(pref * tot.imag), True, 0)


def second_cell_abs_integral(mu: float, route: str = "quadrature",
                             spec: Optional[QuadratureSpec] = None) -> Estimate:
    """int int |f(n(-t1) w_mu n(t2))| dt1 dt2 = mu pi / sqrt(1 + mu) (closed form)."""
    if not mu > 0:
        raise DomainError("mu must be positive")
    if route == "closed-form":
        return Estimate(mu * math.pi / math.sqrt(1.0 + mu), 0.0, True, 0)
    spec = spec or QuadratureSpec("adaptive-Gauss", abs_tol=1e-14, rel_tol=1e-10)

    def inner(t1):
        # centre of the Lorentzian in t2 after the shift t2 -> t2 - mu t1/(t1^2+1)
        c = -mu * t1 / (t1 * t1 + 1)
        f = lambda t2: (mu / math.pi) / abs((t1 + 1j) * (t2 - 1j) + mu) ** 2
        a = integrate(f, (-math.inf, c), spec)
        b = integrate(f, (c, math.inf), spec)
        return a.value + b.value

    est = integrate(inner, (-math.inf, math.inf), spec)
    return est
