"""Quadrature engines and Bessel functions of imaginary order.

Everything here is a pure function of its inputs.  Estimates always carry an
error bound and a convergence flag, and callers decide what to do with an
unconverged estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as _sint
from scipy import special as _sp

METHODS = ("adaptive-Gauss", "tanh-sinh", "truncated-infinite")

# below this |x| the J1 power series is used directly
_J1_SERIES_CUTOFF = 4.0


class DomainError(ValueError):
    """Argument outside the domain of a special function or transform."""


class NonConvergence(RuntimeError):
    """A quadrature or series did not reach its tolerance within budget."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Method selector and tolerances for :func:`integrate`."""

    method: str = "adaptive-Gauss"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_nodes: int = 200_000
    max_depth: int = 200

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown quadrature method {self.method!r}; expected one of {METHODS}")
        if not (self.abs_tol > 0 and math.isfinite(self.abs_tol)):
            raise ValueError("abs_tol must be a positive finite number")
        if not (self.rel_tol > 0 and math.isfinite(self.rel_tol)):
            raise ValueError("rel_tol must be a positive finite number")
        if int(self.max_nodes) < 16:
            raise ValueError("max_nodes must be at least 16")
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be at least 1")

    def tol_for(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


@dataclass(frozen=True)
class ComplexValue:
    """A finite complex number stored as two floats."""

    re: float
    im: float

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError(f"non-finite complex value ({self.re}, {self.im})")

    @classmethod
    def of(cls, z) -> "ComplexValue":
        z = complex(z)
        return cls(float(z.real), float(z.imag))

    def __complex__(self):
        return complex(self.re, self.im)

    def __abs__(self):
        return math.hypot(self.re, self.im)

    def to_dict(self):
        return {"re": self.re, "im": self.im}


@dataclass(frozen=True)
class Estimate:
    """Quadrature result: value, error bound, convergence flag, node count."""

    value: float
    error: float
    converged: bool
    nodes: int

    def __float__(self):
        return float(self.value)

    def require(self, what: str = "quadrature") -> "Estimate":
        if not self.converged:
            raise NonConvergence(f"{what} did not converge (value={self.value!r}, error={self.error!r})")
        return self


# ---------------------------------------------------------------------------
# Gauss-Legendre panels

@lru_cache(maxsize=64)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_nodes(a: float, b: float, n: int):
    """Gauss-Legendre nodes and weights mapped to [a, b]."""
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def composite_nodes(edges: Sequence[float], n: int):
    """Concatenated Gauss-Legendre rules over consecutive panels."""
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            x, w = gauss_nodes(a, b, n)
            xs.append(x)
            ws.append(w)
    if not xs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ws)


def gauss_panels(fvec: Callable, a: float, b: float, abs_tol: float = 1e-13,
                 rel_tol: float = 1e-12, order: int = 24, panels: int = 4,
                 max_nodes: int = 400_000) -> Estimate:
    """Composite Gauss-Legendre on [a, b], doubling the panel count until stable.

    ``fvec`` must accept a numpy array and may return complex values; the
    returned Estimate then holds a complex value.
    """
    if not b > a:
        return Estimate(0.0, 0.0, True, 0)
    prev = None
    used = 0
    while True:
        x, w = composite_nodes(np.linspace(a, b, panels + 1), order)
        val = np.sum(w * fvec(x))
        used += x.size
        if prev is not None:
            err = abs(val - prev)
            if err <= max(abs_tol, rel_tol * abs(val)):
                return Estimate(val, err, True, used)
        if used + 2 * x.size > max_nodes:
            err = abs(val - prev) if prev is not None else math.inf
            return Estimate(val, err, False, used)
        prev = val
        panels *= 2


# ---------------------------------------------------------------------------
# tanh-sinh

def _tanh_sinh(f: Callable, a: float, b: float, tol: float, max_nodes: int, max_depth: int) -> Estimate:
    c = 0.5 * (a + b)
    d = 0.5 * (b - a)
    # at |tau| = 4.5 the endpoint distance is ~1e-61, enough for x^{-1/2}-type singularities
    tau_max = 4.5
    nodes = 0

    def layer(h: float, odd_only: bool):
        nonlocal nodes
        k_max = int(math.ceil(tau_max / h))
        ks = np.arange(1, k_max + 1)
        if odd_only:
            ks = ks[ks % 2 == 1]
        tau = ks * h
        u = 0.5 * math.pi * np.sinh(tau)
        # distance to the endpoint, computed without cancellation
        delta = 2.0 / (np.exp(2.0 * u) + 1.0)
        # sech^2 u = delta (2 - delta), which stays accurate where 1 - tanh^2 u rounds to 0
        wt = 0.5 * math.pi * np.cosh(tau) * delta * (2.0 - delta)
        keep = (delta > 0) & (wt > 0)
        delta, wt = delta[keep], wt[keep]
        total = 0.0
        for dd, ww in zip(delta, wt):
            xl = a + d * dd
            xr = b - d * dd
            if xl > a:
                total += ww * f(xl)
            if xr < b:
                total += ww * f(xr)
        nodes += 2 * delta.size
        return total

    h = 1.0
    s = 0.5 * math.pi * f(c) + layer(h, False)
    nodes += 1
    est = d * h * s
    prev = est
    for _ in range(int(max_depth)):
        h *= 0.5
        s += layer(h, True)
        est = d * h * s
        err = abs(est - prev)
        if err <= tol(est):
            return Estimate(est, err, True, nodes)
        if nodes > max_nodes:
            return Estimate(est, err, False, nodes)
        prev = est
        if h < 1e-6:
            break
    return Estimate(est, abs(est - prev), False, nodes)


def _adaptive_gauss(f: Callable, a: float, b: float, spec: QuadratureSpec) -> Estimate:
    val, err, info = _sint.quad(f, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                                limit=int(spec.max_depth), full_output=1)[:3]
    nodes = int(info.get("neval", 0))
    ok = err <= spec.tol_for(val) and nodes <= spec.max_nodes
    return Estimate(float(val), float(err), bool(ok), nodes)


def _truncate(envelope: Optional[Callable], budget: float, side: str) -> float:
    if envelope is None:
        raise ValueError(f"infinite {side} endpoint needs a decay envelope (tail bound callable)")
    X = 1.0
    for _ in range(200):
        if envelope(X) <= budget:
            return X
        X *= 1.5
    raise NonConvergence("decay envelope never fell below the tail budget")


def _integrate_1d(f, a, b, spec, envelope, breakpoints=()) -> Estimate:
    a = float(a)
    b = float(b)
    if a == b:
        return Estimate(0.0, 0.0, True, 0)
    if a > b:
        e = _integrate_1d(f, b, a, spec, envelope)
        return Estimate(-e.value, e.error, e.converged, e.nodes)
    infinite = math.isinf(a) or math.isinf(b)
    if spec.method == "adaptive-Gauss":
        return _adaptive_gauss(f, a, b, spec)
    if infinite and spec.method == "tanh-sinh" and envelope is None:
        raise ValueError("tanh-sinh on an infinite range needs a decay envelope")
    tail = 0.0
    if infinite:
        budget = spec.abs_tol / 10.0
        if math.isinf(a):
            X = _truncate(envelope, budget, "left")
            a = -X if math.isinf(b) or b > -X else b - X
            tail += envelope(X)
        if math.isinf(b):
            X = _truncate(envelope, budget, "right")
            b = X if X > a else a + X
            tail += envelope(X)
    edges = [a] + sorted(x for x in breakpoints if a < x < b) + [b]
    parts = [_tanh_sinh(f, lo, hi, spec.tol_for, spec.max_nodes, spec.max_depth)
             for lo, hi in zip(edges[:-1], edges[1:])]
    return Estimate(math.fsum(p.value for p in parts), sum(p.error for p in parts) + tail,
                    all(p.converged for p in parts), sum(p.nodes for p in parts))


def integrate(f: Callable, domain, spec: QuadratureSpec = QuadratureSpec(),
              envelope: Optional[Callable[[float], float]] = None,
              breakpoints: Sequence[float] = ()) -> Estimate:
    """Integrate ``f`` over an interval, half-line, line or rectangle.

    ``domain`` is ``(a, b)`` (endpoints may be infinite) or a pair of such
    pairs for a rectangle, in which case ``f`` takes two arguments.  For
    infinite endpoints with the tanh-sinh or truncated-infinite methods,
    ``envelope(X)`` must bound the integral of ``|f|`` beyond ``|x| = X``.
    ``breakpoints`` split a 1D range into separately integrated pieces
    (tanh-sinh and truncated-infinite only).
    """
    if len(domain) == 2 and all(np.ndim(d) == 0 for d in domain):
        return _integrate_1d(f, domain[0], domain[1], spec, envelope, breakpoints)
    (ax, bx), (ay, by) = domain
    inner_nodes = [0]
    inner_ok = [True]
    inner_err = [0.0]

    def row(x):
        e = _integrate_1d(lambda y: f(x, y), ay, by, spec, envelope)
        inner_nodes[0] += e.nodes
        inner_ok[0] = inner_ok[0] and e.converged
        inner_err[0] = max(inner_err[0], e.error)
        return e.value

    outer = _integrate_1d(row, ax, bx, spec, envelope)
    width = (bx - ax) if math.isfinite(bx - ax) else 1.0
    err = outer.error + inner_err[0] * abs(width)
    nodes = outer.nodes + inner_nodes[0]
    ok = outer.converged and inner_ok[0] and nodes <= spec.max_nodes * spec.max_nodes
    return Estimate(outer.value, err, ok, nodes)


# ---------------------------------------------------------------------------
# Bessel J1

def _j1_series(x: float) -> float:
    q = -0.25 * x * x
    term = 0.5 * x
    total = term
    k = 0
    while abs(term) > 1e-18 * max(abs(total), 1e-300):
        k += 1
        term *= q / (k * (k + 1))
        total += term
        if k > 60:
            break
    return total


def bessel_j1(x: float) -> float:
    """J_1(x).  Power series for |x| < 4, Cephes rational/asymptotic forms beyond."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError("bessel_j1 needs a finite argument")
    if abs(x) < _J1_SERIES_CUTOFF:
        return _j1_series(x)
    return float(_sp.j1(x))


def bessel_j1_array(x) -> np.ndarray:
    """Vectorised :func:`bessel_j1` with identical branch choice."""
    x = np.asarray(x, dtype=float)
    out = np.asarray(_sp.j1(x), dtype=float).copy()
    small = np.abs(x) < _J1_SERIES_CUTOFF
    if np.any(small):
        out[small] = [_j1_series(v) for v in x[small]]
    return out


# ---------------------------------------------------------------------------
# K_{2it}(x)

# rotation gain: the contour is tilted so that e^{nu*beta} stays near e^8
_K_GAIN = 8.0


def _k_scaled_trapezoid(nu: float, x: float, tol: float, halve: int = 0):
    """e^{pi nu/2} K_{i nu}(x) by the trapezoid rule on a tilted contour.

    K_{i nu}(x) = int_0^inf exp(-x cosh u) cos(nu u) du.  For large nu the
    real integrand cancels to e^{-pi nu/2}; moving u to s + i alpha with
    alpha = pi/2 - beta removes the cancellation.  For nu <= 2*gain/pi the
    contour stays on the real axis and this is the plain cosine integral.
    """
    beta = math.pi / 2 if nu <= 2 * _K_GAIN / math.pi else _K_GAIN / nu
    a = x * math.sin(beta)
    L = -math.log(tol)
    s_max = math.acosh(max(L / a, 1.0)) + 0.5
    h = min(beta / 11.0, 0.1, 0.25 / math.sqrt(x)) / (2 ** halve)
    n = int(math.ceil(s_max / h))
    s = np.arange(-n, n + 1) * h
    phase = -a * np.cosh(s) + 1j * (nu * s - x * math.cos(beta) * np.sinh(s))
    total = np.sum(np.exp(phase)).real
    return 0.5 * h * total * math.exp(nu * beta), s.size


def bessel_k_imag_scaled(t: float, x: float, tol: float = 1e-16):
    """(e^{pi|t|} K_{2it}(x), error estimate).  Real-valued."""
    x = float(x)
    if not x > 0:
        raise DomainError("K_{2it}(x) needs x > 0")
    nu = 2.0 * abs(float(t))
    v1, _ = _k_scaled_trapezoid(nu, x, tol)
    v2, _ = _k_scaled_trapezoid(nu, x, tol, halve=1)
    return v2, abs(v2 - v1) + 64 * np.finfo(float).eps * math.exp(_K_GAIN) * abs(v2)


def bessel_k_imag(t: float, x: float) -> float:
    """K_{2it}(x) for real t and x > 0."""
    v, _ = bessel_k_imag_scaled(t, x)
    return v * math.exp(-math.pi * abs(float(t)))


def bessel_k_cosine_integral(t: float, x: float, spec: QuadratureSpec = QuadratureSpec()) -> Estimate:
    """K_{2it}(x) straight from int_0^umax exp(-x cosh u) cos(2tu) du.

    Only sensible for moderate t, where the integrand does not cancel.
    """
    x = float(x)
    if not x > 0:
        raise DomainError("K_{2it}(x) needs x > 0")
    u_max = math.acosh(max(-math.log(spec.abs_tol / 10.0) / x, 1.0))
    return integrate(lambda u: math.exp(-x * math.cosh(u)) * math.cos(2.0 * t * u), (0.0, u_max), spec)


# ---------------------------------------------------------------------------
# I_{2it}(x)

def bessel_i_imag_scaled(t, x: float) -> np.ndarray:
    """e^{-pi|t|} I_{2it}(x) by the ascending series, vectorised over t."""
    x = float(x)
    if not x > 0:
        raise DomainError("I_{2it}(x) needs x > 0")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    nu = 2j * t
    half = 0.5 * x
    log_first = nu * math.log(half) - _sp.loggamma(nu + 1.0) - math.pi * np.abs(t)
    term = np.exp(log_first)
    total = term.copy()
    q = half * half
    for k in range(1, 1000):
        term = term * (q / (k * (nu + k)))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    else:
        raise NonConvergence("I-Bessel series did not converge")
    return total


def bessel_i_imag(t: float, x: float) -> ComplexValue:
    """I_{2it}(x) for real t and x > 0."""
    v = complex(bessel_i_imag_scaled(t, x)[0]) * math.exp(math.pi * abs(float(t)))
    return ComplexValue.of(v)
