"""Exact non-archimedean pieces: local test functions, orbital integrals,
generalized and classical Kloosterman sums, admissible moduli, local weights.

The local factor at p of the generalized Kloosterman sum is

    H_p(m, n; mu) = int int f_p(n(-t1) w_mu n(t2)) theta_p(m t1 - n t2) dt1 dt2,

with n(t) = [[1, t], [0, 1]], w_mu = [[0, -mu], [1, 0]], theta_p(x) = e(r_p(x))
and f_p = nu(p^r) * indicator of Z K_0(p^r).  The integrand is invariant under
t_i -> t_i + Z_p, so it is constant on cosets of Z_p, and it vanishes unless
t_i lies in p^{-k} Z_p with 2k = -v_p(mu).  The enumeration below works with
exactly those cosets; the depths can be raised to check stability.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .numkernel import ComplexValue
from .oracle import factorize, is_prime

DEFAULT_BUDGET = 4_000_000
INDICATOR = "indicator"
NEWFORM = "newform-projector"


class BudgetExceeded(RuntimeError):
    """Coset enumeration would exceed the configured node budget."""


class UnsupportedVariant(ValueError):
    pass


def nu(n: int) -> Fraction:
    """nu(n) = n * prod_{p | n} (1 + 1/p)."""
    if n < 1:
        raise ValueError("nu needs n >= 1")
    out = Fraction(n)
    for p in factorize(n):
        out *= Fraction(p + 1, p)
    return out


def vp(x, p: int) -> float:
    """p-adic valuation of an integer or Fraction; +inf for zero."""
    x = Fraction(x)
    if x == 0:
        return math.inf
    v = 0
    num, den = x.numerator, x.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v


@dataclass(frozen=True)
class LocalTestFunction:
    """f_p = nu(p^r) times the indicator of Z K_0(p^r)."""

    p: int
    r: int = 0
    variant: str = INDICATOR

    def __post_init__(self):
        if not is_prime(int(self.p)):
            raise ValueError(f"{self.p} is not prime")
        if int(self.r) < 0:
            raise ValueError("exponent r must be non-negative")
        if self.variant not in (INDICATOR, NEWFORM):
            raise ValueError(f"unknown local variant {self.variant!r}")

    @property
    def scale(self) -> Fraction:
        return nu(self.p ** self.r)

    def require_indicator(self):
        if self.variant != INDICATOR:
            raise UnsupportedVariant("newform projectors have no pointwise formula and cannot be integrated numerically")


@dataclass(frozen=True, init=False)
class GlobalTestFunction:
    """f = tensor of local f_p; unlisted primes carry r = 0."""

    locals: Tuple[Tuple[int, int], ...] = ()

    def __init__(self, locals: Mapping[int, int] | Iterable[Tuple[int, int]] = ()):
        items = dict(locals.items() if isinstance(locals, Mapping) else locals)
        for p, r in items.items():
            LocalTestFunction(int(p), int(r))
        pairs = tuple(sorted((int(p), int(r)) for p, r in items.items() if int(r) > 0))
        object.__setattr__(self, "locals", pairs)

    @classmethod
    def of_level(cls, N: int) -> "GlobalTestFunction":
        return cls(factorize(N) if N > 1 else {})

    @property
    def level(self) -> int:
        out = 1
        for p, r in self.locals:
            out *= p ** r
        return out

    @property
    def f_one(self) -> Fraction:
        return nu(self.level)

    def exponent(self, p: int) -> int:
        return dict(self.locals).get(p, 0)

    def local(self, p: int) -> LocalTestFunction:
        return LocalTestFunction(p, self.exponent(p))

    def to_dict(self):
        return {"locals": {str(p): r for p, r in self.locals}, "level": self.level}


@dataclass(frozen=True)
class PAdicMatrix:
    a: Fraction
    b: Fraction
    c: Fraction
    d: Fraction
    p: int

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if self.det == 0:
            raise ValueError("matrix is singular")

    @property
    def det(self) -> Fraction:
        return self.a * self.d - self.b * self.c


def in_z_k0(g: PAdicMatrix, r: int) -> bool:
    """True iff g lies in Z(Q_p) K_0(p^r).

    Scale by p^{-min valuation}; then all entries are integral and the
    test is a unit determinant plus v_p(lower left) >= r.
    """
    p = g.p
    vals = [vp(x, p) for x in (g.a, g.b, g.c, g.d)]
    shift = min(vals)
    if vp(g.det, p) - 2 * shift != 0:
        return False
    return vals[2] - shift >= r


# ---------------------------------------------------------------------------
# local orbital integrals

def support_depth(mu, p: int) -> int:
    """Smallest A with the integrand supported in p^{-A} Z_p x p^{-A} Z_p."""
    v = vp(mu, p)
    return max(0, -int(v) // 2) if v != math.inf else 0


@lru_cache(maxsize=4096)
def _support(p: int, r: int, mu: Fraction, A: int, D: int):
    """Coset representatives (a1, a2) with n(-a1/p^A) w_mu n(a2/p^A) in Z K_0(p^r)."""
    q = p ** A
    M = p ** (A + D)
    hits1, hits2 = [], []
    for a1 in range(M):
        t1 = Fraction(a1, q)
        for a2 in range(M):
            t2 = Fraction(a2, q)
            g = PAdicMatrix(-t1, -t1 * t2 - mu, Fraction(1), t2, p)
            if in_z_k0(g, r):
                hits1.append(a1)
                hits2.append(a2)
    return np.array(hits1, dtype=np.int64), np.array(hits2, dtype=np.int64)


def _root_sum(residues: np.ndarray, q: int) -> complex:
    """Sum of e(residue / q) with correctly rounded real and imaginary parts."""
    if residues.size == 0:
        return 0j
    ang = (2.0 * math.pi / q) * residues.astype(float)
    return complex(math.fsum(np.cos(ang)), math.fsum(np.sin(ang)))


def _reduced_local(p: int, r: int, m: int, n: int, mu: Fraction) -> float:
    v = vp(mu, p)
    if v == math.inf or v % 2 != 0:
        return 0.0
    k = -int(v) // 2
    if k < r or k < 0:
        return 0.0
    scale = float(nu(p ** r))
    if k == 0:
        return scale
    q = p ** k
    unit = mu * p ** (2 * k)
    u = unit.numerator * pow(unit.denominator, -1, q) % q
    return scale * kloosterman_prime_power(m % q, (n * u) % q, q)


def local_orbital_integral(f_p: LocalTestFunction, m: int, n: int, mu, method: str = "enumerate",
                           depth_A: Optional[int] = None, depth_D: int = 0,
                           budget: int = DEFAULT_BUDGET) -> ComplexValue:
    """Exact p-local factor of H(m, n, c) for mu = 1/c^2 (or any nonzero mu).

    ``method='enumerate'`` sums the integrand over cosets of p^D Z_p inside
    p^{-A} Z_p, testing membership of every matrix.  ``method='reduced'``
    uses the closed form nu(p^r) S(m, n u, p^k) that the enumeration
    collapses to (u the unit part of mu).
    """
    f_p.require_indicator()
    mu = Fraction(mu)
    if mu == 0:
        raise ValueError("mu must be nonzero")
    p, r = f_p.p, f_p.r
    if method == "reduced":
        return ComplexValue(_reduced_local(p, r, int(m), int(n), mu), 0.0)
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    A = support_depth(mu, p) if depth_A is None else int(depth_A)
    D = int(depth_D)
    if A < 0 or D < 0:
        raise ValueError("depths must be non-negative")
    if p ** (2 * (A + D)) > budget:
        raise BudgetExceeded(f"p^(2(A+D)) = {p}^{2 * (A + D)} exceeds the enumeration budget {budget}")
    a1, a2 = _support(p, r, mu, A, D)
    q = p ** A
    res = (int(m) * a1 - int(n) * a2) % q
    total = _root_sum(res, q) * float(f_p.scale) / float(p ** (2 * D))
    return ComplexValue.of(total)


def local_diagonal_integral(f_p: LocalTestFunction, m: int, depth_A: int = 2,
                            budget: int = DEFAULT_BUDGET) -> ComplexValue:
    """int f_p(n(t)) theta_p(-m t) dt by enumeration over p^{-A} Z_p / Z_p."""
    f_p.require_indicator()
    p, r = f_p.p, f_p.r
    q = p ** depth_A
    if q > budget:
        raise BudgetExceeded("diagonal enumeration exceeds budget")
    hits = [a for a in range(q)
            if in_z_k0(PAdicMatrix(Fraction(1), Fraction(a, q), Fraction(0), Fraction(1), p), r)]
    res = (-int(m) * np.array(hits, dtype=np.int64)) % q
    return ComplexValue.of(_root_sum(res, q) * float(f_p.scale))


def projective_line_size(p: int, r: int) -> int:
    """#P^1(Z/p^r) = [K_p : K_0(p^r)], counted from primitive vectors."""
    if r == 0:
        return 1
    q = p ** r
    # primitive pairs (x, y) mod q up to units: count pairs not both divisible by p
    primitive = q * q - (q // p) ** 2
    units = q - q // p
    return primitive // units


def local_weight_delta_p(f_p: LocalTestFunction) -> float:
    """delta_p via Plancherel: ||f_p||_2^2 = nu(p^r)^2 vol(K_0(p^r)).

    pi(f_p) is the projection onto the K_0(p^r)-fixed vectors, so the
    Plancherel integral of its Hilbert-Schmidt norm squared equals the
    L^2 norm squared of f_p, with vol(K_p) = 1.
    """
    if f_p.variant != INDICATOR:
        raise UnsupportedVariant("delta_p is only implemented for the congruence indicator")
    vol = Fraction(1, projective_line_size(f_p.p, f_p.r))
    return float(f_p.scale ** 2 * vol)


def l_pi_one(kind: str, theta, p: int) -> float:
    """L_pi(1) in the three printed cases: 'unramified', 'conductor-1', 'conductor-ge2'."""
    if not is_prime(int(p)):
        raise ValueError(f"{p} is not prime")
    if kind == "conductor-1":
        return 1.0 / (1.0 + 1.0 / p)
    if kind in ("conductor-ge2", "conductor->=2"):
        return 1.0 - 1.0 / p
    if kind != "unramified":
        raise ValueError(f"unknown kind {kind!r}")
    th = complex(theta)
    if th.imag == 0:
        if not 0 <= th.real <= math.pi:
            raise ValueError("tempered theta must lie in [0, pi]")
    else:
        tau = th.imag / math.log(p)
        if th.real != 0 or not 0 < tau < 0.5:
            raise ValueError("non-tempered theta must be i tau log p with 0 < tau < 1/2")
    z = cmath.exp(2j * th)
    val = (1 - p ** -2.0) / ((1 - z / p) * (1 - 1.0 / p) * (1 - 1 / (z * p)))
    return float(val.real)


# ---------------------------------------------------------------------------
# classical Kloosterman sums

def kloosterman_classical(m: int, n: int, c: int) -> float:
    """S(m, n, c) by the direct sum over units, inverses from the extended gcd."""
    c = int(c)
    if c < 1:
        raise ValueError("c must be a positive integer")
    if c == 1:
        return 1.0
    terms = []
    for x in range(1, c):
        if math.gcd(x, c) == 1:
            xi = pow(x, -1, c)
            terms.append(math.cos(2 * math.pi * ((m * x + n * xi) % c) / c))
    return math.fsum(terms)


@lru_cache(maxsize=8192)
def _unit_table(q: int):
    x = np.array([v for v in range(1, q) if math.gcd(v, q) == 1], dtype=np.int64)
    xi = np.array([pow(int(v), -1, q) for v in x], dtype=np.int64)
    x.setflags(write=False)
    xi.setflags(write=False)
    return x, xi


def kloosterman_prime_power(a: int, b, q: int):
    """S(a, b, q) over a cached unit table; ``b`` may be an integer array."""
    if q == 1:
        return np.ones(np.shape(b)) if np.ndim(b) else 1.0
    x, xi = _unit_table(q)
    b_arr = np.atleast_1d(np.asarray(b, dtype=np.int64)) % q
    res = (int(a) % q * x[None, :] + b_arr[:, None] * xi[None, :]) % q
    vals = np.cos((2.0 * math.pi / q) * res).sum(axis=1)
    return vals if np.ndim(b) else float(vals[0])


def kloosterman_fast(m: int, n, c: int, factors: Optional[Mapping[int, int]] = None):
    """S(m, n, c) by twisted multiplicativity over prime powers.

    S(a, b, qr) = S(a rbar, b rbar, q) S(a qbar, b qbar, r) for coprime q, r.
    ``n`` may be an integer array, giving a vector of sums with one m.
    """
    c = int(c)
    fac = factorize(c) if factors is None else factors
    out = np.ones(np.shape(n)) if np.ndim(n) else 1.0
    n_arr = np.asarray(n, dtype=np.int64)
    for p, k in fac.items():
        q = p ** k
        rest = c // q
        ri = pow(rest % q, -1, q) if q > 1 else 0
        out = out * kloosterman_prime_power((m * ri) % q, (n_arr % q) * ri % q, q)
    return out


# ---------------------------------------------------------------------------
# generalized Kloosterman sums

EXACT = "exact-local"
FAST = "classical-fast"


@dataclass(frozen=True)
class KloostermanValue:
    m: int
    n: int
    c: int
    value: ComplexValue
    path: str
    error: float = 0.0

    def __post_init__(self):
        if self.path == FAST and self.value.im != 0.0:
            raise ValueError("classical-fast values must be real")

    def __complex__(self):
        return complex(self.value)

    def to_dict(self):
        return {"m": self.m, "n": self.n, "c": self.c, "re": self.value.re, "im": self.value.im,
                "path": self.path, "error": self.error}


def split_modulus(c: int, N: int):
    """c = c0 * cN with cN composed of primes dividing N and (c0, N) = 1."""
    cN = 1
    for p in factorize(N) if N > 1 else {}:
        while c % p == 0:
            c //= p
            cN *= p
    return c, cN


def _exact_product(f: GlobalTestFunction, m: int, n: int, c: int, budget: int):
    mu = Fraction(1, c * c)
    primes = sorted(set(factorize(c)) | set(dict(f.locals)))
    val = 1 + 0j
    terms = 0
    for p in primes:
        local = local_orbital_integral(f.local(p), m, n, mu, budget=budget)
        val *= complex(local)
        terms += p ** (2 * support_depth(mu, p))
    return val, terms


def _fast_product(f: GlobalTestFunction, m: int, n: int, c: int) -> float:
    N = f.level
    c0, cN = split_modulus(c, N)
    mu = Fraction(1, c * c)
    val = 1.0
    for p, _ in f.locals:
        val *= _reduced_local(p, f.exponent(p), m, n, mu)
        if val == 0.0:
            return 0.0
    if c0 > 1:
        ci = pow(cN % c0, -1, c0)
        val *= float(kloosterman_fast((m * ci) % c0, (n * ci) % c0, c0))
    return val


_VALIDATED: dict = {}


def validate_fast_path(f: GlobalTestFunction, c_max: Optional[int] = None, mn=((1, 1), (1, 2), (2, 3), (-1, 1), (3, 5)),
                       budget: int = 200_000, tol: float = 1e-9) -> bool:
    """Compare exact enumeration with the fast path on a sweep; cache the verdict."""
    key = (f, c_max)
    if key in _VALIDATED:
        return _VALIDATED[key]
    N = f.level
    c_max = c_max or max(4 * N, 60)
    ok = True
    checked = 0
    for c in range(1, c_max + 1):
        for m, n in mn:
            try:
                exact, _ = _exact_product(f, m, n, c, budget)
            except BudgetExceeded:
                continue
            fast = _fast_product(f, m, n, c)
            checked += 1
            if abs(exact - fast) > tol * max(1.0, abs(exact)):
                ok = False
    _VALIDATED[key] = ok and checked > 0
    return _VALIDATED[key]


def kloosterman_generalized(f: GlobalTestFunction, m: int, n: int, c: int, path: str = "auto",
                            budget: int = DEFAULT_BUDGET) -> KloostermanValue:
    """H(m, n, c) as the product of local orbital integrals over p | cN.

    ``path='exact-local'`` enumerates every local factor.  ``'classical-fast'``
    takes the prime-to-N part from the classical sum and the N part from the
    reduced local form; ``'auto'`` uses it once :func:`validate_fast_path`
    has confirmed agreement for this f.
    """
    c = int(c)
    if c < 1:
        raise ValueError("c must be a positive integer")
    m, n = int(m), int(n)
    if path == "auto":
        path = FAST if validate_fast_path(f) else EXACT
    if path == EXACT:
        val, terms = _exact_product(f, m, n, c, budget)
        err = 4 * np.finfo(float).eps * float(f.f_one) * max(terms, 1)
        return KloostermanValue(m, n, c, ComplexValue.of(val), EXACT, err)
    if path == FAST:
        val = _fast_product(f, m, n, c)
        err = 4 * np.finfo(float).eps * float(f.f_one) * c
        return KloostermanValue(m, n, c, ComplexValue(float(val), 0.0), FAST, err)
    raise ValueError(f"unknown path {path!r}")


def trivial_bound(f: GlobalTestFunction, c: int, kappa=None) -> float:
    """c * kappa * f(1)."""
    kappa = f.level if kappa is None else kappa
    return float(c * Fraction(kappa) * f.f_one)


def divisor_count(n: int) -> int:
    out = 1
    for e in factorize(n).values():
        out *= e + 1
    return out


def weil_bound(m: int, n: int, c: int) -> float:
    """tau(c) gcd(m, n, c)^{1/2} c^{1/2}."""
    g = math.gcd(math.gcd(abs(m), abs(n)), c)
    return divisor_count(c) * math.sqrt(g * c)


@dataclass
class ModuliReport:
    c_max: int
    admissible: list
    conductor_estimate: Optional[int]
    grid: list = field(default_factory=list)
    note: str = "conductor_estimate is the gcd of the scanned admissible set, an upper-bound estimate of the geometric conductor"

    def to_dict(self):
        return {"c_max": self.c_max, "admissible": list(self.admissible),
                "conductor_estimate": self.conductor_estimate, "grid": [list(g) for g in self.grid],
                "note": self.note}


def admissible_moduli(f: GlobalTestFunction, c_max: int, mn_grid: Sequence[Tuple[int, int]],
                      threads: int = 1, path: str = "auto", threshold: float = 1e-9) -> ModuliReport:
    """Moduli c <= c_max where H(m, n, c) is nonzero for some grid pair."""
    if c_max < 1:
        raise ValueError("c_max must be >= 1")
    grid = [(int(m), int(n)) for m, n in mn_grid]
    if not grid:
        raise ValueError("the (m, n) grid must be nonempty")
    if path == "auto":
        path = FAST if validate_fast_path(f) else EXACT

    def hit(c):
        return any(abs(complex(kloosterman_generalized(f, m, n, c, path=path).value)) > threshold for m, n in grid)

    cs = list(range(1, int(c_max) + 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            flags = list(ex.map(hit, cs))
    else:
        flags = [hit(c) for c in cs]
    found = [c for c, ok in zip(cs, flags) if ok]
    kappa = reduce(math.gcd, found) if found else None
    return ModuliReport(int(c_max), found, kappa, grid)
