"""Geometric sides of the weight-2 Petersson and opposite-sign Kuznetsov formulas.

Every sum over moduli comes with a rigorous majorant for the part beyond
c_max, built from Weil's bound on each local Kloosterman factor (Petersson)
or from the trivial bound times the contour-shift bound on H^- (Kuznetsov).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .archimedean import (ArchTestFunction, f_infty_identity, h_minus_bound_constant,
                          h_minus_transform)
from .numkernel import QuadratureSpec, bessel_j1_array
from .oracle import LEVEL, lambda_oracle
from .padic import (EXACT, FAST, GlobalTestFunction, _reduced_local, admissible_moduli,
                    divisor_count, kloosterman_fast, kloosterman_generalized,
                    local_weight_delta_p, split_modulus, validate_fast_path)

PLANCHEREL = "plancherel"
M_WEIGHTED = "m-weighted"


class PreconditionError(ValueError):
    pass


class IllConditioned(RuntimeError):
    """G(1,1) is too small compared with its tail majorant for the ratio to mean anything."""


@dataclass
class GeometricSideResult:
    value: float
    partial_terms: list
    tail_majorant: float
    c_max: int
    diagonal_term: float = 0.0
    m1: int = 0
    m2: int = 0
    kind: str = "petersson2"

    def to_dict(self, with_terms: bool = True):
        d = {"kind": self.kind, "m1": self.m1, "m2": self.m2, "value": self.value,
             "diagonal_term": self.diagonal_term, "tail_majorant": self.tail_majorant,
             "c_max": self.c_max}
        if with_terms:
            d["partial_terms"] = [[int(c), float(h), float(k), float(t)] for c, h, k, t in self.partial_terms]
        return d


@dataclass
class VerificationRow:
    m: int
    lambda_computed: float
    lambda_oracle: float
    abs_error: float
    tail_majorant: float
    ratio_error_bound: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class VerificationReport:
    rows: list
    g11: float
    g11_tail_majorant: float
    c_max: int
    tolerance: float
    tail_shrink_factor: float
    passed: bool
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"rows": [r.to_dict() for r in self.rows], "g11": self.g11,
                "g11_tail_majorant": self.g11_tail_majorant, "c_max": self.c_max,
                "tolerance": self.tolerance, "tail_shrink_factor": self.tail_shrink_factor,
                "passed": self.passed, "notes": list(self.notes)}


# ---------------------------------------------------------------------------
# divisor-sum tails

def divisor_summatory(X: int) -> int:
    """D(X) = sum_{d <= X} tau(d) by the hyperbola method."""
    X = int(X)
    if X < 1:
        return 0
    s = math.isqrt(X)
    return 2 * sum(X // d for d in range(1, s + 1)) - s * s


def divisor_tail_bound(X: int) -> float:
    """Upper bound for sum_{d > X} tau(d) d^{-3/2}, X >= 1.

    Partial summation with D(u) <= u (ln u + 1) gives
    -D(X) X^{-3/2} + (3/2) X^{-1/2} (2 ln X + 6).
    """
    X = int(X)
    if X < 1:
        raise ValueError("X must be >= 1")
    lx = math.log(X)
    return 1.5 * (2.0 * lx + 6.0) / math.sqrt(X) - divisor_summatory(X) / X ** 1.5


def petersson_term_majorant(f: GlobalTestFunction, m1: int, m2: int, c: int) -> float:
    """|H/c J1| / 2 <= pi sqrt(m1 m2) f(1) tau(c) sqrt(gcd(m1, m2, c)) c^{-3/2}.

    |J1(x)| <= x/2, and each local factor of H is nu(p^r) times a classical
    Kloosterman sum with twisted arguments, so Weil applies factor by factor.
    """
    g = math.gcd(math.gcd(m1, m2), c)
    return math.pi * math.sqrt(m1 * m2) * float(f.f_one) * divisor_count(c) * math.sqrt(g) / c ** 1.5


def petersson_tail_majorant(f: GlobalTestFunction, m1: int, m2: int, c_max: int) -> float:
    """Sum of :func:`petersson_term_majorant` over N | c, c > c_max."""
    N = f.level
    X = max(int(c_max) // N, 1)
    g = math.gcd(m1, m2)
    return (math.pi * math.sqrt(m1 * m2) * float(f.f_one) * divisor_count(N) * math.sqrt(g)
            / N ** 1.5 * divisor_tail_bound(X))


# ---------------------------------------------------------------------------
# H(m1, n, c) for many n at once

def _h_row(f: GlobalTestFunction, m1: int, ns: np.ndarray, c: int, path: str) -> np.ndarray:
    if path == EXACT:
        return np.array([kloosterman_generalized(f, m1, int(n), c, path=EXACT).value.re for n in ns])
    N = f.level
    c0, cN = split_modulus(c, N)
    mu = Fraction(1, c * c)
    out = np.full(ns.shape, 1.0)
    for p, r in f.locals:
        out *= np.array([_reduced_local(p, r, m1, int(n), mu) for n in ns])
    if c0 > 1 and np.any(out != 0.0):
        ci = pow(cN % c0, -1, c0)
        out *= np.atleast_1d(kloosterman_fast((m1 * ci) % c0, (ns * ci) % c0, c0))
    return out


def h_matrix(f: GlobalTestFunction, m1: int, ns: Sequence[int], cs: Sequence[int],
             threads: int = 1, path: str = "auto") -> np.ndarray:
    """H(m1, n, c) for n in ns (columns) and c in cs (rows).

    Chunks are evaluated independently and stacked in modulus order, so the
    result does not depend on the number of workers.
    """
    ns = np.asarray(list(ns), dtype=np.int64)
    cs = [int(c) for c in cs]
    if path == "auto":
        path = FAST if validate_fast_path(f) else EXACT
    if not cs:
        return np.zeros((0, ns.size))

    def chunk(block):
        return np.array([_h_row(f, m1, ns, c, path) for c in block]).reshape(len(block), ns.size)

    size = max(1, len(cs) // (8 * max(threads, 1)))
    blocks = [cs[i:i + size] for i in range(0, len(cs), size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(chunk, blocks))
    else:
        parts = [chunk(b) for b in blocks]
    return np.vstack(parts)


def _check_coprime(f: GlobalTestFunction, *ms):
    N = f.level
    for m in ms:
        if math.gcd(int(m), N) != 1:
            raise PreconditionError(f"m={m} is not coprime to the level {N}")


def diagonal_constant(f: GlobalTestFunction) -> float:
    """delta = prod_p delta_p."""
    out = 1.0
    for p, _ in f.locals:
        out *= local_weight_delta_p(f.local(p))
    return out


def _diagonal(f, m1, m2, normalization):
    if m1 != m2:
        return 0.0
    if normalization == PLANCHEREL:
        return diagonal_constant(f) / (4.0 * math.pi)
    if normalization == M_WEIGHTED:
        return m1 * diagonal_constant(f) / (4.0 * math.pi)
    raise ValueError(f"unknown diagonal normalization {normalization!r}")


def _petersson_batch(f, m1, m2s, c_max, threads, path, normalization):
    N = f.level
    cs = list(range(N, int(c_max) + 1, N))
    H = h_matrix(f, m1, m2s, cs, threads=threads, path=path)
    c_arr = np.asarray(cs, dtype=float)
    out = []
    for j, m2 in enumerate(m2s):
        kern = bessel_j1_array(4.0 * math.pi * math.sqrt(m1 * m2) / c_arr)
        terms = -0.5 * H[:, j] / c_arr * kern
        diag = _diagonal(f, m1, m2, normalization)
        value = math.fsum([diag] + terms.tolist())
        out.append(GeometricSideResult(
            value=value,
            partial_terms=list(zip(cs, H[:, j].tolist(), kern.tolist(), terms.tolist())),
            tail_majorant=petersson_tail_majorant(f, m1, m2, c_max),
            c_max=int(c_max), diagonal_term=diag, m1=int(m1), m2=int(m2)))
    return out


def petersson2_geometric(f: GlobalTestFunction, m1: int, m2: int, c_max: int,
                         spec: Optional[QuadratureSpec] = None,
                         diagonal_normalization: str = PLANCHEREL, threads: int = 1,
                         path: str = "auto") -> GeometricSideResult:
    """(1/4pi) delta_{m1=m2} delta - (1/2) sum_{N | c <= c_max} H(m1, m2, c)/c J1(4 pi sqrt(m1 m2)/c).

    ``spec`` is accepted for interface symmetry; J1 is evaluated to machine
    precision so no quadrature is involved.
    """
    m1, m2 = int(m1), int(m2)
    if m1 < 1 or m2 < 1:
        raise PreconditionError("m1, m2 must be positive")
    _check_coprime(f, m1, m2)
    if c_max < f.level:
        raise PreconditionError(f"c_max={c_max} is below the level {f.level}")
    return _petersson_batch(f, m1, [m2], c_max, threads, path, diagonal_normalization)[0]


def verify_weight2_level11(m_list: Sequence[int], c_max: int = 100_000, tol: float = 1e-2,
                           threads: int = 1, guard: float = 2.0) -> VerificationReport:
    """lambda(m) = G(1, m) / G(1, 1) at level 11 against the point-counting oracle.

    Passing is strict: abs_error <= tol on every row.  The ratio error bound
    (tail of G(1, m) plus |lambda| times the tail of G(1, 1), over
    |G(1, 1)| - tail) is reported alongside.
    """
    f = GlobalTestFunction.of_level(LEVEL)
    ms = [int(m) for m in m_list]
    _check_coprime(f, *ms)
    if c_max < LEVEL:
        raise PreconditionError("c_max must be at least 11")
    res = _petersson_batch(f, 1, [1] + ms, c_max, threads, "auto", PLANCHEREL)
    g11, t11 = res[0].value, res[0].tail_majorant
    if abs(g11) < guard * t11:
        raise IllConditioned(f"|G(1,1)| = {abs(g11):.4g} is below {guard} x its tail majorant {t11:.4g}")
    rows = []
    for m, r in zip(ms, res[1:]):
        lam = r.value / g11
        ora = lambda_oracle(m)
        err = abs(lam - ora)
        bound = (r.tail_majorant + abs(lam) * t11) / (abs(g11) - t11)
        rows.append(VerificationRow(m, lam, ora, err, r.tail_majorant, bound, err <= tol))
    shrink = t11 / petersson_tail_majorant(f, 1, 1, 2 * c_max)
    return VerificationReport(rows, g11, t11, int(c_max), float(tol), shrink,
                              all(r.passed for r in rows))


# ---------------------------------------------------------------------------
# opposite-sign side

def bk_opposite_geometric(f: GlobalTestFunction, h: ArchTestFunction, m1: int, m2: int, c_max: int,
                          spec: Optional[QuadratureSpec] = None, threads: int = 1,
                          route: str = "I-form") -> GeometricSideResult:
    """sum_{N | c <= c_max} H(m1, m2, c)/c H^-(4 pi sqrt|m1 m2| / c), m1 m2 < 0.

    The tail uses |H| <= c N f(1) and |H^-(x)| <= A x^2 e^x, so terms beyond
    c_max are at most N f(1) A (4 pi)^2 |m1 m2| e^{x0} / c^2 with x0 the
    argument at c_max; summed over c = N d, d > X this is below 1/(N^2 X)
    times the constant.  Quadrature errors of the computed terms are added.
    """
    m1, m2 = int(m1), int(m2)
    if m1 * m2 >= 0:
        raise PreconditionError("the opposite-sign side needs m1 m2 < 0")
    _check_coprime(f, m1, m2)
    N = f.level
    if c_max < N:
        raise PreconditionError(f"c_max={c_max} is below the level {N}")
    if h.is_zero:
        return GeometricSideResult(0.0, [], 0.0, int(c_max), 0.0, m1, m2, "bk-opposite")
    cs = list(range(N, int(c_max) + 1, N))
    H = h_matrix(f, m1, [m2], cs, threads=threads)[:, 0]
    s = 4.0 * math.pi * math.sqrt(abs(m1 * m2))

    def kern(c):
        return h_minus_transform(h, s / c, route, spec)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            ests = list(ex.map(kern, cs))
    else:
        ests = [kern(c) for c in cs]
    terms, qerr = [], []
    for c, hv, e in zip(cs, H, ests):
        terms.append(hv / c * e.value)
        qerr.append(abs(hv) / c * e.error)
    X = int(c_max) // N
    x0 = s / (N * (X + 1))
    A = h_minus_bound_constant(h)
    tail = N * float(f.f_one) * A * s * s * math.exp(x0) / (N * N * X)
    return GeometricSideResult(
        value=math.fsum(terms),
        partial_terms=[(c, float(hv), float(e.value), t) for c, hv, e, t in zip(cs, H, ests, terms)],
        tail_majorant=tail + math.fsum(qerr), c_max=int(c_max), diagonal_term=0.0,
        m1=m1, m2=m2, kind="bk-opposite")


@dataclass
class ParityReport:
    m: int
    geometric_side: float
    tail_majorant: float
    shape: float
    constant: float
    f_infty_one: float
    f_one: float
    conductor: int
    main_term: float
    T: float

    def to_dict(self):
        return dict(self.__dict__)


def parity_bound_demo(f: GlobalTestFunction, h: ArchTestFunction, m: int, c_max: int = 2000,
                      spec: Optional[QuadratureSpec] = None, threads: int = 1) -> ParityReport:
    """Measure C in |opposite-sign side| <= C f_A(1) m^2 / (T^2 kappa^2) exp(16 pi^2 m / kappa).

    kappa is the gcd of the admissible moduli found on a short scan, and
    f_A(1) = f_infty(1) f(1).  Also reports the main term f_infty(1) delta / 2.
    """
    m = int(m)
    if m < 1:
        raise PreconditionError("m must be positive")
    _check_coprime(f, m)
    side = bk_opposite_geometric(f, h, -m, m, c_max, spec, threads=threads)
    scan = admissible_moduli(f, max(4 * f.level, 12), [(-m, m), (1, 1)])
    kappa = scan.conductor_estimate or f.level
    finf = f_infty_identity(h).value
    f1 = float(f.f_one)
    shape = finf * f1 * m * m / (h.T ** 2 * kappa ** 2) * math.exp(16 * math.pi ** 2 * m / kappa)
    bound = abs(side.value) + side.tail_majorant
    return ParityReport(m, side.value, side.tail_majorant, shape, bound / shape, finf, f1, int(kappa),
                        0.5 * finf * diagonal_constant(f), float(h.T))
