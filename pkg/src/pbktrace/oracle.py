"""Hecke eigenvalues of the level-11 weight-2 newform via point counting.

The newform corresponds to the elliptic curve y^2 + y = x^3 - x^2 - 10x - 20,
so a_p = p + 1 - #E(F_p) for p != 11.  Nothing here uses the trace formula;
it is the independent side of the end-to-end check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache


class BadReduction(ValueError):
    pass


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def factorize(n: int) -> dict:
    """Prime factorisation by trial division."""
    if n < 1:
        raise ValueError("factorize needs n >= 1")
    out = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


@dataclass(frozen=True)
class EllipticCurve11a:
    """Long Weierstrass model [a1, a2, a3, a4, a6] = [0, -1, 1, -10, -20]."""

    a1: int = 0
    a2: int = -1
    a3: int = 1
    a4: int = -10
    a6: int = -20

    def b_invariants(self):
        a1, a2, a3, a4, a6 = self.a1, self.a2, self.a3, self.a4, self.a6
        b2 = a1 * a1 + 4 * a2
        b4 = 2 * a4 + a1 * a3
        b6 = a3 * a3 + 4 * a6
        b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4
        return b2, b4, b6, b8

    @property
    def discriminant(self) -> int:
        b2, b4, b6, b8 = self.b_invariants()
        return -b2 * b2 * b8 - 8 * b4 ** 3 - 27 * b6 * b6 + 9 * b2 * b4 * b6

    @property
    def c4(self) -> int:
        b2, b4, _, _ = self.b_invariants()
        return b2 * b2 - 24 * b4

    @property
    def j_invariant(self) -> Fraction:
        return Fraction(self.c4 ** 3, self.discriminant)

    @property
    def conductor(self) -> int:
        """Conductor from Tate's criterion for multiplicative reduction.

        The model is minimal (12th powers do not divide the discriminant).  At
        a prime dividing the discriminant but not c4 the reduction is
        multiplicative and contributes p^1.
        """
        disc = abs(self.discriminant)
        N = 1
        for p, e in factorize(disc).items():
            if self.c4 % p != 0:
                N *= p
            else:
                raise NotImplementedError("additive reduction is not handled")
        return N

    def rhs(self, x: int, p: int) -> int:
        return (x * x * x + self.a2 * x * x + self.a4 * x + self.a6) % p

    def count_points(self, p: int) -> int:
        """#E(F_p) including the point at infinity."""
        if p == 2:
            n = 1
            for x in range(2):
                for y in range(2):
                    if (y * y + self.a1 * x * y + self.a3 * y - self.rhs(x, 2)) % 2 == 0:
                        n += 1
            return n
        # completing the square: (2y + a1 x + a3)^2 = 4 rhs + (a1 x + a3)^2
        n = 1
        for x in range(p):
            d = (4 * self.rhs(x, p) + (self.a1 * x + self.a3) ** 2) % p
            if d == 0:
                n += 1
            else:
                n += 1 + _legendre(d, p)
        return n


CURVE = EllipticCurve11a()
LEVEL = 11


def _legendre(a: int, p: int) -> int:
    r = pow(a, (p - 1) // 2, p)
    return -1 if r == p - 1 else r


@lru_cache(maxsize=None)
def ec_ap(p: int) -> int:
    """a_p = p + 1 - #E(F_p) for a prime p != 11."""
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    if p == LEVEL:
        raise BadReduction("11 is the prime of bad reduction")
    return p + 1 - CURVE.count_points(p)


def _a_prime_power(p: int, r: int) -> int:
    prev, cur = 1, ec_ap(p)
    if r == 0:
        return 1
    for _ in range(r - 1):
        prev, cur = cur, ec_ap(p) * cur - p * prev
    return cur


def ec_am(m: int) -> int:
    """a_m for m coprime to 11, by multiplicativity and the Hecke recursion."""
    if m < 1:
        raise ValueError("m must be positive")
    if math.gcd(m, LEVEL) != 1:
        raise BadReduction(f"m={m} is not coprime to 11")
    out = 1
    for p, r in factorize(m).items():
        out *= _a_prime_power(p, r)
    return out


def lambda_oracle(m: int) -> float:
    """Ramanujan-normalised eigenvalue a_m / sqrt(m)."""
    return ec_am(m) / math.sqrt(m)


def hasse_check(p: int) -> bool:
    """|a_p| <= 2 sqrt(p)."""
    a = ec_ap(p)
    return a * a <= 4 * p
