"""Arithmetic of the imaginary quadratic field M = Q(sqrt(-D)).

Only odd fundamental discriminants -D are admitted (D > 3, squarefree,
D = 3 mod 4).  Two independent class number routines are provided so they
can cross-check each other, plus the root-number bookkeeping for cubes of
minimally ramified anticyclotomic characters and their tame twists.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd, isqrt

from .errors import NotFundamental


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def is_squarefree(n: int) -> bool:
    d = 2
    while d * d <= n:
        if n % (d * d) == 0:
            return False
        d += 1
    return True


def prime_factors(n: int):
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


@dataclass(frozen=True)
class FundamentalDiscriminant:
    """D > 3 odd squarefree with D = 3 mod 4; the field discriminant is -D."""

    D: int

    def __post_init__(self):
        D = self.D
        if D <= 3 or D % 2 == 0 or D % 4 != 3 or not is_squarefree(D):
            raise NotFundamental(f"D={D} is not an odd fundamental discriminant parameter")


def validate_discriminant(D: int) -> FundamentalDiscriminant:
    return FundamentalDiscriminant(D)


def kronecker(a: int, n: int) -> int:
    """Kronecker symbol (a/n), full generality."""
    if n == 0:
        return 1 if a in (1, -1) else 0
    sign = 1
    if n < 0:
        n = -n
        if a < 0:
            sign = -1
    # factor out twos of n
    t = 0
    while n % 2 == 0:
        n //= 2
        t += 1
    if t:
        if a % 2 == 0:
            return 0
        if t % 2 == 1 and a % 8 in (3, 5):
            sign = -sign
    a %= n
    # Jacobi on odd n via reciprocity
    while a:
        while a % 2 == 0:
            a //= 2
            if n % 8 in (3, 5):
                sign = -sign
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            sign = -sign
        a %= n
    return sign if n == 1 else 0


def legendre_bruteforce(a: int, p: int) -> int:
    """(a/p) by scanning squares mod p; oracle for kronecker."""
    assert is_prime(p) and p % 2 == 1
    a %= p
    if a == 0:
        return 0
    return 1 if any(x * x % p == a for x in range(1, p)) else -1


def kronecker_bruteforce(a: int, n: int) -> int:
    """Product-of-Legendre oracle, defined for odd n != 0."""
    assert n != 0 and n % 2 == 1
    sign = 1
    if n < 0:
        n = -n
        if a < 0:
            sign = -1
    for p in prime_factors(n):
        e = 0
        m = n
        while m % p == 0:
            m //= p
            e += 1
        s = legendre_bruteforce(a, p)
        if s == 0:
            return 0
        if e % 2 == 1:
            sign *= s
    return sign


class SplittingType:
    SPLIT = "split"
    INERT = "inert"
    RAMIFIED = "ramified"


def splitting(D: FundamentalDiscriminant, p: int) -> str:
    """Behaviour of the rational prime p in Q(sqrt(-D))."""
    assert is_prime(p)
    if D.D % p == 0:
        return SplittingType.RAMIFIED
    if p == 2:
        # disc -D odd; 2 is inert iff -D = 5 mod 8
        return SplittingType.INERT if (-D.D) % 8 == 5 else SplittingType.SPLIT
    s = kronecker(-D.D, p)
    return SplittingType.INERT if s == -1 else SplittingType.SPLIT


def class_number_forms(D: FundamentalDiscriminant) -> int:
    """Count reduced primitive binary quadratic forms of discriminant -D."""
    disc = -D.D
    h = 0
    a = 1
    while a * a <= D.D // 3 + 1:
        for b in range(-a + 1, a + 1):
            num = b * b - disc
            if num % (4 * a):
                continue
            c = num // (4 * a)
            if c < a:
                continue
            if gcd(gcd(a, abs(b)), c) != 1:
                continue
            if b < 0 and (c == a or abs(b) == a):
                continue  # reduced form wants b >= 0 on the boundary
            h += 1
        a += 1
    return h


def class_number_dirichlet(D: FundamentalDiscriminant) -> int:
    """h = |sum_{a<D} chi(a) a| / D with chi = kronecker(-D, .); valid for -D < -4."""
    s = sum(kronecker(-D.D, a) * a for a in range(1, D.D))
    assert s % D.D == 0
    return abs(s) // D.D


@dataclass(frozen=True)
class RootNumberDatum:
    D: FundamentalDiscriminant
    W_canonical_cube: int  # sign of the functional equation for the cubed character

    def __post_init__(self):
        assert self.W_canonical_cube == kronecker(-2, self.D.D)


def canonical_cube_root_number(D: FundamentalDiscriminant) -> int:
    """(-2/D): +1 exactly when D = 3 mod 8."""
    return kronecker(-2, D.D)


def root_number_datum(D: FundamentalDiscriminant) -> RootNumberDatum:
    return RootNumberDatum(D, canonical_cube_root_number(D))


def twisted_root_number(W: int, a: int, chi_at_minus1: int) -> int:
    """Sign after twisting by a finite-order character of conductor exponent a."""
    assert W in (1, -1) and chi_at_minus1 in (1, -1) and a >= 0
    return ((-1) ** a) * chi_at_minus1 * W


def count_sign_switching_tame_characters(ell: int) -> int:
    """Characters chi of the cyclic group of order ell+1 with chi^3 nontrivial
    and chi(-1) = +1, counted by enumeration."""
    assert is_prime(ell) and ell % 2 == 1
    n = ell + 1  # order of the norm-one residue group
    # -1 is the unique element of order 2, i.e. exponent n/2 of a generator
    half = n // 2
    count = 0
    for k in range(n):  # chi sends the generator to zeta_n^k
        chi_cubed_trivial = (3 * k) % n == 0
        chi_at_minus1 = (k * half) % n == 0
        if not chi_cubed_trivial and chi_at_minus1:
            count += 1
    return count


def count_sign_switching_closed_form(ell: int) -> int:
    assert is_prime(ell) and ell % 2 == 1
    return (ell - 1) // 2 if (ell + 1) % 3 else (ell - 5) // 2
