"""Exact arithmetic in cyclotomic fields Q(zeta_m) and truncated formal series.

Elements are stored as coordinate vectors in the power basis
1, z, ..., z^(phi(m)-1) of Q(zeta_m), always reduced modulo the m-th
cyclotomic polynomial, so equality is coefficient-wise.  Mixed-order
operands are pushed into Q(zeta_lcm) first.  There is no floating point
anywhere; sign certification of real embeddings goes through rational
interval arithmetic.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from math import gcd

# ---------------------------------------------------------------------------
# integer polynomial helpers (dense lists, low degree first)


def _poly_trim(c):
    while c and c[-1] == 0:
        c.pop()
    return c


def _poly_mul(a, b):
    out = [0] * (len(a) + len(b) - 1) if a and b else []
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return _poly_trim(out)


def _poly_divmod_exact(a, b):
    # b monic-ish with exact division (used for x^m-1 / prod of cyclotomics)
    a = list(a)
    q = [0] * (len(a) - len(b) + 1)
    for i in range(len(a) - len(b), -1, -1):
        coef = a[i + len(b) - 1]
        if coef == 0:
            continue
        assert b[-1] in (1, -1)
        coef //= b[-1]
        q[i] = coef
        for j, y in enumerate(b):
            a[i + j] -= coef * y
    return q, _poly_trim(a)


@lru_cache(maxsize=None)
def cyclotomic_poly(m: int):
    """Integer coefficients of the m-th cyclotomic polynomial."""
    if m == 1:
        return (-1, 1)
    num = [-1] + [0] * (m - 1) + [1]  # x^m - 1
    den = [1]
    for d in range(1, m):
        if m % d == 0:
            den = _poly_mul(den, list(cyclotomic_poly(d)))
    q, r = _poly_divmod_exact(num, den)
    assert not r
    return tuple(q)


def euler_phi(m: int) -> int:
    return len(cyclotomic_poly(m)) - 1


def _reduce_mod_cyclotomic(coeffs, m):
    """Reduce a rational polynomial in zeta_m (any degree) mod Phi_m."""
    phi = cyclotomic_poly(m)
    deg = len(phi) - 1
    c = list(coeffs)
    # first fold exponents mod m (zeta_m^m = 1), cheap and keeps degree < m
    if len(c) > m:
        folded = [Fraction(0)] * m
        for i, x in enumerate(c):
            folded[i % m] += x
        c = folded
    for i in range(len(c) - 1, deg - 1, -1):
        coef = c[i]
        if coef:
            for j in range(deg + 1):
                c[i - deg + j] -= coef * phi[j]
        c.pop()
    while len(c) < deg:
        c.append(Fraction(0))
    return tuple(Fraction(x) for x in c)


class ExactNumber:
    """Element of Q(zeta_m), canonical in the power basis mod Phi_m."""

    __slots__ = ("order", "coeffs", "_key")

    def __init__(self, order, coeffs):
        self.order = order
        self.coeffs = _reduce_mod_cyclotomic(coeffs, order)
        self._key = None

    # -- construction -------------------------------------------------
    @staticmethod
    def from_rational(q) -> "ExactNumber":
        return ExactNumber(1, (Fraction(q),))

    @staticmethod
    def coerce(x) -> "ExactNumber":
        if isinstance(x, ExactNumber):
            return x
        return ExactNumber.from_rational(x)

    def raised_to_order(self, big: int) -> "ExactNumber":
        """Image under Q(zeta_m) -> Q(zeta_big) for order | big."""
        assert big % self.order == 0
        step = big // self.order
        out = [Fraction(0)] * (len(self.coeffs) * step + 1)
        for i, c in enumerate(self.coeffs):
            out[i * step] += c
        return ExactNumber(big, out)

    def _pair(self, other):
        other = ExactNumber.coerce(other)
        m = self.order * other.order // gcd(self.order, other.order)
        return self.raised_to_order(m), other.raised_to_order(m)

    # -- ring ops -----------------------------------------------------
    def __add__(self, other):
        a, b = self._pair(other)
        return ExactNumber(a.order, [x + y for x, y in zip(a.coeffs, b.coeffs)])

    __radd__ = __add__

    def __neg__(self):
        return ExactNumber(self.order, [-x for x in self.coeffs])

    def __sub__(self, other):
        return self + (-ExactNumber.coerce(other))

    def __rsub__(self, other):
        return ExactNumber.coerce(other) - self

    def __mul__(self, other):
        a, b = self._pair(other)
        n = len(a.coeffs)
        out = [Fraction(0)] * (2 * n - 1 if n else 1)
        for i, x in enumerate(a.coeffs):
            if x:
                for j, y in enumerate(b.coeffs):
                    if y:
                        out[i + j] += x * y
        return ExactNumber(a.order, out)

    __rmul__ = __mul__

    def inverse(self) -> "ExactNumber":
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero")
        # extended euclid in Q[x] against Phi_m
        phi = [Fraction(c) for c in cyclotomic_poly(self.order)]
        a = list(self.coeffs)
        r0, r1 = phi, _rat_trim(a)
        s0, s1 = [], [Fraction(1)]
        while len(r1) > 1:
            q, r = _rat_divmod(r0, r1)
            r0, r1 = r1, r
            s0, s1 = s1, _rat_sub(s0, _rat_mul(q, s1))
        assert r1, "non-invertible element in a field"
        inv_lead = 1 / r1[0]
        return ExactNumber(self.order, [c * inv_lead for c in s1])

    def __truediv__(self, other):
        other = ExactNumber.coerce(other)
        return self * other.inverse()

    def __rtruediv__(self, other):
        return ExactNumber.coerce(other) / self

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        out = ExactNumber.from_rational(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def conjugate(self) -> "ExactNumber":
        """Complex conjugation, the Galois element zeta -> zeta^-1."""
        return self.galois(-1)

    def galois(self, j: int) -> "ExactNumber":
        """zeta_m -> zeta_m^j for gcd(j, m) = 1."""
        m = self.order
        j %= m
        assert gcd(j, m) == 1
        out = [Fraction(0)] * m
        for i, c in enumerate(self.coeffs):
            out[(i * j) % m] += c
        return ExactNumber(m, out)

    # -- predicates / canonicalization --------------------------------
    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def is_rational(self) -> bool:
        return all(c == 0 for c in self.coeffs[1:])

    def as_rational(self) -> Fraction:
        assert self.is_rational(), f"not rational: {self}"
        return self.coeffs[0] if self.coeffs else Fraction(0)

    def canonical_key(self):
        """(m', coeffs') at the smallest cyclotomic subfield containing self."""
        if self._key is not None:
            return self._key
        best = (self.order, self.coeffs)
        for d in sorted(_divisors(self.order)):
            if d == self.order:
                break
            cand = self._descend_to(d)
            if cand is not None:
                best = (d, cand)
                break
        self._key = best
        return best

    def _descend_to(self, d):
        """Coefficients in Q(zeta_d) if self lies there, else None."""
        m, step = self.order, self.order // d
        phi_d = euler_phi(d)
        # basis of Q(zeta_d) inside Q(zeta_m): zeta_m^(i*step), i < phi_d
        basis = [ExactNumber(m, [0] * (i * step) + [1]) for i in range(phi_d)]
        # solve linear system over Q in the power basis of Q(zeta_m)
        n = euler_phi(m)
        rows = [[b.coeffs[r] for b in basis] for r in range(n)]
        rhs = list(self.coeffs)
        sol = _solve_rational(rows, rhs)
        return tuple(sol) if sol is not None else None

    def __eq__(self, other):
        if not isinstance(other, (ExactNumber, int, Fraction)):
            return NotImplemented
        other = ExactNumber.coerce(other)
        return self.canonical_key() == other.canonical_key()

    def __hash__(self):
        return hash(self.canonical_key())

    def __repr__(self):
        if self.is_rational():
            return f"ExactNumber({self.as_rational()})"
        terms = [f"{c}*z{self.order}^{i}" for i, c in enumerate(self.coeffs) if c]
        return "ExactNumber(" + " + ".join(terms) + ")"

    def multiplicative_order(self, bound=10000):
        one = ExactNumber.from_rational(1)
        acc = self
        for n in range(1, bound + 1):
            if acc == one:
                return n
            acc = acc * self
        raise ValueError("order not found within bound")


def _divisors(m):
    out = []
    for d in range(1, m + 1):
        if m % d == 0:
            out.append(d)
    return out


# rational dense-poly helpers for the euclid in inverse()


def _rat_trim(c):
    c = [Fraction(x) for x in c]
    while c and c[-1] == 0:
        c.pop()
    return c


def _rat_mul(a, b):
    if not a or not b:
        return []
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return _rat_trim(out)


def _rat_sub(a, b):
    n = max(len(a), len(b))
    out = [Fraction(0)] * n
    for i, x in enumerate(a):
        out[i] += x
    for i, x in enumerate(b):
        out[i] -= x
    return _rat_trim(out)


def _rat_divmod(a, b):
    a = _rat_trim(a)
    b = _rat_trim(b)
    q = [Fraction(0)] * max(len(a) - len(b) + 1, 0)
    while len(a) >= len(b):
        coef = a[-1] / b[-1]
        deg = len(a) - len(b)
        q[deg] = coef
        for j, y in enumerate(b):
            a[deg + j] -= coef * y
        a = _rat_trim(a)
    return _rat_trim(q), a


def _solve_rational(rows, rhs):
    """Solve rows * x = rhs over Q; None if inconsistent (least-squares not used)."""
    n = len(rows)
    k = len(rows[0]) if rows else 0
    aug = [list(map(Fraction, rows[i])) + [Fraction(rhs[i])] for i in range(n)]
    piv_cols = []
    r = 0
    for c in range(k):
        piv = next((i for i in range(r, n) if aug[i][c] != 0), None)
        if piv is None:
            continue
        aug[r], aug[piv] = aug[piv], aug[r]
        inv = 1 / aug[r][c]
        aug[r] = [x * inv for x in aug[r]]
        for i in range(n):
            if i != r and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[r])]
        piv_cols.append(c)
        r += 1
        if r == n:
            break
    for i in range(r, n):
        if aug[i][k] != 0:
            return None
    sol = [Fraction(0)] * k
    for i, c in enumerate(piv_cols):
        sol[c] = aug[i][k]
    return sol


def root_of_unity(m: int, k: int) -> ExactNumber:
    """zeta_m^k in canonical form."""
    assert m >= 1
    k %= m
    return ExactNumber(m, [0] * k + [1])


ZERO = ExactNumber.from_rational(0)
ONE = ExactNumber.from_rational(1)


# ---------------------------------------------------------------------------
# formal series, truncated at a fixed order


class FormalSeries:
    """Polynomial truncation of a power series over ExactNumber.

    Coefficients are stored sparsely for exponents 0 <= e < m_max; the
    variable tag is cosmetic (it names q_E^{-s} in reports).
    """

    def __init__(self, m_max: int, coeffs=None, var: str = "t"):
        assert m_max >= 1
        self.m_max = m_max
        self.var = var
        self.coeffs = {}
        if coeffs:
            for e, c in dict(coeffs).items():
                self[e] = c

    def __getitem__(self, e) -> ExactNumber:
        return self.coeffs.get(e, ZERO)

    def __setitem__(self, e, c):
        assert 0 <= e < self.m_max, f"exponent {e} outside truncation {self.m_max}"
        c = ExactNumber.coerce(c)
        if c.is_zero():
            self.coeffs.pop(e, None)
        else:
            self.coeffs[e] = c

    def __add__(self, other):
        m = min(self.m_max, other.m_max)
        out = FormalSeries(m, var=self.var)
        for e in range(m):
            c = self[e] + other[e]
            if not c.is_zero():
                out[e] = c
        return out

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, ExactNumber)):
            out = FormalSeries(self.m_max, var=self.var)
            for e, c in self.coeffs.items():
                out[e] = c * other
            return out
        m = min(self.m_max, other.m_max)
        out = FormalSeries(m, var=self.var)
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                if e1 + e2 < m:
                    out[e1 + e2] = out[e1 + e2] + c1 * c2
        return out

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, FormalSeries):
            return NotImplemented
        m = min(self.m_max, other.m_max)
        return all(self[e] == other[e] for e in range(m))

    def __repr__(self):
        terms = [f"({self[e]})*{self.var}^{e}" for e in sorted(self.coeffs)]
        return " + ".join(terms) if terms else "0"


def series_of_geometric(a, scale, m_max: int, shift: int = 0, var: str = "t") -> FormalSeries:
    """scale * t^shift * (1 - a t)^(-1) truncated below m_max."""
    assert m_max >= 1
    a = ExactNumber.coerce(a)
    scale = ExactNumber.coerce(scale)
    out = FormalSeries(m_max, var=var)
    acc = scale
    for e in range(shift, m_max):
        out[e] = acc
        acc = acc * a
    return out


# ---------------------------------------------------------------------------
# certified rational intervals for archimedean embeddings


def _pi_interval(terms: int):
    """Machin: pi = 16 atan(1/5) - 4 atan(1/239), alternating-series bounds."""

    def atan_inv_bounds(x: int, n: int):
        # atan(1/x) = sum_k (-1)^k / ((2k+1) x^(2k+1)), alternating, decreasing
        s = sum(Fraction((-1) ** k, (2 * k + 1) * x ** (2 * k + 1)) for k in range(n))
        nxt = Fraction(1, (2 * n + 1) * x ** (2 * n + 1))
        # n terms of an alternating series: odd n overestimates, even n underestimates
        return (s, s + nxt) if n % 2 == 0 else (s - nxt, s)

    a5 = atan_inv_bounds(5, terms)
    a239 = atan_inv_bounds(239, terms)
    return 16 * a5[0] - 4 * a239[1], 16 * a5[1] - 4 * a239[0]


@lru_cache(maxsize=None)
def _pi_cached(terms=12):
    return _pi_interval(terms)


def _cos_sin_point(x: Fraction, nterms: int):
    """Certified intervals for cos(x), sin(x), |x| <= 4, via Taylor + remainder."""
    cos_s = Fraction(0)
    sin_s = Fraction(0)
    xx = x * x
    c_term = Fraction(1)
    s_term = x
    for k in range(nterms):
        cos_s += c_term if k % 2 == 0 else -c_term
        sin_s += s_term if k % 2 == 0 else -s_term
        c_term = c_term * xx / ((2 * k + 1) * (2 * k + 2))
        s_term = s_term * xx / ((2 * k + 2) * (2 * k + 3))
    # remainders bounded by magnitude of first omitted term (|x|<=4, terms decay)
    rc = abs(c_term)
    rs = abs(s_term)
    return (cos_s - rc, cos_s + rc), (sin_s - rs, sin_s + rs)


def embedding_interval(x: ExactNumber, k: int, nterms: int = 18):
    """Rational intervals (re_lo, re_hi), (im_lo, im_hi) for sigma_k(x),
    the embedding zeta_m -> exp(2 pi i k / m)."""
    m = x.order
    pi_lo, pi_hi = _pi_cached()
    re_lo = re_hi = Fraction(0)
    im_lo = im_hi = Fraction(0)
    for i, c in enumerate(x.coeffs):
        if c == 0:
            continue
        # angle 2 pi (i k mod m) / m, folded to [-m/2, m/2] to keep |arg| <= pi
        a = (i * k) % m
        if a > m - a:
            a -= m
        lo_ang = 2 * pi_lo * a / m
        hi_ang = 2 * pi_hi * a / m
        if a < 0:
            lo_ang, hi_ang = hi_ang, lo_ang
        mid = (lo_ang + hi_ang) / 2
        width = hi_ang - lo_ang
        (clo, chi), (slo, shi) = _cos_sin_point(mid, nterms)
        # |cos'템| <= 1: widen by half-width of angle interval
        clo, chi = clo - width, chi + width
        slo, shi = slo - width, shi + width
        if c > 0:
            re_lo += c * clo
            re_hi += c * chi
            im_lo += c * slo
            im_hi += c * shi
        else:
            re_lo += c * chi
            re_hi += c * clo
            im_lo += c * shi
            im_hi += c * slo
    return (re_lo, re_hi), (im_lo, im_hi)


def abs_square(x: ExactNumber) -> ExactNumber:
    """x * conj(x); sigma_k of it is |sigma_k(x)|^2 for every embedding."""
    return x * x.conjugate()


def real_embedding_sign(y: ExactNumber, k: int, max_terms: int = 60) -> int:
    """Certified sign of sigma_k(y) for y fixed by complex conjugation."""
    assert y == y.conjugate(), "sign is only defined for totally real inputs"
    if y.is_zero():
        return 0
    for nterms in (18, 30, max_terms):
        (lo, hi), _ = embedding_interval(y, k, nterms)
        if lo > 0:
            return 1
        if hi < 0:
            return -1
    raise ArithmeticError("could not certify sign; increase max_terms")


def all_embeddings_bounded(x: ExactNumber, bound: ExactNumber) -> bool:
    """|sigma_k(x)| <= sigma_k(bound) for every embedding sigma_k, exactly.

    bound must be totally real; comparison is done on |.|^2 via certified
    rational intervals, with exact-zero detection first.
    """
    m = x.order * bound.order // gcd(x.order, bound.order)
    xx = abs_square(x).raised_to_order(m)
    bb = (bound * bound).raised_to_order(m)
    diff = bb - xx
    for k in range(1, m + 1):
        if gcd(k, m) != 1:
            continue
        if diff.is_zero():
            continue
        if real_embedding_sign(diff, k) < 0:
            return False
    return True


def sqrt_prime(p: int) -> ExactNumber:
    """sqrt(p) as an exact cyclotomic number, via the quadratic Gauss sum."""
    from .quadfield import kronecker

    g = ExactNumber(p, [0])
    for a in range(1, p):
        g = g + kronecker(a, p) * root_of_unity(p, a)
    if p % 4 == 1:
        out = g
    else:
        # g = i sqrt(p); divide by i inside Q(zeta_4p)
        out = g * root_of_unity(4, 1).inverse()
    assert out * out == ExactNumber.from_rational(p)
    return out
