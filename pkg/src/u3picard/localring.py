"""Truncated models of quadratic extensions E/Q_p.

Elements are stored as exact rationals a + b*g where g generates O = Z_p[g]
(g = omega with omega^2 = e for E unramified, g = xi with xi^2 = -u*p for E
ramified), together with an absolute pi-adic precision: the element models
the coset (a + b*g) + P^prec.  Arithmetic on representatives is exact;
precision propagates like p-adic interval arithmetic, and valuation queries
refuse to answer when the digits carried do not determine the result.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

from .errors import NotAUnit, NotNormOne, PrecisionLoss
from .exactnum import ExactNumber, root_of_unity

INF = math.inf

UNRAMIFIED = "unramified"
RAMIFIED = "ramified"


def _vp(q: Fraction, p: int):
    """p-adic valuation of a rational (INF for 0)."""
    q = Fraction(q)
    if q == 0:
        return INF
    v = 0
    n = q.numerator
    while n % p == 0:
        n //= p
        v += 1
    d = q.denominator
    while d % p == 0:
        d //= p
        v -= 1
    return v


def _rat_mod(q: Fraction, p: int, k: int) -> Fraction:
    """Canonical representative of q modulo p^k inside p^v Z_(p)."""
    q = Fraction(q)
    if q == 0:
        return q
    den = q.denominator
    j = 0
    while den % p == 0:
        den //= p
        j += 1
    if k + j <= 0:
        return Fraction(0)
    modulus = p ** (k + j)
    num = q.numerator * pow(den, -1, modulus) % modulus
    return Fraction(num, p**j)


def smallest_nonresidue(p: int) -> int:
    assert p % 2 == 1
    for e in range(2, p):
        if pow(e, (p - 1) // 2, p) == p - 1:
            return e
    raise AssertionError


class LocalRingSpec:
    """Defining data of the truncated ring O_E / P^N."""

    def __init__(self, p: int, kind: str, N: int = 6, unit_u: int = 1):
        assert kind in (UNRAMIFIED, RAMIFIED)
        assert p >= 2
        if kind == RAMIFIED:
            assert p % 2 == 1, "wildly ramified 2-adic extensions are out of range"
        self.p = p
        self.kind = kind
        self.N = N
        if kind == UNRAMIFIED:
            if p == 2:
                # omega^2 + omega + 1 = 0
                self.P, self.Q = -1, -1
            else:
                e = smallest_nonresidue(p)
                self.P, self.Q = 0, e
                self.e = e
        else:
            self.u = unit_u
            self.P, self.Q = 0, -unit_u * p
        self.ram_degree = 1 if kind == UNRAMIFIED else 2
        # residue field size
        self.q_res = p * p if kind == UNRAMIFIED else p

    # -- distinguished elements ---------------------------------------
    def element(self, a, b=0, prec=INF) -> "LocalElement":
        return LocalElement(self, Fraction(a), Fraction(b), prec)

    def zero(self):
        return self.element(0)

    def one(self):
        return self.element(1)

    def gen(self):
        """The ring generator g (omega resp. xi)."""
        return self.element(0, 1)

    def xi(self) -> "LocalElement":
        """Generator of the different with conj(xi) = -xi."""
        if self.kind == RAMIFIED:
            return self.gen()
        if self.p == 2:
            return self.element(1, 2)  # 1 + 2*omega, a unit with xibar = -xi
        return self.gen()  # sqrt(e) is a unit, Frobenius negates it
    def uniformizer(self) -> "LocalElement":
        return self.element(self.p) if self.kind == UNRAMIFIED else self.gen()

    def val_of_p(self) -> int:
        return self.ram_degree

    def residue_size(self) -> int:
        return self.q_res

    def __repr__(self):
        return f"LocalRingSpec(p={self.p}, {self.kind}, N={self.N})"

    # -- residue enumeration (test scale) -------------------------------
    def residues(self, k: int):
        """Canonical representatives of O / P^k."""
        p = self.p
        if self.kind == UNRAMIFIED:
            m = p**k
            for a in range(m):
                for b in range(m):
                    yield self.element(a, b, prec=k)
        else:
            ma = p ** ((k + 1) // 2)
            mb = p ** (k // 2)
            for a in range(ma):
                for b in range(mb):
                    yield self.element(a, b, prec=k)


class LocalElement:
    """Element of E known modulo P^prec (prec may be math.inf)."""

    __slots__ = ("spec", "a", "b", "prec")

    def __init__(self, spec, a, b, prec=INF):
        self.spec = spec
        self.a = Fraction(a)
        self.b = Fraction(b)
        self.prec = prec

    # -- valuation of the stored representative (internal) -------------
    def rep_val(self):
        s = self.spec
        va = _vp(self.a, s.p)
        vb = _vp(self.b, s.p)
        if s.kind == UNRAMIFIED:
            return min(va, vb)
        return min(2 * va if va is not INF else INF, 2 * vb + 1 if vb is not INF else INF)

    def is_exact(self):
        return self.prec is INF

    # -- arithmetic -----------------------------------------------------
    def _wrap(self, a, b, prec):
        return LocalElement(self.spec, a, b, prec)

    def __add__(self, other):
        other = self._coerce(other)
        return self._wrap(self.a + other.a, self.b + other.b, min(self.prec, other.prec))

    __radd__ = __add__

    def __neg__(self):
        return self._wrap(-self.a, -self.b, self.prec)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        s = self.spec
        a = self.a * other.a + s.Q * self.b * other.b
        b = self.a * other.b + self.b * other.a + s.P * self.b * other.b
        if self.prec is INF and other.prec is INF:
            prec = INF
        else:
            vx, vy = self.rep_val(), other.rep_val()
            cands = []
            if self.prec is not INF:
                cands.append(self.prec + (vy if vy is not INF else other.prec))
            if other.prec is not INF:
                cands.append(other.prec + (vx if vx is not INF else self.prec))
            prec = min(cands)
        return self._wrap(a, b, prec)

    __rmul__ = __mul__

    def conj(self):
        s = self.spec
        # g -> P - g
        return self._wrap(self.a + s.P * self.b, -self.b, self.prec)

    def norm(self):
        return self * self.conj()

    def trace(self):
        return self + self.conj()

    def inverse(self):
        s = self.spec
        n = self.a * (self.a + s.P * self.b) - s.Q * self.b * self.b  # rational norm
        if n == 0:
            raise ZeroDivisionError("inverse of zero representative")
        c = self.conj()
        v = self.rep_val()
        prec = INF if self.prec is INF else self.prec - 2 * v
        return LocalElement(s, c.a / n, c.b / n, prec)

    def __truediv__(self, other):
        return self * self._coerce(other).inverse()

    def _coerce(self, x):
        if isinstance(x, LocalElement):
            assert x.spec is self.spec or (
                x.spec.p == self.spec.p and x.spec.kind == self.spec.kind and x.spec.Q == self.spec.Q
            )
            return x
        return LocalElement(self.spec, Fraction(x), Fraction(0), INF)

    def __pow__(self, n):
        if n < 0:
            return self.inverse() ** (-n)
        out = self.spec.one()
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- precision-aware queries ----------------------------------------
    def truncated_to(self, k: int):
        """Forget digits at or above pi^k (canonicalizes the representative)."""
        s = self.spec
        prec = min(self.prec, k)
        if s.kind == UNRAMIFIED:
            return self._wrap(_rat_mod(self.a, s.p, k), _rat_mod(self.b, s.p, k), prec)
        ka = (k + 1) // 2
        kb = k // 2
        return self._wrap(_rat_mod(self.a, s.p, ka), _rat_mod(self.b, s.p, kb), prec)

    def valuation(self):
        """pi-adic valuation; raises PrecisionLoss when not determined."""
        v = self.rep_val()
        if self.prec is INF:
            return v  # INF for exact zero
        if v < self.prec:
            return v
        raise PrecisionLoss(
            f"all digits below precision {self.prec} vanish; valuation undetermined"
        )

    def in_ideal(self, j: int) -> bool:
        """Certified test x in P^j."""
        v = self.rep_val()
        if v >= j:
            if self.prec is INF or self.prec >= j:
                return True
            raise PrecisionLoss(f"need precision {j}, have {self.prec}")
        # v < j: the nonzero digit must be visible to certify nonmembership
        if self.prec is INF or v < self.prec:
            return False
        raise PrecisionLoss(f"need precision {j}, have {self.prec}")

    def is_unit(self) -> bool:
        try:
            return not self.in_ideal(1)
        except PrecisionLoss:
            raise

    def is_zero_rep(self) -> bool:
        return self.a == 0 and self.b == 0

    def residue(self):
        """Image in the residue field: (a mod p, b mod p) unramified, a mod p ramified."""
        s = self.spec
        if self.prec is not INF and self.prec < 1:
            raise PrecisionLoss("no residue digit available")
        if s.kind == UNRAMIFIED:
            am = _rat_mod(self.a, s.p, 1)
            bm = _rat_mod(self.b, s.p, 1)
            assert am.denominator == 1 and bm.denominator == 1, "non-integral element"
            return (int(am), int(bm))
        am = _rat_mod(self.a, s.p, 1)
        assert am.denominator == 1, "non-integral element"
        return int(am)

    def __eq__(self, other):
        if not isinstance(other, (LocalElement, int, Fraction)):
            return NotImplemented
        other = self._coerce(other)
        return self.a == other.a and self.b == other.b

    def __hash__(self):
        return hash((self.a, self.b))

    def agrees_with(self, other, k=None) -> bool:
        """Equality of the modeled cosets at the available joint precision."""
        other = self._coerce(other)
        prec = min(self.prec, other.prec)
        if k is not None:
            prec = min(prec, k)
        if prec is INF:
            return self == other
        d = (self - other).truncated_to(int(prec))
        return d.is_zero_rep()

    def __repr__(self):
        s = self.spec
        g = "w" if s.kind == UNRAMIFIED else "xi"
        tail = "" if self.prec is INF else f" +O(pi^{self.prec})"
        return f"({self.a} + {self.b}*{g}{tail})"


# ---------------------------------------------------------------------------
# residue-field multiplicative structure and characters


class ResidueData:
    """Discrete-log tables for F_q^x (and its norm-one subgroup when q = p^2)."""

    def __init__(self, spec: LocalRingSpec):
        self.spec = spec
        p = spec.p
        if spec.kind == UNRAMIFIED:
            # F_{p^2} = F_p[g]
            def mul(x, y):
                a, b = x
                c, d = y
                return ((a * c + spec.Q * b * d) % p, (a * d + b * c + spec.P * b * d) % p)

            elems = [(a, b) for a in range(p) for b in range(p) if (a, b) != (0, 0)]
            self.mul = mul
            self.one = (1, 0)
        else:

            def mul(x, y):
                return x * y % p

            elems = list(range(1, p))
            self.mul = mul
            self.one = 1
        n = len(elems)
        self.group_order = n
        gen = None
        for cand in elems:
            seen = set()
            x = self.one
            for _ in range(n):
                x = self.mul(x, cand)
                seen.add(x)
            if len(seen) == n:
                gen = cand
                break
        assert gen is not None
        self.generator = gen
        self.dlog = {}
        x = self.one
        for i in range(n):
            self.dlog[x] = i
            x = self.mul(x, gen)

    def norm_one_subgroup(self):
        """Elements of norm 1 (only meaningful for q = p^2)."""
        assert self.spec.kind == UNRAMIFIED
        p = self.spec.p
        return [x for x in self.dlog if self.dlog[x] % (p - 1) == 0]


@lru_cache(maxsize=None)
def _residue_data(key):
    p, kind, Q, P = key
    spec = LocalRingSpec(p, kind)
    assert (spec.Q, spec.P) == (Q, P)
    return ResidueData(spec)


def residue_data(spec: LocalRingSpec) -> ResidueData:
    return _residue_data((spec.p, spec.kind, spec.Q, spec.P))


GROUP_MULT = "mult"  # F_{p^2}^x  resp. F_p^x
GROUP_NORM_ONE = "norm_one"  # F_{p^2}^1
GROUP_PRIME_MULT = "prime_mult"  # F_p^x inside an unramified spec


class ResidueCharacter:
    """Tame character datum: value on the fixed generator is zeta_n^k."""

    def __init__(self, spec: LocalRingSpec, group: str, k: int):
        self.spec = spec
        self.group = group
        data = residue_data(spec)
        p = spec.p
        if group == GROUP_MULT:
            self.order_of_group = data.group_order
        elif group == GROUP_NORM_ONE:
            assert spec.kind == UNRAMIFIED
            self.order_of_group = p + 1
        elif group == GROUP_PRIME_MULT:
            self.order_of_group = p - 1
        else:
            raise ValueError(group)
        self.k = k % self.order_of_group
        self._data = data

    def is_trivial(self):
        return self.k == 0

    def character_order(self):
        from math import gcd

        return self.order_of_group // gcd(self.order_of_group, self.k)

    # -- evaluation -----------------------------------------------------
    def value_at_residue(self, res) -> ExactNumber:
        """Value on a residue-field element (already reduced)."""
        data = self._data
        p = self.spec.p
        n = self.order_of_group
        if self.group == GROUP_MULT:
            d = data.dlog[res]
            return root_of_unity(n, self.k * d)
        if self.group == GROUP_NORM_ONE:
            d = data.dlog[res]
            assert d % (p - 1) == 0, "element is not norm-one in F_{p^2}"
            # generator of the norm-one subgroup is gen^(p-1)
            return root_of_unity(n, self.k * (d // (p - 1)))
        # GROUP_PRIME_MULT: res is (a, 0) in an unramified spec, or a mod p ramified
        if self.spec.kind == UNRAMIFIED:
            assert res[1] == 0, "element is not in the prime field"
            d = data.dlog[res]
            assert d % (p + 1) == 0
            return root_of_unity(n, self.k * (d // (p + 1)))
        d = data.dlog[res]
        return root_of_unity(n, self.k * d)

    def __call__(self, x: LocalElement) -> ExactNumber:
        if not x.is_unit():
            raise NotAUnit(f"{x} is not a unit")
        if self.group == GROUP_NORM_ONE:
            nx = x.norm()
            if not (nx - 1).in_ideal(1):
                raise NotNormOne(f"{x} is not norm-one at available precision")
        return self.value_at_residue(x.residue())

    def __repr__(self):
        return f"ResidueCharacter({self.group}, k={self.k}/{self.order_of_group})"
