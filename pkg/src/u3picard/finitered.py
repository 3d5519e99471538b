"""Finite reductive layer at ramified primes.

PGL2(F_p) is identified with SO3(F_p) through the adjoint action on trace
zero 2x2 matrices; the quadratic form is represented by
Q = [[0,0,1],[0,2,0],[1,0,0]].  The sign character on O3 = {+-1} x SO3 is
pulled back from PGL2/PSL2, i.e. from the square class of det of any lift.
"""

from __future__ import annotations

from functools import lru_cache

from .errors import BudgetExceeded
from .quadfield import is_prime, kronecker

Q_FORM = ((0, 0, 1), (0, 2, 0), (1, 0, 0))


def _mat_mul(p, x, y):
    return tuple(
        tuple(sum(x[i][k] * y[k][j] for k in range(len(y))) % p for j in range(len(y[0])))
        for i in range(len(x))
    )


def _transpose(x):
    return tuple(tuple(x[j][i] for j in range(len(x))) for i in range(len(x[0])))


class PGL2Element:
    """2x2 matrix class modulo scalars; canonical rep scales the first
    nonzero entry (row-major order) to 1."""

    __slots__ = ("p", "m")

    def __init__(self, p, m):
        self.p = p
        flat = (m[0][0] % p, m[0][1] % p, m[1][0] % p, m[1][1] % p)
        det = (flat[0] * flat[3] - flat[1] * flat[2]) % p
        assert det != 0, "singular matrix"
        lead = next(x for x in flat if x % p)
        inv = pow(lead, -1, p)
        flat = tuple(x * inv % p for x in flat)
        self.m = ((flat[0], flat[1]), (flat[2], flat[3]))

    def __mul__(self, other):
        return PGL2Element(self.p, _mat_mul(self.p, self.m, other.m))

    def det_square_class(self) -> int:
        """+1 if det of any lift is a square mod p (i.e. element is in PSL2)."""
        a, b = self.m[0]
        c, d = self.m[1]
        return kronecker(a * d - b * c, self.p)

    def __eq__(self, other):
        return self.p == other.p and self.m == other.m

    def __hash__(self):
        return hash((self.p, self.m))

    def __repr__(self):
        return f"PGL2({self.m} mod {self.p})"


def all_pgl2(p):
    out = []
    seen = set()
    for a in range(p):
        for b in range(p):
            for c in range(p):
                for d in range(p):
                    if (a * d - b * c) % p == 0:
                        continue
                    g = PGL2Element(p, ((a, b), (c, d)))
                    if g.m not in seen:
                        seen.add(g.m)
                        out.append(g)
    return out


class O3Element:
    """3x3 matrix over F_p preserving Q_FORM."""

    __slots__ = ("p", "m")

    def __init__(self, p, m, check=True):
        self.p = p
        self.m = tuple(tuple(x % p for x in row) for row in m)
        if check:
            gt = _transpose(self.m)
            assert _mat_mul(p, _mat_mul(p, gt, Q_FORM), self.m) == tuple(
                tuple(x % p for x in row) for row in Q_FORM
            ), "matrix does not preserve the quadratic form"

    def det(self) -> int:
        m = self.m
        d = (
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        )
        return d % self.p

    def __mul__(self, other):
        return O3Element(self.p, _mat_mul(self.p, self.m, other.m), check=False)

    def __neg__(self):
        return O3Element(self.p, tuple(tuple(-x % self.p for x in row) for row in self.m), check=False)

    def __eq__(self, other):
        return self.p == other.p and self.m == other.m

    def __hash__(self):
        return hash((self.p, self.m))

    def __repr__(self):
        return f"O3({self.m} mod {self.p})"


def adjoint(g: PGL2Element) -> O3Element:
    """Adjoint action on (y, x; z, -y), preserving -(y^2 + xz); lands in SO3."""
    p = g.p
    (a, b), (c, d) = g.m
    det_inv = pow((a * d - b * c) % p, -1, p)
    m = (
        (a * a, 2 * a * b, -b * b),
        (a * c, a * d + b * c, -b * d),
        (-c * c, -2 * c * d, d * d),
    )
    return O3Element(p, tuple(tuple(x * det_inv % p for x in row) for row in m))


@lru_cache(maxsize=None)
def _so3_detclass_table(p: int):
    """Map each SO3 matrix to the det square class of its PGL2 preimage."""
    assert p <= 13, "table scale"
    table = {}
    for g in all_pgl2(p):
        h = adjoint(g)
        cls = g.det_square_class()
        if h.m in table:
            assert table[h.m] == cls
        else:
            table[h.m] = cls
    return table


def pgl2_preimage(h: O3Element) -> PGL2Element:
    """Invert the adjoint map: g with adjoint(g) = h, unique up to scalar.

    Solves g X = h(X) g over the trace-zero basis, a 12x4 linear system
    whose nullspace is the scalar line through g.
    """
    p = h.p
    assert h.det() == 1

    # coordinates (x, y, z) <-> trace-zero matrix (-y, x; z, y)
    def as_mat(v):
        x, y, z = v
        return ((-y % p, x % p), (z % p, y % p))

    rows = []
    for col, v in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
        X = as_mat(v)
        hv = tuple(sum(h.m[i][j] * v[j] for j in range(3)) % p for i in range(3))
        Y = as_mat(hv)
        # g X - Y g = 0, 4 equations in vec(g) = (g00, g01, g10, g11)
        a, b = X[0]
        c, d = X[1]
        e, f = Y[0]
        g_, k = Y[1]
        rows.append(((a - e) % p, c % p, (-f) % p, 0))
        rows.append((b % p, (d - e) % p, 0, (-f) % p))
        rows.append(((-g_) % p, 0, (a - k) % p, c % p))
        rows.append((0, (-g_) % p, b % p, (d - k) % p))
    sol = _nullspace_vector(rows, p)
    g = PGL2Element(p, ((sol[0], sol[1]), (sol[2], sol[3])))
    assert adjoint(g) == h, "preimage solve failed"
    return g


def _nullspace_vector(rows, p):
    """A nonzero mod-p solution of rows * x = 0 (4 unknowns)."""
    m = [list(r) for r in rows]
    n = 4
    piv = []
    r = 0
    for c in range(n):
        k = next((i for i in range(r, len(m)) if m[i][c] % p), None)
        if k is None:
            continue
        m[r], m[k] = m[k], m[r]
        inv = pow(m[r][c], -1, p)
        m[r] = [x * inv % p for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] % p:
                f = m[i][c]
                m[i] = [(x - f * y) % p for x, y in zip(m[i], m[r])]
        piv.append(c)
        r += 1
    free = [c for c in range(n) if c not in piv]
    assert free, "no nullspace"
    sol = [0] * n
    sol[free[0]] = 1
    for i in range(len(piv) - 1, -1, -1):
        c = piv[i]
        sol[c] = (-sum(m[i][j] * sol[j] for j in range(c + 1, n))) % p
    return sol


def sign_character(h: O3Element) -> int:
    """Write h = +-h0 with h0 in SO3; +1 iff the PGL2 preimage of h0 lies in PSL2."""
    p = h.p
    h0 = h if h.det() == 1 else -h
    assert h0.det() == 1
    if p <= 13:
        return _so3_detclass_table(p)[h0.m]
    return pgl2_preimage(h0).det_square_class()


def reflexion_sign(p: int) -> int:
    """Sign character of an orthogonal reflexion (eigenvalues 1, 1, -1)."""
    assert is_prime(p) and p % 2 == 1
    # reflexion in the anisotropic vector e2 of Q_FORM
    r = O3Element(p, ((1, 0, 0), (0, -1, 0), (0, 0, 1)))
    s = sign_character(r)
    assert s == kronecker(-1, p)
    return s


def o3_order_bruteforce(p: int) -> int:
    """|O3(F_p)| by scanning all 3x3 matrices mod p (oracle; p <= 3 is fast)."""
    count = 0
    rng = range(p)
    q = Q_FORM
    for a in rng:
        for b in rng:
            for c in rng:
                for d in rng:
                    for e in rng:
                        for f in rng:
                            for g in rng:
                                for h in rng:
                                    for i in rng:
                                        m = ((a, b, c), (d, e, f), (g, h, i))
                                        mt = _transpose(m)
                                        if _mat_mul(p, _mat_mul(p, mt, q), m) == tuple(
                                            tuple(x % p for x in row) for row in q
                                        ):
                                            count += 1
    return count


def full_o3(p: int):
    """All of O3(F_p) as +-SO3 via the adjoint parametrization."""
    out = set()
    for g in all_pgl2(p):
        h = adjoint(g)
        out.add(h.m)
        out.add((-h).m)
    return out


def gross_subgroup_order(p: int) -> int:
    """Order of <-1, adjoint(PSL2)> inside O3(F_p)."""
    if p > 13:
        raise BudgetExceeded(p * (p * p - 1) * 2, 13 * 168 * 2)
    out = set()
    for g in all_pgl2(p):
        if g.det_square_class() == 1:
            h = adjoint(g)
            out.add(h.m)
            out.add((-h).m)
    return len(out)
