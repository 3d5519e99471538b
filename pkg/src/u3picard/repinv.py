"""Principal-series computations: K-invariant vectors, Mackey counts,
matrix-coefficient sequences, zonal gamma factors and translate ranks.

The induced representation is normalized, f(bg) = (mu delta^(1/2))(b) f(g),
with mu(diag(conj(a), beta, a^-1)) = lambda(conj(a)) nu(beta) |a|^(1/2).
All integrals are exact finite sums over the coordinate cells of unitary.py
with Haar normalized to total mass one on the integration subgroup.
"""

from __future__ import annotations

import itertools
import random as _random
from dataclasses import dataclass, field
from fractions import Fraction

from . import unitary as un
from .errors import BudgetExceeded, NoInvariantVector, PoleInGamma, PrecisionLoss
from .exactnum import ExactNumber, ONE, ZERO, root_of_unity, sqrt_prime
from .localring import (
    GROUP_MULT,
    GROUP_NORM_ONE,
    INF,
    RAMIFIED,
    UNRAMIFIED,
    LocalElement,
    LocalRingSpec,
    ResidueCharacter,
    residue_data,
)
from .unitary import (
    I_21,
    I_GROSS,
    I_R,
    IWAHORI,
    K_CIRC,
    K_GROSS,
    K_GROSS_J,
    K_PARAMODULAR,
    K_PRIME,
    K_T,
    CellSystem,
    SubgroupName,
    UGroupElement,
    flag_representatives,
    gamma,
    iwasawa_decompose,
    lower_n,
    membership,
    torus_element,
    upper_n,
    weyl_w,
)

PI_N = "pi_n"
PI_2 = "pi_2"
PI_C = "pi_c"  # carried as a tag only; no invariant computations for it


@dataclass(frozen=True)
class CharacterSpec:
    """Datum for mu = (lambda, nu) on the standard torus.

    lambda(pi^v u) = lambda_on_uniformizer^v * lambda_residue(u-bar);
    nu is a character of the norm-one group through its residue image.
    use_w swaps |a|^(1/2) to |a|^(-1/2) (the Weyl-reflected character).
    """

    ring: LocalRingSpec
    lambda_on_uniformizer: ExactNumber
    lambda_residue: ResidueCharacter | None
    nu_residue: ResidueCharacter | None
    use_w: bool = False

    def w_twisted(self):
        return CharacterSpec(
            self.ring, self.lambda_on_uniformizer, self.lambda_residue, self.nu_residue, not self.use_w
        )

    def is_unramified(self) -> bool:
        lam_triv = self.lambda_residue is None or self.lambda_residue.is_trivial()
        nu_triv = self.nu_residue is None or self.nu_residue.is_trivial()
        return lam_triv and nu_triv

    # -- evaluations ----------------------------------------------------
    def lam(self, x: LocalElement) -> ExactNumber:
        v = x.valuation()
        assert v is not INF
        u = x * self.ring.uniformizer() ** (-v)
        out = self.lambda_on_uniformizer**v
        if self.lambda_residue is not None and not self.lambda_residue.is_trivial():
            out = out * self.lambda_residue.value_at_residue(u.residue())
        return out

    def nu(self, beta: LocalElement) -> ExactNumber:
        if self.nu_residue is None or self.nu_residue.is_trivial():
            return ONE
        return self.nu_residue.value_at_residue(beta.residue())

    def abs_alpha_half(self, v: int) -> ExactNumber:
        """|alpha|_E^(1/2) for val(alpha) = v, as an exact number."""
        p = self.ring.p
        if self.ring.kind == UNRAMIFIED:
            # q_E = p^2, so the half power is p^(-v)
            return ExactNumber.from_rational(Fraction(p) ** (-v))
        if v % 2 == 0:
            return ExactNumber.from_rational(Fraction(p) ** (-v // 2))
        s = sqrt_prime(p)
        return ExactNumber.from_rational(Fraction(p) ** ((-v - 1) // 2)) * s

    def mu(self, t: UGroupElement) -> ExactNumber:
        """Value on a torus element diag(conj(a), beta, a^-1)."""
        abar = t.m[0][0]
        beta = t.m[1][1]
        v = abar.valuation()
        half = self.abs_alpha_half(v if not self.use_w else v).inverse() if False else None
        out = self.lam(abar) * self.nu(beta)
        h = self.abs_alpha_half(v)
        return out * (h.inverse() if self.use_w else h)

    def delta(self, t: UGroupElement) -> Fraction:
        v = t.m[0][0].valuation()
        q = self.ring.residue_size()
        return Fraction(q) ** (-2 * v)

    def mu_at_gamma_power(self, j: int) -> ExactNumber:
        g = gamma(self.ring)
        t = UGroupElement(self.ring, tuple(tuple(g.m[a][b] ** j if a == b else self.ring.zero() for b in range(3)) for a in range(3)), validate=False)
        return self.mu(t)

    def mu_delta_half_at_gamma(self) -> ExactNumber:
        g = gamma(self.ring)
        v = g.m[0][0].valuation()
        q = self.ring.residue_size()
        return self.mu_at_gamma_power(1) * Fraction(q) ** (-v)


def unramified_packet_character(spec: LocalRingSpec) -> CharacterSpec:
    """The quadratic unramified lambda (sends the uniformizer to -1), trivial nu."""
    return CharacterSpec(spec, ExactNumber.from_rational(-1), None, None)


def tame_twisted_character(spec: LocalRingSpec, chi_exponent: int) -> CharacterSpec:
    """Unramified E, lambda(p) = -1, lambda|units = chi(x / conj(x)) with chi a
    character of the norm-one residue group of exponent chi_exponent;
    nu = lambda|_{E^1}^{-1} through the residue."""
    assert spec.kind == UNRAMIFIED
    p = spec.p
    n_full = p * p - 1
    # chi(g_1^d) = zeta_{p+1}^{k d} on the norm-one generator g_1 = g^(p-1);
    # lambda(u) = chi(u^(1-p)) = value zeta_{p+1}^{-k} on the full generator g,
    # i.e. exponent -k (p-1) on F_{p^2}^x.
    k = chi_exponent % (p + 1)
    lam_res = ResidueCharacter(spec, GROUP_MULT, (-k * (p - 1)) % n_full)
    # nu(beta) = lambda(beta)^-1 = chi(beta^2)^-1 on the norm-one group
    nu_res = ResidueCharacter(spec, GROUP_NORM_ONE, (-2 * k) % (p + 1))
    return CharacterSpec(spec, ExactNumber.from_rational(-1), lam_res, nu_res)


def tame_chi(spec: LocalRingSpec, chi_exponent: int) -> ResidueCharacter:
    """The underlying chi on the norm-one residue group."""
    return ResidueCharacter(spec, GROUP_NORM_ONE, chi_exponent)


def ramified_tame_character(spec: LocalRingSpec, sign: int = 1) -> CharacterSpec:
    """Ramified E: the tame conjugate-symplectic lambda.

    lambda|units is the quadratic residue character; lambda(xi)^2 =
    lambda(-u p) forces lambda(xi) in {+-i} when (-1/p) = -1 and {+-1}
    otherwise; nu = lambda|_{E^1}^{-1} is quadratic on {+-1}.
    """
    assert spec.kind == RAMIFIED
    from .quadfield import kronecker

    p = spec.p
    lam_res = ResidueCharacter(spec, GROUP_MULT, (p - 1) // 2)  # quadratic
    # lambda(xi)^2 = lambda(xi^2) = quad(-u) * lambda value bookkeeping:
    # xi^2 = -u p has val 2 and unit part 1, handled through powers below;
    # the free choice is a square root of lambda_residue(-u)... we solve
    # lambda(xi)^2 = lambda_residue( (-u p) / xi^2 residue ) = 1? No:
    # in the xi^Z x O^x coordinates the value on xi is free; conjugate-
    # symplecticity picks lambda(xi)^2 = quad(-1)^((p-1)/2)-type signs.
    w2 = kronecker(-1, p)
    lam_xi = root_of_unity(4, sign) if w2 == -1 else ExactNumber.from_rational(1 if sign == 1 else -1)
    # nu on the residue {+-1} subgroup of F_p^x: nu(beta) = lambda(beta)^{-1}
    nu_res = ResidueCharacter(spec, GROUP_MULT, (p - 1) // 2)
    return CharacterSpec(spec, lam_xi, lam_res, nu_res)


# ---------------------------------------------------------------------------
# K-invariant vector


def eval_f_K(g: UGroupElement, K: SubgroupName, cs: CharacterSpec) -> ExactNumber:
    """Value at g of the K-invariant vector normalized by f|K = 1."""
    if not cs.is_unramified():
        raise NoInvariantVector(f"character is ramified on units; no {K}-invariant vector")
    m, _, _k = iwasawa_decompose(g, K)
    return cs.mu_delta_half_at_gamma() ** m


def eval_f_gross(g: UGroupElement, cs: CharacterSpec) -> ExactNumber:
    """Value at g of the basis of Ind(mu)^(K'') (ramified Gross subgroup).

    f(gamma^m n k°) = (mu delta^(1/2))(gamma^m) * (1 if k° in K'' else mu(eta)),
    using K° = K'' união eta K'' and mu(eta) = quad(u) = -1.
    """
    spec = cs.ring
    assert spec.kind == RAMIFIED
    m, _, k = iwasawa_decompose(g, SubgroupName(K_CIRC))
    sign = un.gross_sign(spec, k)
    val = cs.mu_delta_half_at_gamma() ** m
    if sign == 1:
        return val
    return val * cs.lam(un.eta(spec).m[0][0])


# ---------------------------------------------------------------------------
# zonal gamma factors


def macdonald_gamma(cs: CharacterSpec) -> ExactNumber:
    """Gamma_nu = prod over the two positive roots of
    (1 - p^2 nu(gamma^-k)) / (1 - nu(gamma^-k)), k = 2, 1."""
    p = cs.ring.p
    out = ONE
    for k in (2, 1):
        v = cs.mu_at_gamma_power(-k)
        den = ONE - v
        if den.is_zero():
            raise PoleInGamma(f"nu(gamma^-{k}) = 1")
        out = out * (ONE - (p * p) * v) * den.inverse()
    return out


# ---------------------------------------------------------------------------
# matrix-coefficient sequences Phi_n


@dataclass
class PhiResult:
    value: Fraction | ExactNumber
    mode: str
    n: int
    subgroup: str
    statistical: bool = False
    stderr_sq: Fraction | None = None
    samples: int | None = None
    detail: dict = field(default_factory=dict)


def _flag_lower_value_sum(spec, K, cs, n, depth, budget, assert_samples=2, rng=None):
    """Sum of f_K(gamma^-n k gamma^n) over cells, collapsed over the inner
    (torus x upper) coordinates on which the integrand provably does not
    depend (f is right-K-invariant and conjugation keeps those factors in K);
    the independence is re-checked on sampled inner cells."""
    cs_sys = CellSystem(spec, K, depth)
    logical = cs_sys.total_cells()
    iterated = len(cs_sys.flags) * cs_sys.lower_count()
    if iterated > budget:
        raise BudgetExceeded(iterated, budget)
    inner = cs_sys.inner_count()
    rng = rng or _random.Random(20240901)
    evaluate = eval_f_gross if K.base in (K_GROSS, I_GROSS) else (lambda g, c: eval_f_K(g, K, c))
    total = ZERO
    checked = 0
    per_cell = []
    for x, c, y, left in cs_sys.iter_flag_lower():
        g = left.conjugate_by_gamma(n)
        v = evaluate(g, cs)
        per_cell.append((x, c, y, v))
        total = total + v
        if checked < assert_samples:
            al, be = rng.choice(cs_sys.torus_pairs)
            b = rng.choice(cs_sys.upper_b)
            z = rng.choice(cs_sys.upper_z)
            k_full = left * torus_element(spec, al, be) * upper_n(spec, b, z)
            v2 = evaluate(k_full.conjugate_by_gamma(n), cs)
            assert v2 == v, "inner-cell collapse violated"
            checked += 1
    return total * Fraction(inner, logical), per_cell, logical


def _lower_refined_depth(n: int, base_depth: int) -> int:
    # the integrand reads val(c1) clamped at 2n: needs 2n+1 digits there
    return max(base_depth, 2 * n + 1)


def phi_sequence(
    spec,
    K: SubgroupName,
    cs: CharacterSpec,
    n: int,
    mode: str = "exact",
    N: int = 2,
    budget: int = 10**9,
    seed: int | None = None,
    samples: int = 20000,
    threads: int = 1,
) -> PhiResult:
    """Phi_n^K = p^{5n} * integral over K of f_K(gamma^-n k gamma^n) dk,
    with vol(K) = 1."""
    assert spec.kind == UNRAMIFIED and K.base in (K_CIRC, K_PRIME)
    assert n >= 1
    p = spec.p
    scale = Fraction(p) ** (5 * n)
    if mode == "exact":
        depth = _lower_refined_depth(n, N)
        total, _cells, logical = _flag_lower_value_sum(spec, K, cs, n, depth, budget)
        val = total * scale
        return PhiResult(_as_rational(val), "exact", n, str(K), detail={"logical_cells": logical})
    if mode == "pushforward":
        integral, detail = _phi_pushforward_integral(spec, K, cs, n, N, budget)
        return PhiResult(_as_rational(integral * scale), "pushforward", n, str(K), detail=detail)
    if mode == "montecarlo":
        assert seed is not None, "montecarlo mode requires a seed"
        rng = _random.Random(seed)
        depth = _lower_refined_depth(n, N)
        cs_sys = CellSystem(spec, K, depth)
        vals = []
        for _ in range(samples):
            x = rng.choice(cs_sys.flags)
            c = rng.choice(cs_sys.lower_c)
            y = rng.choice(cs_sys.lower_y)
            al, be = rng.choice(cs_sys.torus_pairs)
            b = rng.choice(cs_sys.upper_b)
            z = rng.choice(cs_sys.upper_z)
            k = x * lower_n(spec, c, y) * torus_element(spec, al, be) * upper_n(spec, b, z)
            vals.append(_as_rational(eval_f_K(k.conjugate_by_gamma(n), K, cs)))
        mean = sum(vals, Fraction(0)) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
        return PhiResult(
            mean * scale,
            "montecarlo",
            n,
            str(K),
            statistical=True,
            stderr_sq=var / len(vals) * scale * scale,
            samples=len(vals),
        )
    raise ValueError(mode)


def _as_rational(x):
    if isinstance(x, ExactNumber):
        return x.as_rational()
    return Fraction(x)


def _phi_pushforward_integral(spec, K, cs, n, N, budget):
    """Bottom-row route: the integrand factors through j = val(c1) clamped at
    2n; stratum masses are counted exactly on the flag x lower coordinates
    (on which val(c1) alone depends) and the strata values are evaluated on
    explicit representatives."""
    assert K.base == K_PRIME, "pushforward is wired for the almost-self-dual stabilizer"
    p = spec.p
    masses = strata_masses(spec, K, 2 * n, budget=budget)
    mdh = cs.mu_delta_half_at_gamma()
    # stratum value: f(gamma^-n k gamma^n) = (mu delta^1/2)(gamma)^(j-2n), j < 2n; 1 at j >= 2n
    total = ZERO
    values = {}
    for j, mass in masses.items():
        if j == 2 * n:
            v = ONE
        else:
            v = mdh ** (j - 2 * n)
        rep = _stratum_representative(spec, j)
        vr = eval_f_K(rep.conjugate_by_gamma(n), K, cs)
        assert vr == v, f"stratum {j}: representative value disagrees"
        values[j] = v
        total = total + v * mass
    return total, {"strata_masses": {j: str(m) for j, m in masses.items()}}


def _stratum_representative(spec, j):
    """An element of K' with val(c1) exactly j (val(bottom-left) = j+1)."""
    return lower_n(spec, spec.zero(), Fraction(spec.p) ** (j + 1))


def strata_masses(spec, K, jmax, budget=10**9):
    """vol{k in K' : val(c1(k)) = j} for j < jmax plus the tail j >= jmax.

    val(c1) is val(bottom-left entry) - 1 and only depends on the flag and
    lower coordinates; within the identity-flag cells the bottom-left entry
    is y with independent rational and imaginary parts.
    """
    assert K.base == K_PRIME and spec.kind == UNRAMIFIED
    p = spec.p
    depth = jmax + 2
    cs_sys = CellSystem(spec, K, depth)
    n_flags = len(cs_sys.flags)
    lower_total = cs_sys.lower_count()
    budget_needed = n_flags * lower_total
    if budget_needed > budget:
        raise BudgetExceeded(budget_needed, budget)
    counts = {j: 0 for j in list(range(jmax)) + [jmax]}
    for x, c, y, left in cs_sys.iter_flag_lower():
        r1 = left.m[2][0]
        v = r1.rep_val()
        if v is INF:
            j = jmax
        else:
            j = min(int(v) - 1, jmax)
            # exact representatives: val is certain up to depth, beyond is tail
            if v - 1 >= jmax:
                j = jmax
        counts[j] += 1
    total = n_flags * lower_total
    return {j: Fraction(cnt, total) for j, cnt in counts.items()}


def measured_c0(spec) -> Fraction:
    """[K' : I] / [K' cap N : I cap N] by cell counting."""
    assert spec.kind == UNRAMIFIED
    kflags = len(flag_representatives(spec, SubgroupName(K_PRIME)))
    # upper-coordinate floors: K' allows z down to val -1, I starts at 0
    kp = un.iwahori_ranges(spec, SubgroupName(K_PRIME))
    vmin_kp, _ = un._shape(spec, SubgroupName(K_PRIME))
    vmin_i, _ = un._shape(spec, SubgroupName(IWAHORI))
    d = 3
    ratio = Fraction(
        len(un._ideal_reps(spec, max(vmin_kp[0][1], vmin_kp[1][2]), d))
        * len(un._real_reps(spec, vmin_kp[0][2], d)),
        len(un._ideal_reps(spec, max(vmin_i[0][1], vmin_i[1][2]), d))
        * len(un._real_reps(spec, vmin_i[0][2], d)),
    )
    return Fraction(kflags) / ratio


# ---------------------------------------------------------------------------
# strata volumes (both ring kinds)


def volume_strata_index(spec, name: SubgroupName, j: int, budget=10**9):
    """[S_0 : S_j] where S_j fixes val(c1) >= j in the bottom-row coordinates.

    For the unramified K' this is [K' : K'_j]; for the ramified Gross tower
    it is [I'' : K''_j] (j >= 1).
    """
    if j == 0:
        return Fraction(1)
    if name.base == K_PRIME:
        masses = strata_masses(spec, name, j, budget=budget)
        tail = masses[j]
        return Fraction(1) / tail
    if name.base in (I_GROSS, K_GROSS_J):
        # inside I'': c1 = xi * (bottom-left); val(c1) >= j <=> val(g31) >= j-1
        depth = j + 2
        cs_sys = CellSystem(spec, SubgroupName(I_GROSS), depth)
        tot = 0
        good = 0
        for x, c, y, left in cs_sys.iter_flag_lower():
            tot += 1
            v = left.m[2][0].rep_val()
            if v is INF or v >= j - 1:
                good += 1
        return Fraction(tot, good)
    raise KeyError(name)


# ---------------------------------------------------------------------------
# double cosets and invariant dimensions


def _canonical_point(row, depth):
    vals = [x.rep_val() for x in row]
    v = min(v for v in vals if v is not INF)
    pi = row[0].spec.uniformizer()
    r = [x * pi ** (-v) for x in row]
    piv = next(i for i in range(3) if r[i].rep_val() == 0)
    s = r[piv].inverse()
    out = []
    for x in r:
        t = (x * s).truncated_to(depth)
        out.append((t.a, t.b))
    return tuple(out)


def _point_from_element(g, depth):
    if g.spec.kind == UNRAMIFIED:
        ops = _IntRowOps(g.spec, depth)
        return ops.canonical(ops.enc_row(g.bottom_row()))
    return _canonical_point(g.bottom_row(), depth)


def _kc_generators(spec):
    """Group generators of the self-dual-lattice stabilizer."""
    gens = [un.weyl_w(spec) if spec.kind == UNRAMIFIED else un.weyl_w_ram(spec)]
    pi = spec.uniformizer()
    xi = spec.xi()
    if spec.kind == UNRAMIFIED:
        low_scale = spec.one()
        up_scale = spec.one()
    else:
        low_scale = xi.inverse()
        up_scale = xi
    for a, b in ((1, 0), (0, 1), (1, 1), (2, 0)):
        gens.append(lower_n(spec, low_scale * spec.element(a, b), 0))
        gens.append(upper_n(spec, up_scale * spec.element(a, b), 0))
    gens.append(lower_n(spec, spec.zero(), 1))
    gens.append(upper_n(spec, spec.zero(), spec.p if spec.kind == RAMIFIED else 1))
    gens.extend(_torus_generators(spec))
    gens = [g for g in gens if membership(g, SubgroupName(K_CIRC))]
    assert len(gens) >= 8
    return gens


def _torus_generators(spec):
    out = []
    p = spec.p
    units = [spec.element(a, b) for a in range(p) for b in range(p) if spec.element(a, b).rep_val() == 0]
    gen_unit = units[1] if len(units) > 1 else spec.one()
    cands = [gen_unit, spec.element(1 + p), spec.element(1, p), spec.element(1, 1)]
    for al in cands:
        if al.rep_val() == 0:
            out.append(torus_element(spec, al, spec.one()))
    for t in (spec.element(1, 1), spec.element(2, 1)):
        if t.rep_val() == 0:
            out.append(torus_element(spec, spec.one(), t / t.conj()))
    if spec.kind == RAMIFIED:
        out.append(torus_element(spec, spec.one(), spec.element(-1)))
    return out


def _row_times(row, g: UGroupElement, depth):
    """row * g, truncated; rows are 3-tuples of LocalElement."""
    out = []
    for j in range(3):
        s = row[0] * g.m[0][j] + row[1] * g.m[1][j] + row[2] * g.m[2][j]
        out.append(s.truncated_to(depth + 2))
    return tuple(out)


def _identity_row(spec):
    return (spec.zero(), spec.zero(), spec.one())


class _IntRowOps:
    """Integer arithmetic on bottom rows mod p^K for an unramified ring."""

    def __init__(self, spec, depth):
        assert spec.kind == UNRAMIFIED
        self.spec = spec
        self.p = spec.p
        self.e = spec.e
        self.depth = depth
        self.K = depth + 2
        self.mod = spec.p**self.K
        self.keymod = spec.p**depth

    def enc(self, x: LocalElement):
        return (_int_mod(x.a, self.p, self.mod), _int_mod(x.b, self.p, self.mod))

    def enc_row(self, row):
        return tuple(self.enc(x) for x in row)

    def enc_mat(self, g: UGroupElement):
        return tuple(tuple(self.enc(g.m[i][j]) for j in range(3)) for i in range(3))

    def act(self, row, gm):
        mod, e = self.mod, self.e
        out = []
        for j in range(3):
            ar = 0
            ai = 0
            for i in range(3):
                xa, xb = row[i]
                ya, yb = gm[i][j]
                ar += xa * ya + e * xb * yb
                ai += xa * yb + xb * ya
            out.append((ar % mod, ai % mod))
        return tuple(out)

    def _vp(self, n):
        if n % self.p:
            return 0
        v = 0
        while n % self.p == 0 and v < self.K:
            n //= self.p
            v += 1
        return v

    def val(self, pair):
        a, b = pair
        if a == 0 and b == 0:
            return self.K
        return min(self._vp(a) if a else self.K, self._vp(b) if b else self.K)

    def canonical(self, row):
        p = self.p
        vals = [self.val(x) for x in row]
        vmin = min(vals)
        assert vmin <= 2, "row lost primitivity headroom"
        sc = p**vmin
        r = [(a // sc if a % sc == 0 else (a % self.mod) // sc, b // sc if b % sc == 0 else (b % self.mod) // sc) for a, b in row]
        km = self.keymod
        piv = next(i for i in range(3) if vals[i] == vmin)
        a, b = r[piv]
        nrm = (a * a - self.e * b * b) % km
        ninv = pow(nrm, -1, km)
        ia, ib = a * ninv % km, (-b * ninv) % km
        out = []
        for xa, xb in r:
            out.append(((xa * ia + self.e * xb * ib) % km, (xa * ib + xb * ia) % km))
        return tuple(out)


def _row_orbit(spec, start_rows, gens, depth, budget):
    """BFS orbit of canonical row classes; values are (row, parent_key, gen_idx)
    so a witness group element can be rebuilt on demand."""
    if spec.kind == UNRAMIFIED:
        ops = _IntRowOps(spec, depth)
        gmats = [ops.enc_mat(g) for g in gens]
        seen = {}
        frontier = []
        for row in start_rows:
            r = ops.enc_row(row)
            key = ops.canonical(r)
            if key not in seen:
                seen[key] = (r, None, None)
                frontier.append((key, r))
        while frontier:
            new = []
            for pkey, row in frontier:
                for gi, gm in enumerate(gmats):
                    r2 = ops.act(row, gm)
                    k2 = ops.canonical(r2)
                    if k2 not in seen:
                        if len(seen) >= budget:
                            raise BudgetExceeded(len(seen) + 1, budget)
                        seen[k2] = (r2, pkey, gi)
                        new.append((k2, r2))
            frontier = new
        return seen
    seen = {}
    frontier = []
    for row in start_rows:
        key = _canonical_point(row, depth)
        if key not in seen:
            seen[key] = (row, None, None)
            frontier.append((key, row))
    while frontier:
        new = []
        for pkey, row in frontier:
            for gi, h in enumerate(gens):
                r2 = _row_times(row, h, depth)
                k2 = _canonical_point(r2, depth)
                if k2 not in seen:
                    if len(seen) >= budget:
                        raise BudgetExceeded(len(seen) + 1, budget)
                    seen[k2] = (r2, pkey, gi)
                    new.append((k2, r2))
        frontier = new
    return seen


def _witness(spec, seen, key, gens):
    """Group element whose bottom row represents the given point."""
    path = []
    k = key
    while seen[k][1] is not None:
        path.append(seen[k][2])
        k = seen[k][1]
    g = UGroupElement(spec, un.mat_identity(spec))
    for gi in reversed(path):
        g = g * gens[gi]
    return g


def flag_variety_points(spec, depth, budget=10**6):
    """Level-depth points of B\\G as canonical bottom-row classes (BFS)."""
    gens = _kc_generators(spec)
    seen = _row_orbit(spec, [_identity_row(spec)], gens, depth, budget)
    return seen


def _subgroup_action_generators(spec, name: SubgroupName, depth):
    """A generating set of the level-depth image of the subgroup."""
    pi = spec.uniformizer()
    rng = un.iwahori_ranges(spec, name)
    gens = []
    for t in _torus_generators(spec):
        if membership(t, name):
            gens.append(t)
    # principal congruence torus generators
    for al in (spec.element(1 + spec.p), spec.element(1, spec.p), spec.element(1, 1 if spec.kind == RAMIFIED else spec.p)):
        if al.rep_val() == 0:
            t = torus_element(spec, al, spec.one())
            if membership(t, name):
                gens.append(t)
    for lev in range(rng.upper_b, depth + 1):
        for a, b in ((1, 0), (0, 1)):
            gens.append(upper_n(spec, pi**lev * spec.element(a, b), 0))
    for lev in range(rng.lower_c, depth + 1):
        for a, b in ((1, 0), (0, 1)):
            gens.append(lower_n(spec, pi**lev * spec.element(a, b), 0))
    zfloor = rng.upper_z if spec.kind == UNRAMIFIED else -(-rng.upper_z // 2)
    yfloor = rng.lower_y if spec.kind == UNRAMIFIED else -(-rng.lower_y // 2)
    for lev in range(max(zfloor, 0), depth + 1):
        gens.append(upper_n(spec, spec.zero(), Fraction(spec.p) ** lev))
    for lev in range(max(yfloor, 0), depth + 1):
        gens.append(lower_n(spec, spec.zero(), Fraction(spec.p) ** lev))
    gens = [g for g in gens if membership(g, name)]
    for x in flag_representatives(spec, name):
        gens.append(x)
    return gens


_DC_CACHE = {}


def double_cosets(spec, name: SubgroupName, N: int, budget=10**6):
    """Orbit decomposition of the level-N flag variety under the subgroup,
    i.e. B\\G/K; returns (orbits, points) with orbits = [(witness, key set)]."""
    ck = (spec.p, spec.kind, name.base, name.param, N)
    if ck in _DC_CACHE:
        return _DC_CACHE[ck]
    kc_gens = _kc_generators(spec)
    pts = flag_variety_points(spec, N, budget=budget)
    gens = _subgroup_action_generators(spec, name, N)
    fast = spec.kind == UNRAMIFIED
    if fast:
        ops = _IntRowOps(spec, N)
        gmats = [ops.enc_mat(g) for g in gens]
        act = ops.act
        canon = ops.canonical
    else:
        gmats = gens
        act = lambda row, h: _row_times(row, h, N)
        canon = lambda row: _canonical_point(row, N)
    unassigned = {k: v[0] for k, v in pts.items()}
    orbits = []
    while unassigned:
        key, row0 = next(iter(unassigned.items()))
        orbit = {key}
        frontier = [row0]
        del unassigned[key]
        while frontier:
            new = []
            for row in frontier:
                for h in gmats:
                    r2 = act(row, h)
                    k2 = canon(r2)
                    if k2 in unassigned:
                        orbit.add(k2)
                        new.append(r2)
                        del unassigned[k2]
            frontier = new
        witness = _witness(spec, pts, key, kc_gens)
        orbits.append((witness, orbit))
    _DC_CACHE[ck] = (orbits, pts)
    return orbits, pts


class _IntMatOps:
    """3x3 matrices over an unramified residue ring, integer pairs mod p^K."""

    def __init__(self, spec, K):
        assert spec.kind == UNRAMIFIED
        self.spec = spec
        self.p = spec.p
        self.e = spec.e
        self.K = K
        self.mod = spec.p**K

    def enc(self, g: UGroupElement):
        return tuple(
            tuple((_int_mod(g.m[i][j].a, self.p, self.mod), _int_mod(g.m[i][j].b, self.p, self.mod)) for j in range(3))
            for i in range(3)
        )

    def mul(self, A, B):
        mod, e = self.mod, self.e
        out = []
        for i in range(3):
            row = []
            for j in range(3):
                ar = ai = 0
                for k in range(3):
                    xa, xb = A[i][k]
                    ya, yb = B[k][j]
                    ar += xa * ya + e * xb * yb
                    ai += xa * yb + xb * ya
                row.append((ar % mod, ai % mod))
            out.append(tuple(row))
        return tuple(out)

    def val(self, pair):
        a, b = pair
        v = 0
        p = self.p
        if a == 0 and b == 0:
            return self.K
        while v < self.K and a % p == 0 and b % p == 0:
            a //= p
            b //= p
            v += 1
        return v

    def shape_ok(self, M, vmin, units):
        for i in range(3):
            for j in range(3):
                need = vmin[i][j]
                if need > 0 and self.val(M[i][j]) < need:
                    return False
        for i, j in units:
            if self.val(M[i][j]) > vmin[i][j]:
                return False
        return True


@dataclass
class InvariantCount:
    subgroup: str
    total_dim: int
    supported_cosets: list


_BC_CACHE = {}


def _borel_cells(spec, alphas, betas, bs, zs):
    key = (spec.p, spec.kind, len(alphas), len(betas), len(bs), len(zs))
    if key in _BC_CACHE:
        return _BC_CACHE[key]
    out = []
    z0 = spec.zero()
    for al in alphas:
        for be in betas:
            t = torus_element(spec, al, be)
            abar, ainv = t.m[0][0], t.m[2][2]
            for b in bs:
                for z in zs:
                    n = upper_n(spec, b, z)
                    g = UGroupElement(
                        spec,
                        (
                            (abar, abar * n.m[0][1], abar * n.m[0][2]),
                            (z0, be, be * n.m[1][2]),
                            (z0, z0, ainv),
                        ),
                        validate=False,
                    )
                    out.append((g, t, b, z))
    _BC_CACHE[key] = out
    return out


def invariant_dimension(spec, name: SubgroupName, cs: CharacterSpec, N: int = 2, budget=10**7) -> InvariantCount:
    """Mackey count: number of double cosets sigma with mu trivial on
    B cap sigma K sigma^-1, tested on the torus parts of enumerated elements.

    Membership in the listed subgroups is a residue-level condition and the
    characters are tame, so level-1 coordinate cells decide everything; a
    sampled one-digit refinement re-checks that stability.
    """
    assert N >= 2, "need at least conductor + 1 digits for the tame characters"
    orbits, _ = double_cosets(spec, name, min(N, 2), budget=budget)
    supported = []
    alphas = un._unit_reps(spec, 1)
    betas = un.norm_one_reps(spec, 1)
    rngK = un.iwahori_ranges(spec, SubgroupName(K_CIRC))
    bs = un._ideal_reps(spec, rngK.upper_b, 1)
    zs = un._real_reps(spec, min(rngK.upper_z, 0), 1)
    n_cells = len(orbits) * len(alphas) * len(betas) * len(bs) * len(zs)
    if n_cells > budget:
        raise BudgetExceeded(n_cells, budget)
    vmin, units = un._shape(spec, name)
    use_fast = spec.kind == UNRAMIFIED
    ops = _IntMatOps(spec, max(N, 2) + 1) if use_fast else None
    cells = _borel_cells(spec, alphas, betas, bs, zs)
    enc_cells = [((ops.enc(g) if use_fast else g), cs.mu(t), g, b, z) for (g, t, b, z) in cells]
    for idx, (sigma, orbit) in enumerate(orbits):
        sigma_inv = sigma.inverse()
        if use_fast:
            s_enc = ops.enc(sigma)
            si_enc = ops.enc(sigma_inv)
        trivial = True
        nonempty = False
        refine = []
        for enc_g, mu_t, g, b, z in enc_cells:
            if use_fast:
                m = ops.mul(si_enc, ops.mul(enc_g, s_enc))
                inside = ops.shape_ok(m, vmin, units)
            else:
                conj = sigma_inv * g * sigma
                try:
                    inside = membership(conj, name)
                except PrecisionLoss:
                    inside = membership(conj.truncated_to(spec.N), name)
            if inside:
                nonempty = True
                if not (mu_t == ONE):
                    trivial = False
                if len(refine) < 2:
                    refine.append((g, b, z))
        assert nonempty, "the identity cell always meets the intersection"
        for g, b, z in refine:
            # exact-route and one-digit-deeper agreement
            conj = sigma_inv * g * sigma
            assert membership(conj, name), "fast membership disagrees with the exact route"
            g2 = g * upper_n(spec, spec.uniformizer(), 0)
            assert membership(sigma_inv * g2 * sigma, name), "membership not constant on level-1 cells"
        if trivial:
            supported.append(idx)
    return InvariantCount(str(name), len(supported), supported)


# ---------------------------------------------------------------------------
# gamma-translate rank


def gamma_translate_rank(spec, K: SubgroupName, cs: CharacterSpec, r: int, N: int = 2) -> int:
    """Rank of the evaluation matrix of f_K, gamma f_K, ..., gamma^r f_K.

    Evaluation points mix the gamma-axis and deep opposite-unipotent
    directions so that the translates separate; each translate is also
    spot-checked to be I_{2r}-invariant.
    """
    assert spec.kind == UNRAMIFIED
    p = spec.p
    pts = []
    for i in range(r + 2):
        b = spec.element(Fraction(1, p**i))
        pts.append(weyl_w(spec) * upper_n(spec, b, 0))
    for i in range(r + 1):
        g0 = gamma(spec)
        pts.append(UGroupElement(spec, tuple(tuple(g0.m[a][a] ** (-i) if a == b else spec.zero() for b in range(3)) for a in range(3)), validate=False))
    gmat = gamma(spec)
    rows = []
    for j in range(r + 1):
        row = []
        for x in pts:
            gp = UGroupElement(spec, tuple(tuple(gmat.m[a][a] ** j if a == b else spec.zero() for b in range(3)) for a in range(3)), validate=False)
            row.append(_as_rational(eval_f_K(x * gp, K, cs)))
        rows.append(row)
    # I_{2r}-invariance spot check
    if r >= 1:
        u_gens = [lower_n(spec, spec.element(p ** (2 * r)), 0), upper_n(spec, spec.one(), 0)]
        for j in range(r + 1):
            gp = UGroupElement(spec, tuple(tuple(gmat.m[a][a] ** j if a == b else spec.zero() for b in range(3)) for a in range(3)), validate=False)
            for u in u_gens:
                assert membership(u, SubgroupName(I_R, 2 * r))
                for x in pts[: r + 1]:
                    assert eval_f_K(x * u * gp, K, cs) == eval_f_K(x * gp, K, cs), "translate not I_2r-invariant"
    return _rank_rational(rows)


def _rank_rational(rows):
    m = [list(r) for r in rows]
    rank = 0
    cols = len(m[0]) if m else 0
    for c in range(cols):
        piv = next((i for i in range(rank, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        inv = Fraction(1) / m[rank][c]
        m[rank] = [x * inv for x in m[rank]]
        for i in range(len(m)):
            if i != rank and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[rank])]
        rank += 1
    return rank


# ---------------------------------------------------------------------------
# vectorized strata masses (unramified K')


def _int_mod(q, p, mod):
    """Integer representative of a p-integral rational modulo mod."""
    assert q.denominator % p != 0, "entry is not p-integral"
    return q.numerator * pow(q.denominator, -1, mod) % mod


def _vp_table(p, depth):
    import numpy as np

    mod = p**depth
    t = np.zeros(mod, dtype=np.int64)
    for v in range(1, depth):
        t[:: p**v] = v
    t[0] = depth
    return t


def strata_masses_fast(spec, jmax, budget=10**9):
    """Same masses as strata_masses, via exact integer grids per flag coset.

    For each flag representative x the bottom-left entry of x n^-(c, y) is
    A + B c + C y with (A, B, C) the bottom row of x and y = t + delta(c);
    real and omega components are affine-quadratic integer forms in the
    coordinate digits, so valuations histogram exactly.
    """
    import numpy as np

    assert spec.kind == UNRAMIFIED
    p = spec.p
    e = spec.e
    depth = jmax + 2
    rngI = un.iwahori_ranges(spec, SubgroupName(IWAHORI))
    lc, ly = rngI.lower_c, rngI.lower_y
    Kc = p ** (depth - lc)
    Kx = p ** (depth - ly)
    flags = flag_representatives(spec, SubgroupName(K_PRIME))
    cells_per_flag = Kc * Kc * Kx
    if len(flags) * cells_per_flag > budget:
        raise BudgetExceeded(len(flags) * cells_per_flag, budget)
    mod = p ** (depth + 1)
    vt = _vp_table(p, depth)
    inv2 = pow(2, -1, mod)
    AC, BC = np.meshgrid(np.arange(Kc, dtype=np.int64), np.arange(Kc, dtype=np.int64), indexing="ij")
    AC = AC.ravel()
    BC = BC.ravel()
    scale_c = p**lc
    Nc = (scale_c * scale_c % mod) * ((AC * AC - e * BC * BC) % mod) % mod
    delta_omega = (-(Nc * inv2)) % mod
    counts = {j: 0 for j in list(range(jmax)) + [jmax]}

    def as_int_pair(x: LocalElement):
        return _int_mod(x.a, p, mod), _int_mod(x.b, p, mod)

    for x in flags:
        A, B, C = (as_int_pair(v) for v in x.bottom_row())
        Bc_re = (B[0] * scale_c % mod) * AC + (e * B[1] * scale_c % mod) * BC
        Bc_om = (B[0] * scale_c % mod) * BC + (B[1] * scale_c % mod) * AC
        base_re = (A[0] + Bc_re + C[1] * delta_omega % mod * e) % mod
        base_om = (A[1] + Bc_om + C[0] * delta_omega) % mod
        for t in range(Kx):
            yr = p**ly * t % mod
            re = (base_re + C[0] * yr) % mod % (p**depth)
            om = (base_om + C[1] * yr) % mod % (p**depth)
            v = np.minimum(vt[re], vt[om])
            j = np.minimum(v - 1, jmax)
            j = np.where(v >= depth, jmax, j)
            binc = np.bincount(np.maximum(j, 0), minlength=jmax + 1)
            for jj in range(jmax + 1):
                counts[min(jj, jmax)] += int(binc[jj])
            # cells with v-1 < 0 cannot occur: bottom-left of K' has val >= 1
            assert int(np.sum(j < 0)) == 0
    total = len(flags) * cells_per_flag
    return {j: Fraction(cnt, total) for j, cnt in counts.items()}


def _phi_m_histogram(spec, K: SubgroupName, n: int, budget=10**9):
    """Exact counts of cells of K by the Iwasawa exponent m of
    gamma^-n k gamma^n, over flag x lower coordinates (integer grids).

    Bottom row of x n^-(c,y) is (A + Bc + Cy, B + C ctilde, C); conjugation
    scales it by (p^-2n, p^-n, 1) and m is the K-pattern minimum.
    """
    import numpy as np

    assert spec.kind == UNRAMIFIED
    p, e = spec.p, spec.e
    depth = 2 * n + 2
    rngI = un.iwahori_ranges(spec, SubgroupName(IWAHORI))
    lc, ly = rngI.lower_c, rngI.lower_y
    Kc = p ** (depth - lc)
    Kx = p ** (depth - ly)
    flags = flag_representatives(spec, K)
    if len(flags) * Kc * Kc * Kx > budget:
        raise BudgetExceeded(len(flags) * Kc * Kc * Kx, budget)
    mod = p ** (depth + 1)
    vt = _vp_table(p, depth)
    inv2 = pow(2, -1, mod)
    AC, BC = np.meshgrid(np.arange(Kc, dtype=np.int64), np.arange(Kc, dtype=np.int64), indexing="ij")
    AC = AC.ravel()
    BC = BC.ravel()
    sc = p**lc
    Nc = (sc * sc % mod) * ((AC * AC - e * BC * BC) % mod) % mod
    delta_om = (-(Nc * inv2)) % mod
    # ctilde = -xi conj(c) = p^lc (e bc, -ac)
    ct_re = (e * sc % mod) * BC % mod
    ct_om = (-(sc * AC)) % mod
    hist = {}

    def ipair(x):
        return _int_mod(x.a, p, mod), _int_mod(x.b, p, mod)

    small = p**depth
    for x in flags:
        A, B, C = (ipair(v) for v in x.bottom_row())
        r1_re = (A[0] + sc * (B[0] * AC + e * B[1] * BC) + C[0] * 0 + (e * C[1] % mod) * delta_om) % mod
        r1_om = (A[1] + sc * (B[0] * BC + B[1] * AC) + C[0] * delta_om) % mod
        r2_re = (B[0] + C[0] * ct_re + (e * C[1] % mod) * ct_om) % mod
        r2_om = (B[1] + C[0] * ct_om + C[1] * ct_re) % mod
        r3 = (vt[A[0] * 0 + (np.int64(1) if False else 0)] if False else None)
        v3 = min(
            vt[C[0] % small] if C[0] % small else depth,
            vt[C[1] % small] if C[1] % small else depth,
        )
        v2 = np.minimum(vt[r2_re % small], vt[r2_om % small])
        for t in range(Kx):
            yr = p**ly * t % mod
            rr = (r1_re + C[0] * yr) % mod % small
            ro = (r1_om + C[1] * yr) % mod % small
            v1 = np.minimum(vt[rr], vt[ro])
            if K.base == K_PRIME:
                m = np.minimum(v1 - 2 * n - 1, v3)
            else:
                m = np.minimum(np.minimum(v1 - 2 * n, v2 - n), v3)
            mv, cnts = np.unique(m, return_counts=True)
            for mm, cc in zip(mv.tolist(), cnts.tolist()):
                hist[mm] = hist.get(mm, 0) + cc
    total = len(flags) * Kc * Kc * Kx
    return hist, total


def phi_via_histogram(spec, K: SubgroupName, cs: CharacterSpec, n: int, budget=10**9):
    """Phi_n from the m-histogram; representatives of a few cells are
    cross-evaluated with the full Iwasawa evaluator."""
    hist, total = _phi_m_histogram(spec, K, n, budget=budget)
    mdh = cs.mu_delta_half_at_gamma()
    out = ZERO
    for m, cnt in sorted(hist.items()):
        out = out + (mdh**m) * Fraction(cnt, total)
    return _as_rational(out * Fraction(spec.p) ** (5 * n)), hist


# ---------------------------------------------------------------------------
# ramified strata integrals (Gross tower)


@dataclass
class GrossStrataResult:
    deep_integral: ExactNumber  # over K''_{2n}
    complement_integral: ExactNumber  # over K'' minus K''_{2n}
    vol_I2: Fraction  # vol(I'') with vol(K'') = 1
    index_KI: int  # [K'' : I'']
    stability_checked: int  # cells of the deep stratum verified to stay in K''


def gross_strata_integrals(spec, cs: CharacterSpec, n: int = 1, N: int = 3, budget=10**7):
    """Exact deep-stratum and complement integrals of f(gamma^-n k gamma^n)
    over the ramified Gross subgroup, Haar mass one.

    The integrand and the stratum indicator val(c1) both factor through the
    flag and lower coordinates (right-K''-invariance of f; the inner torus
    and upper coordinates multiply the bottom-left entry by a unit), which
    is spot-verified on sampled inner cells.
    """
    assert spec.kind == RAMIFIED
    name = SubgroupName(K_GROSS)
    depth = max(N, 2 * n + 1)
    cs_sys = CellSystem(spec, name, depth)
    iterated = len(cs_sys.flags) * cs_sys.lower_count()
    if iterated > budget:
        raise BudgetExceeded(iterated, budget)
    rng = _random.Random(77)
    deep = ZERO
    comp = ZERO
    stability = 0
    mu_cell = Fraction(1, iterated)
    for x, c, y, left in cs_sys.iter_flag_lower():
        conj = left.conjugate_by_gamma(n)
        v = eval_f_gross(conj, cs)
        r = left.m[2][0]
        rv = r.rep_val()
        in_deep = rv is INF or rv >= 2 * n - 1  # val(c1) >= 2n
        if in_deep:
            deep = deep + v
            if stability < 40:
                # the miraculous stability: the conjugate stays in K''
                assert membership(conj, name), "deep stratum left the Gross subgroup"
                al, be = rng.choice(cs_sys.torus_pairs)
                b = rng.choice(cs_sys.upper_b)
                z = rng.choice(cs_sys.upper_z)
                full = (left * torus_element(spec, al, be) * upper_n(spec, b, z)).conjugate_by_gamma(n)
                assert membership(full, name)
                assert eval_f_gross(full, cs) == v
                stability += 1
        else:
            comp = comp + v
            if stability < 40 and rng.random() < 0.05:
                al, be = rng.choice(cs_sys.torus_pairs)
                full = (left * torus_element(spec, al, be)).conjugate_by_gamma(n)
                assert eval_f_gross(full, cs) == v
    flags = len(flag_representatives(spec, name))
    return GrossStrataResult(
        deep_integral=deep * mu_cell,
        complement_integral=comp * mu_cell,
        vol_I2=Fraction(1, flags),
        index_KI=flags,
        stability_checked=stability,
    )
