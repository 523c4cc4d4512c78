"""Exact multilinear algebra of (k,l)-forms at a boundary point.

A (k,l)-form has k antisymmetric slots over the boundary tangent space
(dimension 3 by default) and l antisymmetric slots over the internal vector
space V (dimension ``d``, metric of signature (1, d-1) with the time-like
slot at index 0 and orientation eps_{0123} = +1).  Coefficients are exact
rationals stored on strictly increasing multi-indices; every question below
(kernel dimensions, injectivity, the structural solve for the unique
connection representative) reduces to exact Gaussian elimination, so the
answers carry no floating-point caveats.

Index conventions: boundary tangent indices run over 0..base_dim-1 (these are
the tangential coordinates of the slice); internal indices over 0..d-1.
Antisymmetrization in the component formula of ``internal_act`` is weight one
(average over the two index orders).
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .errors import InconsistentSystemError, NondegeneracyError

__all__ = [
    "InternalSpace",
    "PForm",
    "LinMap",
    "pform_dim",
    "wedge",
    "internal_act",
    "linmap_kernel",
    "wedge_map",
    "coframe_kernel_dim",
    "injective_w21",
    "structural_fix",
    "StructuralFix",
    "rref",
    "nullspace",
    "rank",
    "solve_exact",
    "canonical_coframe",
    "canonical_eps",
    "random_coframe",
    "random_pform",
    "random_fraction",
    "boundary_nondegenerate",
    "metric_nondegenerate",
    "spacelike",
    "induced_metric",
]


# ---------------------------------------------------------------------------
# Exact rational matrix routines
# ---------------------------------------------------------------------------

def rref(matrix):
    """Reduced row echelon form (in place on a copy); returns (rows, pivot columns)."""
    rows = [list(map(Fraction, r)) for r in matrix]
    if not rows:
        return rows, []
    ncols = len(rows[0])
    pivots = []
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        pv = rows[r][c]
        rows[r] = [x / pv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows, pivots


def rank(matrix) -> int:
    return len(rref(matrix)[1])


def nullspace(matrix, ncols=None):
    """Exact basis of the right kernel, one vector per free column."""
    if not matrix:
        return [] if not ncols else [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    ncols = len(matrix[0]) if ncols is None else ncols
    rows, pivots = rref(matrix)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * ncols
        vec[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            vec[pc] = -rows[r][fc]
        basis.append(vec)
    return basis


def solve_exact(matrix, rhs):
    """Solve ``A x = b`` exactly; returns (particular solution, kernel basis).

    Raises InconsistentSystemError when no solution exists.
    """
    if not matrix:
        return [], []
    ncols = len(matrix[0])
    aug = [list(row) + [b] for row, b in zip(matrix, rhs)]
    rows, pivots = rref(aug)
    for r, row in enumerate(rows):
        if all(x == 0 for x in row[:ncols]) and row[ncols] != 0:
            raise InconsistentSystemError("exact linear system has no solution")
    x = [Fraction(0)] * ncols
    for r, pc in enumerate(pivots):
        if pc < ncols:
            x[pc] = rows[r][ncols]
    kern = nullspace(matrix, ncols)
    return x, kern


# ---------------------------------------------------------------------------
# The internal space and (k,l)-forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InternalSpace:
    """V with diagonal metric of signature (1, d-1); the time-like slot is 0."""
    d: int = 4

    def eta(self, a: int, b: int) -> Fraction:
        if a != b:
            return Fraction(0)
        return Fraction(-1) if a == 0 else Fraction(1)

    def eta_diag(self):
        return [self.eta(a, a) for a in range(self.d)]


@lru_cache(maxsize=None)
def _basis(ndim: int, k: int):
    return tuple(itertools.combinations(range(ndim), k))


@lru_cache(maxsize=None)
def _basis_index(ndim: int, k: int):
    return {c: i for i, c in enumerate(_basis(ndim, k))}


def pform_dim(k: int, l: int, base_dim: int = 3, d: int = 4) -> int:
    from math import comb
    return comb(base_dim, k) * comb(d, l)


def _merge_sign(s1, s2):
    """Sign of sorting the concatenation of two disjoint increasing tuples,
    or (None, 0) if they intersect."""
    if set(s1) & set(s2):
        return None, 0
    inv = sum(1 for x in s1 for y in s2 if y < x)
    merged = tuple(sorted(s1 + s2))
    return merged, -1 if inv % 2 else 1


class PForm:
    """An exact (k,l)-form at a point; immutable."""

    __slots__ = ("k", "l", "base_dim", "space", "coeffs")

    def __init__(self, k, l, coeffs=None, base_dim=3, space=InternalSpace()):
        self.k = k
        self.l = l
        self.base_dim = base_dim
        self.space = space
        clean = {}
        for (I, A), c in (coeffs or {}).items():
            c = Fraction(c)
            if c == 0:
                continue
            if tuple(I) != tuple(sorted(I)) or tuple(A) != tuple(sorted(A)):
                raise ValueError("PForm coefficients must use strictly increasing multi-indices")
            clean[(tuple(I), tuple(A))] = c
        self.coeffs = clean

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zero(k, l, base_dim=3, space=InternalSpace()):
        return PForm(k, l, {}, base_dim, space)

    @staticmethod
    def from_vector(k, l, vec, base_dim=3, space=InternalSpace()):
        sb = _basis(base_dim, k)
        ib = _basis(space.d, l)
        coeffs = {}
        idx = 0
        for I in sb:
            for A in ib:
                if vec[idx] != 0:
                    coeffs[(I, A)] = Fraction(vec[idx])
                idx += 1
        return PForm(k, l, coeffs, base_dim, space)

    def to_vector(self):
        sb = _basis(self.base_dim, self.k)
        ib = _basis(self.space.d, self.l)
        return [self.coeffs.get((I, A), Fraction(0)) for I in sb for A in ib]

    def dim(self) -> int:
        return pform_dim(self.k, self.l, self.base_dim, self.space.d)

    # -- algebra ---------------------------------------------------------------

    def _like(self, other):
        return (self.base_dim == other.base_dim and self.space == other.space)

    def __add__(self, other):
        if (self.k, self.l) != (other.k, other.l) or not self._like(other):
            raise ValueError("shape mismatch in PForm addition")
        acc = dict(self.coeffs)
        for key, c in other.coeffs.items():
            acc[key] = acc.get(key, Fraction(0)) + c
        return PForm(self.k, self.l, acc, self.base_dim, self.space)

    def __neg__(self):
        return PForm(self.k, self.l, {k: -c for k, c in self.coeffs.items()}, self.base_dim, self.space)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s):
        s = Fraction(s)
        return PForm(self.k, self.l, {k: s * c for k, c in self.coeffs.items()}, self.base_dim, self.space)

    def is_zero(self):
        return not self.coeffs

    def __eq__(self, other):
        return (isinstance(other, PForm) and (self.k, self.l) == (other.k, other.l)
                and self._like(other) and self.coeffs == other.coeffs)

    def __hash__(self):
        return hash((self.k, self.l, self.base_dim, self.space, tuple(sorted(self.coeffs.items()))))

    def get_full(self, I, A):
        """Coefficient at an arbitrary (possibly unsorted) index pair, with sign."""
        if len(set(I)) != len(I) or len(set(A)) != len(A):
            return Fraction(0)
        sI, sgnI = _sort_with_sign(I)
        sA, sgnA = _sort_with_sign(A)
        return self.coeffs.get((sI, sA), Fraction(0)) * sgnI * sgnA

    def __repr__(self):
        return f"PForm(k={self.k}, l={self.l}, {len(self.coeffs)} coeffs)"


def _sort_with_sign(idx):
    idx = list(idx)
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return tuple(idx), sign


def wedge(a: PForm, b: PForm) -> PForm:
    """Wedge in both gradings; graded-commutative with sign (-1)^(kk'+ll')."""
    if not a._like(b):
        raise ValueError("PForms live over different spaces")
    k, l = a.k + b.k, a.l + b.l
    if k > a.base_dim or l > a.space.d:
        raise ValueError(f"wedge degree ({k},{l}) overflows the ({a.base_dim},{a.space.d}) space")
    acc = {}
    for (I1, A1), c1 in a.coeffs.items():
        for (I2, A2), c2 in b.coeffs.items():
            I, sI = _merge_sign(I1, I2)
            if I is None:
                continue
            A, sA = _merge_sign(A1, A2)
            if A is None:
                continue
            key = (I, A)
            acc[key] = acc.get(key, Fraction(0)) + c1 * c2 * sI * sA
    return PForm(k, l, acc, a.base_dim, a.space)


def internal_act(v: PForm, e: PForm) -> PForm:
    """The curvature-style action of a (1,2)-form on a (1,1)-form.

    Component rule (weight-one antisymmetrization over the two base slots):
    ``(v.e)^a_{ij} = eta_{bc} v^{ab}_{[i} e^c_{j]}``.  Bilinear; output (2,1).
    """
    if (v.k, v.l) != (1, 2) or (e.k, e.l) != (1, 1):
        raise ValueError("internal_act expects a (1,2)-form acting on a (1,1)-form")
    space = v.space
    eta = space.eta_diag()
    acc = {}
    half = Fraction(1, 2)
    for (Iv, Av), cv in v.coeffs.items():
        i = Iv[0]
        for (Ie, Ae), ce in e.coeffs.items():
            j = Ie[0]
            if i == j:
                continue
            c = Ae[0]
            # v^{ab} with (a,b) = Av sorted; contract second slot with eta_bc e^c
            for a, b, sgn in ((Av[0], Av[1], 1), (Av[1], Av[0], -1)):
                if b != c:
                    continue
                val = half * cv * ce * sgn * eta[b]
                (ii, jj), s = ((i, j), 1) if i < j else ((j, i), -1)
                key = ((ii, jj), (a,))
                acc[key] = acc.get(key, Fraction(0)) + val * s
    return PForm(2, 1, acc, v.base_dim, space)


# ---------------------------------------------------------------------------
# Linear maps between PForm spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinMap:
    """Exact matrix of a linear map between two PForm shapes."""
    dom: tuple            # (k, l, base_dim, d)
    cod: tuple
    rows: tuple           # tuple of tuples, cod_dim x dom_dim

    def matrix(self):
        return [list(r) for r in self.rows]

    def apply(self, form: PForm) -> PForm:
        vec = form.to_vector()
        out = [sum(r[j] * vec[j] for j in range(len(vec))) for r in self.rows]
        k, l, base_dim, d = self.cod
        return PForm.from_vector(k, l, out, base_dim, InternalSpace(d))


def wedge_map(e: PForm, k: int, l: int) -> LinMap:
    """The map ``x -> e ^ x`` on (k,l)-forms, as an exact matrix."""
    base_dim, d = e.base_dim, e.space.d
    dom_basis = [(I, A) for I in _basis(base_dim, k) for A in _basis(d, l)]
    kc, lc = k + e.k, l + e.l
    cod_index = {key: i for i, key in enumerate(
        (I, A) for I in _basis(base_dim, kc) for A in _basis(d, lc))}
    rows = [[Fraction(0)] * len(dom_basis) for _ in range(len(cod_index))]
    for j, (I, A) in enumerate(dom_basis):
        unit = PForm(k, l, {(I, A): Fraction(1)}, base_dim, e.space)
        img = wedge(e, unit)
        for key, c in img.coeffs.items():
            rows[cod_index[key]][j] = c
    return LinMap(dom=(k, l, base_dim, d), cod=(kc, lc, base_dim, d),
                  rows=tuple(tuple(r) for r in rows))


def linmap_kernel(m: LinMap):
    """Exact basis of the kernel, as PForms of the domain shape."""
    k, l, base_dim, d = m.dom
    vecs = nullspace(m.matrix(), pform_dim(k, l, base_dim, d))
    return [PForm.from_vector(k, l, v, base_dim, InternalSpace(d)) for v in vecs]


# ---------------------------------------------------------------------------
# Coframe facts
# ---------------------------------------------------------------------------

def _legs(e: PForm):
    """The spatial legs of a (1,1)-form as vectors in V."""
    d = e.space.d
    legs = []
    for i in range(e.base_dim):
        legs.append([e.coeffs.get(((i,), (a,)), Fraction(0)) for a in range(d)])
    return legs


def boundary_nondegenerate(e: PForm) -> bool:
    return rank(_legs(e)) == e.base_dim


def induced_metric(e: PForm):
    """g_ij = eta(e_i, e_j) on the slice, exact."""
    eta = e.space.eta_diag()
    legs = _legs(e)
    n = e.base_dim
    return [[sum(eta[a] * legs[i][a] * legs[j][a] for a in range(e.space.d)) for j in range(n)]
            for i in range(n)]


def metric_nondegenerate(e: PForm) -> bool:
    """Nondegeneracy of the induced boundary metric g_ij = eta(e_i, e_j)."""
    g = induced_metric(e)
    return rank(g) == e.base_dim


def spacelike(e: PForm) -> bool:
    """Positive definiteness of the induced metric (Sylvester, exact).

    A space-like slice guarantees that any time-like internal vector
    completes the coframe legs to a basis, which is the setting of the
    unique-representative theorem behind ``structural_fix``.
    """
    g = induced_metric(e)
    n = e.base_dim
    for k in range(1, n + 1):
        minor = [row[:k] for row in g[:k]]
        if _det(minor) <= 0:
            return False
    return True


def _det(m):
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = Fraction(0)
    sign = 1
    for j in range(n):
        sub = [row[:j] + row[j + 1:] for row in m[1:]]
        total += sign * m[0][j] * _det(sub)
        sign = -sign
    return total


def coframe_kernel_dim(e: PForm) -> int:
    """dim ker of ``e ^ .`` on (1,2)-forms; 6 for every nondegenerate coframe
    over the 3-dimensional slice with d = 4."""
    if not boundary_nondegenerate(e):
        raise NondegeneracyError("coframe legs are linearly dependent")
    m = wedge_map(e, 1, 2)
    return pform_dim(1, 2, e.base_dim, e.space.d) - rank(m.matrix())


def _bulk_lift(e: PForm) -> PForm:
    """Extend the boundary coframe to a coframe over a (base_dim+1)-dimensional
    base: slot 0 is the new transversal direction, filled with the first
    standard basis vector of V that keeps the legs independent."""
    d = e.space.d
    legs = _legs(e)
    chosen = 0
    for a in range(d):
        cand = [Fraction(int(b == a)) for b in range(d)]
        if rank(legs + [cand]) == min(e.base_dim + 1, d):
            chosen = a
            break
    coeffs = {((0,), (chosen,)): Fraction(1)}
    for (I, A), c in e.coeffs.items():
        coeffs[((I[0] + 1,), A)] = c
    return PForm(1, 1, coeffs, e.base_dim + 1, e.space)


def injective_w21(e: PForm) -> bool:
    """Whether wedging with the (bulk-extended) coframe is injective on
    (2,1)-forms.

    Over the four-dimensional bulk the map (2,1) -> (3,2) is square (24 x 24)
    and injective exactly when the coframe is nondegenerate; this is the
    pointwise content of torsion-freeness being equivalent to its coframe
    contraction.  The boundary coframe is lifted by one transversal leg, so
    the answer is True precisely for boundary-nondegenerate ``e``.
    """
    bulk = _bulk_lift(e)
    m = wedge_map(bulk, 2, 1)
    dom = pform_dim(2, 1, bulk.base_dim, bulk.space.d)
    return rank(m.matrix()) == dom


@dataclass(frozen=True)
class StructuralFix:
    """Solution of the structural constraint: the in-class connection shift
    ``v`` (unique), one admissible ``sigma``, and the dimension of the sigma
    ambiguity (reported, never asserted)."""
    v: PForm
    sigma: PForm
    sigma_ambiguity: int


def structural_fix(e: PForm, eps: PForm, T: PForm) -> StructuralFix:
    """Find the unique kernel shift making the torsion satisfy the structural
    constraint.

    Solves exactly for ``v`` (1,2) and ``sigma`` (1,1) with::

        e ^ v = 0
        eps ^ (T + v.e) = e ^ sigma

    ``e`` must be metric nondegenerate and ``eps`` a time-like section
    completing the coframe legs to a basis of V.  Uniqueness of ``v`` is a
    theorem for such data; an inconsistent or v-ambiguous system is an
    internal failure and raises.
    """
    if (eps.k, eps.l) != (0, 1) or (T.k, T.l) != (2, 1) or (e.k, e.l) != (1, 1):
        raise ValueError("structural_fix expects e:(1,1), eps:(0,1), T:(2,1)")
    if not metric_nondegenerate(e):
        raise NondegeneracyError("coframe is not metric nondegenerate")
    eta = e.space.eta_diag()
    evec = eps.to_vector()
    norm = sum(eta[a] * evec[a] * evec[a] for a in range(e.space.d))
    if norm >= 0:
        raise NondegeneracyError("eps must be time-like")
    if rank(_legs(e) + [evec]) != e.space.d:
        raise NondegeneracyError("eps does not complete the coframe to a basis")

    d = e.space.d
    nv = pform_dim(1, 2, e.base_dim, d)
    ns = pform_dim(1, 1, e.base_dim, d)

    # columns: v components then sigma components
    def v_of(vec):
        return PForm.from_vector(1, 2, vec, e.base_dim, e.space)

    def s_of(vec):
        return PForm.from_vector(1, 1, vec, e.base_dim, e.space)

    rows_a = wedge_map(e, 1, 2).matrix()                 # e^v : nv -> (2,3)
    # eps ^ (v.e) as a matrix in v, and -e ^ sigma as a matrix in sigma
    cod22 = [(I, A) for I in _basis(e.base_dim, 2) for A in _basis(d, 2)]
    cod22_index = {key: i for i, key in enumerate(cod22)}
    m_v = [[Fraction(0)] * nv for _ in range(len(cod22))]
    for j in range(nv):
        unit = [Fraction(0)] * nv
        unit[j] = Fraction(1)
        img = wedge(eps, internal_act(v_of(unit), e))
        for key, c in img.coeffs.items():
            m_v[cod22_index[key]][j] = c
    m_s = [[Fraction(0)] * ns for _ in range(len(cod22))]
    for j in range(ns):
        unit = [Fraction(0)] * ns
        unit[j] = Fraction(1)
        img = wedge(e, s_of(unit))
        for key, c in img.coeffs.items():
            m_s[cod22_index[key]][j] = c

    nrows_a = len(rows_a)
    system = []
    rhs = []
    for r in rows_a:
        system.append(list(r) + [Fraction(0)] * ns)
        rhs.append(Fraction(0))
    epsT = wedge(eps, T)
    rhs_b = [Fraction(0)] * len(cod22)
    for key, c in epsT.coeffs.items():
        rhs_b[cod22_index[key]] = -c
    for i in range(len(cod22)):
        system.append(list(m_v[i]) + [-x for x in m_s[i]])
        rhs.append(rhs_b[i])

    sol, kern = solve_exact(system, rhs)
    v_ambiguous = any(any(x != 0 for x in kvec[:nv]) for kvec in kern)
    if v_ambiguous:
        raise InconsistentSystemError(
            "structural constraint admits more than one kernel shift; uniqueness violated")
    v = v_of(sol[:nv])
    sigma = s_of(sol[nv:])

    # exact residual recheck; failure here is an internal logic error
    if not wedge(e, v).is_zero():
        raise InconsistentSystemError("structural solve produced v outside the kernel")
    lhs = wedge(eps, T + internal_act(v, e))
    if lhs != wedge(e, sigma):
        raise InconsistentSystemError("structural solve violates the constraint identity")
    return StructuralFix(v=v, sigma=sigma, sigma_ambiguity=len(kern))


# ---------------------------------------------------------------------------
# Sampling helpers (seeded, exact)
# ---------------------------------------------------------------------------

def canonical_coframe(base_dim=3, d=4) -> PForm:
    """e_i = (i+1)-th standard basis vector of V (skipping the time-like slot)."""
    coeffs = {((i,), (i + 1,)): Fraction(1) for i in range(base_dim)}
    return PForm(1, 1, coeffs, base_dim, InternalSpace(d))


def canonical_eps(d=4) -> PForm:
    return PForm(0, 1, {((), (0,)): Fraction(1)}, 3, InternalSpace(d))


def random_fraction(rng: random.Random, num=6, den=3) -> Fraction:
    return Fraction(rng.randint(-num, num), rng.randint(1, den))


def random_pform(rng: random.Random, k, l, base_dim=3, d=4) -> PForm:
    coeffs = {}
    for I in _basis(base_dim, k):
        for A in _basis(d, l):
            coeffs[(I, A)] = random_fraction(rng)
    return PForm(k, l, coeffs, base_dim, InternalSpace(d))


def random_coframe(rng: random.Random, base_dim=3, d=4, metric=True,
                   require_spacelike=False) -> PForm:
    """Rejection-sample an exact coframe; ``metric`` additionally demands a
    nondegenerate induced boundary metric, ``require_spacelike`` a positive
    definite one (so a time-like section always completes the legs)."""
    while True:
        e = random_pform(rng, 1, 1, base_dim, d)
        if not boundary_nondegenerate(e):
            continue
        if require_spacelike:
            if spacelike(e):
                return e
            continue
        if metric and not metric_nondegenerate(e):
            continue
        return e
