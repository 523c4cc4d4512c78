"""Built-in theory corpus and its derived golden structures.

Five theories anchor the pipeline end to end:

* ``mechanics`` — a point particle, ``L = m q'^2 / 2 - V(q)``;
* ``length``    — the euclidean length of a regular path in R^3 (degenerate);
* ``scalar``    — a free scalar field with split metric (d = 2 by default);
* ``em``        — Maxwell theory with split metric (d = 4);
* ``pc4``       — four-dimensional coframe (first-order) gravity with
                  cosmological constant, internal metric diag(-1,1,1,1).

Each builtin comes with a declared boundary chart (the reduced boundary
coordinates, their boundary 1-form, constraints, momenta definitions) that
``calc_var.verify_chart`` checks exactly against the derived pipeline output,
and with smeared constraint families for the lattice backend.

Sign conventions per theory, recorded because each is a genuine choice:
the equation-of-motion densities follow the classical form (kinetic term
positive); the boundary 1-form of the mechanical examples lives on the upper
(outgoing) end of the transversal coordinate, the field theories quote the
incoming copy for the scalar field and electromagnetism and the outgoing one
for coframe gravity; smeared constraints are normalized so that the standard
hamiltonian vector fields come out with their textbook components
(gauge transformations move only the potential, internal rotations act as
``c . e`` on the coframe).
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import expr as ex
from .calc_var import (
    BackgroundDecl,
    BoundaryChart,
    BoundarySplit,
    ChartField,
    FieldDecl,
    LocalVarForm,
    TheorySpec,
    ibp_split,
    variation,
)
from .errors import CheckFailure
from .expr import Expr, JetVar, SymbolMeta
from .lattice import ConstraintSet, SmearedConstraint

__all__ = [
    "THEORY_NAMES",
    "builtin",
    "derived_split",
    "chart",
    "constraint_set",
    "flat_metric_bindings",
    "ETA_DIAG",
    "eps4",
    "eps3",
    "pc_omega_comp",
    "pc_curvature_expr",
    "pc_on_surface_state",
    "pc_internal_rotation",
]

THEORY_NAMES = ("mechanics", "length", "scalar", "em", "pc4")

ETA_DIAG = (-1, 1, 1, 1)

_DYN = SymbolMeta()
_POS_DYN = SymbolMeta(positive=True)


def _perm_sign(p):
    sign = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def eps4():
    """Orientation tensor entries: (permutation of 0..3, sign), eps_0123 = +1."""
    return tuple((p, _perm_sign(p)) for p in itertools.permutations(range(4)))


@lru_cache(maxsize=None)
def eps3():
    return tuple((p, _perm_sign(p)) for p in itertools.permutations((1, 2, 3)))


# ---------------------------------------------------------------------------
# mechanics
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _mechanics() -> TheorySpec:
    fields = (FieldDecl("q"),)
    backgrounds = (BackgroundDecl("m", constant=True, positive=True),)
    base = TheorySpec(name="mechanics", dim=1, coords=("t",), transversal=0,
                      fields=fields, backgrounds=backgrounds, functions=("V",),
                      vdim=1, boundary_side=1, boundary_names=(("q", 1, "v"),))
    L = ex.parse("1/2*m*q'^2 - V(q)", base.context())
    return TheorySpec(name="mechanics", dim=1, coords=("t",), transversal=0,
                      fields=fields, backgrounds=backgrounds, functions=("V",),
                      lagrangian=L, vdim=1, boundary_side=1,
                      boundary_names=(("q", 1, "v"),))


def _mechanics_chart(t: TheorySpec) -> BoundaryChart:
    q = JetVar("q", (), ())
    v = JetVar("v", (), (), SymbolMeta(excluded=frozenset({0})))
    m = t.var("m")
    alpha = LocalVarForm(1, {(q,): Expr.var(m) * Expr.var(v)})
    H = Expr.const(Fraction(1, 2)) * Expr.var(m) * Expr.var(v) ** 2 + ex.apply_fn("V", 0, Expr.var(q))
    return BoundaryChart(theory="mechanics", space_dim=0, tangential=(),
                         fields=(ChartField("q", ((),)), ChartField("v", ((),))),
                         alpha=alpha, momenta=(), constraints=(), surface=(),
                         hamiltonian=H)


# ---------------------------------------------------------------------------
# length functional
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _length() -> TheorySpec:
    fields = (FieldDecl("q", internal=1),)
    base = TheorySpec(name="length", dim=1, coords=("t",), transversal=0,
                      fields=fields, vdim=3)
    L = ex.parse("sqrt(q[0]'^2 + q[1]'^2 + q[2]'^2)", base.context())
    return TheorySpec(name="length", dim=1, coords=("t",), transversal=0,
                      fields=fields, lagrangian=L, vdim=3, boundary_side=1)


def _length_chart(t: TheorySpec) -> BoundaryChart:
    umeta = SymbolMeta(excluded=frozenset({0}))
    qmeta = SymbolMeta(excluded=frozenset({0}))
    u = [JetVar("u", (i,), (), umeta) for i in range(3)]
    q0 = [JetVar("q0", (i,), (), umeta) for i in range(3)]
    speed = ex.sqrt(ex.esum(Expr.var(w) ** 2 for w in q0))
    momenta = tuple((("u", (i,)), Expr.var(q0[i]) * speed ** (-1)) for i in range(3))
    alpha = LocalVarForm(1, {(JetVar("q", (i,), (), qmeta),): Expr.var(u[i]) for i in range(3)})
    surface = (ex.esum(Expr.var(w) ** 2 for w in u) - 1,)
    return BoundaryChart(theory="length", space_dim=0, tangential=(),
                         fields=(ChartField("q", tuple((i,) for i in range(3))),
                                 ChartField("u", tuple((i,) for i in range(3)))),
                         alpha=alpha, momenta=momenta, constraints=(), surface=surface,
                         hamiltonian=Expr.const(0))


# ---------------------------------------------------------------------------
# scalar field (split metric; h symbolic, bound numerically on the lattice)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _scalar(d: int = 2) -> TheorySpec:
    coords = tuple(f"x{i}" for i in range(d))
    fields = (FieldDecl("phi"),)
    backgrounds = (BackgroundDecl("hinv", base=2, time_independent=True),
                   BackgroundDecl("rh", time_independent=True, positive=True))
    tang = tuple(range(1, d))
    phi = JetVar("phi", (), ())
    rh = Expr.var(JetVar("rh", (), (), SymbolMeta(background=True, excluded=frozenset({0}), positive=True)))
    hv = lambda i, j: Expr.var(JetVar("hinv", (min(i, j), max(i, j)), (),
                                      SymbolMeta(background=True, excluded=frozenset({0}))))
    dphi = lambda mu: Expr.var(JetVar("phi", (), (mu,)))
    kinetic = -dphi(0) ** 2
    spatial = ex.esum(hv(i, j) * dphi(i) * dphi(j) for i in tang for j in tang)
    L = Expr.const(Fraction(1, 2)) * rh * (kinetic + spatial)
    return TheorySpec(name="scalar", dim=d, coords=coords, transversal=0,
                      fields=fields, backgrounds=backgrounds, lagrangian=L,
                      boundary_side=-1)


def _scalar_chart(t: TheorySpec) -> BoundaryChart:
    d = t.dim
    tang = t.tangential()
    restr = frozenset({0})
    phi = JetVar("phi", (), (), SymbolMeta(excluded=restr))
    phi0 = JetVar("phi0", (), (), SymbolMeta(excluded=restr))
    rh = Expr.var(JetVar("rh", (), (), SymbolMeta(background=True, excluded=restr, positive=True)))
    alpha = LocalVarForm(1, {(phi,): Expr.var(phi0) * rh})
    hv = lambda i, j: Expr.var(JetVar("hinv", (min(i, j), max(i, j)), (),
                                      SymbolMeta(background=True, excluded=restr)))
    H = Expr.const(Fraction(1, 2)) * rh * (
        Expr.var(phi0) ** 2
        + ex.esum(hv(i, j) * Expr.var(JetVar("phi", (), (i,), SymbolMeta(excluded=restr)))
                  * Expr.var(JetVar("phi", (), (j,), SymbolMeta(excluded=restr)))
                  for i in tang for j in tang))
    return BoundaryChart(theory="scalar", space_dim=d - 1, tangential=tang,
                         fields=(ChartField("phi", ((),)), ChartField("phi0", ((),))),
                         alpha=alpha, momenta=(), constraints=(), surface=(),
                         hamiltonian=H)


# ---------------------------------------------------------------------------
# electromagnetism (split metric, d = 4 by default)
# ---------------------------------------------------------------------------

def _em_F(mu: int, nu: int) -> Expr:
    A = lambda rho, deriv=(): Expr.var(JetVar("A", (rho,), deriv))
    return A(nu, (mu,)) - A(mu, (nu,))


@lru_cache(maxsize=None)
def _em(d: int = 4) -> TheorySpec:
    coords = tuple(f"x{i}" for i in range(d))
    fields = (FieldDecl("A", base=1),)
    backgrounds = (BackgroundDecl("hinv", base=2, time_independent=True),
                   BackgroundDecl("rh", time_independent=True, positive=True))
    tang = tuple(range(1, d))
    rh = Expr.var(JetVar("rh", (), (), SymbolMeta(background=True, excluded=frozenset({0}), positive=True)))
    hv = lambda i, j: Expr.var(JetVar("hinv", (min(i, j), max(i, j)), (),
                                      SymbolMeta(background=True, excluded=frozenset({0}))))
    # 1/4 g^{mu nu} g^{rho sigma} F_{mu rho} F_{nu sigma} sqrt(det h),
    # with the split metric g = -(dx0)^2 + h: electric part carries g^{00} = -1.
    electric = ex.esum(hv(i, j) * _em_F(0, i) * _em_F(0, j) for i in tang for j in tang)
    magnetic = ex.esum(hv(i, j) * hv(k, l) * _em_F(i, k) * _em_F(j, l)
                       for i in tang for j in tang for k in tang for l in tang)
    L = rh * (Expr.const(Fraction(-1, 2)) * electric + Expr.const(Fraction(1, 4)) * magnetic)
    return TheorySpec(name="em", dim=d, coords=coords, transversal=0, fields=fields,
                      backgrounds=backgrounds, lagrangian=L, boundary_side=-1)


def _em_chart(t: TheorySpec) -> BoundaryChart:
    d = t.dim
    tang = t.tangential()
    restr = frozenset({0})
    meta = SymbolMeta(excluded=restr)
    A = lambda i, deriv=(): Expr.var(JetVar("A", (i,), deriv, meta))
    F0 = lambda j, deriv=(): Expr.var(JetVar("F0", (j,), deriv, meta))
    rh = Expr.var(JetVar("rh", (), (), SymbolMeta(background=True, excluded=restr, positive=True)))
    hv = lambda i, j: Expr.var(JetVar("hinv", (min(i, j), max(i, j)), (),
                                      SymbolMeta(background=True, excluded=restr)))
    # momenta: F0_j = (d/dx0 A_j)| - d_j A_0|
    momenta = tuple((("F0", (j,)),
                     Expr.var(JetVar("A0", (j,), (), meta)) - Expr.var(JetVar("A", (0,), (j,), meta)))
                    for j in tang)
    alpha = LocalVarForm(1, {(JetVar("A", (j,), (), meta),):
                             ex.esum(hv(i, j) * F0(i) for i in tang) * rh for j in tang})
    gauss = ex.esum(ex.total_derivative(hv(i, j) * F0(j) * rh, i, t.jet_order + 1)
                    for i in tang for j in tang)
    H = Expr.const(Fraction(1, 2)) * rh * ex.esum(hv(i, j) * F0(i) * F0(j) for i in tang for j in tang) \
        + Expr.const(Fraction(1, 4)) * rh * ex.esum(
            hv(i, j) * hv(k, l)
            * (Expr.var(JetVar("A", (k,), (i,), meta)) - Expr.var(JetVar("A", (i,), (k,), meta)))
            * (Expr.var(JetVar("A", (l,), (j,), meta)) - Expr.var(JetVar("A", (j,), (l,), meta)))
            for i in tang for j in tang for k in tang for l in tang)
    return BoundaryChart(theory="em", space_dim=d - 1, tangential=tang,
                         fields=(ChartField("A", tuple((j,) for j in tang)),
                                 ChartField("F0", tuple((j,) for j in tang))),
                         alpha=alpha, momenta=momenta,
                         constraints=(("gauss", gauss),), surface=(),
                         hamiltonian=H)


# ---------------------------------------------------------------------------
# coframe (first-order) gravity, d = 4
# ---------------------------------------------------------------------------

def pc_evar(a: int, mu: int, deriv=()) -> Expr:
    return Expr.var(JetVar("e", (a, mu), deriv))


def pc_omega_comp(a: int, b: int, mu: int, deriv=()) -> Expr:
    """omega^{ab}_mu with the antisymmetric pair stored increasing."""
    if a == b:
        return ex.ZERO
    if a < b:
        return Expr.var(JetVar("omega", (a, b, mu), deriv))
    return -Expr.var(JetVar("omega", (b, a, mu), deriv))


def pc_curvature_expr(c: int, d_: int, rho: int, sigma: int) -> Expr:
    """F^{cd}_{rho sigma} = d_rho omega^{cd}_sigma - d_sigma omega^{cd}_rho
    + eta_ef (omega^{ce}_rho omega^{fd}_sigma - omega^{ce}_sigma omega^{fd}_rho)."""
    terms = [pc_omega_comp(c, d_, sigma, (rho,)), -pc_omega_comp(c, d_, rho, (sigma,))]
    for eidx in range(4):
        eta = ETA_DIAG[eidx]
        terms.append(Expr.const(eta) * pc_omega_comp(c, eidx, rho) * pc_omega_comp(eidx, d_, sigma))
        terms.append(Expr.const(-eta) * pc_omega_comp(c, eidx, sigma) * pc_omega_comp(eidx, d_, rho))
    return ex.esum(terms)


@lru_cache(maxsize=None)
def _pc4() -> TheorySpec:
    fields = (FieldDecl("e", base=1, internal=1),
              FieldDecl("omega", base=1, internal=2, antisym=True))
    backgrounds = (BackgroundDecl("Lam", constant=True),)
    lam = Expr.var(JetVar("Lam", (), (), SymbolMeta(background=True, constant=True)))
    terms = []
    for (a, b, c, d_), si in eps4():
        for (mu, nu, rho, sigma), sm in eps4():
            s = si * sm
            ee = pc_evar(a, mu) * pc_evar(b, nu)
            terms.append(Expr.const(Fraction(s, 2)) * ee * pc_curvature_expr(c, d_, rho, sigma))
            terms.append(Expr.const(Fraction(s, 24)) * lam * ee * pc_evar(c, rho) * pc_evar(d_, sigma))
    L = ex.esum(terms)
    return TheorySpec(name="pc4", dim=4, coords=("x0", "x1", "x2", "x3"), transversal=0,
                      fields=fields, backgrounds=backgrounds, lagrangian=L,
                      jet_order=3, boundary_side=1)


def _pc4_chart(t: TheorySpec) -> BoundaryChart:
    """Boundary chart of coframe gravity: the tangential coframe legs and the
    tangential connection components.

    No momentum substitution happens here (the transversal field components
    simply drop out of the boundary density), so the chart's boundary 1-form
    and constraint densities are the restricted pipeline outputs themselves:
    the orientation-contracted ``e e delta(omega)`` density, the torsion
    densities (named P, one per internal antisymmetric pair), and the
    curvature-plus-cosmological densities (named T, one per internal index).
    The chart coordinates still carry the six-per-point kernel of the 2-form
    (connection shifts annihilated by the coframe); the lattice reports it as
    kernel data rather than quotienting.
    """
    from .calc_var import constraint_extract
    split = derived_split("pc4")
    tang = (1, 2, 3)
    e_comps = tuple((a, i) for a in range(4) for i in tang)
    om_comps = tuple((a, b, i) for a in range(4) for b in range(a + 1, 4) for i in tang)
    constraints = []
    for name, density in constraint_extract(t, split):
        if name.startswith("omega"):
            a, b, _mu = _parse_comp(name)
            constraints.append((f"P[{a},{b}]", density))
        else:
            a, _mu = _parse_comp(name)
            constraints.append((f"T[{a}]", density))
    return BoundaryChart(theory="pc4", space_dim=3, tangential=tang,
                         fields=(ChartField("e", e_comps), ChartField("omega", om_comps)),
                         alpha=split.alpha, momenta=(), constraints=tuple(constraints),
                         surface=(), hamiltonian=None)


def _parse_comp(name: str) -> tuple:
    inner = name[name.index("[") + 1:name.index("]")]
    return tuple(int(x) for x in inner.split(","))


# ---------------------------------------------------------------------------
# public accessors
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def golden(name: str) -> dict:
    """The stored golden record of a builtin theory.

    Records hold the expected canonical renderings of the derivation (field
    equations, boundary 1- and 2-forms, constraints), the kernel data, and
    the lattice targets with their tolerances; entries are tagged with their
    provenance in the ``notes`` field.  Every expected expression parses and
    re-normalizes to itself (checked by the test suite).
    """
    if name not in THEORY_NAMES:
        raise KeyError(f"unknown builtin theory {name!r}")
    import importlib.resources as res
    path = res.files("ktphase").joinpath(f"golden/{name}.json")
    import json
    return json.loads(path.read_text(encoding="utf-8"))


def builtin(name: str, **kwargs) -> TheorySpec:
    """One of the built-in theories, fully populated."""
    if name == "mechanics":
        return _mechanics()
    if name == "length":
        return _length()
    if name == "scalar":
        return _scalar(kwargs.get("d", 2))
    if name == "em":
        return _em(kwargs.get("d", 4))
    if name == "pc4":
        return _pc4()
    raise KeyError(f"unknown builtin theory {name!r}")


@lru_cache(maxsize=None)
def derived_split(name: str) -> BoundarySplit:
    t = builtin(name)
    return ibp_split(variation(t), t)


@lru_cache(maxsize=None)
def chart(name: str) -> BoundaryChart:
    t = builtin(name)
    if name == "mechanics":
        return _mechanics_chart(t)
    if name == "length":
        return _length_chart(t)
    if name == "scalar":
        return _scalar_chart(t)
    if name == "em":
        return _em_chart(t)
    if name == "pc4":
        return _pc4_chart(t)
    raise KeyError(name)


def flat_metric_bindings(t: TheorySpec) -> dict:
    """Numeric bindings for the split-metric backgrounds: flat h."""
    out = {}
    for i in t.tangential():
        for j in t.tangential():
            if i <= j:
                out[("hinv", (i, j))] = 1.0 if i == j else 0.0
    out["rh"] = 1.0
    return out


# ---------------------------------------------------------------------------
# Smeared constraint families for the lattice backend
# ---------------------------------------------------------------------------

# Overall signs of the smeared constraint functionals relative to the
# extracted densities, pinned numerically so the hamiltonian vector fields
# come out in their standard form: the internal-rotation generator acts on
# the coframe as +c.e, and the curvature generator moves it by +d_omega(mu)
# on the constraint surface.
PC_P_SIGN = -1
PC_T_SIGN = 1


def constraint_set(name: str) -> ConstraintSet:
    """Smeared constraint functionals of a builtin theory.

    For electromagnetism the generator is smeared in the integrated-by-parts
    form (gradient of the smearing against the electric flux), which equals
    minus the site sum of the smeared Gauss density exactly, by the discrete
    summation-by-parts identity of the centered stencils.
    """
    if name in ("mechanics", "length", "scalar"):
        return ConstraintSet(())
    if name == "em":
        t = builtin("em")
        tang = t.tangential()
        restr = frozenset({0})
        meta = SymbolMeta(excluded=restr)
        bmeta = SymbolMeta(background=True, excluded=restr)
        lam = lambda deriv: Expr.var(JetVar("lam", (), deriv, bmeta))
        hv = lambda i, j: Expr.var(JetVar("hinv", (min(i, j), max(i, j)), (), bmeta))
        rh = Expr.var(JetVar("rh", (), (), SymbolMeta(background=True, excluded=restr, positive=True)))
        F0 = lambda j: Expr.var(JetVar("F0", (j,), (), meta))
        density = ex.esum(lam((i,)) * hv(i, j) * F0(j) for i in tang for j in tang) * rh
        return ConstraintSet((SmearedConstraint("J", density, (("lam", ((),)),)),))
    if name == "pc4":
        ch = chart("pc4")
        cons = dict(ch.constraints)
        smeta = SymbolMeta(background=True)
        pair_comps = tuple((a, b) for a in range(4) for b in range(a + 1, 4))
        p_density = ex.esum(Expr.var(JetVar("c", (a, b), (), smeta)) * cons[f"P[{a},{b}]"]
                            for a, b in pair_comps) * PC_P_SIGN
        t_density = ex.esum(Expr.var(JetVar("mu", (a,), (), smeta)) * cons[f"T[{a}]"]
                            for a in range(4)) * PC_T_SIGN
        h_density = Expr.var(JetVar("lam", (), (), smeta)) * cons["T[0]"] * PC_T_SIGN
        emeta = SymbolMeta(excluded=frozenset({0}))
        pxi_density = ex.esum(Expr.var(JetVar("xi", (i,), (), smeta))
                              * Expr.var(JetVar("e", (a, i), (), emeta)) * cons[f"T[{a}]"]
                              for a in range(4) for i in (1, 2, 3)) * PC_T_SIGN
        mu_comps = tuple((a,) for a in range(4))
        xi_comps = tuple((i,) for i in (1, 2, 3))
        return ConstraintSet((
            SmearedConstraint("P", p_density, (("c", pair_comps),)),
            SmearedConstraint("T", t_density, (("mu", mu_comps),)),
            SmearedConstraint("H", h_density, (("lam", ((),)),)),
            SmearedConstraint("Pxi", pxi_density, (("xi", xi_comps),)),
        ))
    raise KeyError(name)


def pc_internal_rotation(c_arrays: dict, e_state: np.ndarray) -> np.ndarray:
    """(c . e)^a_i = eta_{rs} c^{ar} e^s_i for an antisymmetric smearing c.

    ``c_arrays`` maps ("c", (a,b)) with a<b to site arrays; ``e_state`` has
    shape (*grid, 12) with component order (a, i) lexicographic.  Returns the
    same layout as the coframe block.
    """
    shape = e_state.shape[:-1]
    e = e_state.reshape(shape + (4, 3))
    cmat = np.zeros(shape + (4, 4))
    for (sym, comp), arr in c_arrays.items():
        if sym != "c":
            continue
        a, b = comp
        cmat[..., a, b] = arr
        cmat[..., b, a] = -arr
    eta = np.array(ETA_DIAG, dtype=float)
    out = np.einsum("...ar,r,...ri->...ai", cmat, eta, e)
    return out.reshape(shape + (12,))


_PC_OM_COMPS = tuple((a, b, i) for a in range(4) for b in range(a + 1, 4) for i in (1, 2, 3))
_PC_IPAIRS = tuple((a, b) for a in range(4) for b in range(a + 1, 4))
_PC_SPAIRS = ((0, 1), (0, 2), (1, 2))


def pc_torsion_matrix(E: np.ndarray) -> np.ndarray:
    """Single-site torsion as a linear map of the connection components:
    returns M with (d_omega e)^a_{ij} = M[a,i,j,:] . omega_flat  (axes i,j are
    the three tangential directions; no derivative term at a single site)."""
    eta = np.array(ETA_DIAG, float)
    M = np.zeros((4, 3, 3, 18))
    for idx, (a, b, i) in enumerate(_PC_OM_COMPS):
        for j in range(3):
            M[a, i - 1, j, idx] += eta[b] * E[b, j]
            M[a, j, i - 1, idx] -= eta[b] * E[b, j]
            M[b, i - 1, j, idx] -= eta[a] * E[a, j]
            M[b, j, i - 1, idx] += eta[a] * E[a, j]
    return M


def pc_structural_rows(E: np.ndarray, epsv=None) -> np.ndarray:
    """The structural constraint at a single site, as linear conditions on the
    connection.

    The constraint demands ``eps ^ (d_omega e) = e ^ sigma`` for some sigma;
    eliminating sigma leaves the projection of ``eps ^ torsion`` onto the
    cokernel of ``sigma -> e ^ sigma`` (six conditions for a metric
    nondegenerate coframe).  Returns a (6, 18) matrix R with R . omega = 0 as
    the condition.
    """
    if epsv is None:
        epsv = np.array([1.0, 0.0, 0.0, 0.0])
    M = pc_torsion_matrix(E)
    L = np.zeros((6, 3, 18))
    for pi, (c, a) in enumerate(_PC_IPAIRS):
        for si, (i, j) in enumerate(_PC_SPAIRS):
            L[pi, si, :] = epsv[c] * M[a, i, j, :] - epsv[a] * M[c, i, j, :]
    L = L.reshape(18, 18)
    S = np.zeros((6, 3, 4, 3))
    for pi, (a, b) in enumerate(_PC_IPAIRS):
        for si, (i, j) in enumerate(_PC_SPAIRS):
            S[pi, si, b, j] += E[a, i]
            S[pi, si, b, i] -= E[a, j]
            S[pi, si, a, j] -= E[b, i]
            S[pi, si, a, i] += E[b, j]
    S = S.reshape(18, 12)
    U, sv, _ = np.linalg.svd(S)
    if sv[-1] <= 1e-10 * sv[0]:
        raise CheckFailure("sigma-map degenerate: coframe not metric nondegenerate")
    return U[:, 12:].T @ L


def pc_random_coframe(rng: np.random.Generator, det_min=0.05, cond_max=50.0) -> np.ndarray:
    """Rejection-sample a metric-nondegenerate coframe block E[a, i]."""
    eta = np.array(ETA_DIAG, float)
    while True:
        E = rng.standard_normal((4, 3))
        g = np.einsum("ai,a,aj->ij", E, eta, E)
        if abs(np.linalg.det(g)) > det_min and np.linalg.cond(g) < cond_max:
            return E


def pc_on_surface_state(model, rng: np.random.Generator, structural: bool = True,
                        tol: float = 1e-12, max_iter: int = 80) -> dict:
    """A random single-site state of coframe gravity on the Cauchy surface.

    Draws a metric-nondegenerate coframe, then Newton-solves for the
    connection: the six torsion constraints, the four curvature constraints,
    and (by default) the six structural-constraint conditions that select the
    unique connection representative.  Without the structural conditions the
    curvature family's hamiltonian vector fields do not exist (its kernel
    invariance genuinely fails), so ``structural=True`` is what "on the
    constraint surface" means for bracket checks.
    """
    from .lattice import functional_gradient

    ch = model.chart
    cons = dict(ch.constraints)
    names = [f"P[{a},{b}]" for a, b in _PC_IPAIRS] + [f"T[{a}]" for a in range(4)]
    if model.grid.nsites != 1:
        raise ValueError("on-surface sampling is implemented for single-site grids")
    om_slots = [i for i, (f, _) in enumerate(model.slots) if f == "omega"]
    E = pc_random_coframe(rng)
    state = model.random_state(rng)
    state["e"] = E.reshape(state["e"].shape)
    state["omega"] *= 0.3
    SR = pc_structural_rows(E) if structural else np.zeros((0, 18))
    w = model.grid.cell_volume()
    residual = np.inf
    for _ in range(max_iter):
        r = np.concatenate([
            np.array([float(np.asarray(model.evaluate(cons[n], state)).reshape(())) for n in names]),
            SR @ state["omega"].reshape(18)])
        residual = float(np.max(np.abs(r)))
        if residual < tol:
            return state
        J = np.concatenate([
            np.array([functional_gradient(model, cons[n], state).reshape(-1)[om_slots] / w
                      for n in names]),
            SR], axis=0)
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        vec = model.state_to_vector(state)
        vec[0, om_slots] += step
        state = model.vector_to_state(vec)
    raise CheckFailure(f"constraint solve did not converge: residual {residual:.2e}")


def pc_surface_violation(model, state: dict, structural: bool = True) -> float:
    """Max constraint-density violation of a single-site state (including the
    structural conditions when requested)."""
    cons = dict(model.chart.constraints)
    vals = [abs(float(np.asarray(model.evaluate(d, state)).reshape(()))) for d in cons.values()]
    if structural:
        E = state["e"].reshape(4, 3)
        vals.extend(np.abs(pc_structural_rows(E) @ state["omega"].reshape(18)))
    return max(vals)
