"""Variational pipeline: variation, integration by parts, boundary data.

Given a declarative theory (coordinates, fields, backgrounds, Lagrangian
density), this module computes the variation of the density, splits it by
integration by parts into field-equation densities plus boundary terms,
applies the vertical differential, restricts to the boundary slice, and
extracts the non-evolutionary (constraint) densities.

Conventions fixed here (recorded because the sign choices are not forced by
the mathematics alone):

* The split is written ``variation = -sum(el_A * delta(phi_A))
  + sum_i D_i(div_i) + D_n(alpha_density)``, so the reported ``el`` densities
  match the classical equation-of-motion form (e.g. ``m q'' + V'(q)``).
* ``alpha_density`` is the density whose transversal total derivative appears
  in the split, i.e. the boundary term at the upper end of the transversal
  coordinate.  Each theory declares which boundary copy its canonical
  boundary 1-form lives on via ``boundary_side`` (+1 upper / outgoing,
  -1 lower / incoming); the returned ``alpha`` is the restricted density times
  that sign.
* Integration by parts peels tangential derivative indices before the
  transversal one, so for first-order Lagrangians alpha carries only
  first-order transversal jet data.

All values are immutable; every function is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from itertools import product

from . import expr as ex
from .errors import CheckFailure, DegreeError, ParseError
from .expr import Context, Expr, JetVar, SymbolMeta

__all__ = [
    "FieldDecl",
    "BackgroundDecl",
    "TheorySpec",
    "LocalVarForm",
    "BoundarySplit",
    "BoundaryChart",
    "variation",
    "ibp_split",
    "vertical_delta",
    "boundary_restrict",
    "constraint_extract",
    "form_total_derivative",
    "reconstruction_defect",
    "verify_chart",
]


@dataclass(frozen=True)
class FieldDecl:
    """A dynamical field: ``internal`` indices range over ``vdim`` of the
    theory, ``base`` indices over the coordinates.  ``antisym`` marks an
    antisymmetric internal index pair (stored with strictly increasing
    indices)."""
    name: str
    base: int = 0
    internal: int = 0
    antisym: bool = False
    positive: bool = False


@dataclass(frozen=True)
class BackgroundDecl:
    """A non-varied symbol.  ``base`` indices range over the coordinates;
    ``constant`` kills all total derivatives, ``time_independent`` only the
    transversal one."""
    name: str
    base: int = 0
    constant: bool = False
    time_independent: bool = False
    positive: bool = False


@dataclass(frozen=True)
class TheorySpec:
    """Declarative description of a Lagrangian field theory.

    The Lagrangian is an expression over the declared symbols, fully expanded
    in components.  ``vdim`` is the size of the internal index range (defaults
    to the base dimension).  ``boundary_side`` records which boundary copy the
    theory's canonical Noether term refers to.
    """
    name: str
    dim: int
    coords: tuple
    transversal: int
    fields: tuple
    backgrounds: tuple = ()
    functions: tuple = ()
    lagrangian: Expr = ex.ZERO
    jet_order: int = ex.DEFAULT_MAX_JET_ORDER
    vdim: int = 0
    boundary_side: int = 1
    boundary_names: tuple = ()          # ((field, transversal order, symbol name), ...)
    metadata: dict = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0 <= self.transversal < self.dim):
            raise ParseError(f"transversal index {self.transversal} out of range")
        if self.vdim == 0:
            object.__setattr__(self, "vdim", self.dim)
        if len(self.coords) != self.dim:
            raise ParseError(f"{self.dim} coordinates expected, got {len(self.coords)}")
        names = [f.name for f in self.fields] + [b.name for b in self.backgrounds] + list(self.functions)
        if len(set(names)) != len(names):
            raise ParseError("duplicate symbol declaration")
        declared = self._declared_names()
        for v in self.lagrangian.jet_vars():
            if v.field not in declared:
                raise ParseError(f"Lagrangian uses undeclared symbol {v.field!r}")
            if v.order() > self.jet_order:
                raise ParseError(f"Lagrangian jet order exceeds declared maximum {self.jet_order}")

    def _declared_names(self):
        return {f.name for f in self.fields} | {b.name for b in self.backgrounds}

    def tangential(self) -> tuple:
        return tuple(i for i in range(self.dim) if i != self.transversal)

    def renames(self) -> dict:
        return {(f, k): name for f, k, name in self.boundary_names}

    def field_meta(self, decl: FieldDecl) -> SymbolMeta:
        return SymbolMeta(positive=decl.positive)

    def background_meta(self, decl: BackgroundDecl) -> SymbolMeta:
        excluded = frozenset({self.transversal}) if decl.time_independent else frozenset()
        return SymbolMeta(background=True, constant=decl.constant,
                          excluded=excluded, positive=decl.positive)

    def index_sizes(self, decl) -> tuple:
        if isinstance(decl, FieldDecl):
            return (self.vdim,) * decl.internal + (self.dim,) * decl.base
        return (self.dim,) * decl.base

    def components(self, decl) -> list:
        """All stored component tuples of a declaration, in lexicographic order."""
        sizes = self.index_sizes(decl)
        if not sizes:
            return [()]
        comps = []
        for tup in product(*(range(s) for s in sizes)):
            if isinstance(decl, FieldDecl) and decl.antisym:
                if not tup[0] < tup[1]:
                    continue
            comps.append(tup)
        return comps

    def context(self) -> Context:
        ctx = Context(coords=self.coords, transversal=self.transversal)
        for f in self.fields:
            ctx.declare_field(f.name, self.index_sizes(f), self.field_meta(f))
        for b in self.backgrounds:
            ctx.declare_field(b.name, self.index_sizes(b), self.background_meta(b))
        for fn in self.functions:
            ctx.declare_function(fn)
        ctx.declare_function("sqrt")
        return ctx

    def var(self, name: str, comp=(), deriv=()) -> JetVar:
        for f in self.fields:
            if f.name == name:
                return JetVar(name, comp, deriv, self.field_meta(f))
        for b in self.backgrounds:
            if b.name == name:
                return JetVar(name, comp, deriv, self.background_meta(b))
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Local variational forms
# ---------------------------------------------------------------------------

def _sort_gens(gens):
    """Sort a generator tuple, returning (sorted tuple, sign); None if repeated."""
    if len(gens) < 2:
        return gens, 1
    a, b = gens
    if a == b:
        return None, 0
    if b < a:
        return (b, a), -1
    return gens, 1


class LocalVarForm:
    """A local form of vertical degree 0, 1, or 2.

    Terms map a sorted tuple of vertical generators (jet variables under the
    vertical differential) to an expression coefficient; antisymmetry of the
    wedge is absorbed into the coefficients during normalization.
    """

    __slots__ = ("degree", "terms")

    def __init__(self, degree: int, terms=None):
        if degree not in (0, 1, 2):
            raise DegreeError(f"vertical degree {degree} out of range")
        acc = {}
        for gens, coeff in (terms or {}).items():
            gens = tuple(gens)
            if len(gens) != degree:
                raise DegreeError("generator count does not match form degree")
            gens, sign = _sort_gens(gens)
            if sign == 0 or coeff.is_zero():
                continue
            c = coeff if sign == 1 else -coeff
            if gens in acc:
                acc[gens] = acc[gens] + c
            else:
                acc[gens] = c
        self.degree = degree
        self.terms = tuple(sorted(((g, c) for g, c in acc.items() if not c.is_zero()),
                                  key=lambda t: tuple(v.key for v in t[0])))

    @staticmethod
    def zero(degree: int) -> "LocalVarForm":
        return LocalVarForm(degree, {})

    @staticmethod
    def scalar(coeff: Expr) -> "LocalVarForm":
        return LocalVarForm(0, {(): coeff})

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other):
        if self.degree != other.degree:
            raise DegreeError("cannot add forms of different degree")
        acc = {g: c for g, c in self.terms}
        for g, c in other.terms:
            acc[g] = acc[g] + c if g in acc else c
        return LocalVarForm(self.degree, acc)

    def __neg__(self):
        return LocalVarForm(self.degree, {g: -c for g, c in self.terms})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, factor) -> "LocalVarForm":
        factor = Expr._coerce(factor)
        return LocalVarForm(self.degree, {g: c * factor for g, c in self.terms})

    def map_coeffs(self, f) -> "LocalVarForm":
        return LocalVarForm(self.degree, {g: f(c) for g, c in self.terms})

    def __eq__(self, other):
        return isinstance(other, LocalVarForm) and self.degree == other.degree and self.terms == other.terms

    def __hash__(self):
        return hash((self.degree, self.terms))

    def jet_vars(self) -> list:
        seen = {}
        for gens, coeff in self.terms:
            for v in gens:
                seen.setdefault(v.key, v)
            for v in coeff.jet_vars():
                seen.setdefault(v.key, v)
        return sorted(seen.values())

    def to_text(self, ctx: Context | None = None) -> str:
        if not self.terms:
            return "0"
        parts = []
        for gens, coeff in self.terms:
            cs = ex.to_text(coeff, ctx)
            if len(coeff.terms) > 1 or cs.startswith("-"):
                cs = "(" + cs + ")"
            gs = "^".join("δ(%s)" % ex._var_text(v, ctx) for v in gens)
            parts.append((cs + " " + gs).strip() if gens else cs)
        return " + ".join(parts)

    def __repr__(self):
        return f"LocalVarForm({self.degree}, {self.to_text()})"


def vertical_delta(v: LocalVarForm) -> LocalVarForm:
    """Vertical exterior derivative; nilpotent, skips background symbols."""
    if v.degree >= 2:
        raise DegreeError("vertical differential of a degree-2 form would exceed degree 2")
    acc = {}
    for gens, coeff in v.terms:
        for w in coeff.jet_vars():
            if w.meta.background:
                continue
            d = ex.diff_jet(coeff, w)
            if d.is_zero():
                continue
            key = (w,) + gens
            if key in acc:
                acc[key] = acc[key] + d
            else:
                acc[key] = d
    return LocalVarForm(v.degree + 1, acc)


def form_total_derivative(v: LocalVarForm, coord: int, max_order: int = ex.DEFAULT_MAX_JET_ORDER) -> LocalVarForm:
    """Total derivative of a local form: acts on coefficients and commutes
    past the vertical generators (bumping their jet index)."""
    acc = {}

    def _acc(gens, coeff):
        if gens is None or coeff.is_zero():
            return
        if gens in acc:
            acc[gens] = acc[gens] + coeff
        else:
            acc[gens] = coeff

    for gens, coeff in v.terms:
        _acc(gens, ex.total_derivative(coeff, coord, max_order))
        for i, w in enumerate(gens):
            if not w.meta.depends_on(coord):
                continue
            bumped = gens[:i] + (w.with_deriv(coord, max_order),) + gens[i + 1:]
            sgens, sign = _sort_gens(bumped)
            _acc(sgens, coeff if sign == 1 else -coeff)
    return LocalVarForm(v.degree, acc)


# ---------------------------------------------------------------------------
# Variation and integration by parts
# ---------------------------------------------------------------------------

def variation(t: TheorySpec) -> LocalVarForm:
    """The vertical differential of the Lagrangian density.

    Background symbols are not varied; the result is the degree-1 form
    ``sum_v dL/d(jet v) delta(v)`` over all dynamical jets in L.
    """
    return vertical_delta(LocalVarForm.scalar(t.lagrangian))


@dataclass(frozen=True)
class BoundarySplit:
    """Outcome of integrating the variation by parts.

    ``el`` maps underived field generators to equation-of-motion densities
    (sign convention in the module docstring).  ``alpha_density`` is the raw
    transversal boundary density (upper end); ``alpha`` is its boundary
    restriction times the theory's ``boundary_side``.  ``divergences`` records
    the dropped tangential total-divergence forms per coordinate, so the
    reconstruction identity stays checkable.
    """
    el: tuple                      # ((JetVar, Expr), ...)
    alpha: LocalVarForm
    alpha_density: LocalVarForm
    divergences: tuple             # ((coord, LocalVarForm), ...)
    side: int

    def el_dict(self) -> dict:
        return {v: e for v, e in self.el}


def ibp_split(v: LocalVarForm, t: TheorySpec) -> BoundarySplit:
    """Split a degree-1 variation into field equations plus boundary terms.

    Repeatedly peels one derivative index off each vertical generator,
    tangential indices first and the transversal index last.  The peeled-off
    pieces are total derivatives: tangential ones are recorded (they integrate
    to zero on a closed slice), the transversal one is the boundary density.
    """
    if v.degree != 1:
        raise DegreeError("ibp_split expects a degree-1 form")
    n = t.transversal
    el_acc: dict = {}
    div_acc: dict = {}
    alpha_acc: dict = {}
    queue = [(gens[0], coeff) for gens, coeff in v.terms]
    while queue:
        w, coeff = queue.pop()
        if coeff.is_zero():
            continue
        if not w.deriv:
            el_acc[w] = el_acc.get(w, ex.ZERO) + coeff
            continue
        tangential = [i for i in w.deriv if i != n]
        peel = tangential[-1] if tangential else n
        reduced = list(w.deriv)
        reduced.remove(peel)
        w2 = JetVar(w.field, w.comp, tuple(reduced), w.meta)
        target = alpha_acc if peel == n else div_acc.setdefault(peel, {})
        target[(w2,)] = target.get((w2,), ex.ZERO) + coeff
        queue.append((w2, -ex.total_derivative(coeff, peel, t.jet_order)))
    el = tuple(sorted(((w, -c) for w, c in el_acc.items() if not c.is_zero()), key=lambda p: p[0].key))
    alpha_density = LocalVarForm(1, alpha_acc)
    sorted_divs = tuple(sorted((i, LocalVarForm(1, terms)) for i, terms in div_acc.items()))
    restricted = boundary_restrict(alpha_density, t)
    alpha = restricted.scale(Expr.const(t.boundary_side))
    return BoundarySplit(el=el, alpha=alpha, alpha_density=alpha_density,
                         divergences=sorted_divs, side=t.boundary_side)


def reconstruction_defect(split: BoundarySplit, t: TheorySpec) -> LocalVarForm:
    """variation - [ -sum el*delta + sum D_i(div_i) + D_n(alpha_density) ].

    Zero (as a normal form) for every well-formed split; exercised by tests.
    """
    total = LocalVarForm(1, {(w,): -c for w, c in split.el})
    for i, form in split.divergences:
        total = total + form_total_derivative(form, i, t.jet_order + 1)
    total = total + form_total_derivative(split.alpha_density, t.transversal, t.jet_order + 1)
    return variation(t) - total


# ---------------------------------------------------------------------------
# Boundary restriction
# ---------------------------------------------------------------------------

def boundary_symbol_name(field: str, order: int, renames: dict | None = None) -> str:
    """Name of the independent boundary symbol for the order-``order``
    transversal jet of ``field`` (subscript-zero default: phi -> phi0)."""
    if renames and (field, order) in renames:
        return renames[(field, order)]
    return field + "0" * order


def _restrict_var(v: JetVar, t: TheorySpec, renames: dict | None) -> JetVar:
    n = t.transversal
    k = sum(1 for i in v.deriv if i == n)
    tang = tuple(i for i in v.deriv if i != n)
    name = boundary_symbol_name(v.field, k, renames) if k else v.field
    meta = SymbolMeta(background=v.meta.background, constant=v.meta.constant,
                      excluded=v.meta.excluded | {n}, positive=v.meta.positive and k == 0)
    return JetVar(name, v.comp, tang, meta)


def boundary_restrict(x, t: TheorySpec, renames: dict | None = None):
    """Restrict an expression or local form to the boundary slice.

    Each transversal jet of order k becomes an independent boundary symbol
    (named via ``renames``, the theory's ``boundary_names``, or the default
    suffix scheme); tangential jets survive unchanged, and every surviving
    symbol loses its transversal dependence.
    """
    if renames is None:
        renames = t.renames()
    f = lambda v: _restrict_var(v, t, renames)
    if isinstance(x, Expr):
        return ex.map_vars(x, f)
    if isinstance(x, LocalVarForm):
        return LocalVarForm(x.degree, {tuple(f(w) for w in gens): ex.map_vars(c, f)
                                       for gens, c in x.terms})
    raise TypeError(f"cannot restrict {type(x).__name__}")


# ---------------------------------------------------------------------------
# Constraint extraction
# ---------------------------------------------------------------------------

def _alpha_symbols(t: TheorySpec, split: BoundarySplit, renames=None) -> set:
    """Boundary symbols (field names) appearing in the restricted boundary
    density: the default chart of preboundary fields."""
    restricted = boundary_restrict(split.alpha_density, t, renames)
    syms = set()
    for gens, coeff in restricted.terms:
        for w in gens:
            syms.add(w.field)
        for w in coeff.jet_vars():
            if not w.meta.background:
                syms.add(w.field)
    return syms


def constraint_extract(t: TheorySpec, split: BoundarySplit | None = None, renames: dict | None = None) -> list:
    """Field equations that constrain boundary data instead of evolving it.

    An equation qualifies when its boundary restriction references only the
    boundary fields present in the restricted boundary density (plus their
    tangential jets and backgrounds) — i.e. no transversal jets beyond the
    declared boundary fields.  Returns ``(name, density on the slice)`` pairs.
    """
    if split is None:
        split = ibp_split(variation(t), t)
    allowed = _alpha_symbols(t, split, renames)
    out = []
    for w, density in split.el:
        restricted = boundary_restrict(density, t, renames)
        ok = True
        for u in restricted.jet_vars():
            if u.meta.background:
                continue
            if u.field not in allowed:
                ok = False
                break
        if ok:
            comp = "[" + ",".join(map(str, w.comp)) + "]" if w.comp else ""
            out.append((f"{w.field}{comp}", restricted))
    return out


# ---------------------------------------------------------------------------
# Boundary charts (declared reduction outcomes, verified against the pipeline)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartField:
    """One field of the reduced boundary chart: a name plus the list of
    component tuples realized on the lattice, in a fixed order."""
    name: str
    comps: tuple
    meta: SymbolMeta | None = None

    def __post_init__(self):
        if self.meta is None:
            object.__setattr__(self, "meta", SymbolMeta())

    def size(self) -> int:
        return len(self.comps)

    def var(self, comp=(), deriv=()) -> JetVar:
        return JetVar(self.name, comp, deriv, self.meta)


@dataclass(frozen=True)
class BoundaryChart:
    """Declared coordinates on the boundary phase space of a theory.

    Symbolic reduction of the preboundary space (inverting momenta, dropping
    pure-gauge directions) is out of scope for the pipeline, so each theory
    declares its reduced chart: the chart fields, the boundary 1-form and
    constraint densities written in them, the defining expressions of the
    momenta in preboundary symbols, and any algebraic surface the chart lives
    on.  ``verify_chart`` checks the declaration against the derived split
    exactly.
    """
    theory: str
    space_dim: int                      # dimension of the boundary slice
    fields: tuple                       # ChartField, lattice layout order
    alpha: LocalVarForm                 # over chart symbols
    tangential: tuple = ()              # theory coordinate indices of the slice axes
    momenta: tuple = ()                 # ((field, comp), defining Expr) pairs
    constraints: tuple = ()             # (name, Expr over chart symbols)
    surface: tuple = ()                 # algebraic chart constraints (Expr)
    hamiltonian: Expr | None = None

    def field_names(self) -> list:
        return [f.name for f in self.fields]

    def momenta_map(self) -> dict:
        return {key: img for key, img in self.momenta}


def verify_chart(chart: BoundaryChart, t: TheorySpec, split: BoundarySplit | None = None,
                 renames: dict | None = None) -> None:
    """Exact check that the declared chart reproduces the derived boundary data.

    Substituting the momenta definitions into the declared boundary 1-form
    must reproduce the restricted pipeline density (theory side applied); the
    declared constraint densities must likewise match the extracted ones.
    Raises CheckFailure on any mismatch.
    """
    if split is None:
        split = ibp_split(variation(t), t)
    images = chart.momenta_map()
    subst = lambda e: ex.substitute(e, images, t.jet_order + 1)
    declared_alpha = chart.alpha.map_coeffs(subst)
    declared_alpha = LocalVarForm(1, {tuple(_subst_gen(w, images) for w in gens): c
                                      for gens, c in declared_alpha.terms})
    if declared_alpha != split.alpha:
        raise CheckFailure(
            f"chart alpha for {chart.theory!r} does not match the derived boundary density:\n"
            f"  declared: {declared_alpha.to_text()}\n  derived:  {split.alpha.to_text()}")
    extracted = constraint_extract(t, split, renames)
    if len(extracted) != len(chart.constraints):
        raise CheckFailure(f"{chart.theory!r}: {len(chart.constraints)} declared constraints, "
                           f"{len(extracted)} extracted")
    for (name, declared), (ename, density) in zip(chart.constraints, extracted):
        lhs = subst(declared)
        if not (lhs - density).is_zero() and not (lhs + density).is_zero():
            raise CheckFailure(f"constraint {name!r} of {chart.theory!r} does not match "
                               f"extracted density {ename!r}")


def _subst_gen(w: JetVar, images: dict) -> JetVar:
    # Vertical generators of momenta never appear in declared alphas with a
    # nontrivial image (the chart is a coordinate system), so generators pass
    # through untouched.
    if (w.field, w.comp) in images:
        raise CheckFailure(f"chart alpha has a vertical generator {w.field}{w.comp} that is "
                           "itself a declared momentum; charts must use base coordinates there")
    return w
