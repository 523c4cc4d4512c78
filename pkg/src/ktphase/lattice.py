"""Numeric verification backend on a periodic lattice.

The boundary slice is discretized as a periodic grid; the fields of a
boundary chart become float arrays over sites.  The boundary 1-form is
discretized as a covector field on the flattened state space, its vertical
differential assembled as an antisymmetric matrix, and everything the
symbolic layer asserts (kernel dimensions, hamiltonian vector fields,
bracket values, conservation laws) is re-checked in floating point.

Discrete calculus: first derivatives are centered second-order differences.
On a periodic grid the centered difference operator is exactly
skew-symmetric, so the discrete divergence and gradient are negative
transposes of each other and the Gauss-law conservation below telescopes to
machine precision.  Axes of length 1 are permitted as degenerate (ultralocal)
directions: the centered difference along them is identically zero, which
realizes single-point and single-site toy models.

Determinism: assembly and sampling loops are plain vectorized numpy with a
fixed reduction order, so results are bit-identical for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import expr as ex
from .calc_var import BoundaryChart
from .errors import CFLError, CheckFailure
from .expr import Expr, JetVar

__all__ = [
    "LatticeGrid",
    "LatticeModel",
    "TwoFormMatrix",
    "SmearedConstraint",
    "ConstraintSet",
    "CoisotropyResult",
    "assemble_two_form",
    "two_form_rank",
    "functional_gradient",
    "hamiltonian_vector_field",
    "poisson_bracket",
    "evolve_em",
    "evolve_scalar",
    "symplectic_current_check",
    "coisotropy_check",
    "surface_tangent_basis",
    "divergence_free_em_data",
]

DEFAULT_RANK_TOL = 1e-8
DEFAULT_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class LatticeGrid:
    """Periodic grid over the boundary slice; ``shape`` is sites per axis.

    Up to three axes.  Each axis needs >= 4 sites for the centered stencils
    not to wrap onto themselves; length-1 axes are allowed and make the
    direction ultralocal (all derivatives vanish).  A 0-dimensional grid
    (empty shape) is a single point, used by the mechanics-type theories.
    """
    shape: tuple = ()
    spacing: float = 1.0

    def __post_init__(self):
        if len(self.shape) > 3:
            raise ValueError("at most three lattice axes")
        for n in self.shape:
            if n != 1 and n < 4:
                raise ValueError(f"axis with {n} sites: need >= 4 (or exactly 1 for ultralocal axes)")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def nsites(self):
        n = 1
        for s in self.shape:
            n *= s
        return n

    def cell_volume(self):
        return self.spacing ** self.ndim

    def diff(self, arr: np.ndarray, axis: int) -> np.ndarray:
        """Centered difference along a grid axis (exactly skew on the torus)."""
        if self.shape[axis] == 1:
            return np.zeros_like(arr)
        return (np.roll(arr, -1, axis=axis) - np.roll(arr, 1, axis=axis)) / (2.0 * self.spacing)

    def diff_transpose(self, arr: np.ndarray, axis: int) -> np.ndarray:
        return -self.diff(arr, axis)


class LatticeModel:
    """A boundary chart realized on a grid, with background bindings.

    ``bindings`` maps background symbol names to values: scalars, arrays of
    shape ``grid.shape`` (per component, keyed ``(name, comp)``), or arrays of
    shape ``grid.shape + comp_shape``.  ``functions`` maps ``(name, order)``
    to numpy-aware callables for opaque scalar functions.
    """

    def __init__(self, chart: BoundaryChart, grid: LatticeGrid, bindings=None, functions=None):
        if len(chart.tangential) != grid.ndim:
            raise ValueError(f"chart has {len(chart.tangential)} tangential directions, "
                             f"grid has {grid.ndim}")
        self.chart = chart
        self.grid = grid
        self.bindings = dict(bindings or {})
        self.functions = dict(functions or {})
        self.axis_of = {coord: i for i, coord in enumerate(chart.tangential)}
        self.slots = [(f.name, comp) for f in chart.fields for comp in f.comps]
        self.slot_index = {key: i for i, key in enumerate(self.slots)}
        self.nslots = len(self.slots)
        self.field_comps = {f.name: list(f.comps) for f in chart.fields}
        self._diff_cache = {}

    # -- state layout ---------------------------------------------------------

    def zero_state(self) -> dict:
        return {name: np.zeros(self.grid.shape + (len(comps),))
                for name, comps in self.field_comps.items()}

    def random_state(self, rng: np.random.Generator, scale=1.0) -> dict:
        return {name: scale * rng.standard_normal(self.grid.shape + (len(comps),))
                for name, comps in self.field_comps.items()}

    def check_state(self, state: dict) -> None:
        for name, comps in self.field_comps.items():
            want = self.grid.shape + (len(comps),)
            if name not in state or state[name].shape != want:
                got = state.get(name).shape if name in state else None
                raise ValueError(f"state field {name!r}: expected shape {want}, got {got}")

    def state_to_vector(self, state: dict) -> np.ndarray:
        """Flatten to shape (nsites, nslots): site-major, chart slot order."""
        self.check_state(state)
        cols = []
        for name, comps in self.field_comps.items():
            cols.append(state[name].reshape(self.grid.nsites, len(comps)))
        return np.concatenate(cols, axis=1)

    def vector_to_state(self, vec: np.ndarray) -> dict:
        vec = vec.reshape(self.grid.nsites, self.nslots)
        out = {}
        i = 0
        for name, comps in self.field_comps.items():
            n = len(comps)
            out[name] = vec[:, i:i + n].reshape(self.grid.shape + (n,))
            i += n
        return out

    # -- expression evaluation over sites --------------------------------------

    def _component_array(self, v: JetVar, state: dict, smear: dict) -> np.ndarray:
        name, comp = v.field, v.comp
        if name in self.field_comps:
            idx = self.field_comps[name].index(comp)
            base = state[name][..., idx]
        elif smear and (name, comp) in smear:
            base = smear[(name, comp)]
        elif (name, comp) in self.bindings:
            base = np.broadcast_to(np.asarray(self.bindings[(name, comp)], dtype=float),
                                   self.grid.shape)
        elif not comp and name in self.bindings:
            base = np.broadcast_to(np.asarray(self.bindings[name], dtype=float), self.grid.shape)
        else:
            raise KeyError(f"no lattice binding for symbol {name!r} component {comp}")
        base = np.asarray(base, dtype=float)
        for coord in v.deriv:
            base = self.grid.diff(base, self.axis_of[coord])
        return base

    def evaluate(self, e: Expr, state: dict, smear: dict | None = None) -> np.ndarray:
        """Evaluate an expression to an array over grid sites."""
        smear = smear or {}
        total = np.zeros(self.grid.shape)
        for (vars_, fns), coeff in e.terms:
            term = np.full(self.grid.shape, float(coeff))
            for v, exp in vars_:
                term = term * self._component_array(v, state, smear) ** exp
            for (name, order, arg), exp in fns:
                a = self.evaluate(arg, state, smear)
                if name == "sqrt":
                    val = np.sqrt(a)
                else:
                    val = self.functions[(name, order)](a)
                term = term * val ** exp
            total = total + term
        return total

    def _grad_terms(self, e: Expr):
        """Cached symbolic slot-derivatives of a density: per chart slot, the
        list of (derivative multi-index, coefficient expression)."""
        key = e
        hit = self._diff_cache.get(key)
        if hit is not None:
            return hit
        per_slot = [[] for _ in range(self.nslots)]
        for v in e.jet_vars():
            if (v.field, v.comp) not in self.slot_index:
                continue
            d = ex.diff_jet(e, v)
            if d.is_zero():
                continue
            per_slot[self.slot_index[(v.field, v.comp)]].append((v.deriv, d))
        self._diff_cache[key] = per_slot
        return per_slot

    def density_gradient(self, e: Expr, state: dict, smear: dict | None = None) -> np.ndarray:
        """Gradient of ``sum_sites density * cellvol`` w.r.t. the state.

        Exact polynomial differentiation of the density, then the transposed
        stencil of each jet's derivative indices.  Shape (nsites, nslots).
        """
        out = np.zeros((self.grid.nsites, self.nslots))
        w = self.grid.cell_volume()
        for j, terms in enumerate(self._grad_terms(e)):
            acc = None
            for deriv, coeff in terms:
                arr = self.evaluate(coeff, state, smear)
                for coord in deriv:
                    arr = self.grid.diff_transpose(arr, self.axis_of[coord])
                acc = arr if acc is None else acc + arr
            if acc is not None:
                out[:, j] = acc.reshape(-1) * w
        return out


# ---------------------------------------------------------------------------
# The presymplectic matrix
# ---------------------------------------------------------------------------

@dataclass
class TwoFormMatrix:
    """The vertical differential of the discretized boundary 1-form.

    For ultralocal boundary forms (all shipped theories) the matrix is block
    diagonal over sites and stored as ``blocks`` with shape
    (nsites, nslots, nslots); otherwise ``dense`` holds the full matrix.
    Antisymmetric entry-wise by construction.
    """
    model: LatticeModel
    blocks: np.ndarray | None = None
    dense: np.ndarray | None = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def n(self):
        return self.model.grid.nsites * self.model.nslots

    def full(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        nsites, m, _ = self.blocks.shape
        out = np.zeros((nsites * m, nsites * m))
        for s in range(nsites):
            out[s * m:(s + 1) * m, s * m:(s + 1) * m] = self.blocks[s]
        return out

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Matrix-vector product; x has shape (nsites, nslots) or flat."""
        if self.blocks is not None:
            xv = x.reshape(self.model.grid.nsites, self.model.nslots)
            return np.einsum("sij,sj->si", self.blocks, xv)
        return (self.dense @ x.reshape(-1)).reshape(self.model.grid.nsites, self.model.nslots)

    def singular_values(self) -> np.ndarray:
        if self.blocks is not None:
            sv = np.linalg.svd(self.blocks, compute_uv=False)
            return np.sort(sv.reshape(-1))[::-1]
        return np.linalg.svd(self.dense, compute_uv=False)


def assemble_two_form(model: LatticeModel, state: dict) -> TwoFormMatrix:
    """Assemble the 2-form matrix: mixed second derivatives of the discretized
    boundary-form pairing, antisymmetrized.

    For an ultralocal boundary form ``sum c_j(s) delta(s_j)`` the matrix is
    per-site ``d c_j / d s_i - d c_i / d s_j``, scaled by the cell volume.
    """
    model.check_state(state)
    chart = model.chart
    if not _alpha_is_ultralocal(chart):
        raise NotImplementedError("non-ultralocal boundary forms are not supported on the lattice")
    nsites, m = model.grid.nsites, model.nslots
    w = model.grid.cell_volume()
    jac = np.zeros((nsites, m, m))  # jac[s, i, j] = d A_j / d state_i at site s
    for gens, coeff in chart.alpha.terms:
        g = gens[0]
        j = model.slot_index[(g.field, g.comp)]
        for v in coeff.jet_vars():
            key = (v.field, v.comp)
            if key not in model.slot_index or v.deriv:
                continue
            i = model.slot_index[key]
            d = ex.diff_jet(coeff, v)
            if d.is_zero():
                continue
            jac[:, i, j] += model.evaluate(d, state).reshape(-1) * w
    blocks = jac - np.transpose(jac, (0, 2, 1))
    return TwoFormMatrix(model=model, blocks=blocks,
                         meta={"theory": chart.theory, "shape": model.grid.shape})


def _alpha_is_ultralocal(chart: BoundaryChart) -> bool:
    for gens, coeff in chart.alpha.terms:
        if any(g.deriv for g in gens):
            return False
        if any(v.deriv for v in coeff.jet_vars() if v.field in {f.name for f in chart.fields}):
            return False
    return True


def two_form_rank(m: TwoFormMatrix, tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``tol`` times the largest one."""
    sv = m.singular_values()
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > tol * sv[0]))


def functional_gradient(model: LatticeModel, density: Expr, state: dict,
                        smear: dict | None = None) -> np.ndarray:
    """Exact per-entry derivative of the discretized functional
    ``sum_sites density * cellvol`` (polynomial differentiation, no finite
    differences).  Shape (nsites, nslots)."""
    return model.density_gradient(density, state, smear)


def hamiltonian_vector_field(m: TwoFormMatrix, df: np.ndarray):
    """Minimum-norm least-squares solution X of ``iota_X omega + dF = 0``.

    With the conventions here that is ``Omega X = dF``.  The reported residual
    is the 2-norm of the defect; zero residual certifies that dF lies in the
    image, a large one quantifies the failure.
    """
    model = m.model
    dfv = df.reshape(model.grid.nsites, model.nslots)
    if m.blocks is not None:
        pinv = np.linalg.pinv(m.blocks, rcond=1e-12)
        X = np.einsum("sij,sj->si", pinv, dfv)
    else:
        X, *_ = np.linalg.lstsq(m.dense, dfv.reshape(-1), rcond=1e-12)
        X = X.reshape(model.grid.nsites, model.nslots)
    residual = float(np.linalg.norm(m.apply(X) - dfv))
    return X, residual


def poisson_bracket(f_grad: np.ndarray, g_grad: np.ndarray, m: TwoFormMatrix,
                    residual_tol: float = DEFAULT_RESIDUAL_TOL) -> float:
    """{f, g} = dg(X_f); raises if X_f is not defined at this state."""
    X_f, res = hamiltonian_vector_field(m, f_grad)
    scale = max(1.0, float(np.linalg.norm(f_grad)))
    if res > residual_tol * scale:
        raise CheckFailure(f"hamiltonian vector field residual {res:.3e} exceeds "
                           f"{residual_tol:.1e} (relative); bracket ill-defined")
    return float(np.sum(g_grad * X_f))


def surface_tangent_basis(model: LatticeModel, state: dict) -> np.ndarray:
    """Orthonormal basis of the tangent space of the chart's algebraic surface
    at ``state``; identity-like basis when the chart has no surface."""
    n = model.grid.nsites * model.nslots
    if not model.chart.surface:
        return np.eye(n)
    rows = []
    for cons in model.chart.surface:
        grad = model.density_gradient(cons, state)  # local constraints: per site
        # one constraint row per site
        g = np.zeros((model.grid.nsites, n))
        flat = grad.reshape(model.grid.nsites, model.nslots)
        for s in range(model.grid.nsites):
            g[s, s * model.nslots:(s + 1) * model.nslots] = flat[s]
        rows.append(g)
    J = np.concatenate(rows, axis=0)
    # null space of J
    _, sv, vt = np.linalg.svd(J)
    tol = max(J.shape) * np.finfo(float).eps * (sv[0] if sv.size else 1.0)
    null_mask = np.zeros(vt.shape[0], dtype=bool)
    null_mask[:sv.size] = sv <= tol
    null_mask[sv.size:] = True
    return vt[null_mask].T


# ---------------------------------------------------------------------------
# Smeared constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmearedConstraint:
    """A constraint family: a density over chart fields and smearing symbols.

    ``smear_shapes`` lists ``(symbol, component tuples)`` for the smearing
    fields; the functional is the site sum of the density times the cell
    volume, evaluated against smearing arrays keyed ``(symbol, comp)``.
    """
    name: str
    density: Expr
    smear_shapes: tuple  # ((symbol, (comp, comp, ...)), ...)

    def random_smear(self, model: LatticeModel, rng: np.random.Generator, mode="smooth") -> dict:
        out = {}
        for sym, comps in self.smear_shapes:
            for comp in comps:
                arr = rng.standard_normal(model.grid.shape)
                if mode == "smooth" and model.grid.ndim:
                    for axis in range(model.grid.ndim):
                        arr = (arr + np.roll(arr, 1, axis) + np.roll(arr, -1, axis)) / 3.0
                out[(sym, comp)] = arr
        return out

    def value(self, model: LatticeModel, state: dict, smear: dict) -> float:
        return float(model.evaluate(self.density, state, smear).sum() * model.grid.cell_volume())

    def gradient(self, model: LatticeModel, state: dict, smear: dict) -> np.ndarray:
        return model.density_gradient(self.density, state, smear)


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple

    def __iter__(self):
        return iter(self.constraints)

    def by_name(self, name: str) -> SmearedConstraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass
class CoisotropyResult:
    passed: bool
    max_bracket: float
    violation: float
    pairs: list

    def __repr__(self):
        return (f"CoisotropyResult(passed={self.passed}, max_bracket={self.max_bracket:.3e}, "
                f"violation={self.violation:.3e})")


def constraint_violation(cs: ConstraintSet, model: LatticeModel, state: dict,
                         rng: np.random.Generator, samples: int = 4) -> float:
    """Max absolute smeared constraint value over random unit-normalized smearings."""
    worst = 0.0
    for c in cs:
        for _ in range(samples):
            smear = c.random_smear(model, rng)
            norm = max(1.0, max(float(np.linalg.norm(a)) for a in smear.values()))
            worst = max(worst, abs(c.value(model, state, smear)) / norm)
    return worst


def coisotropy_check(cs: ConstraintSet, model: LatticeModel, state: dict,
                     rng: np.random.Generator, samples: int = 10,
                     bracket_tol: float = 1e-6, surface_tol: float = 1e-8,
                     residual_tol: float = DEFAULT_RESIDUAL_TOL) -> CoisotropyResult:
    """Sample smeared constraint pairs and bound their brackets at a state.

    Passes when the state is on the constraint surface (violation below
    ``surface_tol``) and every sampled bracket is below ``bracket_tol`` scaled
    by the state's off-surface violation.  An off-surface state reports
    failure with the violation magnitude rather than raising.
    """
    violation = constraint_violation(cs, model, state, rng)
    omega = assemble_two_form(model, state)
    pairs = []
    max_bracket = 0.0
    cons = list(cs)
    for _ in range(samples):
        ci = cons[rng.integers(len(cons))]
        cj = cons[rng.integers(len(cons))]
        si = ci.random_smear(model, rng)
        sj = cj.random_smear(model, rng)
        gi = ci.gradient(model, state, si)
        gj = cj.gradient(model, state, sj)
        try:
            val = poisson_bracket(gi, gj, omega, residual_tol)
        except CheckFailure:
            pairs.append((ci.name, cj.name, float("nan")))
            max_bracket = float("inf")
            continue
        pairs.append((ci.name, cj.name, val))
        max_bracket = max(max_bracket, abs(val))
    threshold = bracket_tol * (1.0 + violation / max(surface_tol, 1e-300))
    passed = violation <= surface_tol and max_bracket <= threshold
    return CoisotropyResult(passed=passed, max_bracket=max_bracket,
                            violation=violation, pairs=pairs)


# ---------------------------------------------------------------------------
# Electromagnetic and scalar evolution (temporal gauge, leapfrog)
# ---------------------------------------------------------------------------

def _metric_arrays(grid: LatticeGrid, hinv=None, rh=None):
    nd = grid.ndim
    if hinv is None:
        hinv = np.broadcast_to(np.eye(nd), grid.shape + (nd, nd))
    if rh is None:
        rh = np.ones(grid.shape)
    return np.asarray(hinv, float), np.asarray(rh, float)


def em_gauss(grid: LatticeGrid, F0: np.ndarray, hinv=None, rh=None) -> np.ndarray:
    """Discrete Gauss density d_i(h^ij F_0j sqrt(h))."""
    hinv, rh = _metric_arrays(grid, hinv, rh)
    flux = np.einsum("...ij,...j->...i", hinv, F0) * rh[..., None]
    out = np.zeros(grid.shape)
    for i in range(grid.ndim):
        out += grid.diff(flux[..., i], i)
    return out


def _em_rhs(grid: LatticeGrid, A: np.ndarray, hinv, rh, hlow):
    """dF_0r/dt = h_rk sqrt(h)^-1 d_i(h^ij h^kl F_jl sqrt(h))."""
    nd = grid.ndim
    F = np.zeros(grid.shape + (nd, nd))
    for j in range(nd):
        for l in range(nd):
            if j != l:
                F[..., j, l] = grid.diff(A[..., l], j) - grid.diff(A[..., j], l)
    dens = np.einsum("...ij,...kl,...jl->...ik", hinv, hinv, F) * rh[..., None, None]
    div = np.zeros(grid.shape + (nd,))
    for i in range(nd):
        div += grid.diff(dens[..., i, :], i)
    return np.einsum("...rk,...k->...r", hlow, div) / rh[..., None]


def evolve_em(state: dict, grid: LatticeGrid, dt: float, steps: int,
              hinv=None, rh=None, record_every: int = 1):
    """Leapfrog Maxwell evolution in temporal gauge.

    State fields: ``A`` (potential, lower index) and ``F0`` (electric
    covector F_{0j}); both shaped grid.shape + (ndim,).  A advances on
    integer steps, F0 on half steps; each F0 increment is a discrete
    divergence of an antisymmetric flux, so the Gauss density is conserved
    to roundoff.  Returns (trajectory, gauss residual series).
    """
    if dt > grid.spacing:
        raise CFLError(f"dt = {dt} exceeds the grid spacing {grid.spacing}")
    hinv, rh = _metric_arrays(grid, hinv, rh)
    hlow = np.linalg.inv(hinv)
    A = np.array(state["A"], float)
    F0 = np.array(state["F0"], float)
    gauss = [float(np.max(np.abs(em_gauss(grid, F0, hinv, rh))))]
    traj = [{"A": A.copy(), "F0": F0.copy()}]
    F0h = F0 + 0.5 * dt * _em_rhs(grid, A, hinv, rh, hlow)
    for n in range(steps):
        A = A + dt * F0h
        rhs = _em_rhs(grid, A, hinv, rh, hlow)
        F0_sync = F0h + 0.5 * dt * rhs
        F0h = F0h + dt * rhs
        gauss.append(float(np.max(np.abs(em_gauss(grid, F0_sync, hinv, rh)))))
        if (n + 1) % record_every == 0:
            traj.append({"A": A.copy(), "F0": F0_sync.copy()})
    return traj, np.array(gauss)


def divergence_free_em_data(grid: LatticeGrid, rng: np.random.Generator, scale=1.0):
    """Random EM state whose electric field is a discrete curl, hence exactly
    divergence-free (flat metric): centered differences commute."""
    nd = grid.ndim
    if nd != 3:
        raise ValueError("divergence-free sampling via curl needs three axes")
    W = rng.standard_normal(grid.shape + (3,)) * scale
    for axis in range(3):
        W = (W + np.roll(W, 1, axis) + np.roll(W, -1, axis)) / 3.0
    F0 = np.zeros(grid.shape + (3,))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        F0[..., i] = grid.diff(W[..., k], j) - grid.diff(W[..., j], k)
    A = rng.standard_normal(grid.shape + (3,)) * scale
    for axis in range(3):
        A = (A + np.roll(A, 1, axis) + np.roll(A, -1, axis)) / 3.0
    return {"A": A, "F0": F0}


def _scalar_rhs(grid: LatticeGrid, phi: np.ndarray, hinv, rh):
    flux = np.einsum("...ij,...j->...i", hinv,
                     np.stack([grid.diff(phi, j) for j in range(grid.ndim)], axis=-1))
    flux = flux * rh[..., None]
    out = np.zeros(grid.shape)
    for i in range(grid.ndim):
        out += grid.diff(flux[..., i], i)
    return out / rh


def evolve_scalar(state: dict, grid: LatticeGrid, dt: float, steps: int,
                  hinv=None, rh=None):
    """Leapfrog wave evolution: phi at integer steps, phi0 at half steps.

    Returns the trajectory of synchronized (phi, phi0) snapshots.
    """
    if dt > grid.spacing:
        raise CFLError(f"dt = {dt} exceeds the grid spacing {grid.spacing}")
    hinv, rh = _metric_arrays(grid, hinv, rh)
    phi = np.array(state["phi"], float)[..., 0] if state["phi"].ndim > grid.ndim else np.array(state["phi"], float)
    phi0 = np.array(state["phi0"], float)[..., 0] if state["phi0"].ndim > grid.ndim else np.array(state["phi0"], float)
    traj = [{"phi": phi.copy(), "phi0": phi0.copy()}]
    ph = phi0 + 0.5 * dt * _scalar_rhs(grid, phi, hinv, rh)
    for n in range(steps):
        phi = phi + dt * ph
        rhs = _scalar_rhs(grid, phi, hinv, rh)
        sync = ph + 0.5 * dt * rhs
        ph = ph + dt * rhs
        traj.append({"phi": phi.copy(), "phi0": sync.copy()})
    return traj


def _rk_evolve(z: dict, rhs, dt: float, steps: int, record: set, order: int):
    """Non-symplectic Runge–Kutta stepping (midpoint for order 2, Kutta's
    third-order rule for order 3), recording the requested steps."""
    out = {}
    z = {k: np.array(v, float) for k, v in z.items()}
    if 0 in record:
        out[0] = {k: v.copy() for k, v in z.items()}
    for n in range(steps):
        k1 = rhs(z)
        if order == 2:
            mid = {k: z[k] + 0.5 * dt * k1[k] for k in z}
            k2 = rhs(mid)
            z = {k: z[k] + dt * k2[k] for k in z}
        else:
            k2 = rhs({k: z[k] + 0.5 * dt * k1[k] for k in z})
            k3 = rhs({k: z[k] + dt * (2.0 * k2[k] - k1[k]) for k in z})
            z = {k: z[k] + dt * (k1[k] + 4.0 * k2[k] + k3[k]) / 6.0 for k in z}
        if (n + 1) in record:
            out[n + 1] = {k: v.copy() for k, v in z.items()}
    return out


def symplectic_current_check(model: LatticeModel, grid: LatticeGrid,
                             X0: dict, Y0: dict, step_a: int, step_b: int,
                             dt: float, kind: str, hinv=None, rh=None) -> float:
    """|omega_a(X, Y) - omega_b(X, Y)| for two linearized solutions.

    In the continuum the pairing of two solutions of the linearized equations
    is time-independent.  The scalar and EM theories are linear, so the
    perturbations are themselves solutions; they are evolved here with
    deliberately non-matched Runge-Kutta integrators (midpoint for one,
    Kutta's third-order rule for the other).  A symplectic integrator, or
    even a matched pair of identical RK maps, conserves a discrete pairing
    exactly on a linear system and leaves nothing to measure; with the
    mismatched pair the defect is a genuine second-order signal that
    vanishes as dt^2 under refinement, which is the discrete shadow of the
    conservation law.
    """
    if dt > grid.spacing:
        raise CFLError(f"dt = {dt} exceeds the grid spacing {grid.spacing}")
    hinv_a, rh_a = _metric_arrays(grid, hinv, rh)
    if kind == "scalar":
        def rhs(z):
            return {"phi": z["phi0"], "phi0": _scalar_rhs(grid, z["phi"], hinv_a, rh_a)}
        to_state = lambda snap: {"phi": snap["phi"][..., None], "phi0": snap["phi0"][..., None]}
        X0 = {k: np.asarray(v, float).reshape(grid.shape) for k, v in X0.items()}
        Y0 = {k: np.asarray(v, float).reshape(grid.shape) for k, v in Y0.items()}
    elif kind == "em":
        hlow = np.linalg.inv(hinv_a)
        def rhs(z):
            return {"A": z["F0"], "F0": _em_rhs(grid, z["A"], hinv_a, rh_a, hlow)}
        to_state = lambda snap: {"A": snap["A"], "F0": snap["F0"]}
    else:
        raise ValueError(f"unknown linear theory {kind!r}")
    record = {step_a, step_b}
    same = set(X0) == set(Y0) and all(np.array_equal(X0[k], Y0[k]) for k in X0)
    tx = _rk_evolve(X0, rhs, dt, max(step_a, step_b), record, order=2)
    # identical data means the identical discrete solution, so antisymmetry of
    # the pairing below kills the defect exactly
    ty = tx if same else _rk_evolve(Y0, rhs, dt, max(step_a, step_b), record, order=3)
    omega = assemble_two_form(model, model.zero_state())

    def pairing(step):
        xv = model.state_to_vector(to_state(tx[step]))
        yv = model.state_to_vector(to_state(ty[step]))
        return 0.5 * (float(np.sum(xv * omega.apply(yv))) - float(np.sum(yv * omega.apply(xv))))

    return abs(pairing(step_a) - pairing(step_b))
