"""Lattice backend: assembly, gradients, vector fields, evolution."""

import numpy as np
import pytest

from ktphase import expr as E
from ktphase import theories as TH
from ktphase.errors import CFLError, CheckFailure
from ktphase.lattice import (
    LatticeGrid,
    LatticeModel,
    assemble_two_form,
    coisotropy_check,
    divergence_free_em_data,
    evolve_em,
    evolve_scalar,
    functional_gradient,
    hamiltonian_vector_field,
    poisson_bracket,
    surface_tangent_basis,
    symplectic_current_check,
    two_form_rank,
)


@pytest.fixture
def rng():
    return np.random.default_rng(31)


def mech_model(m=2.0):
    return LatticeModel(TH.chart("mechanics"), LatticeGrid(shape=()),
                        bindings={"m": m},
                        functions={("V", 0): lambda q: 0.25 * q ** 4,
                                   ("V", 1): lambda q: q ** 3})


def scalar_model(shape=(8,)):
    t = TH.builtin("scalar")
    grid = LatticeGrid(shape=shape)
    return LatticeModel(TH.chart("scalar"), grid, bindings=TH.flat_metric_bindings(t)), grid


def em_model(shape=(8, 8, 8)):
    t = TH.builtin("em")
    grid = LatticeGrid(shape=shape)
    return LatticeModel(TH.chart("em"), grid, bindings=TH.flat_metric_bindings(t)), grid


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def test_grid_validation():
    LatticeGrid(shape=(4, 4))
    LatticeGrid(shape=(1, 1, 1))
    LatticeGrid(shape=())
    with pytest.raises(ValueError):
        LatticeGrid(shape=(3,))
    with pytest.raises(ValueError):
        LatticeGrid(shape=(8,), spacing=0.0)
    with pytest.raises(ValueError):
        LatticeGrid(shape=(4, 4, 4, 4))


def test_centered_difference_skew(rng):
    grid = LatticeGrid(shape=(12,), spacing=0.5)
    a = rng.standard_normal(12)
    b = rng.standard_normal(12)
    # <Da, b> = -<a, Db> exactly up to roundoff pairing order
    lhs = float(np.dot(grid.diff(a, 0), b))
    rhs = -float(np.dot(a, grid.diff(b, 0)))
    assert abs(lhs - rhs) < 1e-14


# ---------------------------------------------------------------------------
# two-form assembly
# ---------------------------------------------------------------------------

def test_mechanics_block(rng):
    model = mech_model(m=2.0)
    omega = assemble_two_form(model, model.random_state(rng))
    # in (v, q) slot order this is the standard [[0, m], [-m, 0]] block;
    # stored here over (q, v)
    assert np.array_equal(omega.blocks[0], np.array([[0.0, -2.0], [2.0, 0.0]]))
    assert two_form_rank(omega) == 2


def test_assembled_matrix_antisymmetric(rng):
    for model, grid in (scalar_model(), em_model((4, 4, 4))):
        state = model.random_state(rng)
        omega = assemble_two_form(model, state)
        full = omega.full()
        assert np.array_equal(full, -full.T)


def test_rank_invariant_under_unit_rescaling(rng):
    model = LatticeModel(TH.chart("pc4"), LatticeGrid(shape=(1, 1, 1)), bindings={"Lam": 0.0})
    state = model.random_state(rng)
    omega = assemble_two_form(model, state)
    r0 = two_form_rank(omega)
    scaled = {"e": 1e3 * state["e"], "omega": 1e-2 * state["omega"]}
    r1 = two_form_rank(assemble_two_form(model, scaled))
    assert r0 == r1 == 24


def test_shape_mismatch_rejected(rng):
    model, grid = scalar_model()
    state = model.random_state(rng)
    state["phi"] = state["phi"][:4]
    with pytest.raises(ValueError):
        assemble_two_form(model, state)


# ---------------------------------------------------------------------------
# functional gradients
# ---------------------------------------------------------------------------

def test_gradient_matches_finite_differences(rng):
    # derived oracle: centered finite differences of the discretized sum
    model, grid = scalar_model((8,))
    t = TH.builtin("scalar")
    H = TH.chart("scalar").hamiltonian
    state = model.random_state(rng)

    def value(s):
        return float(model.evaluate(H, s).sum() * grid.cell_volume())

    grad = functional_gradient(model, H, state)
    step = 1e-5
    for _ in range(12):
        f = ["phi", "phi0"][rng.integers(2)]
        site = rng.integers(8)
        sp = {k: v.copy() for k, v in state.items()}
        sm = {k: v.copy() for k, v in state.items()}
        sp[f][site, 0] += step
        sm[f][site, 0] -= step
        fd = (value(sp) - value(sm)) / (2 * step)
        slot = model.slot_index[(f, ())]
        assert abs(grad[site, slot] - fd) < 1e-8


def test_gradient_of_constant_functional(rng):
    model, grid = scalar_model((8,))
    state = model.random_state(rng)
    grad = functional_gradient(model, E.Expr.const(7), state)
    assert np.all(grad == 0.0)


def test_em_smearing_gradient_formula(rng):
    # gradient of the gauge generator w.r.t. the electric covector is the
    # discrete gradient of the smearing (flat metric)
    model, grid = em_model((4, 4, 4))
    J = TH.constraint_set("em").by_name("J")
    state = model.random_state(rng)
    smear = J.random_smear(model, rng)
    grad = J.gradient(model, state, smear)
    lam = smear[("lam", ())]
    for j in range(3):
        slot = model.slot_index[("F0", (j + 1,))]
        want = grid.diff(lam, j).reshape(-1) * grid.cell_volume()
        assert np.allclose(grad[:, slot], want, atol=1e-14)
        aslot = model.slot_index[("A", (j + 1,))]
        assert np.all(grad[:, aslot] == 0.0)


# ---------------------------------------------------------------------------
# hamiltonian vector fields and brackets
# ---------------------------------------------------------------------------

def test_hamiltonian_vector_field_residual_reports_failure(rng):
    # a gradient with a component along the kernel directions cannot be
    # matched; the residual quantifies it
    model = LatticeModel(TH.chart("pc4"), LatticeGrid(shape=(1, 1, 1)), bindings={"Lam": 0.0})
    state = model.random_state(rng)
    omega = assemble_two_form(model, state)
    _, _, Vt = np.linalg.svd(omega.blocks[0])
    kernel_vec = Vt[-1]
    X, res = hamiltonian_vector_field(omega, kernel_vec.reshape(1, -1))
    assert res > 0.9  # the kernel component is entirely unreachable


def test_poisson_bracket_antisymmetry_and_self(rng):
    model = mech_model()
    state = model.random_state(rng)
    omega = assemble_two_form(model, state)
    H = TH.chart("mechanics").hamiltonian
    gH = functional_gradient(model, H, state)
    q_func = E.Expr.var(E.JetVar("q"))
    gq = functional_gradient(model, q_func, state)
    assert poisson_bracket(gH, gH, omega) == 0.0
    assert abs(poisson_bracket(gH, gq, omega) + poisson_bracket(gq, gH, omega)) < 1e-14


def test_poisson_bracket_rejects_ill_defined(rng):
    model = LatticeModel(TH.chart("pc4"), LatticeGrid(shape=(1, 1, 1)), bindings={"Lam": 0.0})
    state = model.random_state(rng)
    omega = assemble_two_form(model, state)
    _, _, Vt = np.linalg.svd(omega.blocks[0])
    bad = Vt[-1].reshape(1, -1)
    with pytest.raises(CheckFailure):
        poisson_bracket(bad, bad, omega)


# ---------------------------------------------------------------------------
# electromagnetic evolution
# ---------------------------------------------------------------------------

def test_evolve_em_zero_data():
    grid = LatticeGrid(shape=(4, 4, 4))
    state = {"A": np.zeros((4, 4, 4, 3)), "F0": np.zeros((4, 4, 4, 3))}
    traj, gauss = evolve_em(state, grid, dt=0.1, steps=20, record_every=20)
    assert np.all(traj[-1]["A"] == 0.0) and np.all(traj[-1]["F0"] == 0.0)
    assert np.all(gauss == 0.0)


def test_evolve_em_cfl():
    grid = LatticeGrid(shape=(4, 4, 4), spacing=0.5)
    state = {"A": np.zeros((4, 4, 4, 3)), "F0": np.zeros((4, 4, 4, 3))}
    with pytest.raises(CFLError):
        evolve_em(state, grid, dt=0.6, steps=1)


def test_gauss_conservation_telescopes(rng):
    # derived oracle: each electric increment is a discrete divergence of an
    # antisymmetric flux, so the Gauss density change telescopes to zero,
    # for flat and for curved time-independent metrics
    grid = LatticeGrid(shape=(6, 6, 6))
    state = divergence_free_em_data(grid, rng)
    hinv = np.broadcast_to(np.eye(3), grid.shape + (3, 3)).copy()
    bump = 0.2 * np.sin(2 * np.pi * np.arange(6) / 6)
    hinv = hinv * (1.0 + bump[:, None, None, None, None])
    rh = 1.0 / np.sqrt(np.linalg.det(hinv))
    traj, gauss = evolve_em(state, grid, dt=0.2, steps=200, hinv=hinv, rh=rh,
                            record_every=200)
    assert gauss.max() - gauss[0] < 1e-13


def test_em_dispersion_matches_discrete_oracle():
    # closed-form oracle: a transverse plane-wave mode of the centered-difference
    # leapfrog scheme oscillates at omega = (2/dt) asin(dt*ktilde/2) with
    # ktilde = sin(k h)/h; starting from (A, F0=0) realizes the exact discrete
    # standing mode
    n, h, dt, steps = 16, 1.0, 0.2, 50
    grid = LatticeGrid(shape=(n, n, n), spacing=h)
    k = 2 * np.pi * 3 / (n * h)
    x = np.arange(n) * h
    A = np.zeros((n, n, n, 3))
    A[..., 1] = np.cos(k * x)[:, None, None]
    state = {"A": A, "F0": np.zeros((n, n, n, 3))}
    traj, _ = evolve_em(state, grid, dt=dt, steps=steps, record_every=steps)
    ktilde = np.sin(k * h) / h
    omega_num = (2.0 / dt) * np.arcsin(dt * ktilde / 2.0)
    expected = np.cos(k * x)[:, None, None] * np.cos(omega_num * steps * dt)
    assert np.abs(traj[-1]["A"][..., 1] - expected).max() < 1e-8
    assert np.abs(traj[-1]["A"][..., 0]).max() < 1e-12


# ---------------------------------------------------------------------------
# symplectic current
# ---------------------------------------------------------------------------

def test_symplectic_current_self_is_zero(rng):
    model, grid = scalar_model((8,))
    x0 = {"phi": rng.standard_normal(8), "phi0": rng.standard_normal(8)}
    assert symplectic_current_check(model, grid, x0,
                                    {k: v.copy() for k, v in x0.items()},
                                    5, 20, 0.1, "scalar") == 0.0


def test_symplectic_current_second_order(rng):
    model, grid = scalar_model((16,))

    def smooth(a):
        for _ in range(5):
            a = (a + np.roll(a, 1) + np.roll(a, -1)) / 3.0
        return a

    x0 = {"phi": smooth(rng.standard_normal(16)), "phi0": smooth(rng.standard_normal(16))}
    y0 = {"phi": smooth(rng.standard_normal(16)), "phi0": smooth(rng.standard_normal(16))}
    defects = [symplectic_current_check(model, grid, x0, y0,
                                        int(2 / dt), int(6 / dt), dt, "scalar")
               for dt in (0.2, 0.1, 0.05)]
    orders = [np.log2(defects[i] / defects[i + 1]) for i in range(2)]
    for o in orders:
        assert 1.8 <= o <= 2.2


def test_em_gauge_directions_are_null(rng):
    model, grid = em_model((6, 6, 6))
    X = divergence_free_em_data(grid, rng)
    lam = rng.standard_normal(grid.shape)
    Y = {"A": np.stack([grid.diff(lam, i) for i in range(3)], axis=-1),
         "F0": np.zeros(grid.shape + (3,))}
    omega = assemble_two_form(model, model.zero_state())
    xv, yv = model.state_to_vector(X), model.state_to_vector(Y)
    assert abs(float(np.sum(xv * omega.apply(yv)))) <= 1e-10


# ---------------------------------------------------------------------------
# scalar evolution
# ---------------------------------------------------------------------------

def test_evolve_scalar_conserves_energy_approximately(rng):
    grid = LatticeGrid(shape=(16,))
    phi = np.sin(2 * np.pi * np.arange(16) / 16)
    state = {"phi": phi, "phi0": np.zeros(16)}
    traj = evolve_scalar(state, grid, dt=0.1, steps=100)
    def energy(s):
        d = grid.diff(s["phi"], 0)
        return float(np.sum(s["phi0"] ** 2 + d ** 2))
    assert abs(energy(traj[-1]) - energy(traj[0])) < 1e-3 * max(energy(traj[0]), 1)


# ---------------------------------------------------------------------------
# surfaces and coisotropy harness
# ---------------------------------------------------------------------------

def test_surface_tangent_basis_length(rng):
    model = LatticeModel(TH.chart("length"), LatticeGrid(shape=()))
    state = model.random_state(rng)
    u = rng.standard_normal(3)
    u /= np.linalg.norm(u)
    state["u"] = u.reshape(state["u"].shape)
    P = surface_tangent_basis(model, state)
    assert P.shape == (6, 5)
    # tangent vectors annihilate the constraint gradient
    grad = model.density_gradient(model.chart.surface[0], state).reshape(-1)
    assert np.abs(P.T @ grad).max() < 1e-12


def test_coisotropy_off_surface_negative_control(rng):
    model = LatticeModel(TH.chart("pc4"), LatticeGrid(shape=(1, 1, 1)), bindings={"Lam": 0.0})
    cs = TH.constraint_set("pc4")
    result = coisotropy_check(cs, model, model.random_state(rng), rng, samples=4)
    assert not result.passed
    assert result.violation > 1e-3


def test_coisotropy_em_single_family(rng):
    # the single abelian family passes trivially at a Gauss-satisfying state
    model, grid = em_model((6, 6, 6))
    state = divergence_free_em_data(grid, rng)
    result = coisotropy_check(TH.constraint_set("em"), model, state, rng,
                              samples=6, bracket_tol=1e-10, surface_tol=1e-10)
    assert result.passed
    assert result.max_bracket <= 1e-10


def test_gauge_residual_under_grid_refinement(rng):
    # the gauge generator's vector-field residual stays at machine zero (hence
    # trivially converges at order >= 1) across three grid refinements
    t = TH.builtin("em")
    J = TH.constraint_set("em").by_name("J")
    residuals = []
    for n, h in ((4, 1.0), (8, 0.5), (16, 0.25)):
        grid = LatticeGrid(shape=(n, n, n), spacing=h)
        model = LatticeModel(TH.chart("em"), grid, bindings=TH.flat_metric_bindings(t))
        state = divergence_free_em_data(grid, rng)
        omega = assemble_two_form(model, state)
        smear = J.random_smear(model, rng)
        _, res = hamiltonian_vector_field(omega, J.gradient(model, state, smear))
        residuals.append(res)
    scale = max(1e-300, max(residuals))
    assert all(r <= 1e-12 for r in residuals) or \
        np.log2(residuals[0] / residuals[2]) / 2 >= 1.0
    # coframe-gravity single-site residuals on the constraint surface
    model = LatticeModel(TH.chart("pc4"), LatticeGrid(shape=(1, 1, 1)), bindings={"Lam": 0.0})
    state = TH.pc_on_surface_state(model, np.random.default_rng(77))
    omega = assemble_two_form(model, state)
    for name in ("P", "T"):
        con = TH.constraint_set("pc4").by_name(name)
        smear = con.random_smear(model, rng)
        _, res = hamiltonian_vector_field(omega, con.gradient(model, state, smear))
        assert res <= 1e-8
