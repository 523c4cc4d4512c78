"""The length functional: a degenerate 2-form and its kernel.

The action is the euclidean length of a path in R^3, so reparametrizations
are invisible to it.  The boundary 2-form on (position, direction) data is
degenerate: its kernel is exactly the translation of the position along the
direction vector.  Quotienting by that kernel would leave the space of
oriented lines (the tangent bundle of the sphere, dimension 4); here we watch
the rank and the kernel direction appear numerically.
"""

import numpy as np

import ktphase as kt
from ktphase import expr as E
from ktphase import theories

t = theories.builtin("length")
ctx = t.context()
print("L =", E.to_text(t.lagrangian, ctx))

split = kt.ibp_split(kt.variation(t), t)
print("boundary 1-form:", split.alpha.to_text(ctx))
print("(the coefficient of each delta(q_i) is the normalized velocity u_i)")

# the chart uses (q, u) with u on the unit sphere
model = kt.LatticeModel(theories.chart("length"), kt.LatticeGrid(shape=()))
rng = np.random.default_rng(2)
state = model.random_state(rng)
u = rng.standard_normal(3)
u /= np.linalg.norm(u)
state["u"] = u.reshape(state["u"].shape)

Omega = kt.assemble_two_form(model, state)
from ktphase.lattice import surface_tangent_basis
P = surface_tangent_basis(model, state)           # tangent to {u.u = 1}
B = P.T @ Omega.full() @ P
sv = np.linalg.svd(B, compute_uv=False)
print("\nsingular values of the constrained 2-form:", np.round(sv, 12))
print("rank:", int((sv > 1e-8 * sv[0]).sum()), " (= 2 x (3-1), the reduced dimension)")

_, _, Vt = np.linalg.svd(B)
kernel = P @ Vt[-1]
print("kernel direction (q-block, u-block):", np.round(kernel, 6))
print("cosine with (u, 0):", abs(float(np.dot(kernel[:3], u))) / np.linalg.norm(kernel))
