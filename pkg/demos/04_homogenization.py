"""Effective tensor of the periodic coefficient and the first-order corrector.

    python demos/04_homogenization.py
"""
import numpy as np

from msdpg import PeriodicField, reference_solution
from msdpg.homogenization import corrector_u1, h1_difference, solve_cell_problem, solve_homogenized

cell = solve_cell_problem(PeriodicField(eps=1.0), 128)
print("a* =\n", np.array2string(cell.a_star, precision=5))

eps, n = 1 / 10, 160
ue = reference_solution("unit-square", PeriodicField(eps=eps), 1.0, None, n)
u0 = solve_homogenized("unit-square", cell.a_star, mesh=ue.mesh)
u1 = corrector_u1(u0, cell, eps)
print(f"eps = {eps}: H1 distance to u0 {h1_difference(ue, u0):.4f}, to u1 {h1_difference(ue, u1):.4f}")
# u0 alone misses the fine oscillation of the gradient; the corrector restores most of it.
