"""As the penalty grows, the discontinuous Petrov-Galerkin solution approaches
the conforming oversampled one.

    python demos/03_penalty_limit.py
"""
from msdpg import PenaltyConfig, PeriodicField, build_basis, build_coarse_fine_map, build_structured_mesh
from msdpg.analysis import energy_difference
from msdpg.methods import solve_conforming_pg, solve_dg

field = PeriodicField(eps=1 / 20)
cf = build_coarse_fine_map(build_structured_mesh("unit-square", 16), build_structured_mesh("unit-square", 160))
basis = build_basis(cf, field)
conforming = solve_conforming_pg(basis, 1.0)

for gamma0 in (10, 100, 1000, 10000):
    dg = solve_dg(basis, 1.0, PenaltyConfig(beta=-1, gamma0=gamma0, rho_mode="h"))
    print(f"gamma0 = {gamma0:>6}: relative distance {energy_difference(cf, basis.coef, dg.fine, conforming.fine):.2e}")
