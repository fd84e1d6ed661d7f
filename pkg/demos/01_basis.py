"""Build the oversampled and classical bases for an oscillating coefficient and
inspect what distinguishes them.

    python demos/01_basis.py
"""
import numpy as np

from msdpg import PeriodicField, build_basis, build_coarse_fine_map, build_structured_mesh

field = PeriodicField(eps=1 / 20)
cf = build_coarse_fine_map(build_structured_mesh("unit-square", 8), build_structured_mesh("unit-square", 160))

over = build_basis(cf, field, "oversampled", factor=4.0)
classical = build_basis(cf, field, "classical")

for name, b in (("oversampled", over), ("classical", classical)):
    pou = np.abs(b.values.sum(axis=1) - 1).max()
    print(f"{name:12s} partition of unity error {pou:.1e}, value range [{b.values.min():.3f}, {b.values.max():.3f}]")

# The oversampled functions are not nodal: their vertex values differ from δ_ij,
# and the change-of-basis matrices carry the information.
K = 27
print(f"\nelement {K}: change-of-basis matrix (columns sum to 1)")
print(np.array2string(over.coeffs[K], precision=4))
print("column sums:", over.coeffs[K].sum(axis=0))

# Π_K swaps ψ̄ for the linear hat with the same coefficients.
dofs = np.zeros((cf.coarse.n_triangles, 3))
dofs[K] = [1.0, 2.0, 3.0]
ms, lin = over.expand(dofs)[K], over.project(dofs)[K]
print(f"\nmultiscale vs projected function on K: max |difference| {np.abs(ms - lin).max():.3f}")
print("patch margins (fine cells) range:", over.margins.min(), "to", over.margins.max())
