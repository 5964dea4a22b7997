"""Walk through the linear operators and check their adjoints the hard way.

Run from the repo root:  python3 demos/adjoints_and_operators.py
"""

import numpy as np

from spiral.operators import (
    DifferenceMap,
    MatrixMap,
    build_projector,
    build_tomography,
)
from spiral.wavelets import OrthoBasis

rng = np.random.default_rng(0)

# A 2x2 image and two views 90 degrees apart is small enough to write the
# system matrix by hand. Angle 0 integrates down columns, angle 90 across
# rows, one detector bin per pixel width.
proj = build_projector(2, n_angles=2, span_degrees=180.0, n_radial=2)
print("2x2 projector, dense:")
print(proj.to_dense().astype(int))
img = np.array([[1.0, 2.0], [3.0, 4.0]])
print("sinogram of [[1,2],[3,4]]:", proj.forward(img.ravel()))

# The adjoint is the transpose of the same sparse matrix, so the inner
# product identity <Ax, y> = <x, A'y> should hold to rounding.
def gap(op):
    worst = 0.0
    for _ in range(25):
        x = rng.standard_normal(op.n)
        y = rng.standard_normal(op.m)
        lhs = float(op.forward(x) @ y)
        rhs = float(x @ op.adjoint(y))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30))
    return worst


side = 32
plain = build_tomography(side, side, n_angles=24, span_degrees=135.0,
                         n_radial=side)
mu = 0.02 * np.exp(-rng.uniform(0.5, 1.5, (side, side)))
attenuated = build_tomography(side, side, n_angles=24, span_degrees=135.0,
                              n_radial=side, attenuation=mu)
wave = OrthoBasis((side, side), "db3").as_linear_map()
diffs = DifferenceMap((side, side))
dense = MatrixMap(rng.uniform(0.0, 1.0, (40, 30)))

for name, op in [("projector 32x32", plain), ("with attenuation", attenuated),
                 ("db3 wavelet", wave), ("differences", diffs),
                 ("dense 40x30", dense)]:
    print(f"adjoint gap, {name}: {gap(op):.3e}")

# Attenuation only ever removes photons. Compare total detected mass.
flat = np.ones(side * side)
print("mass through plain projector   :", plain.forward(flat).sum())
print("mass through attenuated version:", attenuated.forward(flat).sum())
