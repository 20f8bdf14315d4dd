"""The gnomonic chart of the round sphere and the Euclidean plane share their
unparametrized geodesics (straight lines), although the metrics differ.

Run:  python3 demos/sphere_and_plane.py
"""
import numpy as np

from projlab import catalog
from projlab.bm import GStrengthField, bm_residual, mobility_estimate, ordering_check
from projlab.geodesic import integrate_geodesic, shares_geodesics
from projlab.geom import ChartDomain, ExprMetric, FlatConnection, LeviCivita, projective_diff

chart = ChartDomain.box(2, 0.5)
sphere = ExprMetric(catalog.quadric_metric(np.eye(3)))
plane = ExprMetric(catalog.euclidean(2))
stereo = ExprMetric(catalog.stereographic_sphere(2))

# 1. A sphere geodesic through (0.1, -0.2) is a straight chart line.
c = integrate_geodesic(LeviCivita(sphere), [0.1, -0.2], [0.6, 0.8], (-0.4, 0.4), chart)
_, pts = c.dense(200)
d = pts - pts[0]
print("max distance from the chord:", np.max(np.abs(d[:, 0] * 0.8 - d[:, 1] * 0.6)))

# 2. The two Levi-Civita connections differ by eta (x) Id + Id (x) eta ...
x = chart.sample(30)
pd = projective_diff(FlatConnection(2), LeviCivita(sphere), x)
print("projectively equivalent to the plane:", pd.success, "residual", pd.residual)
# ... while the stereographic chart of the same sphere is not projectively flat.
print("stereographic chart shares geodesics with the plane:",
      shares_geodesics(FlatConnection(2), LeviCivita(stereo), chart, trials=3).all_pass)

# 3. The g-strength of the plane w.r.t. the sphere solves the BM equation.
K = GStrengthField(sphere, plane)
print("BM residual of the g-strength:", bm_residual(sphere, K, x))
print("eigenvalues globally ordered:", ordering_check(sphere, K, chart).ordered)

# 4. Both metrics have maximal degree of mobility (n+1)(n+2)/2 = 6 in dimension 2;
#    a generic perturbation has only the trivial BM structures c*Id.
for name, g, d in [("sphere", sphere, 6), ("plane", plane, 4),
                   ("perturbed", ExprMetric([["1 + 0.3*sin(x2)", "0"], ["0", "1 + 0.2*x1^2"]]), 4)]:
    r = mobility_estimate(g, chart, d)
    print(f"{name:>9}: D = {r.dimension}  (gap ratio {r.gap_ratio:.1e})")
