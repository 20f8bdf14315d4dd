"""A projective vector field with a non-linearizable zero on the sphere chart.

X(x) = <w, x> x with w = -e1 vanishes at the origin, is projective for the
round metric but not affine, and cannot be linearized (w is not in Im A^T
because A = 0).  Its flow phi^t(x) = x / (1 + t x1) acts on BM structures by
L_t(K) = (phi^t)^* K . K_t.

Run:  python3 demos/essential_field.py
"""
import numpy as np

from projlab import catalog
from projlab.bm import mobility_estimate
from projlab.geom import ChartDomain, ExprMetric, LeviCivita
from projlab.projfield import ClosedFormFlow, NormalFormField, is_projective, linearizable, radial_rate
from projlab.transport import compute_Kt, eta_t, lt_matrix, spectral_transport_check

chart = ChartDomain.box(2, 0.5)
g = ExprMetric(catalog.quadric_metric(np.eye(3)))
X = NormalFormField(np.zeros((2, 2)), [-1.0, 0.0])
flow = ClosedFormFlow(X)

x = chart.sample(50)
p = is_projective(X, LeviCivita(g), x)
print(f"projective: {p.projective}  affine: {p.affine}  linearizable: {linearizable(X).linearizable}")
a, defect = radial_rate(flow, np.array([1.0, 0.0]), [-0.2, -0.1, 0.1, 0.2], [-0.5, 0.5, 1.0])
print(f"orbit along e1 is y -> y/(1 + t a y) with a = {a:.6f} (defect {defect:.1e})")

# K_t0 is the identity at the fixed point but not elsewhere.
print("K_0.5 at o:\n", compute_Kt(g, flow, 0.5, np.zeros(2)))
print("K_0.5 at (0.2, 0.1):\n", compute_Kt(g, flow, 0.5, np.array([0.2, 0.1])))

# L_t on the full (6-dimensional) space of BM structures.
basis = mobility_estimate(g, chart, 6).basis_fields()
rec = lt_matrix(g, flow, 0.5, chart.sample(60, shrink=0.8), basis)
print(f"L_0.5: {rec.classification} Moebius map (alpha, beta) = ({rec.alpha}, {rec.beta}),"
      f" fit residual {rec.fit_residual:.1e}, fixes [Id]: {rec.fixes_identity_line}")
print("pair fit L(Kbar) ~ alpha Kbar + beta Id:", rec.pair_fit)

# The pulled-back connections are not the Levi-Civita connection of g: eta_t(o) != 0.
for t in (0.1, 0.5, 1.0):
    print(f"eta_{t}(o) =", eta_t(g, flow, t))

# Spectral transport by T(z) = (2z - 1)/z needs span{Kbar, Id} to be L_t-invariant.
# On the sphere (D = 6) the pair fit above is not exact, so the check fails here ...
pts = chart.sample(100, seed=1, shrink=0.8)
r = spectral_transport_check(g, flow, 0.5, rec.alpha, rec.beta, pts)
print(f"sphere:     spectral transport max distance {r.max_dist:.3e}")
# ... and holds on the Lorentzian quadric chart where the pair is invariant.
lor = ExprMetric(catalog.quadric_metric(np.array([[1.0, 0, 0], [0, 0, 1], [0, 1, 0]])))
small = ChartDomain.box(2, 0.3)
rl = lt_matrix(lor, flow, 0.5, small.sample(60))
r = spectral_transport_check(lor, flow, 0.5, rl.alpha, rl.beta, small.sample(100, seed=1))
print(f"Lorentzian: spectral transport max distance {r.max_dist:.3e} ({rl.classification}, "
      f"alpha={rl.alpha:.6f}, beta={rl.beta:.6f})")
