"""The flat model in R^3: X = A x + <w, x> x with A rotating the (x2, x3)
plane and w = -e1.  The flow is e^{tA} x / (1 + t x1); the x1 axis is an
invariant geodesic, reparametrized by tau(s) = s / (1 + t0 s), and the
conformal factor psi = -1/2 log|det K_t0| satisfies dpsi/ds = 1/2 d/ds log tau'.

Run:  python3 demos/flat_model_psi_tau.py
"""
import numpy as np

from projlab import catalog
from projlab.geodesic import integrate_geodesic
from projlab.geom import ChartDomain, ExprMetric, FlatConnection
from projlab.projfield import ClosedFormFlow, NormalFormField
from projlab.transport import psi_tau_check

A = np.zeros((3, 3))
A[2, 1], A[1, 2] = 1.0, -1.0
flow = ClosedFormFlow(NormalFormField(A, [-1.0, 0.0, 0.0]))
g = ExprMetric(catalog.euclidean(3))
chart = ChartDomain.box(3, 0.5)
curve = integrate_geodesic(FlatConnection(3), np.zeros(3), [1.0, 0.0, 0.0], (-0.4, 0.4), chart)

for t0 in (0.25, 0.5, 1.0):
    r = psi_tau_check(g, flow, t0, curve)
    print(f"t0 = {t0}: sup |dpsi - 1/2 dlog tau'| = {r.sup_err:.2e},"
          f"  d/ds log tau'(0) = {r.dlog_dtau_at_0:.8f} (expected {-2 * t0})")

r = psi_tau_check(g, flow, 0.5, curve)
print("\n    s        tau      s/(1+s/2)   psi'")
for s, tau, dpsi in list(zip(r.s, r.tau, r.dpsi))[::8]:
    print(f"{s:8.4f} {tau:10.6f} {s / (1 + 0.5 * s):10.6f} {dpsi:9.5f}")
