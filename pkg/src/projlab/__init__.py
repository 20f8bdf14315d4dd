"""projlab: chart-based numerics for projective differential geometry.

Modules
-------
exprcore   expression language with second-order forward-mode jets
geom       charts, metrics, connections, curvature, projective Weyl tensor
geodesic   geodesic integration, geodesic-image comparison, reparametrizations
projfield  projective vector fields in normal form, exact flows, linearizability
bm         BM structures, g-strength, degree of mobility, ordering and splitting
transport  pullbacks, K_t, the group L_t, Moebius maps, spectral transport, psi-tau
scenario   scenario schema, checks and reports (used by the ``projlab`` CLI)
"""
from .exprcore import (DomainError, ExprError, ExprSyntaxError, Jet2, eval_jet2, evaluate, parse_expr,
                       to_source)
from .geom import (ChartDomain, ConstantMetric, ExprConnection, ExprMetric, FlatConnection, LeviCivita,
                   OneForm, ProjectivelyShifted, christoffel, curvature, projective_diff, projective_weyl)
from .geodesic import extract_reparam, integrate_geodesic, shares_geodesics
from .projfield import (ClosedFormFlow, ExprVectorField, NormalFormField, NumericFlow, flow_closed,
                        is_projective, lift_to_sl, linearizable, reduce_ker)
from .bm import (GStrengthField, bm_from_field, bm_residual, g_strength, metric_from_K, mobility_estimate,
                 ordering_check, splitting_orthogonality)
from .transport import (classify_mobius, compute_Kt, eta_t, lt_matrix, mobius_apply, mobius_fixed,
                        psi_tau_check, spectral_transport_check, transport_K)

__version__ = "0.1.0"

__all__ = [
    "DomainError", "ExprError", "ExprSyntaxError", "Jet2", "eval_jet2", "evaluate", "parse_expr", "to_source",
    "ChartDomain", "ConstantMetric", "ExprConnection", "ExprMetric", "FlatConnection", "LeviCivita",
    "OneForm", "ProjectivelyShifted", "christoffel", "curvature", "projective_diff", "projective_weyl",
    "extract_reparam", "integrate_geodesic", "shares_geodesics",
    "ClosedFormFlow", "ExprVectorField", "NormalFormField", "NumericFlow", "flow_closed", "is_projective",
    "lift_to_sl", "linearizable", "reduce_ker",
    "GStrengthField", "bm_from_field", "bm_residual", "g_strength", "metric_from_K", "mobility_estimate",
    "ordering_check", "splitting_orthogonality",
    "classify_mobius", "compute_Kt", "eta_t", "lt_matrix", "mobius_apply", "mobius_fixed", "psi_tau_check",
    "spectral_transport_check", "transport_K",
]
