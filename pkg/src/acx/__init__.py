"""Numerical potential theory for almost complex structures in local
coordinates: intrinsic hessian algebra, psh membership, the Monge-Ampere
Dirichlet solver, linear-potential equivalences and metric comparisons."""

from .algebra import (
    AlmostComplexField,
    HermitianForm,
    antilinear_normalize,
    complexify,
    hermitian_part,
    lower_order_E,
    make_structure,
    pullback,
    real_hessian,
    realify,
    standard_j,
)
from .dirichlet import (
    DirichletProblem,
    SchemeOptions,
    SolveReport,
    bellman_residual,
    comparison_check,
    maximality_check,
    solve,
)
from .lattice import (
    LatticeDomain,
    ScalarField,
    directional_second,
    export_csv,
    fd_jet,
    import_csv,
    restrict_to_slice,
    upwind_first,
)
from .linpot import (
    LinearOperator,
    classical_subharmonic,
    distributional_pairing,
    ess_usc_regularize,
    harmonic_replacement,
    viscosity_subharmonic,
)
from .metrics import (
    HermitianMetric,
    example95_report,
    hermitian_hessian,
    mean_curvature,
    riemannian_hessian,
)
from .psh import (
    blaplacian,
    psh_margin,
    psh_via_blaplacians,
    restriction_check,
    slice_compatible,
)
from .subeq import (
    ReducedJet,
    Subequation,
    constant_rhs,
    contains,
    dual_contains,
    positivity_closed,
    strict_contains,
)

__version__ = "0.1.0"
