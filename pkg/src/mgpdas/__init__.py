"""Matrix-free solver library for box-constrained quadratic control problems.

Minimizes 1/2 ||K u - y_d||^2 + beta/2 ||u||^2 over cellwise bounds
a <= u <= b with a primal-dual active-set outer loop; the inactive-Hessian
systems are solved by CG or by CG preconditioned with a multigrid operator
built on coarsened inactive masks.  Ships an elliptic (Poisson) and a
Gaussian-deblurring realization of K plus desk-scale spectral diagnostics.
"""

from .blur import BlurOperator, GaussianBlurBackend, build_blur, consistency_rate
from .diagnostics import (
    DenseOperator,
    materialize,
    report_tests,
    spectral_distance,
    two_grid_rate_study,
)
from .elliptic import EllipticBackend, NodalField, PoissonSolveError
from .grid import (
    ActivePartition,
    CellField,
    GridHierarchy,
    InactiveMask,
    build_hierarchy,
    coarsen_inactive_set,
    domain_measure,
    inject,
    l2_inner,
    l2_norm,
    mask_project,
    numerical_boundary_measure,
    restrict_avg,
)
from .harness import ExperimentConfig, dump_field, make_instance, run_sweep
from .hessian import HessianHandle, recover_multiplier, subsystem_rhs
from .krylov import KrylovConfig, SolveReport, cg, pcg
from .mgprec import (
    MultigridBaseSolveError,
    PrecState,
    apply_S,
    apply_transfer,
    apply_Z,
    build_prec,
    predict_cost,
)
from .pdas import (
    LinearSolveFailure,
    OuterIterationLimit,
    ProblemInstance,
    SsnmState,
    kkt_residual,
    nested_solve,
    pdas_solve,
    update_sets,
)
from .targets import disk_inactive_mask, target_field

__version__ = "0.1.0"
