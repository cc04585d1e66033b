"""Two-grid P1 finite element solvers for parabolic integro-differential
equations with nonlinear memory, plus a convergence-study harness."""

__version__ = "0.1.0"

from .assembly import (
    FormVariant,
    ProblemSpec,
    QpFields,
    apply_dirichlet,
    assemble_B_jacobian,
    assemble_B_vector,
    assemble_Btilde_matrix,
    assemble_load_vector,
    assemble_mass,
    assemble_stiffness,
    fe_qp_fields,
    identity_diffusion,
)
from .memory import MemoryHistory, MemoryWeights
from .mesh import (
    FeFunction,
    Mesh,
    Rectangle,
    build_mesh,
    eval_gradient_on_mesh,
    eval_on_mesh,
    locate_point,
    locate_points,
)
from .problems import (
    ManufacturedProblem,
    StabilityConstants,
    forcing_value,
    heat_problem,
    make_problem,
    section5_constants,
    section5_problem,
)
from .schemes import (
    RunResult,
    SCHEME_NAMES,
    StabilityDiagnostics,
    StepsizeCheck,
    check_stepsize,
    make_driver,
    run,
)
from .solvers import (
    NewtonError,
    SolverConfig,
    SolverError,
    newton_solve,
    solve_nonsymmetric,
    solve_spd,
)
from .verification import (
    ConvergenceReport,
    StudyRow,
    error_norms,
    run_convergence_study,
    table1_rows,
    table2_rows,
)

__all__ = [name for name in dir() if not name.startswith("_")]
