"""Convolution quadrature time stepping for quasilinear subdiffusion in 1-D.

Caputo derivatives are discretised by BDF1/BDF2 convolution quadrature (L1 as
a baseline), space by piecewise-linear finite elements, and the nonlinearity
is treated semi-implicitly.  Long histories can be evaluated in compressed
form through a sum of exponentials.
"""
from ._backend import BACKEND
from .cq import (
    Admissibility,
    Kind,
    Method,
    WeightTable,
    apply_discrete_operator,
    bdf2_weight_closed_form,
    check_admissible,
    generate_weights,
    l1_weights,
    partial_sums_defect,
)
from .exceptions import (
    AssemblyError,
    ConfigError,
    InvalidFixtureError,
    NonAdmissibleError,
    SingularMatrixError,
    UndefinedOrderError,
)
from .experiments import (
    ErrorReport,
    StudyConfig,
    aitken_order,
    aitken_study,
    convergence_study,
    manufactured_problem,
    porous_problem,
    timing_comparison,
)
from .fem1d import Mesh1D, ProblemSpec, assemble_load, assemble_mass, assemble_stiffness, l2_error, l2_norm
from .inequalities import verify_coercivity, verify_integrated_bound, verify_suite
from .soe import CompressedHistory, history_fast, soe_quadrature
from .special import mittag_leffler
from .stepper import HistoryMode, TimeGrid, Trajectory, run, step_direct, step_l1, step_velocity

__version__ = "0.1.0"
