"""implipde: implicit solution families of nonlinear PDEs, differentiated
exactly on second-order jets and verified against the equations they solve."""

from ._version import __version__
from .errors import (
    ArityError,
    EmptyLevelSetError,
    EvalDomainError,
    ExprSyntaxError,
    GateNotSatisfiedError,
    ImplipdeError,
    NoRootError,
    RankDeficientSystemError,
    ScenarioError,
    SingularPointError,
    SolverCoverageError,
    UnboundVariableError,
    UnknownFunctionError,
    ZeroDerivativeError,
)
from .expr import Expr, evaluate, free_vars, parse, substitute, sym_diff, to_string
from .jets import Jet2, jet_eval, lift
from .implicit import (
    Bracket,
    FieldJet,
    GridPointResult,
    Guess,
    ImplicitFamily,
    SampleSpec,
    field_jet,
    sample_grid,
    sample_points,
    solve_phi,
)
from .residuals import (
    ResidualReport,
    a_surface_residuals,
    bateman_residual,
    complex_bateman_residual,
    example2_residual,
    f_pair,
    first_order_system_residual,
    sum_bateman_residual,
    ufe_residual,
)
from .quadratic import (
    AnsatzState,
    SymFuncMatrix,
    build_state,
    closed_form_M,
    det_identity_check,
    discriminant,
    eliminant_residual,
    general_eliminant_residual,
    recover_M_linear,
    ufe_gate_verify,
)
from .families import (
    ExplicitField,
    FamilySpec,
    a_surface_family,
    bateman_family,
    chaundy_family,
    confocal_family,
    equipotential_check,
    expected_checks,
    explicit_complex_family,
    explicit_field_family,
    homogeneity_check,
    linear_family,
    quadratic_family,
    to_constraint,
)
from .scenario import ScenarioConfig, load_scenario
from .harness import Report, fuzz_identity, run_checks

__all__ = [name for name in dir() if not name.startswith("_")]
