"""farfield2d: far-field asymptotics of 2D Fourier integrals whose
integrands are singular along real curves, with numerical validation by
quadrature over explicitly deformed integration surfaces in C^2."""

from .asymptotics import (
    Contribution,
    CrossingData,
    SosData,
    assemble_far_field,
    crossing_contribution,
    fresnel_I,
    local_data_at,
    power_J,
    saddle2d_estimate,
    sos_contribution,
)
from .bridges import BridgeConfig, bridge_config_for_model, bypass_side, determine_bridge
from .classify import (
    SpecialPoint,
    additivity_monodromy,
    additivity_structural,
    classify_activity,
    find_crossings,
    find_sos_points,
)
from .errors import (
    AmbiguousBridgeError,
    BoundaryDirectionError,
    CutProximityError,
    DegenerateGradientError,
    DegenerateSaddleError,
    ExpressionSyntaxError,
    NonSingularExponentError,
    PatchConstructionError,
    SurfaceVerificationError,
    TangentDirectionError,
    UnknownIdentifierError,
    UnsupportedConfigurationError,
)
from .expressions import (
    Expr,
    Jet,
    RealPropertyReport,
    SingularComponent,
    Term,
    WaveFunctionModel,
    check_real_property,
    evaluate_jet,
    parse_expression,
)
from .quadrature import (
    IntegrationReport,
    QuadratureConfig,
    branch_evaluate,
    branch_power,
    integrate_on_surface,
    integrate_reference,
)
from .scenarios import (
    BUILTIN_SCENARIOS,
    ConvergenceReport,
    RunResult,
    Scenario,
    builtin_scenario,
    convergence_report,
    dumps_scenario,
    load_scenario,
    loads_scenario,
    run_scenario,
    save_scenario,
)
from .surfaces import (
    DeformationField,
    FieldParams,
    SurfaceReport,
    build_global_field,
    crossing_patch,
    sos_patch,
    verify_field,
)
from .tracing import (
    TRACE_TOL,
    LocalFrame,
    RealTrace,
    alpha_at,
    frame_at,
    trace_real_curves,
)

__version__ = "0.1.0"
