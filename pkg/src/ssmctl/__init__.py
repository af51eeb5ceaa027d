"""Controllability-based influence scores and heatmaps for selective SSMs."""

from .core import (
    DenseLTISystem,
    DiscretizedDiagonalStep,
    StateTrajectory,
    TimeVaryingDiagonalSystem,
    convolution_kernel,
    convolve_output,
    discretize_zoh_dense,
    discretize_zoh_diagonal,
    recurrent_scan,
)
from .errors import (
    CorruptArchive,
    InvalidArchive,
    InvalidInput,
    InvalidParameter,
    NumericalFailure,
    ParseError,
    ResourceLimit,
    SchemaError,
    ShapeError,
    SsmctlError,
    UnstableSystem,
)
from .influence import (
    GramianDiagnostics,
    InfluenceScores,
    Method,
    Propagator,
    finite_difference_gap_jacobian,
    future_propagator,
    gap_jacobian_analytic,
    gap_output,
    gramian_closed_form_diag,
    gramian_diagnostics,
    gramian_finite_horizon,
    gramian_influence_score,
    influence_scores,
    jacobian_influence_exact,
    jacobian_influence_propagator,
    lyapunov_residual,
    naive_final_state_influence,
    output_jacobian,
)
from .scan2d import (
    ALL_DIRECTIONS,
    GridShape,
    InfluenceMap,
    LayerAnalysis,
    ScanDirection,
    aggregate_directions,
    analyze_layer,
    flatten,
    sequence_order,
    unflatten_scores,
)
from .archive import (
    LayerParams,
    TensorArchive,
    layer_params,
    load_archive,
    load_layer_systems,
    read_archive,
    save_archive,
    synth_model,
    write_archive,
)

__version__ = "0.1.0"
