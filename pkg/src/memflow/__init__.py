"""memflow: spectral toolkit for heat flows with a real-analytic memory kernel.

Simulates the flow per eigenmode by three independent methods, measures the
geometry of space-time observation sets, estimates two-sided and null
observability constants at spectral truncation, and uses them to reconstruct
initial data from masked observations and to steer to smooth targets with
minimal-norm controls.
"""

from .flow import (
    DecompositionParts,
    FlowTable,
    QuadratureError,
    RouteMismatchError,
    StepSizeError,
    build_flow_table,
    decomposition_mode,
    first_nonzero_h_index,
    flow_apply,
    flow_table_to_csv,
    forced_solution,
    kernel_rep_mode,
    kernel_rep_profile,
    remainder_RN_mode,
    remainder_bound,
    remainder_profile,
    volterra_influence,
    volterra_mode,
    volterra_modes,
)
from .geometry import (
    Mask,
    analytic_lower_bound_check,
    ball_average,
    ball_complement_mask,
    cusp_mask,
    cylinder_mask,
    load_mask,
    mask_from_text,
    mask_generate,
    mask_to_text,
    moc_functional,
    random_rects_mask,
    save_mask,
    slice_measure,
    weighted_slice,
    zigzag_mask,
)
from .inverse_control import (
    ControlProblem,
    ControlResult,
    ReconstructionProblem,
    SingularSystemError,
    discrepancy_lambda,
    duality_range_test,
    min_norm_control,
    reachability_matrix,
    reachable_difference_check,
    reconstruct_y0,
    synthesize_observation,
)
from .kernels import (
    BivariateKernel,
    ExpPolyFn,
    KernelParseError,
    Term,
    TruncationError,
    conv_power,
    format_kernel,
    h_coeff,
    kernel_c_norm,
    km_partial,
    p_coeff,
    parse_kernel,
)
from .observability import (
    ObsReport,
    ObsSetup,
    alpha_probe,
    bump_vector,
    gram_matrix,
    heat_local_probe,
    missing_ball_probe,
    null_obs_constant,
    obs_seminorm,
    obs_seminorm_many,
    relaxed_inequality_fit,
    two_sided_constants,
    unique_continuation_rank,
)
from .spectral import (
    EigenBasis,
    SpectralVec,
    apply_A_power,
    apply_minus_A_power,
    evaluate_on_grid,
    hs_norm,
    interval_basis,
    project_function,
    vec_from_csv_line,
    vec_to_csv_line,
)

__version__ = "0.1.0"
