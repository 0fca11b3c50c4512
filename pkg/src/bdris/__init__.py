"""Closed-form Max-Det BD-RIS design, rate bounds, q-stem circuit synthesis,
and a seeded Monte-Carlo experiment harness."""

from .channel import (
    ChannelParams,
    ChannelSet,
    Geometry,
    LinkBudget,
    build_channel_set,
    derive_seed,
    gen_rayleigh,
    gen_rician,
    path_loss,
    reference_snr_db,
)
from .designs import (
    BlockAlignment,
    DegenerateChannelError,
    ScatteringMatrix,
    StiefelFrame,
    maxdet_raw_svd,
    phase_correction,
    random_symmetric_unitary,
    rotated_family,
    solve_maxdet,
    unitary_baseline,
    verify_block_structure,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    emit_csv,
    load_config,
    m_sweep_summary,
    parse_config,
    run_experiment,
)
from .linalg import (
    CompactSVD,
    PrincipalAngleDecomposition,
    compact_svd,
    log_majorizes,
    orthonormal_complement,
    principal_angles,
    vectorize,
)
from .metrics import (
    MetricsRecord,
    abs_det,
    achievable_rate,
    d_max,
    equivalent_channel,
    error_term_bound,
    evaluate_design,
    rate_decomposition,
    rate_gap_bound,
)
from .qstem import (
    CayleySingularityError,
    QStemSystem,
    SingularMapError,
    SusceptanceMatrix,
    b_to_theta,
    build_selection_matrix,
    cayley_with_phase_fallback,
    complete_to_unitary,
    element_count,
    synthesize_qstem,
    theta_to_b,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
