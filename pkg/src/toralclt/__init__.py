"""Statistics of toral automorphism orbit sums driven by random words
of unimodular integer matrices: exact L2 norms and variances via
frequency collision scans, separation certificates for gapped
frequency sums, coboundary detection, spectral machinery for positive
2x2 letters, and Monte Carlo CLT experiments with quantitative
characteristic-function bounds.
"""

from .clt_harness import (
    CltExperiment,
    CltReport,
    EsseenBound,
    KomlosQuantities,
    KomlosReport,
    ZeroVarianceError,
    empirical_char_gap,
    esseen_bound,
    komlos_quantities,
    ks_statistic,
    rate_exponent,
    run_clt,
    verify_komlos_inequalities,
)
from .ergodic_stats import (
    BlockScheme,
    CoboundaryReport,
    GapBoundError,
    NONZERO_VARIANCE_CERTIFIED,
    TELESCOPE_FOUND,
    UNDECIDED,
    blocked_quantities,
    coboundary_detect,
    ergodic_sum,
    exact_l2_norm_sq,
    quenched_variance_curve,
    variance_series,
)
from .exact_linalg import (
    Alphabet,
    IntMatrix,
    Word,
    alphabet_from_json,
    alphabet_to_json,
    iwasawa,
    prefix_products,
    product,
    standard_alphabet,
    sup_norm,
    vec_sup_norm,
)
from .freq_lattice import (
    HOLDS_CERTIFIED,
    HOLDS_EXHAUSTIVE,
    VIOLATED,
    BudgetExceeded,
    SeparationInstance,
    SeparationReport,
    check_separation,
    pushforward,
    verify_witness,
    zero_integral_check,
)
from .random_products import (
    ExplicitSource,
    IIDSource,
    RotationSource,
    empirical_block_norm_growth,
    empirical_small_norm,
    empirical_stationary_direction,
    growth_diagnostics,
    invariant_union_search,
    proximality_heuristic,
    sample_word,
)
from .sl2_positive import (
    ConeCapExceeded,
    DilationConstants,
    GapChoice,
    NonHyperbolicError,
    SpectralData,
    cone_entry_time,
    dilation_constants,
    gap_for_freq_bound,
    spectral,
)
from .test_functions import (
    HolderFn,
    RegularSetIndicator,
    TrigPoly,
    center,
    fejer_approx,
    fejer_order_for_sum_error,
)
from .torus_dynamics import (
    DEFAULT_MODULUS,
    ModularPoint,
    apply,
    batch_apply,
    batch_uniform,
    orbit,
    sample_uniform,
)

__version__ = "0.1.0"
