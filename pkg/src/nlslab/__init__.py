"""Spectral-numerics lab for ill-posedness experiments on NLS flows.

Fields live on a uniform frequency lattice; the package provides the norm
calculators (Fourier-Lebesgue, modulation, cube-partition algebra), the
iterate-series machinery with its two-sided bounds, three-cube inflation
data and dominance sweeps, and multiphase geometric-optics experiments,
all behind a deterministic experiment CLI.
"""

__version__ = "0.1.0"

from .spectral import (  # noqa: F401
    AliasingError,
    FrequencyGrid,
    Galilean,
    GridError,
    OffLatticeError,
    PlaneWaveTwist,
    Scaling,
    SpectralField,
    Translate,
    apply_symmetry,
    band_limit,
    field,
    free_propagate,
    frequency_l2,
    load_field,
    make_grid,
    multiply_fields,
    physical_l2,
    save_field,
    sparsify,
    to_frequency,
    to_physical,
    zero_field,
)
from .norms import (  # noqa: F401
    INF,
    NormSpec,
    Partition,
    fourier_lebesgue_norm,
    lattice_weight_sum,
    ma_norm,
    modulation_norm_stft,
    modulation_norm_ud,
    norm_eval,
    sobolev_norm,
    weight_profile_fl,
    weight_profile_mod,
    x_norm,
)
from .picard import (  # noqa: F401
    PicardConfig,
    PicardExpansion,
    bound_audit,
    compositions,
    direct_first_iterate,
    mu_sigma,
    picard_sum,
    support_measure,
)
from .inflation import (  # noqa: F401
    DeskScaleOptions,
    InflationDataSpec,
    RegimeError,
    RegimeParams,
    make_inflation_data,
    regime_params,
    run_inflation_sweep,
)
from .wnlgo import (  # noqa: F401
    ProfilePath,
    ProfileSet,
    WnlgoRunConfig,
    assemble_uapp,
    evolve_profiles,
    first_generation_closure,
    j_window,
    make_initial_profiles,
    resonance_cubic_oracle,
    resonance_set,
    run_loss_experiment,
    wnlgo_error,
    zero_mode_rate_check,
)
from .solver import split_step  # noqa: F401
