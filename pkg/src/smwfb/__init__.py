"""Signal-matched multirate whitening filter bank.

An exact growing-memory least-squares lattice that splits a scalar stream
into M decimated channel outputs, each a constrained prediction error, so
that the outputs are decorrelated in time and across channels.
"""

from .signals import (
    ArModel,
    DataMatrix,
    DataVector,
    ExcitationSpec,
    Signal,
    apply_rational_filter,
    draw_excitation,
    generate_ar,
    make_data_matrix,
    make_data_vector,
)
from .lattice import (
    ChannelOutputs,
    WhitenerConfig,
    WhitenerState,
    init_state,
    op_counters,
    process_block,
    snapshot_registers,
    whiten,
)
from .coeffs import (
    CoefficientEstimator,
    CoefficientSet,
    FilterBankCoefficients,
    apply_direct_form,
    assemble_direct_form,
    solve_prefilter_a,
    update_coefficients,
)
from .metrics import (
    CodingGainReport,
    SpectrumEstimate,
    am_gm_report,
    coding_gain,
    convergence_report,
    spectral_flatness,
    welch_psd,
)
from .experiments import ExperimentConfig, default_config, run_experiment
from .verification import verify_coefficients, verify_lattice

__version__ = "0.1.0"
