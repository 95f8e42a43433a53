"""Numerics for one-dimensional random Schroedinger operators.

Exact transfer-matrix propagation through piecewise-constant potentials,
Pruefer-variable evolution with parameter derivatives, finite-volume Green
functions by several independent routes, Lyapunov and Floquet analysis, and
reproducible Monte Carlo estimation of fractional Green-function moments and
eigenfunction correlators.
"""

from .errors import (
    Anderson1dError,
    ConfigError,
    DegenerateFit,
    EigenvalueHit,
    FlavorMismatch,
    InsufficientSamples,
    OutOfInterval,
    SingularReduction,
    ZeroState,
)
from .model import (
    Flavor,
    ModelSpec,
    PiecewiseConstantDensity,
    PotentialProfile,
    Realization,
    Uniform,
    build_profile,
    coupling_stream,
    default_continuum_spec,
    default_discrete_spec,
    sample_realization,
)
from .propagate import (
    ScaledMatrix2,
    State2,
    apply,
    cell_propagator,
    discrete_step,
    mass_lower_envelope,
    piece_l2,
    piece_l2_ordered_cross,
    transfer,
)
from .prufer import (
    Eigenpair,
    PruferState,
    cell_l2_masses,
    continuum_eigensystem_below,
    eigenvalue_count_below,
    evolve_prufer,
    phase_coupling_derivative,
    phase_energy_derivative,
    phase_splitting_residual,
    prufer_snapshots,
    to_prufer,
)
from .green import (
    DiscreteGreen,
    GreenSample,
    GreenStatus,
    continuum_green,
    continuum_green_data,
    discrete_green_solution_form,
    discrete_green_solve,
    hs_block_norm,
    krein_entry,
)
from .lyapunov import (
    FloquetData,
    InverseMomentTable,
    LyapunovEstimate,
    SpectralClass,
    floquet,
    furstenberg_inverse_moment,
    lyapunov_estimate,
)
from .moments import (
    AprioriScan,
    CorrelatorCurve,
    DecayFit,
    MomentCurve,
    apriori_bound_scan,
    centered_anchor,
    correlator_curve,
    default_apriori_energies,
    fit_decay,
    fractional_moment_curve,
)

__version__ = "0.1.0"
