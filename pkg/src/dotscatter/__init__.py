"""Open-boundary scattering of an electron off quantum-dot bound electrons.

The package solves the time-independent Schrödinger equation on a finite
1D lattice with transparent leads for one free electron hitting one (single
dot) or two (double dot) bound electrons, extracts per-channel reflection
and transmission amplitudes, and reduces them to the von Neumann
entanglement entropy between the scattered carrier and the dot.
"""

__version__ = "0.1.0"

from .bound import (
    BoundStateSet,
    TwoParticleBoundSet,
    hamiltonian_1d,
    solve_bound_states_1d,
    solve_bound_states_2p,
)
from .channels import (
    Channel,
    ChannelAmplitudes,
    boundary_factors,
    extract_amplitudes,
    open_channels,
    post_select,
)
from .entanglement import (
    EntropyRecord,
    ReducedDensityMatrix,
    entropy_record,
    reduce_density_matrix,
    von_neumann_entropy,
)
from .errors import (
    ContaminatedLeadError,
    GeometryError,
    InsufficientBasisError,
    InvalidParameterError,
    NumericalConsistencyError,
    PostSelectionError,
    ResourceLimitError,
    SimulationError,
    SolverConvergenceError,
    UnitarityError,
    WindowTooSmallError,
)
from .model import (
    Grid1D,
    InteractionTaper,
    MaterialParams,
    PotentialProfile,
    build_potential,
    coulomb_kernel_matrix,
    make_material,
    pair_interaction,
)
from .oracle import (
    analytic_transmission_1d,
    build_coupled_channel_system,
    coupled_channel_solve,
    coupled_channel_with_truncation_check,
    dense_eigensolve_small,
    lattice_transmission_1d,
)
from .scattering import (
    PairScatteringModel,
    ScatteringProblem,
    ScatteringSolution,
    TripleScatteringModel,
    dump_wavefunction,
    load_wavefunction,
)
from .sweep import (
    SpectrumReport,
    SweepConfig,
    SweepResult,
    SweepRow,
    report_spectrum,
    run_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
