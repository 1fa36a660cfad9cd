"""Central-spin decoherence in interacting spin baths.

Cluster-correlation expansion engines (projected, generalized, sampled,
dissipative), classical filter-function noise models, bath generation
on lattices, and exact small-system references for validation.
"""

from .bath import (
    BathSpin,
    ClusterSet,
    ConnectivityGraph,
    Couplings,
    SpinSystem,
    Supercell,
    build_connectivity,
    compute_couplings,
    diamond_supercell,
    enumerate_clusters,
    generate_bath,
    parse_bath_file,
    parse_cell_file,
    sic_supercell,
    write_bath_file,
)
from .cce import (
    CoherenceCurve,
    EngineConfig,
    ProjectedPair,
    QubitLevels,
    StretchedFit,
    autocorrelation_cce,
    cce_expand,
    cluster_coherence,
    fit_stretched,
    gcce_expand,
    levels_from_labels,
    lindblad_cluster,
    mean_field_levels,
    project_hamiltonian,
    sampled_expand,
    simulate_coherence,
)
from .noise import (
    BlochParams,
    SpectralDensity,
    bloch_solve,
    compose_t2,
    correlation_from_spectrum,
    filter_freq,
    filter_time,
    gaussian_coherence,
    read_spectrum_file,
    relaxation_from_spectrum,
    spectrum_from_correlation,
    write_spectrum_file,
)
from .oracle import OracleLimits, exact_coherence, exact_lindblad, ou_monte_carlo
from .pulses import PulseSequence
from .spinops import (
    CentralSpin,
    SpinOperators,
    SpinSpecies,
    assemble_cluster_hamiltonian,
    dipolar_tensor,
    hyperfine_components,
    load_isotopes,
    quadrupole_term,
    spin_matrices,
    zeeman_term,
    zfs_term,
)

__version__ = "0.1.0"
