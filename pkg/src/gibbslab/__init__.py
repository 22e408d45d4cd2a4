"""gibbslab: a desk-scale laboratory for channel circuits that connect
thermal states of local Hamiltonians, with every structural inequality
turned into an executable check."""

__version__ = "0.1.0"

from .model import (
    AnnulusPartition,
    BlockPartition,
    InteractionFamily,
    InteractionTerm,
    Lattice,
    Region,
    annulus_partition,
    block_partition,
    build_lattice,
    gibbs_state,
    ground_state_projector,
    heisenberg_chain,
    ising_chain,
    load_family,
    local_algebra,
    tfim_chain,
    toric2d_family,
)
from .qcore import (
    ChannelGate,
    DenseOperator,
    DenseState,
    apply_gate,
    cmi,
    embed_operator,
    entropy,
    fidelity,
    induced_trace_norm_lb,
    matrix_function,
    mutual_information,
    partial_trace,
    trace_distance,
    trace_norm,
)
from .recovery import (
    QuadratureSpec,
    RecoveryMap,
    beta0,
    petz_recovery,
    twirled_recovery,
)
from .correlations import (
    clustering_scan,
    covariance,
    covariance_fixed_observable,
    stable_clustering_probe,
)
from .qbp import (
    belief_propagation_operator,
    response_bound_check,
    response_identity_check,
)
from .circuits import (
    ChannelCircuit,
    global_variation_circuit,
    li_audit,
    local_variation_gate,
    lr_audit,
)
from .lindblad import (
    LocalLindbladian,
    commuting_flow_generator,
    drift_bound_check,
    flow_integrate,
    flow_residual_check,
    heatbath_generator,
)
from .stabilizer import (
    PauliWord,
    StabilizerModel,
    boundary_algebra_equality,
    ising_disorder_parameter,
    stab_expectation,
    toric2d_loop_correlators,
    toric2d_model,
)
from .memory import (
    QuantumCode,
    certify_code,
    memory_bound_audit,
    memory_experiment,
    repetition_code,
)
