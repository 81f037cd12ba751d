"""Pauli-frame Monte Carlo for Steane-code error correction with verified or decoded ancillas."""

from .code import (
    STEANE,
    CodeSpec,
    compute_syndrome,
    logical_outcome,
    lookup_correction,
    plus_encoder,
    reduce_mod_stabilizers,
    zero_encoder,
)
from .experiments import (
    AggregateResult,
    PLEstimate,
    TrialConfig,
    ancilla_failure_rate,
    estimate_PL,
    estimate_point,
    run_sweep,
    run_trial,
    simulate_basis,
)
from .frame import CircuitError, GateOp, PauliFrame, ScheduledCircuit, gate, propagate
from .noise import ErrorClass, GateErrorRates, enumerate_fault_space, sample_faults
from .oracle import (
    FaultOrderExpansion,
    Tableau,
    enumerate_logical_failures,
    tableau_run,
    validate_engine,
)
from .protocols import (
    Protocol,
    ProtocolError,
    QecRoundOutcome,
    Timing,
    build_verified_ancilla_gadget,
    run_decoding_qec_round,
    run_full_qec,
    run_steane_extraction,
    run_verification_qec_round,
)
from .reporting import ResultRecord, read_records, write_records

__version__ = "0.1.0"
