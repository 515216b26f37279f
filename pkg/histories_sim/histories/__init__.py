"""Class operators, decoherence functionals and records."""
from histories_sim.histories.functional import (
    ConsistencyCheck,
    DecoherenceMatrix,
    EpsilonResult,
    Retrodiction,
    approx_decoherence_epsilon,
    coarse_grain_matrix,
    decoherence_functional,
    is_consistent,
    is_decoherent,
    linear_positivity,
    probability,
    retrodict,
    shannon_information,
    sum_rule_violation,
)
from histories_sim.histories.records import (
    RESIDUAL,
    RecordReport,
    RecordSet,
    construct_records,
    joint_probability,
    records_imply_decoherence,
)
from histories_sim.histories.schedule import (
    HistorySchedule,
    HistoryString,
    class_operator,
    class_operator_sum,
    class_operators,
    coarse_grain,
)

__all__ = [
    "RESIDUAL",
    "ConsistencyCheck",
    "DecoherenceMatrix",
    "EpsilonResult",
    "HistorySchedule",
    "HistoryString",
    "RecordReport",
    "RecordSet",
    "Retrodiction",
    "approx_decoherence_epsilon",
    "class_operator",
    "class_operator_sum",
    "class_operators",
    "coarse_grain",
    "coarse_grain_matrix",
    "construct_records",
    "decoherence_functional",
    "is_consistent",
    "is_decoherent",
    "joint_probability",
    "linear_positivity",
    "probability",
    "records_imply_decoherence",
    "retrodict",
    "shannon_information",
    "sum_rule_violation",
]
