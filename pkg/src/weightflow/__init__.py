"""Differentially private measurement and synthesis of weighted datasets.

The pieces, bottom up:

core        weighted datasets, deltas, record codec
transforms  stable dataset-to-dataset operators (batch evaluation)
plan        dataflow graphs over those operators, with static use counts
engine      incremental evaluation of plans under small input deltas
privacy     Laplace noise, measurements, budget accounting
graphs      graph statistics expressed as plans, degree regression,
            baselines and benchmark generators
inference   seed graphs and the measurement-guided edge-swap chain
cli         the command line front end
"""

from .core import (
    DeltaBatch,
    Record,
    WeightedDataset,
    apply_delta,
    difference_norm,
    encode_record_text,
    parse_record_text,
    record_sort_key,
    validate_record,
    weight_of,
)
from .engine import DiscrepancyTracker, EvalState
from .plan import PlanBuilder, QueryPlan
from .privacy import (
    BudgetAccount,
    BudgetExceededError,
    Measurement,
    NoiseSource,
    count_uses,
    derive_seed,
    laplace_from_uniform,
    measure_plan,
    noisy_count,
)
from .transforms import (
    concat,
    except_,
    group_by,
    intersect,
    join,
    select,
    select_many,
    shave,
    union,
    where,
)

__all__ = [
    "BudgetAccount",
    "BudgetExceededError",
    "DeltaBatch",
    "DiscrepancyTracker",
    "EvalState",
    "Measurement",
    "NoiseSource",
    "PlanBuilder",
    "QueryPlan",
    "Record",
    "WeightedDataset",
    "apply_delta",
    "concat",
    "count_uses",
    "derive_seed",
    "difference_norm",
    "encode_record_text",
    "except_",
    "group_by",
    "intersect",
    "join",
    "laplace_from_uniform",
    "measure_plan",
    "noisy_count",
    "parse_record_text",
    "record_sort_key",
    "select",
    "select_many",
    "shave",
    "union",
    "validate_record",
    "weight_of",
    "where",
]

__version__ = "0.1.0"
