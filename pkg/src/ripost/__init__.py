"""Differentially private two-phase domain decomposition for count range queries."""

from .budget import (
    BudgetLedger,
    BudgetSplit,
    SeriesParams,
    get_weight,
    iteration_budget,
    series_slack,
    split_budget,
)
from .decomposer import (
    Block,
    ConvergenceReport,
    DecompositionConfig,
    LeafBlock,
    decompose,
    perturb_leaves,
    secure_cc,
    secure_ss,
    skip_cc_schedule,
)
from .errors import (
    BudgetViolation,
    ConfigError,
    DomainError,
    FormatError,
    IngestionError,
    QueryError,
    RipostError,
)
from .mechanisms import NoiseMode, RngStream, exp_mech_select, laplace
from .metrics import CutPoint, Metric, aggregation_error, score_sensitivity, split_score
from .tensor import CountTensor, Domain, Rect, count_empty_nonempty, ingest_csv, sum_cells
from .view import (
    PrivateView,
    RangeQuery,
    answer,
    answer_exact,
    build_index,
    load_view,
    make_view,
    save_view,
)

__version__ = "0.1.0"
