"""Output-size bounds for full conjunctive queries from ℓp-norms of degree sequences."""

from .bounds import (
    BoundCertificate,
    BoundReport,
    agm_bound,
    applicable_closed_forms,
    closed_form,
    panda_bound,
    polymatroid_bound,
    verify_certificate,
)
from .entropy_lp import build_lp, shannon_constraints
from .eval_oracle import evaluate_join, join_size
from .query_model import Query, VarSet, parse_query
from .simplex import solve
from .stats_engine import (
    ConcreteStatistic,
    Relation,
    StatisticsSet,
    compute_statistics,
    default_statistics,
    degree_sequence,
    log_lp_norm,
)

__version__ = "0.1.0"

__all__ = [
    "BoundCertificate",
    "BoundReport",
    "ConcreteStatistic",
    "Query",
    "Relation",
    "StatisticsSet",
    "VarSet",
    "agm_bound",
    "applicable_closed_forms",
    "build_lp",
    "closed_form",
    "compute_statistics",
    "default_statistics",
    "degree_sequence",
    "evaluate_join",
    "join_size",
    "log_lp_norm",
    "panda_bound",
    "parse_query",
    "polymatroid_bound",
    "shannon_constraints",
    "solve",
    "verify_certificate",
]
