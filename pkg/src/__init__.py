from .models import (CostDistribution, JoinEdge, Label, PlanNode, PlanTree, QueryGlobals, QueryGraph, TableNode,
                     Violation, Workload, WorkloadSample, validate, validate_plan)
from .datasources import WorkloadFile, deserialize_workload, load_config, serialize_workload
from .errors import (ConfigurationError, RoqError, ShapeError, TrainingDivergedError, ValidationError,
                     WorkloadIOError)
from .risk import RiskMatrix, build_risk_matrix, normal_cdf, pairwise_risk, sor, sor_values
from .selection import (BaseStrategy, ConservativeStrategy, PrunedStrategy, RiskStrategy, SelectionResult,
                        fs_from_alpha, prune, select_base, select_by_sor, select_conservative, strategy_from_tag,
                        tune_parameters)
from .metrics import MetricsReport, classify_queries, percentile, q_error, spearman, suboptimality
from .utility import LapTimer, derive_seed
