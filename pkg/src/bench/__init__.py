from .catalog import GeneratorConfig, Catalog, QueryTemplate, CardinalityErrors, make_templates, sample_query
from .execution import PlanCostProfile, apply_timeout, build_profile, node_cardinalities, simulate_execution
from .generator import generate_workload, generate_from_config, generate_calibration_workload
from .pcf import LinearPCF, VarianceDecomposition, decompose_variance_closed_form, decompose_variance_monte_carlo
from .plans import HINT_SETS, enumerate_plans
