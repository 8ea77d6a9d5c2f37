# This file makes the pdm_rank directory a Python package
__version__ = "1.0"
__commit_message__ = (
    "v1.0 Feature: rank based operation ordering for Product Data Models - parser/validator with dummy-vertex "
    "normalization, shortest-path rank values, meaningless-operation detection and interdependence surcharges, "
    "13 planners, seeded gaussian/uniform case simulation, optimal-path enumeration and CSV experiment report"
)

# Import key modules to make them available when importing the package
from pdm_rank.print_manager import print_manager
from pdm_rank.model_utils import (
    NormalizedGraph,
    Operation,
    PDMFormatError,
    PDMValidationError,
    ProductDataModel,
    Violation,
    load_pdm,
    normalize,
    parse_pdm,
    serialize_pdm,
    validate,
)
from pdm_rank.path_utils import (
    EnumerationCapError,
    LivenessRule,
    LivenessState,
    NoRootPathError,
    WeightKind,
    enumerate_complete_paths,
    interdependent_groups,
    rank_probability_path,
    shortest_root_path,
    update_liveness,
)
from pdm_rank.planner_utils import PlannerKind, baseline_score, next_operation, rank
from pdm_rank.simulation_utils import SettingConfig, SettingError, execute, root_producible, sample_instance
from pdm_rank.experiment_utils import (
    EmptyInputError,
    UnknownModelError,
    builtin_pdm,
    deviation_from_optimal,
    normalized_performance,
    run_experiment,
)
from pdm_rank.main import main
