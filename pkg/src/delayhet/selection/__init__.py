from .baselines import (
    FlanpState,
    facility_location_greedy,
    select_divfl,
    select_flanp,
    select_power_of_choice,
    select_random,
)
from .objectives import AssumptionViolation, SamplingObjective, SubmodularObjective, g_dist_value, g_set_value
from .sampling import SamplingResult, minimize_g_sampling, project_simplex, sample_multiset
from .strategies import (
    DivFLSelector,
    FixedDistributionSelector,
    FixedSetSelector,
    FlanpSelector,
    PowerOfChoiceSelector,
    RandomSelector,
    SamplingSelector,
    Selector,
    SubmodularSelector,
)
from .submodular import SubmodularResult, exhaustive_minimize, minimize_g_submodular, prefix_minimize

__all__ = [
    "AssumptionViolation",
    "DivFLSelector",
    "FixedDistributionSelector",
    "FixedSetSelector",
    "FlanpSelector",
    "FlanpState",
    "PowerOfChoiceSelector",
    "RandomSelector",
    "SamplingObjective",
    "SamplingResult",
    "SamplingSelector",
    "Selector",
    "SubmodularObjective",
    "SubmodularResult",
    "SubmodularSelector",
    "exhaustive_minimize",
    "facility_location_greedy",
    "g_dist_value",
    "g_set_value",
    "minimize_g_sampling",
    "minimize_g_submodular",
    "prefix_minimize",
    "project_simplex",
    "sample_multiset",
    "select_divfl",
    "select_flanp",
    "select_power_of_choice",
    "select_random",
]
