"""Bus route planning that trades off commuting demand against transit connectivity."""

__version__ = "0.1.0"

from .candidates import (
    CandidateEdge, EdgeTable, Normalizers, RankedEdgeList, build_ranked_lists, compute_deltas,
    compute_normalizers, connectivity_increment, generate_candidate_edges, greedy_topk_edges, precompute,
)
from .errors import (
    CTBusError, ConfigurationError, ConvergenceError, EmptyGraphError, IntegrityError, NoPathError,
    ParseError, PlanningError, SizeLimitError,
)
from .graph import RoadNetwork, RoutePath, Stop, TransitNetwork, shortest_path, straight_line_distance
from .netio import load_road_network, load_trajectories, load_transit_network
from .planner import PlannerConfig, PlanResult, feasibility_check, plan_multi_route, run_eta, run_vk_tsp
from .spectral import (
    ConnectivityEstimator, SpectralParams, estrada_upper_bound, general_upper_bound,
    natural_connectivity, natural_connectivity_exact, path_upper_bound,
)

__all__ = [
    "CandidateEdge", "EdgeTable", "Normalizers", "RankedEdgeList", "build_ranked_lists", "compute_deltas",
    "compute_normalizers", "connectivity_increment", "generate_candidate_edges", "greedy_topk_edges",
    "precompute", "CTBusError", "ConfigurationError", "ConvergenceError", "EmptyGraphError",
    "IntegrityError", "NoPathError", "ParseError", "PlanningError", "SizeLimitError", "RoadNetwork",
    "RoutePath", "Stop", "TransitNetwork", "shortest_path", "straight_line_distance", "load_road_network",
    "load_trajectories", "load_transit_network", "PlannerConfig", "PlanResult", "feasibility_check",
    "plan_multi_route", "run_eta", "run_vk_tsp", "ConnectivityEstimator", "SpectralParams",
    "estrada_upper_bound", "general_upper_bound", "natural_connectivity", "natural_connectivity_exact",
    "path_upper_bound",
]
