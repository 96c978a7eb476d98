"""Safety-aware subway routing: incident forecasting plus shortest paths."""

from .errors import (DataError, FitError, NegativeCycleError, NegativeWeightError,
                     PolicyNotConvergedError, SafeRouteError, TrainingError, UnknownStationError)
from .graph import RouteGraph, Station, StationRecord, TrackSegment, WeightedDigraph, build_graph, neighbors
from .ingest import IncidentSeries, aggregate_series, safety_coefficient, safety_coefficients, split_train_test
from .linear_models import ModelCoefficients, fit_lasso, fit_ols, fit_poisson, fit_ridge
from .recurrent import GruParams, LstmParams, RecurrentModel, bptt_gradients, forward_sequence, gru_step, lstm_step
from .routing import QLearningConfig, ShortestPathResult, bellman_ford, dijkstra, q_learning, route
from .evaluate import ComparisonReport, evaluate_all, rmse

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "FitError",
    "NegativeCycleError",
    "NegativeWeightError",
    "PolicyNotConvergedError",
    "SafeRouteError",
    "TrainingError",
    "UnknownStationError",
    "RouteGraph",
    "Station",
    "StationRecord",
    "TrackSegment",
    "WeightedDigraph",
    "build_graph",
    "neighbors",
    "IncidentSeries",
    "aggregate_series",
    "safety_coefficient",
    "safety_coefficients",
    "split_train_test",
    "ModelCoefficients",
    "fit_lasso",
    "fit_ols",
    "fit_poisson",
    "fit_ridge",
    "GruParams",
    "LstmParams",
    "RecurrentModel",
    "bptt_gradients",
    "forward_sequence",
    "gru_step",
    "lstm_step",
    "QLearningConfig",
    "ShortestPathResult",
    "bellman_ford",
    "dijkstra",
    "q_learning",
    "route",
    "ComparisonReport",
    "evaluate_all",
    "rmse",
]
