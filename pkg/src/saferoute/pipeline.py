"""Glue from raw files to a safety-weighted graph."""

from __future__ import annotations

from importlib import resources
from typing import Mapping, Optional

from . import ingest
from .evaluate import ModelSettings, fit_forecast
from .graph import RouteGraph, build_graph, load_station_file


def fixture_path(name: str):
    """Path to a bundled fixture file (``stations.csv`` or ``incidents.csv``)."""
    return resources.files("saferoute") / "data" / name


def load_graph(stations_path=None) -> RouteGraph:
    return build_graph(load_station_file(stations_path or fixture_path("stations.csv")))


def load_incidents(incidents_path=None) -> ingest.IncidentLog:
    return ingest.load_incident_file(incidents_path or fixture_path("incidents.csv"))


def station_series(graph: RouteGraph, incidents, radius_km=ingest.DEFAULT_RADIUS_KM, bucket="monthly",
                   start=ingest.DEFAULT_START, end=ingest.DEFAULT_END) -> dict:
    return ingest.aggregate_many(incidents, graph.stations.values(), radius_km, bucket, start, end)


def forecast_safety(series: Mapping, model: str = "poisson",
                    settings: ModelSettings = ModelSettings()) -> dict:
    """Fit ``model`` on each full series, forecast one bucket, normalize to safety."""
    nxt = {sid: fit_forecast(model, s.values(), 1, settings)[0] for sid, s in series.items()}
    return ingest.safety_coefficients(nxt, model=model)


def safe_graph(stations_path=None, incidents_path=None, model: Optional[str] = "poisson",
               settings: ModelSettings = ModelSettings(), safety_mode: str = "destination",
               **series_kw) -> RouteGraph:
    """Station graph weighted by forecast safety; ``model=None`` gives unit safety."""
    graph = load_graph(stations_path)
    if model is None:
        return graph.with_safety({}, safety_mode)
    series = station_series(graph, load_incidents(incidents_path), **series_kw)
    return graph.with_safety(forecast_safety(series, model, settings), safety_mode)
