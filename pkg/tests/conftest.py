import pytest

from saferoute import pipeline

CORRIDOR_PATH = ['116th', '110th', '103rd', '96th Red', '86th Red', '79th', '72nd Red', '66th', '59th',
              '50th Red', '42nd', '34th Yellow Orange', '28th Yellow', '23rd Yellow', 'Union Sq', '8th']


@pytest.fixture(scope="session")
def fixture_graph():
    return pipeline.load_graph()


@pytest.fixture(scope="session")
def fixture_incidents():
    return pipeline.load_incidents()


@pytest.fixture(scope="session")
def fixture_series(fixture_graph, fixture_incidents):
    return pipeline.station_series(fixture_graph, fixture_incidents)


@pytest.fixture(scope="session")
def safe_fixture_graph(fixture_graph, fixture_series):
    return fixture_graph.with_safety(pipeline.forecast_safety(fixture_series, "poisson"))
