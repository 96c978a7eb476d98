"""Exception types shared across the package."""


class SafeRouteError(Exception):
    """Base class for every error raised by saferoute."""


class DataError(SafeRouteError, ValueError):
    """Malformed input file or record."""


class UnknownStationError(SafeRouteError, KeyError):
    def __init__(self, name, suggestions=()):
        self.name = name
        self.suggestions = list(suggestions)
        msg = f"unknown station {name!r}"
        if self.suggestions:
            msg += "; did you mean " + ", ".join(repr(s) for s in self.suggestions) + "?"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class FitError(SafeRouteError, ArithmeticError):
    """A model could not be fitted to the given data."""


class TrainingError(FitError):
    """Recurrent training diverged even after learning-rate restarts."""


class NegativeWeightError(SafeRouteError, ValueError):
    """Dijkstra was handed a graph with a negative edge weight."""


class NegativeCycleError(SafeRouteError):
    def __init__(self, msg="negative cycle exists"):
        super().__init__(msg)


class PolicyNotConvergedError(SafeRouteError):
    """Greedy extraction from a Q-table revisited a state before the goal."""

    def __init__(self, partial_path):
        self.partial_path = list(partial_path)
        super().__init__(
            "policy not converged: greedy walk revisited "
            f"{self.partial_path[-1]!r} after {len(self.partial_path) - 1} steps"
        )
