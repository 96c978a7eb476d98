"""RMSE comparison of the six forecasters over every station's holdout."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from . import linear_models, recurrent
from .errors import SafeRouteError

logger = logging.getLogger(__name__)

ALL_MODELS = ("poisson", "ols", "ridge", "lasso", "lstm", "gru")


def rmse(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise ValueError("rmse of zero points is undefined")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


@dataclass(frozen=True)
class ModelSettings:
    lam: float = linear_models.DEFAULT_LAMBDA
    train: recurrent.TrainConfig = recurrent.TrainConfig()


def fit_forecast(kind: str, values, horizon: int, settings: ModelSettings = ModelSettings()) -> list:
    """Fit ``kind`` on ``values`` and forecast the next ``horizon`` points."""
    values = np.asarray(values, dtype=float)
    if kind in linear_models.MODEL_KINDS:
        m = linear_models.fit(kind, linear_models.design_for_series(values), settings.lam)
        return linear_models.forecast_trend(m, len(values), horizon)
    if kind in recurrent.KINDS:
        model = recurrent.train(values, settings.train, kind)
        return recurrent.forecast(model, values, horizon)
    raise ValueError(f"unknown model {kind!r}; expected one of {ALL_MODELS}")


@dataclass(frozen=True)
class EvaluationRow:
    station_id: str
    model_kind: str
    rmse: float


@dataclass
class ComparisonReport:
    rows: list
    per_model_average: dict
    failures: list = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows, failures=()) -> "ComparisonReport":
        by_model: dict = {}
        for r in rows:
            by_model.setdefault(r.model_kind, []).append(r.rmse)
        averages = {m: math.fsum(v) / len(v) for m, v in by_model.items()}
        return cls(list(rows), averages, list(failures))

    def check(self):
        """Recompute the averages from the rows; raises if they disagree."""
        again = ComparisonReport.from_rows(self.rows).per_model_average
        if again.keys() != self.per_model_average.keys() or any(
                abs(again[k] - self.per_model_average[k]) > 1e-12 for k in again):
            raise SafeRouteError("report averages do not match its rows")
        return self

    def to_dict(self) -> dict:
        return {
            "rows": [{"station": r.station_id, "model": r.model_kind, "rmse": r.rmse} for r in self.rows],
            "averages": dict(self.per_model_average),
            "failures": [dict(f) for f in self.failures],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["station", "model", "rmse"])
        for r in self.rows:
            w.writerow([r.station_id, r.model_kind, repr(r.rmse)])
        return buf.getvalue()


Forecaster = Callable[[np.ndarray, int], Sequence[float]]


def evaluate_all(splits: Mapping, models: Union[Sequence[str], Mapping[str, Forecaster]] = ALL_MODELS,
                 settings: ModelSettings = ModelSettings()) -> ComparisonReport:
    """One RMSE row per (station, model) on the held-out buckets.

    ``models`` is either model names or a mapping of name to a custom
    ``forecaster(train_values, horizon)``. A model that fails on a station is
    logged and recorded in ``failures`` instead of aborting the run.
    """
    if not isinstance(models, Mapping):
        models = {k: None for k in models}
    rows, failures = [], []
    for sid in sorted(splits):
        split = splits[sid]
        train = split.train.values()
        actual = split.test.values()
        for kind, custom in models.items():
            try:
                if custom is None:
                    pred = fit_forecast(kind, train, len(actual), settings)
                else:
                    pred = custom(train.copy(), len(actual))
                rows.append(EvaluationRow(sid, kind, rmse(pred, actual)))
            except (SafeRouteError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                logger.warning("%s failed on %s: %s", kind, sid, exc)
                failures.append({"station": sid, "model": kind, "error": str(exc)})
    return ComparisonReport.from_rows(rows, failures)
