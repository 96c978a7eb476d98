import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saferoute import recurrent
from saferoute.recurrent import (CellState, GruParams, LstmParams, RecurrentModel, TrainConfig, bptt_gradients,
                                 forecast, forward_sequence, gru_step, lstm_step, sliding_windows, train)

from gradcheck import max_relative_error, random_problem

TRANSCRIPT = json.loads((Path(__file__).parent / "data" / "cell_transcript.json").read_text())


def _load(cls, doc):
    p = cls.zeros(2)
    for k, v in doc.items():
        setattr(p, k, np.asarray(v, dtype=float))
    return p


def test_lstm_zero_weights_fixpoint():
    p = LstmParams.zeros(4)
    p.b_out = np.array(0.25)
    _, _, cache = recurrent._lstm_cell(p, np.zeros((1, 4)), np.zeros((1, 4)), np.array([[3.7]]))
    for gate in "fio":
        assert np.all(cache[gate] == 0.5)
    assert np.all(cache["c_hat"] == 0.0)
    s, out = lstm_step(p, CellState.zeros(4, lstm=True), [3.7])
    assert np.all(s.C == 0.0) and np.all(s.h == 0.0) and out == 0.25


@pytest.mark.parametrize("c", [-2.0, 0.3, 5.0])
def test_lstm_zero_weights_carry_cell(c):
    p = LstmParams.zeros(3)
    s, _ = lstm_step(p, CellState(np.zeros(3), np.full(3, c)), [1.0])
    assert np.all(s.C == 0.5 * c)
    assert np.all(s.h == 0.5 * np.tanh(0.5 * c))


@pytest.mark.parametrize("v", [-1.0, 0.4, 2.0])
def test_gru_zero_weights_halves_state(v):
    p = GruParams.zeros(3)
    s, out = gru_step(p, CellState(np.full(3, v)), [0.9])
    assert np.all(s.h == 0.5 * v) and out == 0.0


def test_gru_zero_everything():
    p = GruParams.zeros(2)
    p.b_out = np.array(-1.5)
    s, out = gru_step(p, CellState.zeros(2, lstm=False), [0.0])
    assert np.all(s.h == 0.0) and out == -1.5


def test_gru_zero_state_candidate():
    rng = np.random.default_rng(1)
    p = GruParams.random(rng, 3, scale=1.0)
    p.W_z[...] = 0.0
    p.b_z[...] = 0.0
    x = 0.7
    s, _ = gru_step(p, CellState.zeros(3, lstm=False), [x])
    h_hat = np.tanh(p.W_h[:, 3] * x + p.b_h)
    np.testing.assert_allclose(s.h, 0.5 * h_hat, rtol=0, atol=1e-15)


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_matches_scalar_transcript(kind):
    doc = TRANSCRIPT[kind]
    p = _load(LstmParams if kind == "lstm" else GruParams, doc["params"])
    s = CellState.zeros(2, lstm=kind == "lstm")
    step = lstm_step if kind == "lstm" else gru_step
    for x, want in zip(TRANSCRIPT["inputs"], doc["steps"]):
        s, out = step(p, s, [x])
        np.testing.assert_allclose(s.h, want["h"], rtol=0, atol=1e-14)
        if kind == "lstm":
            np.testing.assert_allclose(s.C, want["C"], rtol=0, atol=1e-14)
        assert out == pytest.approx(want["output"], abs=1e-14)


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_sequence_equals_step_loop(kind):
    p, x, _ = random_problem(kind, 11)
    cache = forward_sequence(p, x)
    step = lstm_step if kind == "lstm" else gru_step
    for b in range(x.shape[0]):
        s = CellState.zeros(p.hidden_size, lstm=kind == "lstm")
        for t in range(x.shape[1]):
            s, out = step(p, s, [x[b, t]])
            assert cache.outputs[b, t] == pytest.approx(out, abs=1e-14)


def test_zero_weights_constant_outputs():
    p = LstmParams.zeros(3)
    p.b_out = np.array(0.8)
    assert np.all(forward_sequence(p, np.zeros((2, 6))).outputs == 0.8)


@pytest.mark.parametrize("kind", ["lstm", "gru"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_bptt_matches_finite_differences(kind, seed):
    p, x, y = random_problem(kind, seed)
    assert max_relative_error(p, x, y) < 1e-4


def test_gru_without_bias_gradients():
    rng = np.random.default_rng(5)
    p = GruParams.random(rng, 3, scale=0.5, use_bias=False)
    x, y = rng.normal(size=(2, 4)), rng.normal(size=(2, 4))
    assert max_relative_error(p, x, y) < 1e-4
    assert "b_r" not in p.trainable()


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_zero_residual_zero_gradient(kind):
    p = (LstmParams if kind == "lstm" else GruParams).zeros(3)
    grads = bptt_gradients(p, np.zeros((2, 4)), np.zeros((2, 4)))
    assert all(np.all(g == 0) for g in grads.values())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-20, 20))
def test_gates_in_range_and_gru_convex(seed, scale_x):
    rng = np.random.default_rng(seed)
    lp = LstmParams.random(rng, 3, scale=2.0)
    gp = GruParams.random(rng, 3, scale=2.0)
    x = rng.normal(size=(2, 5)) * scale_x
    for c in forward_sequence(lp, x).steps:
        for g in "fio":
            assert np.all((c[g] >= 0) & (c[g] <= 1))
    for c in forward_sequence(gp, x).steps:
        assert np.all((c["r"] >= 0) & (c["r"] <= 1))
        h_new = (1 - c["u"]) * c["h_prev"] + c["u"] * c["h_hat"]
        lo = np.minimum(c["h_prev"], c["h_hat"]) - 1e-12
        hi = np.maximum(c["h_prev"], c["h_hat"]) + 1e-12
        assert np.all((h_new >= lo) & (h_new <= hi))


def test_sliding_windows():
    x, y = sliding_windows(np.arange(7.0), 4)
    np.testing.assert_array_equal(x, [[0, 1, 2, 3], [1, 2, 3, 4], [2, 3, 4, 5]])
    np.testing.assert_array_equal(y, [[1, 2, 3, 4], [2, 3, 4, 5], [3, 4, 5, 6]])


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_constant_series_is_learned(kind):
    m = train(np.full(19, 0.6), TrainConfig(epochs=2000), kind)
    assert m.train_loss < 1e-3
    np.testing.assert_allclose(forecast(m, np.full(19, 0.6), 3), 0.6, atol=0.05)


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_training_is_deterministic(kind):
    series = np.array([3, 5, 4, 6, 8, 7, 9, 12, 10, 11, 13, 12.0])
    a = train(series, TrainConfig(epochs=150, seed=3), kind)
    b = train(series, TrainConfig(epochs=150, seed=3), kind)
    np.testing.assert_array_equal(a.params.flatten(), b.params.flatten())


def test_zero_epochs_returns_initial_parameters():
    cfg = TrainConfig(epochs=0, seed=9)
    m = train(np.arange(10.0), cfg, "lstm")
    np.testing.assert_array_equal(m.params.flatten(), recurrent.init_params("lstm", cfg).flatten())


def test_untrained_zero_readout_forecasts_denormalized_bias():
    p = LstmParams.zeros(2)
    p.b_out = np.array(0.5)
    m = RecurrentModel("lstm", p, 4, lo=2.0, hi=6.0)
    assert forecast(m, [2, 3, 4, 5, 6], 3) == [4.0, 4.0, 4.0]
    assert forecast(m, [2, 3, 4, 5], 0) == []


def test_model_round_trip():
    m = train(np.arange(12.0), TrainConfig(epochs=20), "gru")
    again = RecurrentModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert forecast(again, np.arange(12.0), 4) == forecast(m, np.arange(12.0), 4)


def test_training_loss_never_above_initial():
    m = train(np.sin(np.arange(19.0)) + 2, TrainConfig(epochs=300), "lstm")
    assert m.train_loss <= m.loss_history[0]
    assert math.isfinite(m.train_loss)
