"""LSTM and GRU cells written out by hand, trained with BPTT.

Everything is batched over windows: inputs have shape ``(B, T, I)`` and each
window is run from a zero state. The readout maps the hidden state to one
scalar per step, which is trained to predict the next value of the series.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Optional, Union

import numpy as np

from . import kernels
from ._accel import USE_NUMBA
from .errors import TrainingError

logger = logging.getLogger(__name__)

KINDS = ("lstm", "gru")
CLIP_NORM = 5.0
MAX_RESTARTS = 5


def sigmoid(x):
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _Params:
    """Shared plumbing for the two parameter dataclasses."""

    def names(self):
        return [f.name for f in fields(self) if isinstance(getattr(self, f.name), np.ndarray)]

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in self.names()}

    def copy(self):
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update({k: v.copy() for k, v in self.arrays().items()})
        return type(self)(**kw)

    @property
    def hidden_size(self) -> int:
        return self.W_out.shape[0]

    def trainable(self):
        return self.names()

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def trainable_mask(self) -> np.ndarray:
        keep = set(self.trainable())
        return np.concatenate([np.full(a.size, float(k in keep)) for k, a in self.arrays().items()])

    def load_flat(self, flat):
        off = 0
        for k, a in self.arrays().items():
            setattr(self, k, np.asarray(flat[off:off + a.size], dtype=float).reshape(a.shape).copy())
            off += a.size
        return self


@dataclass
class LstmParams(_Params):
    W_f: np.ndarray
    W_i: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    @classmethod
    def zeros(cls, hidden_size: int, input_size: int = 1) -> "LstmParams":
        H, Z = hidden_size, hidden_size + input_size
        return cls(*(np.zeros((H, Z)) for _ in range(4)), *(np.zeros(H) for _ in range(4)),
                   np.zeros(H), np.zeros(()))

    @classmethod
    def random(cls, rng, hidden_size: int, input_size: int = 1, scale: float = 0.2) -> "LstmParams":
        p = cls.zeros(hidden_size, input_size)
        for name in p.names():
            a = getattr(p, name)
            setattr(p, name, rng.uniform(-scale, scale, size=a.shape))
        return p


@dataclass
class GruParams(_Params):
    W_r: np.ndarray
    W_z: np.ndarray
    W_h: np.ndarray
    b_r: np.ndarray
    b_z: np.ndarray
    b_h: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    use_bias: bool = True

    @property
    def input_size(self) -> int:
        return self.W_r.shape[1] - self.W_r.shape[0]

    def trainable(self):
        skip = () if self.use_bias else ("b_r", "b_z", "b_h")
        return [n for n in self.names() if n not in skip]

    @classmethod
    def zeros(cls, hidden_size: int, input_size: int = 1, use_bias: bool = True) -> "GruParams":
        H, Z = hidden_size, hidden_size + input_size
        return cls(*(np.zeros((H, Z)) for _ in range(3)), *(np.zeros(H) for _ in range(3)),
                   np.zeros(H), np.zeros(()), use_bias)

    @classmethod
    def random(cls, rng, hidden_size: int, input_size: int = 1, scale: float = 0.2,
               use_bias: bool = True) -> "GruParams":
        p = cls.zeros(hidden_size, input_size, use_bias)
        for name in p.trainable():
            a = getattr(p, name)
            setattr(p, name, rng.uniform(-scale, scale, size=a.shape))
        return p


Params = Union[LstmParams, GruParams]


@dataclass
class CellState:
    h: np.ndarray
    C: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, hidden_size: int, lstm: bool, batch: Optional[int] = None) -> "CellState":
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return cls(np.zeros(shape), np.zeros(shape) if lstm else None)


# --------------------------------------------------------------------------
# single steps (batched over a leading axis)
# --------------------------------------------------------------------------

def _lstm_cell(p: LstmParams, h, C, x):
    z = np.concatenate([h, x], axis=1)
    f = sigmoid(z @ p.W_f.T + p.b_f)
    i = sigmoid(z @ p.W_i.T + p.b_i)
    c_hat = np.tanh(z @ p.W_c.T + p.b_c)
    o = sigmoid(z @ p.W_o.T + p.b_o)
    C_new = f * C + i * c_hat
    tanh_C = np.tanh(C_new)
    h_new = o * tanh_C
    return h_new, C_new, {"z": z, "f": f, "i": i, "c_hat": c_hat, "o": o, "C_prev": C, "tanh_C": tanh_C}


def _gru_cell(p: GruParams, h, x):
    z_in = np.concatenate([h, x], axis=1)
    b_r, b_z, b_h = (p.b_r, p.b_z, p.b_h) if p.use_bias else (0.0, 0.0, 0.0)
    r = sigmoid(z_in @ p.W_r.T + b_r)
    u = sigmoid(z_in @ p.W_z.T + b_z)
    zr = np.concatenate([r * h, x], axis=1)
    h_hat = np.tanh(zr @ p.W_h.T + b_h)
    h_new = (1.0 - u) * h + u * h_hat
    return h_new, {"z": z_in, "r": r, "u": u, "zr": zr, "h_hat": h_hat, "h_prev": h}


def _as_batch(v, size):
    v = np.asarray(v, dtype=float)
    return v.reshape(1, size)


def lstm_step(p: LstmParams, s: CellState, x):
    """One LSTM step for a single (unbatched) input; returns ``(state, output)``."""
    H, I = p.hidden_size, p.input_size
    if s.C is None or np.shape(s.h) != (H,) or np.shape(s.C) != (H,):
        raise ValueError(f"LSTM state must carry h and C of shape ({H},)")
    h, C, _ = _lstm_cell(p, _as_batch(s.h, H), _as_batch(s.C, H), _as_batch(x, I))
    out = float(h[0] @ p.W_out + p.b_out)
    return CellState(h[0], C[0]), out


def gru_step(p: GruParams, s: CellState, x):
    """One GRU step for a single (unbatched) input; returns ``(state, output)``."""
    H, I = p.hidden_size, p.input_size
    if np.shape(s.h) != (H,):
        raise ValueError(f"GRU state must carry h of shape ({H},)")
    h, _ = _gru_cell(p, _as_batch(s.h, H), _as_batch(x, I))
    out = float(h[0] @ p.W_out + p.b_out)
    return CellState(h[0]), out


# --------------------------------------------------------------------------
# sequences and gradients
# --------------------------------------------------------------------------

@dataclass
class ForwardCache:
    outputs: np.ndarray            # (B, T)
    hidden: list                   # h_t per step, each (B, H)
    steps: list                    # per-step activation dicts


def _batched_inputs(inputs):
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[None, :, None]
    elif x.ndim == 2:
        x = x[:, :, None]
    if x.shape[1] < 1:
        raise ValueError("need at least one time step")
    return x


def forward_sequence(p: Params, inputs) -> ForwardCache:
    """Run the cell over each window from a zero state, caching every activation.

    ``inputs`` may be ``(T,)``, ``(B, T)`` or ``(B, T, I)``.
    """
    x = _batched_inputs(inputs)
    B, T, _ = x.shape
    H = p.hidden_size
    lstm = isinstance(p, LstmParams)
    h = np.zeros((B, H))
    C = np.zeros((B, H))
    outs = np.empty((B, T))
    hidden, steps = [], []
    for t in range(T):
        if lstm:
            h, C, cache = _lstm_cell(p, h, C, x[:, t, :])
        else:
            h, cache = _gru_cell(p, h, x[:, t, :])
        outs[:, t] = h @ p.W_out + p.b_out
        hidden.append(h)
        steps.append(cache)
    return ForwardCache(outs, hidden, steps)


def sequence_loss(p: Params, inputs, targets) -> float:
    """Sum over windows of the per-window mean squared error."""
    cache = forward_sequence(p, inputs)
    targets = np.asarray(targets, dtype=float).reshape(cache.outputs.shape)
    return float(np.sum(np.mean((cache.outputs - targets) ** 2, axis=1)))


def bptt_gradients(p: Params, inputs, targets, cache: Optional[ForwardCache] = None) -> dict:
    """Exact gradients of :func:`sequence_loss` for every parameter array."""
    if cache is None:
        cache = forward_sequence(p, inputs)
    outs = cache.outputs
    B, T = outs.shape
    targets = np.asarray(targets, dtype=float).reshape(B, T)
    dy = 2.0 * (outs - targets) / T
    grads = {k: np.zeros_like(v) for k, v in p.arrays().items()}
    H = p.hidden_size
    dh_next = np.zeros((B, H))
    dC_next = np.zeros((B, H))
    lstm = isinstance(p, LstmParams)
    for t in range(T - 1, -1, -1):
        h = cache.hidden[t]
        grads["W_out"] += dy[:, t] @ h
        grads["b_out"] += dy[:, t].sum()
        dh = dy[:, t, None] * p.W_out + dh_next
        c = cache.steps[t]
        if lstm:
            o, f, i, c_hat, tanh_C = c["o"], c["f"], c["i"], c["c_hat"], c["tanh_C"]
            do = dh * tanh_C
            dC = dh * o * (1.0 - tanh_C ** 2) + dC_next
            da_f = dC * c["C_prev"] * f * (1.0 - f)
            da_i = dC * c_hat * i * (1.0 - i)
            da_c = dC * i * (1.0 - c_hat ** 2)
            da_o = do * o * (1.0 - o)
            dz = np.zeros_like(c["z"])
            for gate, da in (("f", da_f), ("i", da_i), ("c", da_c), ("o", da_o)):
                grads["W_" + gate] += da.T @ c["z"]
                grads["b_" + gate] += da.sum(axis=0)
                dz += da @ getattr(p, "W_" + gate)
            dh_next = dz[:, :H]
            dC_next = dC * f
        else:
            r, u, h_hat, h_prev = c["r"], c["u"], c["h_hat"], c["h_prev"]
            da_h = dh * u * (1.0 - h_hat ** 2)
            da_u = dh * (h_hat - h_prev) * u * (1.0 - u)
            grads["W_h"] += da_h.T @ c["zr"]
            dzr = da_h @ p.W_h
            d_rh = dzr[:, :H]
            da_r = d_rh * h_prev * r * (1.0 - r)
            grads["W_z"] += da_u.T @ c["z"]
            grads["W_r"] += da_r.T @ c["z"]
            if p.use_bias:
                grads["b_h"] += da_h.sum(axis=0)
                grads["b_z"] += da_u.sum(axis=0)
                grads["b_r"] += da_r.sum(axis=0)
            dz_in = da_u @ p.W_z + da_r @ p.W_r
            dh_next = dh * (1.0 - u) + d_rh * r + dz_in[:, :H]
    return grads


# --------------------------------------------------------------------------
# training and forecasting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 8
    window: int = 4
    epochs: int = 3000
    learning_rate: float = 0.05
    seed: int = 0
    init_scale: float = 0.2
    use_bias: bool = True

    def __post_init__(self):
        for name in ("hidden_size", "window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not (self.learning_rate > 0 and self.init_scale > 0):
            raise ValueError("learning_rate and init_scale must be positive")


@dataclass
class RecurrentModel:
    kind: str
    params: Params
    window: int
    lo: float = 0.0
    hi: float = 1.0
    train_loss: float = math.nan
    loss_history: list = field(default_factory=list, repr=False)

    @property
    def span(self) -> float:
        return self.hi - self.lo if self.hi > self.lo else 1.0

    def normalize(self, values):
        return (np.asarray(values, dtype=float) - self.lo) / self.span

    def denormalize(self, values):
        return np.asarray(values, dtype=float) * self.span + self.lo

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "hidden_size": self.params.hidden_size,
            "input_size": self.params.input_size,
            "window": self.window,
            "normalization": {"lo": self.lo, "hi": self.hi},
            "use_bias": getattr(self.params, "use_bias", True),
            "train_loss": self.train_loss,
            "weights": {k: v.ravel().tolist() for k, v in self.params.arrays().items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc) -> "RecurrentModel":
        H, I = doc["hidden_size"], doc.get("input_size", 1)
        if doc["kind"] == "lstm":
            p = LstmParams.zeros(H, I)
        else:
            p = GruParams.zeros(H, I, doc.get("use_bias", True))
        for k, flat in doc["weights"].items():
            ref = getattr(p, k)
            setattr(p, k, np.asarray(flat, dtype=float).reshape(ref.shape))
        norm = doc["normalization"]
        return cls(doc["kind"], p, doc["window"], norm["lo"], norm["hi"], doc.get("train_loss", math.nan))


def sliding_windows(values, window: int):
    """Inputs ``values[k:k+window]`` with next-step targets ``values[k+1:k+window+1]``."""
    values = np.asarray(values, dtype=float)
    n = len(values) - window
    if n < 1:
        raise ValueError(f"series of length {len(values)} is too short for window {window}")
    idx = np.arange(window)[None, :] + np.arange(n)[:, None]
    return values[idx], values[idx + 1]


def _clip(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def init_params(kind: str, cfg: TrainConfig, input_size: int = 1) -> Params:
    rng = np.random.default_rng(cfg.seed)
    if kind == "lstm":
        return LstmParams.random(rng, cfg.hidden_size, input_size, cfg.init_scale)
    if kind == "gru":
        return GruParams.random(rng, cfg.hidden_size, input_size, cfg.init_scale, cfg.use_bias)
    raise ValueError(f"unknown recurrent kind {kind!r}; expected one of {KINDS}")


def train(series, cfg: TrainConfig = TrainConfig(), kind: str = "lstm") -> RecurrentModel:
    """Full-batch gradient descent over sliding windows of ``series``.

    The series is min-max scaled to [0, 1]. Returns the parameters with the
    lowest training loss seen. A non-finite loss halves the learning rate and
    restarts from the seeded initialization, at most five times.
    """
    values = np.asarray(series, dtype=float)
    if len(values) <= cfg.window:
        raise ValueError(f"series of length {len(values)} must be longer than window {cfg.window}")
    lo, hi = float(values.min()), float(values.max())
    model = RecurrentModel(kind, init_params(kind, cfg), cfg.window, lo, hi)
    inputs, targets = sliding_windows(model.normalize(values), cfg.window)
    B = inputs.shape[0]

    lr = cfg.learning_rate
    for attempt in range(MAX_RESTARTS + 1):
        params = init_params(kind, cfg)
        try:
            if USE_NUMBA:
                best, best_loss, history = _descend_compiled(params, inputs, targets, lr, cfg.epochs)
            else:
                best, best_loss, history = _descend(params, inputs, targets, B, lr, cfg.epochs)
        except FloatingPointError:
            if attempt == MAX_RESTARTS:
                break
            lr *= 0.5
            logger.warning("%s training diverged; restarting with learning rate %g", kind, lr)
            continue
        model.params = best
        model.train_loss = best_loss
        model.loss_history = history
        return model
    raise TrainingError(f"{kind} training diverged after {MAX_RESTARTS} restarts")


def _descend_compiled(params, inputs, targets, lr, epochs):
    lstm = isinstance(params, LstmParams)
    best, best_loss, history, ok = kernels.descend_numba(
        lstm, params.flatten(), params.trainable_mask(), params.hidden_size,
        inputs, targets, lr, epochs, CLIP_NORM)
    if not ok:
        raise FloatingPointError
    return params.copy().load_flat(best), float(best_loss), history.tolist()


def _descend(params, inputs, targets, B, lr, epochs):
    names = params.trainable()
    best, best_loss = params.copy(), math.inf
    history = []
    for epoch in range(epochs + 1):
        cache = forward_sequence(params, inputs)
        loss = float(np.sum(np.mean((cache.outputs - targets) ** 2, axis=1))) / B
        if not math.isfinite(loss):
            raise FloatingPointError
        history.append(loss)
        if loss < best_loss:
            best, best_loss = params.copy(), loss
        if epoch == epochs:
            break
        grads = bptt_gradients(params, inputs, targets, cache)
        grads = {k: grads[k] / B for k in names}
        _clip(grads, CLIP_NORM)
        for k in names:
            getattr(params, k)[...] -= lr * grads[k]
    return best, best_loss, history


def forecast(model: RecurrentModel, series, horizon: int) -> list:
    """Roll forward ``horizon`` steps, feeding predictions back in, in count units."""
    if horizon <= 0:
        return []
    values = list(model.normalize(series))
    if len(values) < model.window:
        raise ValueError(f"need at least {model.window} points to forecast, got {len(values)}")
    preds = []
    for _ in range(horizon):
        window = np.asarray(values[-model.window:])
        nxt = float(forward_sequence(model.params, window).outputs[0, -1])
        preds.append(nxt)
        values.append(nxt)
    return [float(v) for v in model.denormalize(preds)]
