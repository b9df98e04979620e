"""Task feature vectors and the stacked-LSTM resource-preference classifier.

Each task is summarised by four scaled components: arrival-time index,
spatial complexity, accuracy requirement and delay requirement.  A window of
the most recent tasks' feature vectors is pushed through stacked LSTM layers
and a sigmoid head, yielding the probability that the task prefers
compute-rich placement over bandwidth-cheap placement.

Training is plain full-batch gradient descent on binary cross-entropy with
backpropagation through time, written directly in numpy so runs are
bit-reproducible for a given seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, RangeError, ShapeError
from .scheduler import Preference

BCE_EPS = 1e-7
GRAD_CLIP = 5.0
WEIGHTS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FeatureVector:
    """Scaled per-task features, each in [0, 1]."""

    time_linearity: float
    complexity: float
    accuracy_req: float
    delay_req: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.time_linearity, self.complexity, self.accuracy_req, self.delay_req],
            dtype=np.float64,
        )


FEATURE_SIZE = 4


def make_feature(task, complexity_scaled: float, t_index: float,
                 max_delay_req: float = 0.6) -> FeatureVector:
    """Build the 4-component feature vector for one task.

    Components are kept separate (concatenated, not summed): arrival index
    and complexity are already in [0, 1], the accuracy requirement is scaled
    by 1/100 and the delay requirement by 1/max_delay_req.
    """
    vals = (t_index, complexity_scaled, task.accuracy_req, task.delay_req, max_delay_req)
    if not all(math.isfinite(v) for v in vals):
        raise RangeError("non-finite input to make_feature")
    if max_delay_req <= 0:
        raise RangeError("max_delay_req must be positive")
    return FeatureVector(
        time_linearity=float(t_index),
        complexity=float(complexity_scaled),
        accuracy_req=float(task.accuracy_req) / 100.0,
        delay_req=float(task.delay_req) / max_delay_req,
    )


@dataclass
class LabeledWindow:
    """A seq_len-long feature window plus its preference label (1=compute)."""

    sequence: np.ndarray
    label: int


class LstmLayerParams:
    """Gate weights/biases of one layer; each W is hidden x (hidden+input)."""

    GATES = ("f", "v", "Q", "o")

    def __init__(self, hidden: int, input_size: int, rng: np.random.Generator | None = None):
        self.hidden = hidden
        self.input_size = input_size
        shape = (hidden, hidden + input_size)
        if rng is None:
            init = lambda: np.zeros(shape)
        else:
            init = lambda: rng.uniform(-0.1, 0.1, size=shape)
        self.W_f = init()
        self.W_v = init()
        self.W_Q = init()
        self.W_o = init()
        self.b_f = np.ones(hidden) if rng is not None else np.zeros(hidden)
        self.b_v = np.zeros(hidden)
        self.b_Q = np.zeros(hidden)
        self.b_o = np.zeros(hidden)

    def arrays(self):
        for g in self.GATES:
            yield f"W_{g}", getattr(self, f"W_{g}")
        for g in self.GATES:
            yield f"b_{g}", getattr(self, f"b_{g}")


@dataclass
class LstmState:
    """Hidden and cell vectors of one layer."""

    h: np.ndarray
    Q: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(h=np.zeros(hidden), Q=np.zeros(hidden))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _step_batch(params: LstmLayerParams, h, Q, x):
    """One LSTM step over a batch; returns (h', Q', cache)."""
    if x.shape[-1] != params.input_size or h.shape[-1] != params.hidden:
        raise ShapeError(
            f"step got input {x.shape}, hidden {h.shape}; "
            f"layer expects input={params.input_size}, hidden={params.hidden}"
        )
    z = np.concatenate([h, x], axis=-1)
    f = _sigmoid(z @ params.W_f.T + params.b_f)
    v = _sigmoid(z @ params.W_v.T + params.b_v)
    q_tilde = np.tanh(z @ params.W_Q.T + params.b_Q)
    Q_new = f * Q + v * q_tilde
    o = _sigmoid(z @ params.W_o.T + params.b_o)
    tQ = np.tanh(Q_new)
    h_new = o * tQ
    cache = (z, f, v, q_tilde, o, Q, Q_new, tQ)
    return h_new, Q_new, cache


def lstm_step(params: LstmLayerParams, state: LstmState, x) -> LstmState:
    """Advance one LSTM cell by a single input vector.

    f = sigma(W_f [h, x] + b_f), v = sigma(W_v [h, x] + b_v),
    Q~ = tanh(W_Q [h, x] + b_Q), Q' = f*Q + v*Q~,
    o = sigma(W_o [h, x] + b_o), h' = o * tanh(Q').
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("lstm_step expects a 1-D input vector")
    h, Q, _ = _step_batch(params, state.h[None, :], state.Q[None, :], x[None, :])
    return LstmState(h=h[0], Q=Q[0])


class PreferencePredictor:
    """Stacked LSTM layers plus a sigmoid output head."""

    def __init__(self, hidden: int = 16, n_layers: int = 2, seq_len: int = 8,
                 input_size: int = FEATURE_SIZE, seed: int | None = None):
        if n_layers < 1 or hidden < 1 or seq_len < 1:
            raise ShapeError("hidden, n_layers and seq_len must be positive")
        self.hidden = hidden
        self.seq_len = seq_len
        self.input_size = input_size
        rng = np.random.default_rng(seed) if seed is not None else None
        self.layers = [
            LstmLayerParams(hidden, input_size if i == 0 else hidden, rng)
            for i in range(n_layers)
        ]
        if rng is None:
            self.head_w = np.zeros(hidden)
        else:
            self.head_w = rng.uniform(-0.1, 0.1, size=hidden)
        self.head_b = 0.0

    # -- parameter plumbing -------------------------------------------------

    def parameter_arrays(self):
        """Yield (name, array) for every trainable tensor, head included."""
        for i, layer in enumerate(self.layers):
            for name, arr in layer.arrays():
                yield f"layer{i}.{name}", arr
        yield "head_w", self.head_w

    def reinit(self, seed: int) -> None:
        """Re-draw all parameters from the given seed."""
        fresh = PreferencePredictor(
            hidden=self.hidden, n_layers=len(self.layers), seq_len=self.seq_len,
            input_size=self.input_size, seed=seed,
        )
        self.layers = fresh.layers
        self.head_w = fresh.head_w
        self.head_b = fresh.head_b

    # -- inference ----------------------------------------------------------

    def _forward_batch(self, X, want_cache: bool = False):
        """Run (B, T, input) through all layers; returns (probs, caches)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1] != self.seq_len or X.shape[2] != self.input_size:
            raise ShapeError(
                f"expected windows of shape (B, {self.seq_len}, {self.input_size}), got {X.shape}"
            )
        B, T = X.shape[0], X.shape[1]
        seq = X
        caches = []
        for layer in self.layers:
            h = np.zeros((B, self.hidden))
            Q = np.zeros((B, self.hidden))
            hs = np.empty((B, T, self.hidden))
            layer_cache = []
            for t in range(T):
                h, Q, cache = _step_batch(layer, h, Q, seq[:, t, :])
                hs[:, t, :] = h
                if want_cache:
                    layer_cache.append(cache)
            caches.append(layer_cache)
            seq = hs
        logits = seq[:, -1, :] @ self.head_w + self.head_b
        probs = _sigmoid(logits)
        if want_cache:
            return probs, (caches, seq)
        return probs, None

    def forward_batch(self, X) -> np.ndarray:
        probs, _ = self._forward_batch(X)
        return probs


def forward(predictor: PreferencePredictor, window) -> float:
    """Probability that the window's newest task is compute-preferring."""
    X = _window_to_array(predictor, window)
    return float(predictor.forward_batch(X[None, :, :])[0])


def _window_to_array(predictor, window) -> np.ndarray:
    if isinstance(window, np.ndarray):
        arr = window.astype(np.float64)
    else:
        arr = np.stack([
            fv.as_array() if isinstance(fv, FeatureVector) else np.asarray(fv, dtype=np.float64)
            for fv in window
        ])
    if arr.shape != (predictor.seq_len, predictor.input_size):
        raise ShapeError(
            f"window shape {arr.shape} != ({predictor.seq_len}, {predictor.input_size})"
        )
    return arr


def predict_preference(predictor: PreferencePredictor, window) -> Preference:
    """Threshold the forward probability; ties at exactly 0.5 go to compute."""
    g_hat = forward(predictor, window)
    return Preference.COMPUTE if g_hat >= 0.5 else Preference.BANDWIDTH


def bce_loss(g, g_hat) -> float:
    """Binary cross-entropy, mean over the batch.

    Predictions are clamped into [eps, 1-eps] (eps = 1e-7) before the logs,
    so exactly-0/1 predictions are tolerated rather than raised on.
    """
    g = np.asarray(g, dtype=np.float64)
    p = np.asarray(g_hat, dtype=np.float64)
    if g.shape != p.shape or g.size == 0:
        raise ShapeError("labels and predictions must be equal-length, non-empty")
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(g * np.log(p) + (1.0 - g) * np.log(1.0 - p)))


# -- training ----------------------------------------------------------------


def loss_and_gradients(predictor: PreferencePredictor, X, y):
    """Full-batch BCE loss and analytic gradients for every parameter.

    Returns (loss, grads) where grads maps the names from
    ``parameter_arrays`` (plus "head_b") to arrays of matching shape.
    """
    y = np.asarray(y, dtype=np.float64)
    probs, (caches, top_seq) = predictor._forward_batch(X, want_cache=True)
    loss = bce_loss(y, probs)
    B = y.shape[0]
    H = predictor.hidden
    T = predictor.seq_len

    grads = {}
    d_logit = (np.clip(probs, BCE_EPS, 1.0 - BCE_EPS) - y) / B
    grads["head_w"] = top_seq[:, -1, :].T @ d_logit
    grads["head_b"] = float(np.sum(d_logit))

    # Gradient w.r.t. each layer's output sequence, top layer first.
    d_seq = np.zeros((B, T, H))
    d_seq[:, -1, :] = d_logit[:, None] * predictor.head_w[None, :]

    for li in range(len(predictor.layers) - 1, -1, -1):
        layer = predictor.layers[li]
        acc = {name: np.zeros_like(arr) for name, arr in layer.arrays()}
        d_below = np.zeros((B, T, layer.input_size))
        dh_carry = np.zeros((B, H))
        dQ_carry = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            z, f, v, q_tilde, o, Q_prev, Q_new, tQ = caches[li][t]
            dh = d_seq[:, t, :] + dh_carry
            do = dh * tQ
            dQ = dQ_carry + dh * o * (1.0 - tQ * tQ)
            df = dQ * Q_prev
            dv = dQ * q_tilde
            dqt = dQ * v
            dQ_carry = dQ * f
            da_f = df * f * (1.0 - f)
            da_v = dv * v * (1.0 - v)
            da_q = dqt * (1.0 - q_tilde * q_tilde)
            da_o = do * o * (1.0 - o)
            acc["W_f"] += da_f.T @ z
            acc["W_v"] += da_v.T @ z
            acc["W_Q"] += da_q.T @ z
            acc["W_o"] += da_o.T @ z
            acc["b_f"] += da_f.sum(axis=0)
            acc["b_v"] += da_v.sum(axis=0)
            acc["b_Q"] += da_q.sum(axis=0)
            acc["b_o"] += da_o.sum(axis=0)
            dz = da_f @ layer.W_f + da_v @ layer.W_v + da_q @ layer.W_Q + da_o @ layer.W_o
            dh_carry = dz[:, :H]
            d_below[:, t, :] = dz[:, H:]
        for name, g in acc.items():
            grads[f"layer{li}.{name}"] = g
        d_seq = d_below
    return loss, grads


@dataclass
class TrainingReport:
    """Per-epoch loss/accuracy curves from one training run."""

    losses: list
    accuracies: list

    @property
    def final_accuracy(self) -> float:
        return self.accuracies[-1]

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,loss,accuracy\n")
            for i, (l, a) in enumerate(zip(self.losses, self.accuracies)):
                fh.write(f"{i},{l!r},{a!r}\n")


def dataset_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Stack a list of LabeledWindow into (X, y) arrays."""
    X = np.stack([np.asarray(w.sequence, dtype=np.float64) for w in dataset])
    y = np.array([w.label for w in dataset], dtype=np.float64)
    return X, y


def train(predictor: PreferencePredictor, dataset, epochs: int = 200,
          lr: float = 1.0, seed: int | None = None,
          momentum: float = 0.9) -> TrainingReport:
    """Full-batch gradient descent with classical momentum on the BCE loss.

    Gradients are clipped to global norm 5.0 before entering the velocity.
    Momentum is needed to escape the small-initialisation plateau within a
    realistic epoch budget; set it to 0 for plain descent.  When ``seed`` is
    given the parameters are re-initialised from it first, so (seed,
    dataset, hyperparameters) fully determine the trained weights.
    """
    if not dataset:
        raise ShapeError("dataset must be non-empty")
    if lr <= 0:
        raise RangeError("learning rate must be positive")
    if not 0.0 <= momentum < 1.0:
        raise RangeError("momentum must lie in [0, 1)")
    if seed is not None:
        predictor.reinit(seed)
    X, y = dataset_arrays(dataset)
    velocity = {name: np.zeros_like(arr) for name, arr in predictor.parameter_arrays()}
    velocity_b = 0.0
    losses, accuracies = [], []
    for _ in range(epochs):
        loss, grads = loss_and_gradients(predictor, X, y)
        if not math.isfinite(loss):
            raise DivergenceError(f"loss became non-finite: {loss}")
        norm_sq = grads["head_b"] ** 2
        for name, _ in predictor.parameter_arrays():
            norm_sq += float(np.sum(grads[name] ** 2))
        norm = math.sqrt(norm_sq)
        scale = GRAD_CLIP / norm if norm > GRAD_CLIP else 1.0
        for name, arr in predictor.parameter_arrays():
            velocity[name] = momentum * velocity[name] + scale * grads[name]
            arr -= lr * velocity[name]
        velocity_b = momentum * velocity_b + scale * grads["head_b"]
        predictor.head_b -= lr * velocity_b
        probs = predictor.forward_batch(X)
        losses.append(loss)
        accuracies.append(float(np.mean((probs >= 0.5) == (y >= 0.5))))
    return TrainingReport(losses=losses, accuracies=accuracies)


def accuracy_on(predictor: PreferencePredictor, dataset) -> float:
    X, y = dataset_arrays(dataset)
    probs = predictor.forward_batch(X)
    return float(np.mean((probs >= 0.5) == (y >= 0.5)))


# -- serialization -----------------------------------------------------------


def save_weights(predictor: PreferencePredictor, path) -> None:
    """Write parameters as a versioned JSON document (shape header + rows)."""
    doc = {
        "schema_version": WEIGHTS_SCHEMA_VERSION,
        "hidden": predictor.hidden,
        "n_layers": len(predictor.layers),
        "seq_len": predictor.seq_len,
        "input_size": predictor.input_size,
        "head_b": predictor.head_b,
        "tensors": {name: arr.tolist() for name, arr in predictor.parameter_arrays()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_weights(path) -> PreferencePredictor:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != WEIGHTS_SCHEMA_VERSION:
        raise ShapeError(f"unsupported weights schema: {doc.get('schema_version')}")
    pred = PreferencePredictor(
        hidden=doc["hidden"], n_layers=doc["n_layers"], seq_len=doc["seq_len"],
        input_size=doc["input_size"],
    )
    pred.head_b = float(doc["head_b"])
    for name, arr in pred.parameter_arrays():
        stored = np.asarray(doc["tensors"][name], dtype=np.float64)
        if stored.shape != arr.shape:
            raise ShapeError(f"tensor {name} has shape {stored.shape}, expected {arr.shape}")
        arr[...] = stored
    return pred
