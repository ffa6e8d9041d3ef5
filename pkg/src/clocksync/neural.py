"""Residual-correcting neural filter on top of the order-1 spline.

Features are the vertical residuals of the 2K most recent window points from
the window's order-1 fit; the target is the fit's error in predicting the
receiver time at the evaluation instant. A 2K-10-1 tanh network is trained
with per-sample back-propagation, momentum and a linearly decaying rate.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from . import streams
from .exchange import Dataset
from .splines import (InfoWindow, LineFitter, SplineFit, _line_batch, ols_fitter, predict,
                      predict_batch, sliding_windows)

MODEL_FORMAT = "clocksync-mlp"
MODEL_VERSION = 1


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class NeuralModel:
    w1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    feature_scale: float = 1.0
    target_scale: float = 1.0
    target_offset: float = 0.0
    loss_history: list[float] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def K(self) -> int:
        return self.n_inputs // 2

    @classmethod
    def zeros(cls, n_inputs: int, hidden: int = 10, b2: float = 0.0) -> "NeuralModel":
        return cls(np.zeros((hidden, n_inputs)), np.zeros(hidden), np.zeros(hidden), float(b2))


@dataclass(frozen=True)
class TrainingTuple:
    features: np.ndarray
    target: float


@dataclass
class TrainingSet:
    features: np.ndarray  # (N, 2K)
    targets: np.ndarray

    def __len__(self):
        return len(self.targets)

    def __getitem__(self, i) -> TrainingTuple:
        return TrainingTuple(self.features[i], float(self.targets[i]))

    @property
    def K(self) -> int:
        return self.features.shape[1] // 2

    @classmethod
    def concat(cls, parts) -> "TrainingSet":
        widths = {p.features.shape[1] for p in parts}
        if len(widths) != 1:
            raise ValueError(f"cannot concatenate training sets of widths {sorted(widths)}")
        return cls(np.concatenate([p.features for p in parts]), np.concatenate([p.targets for p in parts]))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    momentum: float = 0.01
    hidden: int = 10
    seed: int = 0
    shuffle: bool = True
    zero_output_init: bool = False


# -- features ---------------------------------------------------------------

def extract_features(window: InfoWindow, fitter: LineFitter = ols_fitter) -> np.ndarray:
    """Residuals of the 2K newest points from the fitter's line, oldest first."""
    fit = fitter(window)
    return fit.residuals(window)[2:]


@dataclass
class WindowFeatures:
    """Features and order-1 fits for every full window of a dataset."""

    first: int  # dataset row of the first window end
    features: np.ndarray
    coef: np.ndarray
    x0: np.ndarray

    def s1_predict(self, x: np.ndarray) -> np.ndarray:
        return predict_batch(self.coef, self.x0, x)


def window_features(data: Dataset, K: int, fitter: LineFitter = ols_fitter) -> WindowFeatures:
    feats, coefs, x0s = [], [], []
    for _, X, Y, x0 in sliding_windows(data, K):
        U = X - x0[:, None]
        Z = Y - X
        if fitter is ols_fitter:
            c = _line_batch(U, Z)
        else:
            rows = []
            for i in range(len(X)):
                f = fitter(InfoWindow(X[i], Y[i]))
                # re-reference the fitter's line to this window's x0
                rows.append([f.coef[0] + f.coef[1] * (x0[i] - f.x0), f.coef[1]])
            c = np.array(rows)
        R = Z - (c[:, [0]] + c[:, [1]] * U)
        feats.append(R[:, 2:])
        coefs.append(c)
        x0s.append(x0)
    return WindowFeatures(K, np.concatenate(feats), np.concatenate(coefs), np.concatenate(x0s))


def build_training_set(data: Dataset, K: int, fitter: LineFitter = ols_fitter) -> TrainingSet:
    """Tuples for every full window; target = truth - S1 prediction at the evaluation instant."""
    wf = window_features(data, K, fitter)
    s = slice(wf.first, None)
    targets = data.eval_receiver[s] - wf.s1_predict(data.eval_sender[s])
    return TrainingSet(wf.features, targets)


# -- network ----------------------------------------------------------------

def forward(model: NeuralModel, features) -> np.ndarray | float:
    """Predicted S1 correction in seconds; accepts one vector or a batch of rows."""
    x = np.asarray(features, dtype=float)
    if x.shape[-1] != model.n_inputs:
        raise ValueError(f"model expects {model.n_inputs} inputs, got {x.shape[-1]}")
    h = np.tanh((x / model.feature_scale) @ model.w1.T + model.b1)
    out = (h @ model.w2 + model.b2) * model.target_scale + model.target_offset
    return float(out) if x.ndim == 1 else out


@njit(cache=True)
def _backprop(W1, b1, w2, b2, x, t, gW1, gb1, gw2):
    """Gradients of 0.5 * (net(x) - t)**2 written into gW1, gb1, gw2; returns (loss, dL/db2)."""
    H, D = W1.shape
    h = np.empty(H)
    o = b2
    for j in range(H):
        a = b1[j]
        for p in range(D):
            a += W1[j, p] * x[p]
        h[j] = math.tanh(a)
        o += w2[j] * h[j]
    e = o - t
    for j in range(H):
        gw2[j] = e * h[j]
        g = e * w2[j] * (1.0 - h[j] * h[j])
        gb1[j] = g
        for p in range(D):
            gW1[j, p] = g * x[p]
    return 0.5 * e * e, e


@njit(cache=True)
def _sgd_epoch(X, y, order, W1, b1, w2, b2, vW1, vb1, vw2, vb2, lrs, momentum):
    H, D = W1.shape
    gW1 = np.empty((H, D))
    gb1 = np.empty(H)
    gw2 = np.empty(H)
    for s in range(order.shape[0]):
        i = order[s]
        lr = lrs[s]
        _, gb2 = _backprop(W1, b1, w2, b2[0], X[i], y[i], gW1, gb1, gw2)
        for j in range(H):
            for p in range(D):
                vW1[j, p] = momentum * vW1[j, p] - lr * gW1[j, p]
                W1[j, p] += vW1[j, p]
            vb1[j] = momentum * vb1[j] - lr * gb1[j]
            b1[j] += vb1[j]
            vw2[j] = momentum * vw2[j] - lr * gw2[j]
            w2[j] += vw2[j]
        vb2[0] = momentum * vb2[0] - lr * gb2
        b2[0] += vb2[0]


def _scale(a) -> float:
    s = float(np.std(a)) if np.size(a) else 0.0
    return s if s > 0 else 1.0


def loss(model: NeuralModel, data: TrainingSet) -> float:
    """Sum of squared errors (seconds^2) over a training set."""
    r = data.targets - forward(model, data.features)
    return float(np.dot(r, r))


def init_model(n_inputs: int, config: TrainConfig = TrainConfig()) -> NeuralModel:
    rng = streams.stream(config.seed, streams.INIT)
    lim1 = 1.0 / math.sqrt(n_inputs)
    lim2 = 1.0 / math.sqrt(config.hidden)
    w1 = rng.uniform(-lim1, lim1, size=(config.hidden, n_inputs))
    w2 = rng.uniform(-lim2, lim2, size=config.hidden)
    if config.zero_output_init:
        w2[:] = 0.0
    return NeuralModel(w1, np.zeros(config.hidden), w2, 0.0)


def train(data: TrainingSet, config: TrainConfig = TrainConfig()) -> NeuralModel:
    """Per-sample gradient descent with momentum and a linearly annealed rate.

    Features are divided by one constant, their standard deviation over the
    whole training matrix; targets are centered and scaled to unit variance.
    The constants are stored with the model. ``loss_history`` holds
    the sum of squared errors (seconds^2) after each epoch.
    """
    n = len(data)
    if n == 0:
        raise ValueError("empty training set")
    X = np.ascontiguousarray(data.features, dtype=float)
    if X.ndim != 2 or X.shape[0] != n:
        raise ValueError("features must be an (N, 2K) matrix matching the targets")
    model = init_model(X.shape[1], config)
    model.feature_scale = _scale(X)
    model.target_scale = _scale(data.targets)
    model.target_offset = float(np.mean(data.targets))
    Xn = X / model.feature_scale
    yn = (np.asarray(data.targets, dtype=float) - model.target_offset) / model.target_scale

    order = np.arange(n)
    if config.shuffle:
        order = streams.stream(config.seed, streams.SHUFFLE).permutation(n)
    total = config.epochs * n
    lrs = config.lr_start + (config.lr_end - config.lr_start) * np.arange(total) / max(total - 1, 1)

    b2 = np.array([model.b2])
    vW1, vb1, vw2, vb2 = np.zeros_like(model.w1), np.zeros_like(model.b1), np.zeros_like(model.w2), np.zeros(1)
    for ep in range(config.epochs):
        _sgd_epoch(Xn, yn, order, model.w1, model.b1, model.w2, b2, vW1, vb1, vw2, vb2,
                   lrs[ep * n:(ep + 1) * n], config.momentum)
        model.b2 = float(b2[0])
        j = loss(model, data)
        if not math.isfinite(j):
            raise TrainingDivergedError(f"non-finite training loss after epoch {ep + 1}")
        model.loss_history.append(j)
    return model


def gradient_check(model: NeuralModel, features, target: float, step: float = 1e-6) -> float:
    """Max deviation of back-propagated from central-difference gradients.

    Works on the normalized scale; the deviation is reported relative to the
    largest analytic gradient component.
    """
    x = np.asarray(features, dtype=float) / model.feature_scale
    t = (target - model.target_offset) / model.target_scale
    W1, b1, w2 = model.w1.copy(), model.b1.copy(), model.w2.copy()
    gW1, gb1, gw2 = np.empty_like(W1), np.empty_like(b1), np.empty_like(w2)
    _, gb2 = _backprop(W1, b1, w2, model.b2, x, t, gW1, gb1, gw2)
    analytic = np.concatenate((gW1.ravel(), gb1, gw2, [gb2]))

    def f(params):
        nW1 = params[:W1.size].reshape(W1.shape)
        nb1 = params[W1.size:W1.size + b1.size]
        nw2 = params[W1.size + b1.size:-1]
        h = np.tanh(nW1 @ x + nb1)
        return 0.5 * (h @ nw2 + params[-1] - t) ** 2

    theta = np.concatenate((W1.ravel(), b1, w2, [model.b2]))
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        p = theta.copy()
        p[i] += step
        up = f(p)
        p[i] -= 2 * step
        numeric[i] = (up - f(p)) / (2 * step)
    denom = max(np.max(np.abs(analytic)), 1e-300)
    return float(np.max(np.abs(analytic - numeric)) / denom)


def corrected_time(model: NeuralModel, window: InfoWindow, sender_time: float,
                   fitter: LineFitter = ols_fitter) -> float:
    """S1 prediction of the receiver time plus the network's correction."""
    fit: SplineFit = fitter(window)
    return float(predict(fit, sender_time)) + forward(model, fit.residuals(window)[2:])


def nn_predict(model: NeuralModel, data: Dataset, fitter: LineFitter = ols_fitter,
               at: np.ndarray | None = None) -> np.ndarray:
    """Corrected receiver-time estimates for windows ending at rows ``K .. N-1``."""
    wf = window_features(data, model.K, fitter)
    x = data.eval_sender[wf.first:] if at is None else at
    return wf.s1_predict(x) + forward(model, wf.features)


# -- files --------------------------------------------------------------------

def save_model(model: NeuralModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_inputs": model.n_inputs,
        "hidden": model.hidden,
        "activation": "tanh",
        "feature_scale": model.feature_scale,
        "target_scale": model.target_scale,
        "target_offset": model.target_offset,
        "w1": model.w1.tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.tolist(),
        "b2": float(model.b2),
        "loss_history": [float(v) for v in model.loss_history],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path) -> NeuralModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} v{MODEL_VERSION} file")
    model = NeuralModel(np.array(doc["w1"], dtype=float), np.array(doc["b1"], dtype=float),
                        np.array(doc["w2"], dtype=float), float(doc["b2"]),
                        float(doc["feature_scale"]), float(doc["target_scale"]),
                        float(doc["target_offset"]), list(doc.get("loss_history", [])))
    if model.w1.shape != (doc["hidden"], doc["n_inputs"]):
        raise ValueError(f"{path}: weight shape {model.w1.shape} disagrees with header")
    return model


def write_training_set(data: TrainingSet, path) -> None:
    width = data.features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"d{i}" for i in range(width)] + ["target"])
        for row, t in zip(data.features.tolist(), data.targets.tolist()):
            w.writerow([format(v, ".17g") for v in row] + [format(t, ".17g")])


def read_training_set(path) -> TrainingSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "target":
            raise ValueError(f"{path}:1: last column must be 'target'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return TrainingSet(arr[:, :-1], arr[:, -1])
