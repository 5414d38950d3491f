"""Sampling-granularity study with a small LSTM forecaster.

Two hours of (normalized) metric history, resampled to a chosen granularity,
feed a single-layer LSTM whose last hidden state passes through a dense head
that emits the next 20 minutes on the 15 s grid.  Training is plain
gradient descent on the Huber loss with exact backpropagation through time.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import _lstm_kernel
from .errors import InvalidInput
from .model import MetricSeries, normalize_minmax, resample
from .parallel import pmap

BASE_INTERVAL = 15
INPUT_SPAN = 7200
HORIZON_STEPS = 80
DEFAULT_GRANULARITIES = (15, 60, 300, 600)

PARAM_NAMES = ("Wx", "Wh", "b", "Wy", "by")

# Compiled recurrence when numba is importable; the numpy path otherwise.
USE_KERNEL = _lstm_kernel.AVAILABLE


@dataclass
class TrainConfig:
    learning_rate: float = 1.0
    huber_delta: float = 1.0
    max_epochs: int = 50
    patience: int = 5
    eval_fraction: float = 0.10
    seed: int = 0
    hidden_size: int = 32
    batch_size: int = 1
    min_improvement: float = 1e-5

    def __post_init__(self):
        if not 0 < self.eval_fraction < 1:
            raise InvalidInput("eval_fraction must lie in (0, 1)")
        if self.patience < 1:
            raise InvalidInput("patience must be >= 1")
        if self.learning_rate < 0 or self.huber_delta <= 0:
            raise InvalidInput("learning_rate must be >= 0 and huber_delta > 0")
        if self.hidden_size < 1 or self.batch_size < 1 or self.max_epochs < 0:
            raise InvalidInput("hidden_size and batch_size must be >= 1, max_epochs >= 0")


@dataclass
class WindowSample:
    inputs: np.ndarray   # (steps, features)
    target: np.ndarray   # (HORIZON_STEPS,)
    start: int


@dataclass
class LstmModel:
    """Single-layer LSTM (gate order: input, forget, output, candidate) with a dense head."""

    input_size: int
    hidden_size: int
    output_size: int
    params: Dict[str, np.ndarray]
    seed: Optional[int] = None

    @classmethod
    def init(cls, input_size, hidden_size=32, output_size=HORIZON_STEPS, seed=0):
        """Uniform(+-1/sqrt(H)) recurrent weights, forget bias 1, zero dense head."""
        rng = np.random.default_rng(seed)
        H = hidden_size
        k = 1.0 / math.sqrt(H)
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        params = {
            "Wx": rng.uniform(-k, k, (input_size, 4 * H)),
            "Wh": rng.uniform(-k, k, (H, 4 * H)),
            "b": b,
            "Wy": np.zeros((H, output_size)),
            "by": np.zeros(output_size),
        }
        return cls(input_size, hidden_size, output_size, params, seed)

    @classmethod
    def zeros(cls, input_size, hidden_size, output_size=HORIZON_STEPS):
        H = hidden_size
        params = {"Wx": np.zeros((input_size, 4 * H)), "Wh": np.zeros((H, 4 * H)), "b": np.zeros(4 * H),
                  "Wy": np.zeros((H, output_size)), "by": np.zeros(output_size)}
        return cls(input_size, hidden_size, output_size, params)

    def n_params(self):
        return sum(p.size for p in self.params.values())

    def copy(self):
        return LstmModel(self.input_size, self.hidden_size, self.output_size,
                         {k: v.copy() for k, v in self.params.items()}, self.seed)

    def to_dict(self, config: Optional[TrainConfig] = None):
        return {
            "format": "holistat-lstm/1",
            "input_size": self.input_size,
            "hidden_size": self.hidden_size,
            "output_size": self.output_size,
            "seed": self.seed,
            "config": None if config is None else asdict(config),
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d):
        params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in d["params"].items()}
        return cls(d["input_size"], d["hidden_size"], d["output_size"], params, d.get("seed"))

    def save(self, path, config=None):
        with open(path, "w") as fh:
            json.dump(self.to_dict(config), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_inputs(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != model.input_size or X.shape[1] < 1:
        raise InvalidInput(f"inputs of shape {X.shape} do not match input_size={model.input_size}")
    return X


def _forward(params, X):
    B, T, _ = X.shape
    H = params["Wh"].shape[0]
    Wh = params["Wh"]
    xproj = X @ params["Wx"] + params["b"]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((T + 1, B, H))
    cs = np.empty((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    hs[0] = h
    cs[0] = c
    for t in range(T):
        a = xproj[:, t] + h @ Wh
        g = np.empty_like(a)
        g[:, :3 * H] = _sigmoid(a[:, :3 * H])
        g[:, 3 * H:] = np.tanh(a[:, 3 * H:])
        c = g[:, H:2 * H] * c + g[:, :H] * g[:, 3 * H:]
        h = g[:, 2 * H:3 * H] * np.tanh(c)
        gates[t] = g
        hs[t + 1] = h
        cs[t + 1] = c
    y = h @ params["Wy"] + params["by"]
    return y, (X, hs, cs, gates)


def _predict(params, X):
    if not USE_KERNEL:
        return _forward(params, X)[0]
    p = [np.ascontiguousarray(params[k]) for k in PARAM_NAMES]
    out = np.empty((X.shape[0], p[3].shape[1]))
    for i in range(X.shape[0]):
        _lstm_kernel.forward(*p, np.ascontiguousarray(X[i]), out[i])
    return out


def lstm_forward(model: LstmModel, inputs) -> np.ndarray:
    """Prediction vector for one window (or a (batch, steps, features) stack)."""
    X = _check_inputs(model, inputs)
    y = _predict(model.params, X)
    return y[0] if np.asarray(inputs).ndim == 2 else y


def hidden_states(model: LstmModel, inputs) -> np.ndarray:
    X = _check_inputs(model, inputs)
    _, (_, hs, _, _) = _forward(model.params, X)
    return hs[1:]


def huber(pred, target, delta=1.0) -> float:
    """Mean elementwise Huber loss."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidInput(f"prediction shape {pred.shape} != target shape {target.shape}")
    if delta <= 0:
        raise InvalidInput("delta must be positive")
    e = np.abs(pred - target)
    quad = np.minimum(e, delta)
    return float(np.mean(0.5 * quad * quad + delta * (e - quad)))


def huber_grad(pred, target, delta=1.0):
    """d(mean Huber)/d(pred)."""
    e = pred - target
    return np.clip(e, -delta, delta) / e.size


def _backward(params, cache, dy):
    X, hs, cs, gates = cache
    T = gates.shape[0]
    H = params["Wh"].shape[0]
    Wh = params["Wh"]
    grads = {
        "Wy": hs[T].T @ dy,
        "by": dy.sum(axis=0),
    }
    dh = dy @ params["Wy"].T
    dc = np.zeros_like(dh)
    da_all = np.empty_like(gates)
    for t in range(T - 1, -1, -1):
        g = gates[t]
        i, f, o, cand = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        da = da_all[t]
        da[:, :H] = dc * cand * i * (1.0 - i)
        da[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        da[:, 3 * H:] = dc * i * (1.0 - cand * cand)
        dh = da @ Wh.T
        dc = dc * f
    # (T, B, 4H) -> accumulate over time and batch
    grads["Wh"] = np.einsum("tbh,tbg->hg", hs[:T], da_all)
    grads["Wx"] = np.einsum("bti,tbg->ig", X, da_all)
    grads["b"] = da_all.sum(axis=(0, 1))
    return grads


def loss_and_gradient(model: LstmModel, inputs, target, delta=1.0):
    X = _check_inputs(model, inputs)
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 1:
        target = target[None]
    if target.shape != (X.shape[0], model.output_size):
        raise InvalidInput(f"target shape {target.shape} does not match output_size={model.output_size}")
    if USE_KERNEL:
        return _kernel_loss_and_gradient(model.params, X, target, delta)
    y, cache = _forward(model.params, X)
    loss = huber(y, target, delta)
    grads = _backward(model.params, cache, huber_grad(y, target, delta))
    return loss, grads


def _kernel_loss_and_gradient(params, X, Y, delta):
    p = [np.ascontiguousarray(params[k]) for k in PARAM_NAMES]
    grads = [np.zeros_like(a) for a in p]
    B, O = Y.shape
    scale = 1.0 / (B * O)
    total = 0.0
    for i in range(B):
        total += _lstm_kernel.forward_backward(*p, np.ascontiguousarray(X[i]), np.ascontiguousarray(Y[i]),
                                               float(delta), scale, *grads)
    return total * scale, dict(zip(PARAM_NAMES, grads))


def lstm_gradient(model: LstmModel, window: WindowSample, delta=1.0):
    """Exact gradients of the window's Huber loss for every parameter."""
    return loss_and_gradient(model, window.inputs, window.target, delta)[1]


# -- windows ---------------------------------------------------------------

def _dense(series: MetricSeries, t_first, n):
    """Values on the regular grid t_first + k*base_interval, NaN where missing/absent."""
    out = np.full(n, np.nan)
    idx = (series.timestamps - t_first) // series.base_interval
    ok = (idx >= 0) & (idx < n) & series.present
    out[idx[ok]] = series.values[ok]
    return out


def make_windows(series: Sequence[MetricSeries], granularity, align=None, target_index=0,
                 input_span=INPUT_SPAN, horizon=HORIZON_STEPS, stats=None):
    """Cut non-overlapping 2 h input chunks, each followed by a 20 min target.

    ``series`` are feature series sharing a 15 s grid; the target always comes
    from ``series[target_index]`` at its base interval.  Chunks start on
    multiples of ``align`` (default: the granularity).  Windows with any
    missing value are dropped and counted in ``stats["dropped"]``.
    """
    series = list(series)
    if not series:
        raise InvalidInput("no series given")
    base = series[target_index].base_interval
    granularity = int(granularity)
    if granularity % base or input_span % granularity:
        raise InvalidInput(f"granularity {granularity} must be a multiple of {base} dividing {input_span}")
    align = granularity if align is None else int(align)
    if align % granularity:
        raise InvalidInput("align must be a multiple of the granularity")
    t_first = min(int(s.timestamps[0]) for s in series if len(s))
    t_last = max(int(s.timestamps[-1]) for s in series if len(s))
    start = -(-t_first // align) * align
    need = input_span + horizon * base
    if t_last + base - start < need:
        raise InvalidInput(f"series span too short for one {need} s window")
    n_windows = (t_last + base - start - need) // input_span + 1
    steps = input_span // granularity
    coarse = [_dense(resample(s, granularity), start, n_windows * steps + steps) for s in series]
    n_base = (t_last - start) // base + 1
    tgt = _dense(series[target_index], start, n_base)
    windows = []
    dropped = 0
    for k in range(n_windows):
        s0 = k * steps
        X = np.stack([c[s0:s0 + steps] for c in coarse], axis=1)
        b0 = (k * input_span + input_span) // base
        y = tgt[b0:b0 + horizon]
        if y.size < horizon or not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            dropped += 1
            continue
        windows.append(WindowSample(X, y.copy(), start + k * input_span))
    if stats is not None:
        stats["dropped"] = stats.get("dropped", 0) + dropped
    return windows


# -- training --------------------------------------------------------------

def _stack(windows):
    return np.stack([w.inputs for w in windows]), np.stack([w.target for w in windows])


def evaluate(model: LstmModel, windows, delta=1.0):
    """Mean over windows of the per-window Huber loss."""
    if not windows:
        raise InvalidInput("nothing to evaluate")
    X, Y = _stack(windows)
    y = _predict(model.params, X)
    e = np.abs(y - Y)
    quad = np.minimum(e, delta)
    return float(np.mean(0.5 * quad * quad + delta * (e - quad)))


def split_windows(windows, eval_fraction):
    n = len(windows)
    n_eval = max(1, int(round(eval_fraction * n)))
    if n - n_eval < 1:
        raise InvalidInput(f"{n} windows are too few for a train/eval split")
    return windows[:n - n_eval], windows[n - n_eval:]


def train_windows(windows, config: TrainConfig, seed=None):
    """Gradient descent with patience-based early stopping; returns (best model, history)."""
    windows = list(windows)
    if not windows:
        raise InvalidInput("no valid windows to train on")
    train_set, eval_set = split_windows(windows, config.eval_fraction)
    seed = config.seed if seed is None else seed
    model = LstmModel.init(windows[0].inputs.shape[1], config.hidden_size, windows[0].target.size, seed)
    rng = np.random.default_rng(seed)
    best = model.copy()
    best_loss = evaluate(model, eval_set, config.huber_delta)
    history = [{"epoch": 0, "train_loss": None, "eval_loss": best_loss, "best_eval_loss": best_loss}]
    stale = 0
    lr = config.learning_rate
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[lo:lo + config.batch_size]]
            X, Y = _stack(batch)
            loss, grads = loss_and_gradient(model, X, Y, config.huber_delta)
            total += loss * len(batch)
            for name in PARAM_NAMES:
                model.params[name] -= lr * grads[name]
        eval_loss = evaluate(model, eval_set, config.huber_delta)
        if not math.isfinite(eval_loss):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        if eval_loss < best_loss - config.min_improvement:
            best_loss = eval_loss
            best = model.copy()
            stale = 0
        else:
            stale += 1
            if eval_loss < best_loss:
                best_loss = eval_loss
                best = model.copy()
        history.append({"epoch": epoch, "train_loss": total / len(train_set), "eval_loss": eval_loss,
                        "best_eval_loss": best_loss})
        if stale >= config.patience:
            break
    return best, history


def prepare_features(series: Sequence[MetricSeries]):
    """Min-max normalize each feature; constant features collapse to zeros."""
    return [normalize_minmax(s, on_constant="zero") for s in series]


def train(series: Sequence[MetricSeries], granularity, config: TrainConfig, align=None, seed=None):
    windows = make_windows(prepare_features(series), granularity, align=align)
    return train_windows(windows, config, seed)


def derive_seed(seed, *parts):
    h = hashlib.sha256(repr((seed,) + tuple(parts)).encode()).digest()
    return int.from_bytes(h[:8], "little")


@dataclass
class StudyTable:
    granularities: List[int]
    losses: Dict[str, Dict[int, float]] = field(default_factory=dict)
    models: Dict[tuple, LstmModel] = field(default_factory=dict, repr=False)
    histories: Dict[tuple, list] = field(default_factory=dict, repr=False)

    def best(self, node):
        row = self.losses[node]
        low = min(row.values())
        return [g for g in self.granularities if row[g] == low]

    def rows(self):
        for node in sorted(self.losses):
            yield node, [self.losses[node][g] for g in self.granularities], self.best(node)


def _study_cell(task):
    node, series, granularity, align, config = task
    windows = make_windows(series, granularity, align=align)
    model, history = train_windows(windows, config, derive_seed(config.seed, node))
    return node, granularity, history[-1]["best_eval_loss"], model, history


def granularity_study(series_by_node: Dict[str, Sequence[MetricSeries]], granularities=DEFAULT_GRANULARITIES,
                      config: Optional[TrainConfig] = None, workers=1) -> StudyTable:
    """Train and evaluate one model per (node, granularity); targets stay on the 15 s grid.

    All granularities of a node share the initial weights and the window set
    (chunks are aligned to the least common multiple of the granularities).
    """
    config = config or TrainConfig()
    granularities = [int(g) for g in granularities]
    align = math.lcm(*granularities)
    tasks = []
    for node in sorted(series_by_node):
        feats = prepare_features(series_by_node[node])
        for g in granularities:
            tasks.append((node, feats, g, align, config))
    table = StudyTable(granularities)
    for node, g, loss, model, history in pmap(_study_cell, tasks, workers):
        table.losses.setdefault(node, {})[g] = loss
        table.models[(node, g)] = model
        table.histories[(node, g)] = history
    return table
