"""Neural models for the PDE right-hand side, with exact backpropagation.

Two small architectures:

* a three-layer ReLU MLP regressing dU/dt on pointwise spatial-derivative
  features (the functional form of the PDE law), and
* a three-layer convolutional "stencil" net regressing the dU/dt field on
  neighboring grid values (the discretized form); the first kernel has
  size 3 (or 3x3), the last two layers are 1x1 convolutions.

Everything is plain numpy: forward, reverse-mode gradients, ADAM, and a
deterministic mini-batch training loop with early stopping.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ConfigError, InputError, NumericalError
from .features import FeatureSpec


def relu(z):
    return np.maximum(z, 0.0)


def glorot_uniform(rng, fan_in, fan_out, shape):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def loss_mse(pred, target):
    """Mean squared error; non-finite targets mark excluded positions."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise InputError("prediction and target shapes differ")
    if pred.size == 0:
        raise InputError("empty input to loss")
    keep = np.isfinite(target)
    if not np.all(keep):
        if not np.any(keep):
            raise InputError("no finite targets in loss")
        return float(np.mean((pred[keep] - target[keep]) ** 2))
    return float(np.mean((pred - target) ** 2))


# ---------------------------------------------------------------------------
# derivative-feature MLP
# ---------------------------------------------------------------------------

@dataclass
class MlpParams:
    """Three dense layers (in -> hidden -> hidden -> 1) with ReLU between."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    out_mean: float = 0.0
    out_scale: float = 1.0
    normalize: bool = True

    def arrays(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "w3": self.w3, "b3": self.b3}

    @property
    def n_features(self):
        return self.w1.shape[0]

    def forward(self, x):
        return mlp_forward(self, x)

    def backward(self, x, y):
        return mlp_backward(self, x, y)


def init_mlp(n_features, hidden, rng, normalize=True) -> MlpParams:
    return MlpParams(
        w1=glorot_uniform(rng, n_features, hidden, (n_features, hidden)),
        b1=np.zeros(hidden),
        w2=glorot_uniform(rng, hidden, hidden, (hidden, hidden)),
        b2=np.zeros(hidden),
        w3=glorot_uniform(rng, hidden, 1, (hidden, 1)),
        b3=np.zeros(1),
        feat_mean=np.zeros(n_features),
        feat_std=np.ones(n_features),
        normalize=normalize,
    )


def mlp_forward(params: MlpParams, x):
    """Pointwise prediction for a (points, features) matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.n_features:
        raise InputError(
            f"expected (points, {params.n_features}) features, got {x.shape}")
    xn = (x - params.feat_mean) / params.feat_std
    z1 = xn @ params.w1 + params.b1
    z2 = relu(z1) @ params.w2 + params.b2
    raw = (relu(z2) @ params.w3 + params.b3).ravel()
    return raw * params.out_scale + params.out_mean


def mlp_backward(params: MlpParams, x, y):
    """MSE loss and exact gradients for a batch."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    xn = (x - params.feat_mean) / params.feat_std
    z1 = xn @ params.w1 + params.b1
    a1 = relu(z1)
    z2 = a1 @ params.w2 + params.b2
    a2 = relu(z2)
    raw = (a2 @ params.w3 + params.b3).ravel()
    pred = raw * params.out_scale + params.out_mean
    resid = pred - y
    loss = float(np.mean(resid ** 2))
    # d loss / d raw, per sample
    d_raw = (2.0 / y.size) * resid * params.out_scale
    d3 = d_raw[:, None]
    grads = {
        "w3": a2.T @ d3,
        "b3": d3.sum(axis=0),
    }
    d_a2 = d3 @ params.w3.T
    d2 = d_a2 * (z2 > 0)
    grads["w2"] = a1.T @ d2
    grads["b2"] = d2.sum(axis=0)
    d_a1 = d2 @ params.w2.T
    d1 = d_a1 * (z1 > 0)
    grads["w1"] = xn.T @ d1
    grads["b1"] = d1.sum(axis=0)
    return loss, grads


# ---------------------------------------------------------------------------
# stencil convolution net
# ---------------------------------------------------------------------------

@dataclass
class StencilNetParams:
    """conv(k) -> ReLU -> conv(1) -> ReLU -> conv(1); 1D or 2D fields.

    k1: (filters, k) in 1D or (filters, k, k) in 2D (single input channel);
    k2: (filters, filters); k3: (1, filters).  Padding is "replicate" at
    Dirichlet boundaries (1D) or "periodic" on periodic domains.
    """

    k1: np.ndarray
    b1: np.ndarray
    k2: np.ndarray
    b2: np.ndarray
    k3: np.ndarray
    b3: np.ndarray
    padding: str = "replicate"
    ndim: int = 1
    dx: float | None = None
    in_mean: float = 0.0
    in_std: float = 1.0
    out_mean: float = 0.0
    out_scale: float = 1.0
    normalize: bool = True

    def arrays(self):
        return {"k1": self.k1, "b1": self.b1, "k2": self.k2, "b2": self.b2,
                "k3": self.k3, "b3": self.b3}

    @property
    def kernel_size(self):
        return self.k1.shape[1]

    def forward(self, u):
        return stencil_forward(self, u)

    def backward(self, u, y):
        return stencil_backward(self, u, y)


def init_stencil(ndim, kernel_size, filters, rng, padding="replicate",
                 dx=None, normalize=True) -> StencilNetParams:
    if padding not in ("replicate", "periodic"):
        raise ConfigError(f"unknown padding mode {padding!r}")
    if ndim == 1:
        k1_shape = (filters, kernel_size)
        fan1 = kernel_size
    elif ndim == 2:
        k1_shape = (filters, kernel_size, kernel_size)
        fan1 = kernel_size * kernel_size
    else:
        raise ConfigError("ndim must be 1 or 2")
    return StencilNetParams(
        k1=glorot_uniform(rng, fan1, filters, k1_shape),
        b1=np.zeros(filters),
        k2=glorot_uniform(rng, filters, filters, (filters, filters)),
        b2=np.zeros(filters),
        k3=glorot_uniform(rng, filters, 1, (1, filters)),
        b3=np.zeros(1),
        padding=padding,
        ndim=ndim,
        dx=dx,
        normalize=normalize,
    )


def _windows_1d(u, k, padding):
    """Stacked shifted copies (k, samples, n) of the (samples, n) field."""
    half = k // 2
    if padding == "replicate":
        up = np.concatenate([np.repeat(u[:, :1], half, axis=1), u,
                             np.repeat(u[:, -1:], half, axis=1)], axis=1)
        return np.stack([up[:, j:j + u.shape[1]] for j in range(k)])
    return np.stack([np.roll(u, half - j, axis=1) for j in range(k)])


def _windows_2d(u, k):
    """Stacked shifted copies (k*k, samples, nx, ny), periodic wrap."""
    half = k // 2
    stacks = []
    for ox in range(-half, half + 1):
        for oy in range(-half, half + 1):
            stacks.append(np.roll(u, (-ox, -oy), axis=(1, 2)))
    return np.stack(stacks)


def _stencil_layers(params: StencilNetParams, u):
    u = np.asarray(u, dtype=float)
    expected = params.ndim + 1
    if u.ndim != expected:
        raise InputError(f"expected a (samples, {'x' if params.ndim == 1 else 'x, y'}) field array")
    if u.shape[1] < params.kernel_size:
        raise InputError("field shorter than the first kernel")
    un = (u - params.in_mean) / params.in_std
    if params.ndim == 1:
        win = _windows_1d(un, params.kernel_size, params.padding)
        k1 = params.k1
    else:
        if params.padding != "periodic":
            raise ConfigError("2D stencil nets support periodic padding only")
        win = _windows_2d(un, params.kernel_size)
        k1 = params.k1.reshape(params.k1.shape[0], -1)
    z1 = np.einsum("qj,js...->sq...", k1, win)
    z1 += params.b1.reshape((1, -1) + (1,) * params.ndim)
    a1 = relu(z1)
    z2 = np.einsum("qp,sp...->sq...", params.k2, a1)
    z2 += params.b2.reshape((1, -1) + (1,) * params.ndim)
    a2 = relu(z2)
    z3 = np.einsum("qp,sp...->sq...", params.k3, a2)
    z3 += params.b3.reshape((1, -1) + (1,) * params.ndim)
    return win, z1, a1, z2, a2, z3


def stencil_forward(params: StencilNetParams, u):
    """dU/dt field prediction for a (samples, *grid) field array."""
    *_, z3 = _stencil_layers(params, u)
    return z3[:, 0] * params.out_scale + params.out_mean


def stencil_backward(params: StencilNetParams, u, y):
    """MSE loss (over all samples and grid points) and exact gradients.

    Grid positions with non-finite targets are excluded from the loss;
    this masks ghost cells whose values are slaved to boundary data.
    """
    y = np.asarray(y, dtype=float)
    win, z1, a1, z2, a2, z3 = _stencil_layers(params, u)
    pred = z3[:, 0] * params.out_scale + params.out_mean
    if pred.shape != y.shape:
        raise InputError("prediction and target shapes differ")
    keep = np.isfinite(y)
    n_keep = int(keep.sum())
    if n_keep == 0:
        raise InputError("no finite targets in loss")
    resid = np.where(keep, pred - y, 0.0)
    loss = float(np.sum(resid ** 2) / n_keep)
    # flatten grid axes: every tensor becomes (samples, channels, points)
    s = y.shape[0]
    flat = lambda t: t.reshape(s, t.shape[1], -1)
    z1f, a1f, z2f, a2f = flat(z1), flat(a1), flat(z2), flat(a2)
    winf = win.reshape(win.shape[0], s, -1)
    d3 = ((2.0 / n_keep) * resid * params.out_scale).reshape(s, 1, -1)
    grads = {
        "k3": np.einsum("sqn,spn->qp", d3, a2f),
        "b3": np.array([d3.sum()]),
    }
    d2 = np.einsum("qp,sqn->spn", params.k3, d3) * (z2f > 0)
    grads["k2"] = np.einsum("sqn,spn->qp", d2, a1f)
    grads["b2"] = d2.sum(axis=(0, 2))
    d1 = np.einsum("qp,sqn->spn", params.k2, d2) * (z1f > 0)
    grads["k1"] = np.einsum("sqn,jsn->qj", d1, winf).reshape(params.k1.shape)
    grads["b1"] = d1.sum(axis=(0, 2))
    return loss, grads


# ---------------------------------------------------------------------------
# ADAM
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: dict
    v: dict
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, arrays, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(m={k: np.zeros_like(a) for k, a in arrays.items()},
                   v={k: np.zeros_like(a) for k, a in arrays.items()},
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_update(arrays, grads, state: AdamState):
    """One bias-corrected ADAM step, in place; returns (arrays, state)."""
    state.t += 1
    b1c = 1.0 - state.beta1 ** state.t
    b2c = 1.0 - state.beta2 ** state.t
    for k, a in arrays.items():
        g = grads[k]
        if g.shape != a.shape:
            raise InputError(f"gradient shape mismatch for {k}")
        state.m[k] = state.beta1 * state.m[k] + (1 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1 - state.beta2) * g * g
        m_hat = state.m[k] / b1c
        v_hat = state.v[k] / b2c
        a -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return arrays, state


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr: float = 1e-3
    max_epochs: int = 500
    patience: int = 50
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.val_fraction < 1.0):
            raise ConfigError("validation fraction must be in (0, 1)")


def _fit_normalization(params, x, y):
    if isinstance(params, MlpParams):
        params.feat_mean = x.mean(axis=0)
        std = x.std(axis=0)
        params.feat_std = np.where(std > 1e-12, std, 1.0)
    else:
        params.in_mean = float(x.mean())
        std = float(x.std())
        params.in_std = std if std > 1e-12 else 1.0
    y_fin = y[np.isfinite(y)]
    params.out_mean = float(y_fin.mean())
    scale = float(y_fin.std())
    params.out_scale = scale if scale > 1e-12 else 1.0


def train(params, x, y, config: TrainConfig, rng=None):
    """Mini-batch ADAM with early stopping on a validation split.

    Returns (best_params, history) where history rows are
    (epoch, train_loss, val_loss).  Deterministic for a fixed seed: the
    split, the shuffles, and the reduction order are all fixed.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise InputError("need matching, non-empty samples and targets")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = x.shape[0]
    n_val = max(1, int(round(config.val_fraction * n)))
    if n_val >= n:
        raise InputError("dataset too small for the validation split")
    order = rng.permutation(n)
    val_idx, train_idx = order[:n_val], order[n_val:]
    x_tr, y_tr = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]
    if params.normalize:
        _fit_normalization(params, x_tr, y_tr)

    state = AdamState.for_params(params.arrays(), lr=config.lr)
    best_val = np.inf
    best = copy.deepcopy(params)
    history = []
    stale = 0
    n_tr = len(train_idx)
    for epoch in range(config.max_epochs):
        perm = rng.permutation(n_tr)
        train_loss = 0.0
        n_batches = 0
        for lo in range(0, n_tr, config.batch_size):
            sel = perm[lo:lo + config.batch_size]
            loss, grads = params.backward(x_tr[sel], y_tr[sel])
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}")
            adam_update(params.arrays(), grads, state)
            train_loss += loss
            n_batches += 1
        val_loss = loss_mse(params.forward(x_val), y_val)
        if not np.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        history.append((epoch, train_loss / n_batches, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best = copy.deepcopy(params)
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    return best, history


# ---------------------------------------------------------------------------
# sklearn-style estimators
# ---------------------------------------------------------------------------

class DerivativeMlpRegressor(BaseEstimator, RegressorMixin):
    """MLP regressing pointwise dU/dt on spatial-derivative features."""

    def __init__(self, hidden=32, lr=1e-3, batch_size=64, max_epochs=500,
                 patience=50, val_fraction=0.1, normalize=True,
                 random_state=0):
        self.hidden = hidden
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.normalize = normalize
        self.random_state = random_state

    def _config(self):
        return TrainConfig(batch_size=self.batch_size, lr=self.lr,
                           max_epochs=self.max_epochs, patience=self.patience,
                           val_fraction=self.val_fraction,
                           seed=self.random_state)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        rng = np.random.default_rng(self.random_state)
        params = init_mlp(X.shape[1], self.hidden, rng,
                          normalize=self.normalize)
        self.params_, self.history_ = train(params, X, y, self._config(), rng)
        return self

    def predict(self, X):
        return mlp_forward(self.params_, X)


class StencilNetRegressor(BaseEstimator, RegressorMixin):
    """Convolutional net regressing the dU/dt field on neighboring values."""

    def __init__(self, kernel_size=3, filters=32, padding="replicate",
                 dx=None, lr=1e-3, batch_size=64, max_epochs=500, patience=50,
                 val_fraction=0.1, normalize=True, random_state=0):
        self.kernel_size = kernel_size
        self.filters = filters
        self.padding = padding
        self.dx = dx
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.normalize = normalize
        self.random_state = random_state

    def _config(self):
        return TrainConfig(batch_size=self.batch_size, lr=self.lr,
                           max_epochs=self.max_epochs, patience=self.patience,
                           val_fraction=self.val_fraction,
                           seed=self.random_state)

    def fit(self, U, dUdt):
        U = np.asarray(U, dtype=float)
        dUdt = np.asarray(dUdt, dtype=float)
        if U.shape != dUdt.shape:
            raise InputError("field and target arrays must match")
        rng = np.random.default_rng(self.random_state)
        params = init_stencil(U.ndim - 1, self.kernel_size, self.filters, rng,
                              padding=self.padding, dx=self.dx,
                              normalize=self.normalize)
        self.params_, self.history_ = train(params, U, dUdt, self._config(),
                                            rng)
        return self

    def predict(self, U):
        return stencil_forward(self.params_, np.asarray(U, dtype=float))


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def _encode(a):
    return {"shape": list(np.shape(a)), "data": np.asarray(a).ravel().tolist()}


def _decode(d):
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def save_model(path, params, feature_spec: FeatureSpec | None = None,
               provenance: dict | None = None):
    """Serialize trained parameters to a JSON model file."""
    if isinstance(params, MlpParams):
        doc = {
            "architecture": "mlp",
            "weights": {k: _encode(v) for k, v in params.arrays().items()},
            "normalization": {
                "feat_mean": params.feat_mean.tolist(),
                "feat_std": params.feat_std.tolist(),
                "out_mean": params.out_mean,
                "out_scale": params.out_scale,
                "enabled": params.normalize,
            },
            "feature_spec": feature_spec.to_dict() if feature_spec else None,
        }
    elif isinstance(params, StencilNetParams):
        doc = {
            "architecture": "stencil",
            "weights": {k: _encode(v) for k, v in params.arrays().items()},
            "normalization": {
                "in_mean": params.in_mean,
                "in_std": params.in_std,
                "out_mean": params.out_mean,
                "out_scale": params.out_scale,
                "enabled": params.normalize,
            },
            "padding": params.padding,
            "ndim": params.ndim,
            "dx": params.dx,
        }
    else:
        raise InputError(f"cannot serialize {type(params).__name__}")
    doc["provenance"] = provenance or {}
    Path(path).write_text(json.dumps(doc))


def load_model(path):
    """Load a JSON model file back into a params object."""
    doc = json.loads(Path(path).read_text())
    w = {k: _decode(v) for k, v in doc["weights"].items()}
    norm = doc["normalization"]
    if doc["architecture"] == "mlp":
        params = MlpParams(
            w1=w["w1"], b1=w["b1"], w2=w["w2"], b2=w["b2"], w3=w["w3"],
            b3=w["b3"],
            feat_mean=np.asarray(norm["feat_mean"], dtype=float),
            feat_std=np.asarray(norm["feat_std"], dtype=float),
            out_mean=norm["out_mean"], out_scale=norm["out_scale"],
            normalize=norm["enabled"])
        spec = (FeatureSpec.from_dict(doc["feature_spec"])
                if doc.get("feature_spec") else None)
        return params, spec, doc.get("provenance", {})
    if doc["architecture"] == "stencil":
        params = StencilNetParams(
            k1=w["k1"], b1=w["b1"], k2=w["k2"], b2=w["b2"], k3=w["k3"],
            b3=w["b3"], padding=doc["padding"], ndim=doc["ndim"],
            dx=doc["dx"], in_mean=norm["in_mean"], in_std=norm["in_std"],
            out_mean=norm["out_mean"], out_scale=norm["out_scale"],
            normalize=norm["enabled"])
        return params, None, doc.get("provenance", {})
    raise InputError(f"unknown architecture {doc['architecture']!r}")
