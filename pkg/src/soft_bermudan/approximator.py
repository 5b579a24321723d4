"""Regression models for continuation values: polynomial least squares and a small MLP."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, FitError, StateError


@dataclass(frozen=True)
class RegressionTask:
    inputs: np.ndarray
    targets: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.targets, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise ConfigurationError("inputs and targets must have the same number of samples")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != y.shape[0]:
                raise ConfigurationError("weights must match the number of samples")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class FitHyper:
    """Training hyper-parameters; only the mlp uses them."""

    epochs: int = 200
    batch: int = 256
    learning_rate: float = 0.05
    seed: int = 0
    optimizer: str = "sgd"  # or "adam"
    # after the epochs, solve the linear output layer exactly by least squares
    polish_output: bool = True


def monomial_exponents(dim: int, degree: int, interaction: int) -> np.ndarray:
    """Exponent vectors with total degree <= degree and at most ``interaction`` active variables."""
    rows = [np.zeros(dim, dtype=int)]
    for k in range(1, min(interaction, dim) + 1):
        for vars_ in itertools.combinations(range(dim), k):
            for powers in itertools.product(range(1, degree + 1), repeat=k):
                if sum(powers) <= degree:
                    e = np.zeros(dim, dtype=int)
                    e[list(vars_)] = powers
                    rows.append(e)
    return np.array(rows)


def _poly_design(u: np.ndarray, exps: np.ndarray) -> np.ndarray:
    n, d = u.shape
    maxdeg = int(exps.max()) if exps.size else 0
    pows = np.ones((maxdeg + 1, n, d))
    for k in range(1, maxdeg + 1):
        pows[k] = pows[k - 1] * u
    out = np.ones((n, exps.shape[0]))
    for j in range(d):
        out *= pows[exps[:, j], :, j].T
    return out


_ACT = {
    "tanh": (np.tanh, lambda a: 1.0 - np.tanh(a) ** 2),
    "softplus": (lambda a: np.logaddexp(0.0, a), lambda a: 0.5 * (1.0 + np.tanh(0.5 * a))),
}


def _mlp_shapes(input_dim, hidden):
    sizes = [input_dim, *hidden, 1]
    return [(a, b) for a, b in zip(sizes[:-1], sizes[1:])]


def _unpack(params, shapes):
    out, pos = [], 0
    for a, b in shapes:
        w = params[pos:pos + a * b].reshape(a, b)
        pos += a * b
        c = params[pos:pos + b]
        pos += b
        out.append((w, c))
    return out


def mlp_forward(params: np.ndarray, x: np.ndarray, hidden, activation="tanh") -> np.ndarray:
    f, _ = _ACT[activation]
    h = x
    layers = _unpack(params, _mlp_shapes(x.shape[1], hidden))
    for w, c in layers[:-1]:
        h = f(h @ w + c)
    w, c = layers[-1]
    return (h @ w + c)[:, 0]


def mlp_loss_and_grad(params: np.ndarray, x: np.ndarray, y: np.ndarray, hidden, activation="tanh"):
    """Mean squared error of the network and its gradient with respect to ``params``."""
    f, df = _ACT[activation]
    layers = _unpack(params, _mlp_shapes(x.shape[1], hidden))
    pre, acts = [], [x]
    h = x
    for w, c in layers[:-1]:
        a = h @ w + c
        pre.append(a)
        h = f(a)
        acts.append(h)
    w, c = layers[-1]
    out = (h @ w + c)[:, 0]
    resid = out - y
    n = x.shape[0]
    loss = float(np.mean(resid**2))
    delta = (2.0 / n) * resid[:, None]
    grads = []
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        grads.append((acts[li].T @ delta, delta.sum(axis=0)))
        if li > 0:
            delta = (delta @ w.T) * df(pre[li - 1])
    flat = np.concatenate([np.concatenate([gw.ravel(), gc]) for gw, gc in reversed(grads)])
    return loss, flat


@dataclass(frozen=True)
class ValueEstimator:
    """Either polynomial least squares ('poly_ls') or a feed-forward network ('mlp').

    Inputs are standardised by the training mean and deviation; mlp targets are
    standardised too. A fitted estimator is immutable.
    """

    kind: str = "poly_ls"
    input_dim: int = 1
    degree: int = 4
    interaction: int = 2
    ridge: float = 1e-8
    hidden: tuple = (32, 32)
    activation: str = "tanh"
    params: np.ndarray | None = field(default=None, compare=False)
    mean: np.ndarray | None = field(default=None, compare=False)
    scale: np.ndarray | None = field(default=None, compare=False)
    target_mean: float = 0.0
    target_scale: float = 1.0
    loss_history: tuple = ()

    def __post_init__(self):
        if self.kind not in ("poly_ls", "mlp"):
            raise ConfigurationError(f"unknown estimator kind {self.kind!r}")
        if self.activation not in _ACT:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def fitted(self) -> bool:
        return self.params is not None

    @property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.input_dim, self.degree, self.interaction)

    @property
    def feature_count(self) -> int:
        if self.kind == "poly_ls":
            return self.exponents.shape[0]
        return sum(a * b + b for a, b in _mlp_shapes(self.input_dim, self.hidden))

    def _standardise(self, x):
        return (x - self.mean) / self.scale

    def fit(self, task: RegressionTask, hyper: FitHyper | None = None) -> "ValueEstimator":
        return fit(self, task, hyper)

    def predict(self, x) -> np.ndarray:
        return predict(self, x)

    # serialisation
    def to_json(self) -> str:
        if not self.fitted:
            raise StateError("estimator is not fitted")
        blob = {
            "kind": self.kind, "input_dim": self.input_dim, "degree": self.degree,
            "interaction": self.interaction, "ridge": self.ridge, "hidden": list(self.hidden),
            "activation": self.activation, "params": self.params.tolist(),
            "mean": self.mean.tolist(), "scale": self.scale.tolist(),
            "target_mean": self.target_mean, "target_scale": self.target_scale,
            "loss_history": list(self.loss_history),
        }
        return json.dumps(blob)

    @classmethod
    def from_json(cls, text: str) -> "ValueEstimator":
        b = json.loads(text)
        return cls(b["kind"], b["input_dim"], b["degree"], b["interaction"], b["ridge"],
                   tuple(b["hidden"]), b["activation"], np.array(b["params"]),
                   np.array(b["mean"]), np.array(b["scale"]), b["target_mean"],
                   b["target_scale"], tuple(b["loss_history"]))


def _input_stats(x):
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 1e-12 * np.maximum(1.0, np.abs(mean)), scale, 1.0)
    return mean, scale


def fit(estimator: ValueEstimator, task: RegressionTask, hyper: FitHyper | None = None) -> ValueEstimator:
    """Return a fitted copy of ``estimator``."""
    x, y = task.inputs, task.targets
    if x.shape[1] != estimator.input_dim:
        raise ConfigurationError(f"expected {estimator.input_dim} input columns, got {x.shape[1]}")
    mean, scale = _input_stats(x)
    base = replace(estimator, mean=mean, scale=scale)
    u = base._standardise(x)
    if estimator.kind == "poly_ls":
        return _fit_poly(base, u, y, task.weights)
    return _fit_mlp(base, u, y, hyper or FitHyper())


def _fit_poly(est, u, y, weights):
    exps = est.exponents
    a = _poly_design(u, exps)
    if a.shape[0] < a.shape[1]:
        raise FitError(f"{a.shape[0]} samples cannot determine {a.shape[1]} coefficients")
    if weights is not None:
        sw = np.sqrt(weights)
        a, y = a * sw[:, None], y * sw
    if est.ridge > 0:
        # ridge minimiser via the augmented least-squares system
        aug = np.vstack([a, np.sqrt(est.ridge) * np.eye(a.shape[1])])
        rhs = np.concatenate([y, np.zeros(a.shape[1])])
        coef, _, rank, _ = scipy.linalg.lstsq(aug, rhs, lapack_driver="gelsy")
    else:
        coef, _, rank, _ = scipy.linalg.lstsq(a, y, lapack_driver="gelsy")
        if rank < a.shape[1]:
            raise FitError(f"rank-deficient design ({rank} < {a.shape[1]}) and no ridge")
    if not np.all(np.isfinite(coef)):
        raise FitError("least-squares solution is not finite")
    resid = a @ coef - y
    loss = float(np.mean(resid**2))
    return replace(est, params=coef, loss_history=(loss,))


def _glorot(shapes, rng):
    parts = []
    for a, b in shapes:
        lim = np.sqrt(6.0 / (a + b))
        parts.append(rng.uniform(-lim, lim, size=a * b))
        parts.append(np.zeros(b))
    return np.concatenate(parts)


def _fit_mlp(est, u, y, hyper: FitHyper):
    if hyper.optimizer not in ("sgd", "adam"):
        raise ConfigurationError(f"unknown optimizer {hyper.optimizer!r}")
    rng = np.random.default_rng(hyper.seed)
    ym = float(y.mean())
    ys = float(y.std())
    # constant targets: a zero output scale makes the prediction exactly the constant
    z = (y - ym) / (ys or 1.0)
    shapes = _mlp_shapes(est.input_dim, est.hidden)
    params = _glorot(shapes, rng)
    m1 = np.zeros_like(params)
    m2 = np.zeros_like(params)
    step = 0
    n = u.shape[0]
    batch = min(hyper.batch, n)
    history = []
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch):
            idx = order[s:s + batch]
            _, g = mlp_loss_and_grad(params, u[idx], z[idx], est.hidden, est.activation)
            if hyper.optimizer == "sgd":
                params = params - hyper.learning_rate * g
            else:
                step += 1
                m1 = 0.9 * m1 + 0.1 * g
                m2 = 0.999 * m2 + 0.001 * g * g
                mh = m1 / (1 - 0.9**step)
                vh = m2 / (1 - 0.999**step)
                params = params - hyper.learning_rate * mh / (np.sqrt(vh) + 1e-8)
        loss = float(np.mean((mlp_forward(params, u, est.hidden, est.activation) - z) ** 2))
        if not np.isfinite(loss):
            raise FitError("mlp training diverged")
        history.append(loss * ys**2)
    if hyper.polish_output:
        params = _polish_output_layer(params, u, z, est)
    return replace(est, params=params, target_mean=ym, target_scale=ys, loss_history=tuple(history))


def _polish_output_layer(params, u, z, est):
    """Replace the output weights and bias by the least-squares fit on the last hidden layer."""
    f, _ = _ACT[est.activation]
    shapes = _mlp_shapes(est.input_dim, est.hidden)
    layers = _unpack(params, shapes)
    h = u
    for w, c in layers[:-1]:
        h = f(h @ w + c)
    a = np.hstack([h, np.ones((h.shape[0], 1))])
    k = a.shape[1]
    aug = np.vstack([a, np.sqrt(1e-8 * h.shape[0]) * np.eye(k)])
    rhs = np.concatenate([z, np.zeros(k)])
    coef = scipy.linalg.lstsq(aug, rhs, lapack_driver="gelsy")[0]
    if not np.all(np.isfinite(coef)):
        return params
    out = params.copy()
    out[-k:] = coef  # output layer is stored last as (hidden weights, bias)
    return out


def predict(estimator: ValueEstimator, x) -> np.ndarray:
    """Evaluate on an array of inputs shaped (n, d) (or (n,) when d = 1)."""
    if not estimator.fitted:
        raise StateError("estimator is not fitted")
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None] if estimator.input_dim == 1 else arr[None, :]
    u = estimator._standardise(arr)
    if estimator.kind == "poly_ls":
        return _poly_design(u, estimator.exponents) @ estimator.params
    out = mlp_forward(estimator.params, u, estimator.hidden, estimator.activation)
    return estimator.target_mean + estimator.target_scale * out
