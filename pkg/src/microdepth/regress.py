"""Depth regressors on fused feature vectors.

Features are z-scored with training statistics, then fed to either a ridge
model (closed form) or a small softplus MLP trained with Adam.  Models
serialize to JSON together with the standardizer and a feature-layout hash.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import (InvalidDatasetError, InvalidInputError, LayoutMismatchError,
                     SingularSystemError, TrainingDivergedError)

MODEL_FORMAT_VERSION = 1


# --- fusion -----------------------------------------------------------------

def fuse(physics, embedding=None) -> np.ndarray:
    """Concatenate a physics vector with an optional deep embedding."""
    physics = np.asarray(getattr(physics, "values", physics), dtype=np.float64).ravel()
    if embedding is None:
        return physics.copy()
    embedding = np.asarray(embedding, dtype=np.float64).ravel()
    return np.concatenate([physics, embedding])


def fuse_rows(physics_rows, embeddings=None) -> np.ndarray:
    """Stack fused vectors for a dataset; ragged embeddings are rejected."""
    X = np.asarray(physics_rows, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidDatasetError(f"physics features must be a 2-D matrix, got shape {X.shape}")
    if embeddings is None:
        return X.copy()
    embeddings = [None if e is None or len(e) == 0 else np.asarray(e, dtype=np.float64).ravel()
                  for e in embeddings]
    if len(embeddings) != len(X):
        raise InvalidDatasetError(f"{len(embeddings)} embeddings for {len(X)} samples")
    lengths = {0 if e is None else len(e) for e in embeddings}
    if len(lengths) > 1:
        raise InvalidDatasetError(f"ragged embedding lengths {sorted(lengths)}")
    if lengths == {0}:
        return X.copy()
    return np.hstack([X, np.vstack(embeddings)])


# --- standardization --------------------------------------------------------

@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        """Column-wise z-scoring; constant columns are flagged and left untouched."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 2:
            raise InvalidDatasetError(f"standardizer needs at least 2 rows, got shape {X.shape}")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        scale = np.maximum(np.abs(mean), 1.0)
        constant = std <= 1e-12 * scale
        mean = np.where(constant, 0.0, mean)
        std = np.where(constant, 1.0, std)
        return cls(mean, std, constant)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.shape[0]:
            raise InvalidInputError(f"expected {self.mean.shape[0]} features, got {X.shape[-1]}")
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64),
                   np.array(d["constant"], dtype=bool))


# --- ridge ------------------------------------------------------------------

@dataclass
class RidgeModel:
    weights: np.ndarray
    bias: float
    lam: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d) -> "RidgeModel":
        return cls(np.array(d["weights"], dtype=np.float64), float(d["bias"]), float(d["lambda"]))


def fit_ridge(X, y, lam: float = 1.0) -> RidgeModel:
    """Minimize ||Xw + b - y||^2 + lam * ||w||^2 with an unpenalized bias.

    Centering removes the bias, the normal equations are then solved by
    Cholesky factorization.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if lam < 0:
        raise InvalidInputError(f"lambda must be >= 0, got {lam}")
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise InvalidDatasetError(f"X of shape {X.shape} does not match {y.shape[0]} targets")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    A = Xc.T @ Xc
    A[np.diag_indices_from(A)] += lam
    b = Xc.T @ (y - y_mean)
    try:
        factor = linalg.cho_factor(A, lower=False, check_finite=True)
        if lam == 0:
            d = np.abs(np.diag(factor[0]))
            if d.min() <= 1e-10 * max(d.max(), 1.0):
                raise linalg.LinAlgError("near-singular")
        w = linalg.cho_solve(factor, b)
    except linalg.LinAlgError:
        raise SingularSystemError(
            "normal equations are singular (rank-deficient or constant features); "
            "use lambda > 0") from None
    return RidgeModel(w, y_mean - float(x_mean @ w), float(lam))


# --- MLP --------------------------------------------------------------------

def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class MlpModel:
    """Fully connected regressor with softplus hidden units and a linear output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "MlpModel":
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            ws.append(rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    def forward(self, X):
        """Output plus the cached pre-activations and activations for backprop."""
        acts = [np.asarray(X, dtype=np.float64)]
        pre = []
        h = acts[0]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ W + b
            pre.append(a)
            h = a if i == last else softplus(a)
            acts.append(h)
        return h[:, 0], pre, acts

    def predict(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def loss_and_grads(self, X, y):
        """Mean squared error and its gradient with respect to every parameter."""
        y = np.asarray(y, dtype=np.float64).ravel()
        out, pre, acts = self.forward(X)
        n = y.shape[0]
        resid = out - y
        loss = float(np.mean(resid ** 2))
        delta = (2.0 / n) * resid[:, None]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * sigmoid(pre[i - 1])
        return loss, gw, gb

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def to_dict(self) -> dict:
        return {"weights": [w.tolist() for w in self.weights], "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_dict(cls, d) -> "MlpModel":
        return cls([np.array(w, dtype=np.float64) for w in d["weights"]],
                   [np.array(b, dtype=np.float64) for b in d["biases"]])


@dataclass
class MlpParams:
    hidden: tuple[int, ...] = (64, 32)
    lr: float = 1e-3
    epochs: int = 200
    batch: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def fit_mlp(X, y, hp: MlpParams | None = None, history: list | None = None) -> MlpModel:
    """Mini-batch Adam on mean squared error; deterministic for a given seed.

    If ``history`` is given, the mean training loss of every epoch is appended.
    """
    hp = hp or MlpParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise InvalidDatasetError(f"X of shape {X.shape} does not match {y.shape[0]} targets")
    rng = np.random.default_rng(hp.seed)
    model = MlpModel.init([X.shape[1], *hp.hidden, 1], rng)
    params = model.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    n = X.shape[0]
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hp.batch):
            idx = order[start:start + hp.batch]
            loss, gw, gb = model.loss_and_grads(X[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss} at epoch {epoch}; lower the learning rate (lr={hp.lr})")
            total += loss * len(idx)
            grads = [g for pair in zip(gw, gb) for g in pair]
            step += 1
            c1 = 1.0 - hp.beta1 ** step
            c2 = 1.0 - hp.beta2 ** step
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= hp.beta1
                mi += (1.0 - hp.beta1) * g
                vi *= hp.beta2
                vi += (1.0 - hp.beta2) * g * g
                p -= hp.lr * (mi / c1) / (np.sqrt(vi / c2) + hp.eps)
        if history is not None:
            history.append(total / n)
    return model


# --- evaluation -------------------------------------------------------------

@dataclass
class EvalReport:
    mse: float
    r2: float | None
    n: int
    residuals: np.ndarray = field(repr=False)

    def to_dict(self, residuals: bool = False) -> dict:
        d = {"mse_um2": self.mse, "r2": self.r2, "n": self.n}
        if residuals:
            d["residuals"] = self.residuals.tolist()
        return d


def evaluate(y_hat, y) -> EvalReport:
    """MSE and coefficient of determination; ``r2`` is None for constant targets."""
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if y_hat.shape != y.shape or y.size == 0:
        raise InvalidInputError(f"prediction shape {y_hat.shape} does not match target shape {y.shape}")
    resid = y_hat - y
    sse = float(math.fsum(resid * resid))
    mse = sse / y.size
    r2 = None
    if y.size >= 2:
        mean = math.fsum(y) / y.size
        sst = float(math.fsum((y - mean) ** 2))
        if sst > 0:
            r2 = 1.0 - sse / sst
    return EvalReport(mse, r2, int(y.size), resid)


def split_indices(n: int, train_frac: float = 1.0, seed: int = 0, test_frac: float = 0.2):
    """Seeded train/test split.

    The test part is fixed by ``(n, seed, test_frac)``; ``train_frac`` keeps a
    prefix of the shuffled training pool, so smaller fractions are subsets of
    larger ones.
    """
    if not 0 < train_frac <= 1:
        raise InvalidInputError(f"train_frac must be in (0, 1], got {train_frac}")
    if not 0 < test_frac < 1:
        raise InvalidInputError(f"test_frac must be in (0, 1), got {test_frac}")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_frac * n))
    test, pool = perm[:n_test], perm[n_test:]
    n_train = int(round(train_frac * len(pool)))
    if n_test == 0 or n_train == 0:
        raise InvalidInputError(f"split of {n} samples leaves an empty part "
                                f"(train={n_train}, test={n_test})")
    return np.sort(pool[:n_train]), np.sort(test)


def split_dataset(ds, train_frac: float = 1.0, seed: int = 0, test_frac: float = 0.2):
    train, test = split_indices(len(ds), train_frac, seed, test_frac)
    return [ds[i] for i in train], [ds[i] for i in test]


# --- fitted pipeline + persistence -------------------------------------------

@dataclass
class DepthRegressor:
    """Standardizer plus model, tied to the feature layout it was trained on."""

    standardizer: Standardizer
    model: RidgeModel | MlpModel
    layout_hash: str
    config: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "ridge" if isinstance(self.model, RidgeModel) else "mlp"

    def predict(self, X) -> np.ndarray:
        return self.model.predict(self.standardizer.apply(X))

    def check_layout(self, layout_hash: str) -> None:
        if layout_hash != self.layout_hash:
            raise LayoutMismatchError(
                f"feature layout hash {layout_hash} does not match the model's {self.layout_hash}; "
                "the data was extracted with a different grid or metric set")

    def to_json(self) -> str:
        blob = {"format_version": MODEL_FORMAT_VERSION, "kind": self.kind,
                "layout_hash": self.layout_hash, "standardizer": self.standardizer.to_dict(),
                "model": self.model.to_dict(), "config": self.config}
        return json.dumps(blob, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DepthRegressor":
        blob = json.loads(text)
        if blob.get("format_version") != MODEL_FORMAT_VERSION:
            raise InvalidInputError(f"unsupported model format version {blob.get('format_version')}")
        model_cls = {"ridge": RidgeModel, "mlp": MlpModel}.get(blob["kind"])
        if model_cls is None:
            raise InvalidInputError(f"unknown model kind {blob['kind']!r}")
        return cls(Standardizer.from_dict(blob["standardizer"]), model_cls.from_dict(blob["model"]),
                   blob["layout_hash"], blob.get("config", {}))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "DepthRegressor":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def train_regressor(X, y, layout: str, kind: str = "ridge", lam: float = 1.0,
                    mlp: MlpParams | None = None, config: dict | None = None) -> DepthRegressor:
    std = Standardizer.fit(X)
    Z = std.apply(X)
    if kind == "ridge":
        model = fit_ridge(Z, y, lam)
    elif kind == "mlp":
        model = fit_mlp(Z, y, mlp)
    else:
        raise InvalidInputError(f"unknown regressor {kind!r}")
    return DepthRegressor(std, model, layout, config or {})
