"""Dense classifier heads trained from scratch: forward/backward, losses,
Adam, cosine schedule, and an early-stopping mini-batch loop.

Two architectures are supported:

* :class:`LinearHead` -- a single affine layer ``d -> K``;
* :class:`MlpHead` -- ``d -> hidden -> K`` with batch normalization, ReLU
  and inverted dropout after the hidden layer.

All math runs in float64; inputs are promoted on entry. Given (seed, data,
config) a training run is bit-for-bit reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BN_MOMENTUM = 0.1
BN_EPS = 1e-5


class NonFiniteError(ValueError):
    """Raised when an input, gradient or parameter stops being finite."""


class ShapeError(ValueError):
    pass


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values in {what}")


@dataclass
class TrainConfig:
    lr_max: float = 1e-3
    lr_min: float = 0.0
    max_epochs: int = 50
    batch_size: int = 128
    patience: int = 7
    label_smoothing: float = 0.0
    use_class_weights: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.lr_max > self.lr_min >= 0:
            raise ValueError("require lr_max > lr_min >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must be in [0, 1)")


class AdamState:
    """First/second moments per parameter plus a shared step counter."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0


def adam_step(model: "Head", grads: dict[str, np.ndarray], lr: float) -> None:
    """One Adam update in place; raises on non-finite gradients."""
    params = model.params
    state = model.adam
    for k, g in grads.items():
        _check_finite(g, f"gradient of {k}")
        if g.shape != params[k].shape:
            raise ShapeError(f"gradient shape mismatch for {k}")
    state.t += 1
    b1t = 1.0 - ADAM_BETA1**state.t
    b2t = 1.0 - ADAM_BETA2**state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        params[k] -= lr * (m / b1t) / (np.sqrt(v / b2t) + ADAM_EPS)


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """lr(t) = lr_min + (lr_max - lr_min) * (1 + cos(pi * t / T)) / 2."""
    if not 0 <= epoch <= cfg.max_epochs:
        raise ValueError("epoch outside [0, max_epochs]")
    t = epoch / cfg.max_epochs
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * t))


def _uniform_init(rng: Rng, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    n = int(np.prod(shape))
    return (rng.uniform(n) * 2.0 - 1.0).reshape(shape) * bound


class Head:
    """Common surface of the two trainable heads."""

    params: dict[str, np.ndarray]
    adam: AdamState
    in_dim: int
    num_classes: int

    def forward(self, x: np.ndarray, train: bool, rng: Rng | None = None):
        raise NotImplementedError

    def backward(self, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def state(self) -> dict[str, np.ndarray]:
        """Copy of parameters and normalization statistics (not Adam moments)."""
        return {k: v.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            self.params[k][...] = v

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected (B, {self.in_dim}) input, got {x.shape}")
        _check_finite(x, "input batch")
        return x


class LinearHead(Head):
    def __init__(self, in_dim: int, num_classes: int, rng: Rng):
        self.in_dim = in_dim
        self.num_classes = num_classes
        self.params = {
            "W": _uniform_init(rng, in_dim, (in_dim, num_classes)),
            "b": np.zeros(num_classes),
        }
        self.adam = AdamState(self.params)

    def forward(self, x, train, rng=None):
        x = self._check_input(x)
        logits = x @ self.params["W"] + self.params["b"]
        return logits, {"x": x}

    def backward(self, cache, dlogits):
        x = cache["x"]
        return {"W": x.T @ dlogits, "b": dlogits.sum(axis=0)}


class MlpHead(Head):
    """Affine -> batchnorm -> ReLU -> dropout -> affine.

    Train mode normalizes with batch statistics (biased variance) and updates
    running statistics with momentum; running variance uses the unbiased batch
    variance when B > 1. Eval mode uses running statistics and skips dropout.
    """

    def __init__(self, in_dim: int, num_classes: int, rng: Rng,
                 hidden: int = 256, dropout: float = 0.3):
        if not 0 <= dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        self.in_dim = in_dim
        self.num_classes = num_classes
        self.hidden = hidden
        self.dropout = dropout
        self.params = {
            "W1": _uniform_init(rng, in_dim, (in_dim, hidden)),
            "b1": np.zeros(hidden),
            "gamma": np.ones(hidden),
            "beta": np.zeros(hidden),
            "run_mean": np.zeros(hidden),
            "run_var": np.ones(hidden),
            "W2": _uniform_init(rng, hidden, (hidden, num_classes)),
            "b2": np.zeros(num_classes),
        }
        self.adam = AdamState(self.params)
        # running stats are tracked, never gradient-updated
        for k in ("run_mean", "run_var"):
            del self.adam.m[k], self.adam.v[k]

    def forward(self, x, train, rng=None):
        x = self._check_input(x)
        p = self.params
        h = x @ p["W1"] + p["b1"]
        if train:
            mu = h.mean(axis=0)
            var = ((h - mu) ** 2).mean(axis=0)
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            hhat = (h - mu) * inv_std
            b = h.shape[0]
            var_run = var * (b / (b - 1)) if b > 1 else var
            p["run_mean"] *= 1.0 - BN_MOMENTUM
            p["run_mean"] += BN_MOMENTUM * mu
            p["run_var"] *= 1.0 - BN_MOMENTUM
            p["run_var"] += BN_MOMENTUM * var_run
        else:
            inv_std = 1.0 / np.sqrt(p["run_var"] + BN_EPS)
            hhat = (h - p["run_mean"]) * inv_std
        a = p["gamma"] * hhat + p["beta"]
        r = np.maximum(a, 0.0)
        if train and self.dropout > 0.0:
            if rng is None:
                raise ValueError("train-mode dropout requires an rng")
            keep = rng.uniform(r.size).reshape(r.shape) >= self.dropout
            drop_scale = 1.0 / (1.0 - self.dropout)
            d = r * keep * drop_scale
        else:
            keep = None
            drop_scale = 1.0
            d = r
        logits = d @ p["W2"] + p["b2"]
        cache = {
            "x": x, "hhat": hhat, "inv_std": inv_std, "a": a, "d": d,
            "keep": keep, "drop_scale": drop_scale, "train": train,
        }
        return logits, cache

    def backward(self, cache, dlogits):
        p = self.params
        x, hhat, inv_std = cache["x"], cache["hhat"], cache["inv_std"]
        grads = {
            "W2": cache["d"].T @ dlogits,
            "b2": dlogits.sum(axis=0),
        }
        dd = dlogits @ p["W2"].T
        if cache["keep"] is not None:
            dr = dd * cache["keep"] * cache["drop_scale"]
        else:
            dr = dd
        da = dr * (cache["a"] > 0.0)
        grads["gamma"] = (da * hhat).sum(axis=0)
        grads["beta"] = da.sum(axis=0)
        dhhat = da * p["gamma"]
        if cache["train"]:
            b = hhat.shape[0]
            # batch-stat path: dh = inv_std/B * (B*dhhat - sum(dhhat) - hhat*sum(dhhat*hhat))
            s1 = dhhat.sum(axis=0)
            s2 = (dhhat * hhat).sum(axis=0)
            dh = (inv_std / b) * (b * dhhat - s1 - hhat * s2)
        else:
            dh = dhhat * inv_std
        grads["W1"] = x.T @ dh
        grads["b1"] = dh.sum(axis=0)
        return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def smoothed_targets(labels: np.ndarray, num_classes: int, smoothing: float) -> np.ndarray:
    b = labels.shape[0]
    q = np.full((b, num_classes), smoothing / (num_classes - 1))
    q[np.arange(b), labels] = 1.0 - smoothing
    return q


def weighted_ce_loss_and_grad(
    logits: np.ndarray,
    labels: np.ndarray,
    class_weights: np.ndarray | None = None,
    smoothing: float = 0.0,
    sample_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Class-weighted cross-entropy against smoothed one-hot targets.

    Returns (weighted mean loss, dLoss/dLogits, unweighted per-sample losses).
    The mean normalizes by the sum of per-sample weights, matching the usual
    weighted-CE convention; per-sample weights default to the class weight of
    each label. Smoothing epsilon places 1-eps on the true class and
    eps/(K-1) on every other class.
    """
    b, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError("label out of range")
    q = smoothed_targets(labels, k, smoothing)
    logp = log_softmax(logits)
    per_sample = -(q * logp).sum(axis=1)
    if sample_weights is None:
        if class_weights is None:
            w = np.ones(b)
        else:
            cw = np.asarray(class_weights, dtype=np.float64)
            if (cw <= 0).any():
                raise ValueError("class weights must be positive")
            w = cw[labels]
    else:
        w = np.asarray(sample_weights, dtype=np.float64)
    wsum = w.sum()
    loss = float((w * per_sample).sum() / wsum)
    p = softmax(logits)
    dlogits = (p - q) * (w / wsum)[:, None]
    return loss, dlogits, per_sample


def soft_ce_loss_and_grad(
    logits: np.ndarray,
    targets: np.ndarray,
    sample_weights: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Cross-entropy against arbitrary soft target rows (used by mixup)."""
    logp = log_softmax(logits)
    per_sample = -(targets * logp).sum(axis=1)
    wsum = sample_weights.sum()
    loss = float((sample_weights * per_sample).sum() / wsum)
    dlogits = (softmax(logits) - targets) * (sample_weights / wsum)[:, None]
    return loss, dlogits


def predict_logits(model: Head, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """Eval-mode logits, side-effect free."""
    out = []
    for i in range(0, len(x), batch_size):
        logits, _ = model.forward(x[i:i + batch_size], train=False)
        out.append(logits)
    return np.concatenate(out, axis=0)


def predict(model: Head, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predicted class ids (argmax, lowest id wins ties) and softmax rows."""
    logits = predict_logits(model, x)
    probs = softmax(logits)
    return np.argmax(logits, axis=1), probs


@dataclass
class EpochRecord:
    epoch: int  # 1-based
    lr: float
    train_loss: float
    val_balacc: float
    extras: dict = field(default_factory=dict)


def balanced_accuracy_of(model: Head, x: np.ndarray, y: np.ndarray, num_classes: int) -> float:
    from .stats import evaluate  # local import to avoid a cycle

    preds, _ = predict(model, x)
    return evaluate(preds, y, num_classes).balanced_accuracy


def run_epochs(cfg, n_train, epoch_fn, eval_fn, snapshot_fn, restore_fn):
    """Shared epoch driver: seeded shuffling, cosine lr, patience-based early
    stopping on the monitored score (higher is better), best-state restore.

    Stops once the monitor has failed to improve for more than ``patience``
    consecutive epochs. Returns (history, best_epoch) with 1-based epochs.
    """
    rng_shuffle = Rng(cfg.seed, "shuffle")
    history: list[EpochRecord] = []
    best = -math.inf
    best_epoch = 0
    wait = 0
    for e in range(cfg.max_epochs):
        lr = cosine_lr(e, cfg)
        perm = rng_shuffle.permutation(n_train)
        train_loss, extras = epoch_fn(e, lr, perm)
        score = eval_fn()
        history.append(EpochRecord(e + 1, lr, train_loss, score, extras))
        if score > best:
            best = score
            best_epoch = e + 1
            wait = 0
            snapshot_fn()
        else:
            wait += 1
        if wait > cfg.patience:
            break
    restore_fn()
    return history, best_epoch


def iter_batches(perm: np.ndarray, batch_size: int):
    for i in range(0, len(perm), batch_size):
        yield perm[i:i + batch_size]


def fit(
    model: Head,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
    class_weights: np.ndarray | None = None,
) -> tuple[list[EpochRecord], int]:
    """Plain mini-batch training of one head; the baseline every noise-robust
    variant reduces to when its extra machinery is switched off.

    Monitors balanced accuracy on (x_val, y_val) and restores the weights of
    the best epoch. RNG streams: "init" (caller), "shuffle", "dropout".
    """
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("empty dataset")
    if model.num_classes < 2:
        raise ValueError("need at least 2 classes")
    x_train = np.asarray(x_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    rng_dropout = Rng(cfg.seed, "dropout")

    def epoch_fn(e, lr, perm):
        losses = []
        for idx in iter_batches(perm, cfg.batch_size):
            logits, cache = model.forward(x_train[idx], train=True, rng=rng_dropout)
            loss, dlogits, _ = weighted_ce_loss_and_grad(
                logits, y_train[idx], class_weights, cfg.label_smoothing)
            adam_step(model, model.backward(cache, dlogits), lr)
            losses.append(loss)
        return float(np.mean(losses)), {}

    snapshot: dict = {}

    def eval_fn():
        return balanced_accuracy_of(model, x_val, y_val, model.num_classes)

    def snap():
        snapshot["state"] = model.state()

    def restore():
        model.load_state(snapshot["state"])

    return run_epochs(cfg, len(x_train), epoch_fn, eval_fn, snap, restore)
