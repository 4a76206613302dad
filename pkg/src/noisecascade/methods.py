"""Training strategies for classifier heads on frozen features.

Seven methods share one protocol (Adam, cosine schedule, class-weighted CE,
early stopping on validation balanced accuracy) and differ only in how they
treat possibly mislabeled samples:

* plain cross-entropy on an MLP head (optionally with label smoothing);
* a linear probe;
* co-teaching: two networks each keep their small-loss samples and teach
  the other network on them, with a linearly ramped forget rate;
* early-prediction regularization: an EMA of each sample's softmax anchors
  the model to what it believed before memorization sets in;
* the agreement cascade: a linear stage trains on everything, and each
  further stage trains only on samples whose predicted class matches the
  given label under the previous stage;
* a single-network DivideMix variant: a two-component GMM over per-sample
  losses splits the data into a clean set (trained on its labels) and a
  noisy set (trained on its own sharpened predictions), with feature mixup.

With their noise handling switched off, co-teaching (net A), the EMA
regularizer, label smoothing, the linear-only cascade, and the GMM variant
kept in warmup reproduce their baseline bit for bit under a shared seed:
all primary models consume the same "init"/"shuffle"/"dropout" streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import nncore
from .data import class_weights as compute_class_weights
from .nncore import (
    Head, LinearHead, MlpHead, TrainConfig, adam_step, log_softmax,
    predict_logits, softmax, weighted_ce_loss_and_grad, soft_ce_loss_and_grad,
    iter_batches, run_epochs, balanced_accuracy_of,
)
from .rng import Rng
from .validation import check_feature_array, check_label_array


# ---------------------------------------------------------------------------
# selection primitives

def select_by_agreement(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """True where the predicted class equals the given label."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.shape[0] != labels.shape[0]:
        raise ValueError("logits and labels length mismatch")
    return np.argmax(logits, axis=1) == labels


def smallest_k_mask(values: np.ndarray, k: int) -> np.ndarray:
    """Mask of the k smallest values; ties broken by index."""
    order = np.argsort(values, kind="stable")
    mask = np.zeros(len(values), dtype=bool)
    mask[order[:k]] = True
    return mask


def select_by_loss(per_sample_losses: np.ndarray, keep_fraction: float) -> np.ndarray:
    """Mask of the floor(keep_fraction * N) smallest losses."""
    if not 0 <= keep_fraction <= 1:
        raise ValueError("keep_fraction must be in [0, 1]")
    losses = np.asarray(per_sample_losses, dtype=np.float64)
    return smallest_k_mask(losses, int(math.floor(keep_fraction * len(losses))))


def per_sample_ce(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    return -logp[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)]


def eval_losses(model: Head, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unweighted per-sample CE in eval mode."""
    return per_sample_ce(predict_logits(model, x), y)


def _subset_ce_grad(logits, labels, rows, cw, smoothing):
    """Weighted CE over the given rows; gradient is zero elsewhere."""
    loss, dsub, _ = weighted_ce_loss_and_grad(logits[rows], labels[rows], cw, smoothing)
    d = np.zeros_like(logits)
    d[rows] = dsub
    return loss, d


# ---------------------------------------------------------------------------
# 1-D two-component Gaussian mixture for loss splitting

class DegenerateValuesError(ValueError):
    pass


@dataclass
class GmmSplit:
    means: np.ndarray  # (2,) in the input scale
    variances: np.ndarray  # (2,) in the input scale
    weights: np.ndarray  # (2,), sums to 1
    clean_posterior: np.ndarray  # responsibility of the lower-mean component


def gmm_fit_1d(values, iters: int = 100, tol: float = 1e-6) -> GmmSplit:
    """EM on min-max-normalized values; means init at 0.25/0.75, equal
    weights, shared sample variance, variance floor 1e-6."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if len(v) < 2 or hi == lo:
        raise DegenerateValuesError("need at least 2 distinct values")
    z = (v - lo) / (hi - lo)
    span = hi - lo
    means = np.array([0.25, 0.75])
    variances = np.full(2, max(float(z.var()), 1e-6))
    weights = np.array([0.5, 0.5])
    prev_ll = -np.inf
    resp = np.empty((len(z), 2))
    for _ in range(iters):
        dens = (weights / np.sqrt(2.0 * np.pi * variances)
                * np.exp(-0.5 * (z[:, None] - means) ** 2 / variances))
        total = dens.sum(axis=1) + 1e-300
        resp = dens / total[:, None]
        ll = float(np.log(total).sum())
        nk = resp.sum(axis=0) + 1e-300
        means = (resp * z[:, None]).sum(axis=0) / nk
        variances = np.maximum((resp * (z[:, None] - means) ** 2).sum(axis=0) / nk, 1e-6)
        weights = nk / nk.sum()
        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll
    lower = int(np.argmin(means))
    return GmmSplit(
        means=lo + means * span,
        variances=variances * span**2,
        weights=weights,
        clean_posterior=resp[:, lower],
    )


def _sample_beta(rng: Rng, alpha: float) -> float:
    """Beta(alpha, alpha) via Johnk's rejection method."""
    inv = 1.0 / alpha
    while True:
        x = rng.uniform() ** inv
        y = rng.uniform() ** inv
        s = x + y
        if 0.0 < s <= 1.0:
            return x / s


# ---------------------------------------------------------------------------
# estimator base

class _FrozenHeadClassifier(BaseEstimator, ClassifierMixin):
    """Shared fit/predict plumbing; subclasses implement _fit_impl."""

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_feature_array(X)
        y = check_label_array(y, len(X), self.num_classes)
        k = self.num_classes if self.num_classes is not None else int(y.max()) + 1
        if k < 2:
            raise ValueError("need at least 2 classes")
        if X_val is None:
            X_val, y_val = X, y
        else:
            X_val = check_feature_array(X_val, X.shape[1])
            y_val = check_label_array(y_val, len(X_val), k)
        cw = compute_class_weights(y, k) if self.class_weighted else None
        self.classes_ = np.arange(k)
        self.n_features_in_ = X.shape[1]
        self._fit_impl(X, y, X_val, y_val, k, cw)
        return self

    def _train_config(self, label_smoothing: float = 0.0) -> TrainConfig:
        return TrainConfig(
            lr_max=self.lr_max, lr_min=self.lr_min, max_epochs=self.max_epochs,
            batch_size=self.batch_size, patience=self.patience,
            label_smoothing=label_smoothing,
            use_class_weights=self.class_weighted, seed=self.seed,
        )

    def _fit_impl(self, x, y, xv, yv, k, cw):
        raise NotImplementedError

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_feature_array(X, self.model_.in_dim)
        preds, _ = nncore.predict(self.model_, X)
        return preds

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_feature_array(X, self.model_.in_dim)
        _, probs = nncore.predict(self.model_, X)
        return probs


class MlpCrossEntropyClassifier(_FrozenHeadClassifier):
    """Class-weighted cross-entropy on the MLP head; the baseline every
    noise-robust method is measured against. label_smoothing > 0 turns it
    into the label-smoothing method."""

    def __init__(self, lr_max=1e-3, lr_min=0.0, max_epochs=50, batch_size=128,
                 patience=7, label_smoothing=0.0, class_weighted=True,
                 hidden_units=256, dropout=0.3, num_classes=None, seed=0):
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.patience = patience
        self.label_smoothing = label_smoothing
        self.class_weighted = class_weighted
        self.hidden_units = hidden_units
        self.dropout = dropout
        self.num_classes = num_classes
        self.seed = seed

    def _fit_impl(self, x, y, xv, yv, k, cw):
        cfg = self._train_config(self.label_smoothing)
        model = MlpHead(x.shape[1], k, Rng(cfg.seed, "init"),
                        hidden=self.hidden_units, dropout=self.dropout)
        history, best = nncore.fit(model, x, y, xv, yv, cfg, cw)
        self.model_ = model
        self.history_ = history
        self.best_epoch_ = best


class LinearProbeClassifier(_FrozenHeadClassifier):
    """Single affine layer trained with class-weighted cross-entropy."""

    def __init__(self, lr_max=1e-3, lr_min=0.0, max_epochs=50, batch_size=128,
                 patience=7, class_weighted=True, num_classes=None, seed=0):
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.patience = patience
        self.class_weighted = class_weighted
        self.num_classes = num_classes
        self.seed = seed

    def _fit_impl(self, x, y, xv, yv, k, cw):
        cfg = self._train_config()
        model = LinearHead(x.shape[1], k, Rng(cfg.seed, "init"))
        history, best = nncore.fit(model, x, y, xv, yv, cfg, cw)
        self.model_ = model
        self.history_ = history
        self.best_epoch_ = best


def forget_rate(epoch: int, noise_rate: float, ramp_epochs: int) -> float:
    """Linear ramp from 0 to the noise rate over ramp_epochs (0-based epoch)."""
    return noise_rate * min(epoch / ramp_epochs, 1.0)


def co_teaching_keep_count(batch_size: int, rate: float) -> int:
    return max(1, math.ceil((1.0 - rate) * batch_size))


def co_teaching_select(logits_a, logits_b, labels, rate) -> tuple[np.ndarray, np.ndarray]:
    """Each net's small-loss pick (boolean masks), exactly
    max(1, ceil((1-rate)*B)) samples per net, ranked by unweighted CE."""
    keep = co_teaching_keep_count(len(labels), rate)
    sel_a = smallest_k_mask(per_sample_ce(logits_a, labels), keep)
    sel_b = smallest_k_mask(per_sample_ce(logits_b, labels), keep)
    return sel_a, sel_b


def update_elr_targets(targets, idx, probs, beta) -> np.ndarray:
    """EMA step t <- beta*t + (1-beta)*p on the given rows; returns the
    updated rows."""
    targets[idx] = beta * targets[idx] + (1.0 - beta) * probs
    return targets[idx]


def mixup_batch(x_rows, q_rows, pair_perm, lam) -> tuple[np.ndarray, np.ndarray]:
    """Convex combination of a batch with a permuted copy of itself;
    lam = 1 reduces to the original batch."""
    xm = lam * x_rows + (1.0 - lam) * x_rows[pair_perm]
    qm = lam * q_rows + (1.0 - lam) * q_rows[pair_perm]
    return xm, qm


class CoTeachingClassifier(_FrozenHeadClassifier):
    """Two MLPs exchange their small-loss samples.

    Per batch each net ranks the unweighted per-sample losses of its own
    forward pass, keeps the max(1, ceil((1 - forget_rate) * B)) smallest,
    and takes a CE gradient step on the samples the *other* net kept.
    Selection is global within the batch, not per class. The fitted model is
    net A; the noise rate must be (approximately) known.

    class_weighted defaults to False, matching the method's published form
    (plain CE on the exchanged small-loss sets). Unweighted training is what
    lets global selection starve minority classes on imbalanced data.
    """

    def __init__(self, noise_rate=0.0, ramp_epochs=10, lr_max=1e-3, lr_min=0.0,
                 max_epochs=50, batch_size=128, patience=7, class_weighted=False,
                 hidden_units=256, dropout=0.3, num_classes=None, seed=0):
        self.noise_rate = noise_rate
        self.ramp_epochs = ramp_epochs
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.patience = patience
        self.class_weighted = class_weighted
        self.hidden_units = hidden_units
        self.dropout = dropout
        self.num_classes = num_classes
        self.seed = seed

    def _fit_impl(self, x, y, xv, yv, k, cw):
        if not 0 <= self.noise_rate < 1:
            raise ValueError("noise_rate must be in [0, 1)")
        cfg = self._train_config()
        net_a = MlpHead(x.shape[1], k, Rng(cfg.seed, "init"),
                        hidden=self.hidden_units, dropout=self.dropout)
        net_b = MlpHead(x.shape[1], k, Rng(cfg.seed, "net_b.init"),
                        hidden=self.hidden_units, dropout=self.dropout)
        rng_da = Rng(cfg.seed, "dropout")
        rng_db = Rng(cfg.seed, "net_b.dropout")

        def epoch_fn(e, lr, perm):
            fr = forget_rate(e, self.noise_rate, self.ramp_epochs)
            losses = []
            for idx in iter_batches(perm, cfg.batch_size):
                xb, yb = x[idx], y[idx]
                la, ca = net_a.forward(xb, train=True, rng=rng_da)
                lb, cb = net_b.forward(xb, train=True, rng=rng_db)
                sel_a, sel_b = co_teaching_select(la, lb, yb, fr)
                loss_a, da = _subset_ce_grad(la, yb, np.flatnonzero(sel_b), cw, 0.0)
                adam_step(net_a, net_a.backward(ca, da), lr)
                loss_b, db = _subset_ce_grad(lb, yb, np.flatnonzero(sel_a), cw, 0.0)
                adam_step(net_b, net_b.backward(cb, db), lr)
                losses.append(loss_a)
            return float(np.mean(losses)), {"forget_rate": fr}

        snapshot = {}
        history, best = run_epochs(
            cfg, len(x), epoch_fn,
            lambda: balanced_accuracy_of(net_a, xv, yv, k),
            lambda: snapshot.update(state=net_a.state()),
            lambda: net_a.load_state(snapshot["state"]),
        )
        self.model_ = net_a
        self.history_ = history
        self.best_epoch_ = best


class ElrClassifier(_FrozenHeadClassifier):
    """Cross-entropy plus a pull towards each sample's EMA of its own
    softmax: loss += lam * mean(log(1 - <p, t>)), t updated per batch as
    t <- beta*t + (1-beta)*p with p detached, targets starting at zero.
    """

    def __init__(self, beta=0.7, lam=3.0, lr_max=1e-3, lr_min=0.0, max_epochs=50,
                 batch_size=128, patience=7, class_weighted=True,
                 hidden_units=256, dropout=0.3, num_classes=None, seed=0):
        self.beta = beta
        self.lam = lam
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.patience = patience
        self.class_weighted = class_weighted
        self.hidden_units = hidden_units
        self.dropout = dropout
        self.num_classes = num_classes
        self.seed = seed

    def _fit_impl(self, x, y, xv, yv, k, cw):
        if not 0 < self.beta < 1:
            raise ValueError("beta must be in (0, 1)")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        cfg = self._train_config()
        net = MlpHead(x.shape[1], k, Rng(cfg.seed, "init"),
                      hidden=self.hidden_units, dropout=self.dropout)
        rng_drop = Rng(cfg.seed, "dropout")
        targets = np.zeros((len(x), k))

        def epoch_fn(e, lr, perm):
            losses = []
            for idx in iter_batches(perm, cfg.batch_size):
                yb = y[idx]
                logits, cache = net.forward(x[idx], train=True, rng=rng_drop)
                p = softmax(logits)
                update_elr_targets(targets, idx, p, self.beta)
                loss, dlogits, _ = weighted_ce_loss_and_grad(logits, yb, cw, 0.0)
                if self.lam != 0.0:
                    t = targets[idx]
                    g = (p * t).sum(axis=1)
                    gc = np.minimum(g, 1.0 - 1e-4)
                    inv = np.where(g > 1.0 - 1e-4, 0.0, 1.0 / (1.0 - gc))
                    b = len(idx)
                    dlogits = dlogits - (self.lam / b) * p * (t - g[:, None]) * inv[:, None]
                    loss += self.lam * float(np.mean(np.log(1.0 - gc)))
                adam_step(net, net.backward(cache, dlogits), lr)
                losses.append(loss)
            return float(np.mean(losses)), {}

        snapshot = {}
        history, best = run_epochs(
            cfg, len(x), epoch_fn,
            lambda: balanced_accuracy_of(net, xv, yv, k),
            lambda: snapshot.update(state=net.state()),
            lambda: net.load_state(snapshot["state"]),
        )
        self.model_ = net
        self.history_ = history
        self.best_epoch_ = best
        self.elr_targets_ = targets


@dataclass
class CascadeState:
    f1: LinearHead
    f2: MlpHead | None
    f3: MlpHead | None
    r1: float  # last-epoch fraction of samples passing the first filter
    r2: float  # last-epoch fraction passing both filters


CASCADE_STAGES = ("lpm_only", "lpm_lam", "full")


class CascadeClassifier(_FrozenHeadClassifier):
    """Agreement-filtered cascade of one linear and up to two MLP heads,
    trained jointly.

    Per batch: the linear head trains on all samples; samples whose linear
    prediction (from the same pre-update forward pass, detached) matches the
    given label feed the middle MLP; samples also agreed by the middle MLP
    feed the last MLP, which serves inference. Filters adapt to the noise
    level with no noise-rate estimate. stages selects the ablation:
    "lpm_only" (linear head only), "lpm_lam" (one filtered MLP), "full".
    """

    def __init__(self, stages="full", lr_max=1e-3, lr_min=0.0, max_epochs=50,
                 batch_size=128, patience=7, class_weighted=True,
                 hidden_units=256, dropout=0.3, num_classes=None, seed=0):
        self.stages = stages
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.patience = patience
        self.class_weighted = class_weighted
        self.hidden_units = hidden_units
        self.dropout = dropout
        self.num_classes = num_classes
        self.seed = seed

    def _fit_impl(self, x, y, xv, yv, k, cw):
        if self.stages not in CASCADE_STAGES:
            raise ValueError(f"stages must be one of {CASCADE_STAGES}")
        cfg = self._train_config()
        d = x.shape[1]
        f1 = LinearHead(d, k, Rng(cfg.seed, "init"))
        f2 = f3 = None
        if self.stages == "full":
            f2 = MlpHead(d, k, Rng(cfg.seed, "iam.init"),
                         hidden=self.hidden_units, dropout=self.dropout)
        if self.stages in ("lpm_lam", "full"):
            f3 = MlpHead(d, k, Rng(cfg.seed, "lam.init"),
                         hidden=self.hidden_units, dropout=self.dropout)
        rng_d2 = Rng(cfg.seed, "iam.dropout")
        rng_d3 = Rng(cfg.seed, "lam.dropout")
        heads = [h for h in (f1, f2, f3) if h is not None]
        infer = heads[-1]

        def epoch_fn(e, lr, perm):
            n_seen = n_sel1 = n_sel2 = 0
            losses = []
            for idx in iter_batches(perm, cfg.batch_size):
                xb, yb = x[idx], y[idx]
                l1, c1 = f1.forward(xb, train=True)
                loss1, d1, _ = weighted_ce_loss_and_grad(l1, yb, cw, 0.0)
                adam_step(f1, f1.backward(c1, d1), lr)
                mask1 = select_by_agreement(l1, yb)
                rows1 = idx[mask1]
                rows2 = rows1
                if self.stages == "full" and len(rows1):
                    l2, c2 = f2.forward(x[rows1], train=True, rng=rng_d2)
                    loss2, d2, _ = weighted_ce_loss_and_grad(l2, y[rows1], cw, 0.0)
                    adam_step(f2, f2.backward(c2, d2), lr)
                    mask2 = select_by_agreement(l2, y[rows1])
                    rows2 = rows1[mask2]
                if self.stages != "lpm_only" and len(rows2):
                    assert len(rows2) <= len(rows1)
                    l3, c3 = f3.forward(x[rows2], train=True, rng=rng_d3)
                    loss3, d3, _ = weighted_ce_loss_and_grad(l3, y[rows2], cw, 0.0)
                    adam_step(f3, f3.backward(c3, d3), lr)
                n_seen += len(idx)
                n_sel1 += len(rows1)
                n_sel2 += len(rows2)
                losses.append(loss1)
            return float(np.mean(losses)), {"r1": n_sel1 / n_seen, "r2": n_sel2 / n_seen}

        snapshot = {}
        history, best = run_epochs(
            cfg, len(x), epoch_fn,
            lambda: balanced_accuracy_of(infer, xv, yv, k),
            lambda: snapshot.update(states=[h.state() for h in heads]),
            lambda: [h.load_state(s) for h, s in zip(heads, snapshot["states"])],
        )
        last = history[-1].extras
        self.model_ = infer
        self.history_ = history
        self.best_epoch_ = best
        self.cascade_state_ = CascadeState(f1, f2, f3, last["r1"], last["r2"])


class DivideMixLiteClassifier(_FrozenHeadClassifier):
    """Single-network loss-split method for fixed feature vectors.

    After warmup epochs of plain weighted CE, each epoch fits a two-component
    GMM to eval-mode per-sample losses: samples with clean posterior > 0.5
    train on their given labels, the rest on their own temperature-sharpened
    softmax. Both passes mix features and targets with one Beta(mix_alpha,
    mix_alpha) coefficient per batch, folded as lam <- max(lam, 1-lam) so
    lam = 1 is the identity. Per-sample weights extend class weights to soft
    targets as the target-expected class weight. A degenerate loss
    distribution falls back to a plain weighted-CE epoch.
    """

    def __init__(self, warmup_epochs=10, mix_alpha=0.75, sharpen_temp=0.5,
                 gmm_iters=100, gmm_tol=1e-6, lr_max=1e-3, lr_min=0.0,
                 max_epochs=50, batch_size=128, patience=7, class_weighted=True,
                 hidden_units=256, dropout=0.3, num_classes=None, seed=0):
        self.warmup_epochs = warmup_epochs
        self.mix_alpha = mix_alpha
        self.sharpen_temp = sharpen_temp
        self.gmm_iters = gmm_iters
        self.gmm_tol = gmm_tol
        self.lr_max = lr_max
        self.lr_min = lr_min
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.patience = patience
        self.class_weighted = class_weighted
        self.hidden_units = hidden_units
        self.dropout = dropout
        self.num_classes = num_classes
        self.seed = seed

    def _fit_impl(self, x, y, xv, yv, k, cw):
        if self.warmup_epochs < 1:
            raise ValueError("warmup_epochs must be >= 1")
        cfg = self._train_config()
        net = MlpHead(x.shape[1], k, Rng(cfg.seed, "init"),
                      hidden=self.hidden_units, dropout=self.dropout)
        rng_drop = Rng(cfg.seed, "dropout")
        rng_mix = Rng(cfg.seed, "mixup")
        onehot = np.eye(k)

        def plain_epoch(perm, lr):
            losses = []
            for idx in iter_batches(perm, cfg.batch_size):
                logits, cache = net.forward(x[idx], train=True, rng=rng_drop)
                loss, dlogits, _ = weighted_ce_loss_and_grad(logits, y[idx], cw, 0.0)
                adam_step(net, net.backward(cache, dlogits), lr)
                losses.append(loss)
            return float(np.mean(losses))

        def mixup_pass(members, targets, lr, losses):
            for idx in iter_batches(members, cfg.batch_size):
                lam = _sample_beta(rng_mix, self.mix_alpha)
                lam = max(lam, 1.0 - lam)
                pair = rng_mix.permutation(len(idx))
                xm, qm = mixup_batch(x[idx], targets[idx], pair, lam)
                sw = qm @ cw if cw is not None else np.ones(len(idx))
                logits, cache = net.forward(xm, train=True, rng=rng_drop)
                loss, dlogits = soft_ce_loss_and_grad(logits, qm, sw)
                adam_step(net, net.backward(cache, dlogits), lr)
                losses.append(loss)

        def epoch_fn(e, lr, perm):
            if e < self.warmup_epochs:
                return plain_epoch(perm, lr), {"phase": "warmup"}
            logits = predict_logits(net, x)
            losses_all = per_sample_ce(logits, y)
            try:
                split = gmm_fit_1d(losses_all, self.gmm_iters, self.gmm_tol)
            except DegenerateValuesError:
                return plain_epoch(perm, lr), {"phase": "fallback"}
            clean = split.clean_posterior > 0.5
            probs = softmax(logits)
            sharp = probs ** (1.0 / self.sharpen_temp)
            sharp /= sharp.sum(axis=1, keepdims=True)
            targets = np.where(clean[:, None], onehot[y], sharp)
            losses = []
            for subset in (clean, ~clean):
                members = perm[subset[perm]]
                if len(members):
                    mixup_pass(members, targets, lr, losses)
            extras = {"phase": "split", "clean_fraction": float(clean.mean())}
            return float(np.mean(losses)) if losses else 0.0, extras

        snapshot = {}
        history, best = run_epochs(
            cfg, len(x), epoch_fn,
            lambda: balanced_accuracy_of(net, xv, yv, k),
            lambda: snapshot.update(state=net.state()),
            lambda: net.load_state(snapshot["state"]),
        )
        self.model_ = net
        self.history_ = history
        self.best_epoch_ = best


def make_estimator(name: str, train_params: dict, method_params: dict):
    """Estimator factory used by the experiment harness and the CLI."""
    registry = {
        "ce": MlpCrossEntropyClassifier,
        "label_smoothing": MlpCrossEntropyClassifier,
        "linear_probe": LinearProbeClassifier,
        "co_teaching": CoTeachingClassifier,
        "elr": ElrClassifier,
        "cascade": CascadeClassifier,
        "dividemix_lite": DivideMixLiteClassifier,
    }
    if name not in registry:
        raise ValueError(f"unknown method {name!r}; have {sorted(registry)}")
    params = dict(train_params)
    if name == "label_smoothing":
        params.setdefault("label_smoothing", 0.1)
    params.update(method_params)
    return registry[name](**params)
