"""Meta-reweighting training steps and their baselines.

The production meta step uses the closed form of the one-step lookahead
meta-gradient: at alpha = beta = 0 the lookahead parameters equal the current
ones, so the raw weight of every loss term is ``eta * lr * m`` times the dot
product of its gradient with the mean validation gradient.
:func:`fd_meta_weights` recomputes the same quantity by central differences
through an explicit lookahead and exists only to check that formula.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    batch_loss_grad,
    per_example_loss_grads,
    predict_probs,
    sgd_update,
)
from .numcore import (
    InvalidInputError,
    as_vector,
    clip_global_norm,
    cross_entropy_rows,
    dot_rows,
    one_hot,
)

SCHEMES = ("batch-sum", "sigmoid", "softmax")
METHODS = ("ce", "bootstrap", "l2rw", "l2b", "constrained", "pseudo_only")
META_METHODS = ("l2rw", "l2b", "constrained", "pseudo_only")


@dataclass(frozen=True)
class TrainerKind:
    """Which update rule to run.

    ``ce`` and ``bootstrap`` are the plain baselines; ``l2rw`` is the meta step
    with the pseudo-label term disabled, ``pseudo_only`` disables the
    observed-label term, ``constrained`` projects each pair onto a+b = 1.
    """

    method: str = "l2b"
    scheme: str = "batch-sum"
    tau: float = 10.0
    bootstrap_beta: float = 0.8

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.tau > 0:
            raise InvalidInputError(f"tau must be > 0, got {self.tau}")
        if not 0.0 <= self.bootstrap_beta <= 1.0:
            raise InvalidInputError(f"bootstrap beta must lie in [0, 1], got {self.bootstrap_beta}")

    @property
    def is_meta(self):
        return self.method in META_METHODS


@dataclass(frozen=True)
class StepConfig:
    lr: float = 0.1
    meta_lr: float = 1.0
    clip: float = 5.0
    kind: TrainerKind = field(default_factory=TrainerKind)

    def __post_init__(self):
        if self.lr < 0 or not self.meta_lr > 0:
            raise InvalidInputError("lr must be >= 0 and meta_lr > 0")
        if not self.clip > 0:
            raise InvalidInputError(f"clip threshold must be > 0, got {self.clip}")


@dataclass
class MetaWeights:
    alpha: np.ndarray
    beta: np.ndarray
    raw_alpha: np.ndarray = None
    raw_beta: np.ndarray = None
    fallback_used: bool = False
    scheme: str = "batch-sum"


@dataclass
class StepStats:
    train_losses_real: np.ndarray
    train_losses_pseudo: np.ndarray
    val_loss_before: float
    val_loss_after: float
    weights: MetaWeights
    pseudo_agree_fraction: float


def pseudo_labels(params, batch_or_X):
    """Argmax class of the current model; ties go to the lowest index."""
    X = getattr(batch_or_X, "features", batch_or_X)
    return np.argmax(predict_probs(params, X), axis=1)


def meta_raw_weights(f_grads, g_grads, val_mean_grad, meta_lr, lr, m_scale):
    """Closed-form raw weights ``eta * lr * m * <grad G_batch, grad loss_i>``."""
    v = as_vector(val_mean_grad, "val_mean_grad")
    f_grads = np.asarray(f_grads, dtype=np.float64)
    g_grads = np.asarray(g_grads, dtype=np.float64)
    if f_grads.shape != g_grads.shape:
        raise InvalidInputError("f and g gradient blocks differ in shape")
    scale = meta_lr * lr * m_scale
    return scale * dot_rows(f_grads, v), scale * dot_rows(g_grads, v)


def rectify(raw):
    return np.maximum(np.asarray(raw, dtype=np.float64), 0.0)


def normalize_batch_sum(alpha, beta):
    """Divide by the batch total; flag a fallback when everything is zero."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    total = alpha.sum() + beta.sum()
    if total <= 0.0:
        return MetaWeights(alpha.copy(), beta.copy(), fallback_used=True, scheme="batch-sum")
    return MetaWeights(alpha / total, beta / total, scheme="batch-sum")


def _sigmoid(x):
    # two-branch form avoids overflow in exp for large |x|
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def normalize_sigmoid(raw_alpha, raw_beta):
    return MetaWeights(_sigmoid(raw_alpha), _sigmoid(raw_beta), scheme="sigmoid")


def normalize_softmax(raw_alpha, raw_beta, tau=10.0):
    """Joint softmax of all 2n entries at temperature ``tau``."""
    if not tau > 0:
        raise InvalidInputError(f"tau must be > 0, got {tau}")
    raw_alpha = np.asarray(raw_alpha, dtype=np.float64)
    n = raw_alpha.size
    z = np.concatenate([raw_alpha, np.asarray(raw_beta, dtype=np.float64)]) / tau
    e = np.exp(z - z.max())
    w = e / e.sum()
    return MetaWeights(w[:n], w[n:], scheme="softmax")


def validation_loss(params, X_val, y_val):
    """Mean cross-entropy of the model on a clean labelled set."""
    y_val = np.asarray(y_val, dtype=np.int64)
    if y_val.size == 0:
        raise InvalidInputError("validation set is empty")
    P = predict_probs(params, X_val)
    return float(cross_entropy_rows(P, one_hot(y_val, params.num_classes)).mean())


def fd_meta_weights(params, train_batch, val_batch, meta_lr, lr, eps=1e-4):
    """Central-difference oracle for the raw meta-weights.

    For every loss term, perturbs its weight by +-eps around zero, takes the
    explicit lookahead step ``theta - lr * grad(sum of weighted losses)``,
    and differentiates the mean validation loss numerically.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise InvalidInputError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    L = params.num_classes
    X = train_batch.features
    y_pseudo = (train_batch.pseudo_labels if train_batch.pseudo_labels is not None
                else pseudo_labels(params, X))
    _, f_grads = per_example_loss_grads(params, X, one_hot(train_batch.real_labels, L))
    _, g_grads = per_example_loss_grads(params, X, one_hot(y_pseudo, L))
    m = len(val_batch)

    def val_after(direction):
        return validation_loss(sgd_update(params, direction, lr),
                               val_batch.features, val_batch.real_labels)

    def column(grads):
        out = np.empty(grads.shape[0])
        for i, g in enumerate(grads):
            diff = val_after(eps * g) - val_after(-eps * g)
            out[i] = -meta_lr * m * diff / (2.0 * eps)
        return out

    return column(f_grads), column(g_grads)


def _weighted_sum(alpha, f_grads, beta, g_grads):
    # ordered accumulation: every parameter sums examples in index order
    return alpha @ f_grads + beta @ g_grads


def _apply(params, grad, cfg, lr):
    return sgd_update(params, clip_global_norm(grad, cfg.clip), lr)


def ce_step(params, batch, cfg, lr=None):
    """Plain cross-entropy step on the mean gradient of the observed labels."""
    lr = cfg.lr if lr is None else lr
    _, grad = batch_loss_grad(params, batch.features,
                              one_hot(batch.real_labels, params.num_classes))
    return _apply(params, grad, cfg, lr)


def bootstrap_targets(real_labels, pseudo, num_classes, beta):
    if not 0.0 <= beta <= 1.0:
        raise InvalidInputError(f"bootstrap beta must lie in [0, 1], got {beta}")
    return (beta * one_hot(real_labels, num_classes)
            + (1.0 - beta) * one_hot(pseudo, num_classes))


def bootstrap_step(params, batch, cfg, lr=None):
    """Fixed-beta bootstrapping: CE against a blend of observed and pseudo labels."""
    lr = cfg.lr if lr is None else lr
    beta = cfg.kind.bootstrap_beta
    pseudo = pseudo_labels(params, batch)
    if beta == 1.0:
        # exact reduction to ce_step (0 * one_hot(pseudo) would still be added)
        return ce_step(params, batch, cfg, lr)
    T = bootstrap_targets(batch.real_labels, pseudo, params.num_classes, beta)
    _, grad = batch_loss_grad(params, batch.features, T)
    return _apply(params, grad, cfg, lr)


def _normalize(raw_alpha, raw_beta, kind):
    if kind.scheme == "sigmoid":
        w = normalize_sigmoid(raw_alpha, raw_beta)
    elif kind.scheme == "softmax":
        w = normalize_softmax(rectify(raw_alpha), rectify(raw_beta), kind.tau)
    else:
        w = normalize_batch_sum(rectify(raw_alpha), rectify(raw_beta))
    w.raw_alpha, w.raw_beta = raw_alpha, raw_beta
    return w


def project_pairs(alpha, beta):
    """Per-sample projection onto a + b = 1; (0.5, 0.5) when both are zero."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    s = alpha + beta
    zero = s <= 0.0
    safe = np.where(zero, 1.0, s)
    return np.where(zero, 0.5, alpha / safe), np.where(zero, 0.5, beta / safe)


def l2b_step(params, train_batch, val_batch, cfg, lr=None, force_weights=None):
    """One meta-reweighted update; returns ``(new_params, StepStats)``.

    The method in ``cfg.kind`` selects the variant: ``l2b`` (both terms),
    ``l2rw`` (raw beta forced to 0), ``pseudo_only`` (raw alpha forced to 0)
    or ``constrained`` (per-sample a + b = 1, averaged over the batch).
    ``force_weights`` replaces the computed (alpha, beta) outright; used to
    check reductions to the baselines.
    """
    lr = cfg.lr if lr is None else lr
    kind = cfg.kind
    L = params.num_classes
    X = train_batch.features
    n = len(train_batch)

    pseudo = pseudo_labels(params, X)
    train_batch.pseudo_labels = pseudo
    f_losses, f_grads = per_example_loss_grads(params, X, one_hot(train_batch.real_labels, L))
    g_losses, g_grads = per_example_loss_grads(params, X, one_hot(pseudo, L))
    val_before, val_grad = batch_loss_grad(params, val_batch.features,
                                           one_hot(val_batch.real_labels, L))
    raw_alpha, raw_beta = meta_raw_weights(f_grads, g_grads, val_grad,
                                           cfg.meta_lr, lr, len(val_batch))
    if kind.method == "l2rw":
        raw_beta = np.zeros(n)
    elif kind.method == "pseudo_only":
        raw_alpha = np.zeros(n)

    if force_weights is not None:
        alpha, beta = (np.asarray(w, dtype=np.float64) for w in force_weights)
        weights = MetaWeights(alpha, beta, raw_alpha, raw_beta, scheme=kind.scheme)
    elif kind.method == "constrained":
        a, b = project_pairs(rectify(raw_alpha), rectify(raw_beta))
        weights = MetaWeights(a / n, b / n, raw_alpha, raw_beta, scheme="projected")
    else:
        weights = _normalize(raw_alpha, raw_beta, kind)
        if weights.fallback_used:
            weights.alpha = np.full(n, 1.0 / n)
            weights.beta = np.zeros(n)

    grad = _weighted_sum(weights.alpha, f_grads, weights.beta, g_grads)
    new_params = _apply(params, grad, cfg, lr)
    val_after = validation_loss(new_params, val_batch.features, val_batch.real_labels)
    stats = StepStats(
        train_losses_real=f_losses,
        train_losses_pseudo=g_losses,
        val_loss_before=val_before,
        val_loss_after=val_after,
        weights=weights,
        pseudo_agree_fraction=float(np.mean(pseudo == train_batch.real_labels)),
    )
    return new_params, stats


def l2rw_step(params, train_batch, val_batch, cfg, lr=None):
    return l2b_step(params, train_batch, val_batch,
                    replace(cfg, kind=replace(cfg.kind, method="l2rw")), lr)


def constrained_step(params, train_batch, val_batch, cfg, lr=None):
    return l2b_step(params, train_batch, val_batch,
                    replace(cfg, kind=replace(cfg.kind, method="constrained")), lr)
