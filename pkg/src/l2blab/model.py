"""Multilayer perceptron with manual backprop and per-example gradients.

Flat parameter layout: layer 0 weight (d_in x d_out, row-major), layer 0
bias, layer 1 weight, layer 1 bias, ... Every gradient returned here uses
that layout.
"""
from dataclasses import dataclass

import numpy as np

from .numcore import (
    InvalidInputError,
    as_matrix,
    as_vector,
    cross_entropy_rows,
    softmax_rows,
)


@dataclass(frozen=True)
class MlpParams:
    """Dense layers ``[(W, b), ...]``; ReLU between layers, identity on output."""

    layers: tuple

    @property
    def dims(self):
        return [self.layers[0][0].shape[0]] + [W.shape[1] for W, _ in self.layers]

    @property
    def num_classes(self):
        return self.layers[-1][0].shape[1]

    @property
    def size(self):
        return sum(W.size + b.size for W, b in self.layers)

    def flat(self):
        return np.concatenate([a.ravel() for W, b in self.layers for a in (W, b)])

    @classmethod
    def from_flat(cls, flat, dims):
        flat = as_vector(flat, "flat")
        layers, pos = [], 0
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            W = flat[pos:pos + d_in * d_out].reshape(d_in, d_out).copy()
            pos += d_in * d_out
            b = flat[pos:pos + d_out].copy()
            pos += d_out
            layers.append((W, b))
        if pos != flat.size:
            raise InvalidInputError(f"flat length {flat.size} does not match dims {dims}")
        return cls(tuple(layers))


@dataclass
class TrainBatch:
    features: np.ndarray
    real_labels: np.ndarray
    sample_ids: np.ndarray
    pseudo_labels: np.ndarray = None

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        self.real_labels = np.asarray(self.real_labels, dtype=np.int64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        n = self.features.shape[0]
        if n == 0:
            raise InvalidInputError("empty batch")
        if self.real_labels.shape != (n,) or self.sample_ids.shape != (n,):
            raise InvalidInputError("batch arrays have inconsistent lengths")

    def __len__(self):
        return self.features.shape[0]


def init_params(layer_dims, rng):
    """He-normal weights (variance 2/d_in), zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise InvalidInputError(f"invalid layer dims {layer_dims!r}")
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        W = rng.standard_normal((d_in, d_out)) * np.sqrt(2.0 / d_in)
        layers.append((W, np.zeros(d_out)))
    return MlpParams(tuple(layers))


def _forward(params, X):
    X = as_matrix(X, "X")
    if X.shape[1] != params.dims[0]:
        raise InvalidInputError(
            f"feature dim {X.shape[1]} does not match model input {params.dims[0]}")
    acts, pre = [X], []
    a = X
    last = len(params.layers) - 1
    for k, (W, b) in enumerate(params.layers):
        z = a @ W + b
        pre.append(z)
        a = z if k == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts, pre


def predict_logits(params, X):
    return _forward(params, X)[0][-1]


def predict_probs(params, X):
    return softmax_rows(predict_logits(params, X))


def _check_targets(targets, n, L):
    T = as_matrix(targets, "targets")
    if T.shape != (n, L):
        raise InvalidInputError(f"targets shape {T.shape}, expected {(n, L)}")
    if np.any(T < 0) or np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-9):
        raise InvalidInputError("each target row must be a distribution")
    return T


def _backward(params, acts, pre, delta, per_example):
    # delta: dLoss_i/dlogits, one row per example
    grads = []
    for k in range(len(params.layers) - 1, -1, -1):
        a_prev = acts[k]
        if per_example:
            gW = np.einsum("ni,nj->nij", a_prev, delta).reshape(delta.shape[0], -1)
            grads.append((gW, delta))
        else:
            grads.append(((a_prev.T @ delta).ravel(), delta.sum(axis=0)))
        if k > 0:
            # ReLU subgradient is 0 at exactly 0
            delta = (delta @ params.layers[k][0].T) * (pre[k - 1] > 0)
    grads.reverse()
    axis = 1 if per_example else 0
    return np.concatenate([g for pair in grads for g in pair], axis=axis)


def per_example_loss_grads(params, X, targets):
    """Cross-entropy loss and its exact parameter gradient for every row of X.

    Returns ``(losses, grads)`` with ``grads`` of shape ``(n, P)``. Row i of
    both outputs depends only on row i of the inputs.
    """
    acts, pre = _forward(params, X)
    n = acts[0].shape[0]
    T = _check_targets(targets, n, params.num_classes)
    P = softmax_rows(acts[-1])
    losses = cross_entropy_rows(P, T)
    # d CE / d logits = p * sum(t) - t = p - t for a distribution target
    grads = _backward(params, acts, pre, P - T, per_example=True)
    return losses, grads


def batch_loss_grad(params, X, targets):
    """Mean loss over the batch and its gradient, computed jointly."""
    acts, pre = _forward(params, X)
    n = acts[0].shape[0]
    T = _check_targets(targets, n, params.num_classes)
    P = softmax_rows(acts[-1])
    loss = float(cross_entropy_rows(P, T).mean())
    grad = _backward(params, acts, pre, (P - T) / n, per_example=False)
    return loss, grad


def sgd_update(params, grad, lr):
    """Return ``theta - lr * grad`` as fresh parameters."""
    grad = as_vector(grad, "grad")
    if grad.size != params.size:
        raise InvalidInputError(f"gradient length {grad.size} != parameter count {params.size}")
    if lr < 0:
        raise InvalidInputError(f"step size must be >= 0, got {lr}")
    return MlpParams.from_flat(params.flat() - lr * grad, params.dims)
