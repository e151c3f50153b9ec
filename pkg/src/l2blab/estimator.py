"""scikit-learn wrapper around :func:`l2blab.harness.train`."""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .datagen import Dataset
from .harness import TrainConfig, train
from .model import predict_probs
from .numcore import make_rng


class L2BClassifier(ClassifierMixin, BaseEstimator):
    """MLP classifier trained with meta-learned per-sample label/pseudo-label weights.

    Meta methods need a trusted clean set: pass ``X_val``/``y_val`` to
    :meth:`fit`, or a ``validation_fraction`` of the training data is held
    out and its labels are treated as clean.

    Parameters mirror :class:`l2blab.harness.TrainConfig`; ``random_state``
    is the run seed.
    """

    def __init__(self, method="l2b", hidden_dims=(32, 32), lr=0.1, meta_lr=1.0,
                 schedule="constant", batch_size=64, val_batch_size=100, epochs=30,
                 warmup_epochs=2, scheme="batch-sum", tau=10.0, clip=5.0,
                 bootstrap_beta=0.8, validation_fraction=0.1, random_state=0):
        self.method = method
        self.hidden_dims = hidden_dims
        self.lr = lr
        self.meta_lr = meta_lr
        self.schedule = schedule
        self.batch_size = batch_size
        self.val_batch_size = val_batch_size
        self.epochs = epochs
        self.warmup_epochs = warmup_epochs
        self.scheme = scheme
        self.tau = tau
        self.clip = clip
        self.bootstrap_beta = bootstrap_beta
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _config(self, n_val):
        return TrainConfig(
            method=self.method, lr=self.lr, meta_lr=self.meta_lr, schedule=self.schedule,
            batch_size=self.batch_size, val_batch_size=min(self.val_batch_size, n_val),
            epochs=self.epochs, warmup_epochs=self.warmup_epochs, scheme=self.scheme,
            tau=self.tau, clip=self.clip, bootstrap_beta=self.bootstrap_beta,
            hidden_dims=tuple(self.hidden_dims), seed=int(self.random_state or 0))

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        L = max(len(self.classes_), 2)
        if X_val is None:
            if not 0.0 < self.validation_fraction < 1.0:
                raise ValueError("validation_fraction must lie in (0, 1) when no X_val is given")
            perm = make_rng(int(self.random_state or 0), "holdout").permutation(len(y))
            n_val = max(1, int(round(self.validation_fraction * len(y))))
            if n_val >= len(y):
                raise ValueError("not enough samples to hold out a validation set")
            val_idx, tr_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
            X_val, yv_enc = X[val_idx], y_enc[val_idx]
            X, y_enc = X[tr_idx], y_enc[tr_idx]
        else:
            X_val, y_val = check_X_y(X_val, y_val, dtype=np.float64)
            if X_val.shape[1] != X.shape[1]:
                raise ValueError("X_val has a different number of features than X")
            unknown = np.setdiff1d(y_val, self.classes_)
            if unknown.size:
                raise ValueError(f"y_val contains classes not seen in y: {unknown}")
            yv_enc = np.searchsorted(self.classes_, y_val)
        train_ds = Dataset(X, y_enc, y_enc, L)
        val_ds = Dataset(X_val, yv_enc, yv_enc, L)
        result = train(self._config(len(val_ds)), train_ds, val_ds)
        self.params_ = result.params
        self.history_ = result.reports
        self.weight_history_ = result.weight_history
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return predict_probs(self.params_, X)[:, :len(self.classes_)]

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
