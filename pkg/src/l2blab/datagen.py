"""Synthetic classification data, label-noise injection and CSV I/O."""
import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .numcore import InvalidInputError, as_matrix


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels_observed: np.ndarray
    labels_clean: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = as_matrix(self.features, "features")
        y = np.asarray(self.labels_observed, dtype=np.int64)
        c = np.asarray(self.labels_clean, dtype=np.int64)
        n = X.shape[0]
        if n < 1:
            raise InvalidInputError("dataset must contain at least one sample")
        if y.shape != (n,) or c.shape != (n,):
            raise InvalidInputError("label arrays must have one entry per sample")
        for lab in (y, c):
            if lab.min() < 0 or lab.max() >= self.num_classes:
                raise InvalidInputError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels_observed", y)
        object.__setattr__(self, "labels_clean", c)

    @property
    def noise_mask(self):
        return self.labels_observed != self.labels_clean

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels_observed[idx],
                       self.labels_clean[idx], self.num_classes)

    def cleaned(self):
        """Copy whose observed labels are the clean ones."""
        return replace(self, labels_observed=self.labels_clean.copy())


def blob_centers(classes, dim, separation):
    """Class means for :func:`gen_blobs`.

    d = 1: evenly spaced on a line, adjacent means ``separation`` apart.
    d = 2, or more classes than 2*d: class k at angle 2*pi*k/L on a circle of
    radius ``separation`` in the first two coordinates.
    Otherwise: cross-polytope vertices, class k at +-separation on axis k // 2.
    """
    C = np.zeros((classes, dim))
    if dim == 1:
        C[:, 0] = separation * (np.arange(classes) - (classes - 1) / 2.0)
    elif dim == 2 or classes > 2 * dim:
        ang = 2.0 * np.pi * np.arange(classes) / classes
        C[:, 0] = separation * np.cos(ang)
        C[:, 1] = separation * np.sin(ang)
    else:
        for k in range(classes):
            C[k, k // 2] = separation if k % 2 == 0 else -separation
    return C


def gen_blobs(classes, per_class, dim, separation, rng):
    """Unit-variance Gaussian blobs around :func:`blob_centers`, class-major order."""
    if classes < 2 or per_class < 1 or dim < 1 or not separation > 0:
        raise InvalidInputError("gen_blobs needs classes >= 2, per_class >= 1, dim >= 1, separation > 0")
    C = blob_centers(classes, dim, separation)
    y = np.repeat(np.arange(classes), per_class)
    X = C[y] + rng.standard_normal((classes * per_class, dim))
    return Dataset(X, y, y.copy(), classes)


#: angular extent of one spiral arm, in radians
SPIRAL_TURN = 1.75 * np.pi
#: radius at the outer end of each arm
SPIRAL_RADIUS = 2.0


def spiral_arm(k, classes, t):
    """Point on arm ``k`` at curve parameter ``t`` in [0, 1].

    radius = SPIRAL_RADIUS * t, angle = SPIRAL_TURN * t + 2*pi*k/L.
    """
    theta = SPIRAL_TURN * t + 2.0 * np.pi * k / classes
    r = SPIRAL_RADIUS * t
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def gen_spirals(classes, per_class, jitter, rng):
    """Interleaved 2-D spirals; ``jitter`` is the std of isotropic Gaussian noise."""
    if classes < 2 or per_class < 1 or jitter < 0:
        raise InvalidInputError("gen_spirals needs classes >= 2, per_class >= 1, jitter >= 0")
    y = np.repeat(np.arange(classes), per_class)
    t = np.tile(np.linspace(0.05, 1.0, per_class), classes)
    X = spiral_arm(y, classes, t) + jitter * rng.standard_normal((y.size, 2))
    return Dataset(X, y, y.copy(), classes)


def _check_fraction(fraction):
    if not 0.0 <= fraction <= 1.0:
        raise InvalidInputError(f"noise fraction must lie in [0, 1], got {fraction}")


def _pick(ds, fraction, rng):
    k = int(np.floor(fraction * len(ds)))
    return np.sort(rng.choice(len(ds), size=k, replace=False))


def inject_symmetric(ds, fraction, rng):
    """Flip exactly floor(fraction * N) clean labels to a uniformly drawn other class.

    Selection and replacement act on ``labels_clean``, so injecting into an
    already noisy set re-corrupts from the ground truth.
    """
    _check_fraction(fraction)
    idx = _pick(ds, fraction, rng)
    y = ds.labels_clean.copy()
    offset = rng.integers(1, ds.num_classes, size=idx.size)
    y[idx] = (ds.labels_clean[idx] + offset) % ds.num_classes
    return replace(ds, labels_observed=y)


def inject_asymmetric(ds, fraction, rng):
    """Map exactly floor(fraction * N) labels c -> (c + 1) mod L."""
    _check_fraction(fraction)
    idx = _pick(ds, fraction, rng)
    y = ds.labels_clean.copy()
    y[idx] = (ds.labels_clean[idx] + 1) % ds.num_classes
    return replace(ds, labels_observed=y)


def split(ds, val_count, test_count, rng):
    """Disjoint random train/val/test partition; val and test carry clean labels."""
    N = len(ds)
    if val_count < 1 or test_count < 0 or val_count + test_count >= N:
        raise InvalidInputError(
            f"cannot carve {val_count} val + {test_count} test samples from {N}")
    if val_count > N / 10:
        warnings.warn(f"validation set ({val_count}) is more than 10% of the data ({N})",
                      stacklevel=2)
    perm = rng.permutation(N)
    val_idx = np.sort(perm[:val_count])
    test_idx = np.sort(perm[val_count:val_count + test_count])
    train_idx = np.sort(perm[val_count + test_count:])
    return (ds.subset(train_idx), ds.subset(val_idx).cleaned(),
            ds.subset(test_idx).cleaned())


def write_csv(ds, path):
    d = ds.dim
    mask = ds.noise_mask
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j}" for j in range(d)] + ["label", "clean_label", "noisy"])
        for i in range(len(ds)):
            # repr() is the shortest string that round-trips exactly
            w.writerow([repr(float(v)) for v in ds.features[i]]
                       + [int(ds.labels_observed[i]), int(ds.labels_clean[i]), int(mask[i])])


def read_csv(path, num_classes=None):
    """Load a dataset CSV. Missing clean_label/noisy columns mean "clean"."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header = rows[0]
    if "label" not in header:
        raise InvalidInputError(f"{path}: missing 'label' column")
    feat_cols = [j for j, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
    feat_cols.sort(key=lambda j: int(header[j][1:]))
    if not feat_cols:
        raise InvalidInputError(f"{path}: no feature columns")
    li = header.index("label")
    ci = header.index("clean_label") if "clean_label" in header else None
    body = [r for r in rows[1:] if r]
    try:
        X = np.array([[float(r[j]) for j in feat_cols] for r in body])
        y = np.array([int(r[li]) for r in body], dtype=np.int64)
        c = np.array([int(r[ci]) for r in body], dtype=np.int64) if ci is not None else y.copy()
    except (ValueError, IndexError) as exc:
        raise InvalidInputError(f"{path}: malformed row ({exc})") from exc
    if X.shape[0] == 0:
        raise InvalidInputError(f"{path}: no data rows")
    if "noisy" in header:
        ni = header.index("noisy")
        flagged = np.array([r[ni] == "1" for r in body])
        if not np.array_equal(flagged, y != c):
            raise InvalidInputError(f"{path}: 'noisy' column disagrees with label != clean_label")
    if num_classes is None:
        num_classes = int(max(y.max(), c.max())) + 1
    return Dataset(X, y, c, num_classes)
