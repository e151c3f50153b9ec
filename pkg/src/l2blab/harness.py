"""Training loop, run persistence, label auditing and method comparison.

Run directory layout::

    config.resolved   effective config, one key=value per line
    epochs.csv        one row per epoch (see EPOCH_COLUMNS)
    weights.csv       step,sample_id,alpha,beta for every meta step
    summary.json      final / best metrics
"""
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import __version__
from .datagen import read_csv
from .model import TrainBatch, init_params, predict_probs
from .numcore import InvalidInputError, cross_entropy_rows, make_rng, one_hot
from .trainers import (
    StepConfig,
    TrainerKind,
    bootstrap_step,
    ce_step,
    l2b_step,
    pseudo_labels,
    validation_loss,
)

EPOCH_COLUMNS = ("epoch", "train_loss", "val_loss", "test_acc", "fallback_frac",
                 "pseudo_agree", "alpha_clean", "alpha_noisy", "beta_clean",
                 "beta_noisy", "seconds")
SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "l2b"
    lr: float = 0.1
    meta_lr: float = 1.0
    schedule: str = "constant"
    batch_size: int = 64
    val_batch_size: int = 100
    epochs: int = 30
    warmup_epochs: int = 2
    scheme: str = "batch-sum"
    tau: float = 10.0
    clip: float = 5.0
    bootstrap_beta: float = 0.8
    hidden_dims: tuple = (32, 32)
    seed: int = 0
    train_path: str = ""
    val_path: str = ""
    test_path: str = ""

    def __post_init__(self):
        if not (self.lr > 0 and self.meta_lr > 0):
            raise InvalidInputError("lr and meta_lr must be > 0")
        if self.schedule not in SCHEDULES:
            raise InvalidInputError(f"schedule must be one of {SCHEDULES}")
        if self.batch_size < 1 or self.val_batch_size < 1:
            raise InvalidInputError("batch_size and val_batch_size must be >= 1")
        if self.epochs < 1 or not 0 <= self.warmup_epochs < self.epochs:
            raise InvalidInputError("need epochs >= 1 and 0 <= warmup_epochs < epochs")
        if any(int(h) < 1 for h in self.hidden_dims):
            raise InvalidInputError("hidden_dims must be positive")
        if self.seed < 0:
            raise InvalidInputError("seed must be non-negative")
        self.kind  # validates method / scheme / tau / bootstrap_beta

    @property
    def kind(self):
        return TrainerKind(self.method, self.scheme, self.tau, self.bootstrap_beta)

    def step_config(self):
        return StepConfig(lr=self.lr, meta_lr=self.meta_lr, clip=self.clip, kind=self.kind)

    def lr_at(self, step, total_steps):
        if self.schedule == "cosine":
            return self.lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
        return self.lr


_CONFIG_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _parse_value(key, raw):
    kind = _CONFIG_TYPES[key]
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is tuple:
            return tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError as exc:
        raise InvalidInputError(f"bad value for {key}: {raw!r}") from exc
    return raw.strip()


def parse_config(text, base_dir=None):
    """Parse ``key=value`` lines; ``#`` starts a comment. Unknown keys are errors.

    Relative dataset paths resolve against ``base_dir`` and are stored absolute.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise InvalidInputError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    if base_dir is not None:
        for key in ("train_path", "val_path", "test_path"):
            if values.get(key) and not os.path.isabs(values[key]):
                values[key] = os.path.abspath(os.path.join(base_dir, values[key]))
    return TrainConfig(**values)


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"config file not found: {path}")
    return parse_config(path.read_text(), base_dir=str(path.parent))


def format_config(cfg):
    lines = []
    for f in fields(TrainConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(h) for h in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


@dataclass
class EpochReport:
    epoch: int
    train_loss: float
    val_loss: float
    test_acc: float
    fallback_frac: float
    pseudo_agree: float
    alpha_clean: float
    alpha_noisy: float
    beta_clean: float
    beta_noisy: float
    seconds: float


@dataclass
class TrainResult:
    reports: list
    params: object
    # rows of (step, sample_id, alpha, beta), meta steps only
    weight_history: list = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best(self):
        return self.reports[self.best_epoch]

    @property
    def final(self):
        return self.reports[-1]


def _check_weights(w, step):
    """Re-assert the trainer contracts on every recorded meta step."""
    if np.any(w.alpha < 0) or np.any(w.beta < 0) or not (
            np.all(np.isfinite(w.alpha)) and np.all(np.isfinite(w.beta))):
        raise RuntimeError(f"step {step}: negative or non-finite meta-weights")
    if w.scheme == "batch-sum" and not w.fallback_used:
        total = w.alpha.sum() + w.beta.sum()
        if abs(total - 1.0) > 1e-12:
            raise RuntimeError(f"step {step}: batch-sum weights sum to {total!r}")


def _mean_or_nan(xs):
    return float(np.mean(xs)) if len(xs) else float("nan")


def train(cfg, train_ds, val_ds, test_ds=None, record_weights=True):
    """Run the full training schedule in memory and return a :class:`TrainResult`.

    Epochs before ``warmup_epochs`` use plain cross-entropy; afterwards the
    configured method. Best epoch = lowest validation loss.
    """
    if train_ds.dim != val_ds.dim or (test_ds is not None and test_ds.dim != train_ds.dim):
        raise InvalidInputError("train/val/test feature dimensions differ")
    L = max(train_ds.num_classes, val_ds.num_classes,
            test_ds.num_classes if test_ds is not None else 0)
    m = cfg.val_batch_size
    if cfg.kind.is_meta and m > len(val_ds):
        raise InvalidInputError(
            f"val_batch_size {m} exceeds validation set size {len(val_ds)}")

    params = init_params([train_ds.dim, *cfg.hidden_dims, L], make_rng(cfg.seed, "init"))
    shuffle_rng = make_rng(cfg.seed, "shuffle")
    val_rng = make_rng(cfg.seed, "val-batches")
    step_cfg = cfg.step_config()
    N, n = len(train_ds), cfg.batch_size
    steps_per_epoch = -(-N // n)
    total_steps = cfg.epochs * steps_per_epoch
    mask = train_ds.noise_mask
    y_train = train_ds.labels_observed

    reports, history = [], []
    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        meta_epoch = epoch >= cfg.warmup_epochs and cfg.kind.is_meta
        losses, agree, fallbacks, meta_steps = [], [], 0, 0
        w_alpha = {False: [], True: []}
        w_beta = {False: [], True: []}
        perm = shuffle_rng.permutation(N)
        for start in range(0, N, n):
            idx = perm[start:start + n]
            batch = TrainBatch(train_ds.features[idx], y_train[idx], idx)
            lr = cfg.lr_at(step, total_steps)
            if meta_epoch:
                vi = np.sort(val_rng.choice(len(val_ds), size=m, replace=False))
                vbatch = TrainBatch(val_ds.features[vi], val_ds.labels_observed[vi], vi)
                params, stats = l2b_step(params, batch, vbatch, step_cfg, lr)
                w = stats.weights
                _check_weights(w, step)
                meta_steps += 1
                losses.append(float(stats.train_losses_real.mean()))
                agree.append(stats.pseudo_agree_fraction)
                if w.fallback_used:
                    fallbacks += 1
                else:
                    for noisy in (False, True):
                        sel = mask[idx] == noisy
                        w_alpha[noisy].extend(w.alpha[sel])
                        w_beta[noisy].extend(w.beta[sel])
                    if record_weights:
                        history.extend(zip([step] * len(idx), idx.tolist(),
                                           w.alpha.tolist(), w.beta.tolist()))
            else:
                P = predict_probs(params, batch.features)
                losses.append(float(cross_entropy_rows(P, one_hot(batch.real_labels, L)).mean()))
                agree.append(float(np.mean(np.argmax(P, axis=1) == batch.real_labels)))
                if epoch >= cfg.warmup_epochs and cfg.method == "bootstrap":
                    params = bootstrap_step(params, batch, step_cfg, lr)
                else:
                    params = ce_step(params, batch, step_cfg, lr)
            step += 1

        G = validation_loss(params, val_ds.features, val_ds.labels_observed)
        if not math.isfinite(G):
            raise RuntimeError(f"epoch {epoch}: validation loss is not finite")
        acc = float("nan")
        if test_ds is not None:
            acc = float(np.mean(pseudo_labels(params, test_ds.features) == test_ds.labels_clean))
        reports.append(EpochReport(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_loss=G,
            test_acc=acc,
            fallback_frac=fallbacks / meta_steps if meta_steps else 0.0,
            pseudo_agree=float(np.mean(agree)),
            alpha_clean=_mean_or_nan(w_alpha[False]),
            alpha_noisy=_mean_or_nan(w_alpha[True]),
            beta_clean=_mean_or_nan(w_beta[False]),
            beta_noisy=_mean_or_nan(w_beta[True]),
            seconds=time.perf_counter() - t0,
        ))
    best = int(np.argmin([r.val_loss for r in reports]))
    return TrainResult(reports, params, history, best)


# --- persistence ---------------------------------------------------------

def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def epochs_csv(reports):
    lines = [",".join(EPOCH_COLUMNS)]
    for r in reports:
        lines.append(",".join(_fmt(getattr(r, c)) for c in EPOCH_COLUMNS))
    return "\n".join(lines) + "\n"


def weights_csv(history):
    lines = ["step,sample_id,alpha,beta"]
    lines.extend(f"{s},{i},{a!r},{b!r}" for s, i, a, b in history)
    return "\n".join(lines) + "\n"


def read_weights_csv(path):
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"weights file not found: {path}")
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "step,sample_id,alpha,beta":
            raise InvalidInputError(f"{path}: unexpected header {header!r}")
        for line in fh:
            if line.strip():
                s, i, a, b = line.split(",")
                rows.append((int(s), int(i), float(a), float(b)))
    return rows


def _summary(cfg, result):
    def metrics(r):
        return {"epoch": r.epoch, "val_loss": r.val_loss,
                "test_acc": None if math.isnan(r.test_acc) else r.test_acc}
    accs = [r.test_acc for r in result.reports if not math.isnan(r.test_acc)]
    return {
        "version": __version__,
        "method": cfg.method,
        "seed": cfg.seed,
        "final": metrics(result.final),
        "best": metrics(result.best),
        "oracle_best_test_acc": max(accs) if accs else None,
        "meta_steps_recorded": len({s for s, *_ in result.weight_history}),
    }


def _load_datasets(cfg):
    for key in ("train_path", "val_path"):
        p = getattr(cfg, key)
        if not p or not os.path.isfile(p):
            raise InvalidInputError(f"{key} does not point to a file: {p!r}")
    if cfg.test_path and not os.path.isfile(cfg.test_path):
        raise InvalidInputError(f"test_path does not point to a file: {cfg.test_path!r}")
    parts = [read_csv(cfg.train_path), read_csv(cfg.val_path)]
    parts.append(read_csv(cfg.test_path) if cfg.test_path else None)
    L = max(p.num_classes for p in parts if p is not None)
    parts = [replace(p, num_classes=L) if p is not None else None for p in parts]
    if np.any(parts[1].noise_mask):
        raise InvalidInputError("validation set must be clean (observed == clean labels)")
    return parts


def run_experiment(cfg, out_dir):
    """Load the configured datasets, train, and write the run directory."""
    train_ds, val_ds, test_ds = _load_datasets(cfg)
    result = train(cfg, train_ds, val_ds, test_ds)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "config.resolved", format_config(cfg))
    _atomic_write(out / "epochs.csv", epochs_csv(result.reports))
    _atomic_write(out / "weights.csv", weights_csv(result.weight_history))
    _atomic_write(out / "summary.json", json.dumps(_summary(cfg, result), indent=2) + "\n")
    return result


# --- auditing ------------------------------------------------------------

@dataclass
class AuditReport:
    scores: np.ndarray
    appearances: np.ndarray
    ranking: np.ndarray
    auc: float
    precision_at_k: float
    k: int


def rank_auc(scores, labels):
    """ROC AUC via the Mann-Whitney rank statistic; ties get average ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def audit_labels(history, train_ds):
    """Score every training sample by its mean (beta - alpha) over the run.

    Samples the history never mentions score 0. Ranking is by descending
    score, ties by ascending sample id.
    """
    if not history:
        raise InvalidInputError("weight history is empty")
    N = len(train_ds)
    H = np.asarray(history, dtype=np.float64)
    ids = H[:, 1].astype(np.int64)
    if ids.min() < 0 or ids.max() >= N:
        raise InvalidInputError("weight history references samples outside the dataset")
    diff_sum = np.zeros(N)
    np.add.at(diff_sum, ids, H[:, 3] - H[:, 2])
    counts = np.bincount(ids, minlength=N)
    scores = np.divide(diff_sum, counts, out=np.zeros(N), where=counts > 0)
    ranking = np.lexsort((np.arange(N), -scores))
    mask = train_ds.noise_mask
    k = int(mask.sum())
    prec = float(mask[ranking[:k]].mean()) if k else float("nan")
    return AuditReport(scores, counts, ranking, rank_auc(scores, mask), prec, k)


def audit_csv(report, train_ds):
    mask = train_ds.noise_mask
    lines = ["rank,sample_id,score,appearances,noisy"]
    for r, i in enumerate(report.ranking):
        lines.append(f"{r},{i},{float(report.scores[i])!r},{report.appearances[i]},{int(mask[i])}")
    return "\n".join(lines) + "\n"


def audit_run(run_dir, out_path):
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.resolved")
    train_ds = read_csv(cfg.train_path)
    report = audit_labels(read_weights_csv(run_dir / "weights.csv"), train_ds)
    _atomic_write(out_path, audit_csv(report, train_ds))
    return report


# --- comparison ----------------------------------------------------------

COMPARE_COLUMNS = ("config", "method", "seeds", "best_mean", "best_std",
                   "final_mean", "final_std", "oracle_mean", "oracle_std")


def compare(configs, seeds, names=None):
    """Train every config on every seed; one summary row per config.

    ``best`` is the test accuracy at the lowest-validation-loss epoch,
    ``oracle`` the maximum test accuracy over epochs (reported, never used
    for selection).
    """
    if not configs or not seeds:
        raise InvalidInputError("need at least one config and one seed")
    data_keys = {(c.train_path, c.val_path, c.test_path) for c in configs}
    if len(data_keys) != 1:
        raise InvalidInputError("all configs must share the same train/val/test files")
    if not configs[0].test_path:
        raise InvalidInputError("compare needs a test_path")
    datasets = _load_datasets(configs[0])
    names = names or [c.method for c in configs]
    rows = []
    for name, cfg in zip(names, configs):
        best, final, oracle = [], [], []
        for seed in seeds:
            res = train(replace(cfg, seed=int(seed)), *datasets, record_weights=False)
            best.append(res.best.test_acc)
            final.append(res.final.test_acc)
            oracle.append(max(r.test_acc for r in res.reports))
        rows.append({
            "config": name, "method": cfg.method, "seeds": len(seeds),
            "best_mean": float(np.mean(best)), "best_std": float(np.std(best)),
            "final_mean": float(np.mean(final)), "final_std": float(np.std(final)),
            "oracle_mean": float(np.mean(oracle)), "oracle_std": float(np.std(oracle)),
        })
    return rows


def compare_csv(rows):
    lines = [",".join(COMPARE_COLUMNS)]
    lines.extend(",".join(_fmt(r[c]) for c in COMPARE_COLUMNS) for r in rows)
    return "\n".join(lines) + "\n"
