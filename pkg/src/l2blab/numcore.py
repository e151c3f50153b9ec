"""Dense float64 primitives and seeded randomness.

Matrices are plain C-contiguous ``numpy.float64`` arrays. Every public
function validates finiteness and raises :class:`InvalidInputError` on bad
input, so NaN/Inf never leak downstream silently.
"""
import zlib

import numpy as np

#: lower clamp applied to probabilities before taking logs
PROB_EPS = 1e-12


class InvalidInputError(ValueError):
    """Raised for malformed arguments (shapes, ranges, non-finite values)."""


def as_matrix(a, name="input"):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return a


def as_vector(a, name="input"):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return a


def softmax_rows(logits):
    """Row-wise softmax, stabilized by subtracting each row's max."""
    z = as_matrix(logits, "logits")
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_distribution(t, tol=1e-9):
    if np.any(t < 0) or abs(t.sum() - 1.0) > tol:
        raise InvalidInputError("target must be non-negative and sum to 1")


def cross_entropy(p, t):
    """``-sum(t * log(clip(p, PROB_EPS, 1)))`` for one probability row."""
    p = as_vector(p, "p")
    t = as_vector(t, "t")
    if p.shape != t.shape:
        raise InvalidInputError(f"shape mismatch: {p.shape} vs {t.shape}")
    _check_distribution(t)
    logp = np.log(np.clip(p, PROB_EPS, 1.0))
    # -0.0 for zero-weight terms; the max keeps the result >= 0
    return max(0.0, float(-np.dot(t, logp)))


def cross_entropy_rows(P, T):
    """Per-row cross-entropy for matrices of probabilities and targets."""
    logp = np.log(np.clip(P, PROB_EPS, 1.0))
    return np.maximum(-np.einsum("nl,nl->n", T, logp), 0.0)


def dot_flat(g1, g2):
    """Inner product of two flat gradient vectors.

    Uses numpy's einsum reduction loop, which has a fixed accumulation order
    for a given length and never dispatches to multi-threaded BLAS.
    """
    g1 = as_vector(g1, "g1")
    g2 = as_vector(g2, "g2")
    if g1.shape != g2.shape:
        raise InvalidInputError(f"length mismatch: {g1.size} vs {g2.size}")
    return float(np.einsum("k,k->", g1, g2))


def dot_rows(G, v):
    """``dot_flat(G[i], v)`` for every row i; bit-identical to the scalar form."""
    G = np.asarray(G, dtype=np.float64)
    v = as_vector(v, "v")
    if G.ndim != 2 or G.shape[1] != v.size:
        raise InvalidInputError(f"length mismatch: {G.shape} vs {v.size}")
    return np.array([np.einsum("k,k->", row, v) for row in G])


def clip_global_norm(g, c):
    """Rescale ``g`` to norm ``c`` when its norm exceeds ``c``."""
    if not c > 0:
        raise InvalidInputError(f"clip threshold must be > 0, got {c}")
    g = as_vector(g, "g")
    norm = np.sqrt(dot_flat(g, g))
    if norm <= c:
        return g
    return g * (c / norm)


def make_rng(seed, purpose=None):
    """Seeded PCG64 generator; ``purpose`` derives an independent sub-stream.

    Sub-streams are keyed by ``SeedSequence(seed, spawn_key=(crc32(purpose),))``
    so e.g. the init stream and the shuffle stream of one run never overlap
    and do not depend on call order.
    """
    seed = int(seed)
    if seed < 0:
        raise InvalidInputError(f"seed must be non-negative, got {seed}")
    if purpose is None:
        ss = np.random.SeedSequence(seed)
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(purpose.encode()),))
    return np.random.Generator(np.random.PCG64(ss))


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidInputError("label out of range")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out
