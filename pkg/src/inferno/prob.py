"""Categorical and Dirichlet kernels.

Probability vectors are plain 1-D float64 numpy arrays. Conditional tables are
numpy arrays whose first axis is the child variable; every other axis is a
parent, so ``table[:, j, k]`` is the column for parent configuration ``(j, k)``.
All functions are pure.
"""

import numpy as np
from scipy.special import digamma, gammaln, logsumexp

from inferno.errors import DomainError, InvalidDistributionError, NumericError, ShapeError

SIMPLEX_TOL = 1e-12
TEMPERATURE_FLOOR = 1e-9
_EPS = np.finfo(float).eps


def normalize(raw):
    """Rescale a nonnegative vector so it sums to one."""
    x = np.asarray(raw, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidDistributionError("expected a non-empty 1-D vector")
    if not np.all(np.isfinite(x)):
        raise InvalidDistributionError("non-finite entry")
    if np.any(x < 0):
        raise InvalidDistributionError("negative entry")
    total = x.sum()
    if total <= 0:
        raise InvalidDistributionError("all entries are zero")
    if abs(total - 1.0) <= 4 * (x.size + 4) * _EPS:
        # already normalized up to rounding: returned unchanged, so normalize is idempotent
        return x.copy()
    return x / total


def is_prob_vector(p, tol=SIMPLEX_TOL):
    p = np.asarray(p, dtype=float)
    return (
        p.ndim == 1
        and p.size >= 1
        and bool(np.all(p >= 0))
        and abs(p.sum() - 1.0) <= tol
    )


def check_prob_vector(p, name="distribution"):
    p = np.asarray(p, dtype=float)
    if not is_prob_vector(p, tol=1e-9):
        raise InvalidDistributionError(f"{name} is not a probability vector")
    return p


def xlogy(x, y):
    """``x * log(y)`` with the convention ``0 * log(anything) = 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x * np.log(y)
    return np.where(x == 0, 0.0, out)


def kl_divergence(p, q):
    """KL[p || q] in nats; ``inf`` when p has mass outside the support of q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ShapeError(f"dimension mismatch {p.shape} vs {q.shape}")
    if np.any((p > 0) & (q <= 0)):
        return float("inf")
    value = float(np.sum(xlogy(p, p) - xlogy(p, q)))
    return max(value, 0.0)


def entropy(p):
    p = np.asarray(p, dtype=float)
    return max(float(-np.sum(xlogy(p, p))), 0.0)


def softmax(logits, temperature=1.0):
    """Boltzmann distribution ``exp(logit / temperature)``, normalized.

    A temperature of zero is replaced by ``TEMPERATURE_FLOOR``; at (or below)
    the floor the result is one-hot on the first maximal logit.
    """
    x = np.asarray(logits, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise NumericError("expected a non-empty 1-D logit vector")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite logit")
    if temperature < 0 or not np.isfinite(temperature):
        raise NumericError("temperature must be a nonnegative finite number")
    if temperature <= TEMPERATURE_FLOOR:
        out = np.zeros_like(x)
        out[int(np.argmax(x))] = 1.0
        return out
    z = x / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def log_softmax(logits):
    x = np.asarray(logits, dtype=float)
    return x - logsumexp(x)


def _check_counts(c):
    c = np.asarray(c, dtype=float)
    if c.size == 0:
        raise DomainError("empty Dirichlet counts")
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        raise DomainError("Dirichlet counts must be positive and finite")
    return c


def log_multivariate_beta(c, axis=0):
    """``ln B(c) = sum_i lnGamma(c_i) - lnGamma(sum_i c_i)`` along ``axis``."""
    c = _check_counts(c)
    return gammaln(c).sum(axis=axis) - gammaln(c.sum(axis=axis))


def dirichlet_expected_log(c, axis=0):
    """``E[ln theta_i] = digamma(c_i) - digamma(sum c)`` along ``axis``."""
    c = _check_counts(c)
    return digamma(c) - digamma(c.sum(axis=axis, keepdims=True))


def dirichlet_kl(q, p, axis=0):
    """KL[Dir(q) || Dir(p)] summed over every column of the arrays."""
    q = _check_counts(q)
    p = _check_counts(p)
    if q.shape != p.shape:
        raise ShapeError(f"dimension mismatch {q.shape} vs {p.shape}")
    elog = dirichlet_expected_log(q, axis=axis)
    per_col = (
        log_multivariate_beta(p, axis=axis)
        - log_multivariate_beta(q, axis=axis)
        + ((q - p) * elog).sum(axis=axis)
    )
    return float(np.sum(per_col))


def normalize_columns(table):
    """Normalize a conditional table over its child (first) axis."""
    t = np.asarray(table, dtype=float)
    total = t.sum(axis=0, keepdims=True)
    if np.any(total <= 0):
        raise InvalidDistributionError("a column sums to zero")
    return t / total


def columns_valid(table, tol=1e-9):
    t = np.asarray(table, dtype=float)
    return bool(np.all(t >= 0) and np.all(np.abs(t.sum(axis=0) - 1.0) <= tol))


def sample_categorical(p, rng):
    """Draw one index from ``p`` using an injected ``numpy.random.Generator``."""
    p = np.asarray(p, dtype=float)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(p), u * p.sum(), side="right"))
    return min(idx, p.size - 1)
