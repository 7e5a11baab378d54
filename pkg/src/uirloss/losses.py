"""Loss values and their gradients with respect to logits.

Single-sample functions return a :class:`LossResult`. The ``batch_*``
variants operate on rows of a 2-D logit array and return per-row values
together with per-row gradients; the trainer reduces them.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError, as_vec, logsumexp, softmax

# Floor on sin(theta) in the ArcFace derivative; d cos(theta+m)/d cos(theta)
# is unbounded as cos(theta) -> +-1.
SIN_FLOOR = 1e-6


def _margin_target(c, m):
    """``cos(theta + m)``, with the linear fallback ``cos(theta) - m sin(m)``
    once ``theta + m`` passes pi.

    Without the fallback the target logit rises again past pi and placing
    every feature antipodal to every center becomes a near-zero-loss
    solution.
    """
    c = np.clip(c, -1.0, 1.0)
    theta = np.arccos(c)
    return np.where(c > np.cos(np.pi - m), np.cos(theta + m), c - m * np.sin(m))


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_logits: np.ndarray


@dataclass(frozen=True)
class LossWeights:
    """Weight ``w`` on the rejection term of the combined objective."""

    w: float = 0.1

    def __post_init__(self):
        if not self.w >= 0:
            raise ValueError(f"loss weight must be non-negative, got {self.w}")


def _check_target(target, n):
    if not 0 <= int(target) < n:
        raise IndexError(f"target {target} out of range for {n} classes")
    return int(target)


def arcface_logits(cosines, target, s=64.0, m=0.5):
    """Scaled cosines with an additive angular margin on the target class.

    Non-target entries are ``s * cos(theta_j)``; the target entry is
    ``s * cos(theta_y + m)`` for ``theta_y <= pi - m`` and
    ``s * (cos(theta_y) - m sin(m))`` beyond.
    """
    c = as_vec(cosines)
    y = _check_target(target, c.size)
    if not 0 <= m < np.pi / 2:
        raise ValueError(f"margin must lie in [0, pi/2), got {m}")
    out = s * c
    if m != 0:
        out[y] = s * _margin_target(c[y], m)
    return out


def arcface_backward(cosines, target, grad_logits, s=64.0, m=0.5):
    """Pull a logit gradient back through :func:`arcface_logits` to cosines."""
    c = as_vec(cosines)
    y = _check_target(target, c.size)
    g = s * as_vec(grad_logits)
    if m != 0:
        g[y] *= _margin_slope(c[y], m)
    return g


def _margin_slope(c, m):
    # d/dc cos(arccos(c) + m) = cos m + sin m * c / sqrt(1 - c^2)
    c = np.clip(c, -1.0, 1.0)
    sin_t = np.maximum(np.sqrt(1.0 - c * c), SIN_FLOOR)
    return np.where(c > np.cos(np.pi - m), np.cos(m) + np.sin(m) * c / sin_t, 1.0)


def batch_arcface_logits(cosines, targets, s=64.0, m=0.5):
    cos = np.asarray(cosines, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.intp)
    rows = np.arange(cos.shape[0])
    out = s * cos
    if m != 0:
        out[rows, targets] = s * _margin_target(cos[rows, targets], m)
    return out


def batch_arcface_backward(cosines, targets, grad_logits, s=64.0, m=0.5):
    cos = np.asarray(cosines, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.intp)
    rows = np.arange(cos.shape[0])
    g = s * np.asarray(grad_logits, dtype=np.float64)
    if m != 0:
        g[rows, targets] *= _margin_slope(cos[rows, targets], m)
    return g


def cross_entropy(logits, target):
    """Softmax cross-entropy ``-log softmax(logits)[target]``."""
    z = as_vec(logits)
    y = _check_target(target, z.size)
    values, grad = batch_cross_entropy(z[None, :], np.array([y]))
    return LossResult(float(values[0]), grad[0])


def batch_cross_entropy(logits, targets):
    """Per-row cross-entropy values and gradients.

    Written in terms of ``d_j = z_j - z_y`` so that a confidently correct
    row keeps full relative precision: the value is ``log1p(sum_{j!=y}
    e^{d_j})`` and the target gradient is ``-sum_{j!=y} p_j`` rather than
    ``p_y - 1``.
    """
    z = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.intp)
    rows = np.arange(z.shape[0])
    d = z - z[rows, targets][:, None]
    dmax = np.max(d, axis=1)  # >= 0 because d_y == 0
    e_other = np.exp(d - dmax[:, None])
    e_other[rows, targets] = 0.0
    rest = np.sum(e_other, axis=1)
    # sum_j e^{d_j} = e^{dmax} * (e^{-dmax} + rest)
    base = np.exp(-dmax)
    values = np.where(dmax == 0, np.log1p(rest), dmax + np.log(base + rest))
    denom = base + rest
    grad = e_other / denom[:, None]
    grad[rows, targets] = -rest / denom
    return values, grad


def uir_loss(logits, stabilized=True):
    """Unknown identity rejection loss ``-sum_i log p_i``.

    With ``stabilized`` the probabilities are passed through a second
    softmax first, which keeps every term of the sum at least
    ``1 / (n - 1 + e)``. Both variants attain their minimum ``n ln n``
    exactly when all logits are equal.
    """
    z = as_vec(logits)
    if z.size < 2:
        raise DimensionError("rejection loss needs at least two classes")
    values, grads = batch_uir_loss(z[None, :], stabilized=stabilized)
    return LossResult(float(values[0]), grads[0])


def batch_uir_loss(logits, stabilized=True):
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise DimensionError("rejection loss needs at least two classes")
    n = z.shape[1]
    if not stabilized:
        # -sum log p = n * lse(z) - sum z, evaluated on max-shifted logits
        zs = z - np.max(z, axis=1, keepdims=True)
        values = n * logsumexp(zs, axis=1) - np.sum(zs, axis=1)
        grad = n * softmax(z, axis=1) - 1.0
        return values, grad
    p = softmax(z, axis=1)
    # sum_i p_i == 1, so -sum log softmax(p) = n * lse(p) - 1
    values = n * logsumexp(p, axis=1) - 1.0
    grad_p = n * softmax(p, axis=1) - 1.0
    # softmax Jacobian-vector product: J^T v = p * (v - <p, v>)
    grad = p * (grad_p - np.sum(p * grad_p, axis=1, keepdims=True))
    return values, grad


def stabilized_probabilities(logits):
    """The twice-softmaxed probabilities the stabilized loss takes logs of."""
    return softmax(softmax(logits))


def combined_loss(l_sup, l_uir, weights=LossWeights()):
    """Weighted sum ``l_sup + w * l_uir``."""
    return l_sup + weights.w * l_uir
