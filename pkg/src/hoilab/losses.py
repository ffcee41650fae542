"""Multi-label sign losses and their analytic gradients.

Every loss maps a logit vector s and a sign-label vector y (entries +1
or -1) to a scalar value and the gradient d(value)/d(s).  All four
accept a single (C,) pair or a batch of shape (N, C), in which case the
value has shape (N,) and the gradient (N, C).

The headline loss aggregates the per-class margins z_i = -y_i * s_i
through a log-sum-exp with an implicit zero term:

    value = log(1 + sum_i exp(z_i))

so its gradient distributes like a softmax over class losses: classes
violating their margin the most receive almost all of it, and the total
gradient mass sum_i |grad_i| is always below 1.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "LossResult",
    "lse_sign_loss",
    "bce_loss",
    "weighted_bce_loss",
    "focal_loss",
    "get_loss",
    "positive_negative_ratio",
    "LOSS_NAMES",
]


class LossResult(NamedTuple):
    value: np.ndarray | float
    grad: np.ndarray


def _validate_pair(s, y) -> tuple[np.ndarray, np.ndarray, bool]:
    """Coerce logits/labels to float64 arrays, flagging 1-D input."""
    s_arr = np.asarray(s, dtype=np.float64)
    y_arr = np.asarray(y)
    if s_arr.ndim not in (1, 2):
        raise ValueError(f"logits must be 1-D or 2-D, got shape {s_arr.shape}")
    if s_arr.shape != y_arr.shape:
        raise ValueError(f"shape mismatch: logits {s_arr.shape} vs labels {y_arr.shape}")
    if not np.isfinite(s_arr).all():
        idx = np.argwhere(~np.isfinite(np.atleast_2d(s_arr)))[0]
        raise ValueError(f"non-finite logit at index {tuple(int(i) for i in idx)}")
    bad = (y_arr != 1) & (y_arr != -1)
    if bad.any():
        idx = np.argwhere(np.atleast_2d(bad))[0]
        raise ValueError(f"label at index {tuple(int(i) for i in idx)} is not +1 or -1")
    was_1d = s_arr.ndim == 1
    s2 = np.atleast_2d(s_arr)
    y2 = np.atleast_2d(y_arr).astype(np.float64)
    return s2, y2, was_1d


def _squeeze(value: np.ndarray, grad: np.ndarray, was_1d: bool) -> LossResult:
    if was_1d:
        return LossResult(float(value[0]), grad[0])
    return LossResult(value, grad)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Piecewise form avoids overflow in exp for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log1p_exp(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)), stable for any magnitude."""
    return np.logaddexp(0.0, x)


def lse_sign_loss(s, y) -> LossResult:
    """Log-sum-exp over signed margins with an implicit zero anchor.

    value = log(1 + sum_i exp(-y_i s_i))
    grad_i = -y_i exp(-y_i s_i) / (1 + sum_j exp(-y_j s_j))
    """
    s2, y2, was_1d = _validate_pair(s, y)
    z = -y2 * s2
    # Shift by m >= 0 so every exponent is <= 0; the zero anchor
    # becomes exp(-m) and survives the shift exactly.
    m = np.maximum(0.0, z.max(axis=1))
    shifted = np.exp(z - m[:, None])
    total = np.exp(-m) + shifted.sum(axis=1)
    value = m + np.log(total)
    grad = -y2 * shifted / total[:, None]
    return _squeeze(value, grad, was_1d)


def bce_loss(s, y) -> LossResult:
    """Independent binary cross-entropy summed over classes.

    value = sum_i log(1 + exp(-y_i s_i))
    grad_i = -y_i sigmoid(-y_i s_i)
    """
    s2, y2, was_1d = _validate_pair(s, y)
    z = -y2 * s2
    value = _log1p_exp(z).sum(axis=1)
    grad = -y2 * _sigmoid(z)
    return _squeeze(value, grad, was_1d)


def weighted_bce_loss(s, y, pos_weight) -> LossResult:
    """Binary cross-entropy with per-class weights on positive terms.

    Terms with y_i = +1 are scaled by pos_weight[i]; negative terms keep
    weight 1.  Use `positive_negative_ratio` for the conventional
    imbalance-correcting default.
    """
    s2, y2, was_1d = _validate_pair(s, y)
    w = np.asarray(pos_weight, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != s2.shape[1]:
        raise ValueError(
            f"pos_weight must have shape ({s2.shape[1]},), got {w.shape}"
        )
    if not np.isfinite(w).all() or (w <= 0).any():
        raise ValueError("pos_weight entries must be finite and positive")
    z = -y2 * s2
    factor = np.where(y2 > 0, w[None, :], 1.0)
    value = (factor * _log1p_exp(z)).sum(axis=1)
    grad = -factor * y2 * _sigmoid(z)
    return _squeeze(value, grad, was_1d)


def positive_negative_ratio(train_count: np.ndarray, n_samples: int) -> np.ndarray:
    """Per-class negative/positive count ratio; 1 where a class has no positives."""
    counts = np.asarray(train_count, dtype=np.float64)
    if (counts < 0).any() or n_samples < 0:
        raise ValueError("counts must be nonnegative")
    if (counts > n_samples).any():
        raise ValueError("per-class count exceeds the number of samples")
    return np.where(counts > 0, (n_samples - counts) / np.maximum(counts, 1.0), 1.0)


def focal_loss(s, y, gamma_f: float = 2.0, alpha: float = 0.25) -> LossResult:
    """Focal form of per-class BCE, down-weighting easy examples.

    With p_t = sigmoid(y_i s_i) and alpha_t = alpha for positives,
    1 - alpha for negatives:

        value = sum_i -alpha_t (1 - p_t)^gamma_f log(p_t)
        grad_i = y_i alpha_t (1 - p_t)^gamma_f (gamma_f p_t log(p_t) - (1 - p_t))
    """
    if not np.isfinite(gamma_f) or gamma_f < 0:
        raise ValueError(f"gamma_f must be finite and >= 0, got {gamma_f}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    s2, y2, was_1d = _validate_pair(s, y)
    t = y2 * s2
    p_t = _sigmoid(t)
    one_minus = _sigmoid(-t)
    log_pt = -_log1p_exp(-t)
    focus = one_minus**gamma_f
    alpha_t = np.where(y2 > 0, alpha, 1.0 - alpha)
    value = (-alpha_t * focus * log_pt).sum(axis=1)
    grad = y2 * alpha_t * focus * (gamma_f * p_t * log_pt - one_minus)
    return _squeeze(value, grad, was_1d)


LOSS_NAMES = ("lse_sign", "bce", "weighted_bce", "focal")


def get_loss(
    name: str,
    pos_weight: np.ndarray | None = None,
    gamma_f: float = 2.0,
    alpha: float = 0.25,
) -> Callable[..., LossResult]:
    """Look up a loss by registry name, binding its extra parameters."""
    if name == "lse_sign":
        return lse_sign_loss
    if name == "bce":
        return bce_loss
    if name == "weighted_bce":
        if pos_weight is None:
            raise ValueError("weighted_bce requires pos_weight")
        w = np.asarray(pos_weight, dtype=np.float64)
        return lambda s, y: weighted_bce_loss(s, y, w)
    if name == "focal":
        return lambda s, y: focal_loss(s, y, gamma_f=gamma_f, alpha=alpha)
    raise ValueError(f"unknown loss {name!r}; expected one of {LOSS_NAMES}")
