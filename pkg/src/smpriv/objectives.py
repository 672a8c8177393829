"""Training losses and evaluation metrics.

Losses operate on torch tensors and stay differentiable; entropies and
log-likelihoods are in nats.  Batches are ``(B, T)``: every expectation is a
batch mean of per-sequence time averages.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import torch
from scipy.special import entr

from .types import ConfusionCounts

PROB_FLOOR = 1e-7


@dataclass(frozen=True)
class LossReport:
    """Releaser loss split into its three additive parts.

    Fields are 0-d tensors while training; :meth:`to_floats` detaches them.
    """

    total: torch.Tensor
    distortion_term: torch.Tensor
    privacy_term: torch.Tensor
    regularization_term: torch.Tensor

    def to_floats(self) -> "LossReport":
        vals = (self.total, self.distortion_term, self.privacy_term, self.regularization_term)
        return LossReport(*(v.item() if isinstance(v, torch.Tensor) else float(v) for v in vals))


def _as_tensor(a) -> torch.Tensor:
    if isinstance(a, torch.Tensor):
        return a
    return torch.as_tensor(np.asarray(a, dtype=np.float64))


def _check_probs(q: torch.Tensor) -> None:
    if torch.isnan(q).any() or (q < 0).any() or (q > 1).any():
        raise ValueError("probabilities must lie in [0, 1]")


def distortion(z, y) -> torch.Tensor:
    """Batch mean of the per-sequence squared error, divided by T."""
    z, y = _as_tensor(z), _as_tensor(y)
    if z.shape != y.shape:
        raise ValueError(f"shape mismatch: z {tuple(z.shape)} vs y {tuple(y.shape)}")
    if z.ndim == 1:
        z, y = z[None], y[None]
    return ((z - y) ** 2).sum(dim=-1).mean() / z.shape[-1]


def log_prob_of_labels(q, x) -> torch.Tensor:
    """Elementwise ``log q`` where ``x = 1`` and ``log(1 - q)`` where ``x = 0``.

    The probability assigned to the true label is floored at 1e-7 before the
    log so a confidently wrong prediction stays finite.
    """
    q, x = _as_tensor(q), _as_tensor(x)
    _check_probs(q)
    if q.shape != x.shape:
        raise ValueError(f"shape mismatch: q {tuple(q.shape)} vs x {tuple(x.shape)}")
    x = x.to(q.dtype)
    p_true = x * q + (1 - x) * (1 - q)
    return torch.log(p_true.clamp(min=PROB_FLOOR))


def adversary_loss(q, x) -> torch.Tensor:
    """Mean negative log-likelihood of the true labels."""
    ll = log_prob_of_labels(q, x)
    if ll.ndim == 1:
        ll = ll[None]
    return -ll.mean(dim=-1).mean()


def binary_entropy(p):
    """``-p ln p - (1-p) ln(1-p)`` with ``0 ln 0 = 0``.

    Tensors stay tensors (differentiable); anything else goes through numpy.
    """
    if isinstance(p, torch.Tensor):
        _check_probs(p)
        return -(torch.xlogy(p, p) + torch.xlogy(1 - p, 1 - p))
    arr = np.asarray(p, dtype=np.float64)
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    out = entr(arr) + entr(1 - arr)
    return float(out) if out.ndim == 0 else out


def ridge_penalty(params: Iterable[torch.Tensor] | None, beta: float) -> torch.Tensor:
    """``beta`` times the mean squared parameter value over all given tensors."""
    params = [p for p in (params or []) if p.numel()]
    if beta == 0 or not params:
        dtype = params[0].dtype if params else torch.float64
        return torch.zeros((), dtype=dtype)
    sq = sum(p.pow(2).sum() for p in params)
    n = sum(p.numel() for p in params)
    return beta * sq / n


def cal_releaser_loss(z, y, q, x, lam: float, beta: float = 0.0, params=None) -> LossReport:
    """Distortion plus ``lam`` times the adversary's mean log-likelihood of the truth."""
    d = distortion(z, y)
    ll = log_prob_of_labels(q, x)
    if ll.ndim == 1:
        ll = ll[None]
    priv = lam * ll.mean(dim=-1).mean()
    reg = ridge_penalty(params, beta).to(d.dtype)
    return LossReport(d + priv + reg, d, priv, reg)


def di_releaser_loss(z, y, q, lam: float, beta: float = 0.0, params=None) -> LossReport:
    """Distortion minus ``lam`` times the adversary's mean predictive entropy.

    ``q`` is clamped to [1e-7, 1 - 1e-7] first: the entropy gradient is
    infinite at 0 and 1.
    """
    d = distortion(z, y)
    q = _as_tensor(q)
    _check_probs(q)
    h = binary_entropy(q.clamp(PROB_FLOOR, 1 - PROB_FLOOR))
    if h.ndim == 1:
        h = h[None]
    priv = -lam * h.mean(dim=-1).mean()
    reg = ridge_penalty(params, beta).to(d.dtype)
    return LossReport(d + priv + reg, d, priv, reg)


# --------------------------------------------------------------------------
# evaluation metrics (numpy)

def ne2(z, y) -> float:
    """Normalised L2 error: mean per-sequence ``||y - z||`` over mean ``||y||``."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if z.shape != y.shape:
        raise ValueError(f"shape mismatch: z {z.shape} vs y {y.shape}")
    denom = np.linalg.norm(y, axis=-1).mean()
    if denom == 0:
        raise ValueError("E[||Y||] is zero; NE2 undefined")
    return float(np.linalg.norm(y - z, axis=-1).mean() / denom)


def balanced_accuracy(c: ConfusionCounts) -> float:
    """Mean of the two per-class recalls."""
    n1 = c.c11 + c.c12
    n2 = c.c21 + c.c22
    if n1 == 0 or n2 == 0:
        raise ValueError("balanced accuracy needs both classes present")
    return 0.5 * (c.c11 / n1 + c.c22 / n2)


def multiclass_balanced_accuracy(y_true, y_pred) -> float:
    """Mean per-class recall over the classes present in ``y_true``."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    classes = np.unique(y_true)
    return float(np.mean([np.mean(y_pred[y_true == c] == c) for c in classes]))
