"""Independent reference computations used by the tests.

Nothing here imports the code paths it checks.
"""
from __future__ import annotations

import numpy as np
import torch


def central_difference_grad(f, tensors, h=1e-6):
    """Gradient of scalar ``f()`` with respect to every element of ``tensors`` by central differences."""
    grads = []
    with torch.no_grad():
        for t in tensors:
            g = torch.zeros_like(t)
            flat, gflat = t.view(-1), g.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + h
                fp = float(f())
                flat[i] = old - h
                fm = float(f())
                flat[i] = old
                gflat[i] = (fp - fm) / (2 * h)
            grads.append(g)
    return grads


def relative_error(a, b):
    a = torch.cat([x.reshape(-1) for x in a])
    b = torch.cat([x.reshape(-1) for x in b])
    return float((a - b).norm() / max(b.norm().item(), 1e-12))


def periodic_marginals(p_on, p_off, weeks=200):
    """P(occupied) at each (day of week, hour) once the weekly-periodic chain has settled."""
    p_on = np.asarray(p_on)
    p_off = np.asarray(p_off)
    m = 0.5
    out = np.zeros((7, 24))
    for _ in range(weeks):
        for d in range(7):
            for h in range(24):
                m = m * (1 - p_off[d, h]) + (1 - m) * p_on[d, h]
                out[d, h] = m
    return out


def bayes_balanced_accuracy(marginals):
    """Best balanced accuracy of a rule that sees only the cell index of each marginal.

    Cells are equally likely.  Balanced accuracy is linear in the per-cell
    decision, so predicting 1 exactly where the cell's marginal exceeds the
    overall prior is optimal; we also enumerate both tie choices.
    """
    m = np.asarray(marginals, dtype=np.float64).ravel()
    p1 = m.mean()
    pos = m.sum()
    neg = (1 - m).sum()
    pred = m >= p1
    return 0.5 * (m[pred].sum() / pos + (1 - m[~pred]).sum() / neg)
