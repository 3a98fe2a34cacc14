"""Central finite-difference gradient checking for the float64 shadow path.

The finite-difference side uses only forward passes, so it stays independent
of the analytic backward implementation it verifies.
"""
from __future__ import annotations

import numpy as np

from .layers import Param


def central_difference(loss_fn, param: Param, flat_index: int, h: float) -> float:
    """d loss / d param[flat_index] by central differences; restores the value."""
    flat = param.value.reshape(-1)
    saved = flat[flat_index]
    flat[flat_index] = saved + h
    lp = loss_fn()
    flat[flat_index] = saved - h
    lm = loss_fn()
    flat[flat_index] = saved
    return (lp - lm) / (2.0 * h)


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_param_grads(loss_fn, params: list[Param], rng: np.random.Generator,
                      samples_per_tensor: int = 16, h: float = 1e-5,
                      refine_h: float = 1e-7, refine_at: float = 1e-3):
    """Compare analytic grads (already in param.grad) against finite differences.

    Samples up to `samples_per_tensor` entries of every parameter tensor.
    Returns a list of (param_name, flat_index, analytic, numeric, rel_err).

    With ReLU kinks in the graph, a pre-activation within h of zero makes the
    two-sided quotient see two different linear pieces, so a correct gradient
    can still show a large error at the default step. Entries whose error at h
    exceeds `refine_at` are re-measured at `refine_h`: a straddled kink
    collapses under the tighter step, a wrong gradient does not. Float64 keeps
    roundoff harmless at both step sizes.
    """
    rows = []
    for p in params:
        size = p.value.size
        k = min(samples_per_tensor, size)
        idx = rng.choice(size, size=k, replace=False)
        analytic_flat = p.grad.reshape(-1)
        for i in idx:
            num = central_difference(loss_fn, p, int(i), h)
            ana = float(analytic_flat[int(i)])
            rel = relative_error(ana, num)
            if rel > refine_at and refine_h < h:
                num = central_difference(loss_fn, p, int(i), refine_h)
                rel = relative_error(ana, num)
            rows.append((p.name, int(i), ana, num, rel))
    return rows
