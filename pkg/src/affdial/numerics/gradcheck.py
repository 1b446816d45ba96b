"""Finite-difference verification of analytic gradients.

The checker re-evaluates a scalar-valued forward function with each
parameter entry nudged up and down (central differences) and compares
the slope against the accumulated analytic gradient.  Relative error
uses a floor so near-zero gradients do not divide by dust:

    rel = |a - n| / max(|a|, |n|, floor)

Checking every entry is quadratic in parameter count, so callers may
subsample entries per parameter; sampling is seeded and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, backward, zero_grads


@dataclass
class GradCheckReport:
    """Worst-case and per-parameter summary of one gradient check."""

    max_rel_err: float
    worst_param: str
    n_checked: int
    failures: list[tuple[str, int, float]] = field(default_factory=list)
    per_param: dict[str, float] = field(default_factory=dict)

    def ok(self, tol: float) -> bool:
        return self.max_rel_err < tol


def grad_check(
    forward_fn,
    params: dict[str, Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_entries_per_param: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of ``forward_fn()`` to central differences.

    forward_fn must close over ``params`` and return a scalar Tensor.
    Every call re-runs the full forward, so the function must be
    deterministic.  Entries with max_entries_per_param set are sampled
    without replacement per parameter.
    """
    zero_grads(params)
    loss = forward_fn()
    backward(loss)
    analytic = {
        k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for k, p in params.items()
    }

    rng = np.random.default_rng(seed)
    floor = eps
    worst = 0.0
    worst_name = ""
    failures: list[tuple[str, int, float]] = []
    per_param: dict[str, float] = {}
    n_checked = 0

    for name, p in params.items():
        flat = p.data.reshape(-1)
        size = flat.size
        if max_entries_per_param is not None and size > max_entries_per_param:
            idxs = np.sort(rng.choice(size, size=max_entries_per_param, replace=False))
        else:
            idxs = np.arange(size)
        a_flat = analytic[name].reshape(-1)
        param_worst = 0.0
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(forward_fn().data)
            flat[i] = orig - eps
            down = float(forward_fn().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = float(a_flat[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            n_checked += 1
            if rel > param_worst:
                param_worst = rel
            if rel > worst:
                worst = rel
                worst_name = name
            if rel >= tol:
                failures.append((name, int(i), rel))
        per_param[name] = param_worst

    return GradCheckReport(
        max_rel_err=worst,
        worst_param=worst_name,
        n_checked=n_checked,
        failures=failures,
        per_param=per_param,
    )
