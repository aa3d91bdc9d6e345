"""Centered finite-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from flighttime.nn.tensor import Tensor


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-6,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
    atol: float = 1e-9,
) -> float:
    """Worst relative error between backprop and centered differences.

    `fn` must rebuild the scalar loss from scratch on every call and be
    deterministic (fix dropout masks, freeze running statistics). Relative
    error denominators are floored at `floor`; differences below `atol`
    count as agreement, since centered differences cannot resolve below the
    roundoff of the loss itself (a bias feeding batch normalization, for
    example, has a true gradient of exactly zero while its numeric estimate
    is pure noise). Coordinates may be subsampled per parameter.
    """
    for p in params:
        p.zero_grad()
    out = fn()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ana in zip(params, analytic):
        n = p.data.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            if rng is None:
                raise ValueError("rng required when subsampling coordinates")
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        flat = p.data.reshape(-1)
        for c in coords:
            orig = flat[c]
            step = h * max(1.0, abs(orig))
            flat[c] = orig + step
            f_plus = float(fn().data)
            flat[c] = orig - step
            f_minus = float(fn().data)
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = abs(numeric - ana.reshape(-1)[c])
            if err < atol:
                continue
            rel = err / max(abs(numeric), abs(ana.reshape(-1)[c]), floor)
            worst = max(worst, rel)
    return worst
