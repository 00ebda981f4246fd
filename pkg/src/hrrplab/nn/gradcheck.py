"""Finite-difference gradient verification.

The independent oracle for every differentiable operation: central differences
of a scalar-valued function, compared coordinate-by-coordinate against the
reverse-mode gradients. Kept deliberately separate from the engine so the two
routes cannot share code.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from hrrplab.nn.autodiff import Tensor, zero_grads


def finite_difference_check(f: Callable[[], Tensor],
                            params: Sequence[Tensor],
                            epsilon: float = 1e-3) -> float:
    """Max relative error between central differences and autodiff gradients.

    ``f`` evaluates the scalar loss from the current parameter values; it is
    re-invoked with perturbed parameters, so it must read ``params`` afresh
    each call. Relative error per coordinate is
    |fd - ad| / max(|fd|, |ad|, 1e-8).
    """
    zero_grads(params)
    out = f()
    if out.data.size != 1:
        raise ValueError("finite_difference_check needs a scalar function")
    out.backward()
    worst = 0.0
    for p in params:
        ad = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + epsilon
            hi = float(f().data)
            flat[i] = keep - epsilon
            lo = float(f().data)
            flat[i] = keep
            fd = (hi - lo) / (2.0 * epsilon)
            a = float(ad.reshape(-1)[i])
            err = abs(fd - a) / max(abs(fd), abs(a), 1e-8)
            worst = max(worst, err)
    return worst
