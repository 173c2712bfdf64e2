"""Finite-difference verification of tape gradients.

Central differences (f(x+eps) - f(x-eps)) / (2 eps) with eps scaled per
coordinate as eps_scale * max(1, |x|), compared against the tape gradient as
a relative error.  Always runs in 64-bit.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Parameter, Tape, Tensor


def _rel_err(g: float, fd: float) -> float:
    return abs(g - fd) / max(abs(g), abs(fd), 1e-6)


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray],
               eps_scale: float = 1e-4, max_coords: Optional[int] = None,
               seed: int = 0) -> float:
    """Check d(fn)/d(inputs) against central differences.

    ``fn`` maps Tensors to a scalar Tensor and must be a pure function of its
    arguments.  Checks every coordinate, or a random subset of ``max_coords``
    per input when given.  Returns the max relative error.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in inputs]
    tape = Tape()
    ts = [tape.watch(Tensor(a.copy())) for a in arrays]
    out = fn(*ts)
    tape.backward(out)
    grads = [np.zeros_like(a) if t.grad is None else t.grad.copy()
             for t, a in zip(ts, arrays)]
    tape.release()

    def value_at(arrs) -> float:
        return float(fn(*[Tensor(a) for a in arrs]).data)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for k, a in enumerate(arrays):
        coords = np.arange(a.size)
        if max_coords is not None and a.size > max_coords:
            coords = rng.choice(a.size, size=max_coords, replace=False)
        for flat in coords:
            eps = eps_scale * max(1.0, abs(a.flat[flat]))
            plus = [arr.copy() for arr in arrays]
            minus = [arr.copy() for arr in arrays]
            plus[k].flat[flat] += eps
            minus[k].flat[flat] -= eps
            fd = (value_at(plus) - value_at(minus)) / (2.0 * eps)
            worst = max(worst, _rel_err(grads[k].flat[flat], fd))
    return worst


def grad_check_params(forward: Callable[[], Tensor],
                      params: Sequence[Parameter],
                      eps_scale: float = 1e-4,
                      max_coords_per_param: Optional[int] = None,
                      seed: int = 0) -> float:
    """Check gradients w.r.t. in-place parameters of a model forward.

    ``forward`` computes a scalar Tensor from the current parameter data;
    parameters are perturbed in place for the finite-difference evaluations
    and restored afterwards.  Returns the max relative error.
    """
    tape = Tape()
    for p in params:
        tape.watch(p.tensor)
    out = forward()
    tape.backward(out)
    grads = {p.name: (np.zeros_like(p.tensor.data) if p.tensor.grad is None
                      else p.tensor.grad.copy()) for p in params}
    tape.release()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        data = p.tensor.data
        coords = np.arange(data.size)
        if max_coords_per_param is not None and data.size > max_coords_per_param:
            coords = rng.choice(data.size, size=max_coords_per_param, replace=False)
        for flat in coords:
            orig = data.flat[flat]
            eps = eps_scale * max(1.0, abs(orig))
            data.flat[flat] = orig + eps
            f_plus = float(forward().data)
            data.flat[flat] = orig - eps
            f_minus = float(forward().data)
            data.flat[flat] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            worst = max(worst, _rel_err(grads[p.name].flat[flat], fd))
    return worst
