"""Finite-difference verification of analytic gradients."""

import numpy as np

from .tensor import ContractError, Graph, NumericError, Tensor, backward


def grad_check(fn, point, eps=1e-5):
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` maps one or more Tensors to a scalar Tensor. ``point`` is a
    Tensor or a list of Tensors at which to differentiate; each must have
    requires_grad set. Returns the maximum over all coordinates of

        |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)

    The numeric side re-evaluates ``fn`` with single coordinates displaced
    by +/- eps, so it is independent of the tape machinery it checks.
    """
    if eps <= 0:
        raise ContractError("grad_check: eps must be positive")
    tensors = [point] if isinstance(point, Tensor) else list(point)
    for t in tensors:
        if not t.requires_grad:
            raise ContractError("grad_check: every point tensor must require grad")

    with Graph() as g:
        loss = fn(*tensors)
    if loss.data.size != 1:
        raise ContractError(f"grad_check: fn must return a scalar, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericError("grad_check: fn produced a non-finite value at the point")
    grad_map = backward(g, loss)

    worst = 0.0
    for t in tensors:
        analytic = grad_map.get(t)
        if analytic is None:
            analytic = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(fn(*tensors).data.reshape(-1)[0])
            flat[i] = orig - eps
            f_minus = float(fn(*tensors).data.reshape(-1)[0])
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError("grad_check: non-finite value during finite differencing")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic.reshape(-1)[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    # .grad was touched by the analytic pass; leave the tensors clean
    for t in tensors:
        t.grad = None
    return worst
