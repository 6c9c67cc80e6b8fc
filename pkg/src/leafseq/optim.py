"""Adam optimizer and gradient clipping over named parameter maps."""

import numpy as np

from .tensor import ShapeError


class AdamState:
    """First/second moment estimates plus the shared step counter.

    Moments are keyed by parameter name and zero-initialized the first time
    a name is seen, so the state can be created before the trainable set is
    known. ``t`` increments by exactly one per ``adam_step``.
    """

    def __init__(self, alpha=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.alpha = alpha
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {}
        self.v = {}


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update in place.

    ``params`` maps name -> Tensor, ``grads`` maps name -> ndarray for the
    parameters that should move this step. Returns (params, state).
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} != param shape {p.data.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** state.t)
        v_hat = v / (1.0 - b2 ** state.t)
        p.data -= state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def clip_global_norm(grads, max_norm):
    """Scale all gradients so the global L2 norm is at most ``max_norm``.

    Mutates the arrays in place; returns the pre-clip norm.
    """
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if max_norm is not None and norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
