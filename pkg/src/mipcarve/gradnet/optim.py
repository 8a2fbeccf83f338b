"""ADAM with classic L2 weight decay (decay term added to the gradient)."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError
from .network import NetState


def adam_step(state: NetState, grads: np.ndarray, tc) -> NetState:
    """One bias-corrected ADAM update; returns a new state."""
    if grads.shape != state.parameters.shape:
        raise ShapeError("gradient has %d entries, expected %d" % (grads.size, state.parameters.size))
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient at step %d" % (state.step_count + 1), code="nonfinite_gradient")
    dtype = state.parameters.dtype
    w = state.parameters
    g = grads.astype(dtype, copy=True)
    if tc.weight_decay:
        g += dtype.type(tc.weight_decay) * w
    t = state.step_count + 1
    b1, b2 = tc.beta1, tc.beta2
    m = dtype.type(b1) * state.adam_m + dtype.type(1.0 - b1) * g
    v = dtype.type(b2) * state.adam_v + dtype.type(1.0 - b2) * g * g
    m_hat = m / dtype.type(1.0 - b1**t)
    v_hat = v / dtype.type(1.0 - b2**t)
    new_w = w - dtype.type(tc.learning_rate) * m_hat / (np.sqrt(v_hat) + dtype.type(tc.adam_epsilon))
    return NetState(new_w, m, v, t, state.layout)
