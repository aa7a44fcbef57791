"""Pure numpy LSTM recurrence, used when the compiled kernel is unavailable.

Both entry points share their signatures with ``_lstm_kernels.pyx``. The
input projection ``x @ W + b`` is done by the caller in one matmul, so only
the sequential part lives here.

Gate layout along the last axis is (input, forget, cell, output).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def lstm_forward(xproj, U, hmask, reverse):
    """Run the recurrence over time.

    xproj:  (B, T, 4H) input projections including bias.
    U:      (H, 4H) recurrent weights.
    hmask:  (B, H) multiplicative mask on the previous hidden state.

    Returns ``(h, c, gates, hprev)`` indexed by time position: hidden and
    cell states after each step, activated gates, and the masked previous
    hidden state that entered each step.
    """
    B, T, G = xproj.shape
    H = G // 4
    h = np.empty((B, T, H))
    c = np.empty((B, T, H))
    gates = np.empty((B, T, G))
    hprev = np.empty((B, T, H))
    h_t = np.zeros((B, H))
    c_t = np.zeros((B, H))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        hm = h_t * hmask
        hprev[:, t] = hm
        z = xproj[:, t] + hm @ U
        i = expit(z[:, :H])
        f = expit(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = expit(z[:, 3 * H:])
        c_t = f * c_t + i * g
        h_t = o * np.tanh(c_t)
        gates[:, t, :H] = i
        gates[:, t, H:2 * H] = f
        gates[:, t, 2 * H:3 * H] = g
        gates[:, t, 3 * H:] = o
        c[:, t] = c_t
        h[:, t] = h_t
    return h, c, gates, hprev


def lstm_backward(dh_ext, gates, c, U, hmask, reverse):
    """Backpropagate through the recurrence.

    dh_ext is the gradient arriving at each hidden output, shape (B, T, H).
    Returns the gradient with respect to the pre-activation gates, (B, T, 4H),
    which equals the gradient with respect to ``xproj``.
    """
    B, T, G = gates.shape
    H = G // 4
    dz = np.empty((B, T, G))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    zeros = np.zeros((B, H))
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        t_prev = t + 1 if reverse else t - 1
        c_prev = c[:, t_prev] if 0 <= t_prev < T else zeros
        i = gates[:, t, :H]
        f = gates[:, t, H:2 * H]
        g = gates[:, t, 2 * H:3 * H]
        o = gates[:, t, 3 * H:]
        tc = np.tanh(c[:, t])
        dh = dh_ext[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz[:, t, :H] = dc * g * i * (1.0 - i)
        dz[:, t, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, t, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, t, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = (dz[:, t] @ U.T) * hmask
    return dz
