"""Node kinds understood by the graph evaluator.

Every kind registers a forward rule ``(xs, ps, attrs, ctx) -> (out, cache)``
and a backward rule ``(dout, cache, need) -> (dxs, dps)``, where ``need[i]``
says whether input ``i`` wants a gradient (``None`` is returned otherwise).
Forward rules raise :class:`ShapeError` without node information; the
evaluator attaches the node id.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import expit

from ..errors import ShapeError
from . import kernels


@dataclass(frozen=True)
class OpDef:
    forward: Callable
    backward: Callable
    stochastic: bool = False


OPS: dict[str, OpDef] = {}


def register(kind: str, forward: Callable, backward: Callable, stochastic: bool = False) -> None:
    OPS[kind] = OpDef(forward, backward, stochastic)


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise ShapeError(message)


# -- affine maps -------------------------------------------------------------

def _dense_fwd(xs, ps, attrs, ctx):
    (x,) = xs
    W, b = ps
    _expect(W.ndim == 2 and b.shape == (W.shape[1],), f"bad dense parameters {W.shape}, {b.shape}")
    _expect(x.shape[-1] == W.shape[0], f"input width {x.shape[-1]} != weight rows {W.shape[0]}")
    return x @ W + b, (x, W)


def _dense_bwd(dout, cache, need):
    x, W = cache
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    dW = x2.T @ d2
    db = d2.sum(axis=0)
    dx = dout @ W.T if need[0] else None
    return [dx], [dW, db]


def _filterbank_fwd(xs, ps, attrs, ctx):
    # A bank of full-size 2-D filters over an HxW map collapses each map to
    # one value per filter, i.e. an affine map of the flattened input.
    (x,) = xs
    W, b = ps
    h, w, f = W.shape
    _expect(x.shape[-1] == h * w, f"expected {h}x{w}={h * w} flattened values, got {x.shape[-1]}")
    W2 = W.reshape(h * w, f)
    return x @ W2 + b, (x, W2, W.shape)


def _filterbank_bwd(dout, cache, need):
    x, W2, wshape = cache
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    dW = (x2.T @ d2).reshape(wshape)
    db = d2.sum(axis=0)
    dx = dout @ W2.T if need[0] else None
    return [dx], [dW, db]


register("dense", _dense_fwd, _dense_bwd)
register("filterbank2d", _filterbank_fwd, _filterbank_bwd)


# -- elementwise -------------------------------------------------------------

def _relu_fwd(xs, ps, attrs, ctx):
    out = np.maximum(xs[0], 0.0)
    return out, out


def _relu_bwd(dout, out, need):
    return [dout * (out > 0.0)], []


def _tanh_fwd(xs, ps, attrs, ctx):
    y = np.tanh(xs[0])
    return y, y


def _tanh_bwd(dout, y, need):
    return [dout * (1.0 - y * y)], []


def _sigmoid_fwd(xs, ps, attrs, ctx):
    y = expit(xs[0])
    return y, y


def _sigmoid_bwd(dout, y, need):
    return [dout * y * (1.0 - y)], []


def _mul_fwd(xs, ps, attrs, ctx):
    a, b = xs
    _expect(a.shape == b.shape, f"mul operands differ in shape: {a.shape} vs {b.shape}")
    return a * b, (a, b)


def _mul_bwd(dout, cache, need):
    a, b = cache
    return [dout * b if need[0] else None, dout * a if need[1] else None], []


def _param_fwd(xs, ps, attrs, ctx):
    return ps[0], None


def _param_bwd(dout, cache, need):
    return [], [dout]


register("param", _param_fwd, _param_bwd)
register("relu", _relu_fwd, _relu_bwd)
register("tanh", _tanh_fwd, _tanh_bwd)
register("sigmoid", _sigmoid_fwd, _sigmoid_bwd)
register("mul", _mul_fwd, _mul_bwd)


# -- structure ---------------------------------------------------------------

def _concat_fwd(xs, ps, attrs, ctx):
    lead = xs[0].shape[:-1]
    for x in xs[1:]:
        _expect(x.shape[:-1] == lead, f"cannot concatenate {xs[0].shape} with {x.shape} on the last axis")
    widths = [x.shape[-1] for x in xs]
    return np.concatenate(xs, axis=-1), widths


def _concat_bwd(dout, widths, need):
    bounds = np.cumsum([0] + widths)
    return [dout[..., bounds[i]:bounds[i + 1]] if need[i] else None for i in range(len(widths))], []


def _dropout_fwd(xs, ps, attrs, ctx):
    (x,) = xs
    rate = attrs.get("rate", 0.5)
    if not ctx.training or rate <= 0.0:
        return x, None
    if rate >= 1.0:
        return np.zeros_like(x), np.zeros_like(x)
    mask = (ctx.rng().random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def _dropout_bwd(dout, mask, need):
    return [dout if mask is None else dout * mask], []


def _reduce_fwd(xs, ps, attrs, ctx, mean):
    (x,) = xs
    axis = attrs.get("axis")
    out = x.mean(axis=axis) if mean else x.sum(axis=axis)
    return np.asarray(out, dtype=np.float64), (x.shape, axis)


def _reduce_bwd(dout, cache, need, mean):
    shape, axis = cache
    if axis is None:
        dx = np.full(shape, float(dout))
        n = int(np.prod(shape))
    else:
        dx = np.broadcast_to(np.expand_dims(dout, axis), shape).copy()
        n = shape[axis]
    if mean:
        dx /= n
    return [dx], []


register("concat", _concat_fwd, _concat_bwd)
register("dropout", _dropout_fwd, _dropout_bwd, stochastic=True)
register("sum", lambda xs, ps, a, c: _reduce_fwd(xs, ps, a, c, False), lambda d, c, n: _reduce_bwd(d, c, n, False))
register("mean", lambda xs, ps, a, c: _reduce_fwd(xs, ps, a, c, True), lambda d, c, n: _reduce_bwd(d, c, n, True))


# -- temporal convolution and pooling -----------------------------------------

def _conv1d_fwd(xs, ps, attrs, ctx):
    (x,) = xs
    W, b = ps
    _expect(x.ndim == 3, f"conv1d expects (batch, time, channels), got {x.shape}")
    K, C, F = W.shape
    _expect(x.shape[2] == C, f"conv1d expects {C} channels, got {x.shape[2]}")
    B, T, _ = x.shape
    left = (K - 1) // 2
    # im2col filled in place; out-of-range taps stay zero ("same" padding)
    cols = np.zeros((B, T, K * C))
    for k in range(K):
        shift = k - left
        lo, hi = max(0, -shift), min(T, T - shift)
        if lo < hi:
            cols[:, lo:hi, k * C:(k + 1) * C] = x[:, lo + shift:hi + shift, :]
    W2 = W.reshape(K * C, F)
    out = cols.reshape(-1, K * C) @ W2
    out += b
    return out.reshape(B, T, F), (cols, W2, W.shape, left, T)


def _conv1d_bwd(dout, cache, need):
    cols, W2, (K, C, F), left, T = cache
    B = dout.shape[0]
    d2 = dout.reshape(-1, F)
    dW = (cols.reshape(-1, K * C).T @ d2).reshape(K, C, F)
    db = d2.sum(axis=0)
    dx = None
    if need[0]:
        dcols = (d2 @ W2.T).reshape(B, T, K, C)
        dx = np.zeros((B, T, C))
        for k in range(K):
            shift = k - left
            lo, hi = max(0, -shift), min(T, T - shift)
            if lo < hi:
                dx[:, lo + shift:hi + shift, :] += dcols[:, lo:hi, k, :]
    return [dx], [dW, db]


def _maxpool_fwd(xs, ps, attrs, ctx):
    (x,) = xs
    _expect(x.ndim == 3 and x.shape[1] >= 2, f"maxpool1d expects (batch, time>=2, channels), got {x.shape}")
    n = x.shape[1] // 2
    a, b = x[:, 0:2 * n:2], x[:, 1:2 * n:2]
    # ties route the gradient to the first element of the window
    return np.maximum(a, b), (a >= b, x.shape)


def _maxpool_bwd(dout, cache, need):
    first, shape = cache
    B, n, C = first.shape
    dx = np.zeros(shape)
    pairs = dx[:, :2 * n].reshape(B, n, 2, C)
    np.multiply(dout, first, out=pairs[:, :, 0])
    np.multiply(dout, ~first, out=pairs[:, :, 1])
    return [dx], []


register("conv1d", _conv1d_fwd, _conv1d_bwd)
register("maxpool1d", _maxpool_fwd, _maxpool_bwd)


# -- recurrent ---------------------------------------------------------------

def _lstm_direction_fwd(x, W, U, b, reverse, in_rate, rec_rate, ctx):
    B, T, D = x.shape
    G = W.shape[1]
    H = G // 4
    _expect(W.shape == (D, G) and U.shape == (H, G) and b.shape == (G,) and G == 4 * H,
            f"bad LSTM parameter shapes W{W.shape} U{U.shape} b{b.shape} for input width {D}")
    xmask = None
    if ctx.training and in_rate > 0.0:
        xmask = np.zeros((B, D)) if in_rate >= 1.0 else (ctx.rng().random((B, D)) >= in_rate) / (1.0 - in_rate)
        xm = x * xmask[:, None, :]
    else:
        xm = x
    hmask = np.ones((B, H))
    if ctx.training and rec_rate > 0.0:
        hmask = np.zeros((B, H)) if rec_rate >= 1.0 else (ctx.rng().random((B, H)) >= rec_rate) / (1.0 - rec_rate)
    xproj = np.ascontiguousarray(xm @ W + b)
    h, c, gates, hprev = kernels.lstm_forward(xproj, U, hmask, reverse)
    return h, (xm, xmask, W, U, hmask, c, gates, hprev, reverse)


def _lstm_direction_bwd(dh, cache, need_x):
    xm, xmask, W, U, hmask, c, gates, hprev, reverse = cache
    dz = kernels.lstm_backward(np.ascontiguousarray(dh), gates, c, U, hmask, reverse)
    G = dz.shape[-1]
    dz2 = dz.reshape(-1, G)
    dW = xm.reshape(-1, xm.shape[-1]).T @ dz2
    dU = hprev.reshape(-1, hprev.shape[-1]).T @ dz2
    db = dz2.sum(axis=0)
    dx = None
    if need_x:
        dx = dz @ W.T
        if xmask is not None:
            dx *= xmask[:, None, :]
    return dx, dW, dU, db


def _readout(h, reverse, sequences):
    if sequences:
        return h
    return h[:, 0] if reverse else h[:, -1]


def _spread(dout, shape, reverse, sequences):
    if sequences:
        return dout
    dh = np.zeros(shape)
    dh[:, 0 if reverse else -1] = dout
    return dh


def _lstm_fwd(xs, ps, attrs, ctx):
    (x,) = xs
    _expect(x.ndim == 3, f"lstm expects (batch, time, features), got {x.shape}")
    reverse = attrs.get("reverse", False)
    seq = attrs.get("return_sequences", False)
    h, cache = _lstm_direction_fwd(x, *ps, reverse, attrs.get("input_dropout", 0.0),
                                   attrs.get("recurrent_dropout", 0.0), ctx)
    return _readout(h, reverse, seq), (cache, h.shape, reverse, seq)


def _lstm_bwd(dout, cache, need):
    inner, hshape, reverse, seq = cache
    dx, dW, dU, db = _lstm_direction_bwd(_spread(dout, hshape, reverse, seq), inner, need[0])
    return [dx], [dW, dU, db]


def _bilstm_fwd(xs, ps, attrs, ctx):
    (x,) = xs
    _expect(x.ndim == 3, f"bilstm expects (batch, time, features), got {x.shape}")
    seq = attrs.get("return_sequences", False)
    in_rate = attrs.get("input_dropout", 0.0)
    rec_rate = attrs.get("recurrent_dropout", 0.0)
    hf, cf = _lstm_direction_fwd(x, *ps[:3], False, in_rate, rec_rate, ctx)
    hb, cb = _lstm_direction_fwd(x, *ps[3:], True, in_rate, rec_rate, ctx)
    out = np.concatenate([_readout(hf, False, seq), _readout(hb, True, seq)], axis=-1)
    return out, (cf, cb, hf.shape, seq)


def _bilstm_bwd(dout, cache, need):
    cf, cb, hshape, seq = cache
    H = hshape[-1]
    dxf, dWf, dUf, dbf = _lstm_direction_bwd(_spread(dout[..., :H], hshape, False, seq), cf, need[0])
    dxb, dWb, dUb, dbb = _lstm_direction_bwd(_spread(dout[..., H:], hshape, True, seq), cb, need[0])
    dx = dxf + dxb if need[0] else None
    return [dx], [dWf, dUf, dbf, dWb, dUb, dbb]


register("lstm", _lstm_fwd, _lstm_bwd, stochastic=True)
register("bilstm", _bilstm_fwd, _bilstm_bwd, stochastic=True)


def describe() -> dict[str, Any]:
    """Registered kinds and whether they consume randomness."""
    return {k: {"stochastic": op.stochastic} for k, op in sorted(OPS.items())}
