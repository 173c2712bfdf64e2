"""Neural-network operations on Tensors: convolutions, LSTM, norms, linear.

Convolutions use the cross-correlation convention (no kernel flip).  All ops
define exact backward rules; the heavy lifting is three shared numpy kernels
(im2col forward, kernel-position scatter, im2col weight gradient) so that the
transposed convolution is the exact adjoint of the forward convolution.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import (Tensor, _as_tensor, _emit, add, concat, mul, reshape,
                     sigmoid, slice_, tanh)


def _im2col(x_pad: np.ndarray, kT: int, kF: int, sT: int, sF: int):
    """[B,C,Tp,Fp] -> ([B*To*Fo, C*kT*kF], To, Fo)."""
    B, C, Tp, Fp = x_pad.shape
    To = (Tp - kT) // sT + 1
    Fo = (Fp - kF) // sF + 1
    win = sliding_window_view(x_pad, (kT, kF), axis=(2, 3))[:, :, ::sT, ::sF]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * To * Fo, C * kT * kF)
    return np.ascontiguousarray(cols), To, Fo


def _corr_forward(x_pad: np.ndarray, w: np.ndarray, sT: int, sF: int):
    """Cross-correlate padded input with w[O,C,kT,kF]; returns (out, cols)."""
    O = w.shape[0]
    cols, To, Fo = _im2col(x_pad, w.shape[2], w.shape[3], sT, sF)
    out = cols @ w.reshape(O, -1).T
    out = np.ascontiguousarray(
        out.reshape(x_pad.shape[0], To, Fo, O).transpose(0, 3, 1, 2))
    return out, cols


def _adjoint_corr(g: np.ndarray, w: np.ndarray, sT: int, sF: int,
                  bT: int, bF: int) -> np.ndarray:
    """Adjoint of _corr_forward: buf[b,c,t*sT+i,f*sF+j] += g[b,o,t,f]*w[o,c,i,j].

    Implemented as a stride-1 correlation of the zero-dilated g with the
    spatially flipped, channel-swapped kernel, so it reduces to one GEMM.
    The buffer may extend past the last touched position (output padding).
    """
    B, O, To, Fo = g.shape
    kT, kF = w.shape[2], w.shape[3]
    dT, dF = (To - 1) * sT + 1, (Fo - 1) * sF + 1
    if bT < dT + kT - 1 or bF < dF + kF - 1:
        raise ValueError("adjoint buffer smaller than the scattered extent")
    gd = np.zeros((B, O, bT + kT - 1, bF + kF - 1), dtype=g.dtype)
    gd[:, :, kT - 1:kT - 1 + dT:sT, kF - 1:kF - 1 + dF:sF] = g
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    out, _ = _corr_forward(gd, w_flip, 1, 1)
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride=(1, 1), padding=(0, 0)) -> Tensor:
    """2-D cross-correlation, NCHW layout with (time, freq) spatial axes.

    Output size per axis: floor((n + 2p - k) / s) + 1.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    sT, sF = stride
    pT, pF = padding
    O, Cw, kT, kF = weight.data.shape
    B, C, T, F = x.data.shape
    if C != Cw:
        raise ValueError(
            f"conv2d: input channels {x.data.shape} do not match weight {weight.data.shape}")
    if kT < 1 or kF < 1 or sT < 1 or sF < 1:
        raise ValueError("conv2d: kernel and stride must be >= 1")
    if T + 2 * pT < kT or F + 2 * pF < kF:
        raise ValueError(
            f"conv2d: padded input ({T + 2 * pT}, {F + 2 * pF}) smaller than kernel ({kT}, {kF})")
    x_pad = np.pad(x.data, ((0, 0), (0, 0), (pT, pT), (pF, pF)))
    out, cols = _corr_forward(x_pad, weight.data, sT, sF)
    inputs = [x, weight]
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.data.shape != (O,):
            raise ValueError(f"conv2d: bias shape {bias.data.shape} != ({O},)")
        out += bias.data[None, :, None, None]
        inputs.append(bias)
    wd = weight.data
    Tp, Fp = x_pad.shape[2], x_pad.shape[3]

    def bwd(g):
        gw = (g.transpose(0, 2, 3, 1).reshape(-1, O).T @ cols).reshape(wd.shape)
        gx_pad = _adjoint_corr(g, wd, sT, sF, Tp, Fp)
        gx = gx_pad[:, :, pT:pT + T, pF:pF + F]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _emit(inputs, out, bwd)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                     stride=(1, 1), padding=(0, 0), output_padding=(0, 0)) -> Tensor:
    """Transposed 2-D convolution; the adjoint of conv2d with the same weight.

    Weight layout [C_in, C_out, kT, kF].  Output size per axis:
    (n - 1)*s - 2p + k + output_padding, with output_padding < stride.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv_transpose2d expects 4-D input and weight")
    sT, sF = stride
    pT, pF = padding
    oT, oF = output_padding
    I, O, kT, kF = weight.data.shape
    B, C, T, F = x.data.shape
    if C != I:
        raise ValueError(
            f"conv_transpose2d: input channels {x.data.shape} do not match weight {weight.data.shape}")
    if oT >= sT or oF >= sF:
        raise ValueError(
            f"conv_transpose2d: output_padding {(oT, oF)} must be < stride {(sT, sF)}")
    bT = (T - 1) * sT + kT + oT
    bF = (F - 1) * sF + kF + oF
    Tout, Fout = bT - 2 * pT, bF - 2 * pF
    if Tout < 1 or Fout < 1:
        raise ValueError("conv_transpose2d: padding consumes the whole output")
    buf = _adjoint_corr(x.data, weight.data, sT, sF, bT, bF)
    out = np.ascontiguousarray(buf[:, :, pT:bT - pT, pF:bF - pF])
    inputs = [x, weight]
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.data.shape != (O,):
            raise ValueError(f"conv_transpose2d: bias shape {bias.data.shape} != ({O},)")
        out += bias.data[None, :, None, None]
        inputs.append(bias)
    xd, wd = x.data, weight.data

    def bwd(g):
        gbuf = np.pad(g, ((0, 0), (0, 0), (pT, pT), (pF, pF)))
        gx, cols = _corr_forward(gbuf, wd, sT, sF)
        gw = (xd.transpose(0, 2, 3, 1).reshape(-1, I).T @ cols).reshape(wd.shape)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _emit(inputs, out, bwd)


def pad2d(x: Tensor, time_pad=(0, 0), freq_pad=(0, 0)) -> Tensor:
    """Zero-pad the two trailing axes of a [B,C,T,F] tensor (per-side amounts)."""
    x = _as_tensor(x)
    t0, t1 = time_pad
    f0, f1 = freq_pad
    out = np.pad(x.data, ((0, 0), (0, 0), (t0, t1), (f0, f1)))
    T, F = x.data.shape[2], x.data.shape[3]

    def bwd(g):
        return (g[:, :, t0:t0 + T, f0:f0 + F],)

    return _emit([x], out, bwd)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map on the last axis: y = x @ weight.T + bias, weight [D_out, D_in]."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if weight.data.ndim != 2 or x.data.shape[-1] != weight.data.shape[1]:
        raise ValueError(
            f"linear: inner dimensions do not match, input {x.data.shape} "
            f"vs weight {weight.data.shape}")
    Dout, Din = weight.data.shape
    lead = x.data.shape[:-1]
    xflat = x.data.reshape(-1, Din)
    out = xflat @ weight.data.T
    inputs = [x, weight]
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.data.shape != (Dout,):
            raise ValueError(f"linear: bias shape {bias.data.shape} != ({Dout},)")
        out += bias.data
        inputs.append(bias)
    wd = weight.data

    def bwd(g):
        gflat = g.reshape(-1, Dout)
        gx = (gflat @ wd).reshape(lead + (Din,))
        gw = gflat.T @ xflat
        if bias is None:
            return gx, gw
        return gx, gw, gflat.sum(axis=0)

    return _emit(inputs, out.reshape(lead + (Dout,)), bwd)


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """PReLU with one learnable slope per channel (axis 1)."""
    x, slope = _as_tensor(x), _as_tensor(slope)
    C = x.data.shape[1]
    if slope.data.shape != (C,):
        raise ValueError(f"prelu: slope shape {slope.data.shape} != ({C},)")
    xd = x.data
    a = slope.data.reshape((1, C) + (1,) * (xd.ndim - 2))
    negmask = xd < 0
    out = np.where(negmask, a * xd, xd)
    red_axes = (0,) + tuple(range(2, xd.ndim))

    def bwd(g):
        gx = g * np.where(negmask, a, np.asarray(1.0, dtype=xd.dtype))
        ga = (g * np.where(negmask, xd, np.asarray(0.0, dtype=xd.dtype))).sum(axis=red_axes)
        return gx, ga

    return _emit([x, slope], out, bwd)


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor,
                running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (B, T, F).

    Train mode normalizes by batch statistics and updates the running buffers
    in place (exponential moving average, unbiased variance).  Eval mode uses
    the running buffers; before any update they hold mean 0 / var 1.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    xd = x.data
    B, C, T, F = xd.shape
    if gamma.data.shape != (C,) or beta.data.shape != (C,):
        raise ValueError("batchnorm2d: gamma/beta must be per-channel vectors")
    axes = (0, 2, 3)
    if training:
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        n = B * T * F
        unbiased = var * (n / (n - 1)) if n > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mu = running_mean.astype(xd.dtype)
        var = running_var.astype(xd.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    bshape = (1, C, 1, 1)
    xhat = (xd - mu.reshape(bshape)) * inv.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)
    gd = gamma.data
    n_red = B * T * F

    def bwd(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        coeff = (gd * inv).reshape(bshape)
        if training:
            gmean = g.mean(axis=axes).reshape(bshape)
            gxhat_mean = (g * xhat).mean(axis=axes).reshape(bshape)
            gx = coeff * (g - gmean - xhat * gxhat_mean)
        else:
            gx = coeff * g
        return gx, ggamma, gbeta

    return _emit([x, gamma, beta], out, bwd)


def lstm_forward(x: Tensor, layers: Sequence[tuple], hidden: int):
    """Unidirectional stacked LSTM.

    ``layers`` is a sequence of (w_ih [4H, D], w_hh [4H, H], b_ih [4H],
    b_hh [4H]) tuples; gate order along the 4H axis is input, forget, cell,
    output.  Returns (output [B, T, H], list of per-layer (h_T, c_T)).
    Built from tape primitives, so gradients flow through time for free.
    """
    x = _as_tensor(x)
    B, T, _ = x.data.shape
    H = hidden
    seq = x
    finals = []
    for (w_ih, w_hh, b_ih, b_hh) in layers:
        if w_ih.data.shape[0] != 4 * H or w_hh.data.shape != (4 * H, H):
            raise ValueError(
                f"lstm_forward: gate matrices {w_ih.data.shape}/{w_hh.data.shape} "
                f"inconsistent with hidden size {H}")
        in_proj = linear(seq, w_ih, b_ih)  # one matmul for the whole sequence
        h = Tensor(np.zeros((B, H), dtype=x.data.dtype))
        c = Tensor(np.zeros((B, H), dtype=x.data.dtype))
        steps = []
        for t in range(T):
            gates = add(slice_(in_proj, (slice(None), t, slice(None))),
                        linear(h, w_hh, b_hh))
            i_g = sigmoid(slice_(gates, (slice(None), slice(0, H))))
            f_g = sigmoid(slice_(gates, (slice(None), slice(H, 2 * H))))
            c_g = tanh(slice_(gates, (slice(None), slice(2 * H, 3 * H))))
            o_g = sigmoid(slice_(gates, (slice(None), slice(3 * H, 4 * H))))
            c = add(mul(f_g, c), mul(i_g, c_g))
            h = mul(o_g, tanh(c))
            steps.append(reshape(h, (B, 1, H)))
        seq = concat(steps, axis=1) if T > 1 else steps[0]
        finals.append((h, c))
    return seq, finals
