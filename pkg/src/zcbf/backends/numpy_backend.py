"""Batch-vectorized numpy kernels for the barrier network.

All kernels take the flat parameter vector plus a layout description
(layer dims and weight/bias offsets) and operate on a batch of states.
Shapes: theta (P,), dims (L+1,), X (B, n). The extended forward pass
propagates the input Jacobian alongside activations so losses may touch
the network's input gradient; the VJP differentiates that extended
computation with respect to theta.
"""
from __future__ import annotations

import numpy as np

NAME = "numpy"


def _layer(theta, dims, w_off, b_off, l):
    din, dout = dims[l], dims[l + 1]
    w = theta[w_off[l] : w_off[l] + dout * din].reshape(dout, din)
    b = theta[b_off[l] : b_off[l] + dout]
    return w, b


def forward(theta, dims, w_off, b_off, x):
    """Network values over a batch; returns (B,)."""
    a = x
    for l in range(dims.shape[0] - 1):
        w, b = _layer(theta, dims, w_off, b_off, l)
        a = np.tanh(a @ w.T + b)
    return a[:, 0].copy()


def forward_grad(theta, dims, w_off, b_off, x):
    """Values and input gradients over a batch; returns ((B,), (B, n))."""
    batch, n = x.shape
    a = x
    jac = np.broadcast_to(np.eye(n), (batch, n, n))
    for l in range(dims.shape[0] - 1):
        w, b = _layer(theta, dims, w_off, b_off, l)
        a = np.tanh(a @ w.T + b)
        pre = np.einsum("oi,bik->bok", w, jac)
        jac = (1.0 - a * a)[:, :, None] * pre
    return a[:, 0].copy(), jac[:, 0, :].copy()


def vjp_value(theta, dims, w_off, b_off, x, wbar):
    """Gradient wrt theta of sum_b wbar[b] * W(x_b)."""
    L = dims.shape[0] - 1
    acts = [x]
    a = x
    for l in range(L):
        w, b = _layer(theta, dims, w_off, b_off, l)
        a = np.tanh(a @ w.T + b)
        acts.append(a)
    g = np.zeros_like(theta)
    abar = wbar[:, None]
    for l in range(L - 1, -1, -1):
        w, _ = _layer(theta, dims, w_off, b_off, l)
        a_out = acts[l + 1]
        zbar = abar * (1.0 - a_out * a_out)
        din, dout = dims[l], dims[l + 1]
        g[w_off[l] : w_off[l] + dout * din] += (zbar.T @ acts[l]).ravel()
        g[b_off[l] : b_off[l] + dout] += zbar.sum(axis=0)
        if l > 0:
            abar = zbar @ w
    return g


def vjp(theta, dims, w_off, b_off, x, wbar, gbar):
    """Gradient wrt theta of sum_b (wbar[b] W(x_b) + gbar[b] . gradW(x_b)).

    Backpropagates through the extended (value, input-Jacobian) forward
    pass, so second-order mixed terms flowing through the input gradient
    are exact.
    """
    batch, n = x.shape
    L = dims.shape[0] - 1
    acts = [x]
    pres = [None]
    jacs = [np.broadcast_to(np.eye(n), (batch, n, n))]
    a = x
    for l in range(L):
        w, b = _layer(theta, dims, w_off, b_off, l)
        a = np.tanh(a @ w.T + b)
        pre = np.einsum("oi,bik->bok", w, jacs[-1])
        jac = (1.0 - a * a)[:, :, None] * pre
        acts.append(a)
        pres.append(pre)
        jacs.append(jac)
    g = np.zeros_like(theta)
    abar = wbar[:, None]
    jbar = gbar[:, None, :]
    for l in range(L - 1, -1, -1):
        w, _ = _layer(theta, dims, w_off, b_off, l)
        a_out = acts[l + 1]
        s = 1.0 - a_out * a_out
        # tanh'' = -2 a s enters through the Jacobian scaling
        zbar = abar * s + np.sum(jbar * pres[l + 1], axis=2) * (-2.0 * a_out * s)
        mbar = jbar * s[:, :, None]
        din, dout = dims[l], dims[l + 1]
        gw = zbar.T @ acts[l] + np.einsum("bok,bik->oi", mbar, jacs[l])
        g[w_off[l] : w_off[l] + dout * din] += gw.ravel()
        g[b_off[l] : b_off[l] + dout] += zbar.sum(axis=0)
        if l > 0:
            abar = zbar @ w
            jbar = np.einsum("oi,bok->bik", w, mbar)
    return g
