"""Numba-compiled kernels mirroring the numpy backend.

Same contracts as numpy_backend; loops are written per sample with a
padded per-layer workspace so arbitrary layer widths compile to one
specialization. Serial accumulation keeps results bit-reproducible.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def forward(theta, dims, w_off, b_off, x):
    batch = x.shape[0]
    L = dims.shape[0] - 1
    hmax = 0
    for l in range(L + 1):
        if dims[l] > hmax:
            hmax = dims[l]
    out = np.empty(batch)
    a = np.empty(hmax)
    a2 = np.empty(hmax)
    for bi in range(batch):
        for i in range(dims[0]):
            a[i] = x[bi, i]
        for l in range(L):
            din = dims[l]
            dout = dims[l + 1]
            for r in range(dout):
                z = theta[b_off[l] + r]
                base = w_off[l] + r * din
                for c in range(din):
                    z += theta[base + c] * a[c]
                a2[r] = math.tanh(z)
            for r in range(dout):
                a[r] = a2[r]
        out[bi] = a[0]
    return out


@njit(cache=True)
def forward_grad(theta, dims, w_off, b_off, x):
    batch = x.shape[0]
    n = x.shape[1]
    L = dims.shape[0] - 1
    hmax = 0
    for l in range(L + 1):
        if dims[l] > hmax:
            hmax = dims[l]
    vals = np.empty(batch)
    grads = np.empty((batch, n))
    a = np.empty(hmax)
    a2 = np.empty(hmax)
    jac = np.empty((hmax, n))
    jac2 = np.empty((hmax, n))
    for bi in range(batch):
        for i in range(n):
            a[i] = x[bi, i]
            for k in range(n):
                jac[i, k] = 1.0 if i == k else 0.0
        for l in range(L):
            din = dims[l]
            dout = dims[l + 1]
            for r in range(dout):
                z = theta[b_off[l] + r]
                base = w_off[l] + r * din
                for c in range(din):
                    z += theta[base + c] * a[c]
                t = math.tanh(z)
                a2[r] = t
                s = 1.0 - t * t
                for k in range(n):
                    m = 0.0
                    for c in range(din):
                        m += theta[base + c] * jac[c, k]
                    jac2[r, k] = s * m
            for r in range(dout):
                a[r] = a2[r]
                for k in range(n):
                    jac[r, k] = jac2[r, k]
        vals[bi] = a[0]
        for k in range(n):
            grads[bi, k] = jac[0, k]
    return vals, grads


@njit(cache=True)
def vjp_value(theta, dims, w_off, b_off, x, wbar):
    batch = x.shape[0]
    L = dims.shape[0] - 1
    hmax = 0
    for l in range(L + 1):
        if dims[l] > hmax:
            hmax = dims[l]
    g = np.zeros(theta.shape[0])
    acts = np.empty((L + 1, hmax))
    abar = np.empty(hmax)
    abar2 = np.empty(hmax)
    for bi in range(batch):
        for i in range(dims[0]):
            acts[0, i] = x[bi, i]
        for l in range(L):
            din = dims[l]
            dout = dims[l + 1]
            for r in range(dout):
                z = theta[b_off[l] + r]
                base = w_off[l] + r * din
                for c in range(din):
                    z += theta[base + c] * acts[l, c]
                acts[l + 1, r] = math.tanh(z)
        abar[0] = wbar[bi]
        for l in range(L - 1, -1, -1):
            din = dims[l]
            dout = dims[l + 1]
            for r in range(dout):
                t = acts[l + 1, r]
                zb = abar[r] * (1.0 - t * t)
                abar2[r] = zb
            for r in range(dout):
                base = w_off[l] + r * din
                zb = abar2[r]
                g[b_off[l] + r] += zb
                for c in range(din):
                    g[base + c] += zb * acts[l, c]
            if l > 0:
                for c in range(din):
                    av = 0.0
                    for r in range(dout):
                        av += theta[w_off[l] + r * din + c] * abar2[r]
                    abar[c] = av
    return g


@njit(cache=True)
def vjp(theta, dims, w_off, b_off, x, wbar, gbar):
    batch = x.shape[0]
    n = x.shape[1]
    L = dims.shape[0] - 1
    hmax = 0
    for l in range(L + 1):
        if dims[l] > hmax:
            hmax = dims[l]
    g = np.zeros(theta.shape[0])
    acts = np.empty((L + 1, hmax))
    jacs = np.empty((L + 1, hmax, n))
    pres = np.empty((L + 1, hmax, n))
    abar = np.empty(hmax)
    jbar = np.empty((hmax, n))
    zbar = np.empty(hmax)
    mbar = np.empty((hmax, n))
    abar2 = np.empty(hmax)
    jbar2 = np.empty((hmax, n))
    for bi in range(batch):
        for i in range(n):
            acts[0, i] = x[bi, i]
            for k in range(n):
                jacs[0, i, k] = 1.0 if i == k else 0.0
        for l in range(L):
            din = dims[l]
            dout = dims[l + 1]
            for r in range(dout):
                z = theta[b_off[l] + r]
                base = w_off[l] + r * din
                for c in range(din):
                    z += theta[base + c] * acts[l, c]
                t = math.tanh(z)
                acts[l + 1, r] = t
                s = 1.0 - t * t
                for k in range(n):
                    m = 0.0
                    for c in range(din):
                        m += theta[base + c] * jacs[l, c, k]
                    pres[l + 1, r, k] = m
                    jacs[l + 1, r, k] = s * m
        abar[0] = wbar[bi]
        for k in range(n):
            jbar[0, k] = gbar[bi, k]
        for l in range(L - 1, -1, -1):
            din = dims[l]
            dout = dims[l + 1]
            for r in range(dout):
                t = acts[l + 1, r]
                s = 1.0 - t * t
                acc = 0.0
                for k in range(n):
                    acc += jbar[r, k] * pres[l + 1, r, k]
                zbar[r] = abar[r] * s + acc * (-2.0 * t * s)
                for k in range(n):
                    mbar[r, k] = jbar[r, k] * s
            for r in range(dout):
                base = w_off[l] + r * din
                zb = zbar[r]
                g[b_off[l] + r] += zb
                for c in range(din):
                    acc = zb * acts[l, c]
                    for k in range(n):
                        acc += mbar[r, k] * jacs[l, c, k]
                    g[base + c] += acc
            if l > 0:
                for c in range(din):
                    av = 0.0
                    for k in range(n):
                        jbar2[c, k] = 0.0
                    for r in range(dout):
                        w = theta[w_off[l] + r * din + c]
                        av += w * zbar[r]
                        for k in range(n):
                            jbar2[c, k] += w * mbar[r, k]
                    abar2[c] = av
                for c in range(din):
                    abar[c] = abar2[c]
                    for k in range(n):
                        jbar[c, k] = jbar2[c, k]
    return g
