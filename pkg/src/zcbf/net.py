"""The barrier network: a small fully connected scalar field.

Value, exact input gradient, and exact parameter gradients of losses
built from both are provided; the heavy lifting lives in the selected
kernel backend. Hidden and output activations are tanh, so the output
always lies in (-1, 1) and the network is smooth in states and
parameters.

Parameter layout (version 1): all weight matrices first (layer-major,
each row-major with shape (fan_out, fan_in)), then all bias vectors in
layer order. Checkpoints are little-endian float64 and embed the layout
version, layer dims, activation ids, and the training alpha.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .backends import active_backend

PARAM_LAYOUT_VERSION = 1
_CHECKPOINT_MAGIC = b"ZCBFNET1"


def param_count(layer_dims) -> int:
    dims = list(layer_dims)
    return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


def _offsets(layer_dims):
    dims = list(layer_dims)
    n_layers = len(dims) - 1
    w_off = np.zeros(n_layers, dtype=np.int64)
    b_off = np.zeros(n_layers, dtype=np.int64)
    pos = 0
    for l in range(n_layers):
        w_off[l] = pos
        pos += dims[l] * dims[l + 1]
    for l in range(n_layers):
        b_off[l] = pos
        pos += dims[l + 1]
    return w_off, b_off


def _validate_dims(layer_dims):
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 3:
        raise ValueError("layer_dims needs at least one hidden layer")
    if dims[-1] != 1:
        raise ValueError("output dimension must be 1")
    if any(d < 1 for d in dims):
        raise ValueError("all layer dims must be positive")
    return dims


@dataclass(frozen=True)
class BarrierNet:
    layer_dims: tuple[int, ...]
    theta: np.ndarray
    hidden_activation: str = "tanh"
    output_activation: str = "tanh"

    def __post_init__(self):
        dims = _validate_dims(self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.shape != (param_count(dims),):
            raise ValueError(
                f"theta has length {theta.shape}, expected ({param_count(dims)},)"
            )
        if self.hidden_activation != "tanh" or self.output_activation != "tanh":
            raise ValueError("only tanh activations are supported")
        object.__setattr__(self, "theta", theta)
        w_off, b_off = _offsets(dims)
        object.__setattr__(self, "_dims_arr", np.asarray(dims, dtype=np.int64))
        object.__setattr__(self, "_w_off", w_off)
        object.__setattr__(self, "_b_off", b_off)

    @property
    def n(self) -> int:
        return self.layer_dims[0]

    def with_theta(self, theta: np.ndarray) -> "BarrierNet":
        return BarrierNet(self.layer_dims, theta)


@dataclass(frozen=True)
class DualEval:
    """Network value and its gradient with respect to the input state."""

    value: float
    input_grad: np.ndarray


def init(layer_dims, seed: int) -> BarrierNet:
    """Deterministic initialization: fan-in-scaled weights, zero biases."""
    dims = _validate_dims(layer_dims)
    rng = np.random.default_rng(seed)
    theta = np.zeros(param_count(dims))
    w_off, _ = _offsets(dims)
    for l in range(len(dims) - 1):
        fan_in, fan_out = dims[l], dims[l + 1]
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in))
        theta[w_off[l] : w_off[l] + fan_out * fan_in] = w.ravel()
    return BarrierNet(dims, theta)


def _as_batch(net: BarrierNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.n:
        raise ValueError(f"state batch must have shape (B, {net.n})")
    return np.ascontiguousarray(x)


def forward(net: BarrierNet, x) -> float:
    """W(x; theta) at a single state; always in (-1, 1)."""
    xb = np.asarray(x, dtype=np.float64)
    if xb.shape != (net.n,):
        raise ValueError(f"state must have shape ({net.n},)")
    backend = active_backend()
    return float(
        backend.forward(net.theta, net._dims_arr, net._w_off, net._b_off, xb[None, :])[0]
    )


def forward_batch(net: BarrierNet, x) -> np.ndarray:
    backend = active_backend()
    return backend.forward(net.theta, net._dims_arr, net._w_off, net._b_off, _as_batch(net, x))


def forward_with_input_grad(net: BarrierNet, x) -> DualEval:
    """Value and exact input gradient at a single state."""
    xb = np.asarray(x, dtype=np.float64)
    if xb.shape != (net.n,):
        raise ValueError(f"state must have shape ({net.n},)")
    backend = active_backend()
    vals, grads = backend.forward_grad(
        net.theta, net._dims_arr, net._w_off, net._b_off, xb[None, :]
    )
    return DualEval(float(vals[0]), grads[0])


def forward_with_input_grad_batch(net: BarrierNet, x):
    backend = active_backend()
    return backend.forward_grad(
        net.theta, net._dims_arr, net._w_off, net._b_off, _as_batch(net, x)
    )


def param_grad(net: BarrierNet, x, wbar, gbar=None) -> np.ndarray:
    """Gradient wrt theta of sum_b wbar[b] W_b (+ gbar[b] . gradW_b)."""
    xb = _as_batch(net, x)
    wbar = np.ascontiguousarray(np.asarray(wbar, dtype=np.float64))
    backend = active_backend()
    if gbar is None:
        return backend.vjp_value(net.theta, net._dims_arr, net._w_off, net._b_off, xb, wbar)
    gbar = np.ascontiguousarray(np.asarray(gbar, dtype=np.float64))
    return backend.vjp(net.theta, net._dims_arr, net._w_off, net._b_off, xb, wbar, gbar)


def loss_value_and_param_grad(net: BarrierNet, x, loss_fn):
    """Evaluate a loss graph over a batch and its exact theta-gradient.

    ``loss_fn(W, G)`` receives the batched value and input gradient as
    graph nodes and must return a scalar node built from the supported
    primitives; terms flowing through G (second-order mixed derivatives)
    are handled exactly.
    """
    xb = _as_batch(net, x)
    vals, grads = forward_with_input_grad_batch(net, xb)
    w_node = ad.leaf(vals)
    g_node = ad.leaf(grads)
    out = loss_fn(w_node, g_node)
    if not isinstance(out, ad.Node):
        raise ad.UnsupportedPrimitive("loss did not evaluate to a graph node")
    wbar, gbar = ad.grad(out, [w_node, g_node])
    if not np.any(gbar):
        gtheta = param_grad(net, xb, wbar)
    else:
        gtheta = param_grad(net, xb, wbar, gbar)
    return float(out.value), gtheta


def loss_param_grad(net: BarrierNet, x, loss_fn) -> np.ndarray:
    """Exact parameter gradient of a scalar loss over a batch."""
    return loss_value_and_param_grad(net, x, loss_fn)[1]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _header(net: BarrierNet, alpha: float) -> dict:
    return {
        "format_version": PARAM_LAYOUT_VERSION,
        "layer_dims": list(net.layer_dims),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "alpha": float(alpha),
    }


def save_checkpoint(net: BarrierNet, alpha: float, path) -> None:
    """Binary checkpoint: magic, u32-LE header length, JSON header,
    then theta as little-endian float64."""
    header = json.dumps(_header(net, alpha)).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(net.theta.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[BarrierNet, float]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["format_version"] != PARAM_LAYOUT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['format_version']}")
        dims = tuple(header["layer_dims"])
        theta = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    net = BarrierNet(dims, theta, header["hidden_activation"], header["output_activation"])
    return net, float(header["alpha"])


def save_checkpoint_text(net: BarrierNet, alpha: float, path) -> None:
    """Plain-text export (full-precision decimals) for cross-tool checks."""
    with open(path, "w") as fh:
        fh.write(f"zcbf-net-text {PARAM_LAYOUT_VERSION}\n")
        fh.write("layer_dims: " + " ".join(str(d) for d in net.layer_dims) + "\n")
        fh.write(f"activations: {net.hidden_activation} {net.output_activation}\n")
        fh.write(f"alpha: {alpha!r}\n")
        for v in net.theta:
            fh.write(repr(float(v)) + "\n")


def load_checkpoint_text(path) -> tuple[BarrierNet, float]:
    with open(path) as fh:
        head = fh.readline().split()
        if head[:1] != ["zcbf-net-text"] or int(head[1]) != PARAM_LAYOUT_VERSION:
            raise ValueError(f"{path}: not a text checkpoint")
        dims = tuple(int(d) for d in fh.readline().split(":")[1].split())
        acts = fh.readline().split(":")[1].split()
        alpha = float(fh.readline().split(":")[1])
        theta = np.array([float(line) for line in fh if line.strip()])
    return BarrierNet(dims, theta, acts[0], acts[1]), alpha
