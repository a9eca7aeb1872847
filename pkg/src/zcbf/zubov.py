"""Physics-informed training of the bounded barrier network.

The network is fit to a first-order PDE whose solution characterizes the
safe region: along the closed-loop field the value must satisfy
dW/dt = -alpha (1 + W)(1 - W) Phi(x), with W pushed to 1 on the domain
boundary and toward 0 / 1 on declared safe / unsafe anchor sets. Phi is
the squared distance to the safe anchor set. Training is plain
mini-batch Adam over a sample bank drawn once up front.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import net as net_mod
from .dynamics import ControlAffineSystem


class TrainingDiverged(RuntimeError):
    """Total training loss became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the PDE-residual training run.

    ``loss_weights`` orders as (residual, boundary, safe, unsafe). An
    epoch is one shuffled pass over the interior bank in mini-batches,
    with fresh region batches drawn per step.
    """

    alpha: float = 1.0
    loss_weights: tuple[float, float, float, float] = (1.0, 1.0, 5.0, 5.0)
    hidden_dims: tuple[int, ...] = (16, 16)
    n_interior: int = 10000
    n_boundary: int = 2000
    n_safe: int = 2000
    n_unsafe: int = 2000
    batch_size: int = 512
    learning_rate: float = 1e-3
    max_epochs: int = 2000
    loss_threshold: float = 1e-5
    seed: int = 0

    def validate(self) -> None:
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if len(self.loss_weights) != 4 or any(w <= 0 for w in self.loss_weights):
            raise ValueError("loss_weights must be four positive reals")
        for name in ("n_interior", "n_boundary", "n_safe", "n_unsafe", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden_dims must be non-empty positive integers")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.loss_threshold < 0.0:
            raise ValueError("loss_threshold must be non-negative")


@dataclass(frozen=True)
class LossReport:
    epoch: int
    l_r: float
    l_b: float
    l_safe: float
    l_unsafe: float
    total: float


# ---------------------------------------------------------------------------
# Transform and residual
# ---------------------------------------------------------------------------


def beta(s, alpha: float):
    """Bounding transform tanh(alpha * s): strictly increasing on s >= 0,
    beta(0) = 0, limit 1."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr < 0.0):
        raise ValueError("s must be non-negative")
    out = np.tanh(alpha * s_arr)
    return float(out) if s_arr.ndim == 0 else out


def phi(sys: ControlAffineSystem, x) -> float:
    """Squared distance from x to the system's safe anchor set."""
    return sys.safe_anchor.distance_sq(np.asarray(x, dtype=np.float64))


def phi_batch(sys: ControlAffineSystem, x) -> np.ndarray:
    return sys.safe_anchor.distance_sq_batch(x)


def closed_loop_field(sys: ControlAffineSystem, ref_ctrl, x) -> np.ndarray:
    """f(x) + g(x) u_ref(x)."""
    x = np.asarray(x, dtype=np.float64)
    return np.asarray(sys.f(x), dtype=np.float64) + np.asarray(sys.g(x)) @ np.asarray(
        ref_ctrl(x), dtype=np.float64
    )


def residual_from_parts(w, grad_dot_field, phi_vals, alpha: float):
    """PDE residual given the network value, its field derivative, and Phi.

    Accepts plain arrays or loss-graph nodes.
    """
    return grad_dot_field + alpha * ((1.0 + w) * (1.0 - w)) * phi_vals


def residual(netobj, sys: ControlAffineSystem, ref_ctrl, alpha: float, x) -> float:
    """Pointwise PDE residual at a state in the domain."""
    dual = net_mod.forward_with_input_grad(netobj, x)
    fcl = closed_loop_field(sys, ref_ctrl, x)
    return float(
        residual_from_parts(dual.value, float(dual.input_grad @ fcl), phi(sys, x), alpha)
    )


def bc_target(sys: ControlAffineSystem, alpha: float, y) -> float:
    """Boundary value for a domain-boundary state.

    1 unless the state lies in the safe region and the system carries an
    analytic barrier candidate for it; the shipped environments carry
    none, so their boundary target is identically 1.
    """
    y = np.asarray(y, dtype=np.float64)
    if sys.boundary_safe_barrier is not None and sys.safe.contains(y):
        return float(beta(float(sys.boundary_safe_barrier(y)), alpha))
    return 1.0


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_uniform(domain, count: int, rng) -> np.ndarray:
    return rng.uniform(domain.lower, domain.upper, (count, domain.n))


def sample_boundary(domain, count: int, rng) -> np.ndarray:
    """Uniform draws with one coordinate snapped to a random box face."""
    pts = rng.uniform(domain.lower, domain.upper, (count, domain.n))
    faces = rng.integers(0, 2 * domain.n, size=count)
    coord = faces // 2
    side = faces % 2
    vals = np.where(side == 0, domain.lower[coord], domain.upper[coord])
    pts[np.arange(count), coord] = vals
    return pts


def sample_region(domain, region, count: int, rng, max_tries: int = 1000) -> np.ndarray:
    """Rejection-sample states of the domain satisfying a region predicate."""
    chunk = max(4 * count, 4096)
    rows = []
    have = 0
    for _ in range(max_tries):
        cand = rng.uniform(domain.lower, domain.upper, (chunk, domain.n))
        hit = cand[region.contains_batch(cand)]
        if hit.shape[0]:
            rows.append(hit)
            have += hit.shape[0]
        if have >= count:
            return np.concatenate(rows, axis=0)[:count]
    raise RuntimeError(
        f"could not draw {count} samples from the {region.kind} region "
        f"after {max_tries} rounds"
    )


@dataclass(frozen=True)
class SampleBank:
    """Training data drawn once up front.

    Interior rows carry their precomputed closed-loop field and Phi so
    the training loop never re-evaluates the dynamics; boundary rows
    carry their target values.
    """

    interior: np.ndarray
    interior_field: np.ndarray
    interior_phi: np.ndarray
    boundary: np.ndarray
    boundary_bc: np.ndarray
    safe: np.ndarray
    unsafe: np.ndarray

    @classmethod
    def build(cls, sys: ControlAffineSystem, ref_ctrl, cfg: TrainConfig, rng) -> "SampleBank":
        interior = sample_uniform(sys.domain, cfg.n_interior, rng)
        boundary = sample_boundary(sys.domain, cfg.n_boundary, rng)
        safe = sample_region(sys.domain, sys.safe, cfg.n_safe, rng)
        unsafe = sample_region(sys.domain, sys.unsafe, cfg.n_unsafe, rng)
        fields = np.stack([closed_loop_field(sys, ref_ctrl, x) for x in interior])
        phis = phi_batch(sys, interior)
        bc = np.array([bc_target(sys, cfg.alpha, y) for y in boundary])
        return cls(interior, fields, phis, boundary, bc, safe, unsafe)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def interior_loss_graph(field, phi_vals, alpha):
    """Loss-graph builder for the mean squared PDE residual."""

    def build(w, g):
        r = residual_from_parts(w, ad.rowdot(g, field), phi_vals, alpha)
        return ad.mean(ad.square(r))

    return build


def _interior_loss_and_grad(netobj, x, field, phi_vals, alpha):
    """Mean squared residual and exact theta-gradient (analytic seeds)."""
    w, g = net_mod.forward_with_input_grad_batch(netobj, x)
    r = residual_from_parts(w, np.einsum("bn,bn->b", g, field), phi_vals, alpha)
    batch = x.shape[0]
    scale = 2.0 * r / batch
    wbar = scale * alpha * (-2.0 * w) * phi_vals
    gbar = scale[:, None] * field
    return float(np.mean(r * r)), net_mod.param_grad(netobj, x, wbar, gbar)


def _value_loss_and_grad(netobj, x, target):
    """Mean of (W - target)^2 and exact theta-gradient."""
    w = net_mod.forward_batch(netobj, x)
    diff = w - target
    wbar = 2.0 * diff / x.shape[0]
    return float(np.mean(diff * diff)), net_mod.param_grad(netobj, x, wbar)


def losses(netobj, sys, ref_ctrl, cfg: TrainConfig, bank: SampleBank, epoch: int = 0) -> LossReport:
    """The four loss components and their weighted total on given batches."""
    if bank.interior.shape[0] == 0:
        raise ValueError("interior batch must be non-empty")
    w, g = net_mod.forward_with_input_grad_batch(netobj, bank.interior)
    r = residual_from_parts(
        w, np.einsum("bn,bn->b", g, bank.interior_field), bank.interior_phi, cfg.alpha
    )
    l_r = float(np.mean(r * r))
    wb = net_mod.forward_batch(netobj, bank.boundary)
    l_b = float(np.mean((wb - bank.boundary_bc) ** 2))
    ws_ = net_mod.forward_batch(netobj, bank.safe)
    l_safe = float(np.mean(ws_ * ws_))
    wu = net_mod.forward_batch(netobj, bank.unsafe)
    l_unsafe = float(np.mean((wu - 1.0) ** 2))
    return _report(epoch, l_r, l_b, l_safe, l_unsafe, cfg.loss_weights)


def _report(epoch, l_r, l_b, l_safe, l_unsafe, weights) -> LossReport:
    w_r, w_b, w_s, w_u = weights
    l_r, l_b, l_safe, l_unsafe = float(l_r), float(l_b), float(l_safe), float(l_unsafe)
    total = w_r * l_r + w_b * l_b + w_s * l_safe + w_u * l_unsafe
    return LossReport(epoch, l_r, l_b, l_safe, l_unsafe, total)


# ---------------------------------------------------------------------------
# Optimizer and training loop
# ---------------------------------------------------------------------------


class Adam:
    """Adaptive-moment gradient descent on a flat parameter vector."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(size)
        self.v = np.zeros(size)

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(sys: ControlAffineSystem, ref_ctrl, cfg: TrainConfig, callback=None):
    """Mini-batch training loop; returns the trained net and epoch history.

    Deterministic given cfg.seed: bank sampling, initialization, batch
    order, and updates all draw from one seeded generator. Raises
    TrainingDiverged when the total loss stops being finite.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    bank = SampleBank.build(sys, ref_ctrl, cfg, rng)
    netobj = net_mod.init((sys.n, *cfg.hidden_dims, 1), cfg.seed)
    history: list[LossReport] = []
    if cfg.max_epochs == 0:
        return netobj, history

    w_r, w_b, w_s, w_u = cfg.loss_weights
    theta = netobj.theta.copy()
    opt = Adam(theta.size, cfg.learning_rate)
    steps = math.ceil(cfg.n_interior / cfg.batch_size)
    nb = bank.boundary.shape[0]
    ns = bank.safe.shape[0]
    nu = bank.unsafe.shape[0]
    bsz = cfg.batch_size

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(cfg.n_interior)
        sums = np.zeros(4)
        for s in range(steps):
            idx = perm[s * bsz : (s + 1) * bsz]
            ib = rng.integers(0, nb, size=min(bsz, nb))
            is_ = rng.integers(0, ns, size=min(bsz, ns))
            iu = rng.integers(0, nu, size=min(bsz, nu))
            cur = netobj.with_theta(theta)
            l_r, g_r = _interior_loss_and_grad(
                cur, bank.interior[idx], bank.interior_field[idx],
                bank.interior_phi[idx], cfg.alpha,
            )
            l_b, g_b = _value_loss_and_grad(cur, bank.boundary[ib], bank.boundary_bc[ib])
            l_s, g_s = _value_loss_and_grad(cur, bank.safe[is_], 0.0)
            l_u, g_u = _value_loss_and_grad(cur, bank.unsafe[iu], 1.0)
            total = w_r * l_r + w_b * l_b + w_s * l_s + w_u * l_u
            if not np.isfinite(total):
                raise TrainingDiverged(f"total loss non-finite at epoch {epoch}")
            theta = opt.step(theta, w_r * g_r + w_b * g_b + w_s * g_s + w_u * g_u)
            sums += (l_r, l_b, l_s, l_u)
        means = sums / steps
        report = _report(epoch, *means, cfg.loss_weights)
        history.append(report)
        if callback is not None:
            callback(report)
        if report.total < cfg.loss_threshold:
            break
    return netobj.with_theta(theta), history
