"""Acceptance suite: every shipped claim at its stated tolerance.

Runs the three case studies end to end with shipped defaults (heavy
fixtures are session-scoped; the full module takes tens of minutes) and
prints one pass/fail line per criterion. Run with `-s` to see the lines
live: pytest tests/test_acceptance.py -s
"""
import time

import numpy as np
import pytest

from zcbf import net, zubov
from zcbf.barrier import SafetyFilterConfig, min_norm_correction, _qp_box_halfspace
from zcbf.config import build_environment, default_run_config
from zcbf.grid import audit_safety_condition, evaluate_grid, sublevel_report
from zcbf.cli import _grid_slice
from zcbf.sim import SimConfig, rollout, rk4_step
from zcbf.zubov import SampleBank, beta, interior_loss_graph, sample_region


def _line(num: int, ok: bool, text: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {text}")
    assert ok, f"criterion {num}: {text}"


def _trained(env: str):
    cfg = default_run_config(env)
    sys_, ref = build_environment(cfg)
    t0 = time.time()
    netobj, history = zubov.train(sys_, ref, cfg.train)
    return {
        "cfg": cfg,
        "sys": sys_,
        "ref": ref,
        "net": netobj,
        "history": history,
        "minutes": (time.time() - t0) / 60.0,
    }


@pytest.fixture(scope="session")
def trained_pendulum():
    return _trained("pendulum")


@pytest.fixture(scope="session")
def trained_unicycle():
    return _trained("unicycle")


@pytest.fixture(scope="session")
def trained_quadrotor():
    return _trained("quadrotor")


# ---------------------------------------------------------------------------
# 1. gradient exactness
# ---------------------------------------------------------------------------


def test_criterion_1_gradient_exactness():
    t0 = time.time()
    rng = np.random.default_rng(0)
    worst_in = 0.0
    for n in (2, 3, 6):
        for trial in range(100):
            netobj = net.init([n, 16, 16, 1], seed=trial)
            x = rng.uniform(-2, 2, n)
            grad = net.forward_with_input_grad(netobj, x).input_grad
            fd = np.empty(n)
            h = 1e-5
            for i in range(n):
                xp, xm = x.copy(), x.copy()
                xp[i] += h
                xm[i] -= h
                fd[i] = (net.forward(netobj, xp) - net.forward(netobj, xm)) / (2 * h)
            rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-10)
            worst_in = max(worst_in, rel)
    ok_input = worst_in <= 1e-4

    # parameter gradients of the full training loss, directional differences
    cfg = default_run_config("pendulum")
    sys_, ref = build_environment(cfg)
    tcfg = zubov.TrainConfig(n_interior=128, n_boundary=64, n_safe=64, n_unsafe=64)
    bank = SampleBank.build(sys_, ref, tcfg, np.random.default_rng(1))
    netobj = net.init([2, 16, 16, 1], seed=0)
    loss_fn = interior_loss_graph(bank.interior_field, bank.interior_phi, tcfg.alpha)

    def full_loss(theta):
        cur = netobj.with_theta(theta)
        val, _ = net.loss_value_and_param_grad(cur, bank.interior, loss_fn)
        rep = zubov.losses(cur, sys_, ref, tcfg, bank)
        return rep.total

    grad = np.zeros_like(netobj.theta)
    w = tcfg.loss_weights
    l_r, g_r = zubov._interior_loss_and_grad(
        netobj, bank.interior, bank.interior_field, bank.interior_phi, tcfg.alpha
    )
    _, g_b = zubov._value_loss_and_grad(netobj, bank.boundary, bank.boundary_bc)
    _, g_s = zubov._value_loss_and_grad(netobj, bank.safe, 0.0)
    _, g_u = zubov._value_loss_and_grad(netobj, bank.unsafe, 1.0)
    grad = w[0] * g_r + w[1] * g_b + w[2] * g_s + w[3] * g_u
    rng = np.random.default_rng(7)
    worst_par = 0.0
    h = 1e-6
    for _ in range(20):
        d = rng.normal(size=grad.size)
        d /= np.linalg.norm(d)
        fd = (full_loss(netobj.theta + h * d) - full_loss(netobj.theta - h * d)) / (2 * h)
        rel = abs(float(grad @ d) - fd) / max(abs(fd), 1e-10)
        worst_par = max(worst_par, rel)
    ok_param = worst_par <= 1e-3
    elapsed = time.time() - t0
    _line(1, ok_input and ok_param and elapsed < 60.0,
          f"input-grad rel err {worst_in:.2e} <= 1e-4, "
          f"param-grad rel err {worst_par:.2e} <= 1e-3, {elapsed:.0f}s < 60s")


# ---------------------------------------------------------------------------
# 2. transform fidelity
# ---------------------------------------------------------------------------


def test_criterion_2_transform_fidelity():
    from zcbf.barrier import w_to_b

    worst_ode = 0.0
    worst_inv = 0.0
    for alpha in (0.5, 1.0, 2.0):
        s = np.linspace(0.001, 3.0, 1500)
        h = 1e-4
        fd = (beta(s + h, alpha) - beta(s - h, alpha)) / (2 * h)
        b = beta(s, alpha)
        rhs = alpha * (1.0 - b) * (1.0 + b)
        worst_ode = max(worst_ode, float(np.max(np.abs(fd - rhs) / np.abs(rhs))))
        for sv in np.linspace(0.01, 5.0, 500):
            back = w_to_b(beta(sv, alpha), alpha, w_clamp=1e-15)
            worst_inv = max(worst_inv, abs(back - sv) / max(1.0, sv))
    ok = worst_ode <= 1e-6 and worst_inv <= 1e-9
    _line(2, ok, f"beta ODE residual {worst_ode:.2e} <= 1e-6, "
                 f"inversion identity {worst_inv:.2e} <= 1e-9")


# ---------------------------------------------------------------------------
# 3. pendulum training
# ---------------------------------------------------------------------------


def test_criterion_3_pendulum_training(trained_pendulum):
    art = trained_pendulum
    rng = np.random.default_rng(art["cfg"].seed + 1)
    safe = sample_region(art["sys"].domain, art["sys"].safe, 1000, rng)
    unsafe = sample_region(art["sys"].domain, art["sys"].unsafe, 1000, rng)
    mean_safe = float(np.mean(net.forward_batch(art["net"], safe)))
    mean_unsafe = float(np.mean(net.forward_batch(art["net"], unsafe)))
    hist = art["history"]
    ratio = hist[0].total / max(hist[-1].total, 1e-300)
    ok = (mean_safe < 0.15 and mean_unsafe > 0.85 and ratio >= 10.0
          and len(hist) <= 2000 and art["minutes"] <= 15.0)
    _line(3, ok, f"mean W safe {mean_safe:.4f} < 0.15, unsafe {mean_unsafe:.4f} > 0.85, "
                 f"loss x{ratio:.0f} >= 10, {art['minutes']:.1f} min <= 15")


# ---------------------------------------------------------------------------
# 4. sub-level monotonicity
# ---------------------------------------------------------------------------


def test_criterion_4_sublevel_monotonicity(trained_pendulum, trained_unicycle,
                                           trained_quadrotor):
    gammas = (0.2, 0.4, 0.6, 0.8, 0.9, 0.95)
    all_ok = True
    detail = []
    for art in (trained_pendulum, trained_unicycle, trained_quadrotor):
        gslice = _grid_slice(art["cfg"], art["sys"])
        grid = evaluate_grid(art["net"], gslice)
        areas = [r.cell_count_below for r in sublevel_report(grid, gammas)]
        nondecreasing = all(b >= a for a, b in zip(areas, areas[1:]))
        strict = sum(b > a for a, b in zip(areas, areas[1:]))
        all_ok &= nondecreasing and strict >= 3
        detail.append(f"{art['sys'].name}: {strict} strict increases")
    _line(4, all_ok, "; ".join(detail))


# ---------------------------------------------------------------------------
# 5. unicycle navigation
# ---------------------------------------------------------------------------


def test_criterion_5_unicycle_navigation(trained_unicycle):
    art = trained_unicycle
    cfg = art["cfg"]
    x0 = np.asarray(cfg.sim.x0)
    ref_traj = rollout(art["sys"], None, art["ref"], None,
                       SimConfig(x0, cfg.sim.t_final, cfg.sim.dt, "ref"))
    filt_traj = rollout(art["sys"], art["net"], art["ref"], cfg.filter,
                        SimConfig(x0, cfg.sim.t_final, cfg.sim.dt, "filtered"))
    final = filt_traj.states[-1][:2]
    goal = cfg.unicycle.goal
    dist = float(np.hypot(final[0] - goal[0], final[1] - goal[1]))
    ok = (ref_traj.violation is not None and filt_traj.violation is None
          and dist <= 0.2)
    _line(5, ok, f"reference violates at t={ref_traj.violation[0] if ref_traj.violation else None}, "
                 f"filtered violations none={filt_traj.violation is None}, "
                 f"goal distance {dist:.3f} <= 0.2")


# ---------------------------------------------------------------------------
# 6. quadrotor navigation
# ---------------------------------------------------------------------------


def test_criterion_6_quadrotor_navigation(trained_quadrotor):
    art = trained_quadrotor
    cfg = art["cfg"]
    x0 = np.asarray(cfg.sim.x0)
    ref_traj = rollout(art["sys"], None, art["ref"], None,
                       SimConfig(x0, 10.0, 0.01, "ref"))
    filt_traj = rollout(art["sys"], art["net"], art["ref"], cfg.filter,
                        SimConfig(x0, 10.0, 0.01, "filtered"))
    ok = (ref_traj.violation is not None and filt_traj.violation is None
          and art["minutes"] <= 30.0)
    _line(6, ok, f"6-D training {art['minutes']:.1f} min <= 30, reference violates "
                 f"at t={ref_traj.violation[0] if ref_traj.violation else None}, "
                 f"filtered avoids the box={filt_traj.violation is None}")


# ---------------------------------------------------------------------------
# 7. filter algebra
# ---------------------------------------------------------------------------


def test_criterion_7_filter_algebra():
    rng = np.random.default_rng(3)
    eps = 1e-6
    worst_post = 0.0
    worst_qp = 0.0
    count = 0
    while count < 10_000:
        m = int(rng.integers(1, 3))
        lgb = rng.normal(size=m) * rng.uniform(0.05, 5.0)
        if float(lgb @ lgb) == 0.0:
            continue
        u_ref = rng.normal(size=m) * 3.0
        kh = rng.uniform(0.0, 10.0)
        lfb = rng.normal() * 5.0
        s = lfb + float(lgb @ u_ref) - kh
        if s <= 0.0:
            continue
        count += 1
        du = min_norm_correction(s, lgb, eps)
        post = s + float(lgb @ du)
        expected = s * eps / (float(lgb @ lgb) + eps)
        worst_post = max(worst_post, abs(post - expected))
        u_qp, infeasible = _qp_box_halfspace(u_ref, lgb, kh - lfb, None)
        du0 = min_norm_correction(s, lgb, 0.0)
        worst_qp = max(worst_qp, float(np.max(np.abs(u_qp - (u_ref + du0)))))
        assert not infeasible
    ok = worst_post <= 1e-9 and worst_qp <= 1e-8
    _line(7, ok, f"post-correction measure matches algebra to {worst_post:.2e} <= 1e-9, "
                 f"QP vs closed form to {worst_qp:.2e} <= 1e-8 on 10^4 tuples")


# ---------------------------------------------------------------------------
# 8. safety audit
# ---------------------------------------------------------------------------


def test_criterion_8_safety_audit(trained_pendulum, trained_unicycle,
                                  trained_quadrotor):
    all_ok = True
    detail = []
    for art in (trained_pendulum, trained_unicycle, trained_quadrotor):
        cfg = art["cfg"]
        report = audit_safety_condition(
            art["net"], art["sys"], art["ref"], cfg.filter,
            samples=10_000, gamma=0.9, seed=cfg.seed, tol=cfg.audit.tol,
        )
        all_ok &= report.violations_only_at_zero_lgb
        detail.append(
            f"{art['sys'].name}: viol {report.violation_fraction:.4f}, "
            f"zero-lgb {report.zero_lgb_fraction:.4f}"
        )
    _line(8, all_ok, "violations only at lgb=0 states; " + "; ".join(detail))


# ---------------------------------------------------------------------------
# 9. integrator order
# ---------------------------------------------------------------------------


def test_criterion_9_integrator_order():
    def decay_err(dt):
        x = np.array([1.0])
        for _ in range(int(round(1.0 / dt))):
            x = rk4_step(lambda z: -z, x, dt)
        return abs(x[0] - np.exp(-1.0))

    ratio = decay_err(0.1) / decay_err(0.05)
    from zcbf.dynamics import pendulum_system, zero_reference

    sys_ = pendulum_system()
    traj = rollout(sys_, None, zero_reference(1), None,
                   SimConfig(np.array([1.0, 0.0]), 10.0, 1e-3, "ref"))
    energy = 0.5 * traj.states[:, 1] ** 2 + np.cos(traj.states[:, 0])
    drift = float(np.max(np.abs(energy - energy[0])))
    ok = ratio >= 14.0 and drift < 1e-6
    _line(9, ok, f"halving dt shrinks error x{ratio:.1f} >= 14, "
                 f"pendulum energy drift {drift:.2e} < 1e-6")
