import numpy as np
import pytest

from zcbf import net
from zcbf.barrier import (
    SafetyFilterConfig,
    filtered_control,
    h_from_b,
    lie_derivatives,
    min_norm_correction,
    qp_filtered_control,
    safety_measure,
    w_to_b,
)
from zcbf.dynamics import pendulum_system, unicycle_system, zero_reference
from zcbf.zubov import beta


# ---------------------------------------------------------------------------
# scalar transforms
# ---------------------------------------------------------------------------


def test_w_to_b_examples():
    assert w_to_b(0.0, 1.0) == 0.0
    assert np.isclose(w_to_b(np.tanh(2.0), 1.0, w_clamp=1e-12), 2.0)
    wc = 1e-3
    expected = np.log((2.0 - wc) / wc) / 2.0
    assert np.isclose(w_to_b(1.0, 1.0, wc), expected)
    assert np.isfinite(w_to_b(1.0, 1.0, wc))


def test_w_to_b_clamps_negative_to_zero():
    assert w_to_b(-0.7, 1.0) == 0.0


def test_w_to_b_monotone():
    w = np.linspace(0.0, 0.999, 500)
    b = np.array([w_to_b(v, 1.0) for v in w])
    assert np.all(np.diff(b) >= 0.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_beta_inversion_roundtrip_on_w(alpha):
    for w in np.linspace(0.01, 0.99, 99):
        assert abs(beta(w_to_b(w, alpha), alpha) - w) <= 1e-9


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_w_to_b_inverts_beta_on_s(alpha):
    for s in np.linspace(0.01, 5.0, 200):
        back = w_to_b(beta(s, alpha), alpha, w_clamp=1e-15)
        assert abs(back - s) <= 1e-9 * max(1.0, s)


def test_h_from_b():
    assert h_from_b(2.0) == 0.5
    assert np.isclose(h_from_b(0.0), 1e9, rtol=1e-12)  # cap engaged
    for h in np.logspace(-3, 3, 25):
        assert abs(h_from_b(1.0 / h) - h) <= 1e-9 * h


# ---------------------------------------------------------------------------
# Lie derivatives
# ---------------------------------------------------------------------------


def _positive_w_net(dims, seed, target=0.5):
    """Random net nudged so the value at tested states is well inside (0, 1)."""
    netobj = net.init(dims, seed=seed)
    theta = netobj.theta.copy()
    theta[-1] = np.arctanh(target)  # output bias pushes W toward target
    return netobj.with_theta(theta)


def test_lie_derivatives_zero_gradient():
    netobj = net.init([2, 4, 1], seed=0)
    theta = netobj.theta.copy()
    theta[: 2 * 4] = 0.0  # constant net
    netobj = netobj.with_theta(theta)
    cfg = SafetyFilterConfig(alpha=1.0)
    lfb, lgb = lie_derivatives(netobj, pendulum_system(), cfg, np.array([0.3, 0.2]))
    assert lfb == 0.0
    assert np.array_equal(lgb, np.zeros(1))


def test_lie_derivatives_pendulum_lgb_zero(rng):
    sys_ = pendulum_system()
    cfg = SafetyFilterConfig(alpha=1.0)
    netobj = _positive_w_net([2, 8, 1], 3)
    for _ in range(5):
        x = rng.uniform(sys_.domain.lower, sys_.domain.upper)
        _, lgb = lie_derivatives(netobj, sys_, cfg, x)
        assert np.array_equal(lgb, np.zeros(1))


def test_gradient_of_b_matches_finite_differences(rng):
    sys_ = unicycle_system(0.5)
    cfg = SafetyFilterConfig(alpha=1.0)
    netobj = _positive_w_net([3, 8, 1], 1)
    for _ in range(10):
        x = rng.uniform(-1.5, 1.5, 3)
        lfb, lgb = lie_derivatives(netobj, sys_, cfg, x)
        h = 1e-6
        grad_fd = np.empty(3)
        for i in range(3):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            bp = w_to_b(net.forward(netobj, xp), cfg.alpha, cfg.w_clamp)
            bm = w_to_b(net.forward(netobj, xm), cfg.alpha, cfg.w_clamp)
            grad_fd[i] = (bp - bm) / (2 * h)
        lfb_fd = float(grad_fd @ sys_.f(x))
        lgb_fd = grad_fd @ sys_.g(x)
        assert abs(lfb - lfb_fd) <= 1e-4 * max(1.0, abs(lfb_fd))
        assert np.allclose(lgb, lgb_fd, rtol=1e-4, atol=1e-8)


# ---------------------------------------------------------------------------
# safety measure and correction
# ---------------------------------------------------------------------------


def test_safety_measure_arithmetic():
    assert safety_measure(0.0, np.zeros(1), np.zeros(1), 1.0, 1.0) == -1.0
    assert safety_measure(2.0, np.array([1.0]), np.array([1.0]), 1.0, 1.0) == 2.0


def test_min_norm_correction_cases():
    assert np.array_equal(min_norm_correction(-0.5, np.array([1.0, 2.0]), 1e-6),
                          np.zeros(2))
    assert np.array_equal(min_norm_correction(0.0, np.array([1.0]), 1e-6), np.zeros(1))
    du = min_norm_correction(1.0, np.array([1.0, 0.0]), 1e-12)
    assert np.allclose(du, [-1.0, 0.0], atol=1e-9)
    # zero direction: no usable correction
    assert np.array_equal(min_norm_correction(3.0, np.zeros(2), 1e-6), np.zeros(2))


def test_min_norm_post_measure_algebra(rng):
    eps = 1e-6
    for _ in range(200):
        m = rng.integers(1, 3)
        lgb = rng.normal(size=m) * rng.uniform(0.1, 10)
        s = rng.uniform(1e-3, 10)
        du = min_norm_correction(s, lgb, eps)
        post = s + float(lgb @ du)
        expected = s * eps / (float(lgb @ lgb) + eps)
        assert abs(post - expected) <= 1e-9


def test_min_norm_is_minimal_among_grid(rng):
    # any grid point achieving at least the same constraint reduction is no shorter
    eps = 1e-8
    for trial in range(10):
        lgb = rng.normal(size=2)
        while np.linalg.norm(lgb) < 0.3:
            lgb = rng.normal(size=2)
        s = rng.uniform(0.5, 3.0)
        du = min_norm_correction(s, lgb, eps)
        achieved = s + float(lgb @ du)
        lim = 4 * np.linalg.norm(du) + 1.0
        gx = np.linspace(-lim, lim, 81)
        cand = np.stack(np.meshgrid(gx, gx), axis=-1).reshape(-1, 2)
        ok = s + cand @ lgb <= achieved + 1e-12
        norms = np.linalg.norm(cand[ok], axis=1)
        assert np.linalg.norm(du) <= norms.min() + 1e-6


def test_filtered_control_noop_when_measure_nonpositive():
    # constant-zero net: W = 0 everywhere, B = 0, h huge, s < 0
    dims = [3, 4, 1]
    netobj = net.init(dims, seed=0).with_theta(np.zeros(net.param_count(dims)))
    sys_ = unicycle_system(0.5)
    ref = lambda x: np.array([0.7])
    cfg = SafetyFilterConfig(alpha=1.0)
    u, diag = filtered_control(netobj, sys_, ref, cfg, np.array([0.5, 0.5, 0.0]))
    assert np.array_equal(u, ref(None))
    assert not diag.corrected
    assert diag.s < 0.0
    assert diag.W == 0.0 and np.isclose(diag.h, 1e9, rtol=1e-12)


def test_filtered_control_pendulum_passthrough(tiny_pendulum, rng):
    sys_, ref, tcfg, netobj, _ = tiny_pendulum
    cfg = SafetyFilterConfig(alpha=tcfg.alpha)
    for _ in range(20):
        x = rng.uniform(sys_.domain.lower, sys_.domain.upper)
        u, diag = filtered_control(netobj, sys_, ref, cfg, x)
        assert np.array_equal(u, ref(x))
        assert np.array_equal(diag.lgb, np.zeros(1))
        assert not diag.corrected


def test_filtered_control_post_measure_bound(tiny_unicycle, rng):
    sys_, ref, tcfg, netobj, _ = tiny_unicycle
    # small kappa tightens the constraint enough that the correction fires
    cfg = SafetyFilterConfig(alpha=tcfg.alpha, kappa=0.05, epsilon=1e-6)
    checked = 0
    for _ in range(400):
        x = rng.uniform(sys_.domain.lower, sys_.domain.upper)
        u, diag = filtered_control(netobj, sys_, ref, cfg, x)
        if diag.corrected:
            post = diag.lfb + float(diag.lgb @ u) - cfg.kappa * diag.h
            bound = diag.s * cfg.epsilon / (float(diag.lgb @ diag.lgb) + cfg.epsilon)
            assert post <= bound + 1e-9
            checked += 1
    assert checked > 0  # the filter actually intervened somewhere


def test_filtered_control_clips_to_bounds(tiny_unicycle):
    sys_, ref, tcfg, netobj, _ = tiny_unicycle
    bounds = np.array([[-0.05, 0.05]])
    cfg = SafetyFilterConfig(alpha=tcfg.alpha, u_bounds=bounds)
    big_ref = lambda x: np.array([3.0])
    u, diag = filtered_control(netobj, sys_, big_ref, cfg, np.array([0.5, 0.5, 0.0]))
    assert -0.05 <= u[0] <= 0.05
    assert diag.clipped


# ---------------------------------------------------------------------------
# QP variant
# ---------------------------------------------------------------------------


def _qp_instance(rng, m, with_box):
    lgb = rng.normal(size=m)
    u_ref = rng.normal(size=m)
    kh = rng.uniform(0.1, 2.0)
    lfb = rng.normal() * 2
    bounds = None
    if with_box:
        lo = rng.uniform(-3, -0.5, m)
        hi = rng.uniform(0.5, 3, m)
        bounds = np.stack([lo, hi], axis=1)
    return lfb, lgb, u_ref, kh, bounds


def _solve_qp_dense(lfb, lgb, u_ref, kh, bounds, grid=301):
    lo = bounds[:, 0] if bounds is not None else np.full(lgb.size, -6.0)
    hi = bounds[:, 1] if bounds is not None else np.full(lgb.size, 6.0)
    axes = [np.linspace(lo[j], hi[j], grid) for j in range(lgb.size)]
    pts = np.stack(np.meshgrid(*axes), axis=-1).reshape(-1, lgb.size)
    feas = lfb + pts @ lgb <= kh + 1e-9
    if not np.any(feas):
        return None
    cand = pts[feas]
    costs = np.sum((cand - u_ref) ** 2, axis=1)
    return cand[np.argmin(costs)]


def test_qp_interior_optimum_returns_reference(rng):
    from zcbf.barrier import _qp_box_halfspace

    for _ in range(50):
        m = int(rng.integers(1, 3))
        lfb, lgb, u_ref, kh, bounds = _qp_instance(rng, m, with_box=False)
        if lfb + float(lgb @ u_ref) <= kh:
            u, infeasible = _qp_box_halfspace(u_ref, lgb, kh - lfb, None)
            assert not infeasible
            assert np.allclose(u, u_ref)


def test_qp_no_box_matches_closed_form(rng):
    from zcbf.barrier import _qp_box_halfspace

    for _ in range(300):
        m = int(rng.integers(1, 3))
        lfb, lgb, u_ref, kh, _ = _qp_instance(rng, m, with_box=False)
        if float(lgb @ lgb) < 1e-6:
            continue
        u, infeasible = _qp_box_halfspace(u_ref, lgb, kh - lfb, None)
        assert not infeasible
        s = lfb + float(lgb @ u_ref) - kh
        du = min_norm_correction(s, lgb, 0.0)
        assert np.allclose(u, u_ref + du, atol=1e-8)


def test_qp_with_box_matches_dense_search(rng):
    from zcbf.barrier import _qp_box_halfspace

    for _ in range(40):
        m = 2
        lfb, lgb, u_ref, kh, bounds = _qp_instance(rng, m, with_box=True)
        u, infeasible = _qp_box_halfspace(u_ref, lgb, kh - lfb, bounds)
        ref_sol = _solve_qp_dense(lfb, lgb, u_ref, kh, bounds)
        if ref_sol is None:
            assert infeasible
            continue
        assert not infeasible
        assert np.all(u >= bounds[:, 0] - 1e-12)
        assert np.all(u <= bounds[:, 1] + 1e-12)
        assert lfb + float(lgb @ u) <= kh + 1e-8
        # dense-search cost can exceed the exact one by the grid resolution
        assert np.sum((u - u_ref) ** 2) <= np.sum((ref_sol - u_ref) ** 2) + 1e-3


def test_qp_kkt_conditions_when_box_binds(rng):
    from zcbf.barrier import _qp_box_halfspace

    checked = 0
    for _ in range(200):
        lfb, lgb, u_ref, kh, bounds = _qp_instance(rng, 2, with_box=True)
        if float(lgb @ lgb) < 1e-6:
            continue
        u, infeasible = _qp_box_halfspace(u_ref, lgb, kh - lfb, bounds)
        if infeasible:
            continue
        at_lo = np.isclose(u, bounds[:, 0], atol=1e-10)
        at_hi = np.isclose(u, bounds[:, 1], atol=1e-10)
        active_plane = np.isclose(lfb + float(lgb @ u), kh, atol=1e-8)
        if not (active_plane and np.any(at_lo | at_hi)):
            continue
        free = ~(at_lo | at_hi)
        if not np.any(free):
            continue
        # stationarity on free coords fixes the multiplier of the plane
        j = int(np.argmax(free))
        lam = (u_ref[j] - u[j]) / lgb[j]
        assert lam >= -1e-8
        for k in range(2):
            grad_k = (u[k] - u_ref[k]) + lam * lgb[k]
            if free[k]:
                assert abs(grad_k) <= 1e-8
            elif at_hi[k]:
                assert grad_k <= 1e-8  # multiplier of u <= hi must be >= 0
            else:
                assert grad_k >= -1e-8
        checked += 1
    assert checked > 0


def test_qp_infeasible_flag_and_best_effort():
    from zcbf.barrier import _qp_box_halfspace

    bounds = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    # require a . u <= -10 with a = (1, 1): unreachable in the box
    u, infeasible = _qp_box_halfspace(np.zeros(2), np.array([1.0, 1.0]), -10.0, bounds)
    assert infeasible
    assert np.allclose(u, [-1.0, -1.0])  # least-violation corner


def test_qp_filtered_control_agrees_with_closed_form(tiny_unicycle, rng):
    sys_, ref, tcfg, netobj, _ = tiny_unicycle
    cfg_qp = SafetyFilterConfig(alpha=tcfg.alpha, epsilon=1e-6)
    cfg_eps0 = SafetyFilterConfig(alpha=tcfg.alpha, epsilon=0.0)
    for _ in range(100):
        x = rng.uniform(sys_.domain.lower, sys_.domain.upper)
        u_qp, diag = qp_filtered_control(netobj, sys_, ref, cfg_qp, x)
        u_cf, _ = filtered_control(netobj, sys_, ref, cfg_eps0, x)
        assert np.allclose(u_qp, u_cf, atol=1e-8)
        assert not diag.infeasible


def test_filter_continuity_across_switching_surface():
    # synthetic path: s crosses zero linearly while lgb stays fixed
    lgb = np.array([0.8, -0.4])
    eps = 1e-6
    taus = np.linspace(-1e-3, 1e-3, 41)
    prev = None
    for tau in taus:
        du = min_norm_correction(tau, lgb, eps)
        if prev is not None:
            assert np.linalg.norm(du - prev) <= 1e-3
        prev = du
    # jump at the surface shrinks with the step
    for step in (1e-4, 1e-6, 1e-8):
        jump = np.linalg.norm(min_norm_correction(step, lgb, eps)
                              - min_norm_correction(-step, lgb, eps))
        assert jump <= 2 * step


def test_filter_config_validation():
    with pytest.raises(ValueError):
        SafetyFilterConfig(alpha=0.0)
    with pytest.raises(ValueError):
        SafetyFilterConfig(w_clamp=0.7)
    with pytest.raises(ValueError):
        SafetyFilterConfig(u_bounds=np.array([[1.0, -1.0]]))
