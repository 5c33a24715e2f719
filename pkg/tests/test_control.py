import numpy as np
import pytest

from malmit import kernels, topology, virus
from malmit.control import (ControllerConfig, aggregate_passivity_gap,
                            filter_deriv, filter_on_event,
                            integrate_controlled, linearized_jacobian,
                            monotone_patch_deriv, monotone_patch_on_event,
                            monotone_storage, monotone_storage_rate,
                            nonmonotone_fixed_point, nonmonotone_patch_deriv,
                            nonmonotone_patch_on_event)
from malmit.errors import MultiVirusUnsupported
from malmit.linalg import hurwitz
from malmit.markov import trial_rng
from malmit.meanfield import SubsetSystem


def test_monotone_deriv_values():
    assert monotone_patch_deriv(0.0, 50.0) == 0.0
    assert monotone_patch_deriv(0.4, 50.0) == pytest.approx(20.0)
    assert np.all(monotone_patch_deriv(np.linspace(0, 1, 7), 3.0) >= 0.0)


def test_monotone_event_uses_preupdate_rate():
    assert monotone_patch_on_event(10.0, 50.0) == pytest.approx(15.0)


def test_nonmonotone_deriv_and_fixed_point():
    # clamp binds at the rate floor; above it clean mass pulls beta down
    assert nonmonotone_patch_deriv(0.0, 1.0, 0.1) == 0.0
    assert nonmonotone_patch_deriv(0.0, 1.0, 0.1, beta=2.0) == pytest.approx(-0.1)
    assert nonmonotone_patch_deriv(0.5, 1.0, 0.1, beta=2.0) == pytest.approx(0.45)
    x_star, beta_star = nonmonotone_fixed_point(1.0, 0.1, 1.0, 5)
    assert x_star == pytest.approx(1.0 / 11.0)
    assert beta_star == pytest.approx(50.0 / 11.0)


def test_nonmonotone_events():
    assert nonmonotone_patch_on_event(2.0, clean=True, alpha=1.0, gamma=0.1) \
        == pytest.approx(1.95)
    floored = nonmonotone_patch_on_event(1e-3, clean=True, alpha=1.0,
                                         gamma=0.1, beta_floor=1e-3)
    assert floored == 1e-3
    assert nonmonotone_patch_on_event(2.0, clean=False, alpha=1.0, gamma=0.1) \
        == pytest.approx(2.5)


def test_filter_deriv_endpoints(edge2):
    model = virus.coexisting([1.0], mu=[1.0])
    assert filter_deriv(np.zeros((2, 1)), edge2, model, 0.5, 0.01) == 0.0
    assert filter_deriv(np.ones((2, 1)), edge2, model, 0.5, 0.01) == 0.0
    one_sided = filter_deriv(np.array([[1.0], [0.0]]), edge2, model, 0.5, 0.01)
    assert one_sided == pytest.approx(0.01)
    assert filter_deriv(np.array([[1.0], [0.0]]), edge2, model, 1.0, 0.01) == 0.0


def test_filter_event_increment_and_cap():
    assert filter_on_event(0.5, 0.05) == pytest.approx(0.6)
    assert filter_on_event(1.0, 0.05) == 1.0


def test_controller_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(kind="monotone", alpha=0.0)
    with pytest.raises(ValueError):
        ControllerConfig(kind="warp")
    cfg = ControllerConfig(kind="joint", alpha=2.0, gamma=0.1)
    assert cfg.on_patch_detect(4.0) == pytest.approx(4.5)
    assert cfg.on_filter_detect(0.5) == pytest.approx(0.7)
    assert not cfg.wants_clean_inspection
    assert ControllerConfig(kind="nonmonotone", alpha=1.0).wants_clean_inspection


def test_monotone_beta_nondecreasing_ode(path3, coex2):
    x0 = np.zeros((3, 3))
    x0[:, 0] = 0.4
    cfg = ControllerConfig(kind="monotone", alpha=5.0)
    traj = integrate_controlled(path3, coex2, x0, 1.0, cfg, dynamics="subset",
                                horizon=3.0, h=1e-3)
    assert np.all(np.diff(traj.beta, axis=0) >= -1e-12)


def test_filter_q_monotone_and_bounded(path3, coex2):
    x0 = np.zeros((3, 3))
    x0[:, :2] = 0.4
    cfg = ControllerConfig(kind="filter", gamma=0.05)
    traj = integrate_controlled(path3, coex2, x0, 1.0, cfg, q0=0.2,
                                dynamics="subset", horizon=3.0, h=1e-3)
    assert np.all(np.diff(traj.q) >= -1e-12)
    assert traj.q.max() <= 1.0 and traj.q.min() > 0.0


def test_nonmonotone_requires_single_virus(path3, coex2):
    cfg = ControllerConfig(kind="nonmonotone", alpha=1.0, gamma=0.1)
    with pytest.raises(MultiVirusUnsupported):
        integrate_controlled(path3, coex2, np.zeros((3, 3)), 1.0, cfg)


def test_aggregate_dynamics_reject_filter(path3, coex2):
    cfg = ControllerConfig(kind="filter", gamma=0.1)
    with pytest.raises(ValueError):
        integrate_controlled(path3, coex2, np.zeros((3, 3)), 1.0, cfg, q0=0.1,
                             dynamics="aggregate")


def test_joint_law_clears_infection(path3, coex2):
    x0 = np.zeros((3, 3))
    x0[:, :2] = 0.4
    cfg = ControllerConfig(kind="joint", alpha=10.0, gamma=0.01)
    traj = integrate_controlled(path3, coex2, x0, 0.5, cfg, q0=0.05,
                                dynamics="subset", horizon=20.0, h=2e-3)
    assert traj.xbar_v[-1].max() < 1e-3


def test_jacobian_structure(path3):
    J = linearized_jacobian(path3, 1.0, 0.1, 1.0)
    n = 3
    assert J.shape == (6, 6)
    abar = J[:n, :n]
    assert np.allclose(np.diag(abar), -path3.degrees * 1.0)
    assert abar[0, 1] == pytest.approx(1.0 / 1.1)
    assert abar[0, 2] == 0.0
    assert np.allclose(J[:n, n:], -(0.1 / 1.1) * np.eye(n))
    assert np.allclose(J[n:, :n], 1.1 * np.eye(n))
    assert np.allclose(J[n:, n:], 0.0)


def test_jacobian_hurwitz_small(path3):
    assert hurwitz(linearized_jacobian(path3, 1.0, 0.1, 1.0)) is True


def test_drift_equivalence_event_forms():
    """Expected parameter drift of the event rules matches the ODE laws."""
    net = topology.from_edge_list(
        6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)])
    model = virus.coexisting([1.0, 2.0], mu=[2.0, 4.0])
    masks0 = np.array([1, 0, 2, 3, 0, 1], dtype=np.int32)
    indptr, indices = net.csr()
    lam_tab = model.lam_table()
    compete = np.asarray(model.compete, np.int32)
    tau, trials = 0.02, 20000
    grid = np.array([tau])

    def mc_drift(kind, alpha, gamma, q0, beta0):
        acc_b = acc_q = 0.0
        for k in range(trials):
            rng = trial_rng(33, k)
            _, bm, qo = kernels.run_trial(
                indptr, indices, lam_tab, model.mu, compete, masks0,
                np.full(6, beta0), q0, kernels.CTRL_CODES[kind], alpha, gamma,
                1e-3, grid, rng)
            acc_b += bm[0]
            acc_q += qo[0]
        return ((acc_b / trials - beta0) / tau * 6,
                (acc_q / trials - q0) / tau)

    xbar0 = (masks0 != 0).astype(float)
    db, _ = mc_drift("monotone", 5.0, 0.0, 0.0, 2.0)
    assert db == pytest.approx(5.0 * xbar0.sum(), rel=0.03)

    _, dq = mc_drift("filter", 0.0, 0.05, 0.4, 2.0)
    xv = np.stack([(masks0 >> v) & 1 for v in range(2)], axis=1).astype(float)
    expect = filter_deriv(xv, net, model, 0.4, 0.05)
    assert dq == pytest.approx(expect, rel=0.05)


def test_drift_equivalence_nonmonotone():
    net = topology.from_edge_list(4, [(0, 1), (1, 2), (2, 3)])
    model = virus.coexisting([1.0])
    masks0 = np.array([1, 0, 1, 0], dtype=np.int32)
    indptr, indices = net.csr()
    tau, trials = 0.02, 20000
    acc = 0.0
    for k in range(trials):
        rng = trial_rng(5, k)
        _, bm, _ = kernels.run_trial(
            indptr, indices, model.lam_table(), model.mu,
            np.asarray(model.compete, np.int32), masks0, np.full(4, 2.0), 0.0,
            kernels.CTRL_CODES["nonmonotone"], 1.0, 0.4, 1e-3,
            np.array([tau]), rng)
        acc += bm[0]
    drift = (acc / trials - 2.0) / tau * 4
    x0 = (masks0 != 0).astype(float)
    expect = nonmonotone_patch_deriv(x0, 1.0, 0.4, beta=np.full(4, 2.0)).sum()
    assert drift == pytest.approx(expect, rel=0.05)


def test_monotone_mc_beta_tracks_ode(coex2):
    """Mean event-driven patch-rate trajectory follows the ODE co-simulation."""
    from malmit.markov import monte_carlo
    net = topology.erdos_renyi(100, 0.2, 13)
    cfg = ControllerConfig(kind="monotone", alpha=5.0)
    grid = np.linspace(0.0, 1.0, 11)
    mc = monte_carlo(net, coex2, [0.2, 0.2], 10.0, controller=cfg, trials=400,
                     horizon=1.0, grid=grid, seed=21)
    sysm = SubsetSystem(net, coex2)
    x0 = np.zeros((net.n, sysm.nsets))
    x0[:, :2] = 0.2
    ode = integrate_controlled(net, coex2, x0, np.full(net.n, 10.0), cfg,
                               dynamics="subset", horizon=1.0, h=1e-3,
                               grid=grid)
    # allow the small mean-field closure bias on top of sampling noise
    gap = np.abs(mc.mean_beta - ode.mean_beta)
    assert np.all(gap <= 3.0 * mc.se_beta + 0.05)


def test_monotone_storage_certificates(coex2):
    net = topology.erdos_renyi(30, 0.2, 6)
    cfg = ControllerConfig(kind="monotone", alpha=10.0)
    x0 = np.full(net.n, 0.4)
    traj = integrate_controlled(net, coex2, x0.reshape(-1, 1), 5.0, cfg,
                                dynamics="aggregate", horizon=4.0, h=1e-3,
                                grid=np.linspace(0, 4, 81))
    lam_hat = coex2.lambda_hat
    w_prev = None
    for k in range(len(traj.t)):
        xbar = traj.xbar[k]
        beta = traj.beta[k]
        assert monotone_storage_rate(xbar, beta, net, lam_hat, 10.0) <= 1e-8
        assert aggregate_passivity_gap(xbar, beta, net, lam_hat) <= 1e-8
        w = monotone_storage(xbar, beta, net, lam_hat, 10.0)
        if w_prev is not None:
            assert w <= w_prev + 1e-8
        w_prev = w
