import numpy as np
import pytest

from malmit import topology, virus
from malmit.bounds import (BoundReport, check_final_patch_sum,
                           check_patch_rate_curve, check_q_final,
                           filter_rate_upper, final_patch_sum_bound,
                           patch_rate_lower_curve, q_final_bound)
from malmit.control import ControllerConfig, integrate_controlled
from malmit.errors import DomainError
from malmit.meanfield import SubsetSystem


def test_curve_endpoints():
    assert patch_rate_lower_curve(0.0, 2.0, 7.0, 4, 1.5, 2) == pytest.approx(7.0)
    assert patch_rate_lower_curve(1e9, 2.0, 7.0, 4, 1.5, 2) == pytest.approx(6.0)
    with pytest.raises(DomainError):
        patch_rate_lower_curve(1.0, 2.0, 7.0, 0, 1.5, 2)


def test_curve_is_pure_function():
    t = np.linspace(0, 5, 11)
    a = patch_rate_lower_curve(t, 2.0, 1.0, 5, 1.0, 2)
    b = patch_rate_lower_curve(t, 2.0, 1.0, 5, 1.0, 2)
    assert np.array_equal(a, b)


def test_final_patch_sum_values():
    total, avg = final_patch_sum_bound(2.0, 990, 100, 1.0)
    assert total == pytest.approx(2180.0)
    assert avg == pytest.approx(2.0 * 19.8 + 2.0)
    # alpha -> 0 limit collapses to the edge mass
    total0, _ = final_patch_sum_bound(2.0, 990, 100, 0.0)
    assert total0 == pytest.approx(1980.0)


def test_filter_rate_upper_pole_and_sign(coex2):
    net = topology.erdos_renyi(30, 0.3, 2)
    beta = np.full(30, 10.0)
    near = filter_rate_upper(0.499, 1e-3, net, coex2, beta)
    far = filter_rate_upper(0.1, 1e-3, net, coex2, beta)
    assert near > far > 0.0
    with pytest.raises(DomainError):
        filter_rate_upper(0.5, 1e-3, net, coex2, beta)
    with pytest.raises(DomainError):
        filter_rate_upper(0.6, 1e-3, net, coex2, beta)


def test_q_final_bound_values(coex2):
    degrees = np.full(100, 19.8)
    assert q_final_bound(0.0, np.full(100, 10.0), degrees, 2, 0.5) \
        == pytest.approx(0.5)
    assert q_final_bound(100.0, np.full(100, 10.0), degrees, 2, 0.5) == 1.0
    # arithmetic on the paper-scale inputs: sum deg/beta = 2*990/10
    net = topology.erdos_renyi(100, 0.2, 13)
    assert net.n_edges == 990
    val = q_final_bound(0.001, np.full(100, 10.0), net.degrees, 2, 0.5)
    assert val == pytest.approx(0.5 + 2 * 0.001 * 198.0)


def test_report_serializes():
    rep = BoundReport(name="x", bound=1.0, observed=0.5, satisfied=True,
                      slack=0.5)
    d = rep.to_dict()
    assert d["name"] == "x" and d["satisfied"] is True


@pytest.fixture(scope="module")
def ring_monotone_run():
    """Homogeneous single-virus run started at the endemic profile, the
    regime where the rate lower-curve's fixed-point step applies per host."""
    n, half = 60, 3
    pairs = [(i, (i + d) % n) for i in range(n) for d in range(1, half + 1)]
    net = topology.from_edge_list(n, pairs)
    model = virus.VirusModel(names=("v1",), mu=np.array([1.0]),
                             p_default=np.array([1.0]))
    system = SubsetSystem(net, model)
    beta0 = np.full(n, 2.0)
    warm = system.integrate(np.full((n, 1), 0.5), beta0, horizon=30.0, h=5e-3,
                            grid=np.array([0.0, 30.0]))
    traj = {}
    for alpha in (10.0, 50.0):
        cfg = ControllerConfig(kind="monotone", alpha=alpha)
        traj[alpha] = integrate_controlled(
            net, model, warm.x[-1], beta0, cfg, dynamics="subset",
            horizon=10.0, h=1e-3, grid=np.linspace(0, 10, 201))
    return net, model, traj


def test_patch_curve_band_on_homogeneous_run(ring_monotone_run):
    net, model, traj = ring_monotone_run
    for alpha, run in traj.items():
        rep = check_patch_rate_curve(run, net, model, alpha)
        assert rep.approximate
        assert rep.satisfied, f"alpha={alpha}: {rep}"


def test_final_patch_sum_on_competing_run():
    net = topology.erdos_renyi(100, 0.2, 13)
    model = virus.competing([1.0, 2.0], mu=[2.0, 4.0])
    system = SubsetSystem(net, model)
    x0 = np.zeros((net.n, 2))
    x0[:, :] = 0.2
    alpha = 1.0
    beta0 = model.lambda_max * net.degrees + np.sqrt(alpha)
    cfg = ControllerConfig(kind="monotone", alpha=alpha)
    run = integrate_controlled(net, model, x0, beta0, cfg, dynamics="subset",
                               horizon=8.0, h=2e-3, grid=np.linspace(0, 8, 81))
    total, avg = check_final_patch_sum(run, net, model, alpha)
    assert avg.satisfied          # per-host average form holds
    assert "precondition" not in avg.note
    # the single-count total form undercounts the initial mass it requires
    assert not total.satisfied
    assert total.observed > total.bound


def test_q_final_check_on_filter_run(coex2):
    net = topology.erdos_renyi(40, 0.2, 8)
    system = SubsetSystem(net, coex2)
    x0 = np.zeros((net.n, 3))
    x0[:, :2] = 0.15
    beta0 = np.full(net.n, 10.0)
    cfg = ControllerConfig(kind="filter", gamma=1e-3)
    run = integrate_controlled(net, coex2, x0, beta0, cfg, q0=0.05,
                               dynamics="subset", horizon=6.0, h=2e-3,
                               grid=np.linspace(0, 6, 61))
    rep = check_q_final(run, net, coex2, 1e-3, beta0)
    assert rep.satisfied
    assert rep.bound <= 1.0
