import numpy as np
import pytest

from afmloc.errors import ArgumentError
from afmloc.harness.presets import resolve
from afmloc.propagator import count_solves, forward_solve
from afmloc.refine import (
    IterateConfig,
    _widened,
    classify,
    feasible_box,
    locate_afpm,
    locate_iterative,
    location_gradient,
)
from afmloc.results import CostReport, LocationResult, SourceEstimate
from afmloc.trace import misfit

TRUTH = SourceEstimate((23.5, 11.0), 2.0, "truth")


@pytest.fixture(scope="module")
def desk():
    s = resolve({})
    observed = forward_solve(s.model, s.src.at(TRUTH.tau), TRUTH.xi, s.cfg, s.recv)
    return s, observed


def _misfit_sum(s, observed, x, z, t):
    syn = forward_solve(s.model, s.src.at(t), (x, z), s.cfg, s.recv)
    return misfit(observed, syn, labels=s.recv.active).total


def test_gradient_vanishes_at_truth(desk):
    s, observed = desk
    g = location_gradient(s.model, observed, TRUTH, s.cfg, s.recv, s.src)
    assert not np.any(g.vector)


def test_gradient_matches_central_differences(desk):
    s, observed = desk
    x, z, t = 24.3, 11.6, 2.1
    g = location_gradient(s.model, observed, SourceEstimate((x, z), t), s.cfg, s.recv,
                          s.src).vector
    h, dt = s.cfg.domain.dx, s.cfg.dt
    fd = np.array([
        (_misfit_sum(s, observed, x + h, z, t) - _misfit_sum(s, observed, x - h, z, t)) / (2 * h),
        (_misfit_sum(s, observed, x, z + h, t) - _misfit_sum(s, observed, x, z - h, t)) / (2 * h),
        (_misfit_sum(s, observed, x, z, t + dt) - _misfit_sum(s, observed, x, z, t - dt))
        / (2 * dt),
    ])
    assert abs(g[0] - fd[0]) <= 0.01 * abs(fd[0])
    assert abs(g[1] - fd[1]) <= 0.05 * abs(fd[1])
    assert abs(g[2] - fd[2]) <= 1e-6 * abs(fd[2])


def test_origin_time_derivative_sign(desk):
    s, observed = desk
    late = location_gradient(s.model, observed, SourceEstimate(TRUTH.xi, 2.05), s.cfg, s.recv,
                             s.src)
    early = location_gradient(s.model, observed, SourceEstimate(TRUTH.xi, 1.95), s.cfg,
                              s.recv, s.src)
    assert late.g_tau > 0 > early.g_tau


def test_gradient_reuses_synthetic(desk):
    s, observed = desk
    est = SourceEstimate((24.3, 11.6), 2.1)
    syn = forward_solve(s.model, s.src.at(est.tau), est.xi, s.cfg, s.recv)
    with count_solves() as n:
        a = location_gradient(s.model, observed, est, s.cfg, s.recv, s.src, synthetic=syn)
    assert n.count == len(s.recv.active)
    b = location_gradient(s.model, observed, est, s.cfg, s.recv, s.src, threads=2)
    assert np.array_equal(a.vector, b.vector)


def test_start_at_truth_stops_immediately(desk):
    s, observed = desk
    res = locate_iterative(TRUTH, s.iterate, observed, s.model, s.cfg, s.recv, s.src)
    assert res.status == "converged" and res.cost.iterations <= 1
    assert res.estimate.xi == TRUTH.xi and res.misfit_sum == 0.0


def test_one_cell_from_truth_converges_monotonically(desk):
    s, observed = desk
    start = SourceEstimate((24.0, 11.5), 2.1)
    with count_solves() as n:
        res = locate_iterative(start, s.iterate, observed, s.model, s.cfg, s.recv, s.src)
    assert res.converged
    assert res.estimate.distance(TRUTH) < 0.05 and abs(res.estimate.tau - TRUTH.tau) < 0.01
    J = [p.misfit_sum for p in res.trajectory]
    assert all(b <= a for a, b in zip(J, J[1:]))
    assert res.cost.solves == n.count
    assert res.cost.iterations <= s.iterate.max_iterations


def test_iterative_rejects_outside_start(desk):
    s, observed = desk
    with pytest.raises(ArgumentError):
        locate_iterative(SourceEstimate((50.0, 5.0), 1.0), s.iterate, observed, s.model, s.cfg,
                         s.recv, s.src)


def test_afpm_stage_accounting(desk):
    s, observed = desk
    with count_solves() as n:
        res = locate_afpm(SourceEstimate((15.0, 6.0), 1.5), s.grid, s.iterate, observed,
                          s.model, s.cfg, s.recv, s.src, s.epsilon)
    assert res.cost.solves == n.count
    assert res.cost.stages["afm"] == len(s.recv.active) + 2
    assert res.verified and res.converged
    assert res.estimate.distance(TRUTH) < 0.01
    assert [p.stage for p in res.trajectory][:2] == ["afm", "afm"]


def test_afpm_stops_on_failed_verification(desk):
    s, observed = desk
    res = locate_afpm(SourceEstimate((15.0, 6.0), 1.5), s.grid, s.iterate, observed, s.model,
                      s.cfg, s.recv, s.src, 0.0)
    assert res.status == "restart-needed" and not res.verified
    assert "iterate" not in res.cost.stages


def test_widened_grid_stays_on_lattice(desk):
    s, _ = desk
    w = _widened(s.grid, s.cfg)
    box = feasible_box(s.cfg)
    assert w.x_min >= box[0][0] and w.x_max <= box[0][1]
    assert w.t_min == 0.0 and w.t_max <= s.cfg.T
    assert ((w.x_min - s.grid.x_min) / s.grid.hx) % 1 == pytest.approx(0, abs=1e-9)
    w.check_inside(s.cfg.domain, s.cfg.T)


def test_iterate_config_validation():
    with pytest.raises(ArgumentError):
        IterateConfig(backtrack=1.5)
    with pytest.raises(ArgumentError):
        IterateConfig(max_iterations=0)


def _result(xi, tau, status):
    return LocationResult(SourceEstimate(xi, tau, "iterate"), [], status, CostReport(), 0.0)


def test_classify():
    assert classify(_result((23.9, 11.0), 2.05, "converged"), TRUTH) == "correct"
    assert classify(_result((25.0, 11.0), 2.0, "converged"), TRUTH) == "error"
    assert classify(_result((23.5, 11.0), 2.2, "converged"), TRUTH) == "error"
    assert classify(_result((23.5, 11.0), 2.0, "max-iterations"), TRUTH) == "diverge"
    assert classify(_result((23.5, 11.0), 2.0, "stalled"), TRUTH) == "diverge"
