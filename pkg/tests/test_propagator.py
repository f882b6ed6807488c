import threading

import numpy as np
import pytest

from afmloc.errors import ArgumentError, ConfigError, ConsistencyError, NumericalBlowupError
from afmloc.media import Domain2D, TwoLayerModel
from afmloc.propagator import (
    C_SCHEME,
    FieldSnapshot,
    ReceiverArray,
    Seismogram,
    SimConfig,
    adjoint_solve,
    count_solves,
    energy,
    forward_solve,
    reset_solve_counter,
    simulate,
    solve_counter,
    stable_dt,
)
from afmloc.source import RickerSource, ricker

from conftest import REFLECTING, homogeneous


def _dot_product_mismatch(cfg, model):
    rng = np.random.default_rng(5)
    g, a = rng.standard_normal(cfg.nt), rng.standard_normal(cfg.nt)
    pa, pb = (5.13, 4.37), (11.71, 0.0)
    u, _ = simulate(model, cfg, [(pa, g)], [pb])
    w = adjoint_solve(model, a, pb, cfg, search_nodes=[pa])
    lhs = float(a @ u[0]) * cfg.dt
    rhs = float(g @ w.values[0]) * cfg.dt
    return abs(lhs - rhs) / abs(lhs)


def test_dot_product_reflecting(reflecting_cfg):
    assert _dot_product_mismatch(reflecting_cfg, TwoLayerModel()) <= 1e-6


def test_dot_product_pml(small_domain):
    cfg = SimConfig.auto(small_domain, 7.0, 3.0, pml_width=10)
    assert _dot_product_mismatch(cfg, TwoLayerModel()) <= 1e-3


def test_zero_source_gives_zero_traces(reflecting_cfg):
    recv = ReceiverArray([(4.0, 0.0), (9.0, 3.0)])
    s = forward_solve(TwoLayerModel(), RickerSource(2.0, 1.0, 0.0), (8.0, 4.0),
                      reflecting_cfg, recv)
    assert not np.any(s.data)


def test_zero_residual_gives_zero_adjoint(reflecting_cfg):
    w = adjoint_solve(TwoLayerModel(), np.zeros(reflecting_cfg.nt), (6.0, 0.0),
                      reflecting_cfg, search_nodes=[(8.0, 4.0)], xi=(7.0, 3.0))
    assert not np.any(w.values) and not np.any(w.w_xi) and not np.any(w.grad_xi)


def test_travel_time_homogeneous():
    d = Domain2D.from_spacing(0, 40, 0, 20, 0.2)
    model = homogeneous(d, 5.0)
    f0 = 2.0
    cfg = SimConfig.auto(d, 5.0, 9.0, top="pml", pml_frequency=f0)
    s = forward_solve(model, RickerSource(f0, 2.0), (10.0, 10.0), cfg,
                      ReceiverArray([(30.0, 10.0)]))
    tr = np.abs(s.data[0])
    first = s.t[np.argmax(tr > 0.01 * tr.max())]
    assert abs(first - 6.0) <= 1 / f0


def test_runs_are_bit_identical(reflecting_cfg):
    recv = ReceiverArray([(4.0, 0.0), (9.0, 3.0)])
    a = forward_solve(TwoLayerModel(), RickerSource(2.0, 0.6), (8.3, 4.1), reflecting_cfg, recv)
    b = forward_solve(TwoLayerModel(), RickerSource(2.0, 0.6), (8.3, 4.1), reflecting_cfg, recv)
    assert np.array_equal(a.data, b.data)


def test_stride_subsamples(reflecting_cfg):
    rng = np.random.default_rng(2)
    r = rng.standard_normal(reflecting_cfg.nt)
    nodes = [(7.0, 3.0), (9.5, 2.5)]
    full = adjoint_solve(TwoLayerModel(), r, (6.0, 0.0), reflecting_cfg, search_nodes=nodes)
    sub = adjoint_solve(TwoLayerModel(), r, (6.0, 0.0), reflecting_cfg, search_nodes=nodes,
                        stride=3)
    assert np.array_equal(sub.values, full.values[:, ::3])
    assert sub.dt == pytest.approx(3 * reflecting_cfg.dt)


def test_reversal_is_an_involution():
    r = np.random.default_rng(0).standard_normal(101)
    assert np.array_equal(r[::-1][::-1], r)


def test_reciprocity_homogeneous():
    d = Domain2D.from_spacing(0, 12, 0, 10, 0.2)
    model = homogeneous(d, 4.0)
    cfg = SimConfig.auto(d, 4.0, 4.0, top="reflecting", **REFLECTING)
    amp = ricker(RickerSource(2.0, 0.7), cfg.t)
    a, b = (3.3, 4.1), (8.9, 6.7)
    ab, _ = simulate(model, cfg, [(a, amp)], [b])
    ba, _ = simulate(model, cfg, [(b, amp)], [a])
    scale = np.abs(ab).max()
    assert np.abs(ab - ba).max() / scale <= 1e-6


def test_pml_reflection_below_one_percent():
    f0 = 2.0
    d = Domain2D.from_spacing(0, 40, 0, 30, 0.2)
    big = Domain2D.from_spacing(-60, 100, 0, 90, 0.2)
    cfg = SimConfig.auto(d, 5.0, 14.0, top="pml", pml_frequency=f0)
    ref_cfg = SimConfig(big, cfg.dt, cfg.nt, top="reflecting", **REFLECTING)
    amp = ricker(RickerSource(f0, 0.6), cfg.t)
    u, _ = simulate(homogeneous(d), cfg, [((20.0, 15.0), amp)], [(28.0, 15.0)])
    ref, _ = simulate(homogeneous(big), ref_cfg, [((20.0, 45.0), amp)], [(28.0, 45.0)])
    # the reference domain is large enough that nothing returns within T
    assert np.abs(u - ref).max() <= 0.01 * np.abs(ref).max()


def test_grid_convergence_ratio():
    f0, c = 1.0, 5.0
    src = RickerSource(f0, 1.2)
    traces = []
    dt0 = n0 = None
    for k, h in enumerate((0.2, 0.1, 0.05)):
        d = Domain2D.from_spacing(0, 12, 0, 12, h)
        if k == 0:
            dt0 = stable_dt(d, c, 0.8)
            n0 = int(round(3.0 / dt0))
        cfg = SimConfig(d, dt0 / 2**k, n0 * 2**k + 1, top="reflecting", **REFLECTING)
        u, _ = simulate(homogeneous(d, c), cfg, [((5.03, 5.51), ricker(src, cfg.t))],
                        [(8.47, 7.13)])
        traces.append(u[0][:: 2**k])
    e1 = np.abs(traces[0] - traces[1]).max()
    e2 = np.abs(traces[1] - traces[2]).max()
    assert e1 / e2 >= 3


def test_energy_conserved_with_neumann_edges(small_domain):
    cfg = SimConfig.auto(small_domain, 7.0, 6.0, **REFLECTING)
    src = RickerSource(2.0, 0.5)
    after = int((0.5 + 3 / 2.0) / cfg.dt) + 1
    steps = list(range(after, cfg.nt - 1, 40))
    _, snaps = forward_solve(TwoLayerModel(), src, (8.0, 4.0), cfg,
                             ReceiverArray([(8.0, 0.0)]), snapshot_steps=steps)
    e = np.array([energy(s, TwoLayerModel(), small_domain) for s in snaps])
    assert np.ptp(e) / e.mean() <= 0.01


def test_energy_decays_with_pml():
    d = Domain2D.from_spacing(0, 16, 0, 16, 0.2)
    cfg = SimConfig.auto(d, 5.0, 8.0, top="pml", pml_width=20)
    steps = list(range(int(3.0 / cfg.dt), cfg.nt - 1, 20))
    _, snaps = forward_solve(homogeneous(d), RickerSource(2.0, 0.6), (8.0, 8.0), cfg,
                             ReceiverArray([(8.0, 1.0)]), snapshot_steps=steps)
    e = np.array([energy(s, homogeneous(d), d) for s in snaps])
    assert np.all(e[1:] <= e[:-1] * 1.01)
    assert e[-1] < 0.05 * e[0]


def test_energy_of_zero_field(small_domain):
    z = np.zeros(small_domain.shape)
    assert energy(FieldSnapshot(0, 0.01, z, z), TwoLayerModel(), small_domain) == 0.0


def test_solve_counter(reflecting_cfg):
    reset_solve_counter()
    assert solve_counter() == 0
    forward_solve(TwoLayerModel(), RickerSource(2.0, 0.5), (8.0, 4.0), reflecting_cfg,
                  ReceiverArray([(4.0, 0.0)]))
    assert solve_counter() == 1
    with count_solves() as n:
        adjoint_solve(TwoLayerModel(), np.ones(reflecting_cfg.nt), (4.0, 0.0), reflecting_cfg)
    assert n.count == 1 and solve_counter() == 2


def test_solve_counter_thread_safe(reflecting_cfg):
    model = TwoLayerModel()
    recv = ReceiverArray([(4.0, 0.0)])

    def work():
        forward_solve(model, RickerSource(2.0, 0.5), (8.0, 4.0), reflecting_cfg, recv)

    with count_solves() as n:
        threads = [threading.Thread(target=work) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert n.count == 4


def test_cfl_violation_is_config_error(small_domain):
    dt = 2 * stable_dt(small_domain, 7.0, 1.0)
    cfg = SimConfig(small_domain, dt, 20)
    with pytest.raises(ConfigError):
        forward_solve(TwoLayerModel(), RickerSource(2.0), (8.0, 4.0), cfg,
                      ReceiverArray([(4.0, 0.0)]))


def test_blowup_reports_step(reflecting_cfg):
    amp = np.zeros(reflecting_cfg.nt)
    amp[10] = np.inf
    with pytest.raises(NumericalBlowupError) as e:
        simulate(TwoLayerModel(), reflecting_cfg, [((8.0, 4.0), amp)], [(8.0, 4.0)])
    assert e.value.step == 11


def test_stable_dt_matches_constant():
    d = Domain2D.from_spacing(0, 10, 0, 10, 0.1)
    assert stable_dt(d, 5.0, 1.0) == pytest.approx(C_SCHEME * 0.1 / (5.0 * np.sqrt(2)))


def test_config_validation(small_domain):
    with pytest.raises(ConfigError):
        SimConfig(small_domain, 0.01, 10, bottom="free_surface")
    with pytest.raises(ConfigError):
        SimConfig(small_domain, 0.01, 10, cfl_safety=1.5)
    with pytest.raises(ConfigError):
        SimConfig(small_domain, -0.01, 10)
    cfg = SimConfig.auto(small_domain, 7.0, 3.0)
    assert cfg.T == pytest.approx(3.0) and cfg.pads() == (0, 20, 20, 20)


def test_receiver_array():
    r = ReceiverArray([(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], active=(3, 1))
    assert r.labels == (1, 2, 3) and r.active == (1, 3)
    assert r.position(2) == (2.0, 0.0)
    with pytest.raises(ArgumentError):
        ReceiverArray([(1.0, 0.0)], active=(2,))


def test_seismogram_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    s = Seismogram(0.0123, rng.standard_normal((3, 50)), (2, 5, 7))
    s.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "t,r2,r5,r7"
    back = Seismogram.from_csv(tmp_path / "d.csv")
    assert back.labels == s.labels and np.array_equal(back.data, s.data)
    assert back.dt == pytest.approx(s.dt, rel=1e-12)


def test_seismogram_rejects_nan():
    with pytest.raises(ArgumentError):
        Seismogram(0.01, np.array([[0.0, np.nan, 1.0]]))


def test_seismogram_compatibility():
    a = Seismogram(0.01, np.zeros((1, 10)))
    with pytest.raises(ConsistencyError):
        a.check_compatible(Seismogram(0.01, np.zeros((1, 11))))
