"""Fast invariant checks for ``afmloc selftest``."""

from __future__ import annotations

import numpy as np

from ..afm_core import SearchGrid, locate_afm
from ..media import Domain2D, TwoLayerModel
from ..propagator import (
    ReceiverArray,
    Seismogram,
    SimConfig,
    adjoint_solve,
    count_solves,
    forward_solve,
    simulate,
)
from ..results import SourceEstimate
from ..source import RickerSource, delta_weights_1d
from ..trace import misfit

__all__ = ["CHECKS", "run_selftest"]


def check_delta():
    rng = np.random.default_rng(0)
    worst = 0.0
    for c in rng.uniform(0, 1, 20):
        _, w = delta_weights_1d(c, 0.0, 0.2)
        worst = max(worst, abs(w.sum() * 0.2 - 1.0))
    return worst < 1e-10, f"max |sum(w)h - 1| = {worst:.2e}"


def check_misfit():
    t = np.linspace(0, 4, 401)
    d = Seismogram(t[1] - t[0], np.sin(3 * t)[None, :])
    same = misfit(d, d).chi[0]
    zero = misfit(d, Seismogram(d.dt, np.zeros_like(d.data))).chi[0]
    return same == 0.0 and zero == 0.5, f"chi(d,d) = {same}, chi(d,0) = {zero}"


def _small():
    d = Domain2D.from_spacing(0, 16, 0, 8, 0.2)
    return d, TwoLayerModel()


def check_adjoint():
    d, model = _small()
    cfg = SimConfig.auto(d, 7.0, 3.0, bottom="reflecting", left="reflecting",
                         right="reflecting")
    rng = np.random.default_rng(1)
    g, a = rng.standard_normal(cfg.nt), rng.standard_normal(cfg.nt)
    src, rec = (5.13, 4.37), (11.7, 0.0)
    u, _ = simulate(model, cfg, [(src, g)], [rec])
    w = adjoint_solve(model, a, rec, cfg, search_nodes=[src])
    lhs = float(a @ u[0]) * cfg.dt
    rhs = float(g @ w.values[0]) * cfg.dt
    rel = abs(lhs - rhs) / abs(lhs)
    return rel < 1e-6, f"relative dot-product mismatch = {rel:.2e}"


def check_afm():
    d, model = _small()
    cfg = SimConfig.auto(d, 7.0, 6.0, pml_width=10)
    recv = ReceiverArray([(2.0 + 3.0 * k, 0.0) for k in range(5)])
    src = RickerSource(2.0)
    grid = SearchGrid(3, 13, 1, 6, 0.5, 0.5, 0, 2, 0.1)
    truth = SourceEstimate((8.5, 3.0), 1.0, "truth")
    obs = forward_solve(model, src.at(truth.tau), truth.xi, cfg, recv)
    with count_solves() as n:
        res = locate_afm(obs, model, cfg, recv, grid,
                         SourceEstimate((5.0, 4.5), 0.4, "initial"), 0.5, src)
    ok = n.count == len(recv.active) + 2 and res.estimate.distance(truth) < 1e-9
    return ok, (f"{n.count} solves, argmin ({res.estimate.xi[0]:.2f}, "
                f"{res.estimate.xi[1]:.2f}, {res.estimate.tau:.2f})")


CHECKS = (
    ("delta partition of unity", check_delta),
    ("misfit identities", check_misfit),
    ("adjoint dot product", check_adjoint),
    ("direct search on a node truth", check_afm),
)


def run_selftest(report=print) -> bool:
    """Run every check, reporting one line each; True iff all pass."""
    ok_all = True
    for name, fn in CHECKS:
        ok, detail = fn()
        ok_all &= ok
        report(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok_all
