"""Named problem setups and their resolution into solver objects."""

from __future__ import annotations

from dataclasses import dataclass

from ..afm_core import SearchGrid, default_epsilon
from ..errors import ConfigError
from ..media import Domain2D, SubductionModel, TwoLayerModel, load_gridded, rasterize
from ..propagator import ReceiverArray, SimConfig
from ..refine import IterateConfig
from ..source import RickerSource
from ..trace import NoiseSpec
from .config import Config

__all__ = ["PRESETS", "Setup", "resolve", "two_layer_receivers", "subduction_receivers"]


def two_layer_receivers():
    return [(5.0 * r - 2.5, 0.0) for r in range(1, 21)]


SUBDUCTION_X = (21, 33, 39, 58, 68, 74, 86, 98, 126, 132, 158, 197)


def subduction_receivers():
    return [(float(x), 0.0) for x in SUBDUCTION_X]


def _csv(vals):
    return ",".join(repr(float(v)) for v in vals)


_COMMON = {
    "sim.cfl_safety": "0.8",
    "sim.pml_width": "20",
    "sim.pml_reflection": "1e-4",
    "sim.stride": "1",
    "source.f0": "2.0",
    "source.amplitude": "1.0",
    "afm.restarts": "0",
    "afm.epsilon_per_receiver": "0.1",
    "afm.epsilon_per_receiver_noisy": "0.5",
    "iterate.max_iterations": "30",
    "iterate.initial_step": "1.0",
    "iterate.max_step": "4.0",
    "iterate.backtrack": "0.5",
    "iterate.armijo": "1e-4",
    "iterate.max_backtracks": "20",
    "iterate.tol_km": "0.005",
    "iterate.tol_s": "0.0005",
    "iterate.misfit_target": "1e-10",
    "noise.ratio": "0",
    "noise.seed": "0",
    "window.enabled": "false",
    "window.threshold": "0.02",
    "window.pad": "0.25",
    "experiment.trials": "20",
    "experiment.method": "afpm",
    "experiment.seed": "2024",
    "classify.pos_tol": "1.0",
    "classify.time_tol": "0.1",
    "run.threads": "1",
}

PRESETS = {
    # 40 x 20 km slice of the two-layer formula, sized for a laptop
    "desk": {
        **_COMMON,
        "model": "desk",
        "domain.x_min": "0", "domain.x_max": "40", "domain.z_min": "0", "domain.z_max": "20",
        "domain.dx": "0.2",
        "sim.T": "12",
        "receivers.x": _csv(2.5 + 5 * k for k in range(8)),
        "receivers.z": "0",
        "receivers.active": "1,3,5,6,8",
        "grid.x_min": "1", "grid.x_max": "39", "grid.z_min": "1", "grid.z_max": "19",
        "grid.hx": "0.5", "grid.hz": "0.5",
        "grid.t_min": "0", "grid.t_max": "4", "grid.sigma": "0.1",
        # off-node truths leave up to ~0.2 per receiver at the nearest node
        "afm.epsilon_per_receiver": "0.25",
        "experiment.truth_box": "4,36,2,16", "experiment.truth_tau": "1,3",
        "experiment.initial_box": "4,36,2,16", "experiment.initial_tau": "1,3",
    },
    "two-layer": {
        **_COMMON,
        "model": "two-layer",
        "domain.x_min": "-10", "domain.x_max": "110", "domain.z_min": "0",
        "domain.z_max": "50", "domain.dx": "0.2",
        "sim.T": "25",
        "sim.stride": "3",
        "receivers.x": _csv(x for x, _ in two_layer_receivers()),
        "receivers.z": "0",
        "receivers.active": "3,5,9,14,18",
        "grid.x_min": "0", "grid.x_max": "100", "grid.z_min": "0", "grid.z_max": "40",
        "grid.hx": "0.5", "grid.hz": "0.4",
        "grid.t_min": "0", "grid.t_max": "25", "grid.sigma": "0.1",
        "experiment.trials": "500",
        "experiment.truth_box": "0,100,0,40", "experiment.truth_tau": "5,20",
        "experiment.initial_box": "0,100,0,40", "experiment.initial_tau": "5,20",
    },
    "subduction": {
        **_COMMON,
        "model": "subduction",
        "domain.x_min": "0", "domain.x_max": "200", "domain.z_min": "0",
        "domain.z_max": "200", "domain.dx": "0.2",
        "sim.T": "55",
        "sim.stride": "3",
        "receivers.x": _csv(SUBDUCTION_X),
        "receivers.z": "0",
        "receivers.active": "1,2,3,4,5,6,7,8,9,10,11,12",
        "grid.x_min": "1", "grid.x_max": "199", "grid.z_min": "1", "grid.z_max": "195",
        "grid.hx": "1", "grid.hz": "1",
        "grid.t_min": "0", "grid.t_max": "30", "grid.sigma": "0.05",
        "experiment.trials": "20",
        "experiment.truth_box": "20,180,10,180", "experiment.truth_tau": "5,20",
        "experiment.initial_box": "20,180,10,180", "experiment.initial_tau": "5,20",
    },
}


@dataclass
class Setup:
    """Everything a location run needs, resolved from a preset plus overrides."""

    name: str
    model: object
    cfg: SimConfig
    recv: ReceiverArray
    src: RickerSource
    grid: SearchGrid
    iterate: IterateConfig
    epsilon: float
    noise: NoiseSpec
    window: dict
    stride: int
    restarts: int
    threads: int
    conf: Config


def _model(c: Config, domain):
    kind = c.str("model")
    if kind in ("desk", "two-layer"):
        return TwoLayerModel()
    if kind == "subduction":
        return SubductionModel()
    if kind == "gridded":
        return load_gridded(c.str("model.file"))
    raise ConfigError(f"unknown model {kind!r}")


def resolve(overrides: dict | None = None, preset=None) -> Setup:
    """Merge ``overrides`` over the preset named by ``preset`` (or the
    ``preset`` key, default ``desk``) and build the solver objects."""
    overrides = dict(overrides or {})
    name = preset or overrides.get("preset") or overrides.get("model") or "desk"
    if name == "gridded":
        name = "desk"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    c = Config({**PRESETS[name], **overrides})

    dx = c.float("domain.dx")
    domain = Domain2D.from_spacing(
        c.float("domain.x_min"), c.float("domain.x_max"),
        c.float("domain.z_min"), c.float("domain.z_max"),
        dx, c.float("domain.dz", dx),
    )
    model = _model(c, domain)
    f0 = c.float("source.f0")
    edges = dict(
        pml_width=c.int("sim.pml_width"),
        pml_reflection=c.float("sim.pml_reflection"),
        pml_frequency=f0,
        cfl_safety=c.float("sim.cfl_safety"),
    )
    T = c.float("sim.T")
    if "sim.dt" in c:
        dt = c.float("sim.dt")
        nt = int(round(T / dt)) + 1
        cfg = SimConfig(domain, dt, nt, **edges)
    else:
        cfg = SimConfig.auto(domain, rasterize(model, domain).vmax, T, **edges)

    xs = c.floats("receivers.x")
    zs = c.floats("receivers.z")
    if len(zs) == 1:
        zs = zs * len(xs)
    if len(zs) != len(xs):
        raise ConfigError("receivers.x and receivers.z differ in length")
    recv = ReceiverArray(list(zip(xs, zs)), tuple(c.ints("receivers.active")))
    src = RickerSource(f0, 0.0, c.float("source.amplitude"))
    grid = SearchGrid(
        c.float("grid.x_min"), c.float("grid.x_max"), c.float("grid.z_min"),
        c.float("grid.z_max"), c.float("grid.hx"), c.float("grid.hz"),
        c.float("grid.t_min"), c.float("grid.t_max"), c.float("grid.sigma"),
    )
    it = IterateConfig(
        scale=(grid.hx, grid.hz, grid.sigma),
        max_iterations=c.int("iterate.max_iterations"),
        initial_step=c.float("iterate.initial_step"),
        max_step=c.float("iterate.max_step"),
        backtrack=c.float("iterate.backtrack"),
        armijo=c.float("iterate.armijo"),
        max_backtracks=c.int("iterate.max_backtracks"),
        tol_km=c.float("iterate.tol_km"),
        tol_s=c.float("iterate.tol_s"),
        misfit_target=c.float("iterate.misfit_target"),
    )
    noise = NoiseSpec(c.float("noise.ratio"), c.int("noise.seed"))
    n_active = len(recv.active)
    eps = c.float("afm.epsilon", default_epsilon(
        n_active, noise.ratio > 0, c.float("afm.epsilon_per_receiver"),
        c.float("afm.epsilon_per_receiver_noisy")))
    window = {
        "enabled": c.bool("window.enabled"),
        "threshold": c.float("window.threshold"),
        "pad": c.float("window.pad"),
        "overrides": {
            int(k[len("window.r"):]): tuple(c.floats(k, n=2))
            for k in c.values if k.startswith("window.r") and k[len("window.r"):].isdigit()
        },
    }
    return Setup(
        name=name, model=model, cfg=cfg, recv=recv, src=src, grid=grid, iterate=it,
        epsilon=eps, noise=noise, window=window, stride=c.int("sim.stride"),
        restarts=c.int("afm.restarts"), threads=c.int("run.threads"), conf=c,
    )
