"""Flat ``key = value`` configuration files.

Keys are dotted (``grid.hx = 0.5``); ``#`` starts a comment.  Values stay
strings until a typed getter converts them, so a config is just a dict and
presets are written in the same form.
"""

from __future__ import annotations

from pathlib import Path

from ..errors import ConfigError

__all__ = ["parse_config", "load_config", "Config", "KNOWN_KEYS"]

# every accepted key, with a one-line meaning (``window.r<k>`` is a pattern)
KNOWN_KEYS = {
    "preset": "desk | two-layer | subduction: base values for every other key",
    "model": "desk | two-layer | subduction | gridded",
    "model.file": "gridded velocity file (model = gridded)",
    "domain.x_min": "km", "domain.x_max": "km", "domain.z_min": "km", "domain.z_max": "km",
    "domain.dx": "solver spacing in km", "domain.dz": "solver spacing in km (default dx)",
    "sim.T": "record length in s",
    "sim.dt": "time step in s (default: CFL limit times sim.cfl_safety)",
    "sim.cfl_safety": "fraction of the stability limit",
    "sim.pml_width": "PML cells", "sim.pml_reflection": "PML target reflection",
    "sim.stride": "adjoint sample stride in solver steps",
    "source.f0": "dominant frequency in Hz", "source.amplitude": "Ricker amplitude",
    "receivers.x": "comma list, km", "receivers.z": "comma list or one value, km",
    "receivers.active": "comma list of 1-based labels",
    "grid.x_min": "km", "grid.x_max": "km", "grid.z_min": "km", "grid.z_max": "km",
    "grid.hx": "km", "grid.hz": "km", "grid.t_min": "s", "grid.t_max": "s",
    "grid.sigma": "s",
    "afm.epsilon": "verification tolerance (default afm.epsilon_per_receiver * #R)",
    "afm.epsilon_per_receiver": "noise-free tolerance per active receiver",
    "afm.epsilon_per_receiver_noisy": "tolerance per active receiver when noise.ratio > 0",
    "afm.restarts": "widened re-searches after a failed verification",
    "iterate.max_iterations": "", "iterate.initial_step": "cells",
    "iterate.max_step": "cells", "iterate.backtrack": "", "iterate.armijo": "",
    "iterate.max_backtracks": "", "iterate.tol_km": "", "iterate.tol_s": "",
    "iterate.misfit_target": "",
    "noise.ratio": "noise level R", "noise.seed": "noise seed",
    "window.enabled": "true | false", "window.threshold": "fraction of envelope peak",
    "window.pad": "s",
    "experiment.trials": "", "experiment.method": "afm | afpm | iterative",
    "experiment.seed": "master seed",
    "experiment.truth_box": "x0,x1,z0,z1", "experiment.truth_tau": "t0,t1",
    "experiment.initial_box": "x0,x1,z0,z1", "experiment.initial_tau": "t0,t1",
    "classify.pos_tol": "km", "classify.time_tol": "s",
    "run.threads": "worker threads",
}


def _known(key):
    if key in KNOWN_KEYS:
        return True
    return key.startswith("window.r") and key[len("window.r"):].isdigit()


def parse_config(text, source="<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not _known(key):
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


class Config:
    """Typed read access to a flat key/value mapping."""

    def __init__(self, values: dict):
        self.values = dict(values)

    def __contains__(self, key):
        return key in self.values

    def str(self, key, default=None):
        v = self.values.get(key, default)
        if v is None:
            raise ConfigError(f"missing config key {key!r}")
        return str(v)

    def float(self, key, default=None):
        v = self.values.get(key, default)
        if v is None:
            raise ConfigError(f"missing config key {key!r}")
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{key}: not a number: {v!r}") from None

    def int(self, key, default=None):
        v = self.float(key, default)
        if v != int(v):
            raise ConfigError(f"{key}: not an integer: {v!r}")
        return int(v)

    def bool(self, key, default=None):
        v = self.str(key, default).lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {v!r}")

    def floats(self, key, default=None, n=None):
        v = self.str(key, default)
        try:
            vals = [float(p) for p in v.split(",") if p.strip()]
        except ValueError:
            raise ConfigError(f"{key}: not a number list: {v!r}") from None
        if n is not None and len(vals) != n:
            raise ConfigError(f"{key}: expected {n} values, got {len(vals)}")
        return vals

    def ints(self, key, default=None):
        vals = self.floats(key, default)
        if any(v != int(v) for v in vals):
            raise ConfigError(f"{key}: expected integers")
        return [int(v) for v in vals]
