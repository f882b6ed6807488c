"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 verification failed
or location did not converge, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ..afm_core import locate_afm, write_gamma_csv
from ..errors import AfmError, DegenerateTraceError, NumericalBlowupError
from ..propagator import Seismogram
from ..refine import classify
from ..results import SourceEstimate
from .config import load_config, parse_config
from .experiment import (
    METHODS,
    ExperimentPlan,
    observe,
    pick_window,
    run_experiment,
    run_location,
)
from .figures import emit_figure_data
from .presets import PRESETS, resolve

EXIT_OK, EXIT_USAGE, EXIT_UNVERIFIED, EXIT_NUMERICAL = 0, 2, 3, 4
THREADS_ENV = "AFMLOC_THREADS"


class _UsageError(Exception):
    pass


def _floats(text, n, what):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise _UsageError(f"{what}: expected {n} comma-separated numbers") from None
    if len(vals) != n:
        raise _UsageError(f"{what}: expected {n} comma-separated numbers")
    return vals


def _ints(text, what):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise _UsageError(f"{what}: expected comma-separated integers") from None


def _overrides(args) -> dict:
    values = {}
    if args.config:
        values.update(load_config(args.config))
    if args.preset:
        values["preset"] = args.preset
        values["model"] = args.preset
    for item in args.set or []:
        if "=" not in item:
            raise _UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values.update(parse_config(f"{k.strip()} = {v.strip()}", "--set"))
    threads = args.threads or os.environ.get(THREADS_ENV)
    if threads:
        values["run.threads"] = str(int(threads))
    return values


def _setup(args, extra=None):
    values = _overrides(args)
    values.update(extra or {})
    return resolve(values)


def _print_result(res, truth=None):
    e = res.estimate
    line = (f"estimate x={e.xi[0]:.4f} km z={e.xi[1]:.4f} km tau={e.tau:.4f} s "
            f"status={res.status} misfit_sum={res.misfit_sum:.6g} "
            f"solves={res.cost.solves} iterations={res.cost.iterations}")
    if truth is not None:
        line += f" error_km={e.distance(truth):.4f} class={classify(res, truth)}"
    print(line)


def cmd_simulate(args):
    extra = {}
    if args.noise is not None:
        extra["noise.ratio"] = str(args.noise)
    if args.seed is not None:
        extra["noise.seed"] = str(args.seed)
    s = _setup(args, extra)
    x, z = _floats(args.xi, 2, "--xi")
    truth = SourceEstimate((x, z), args.tau, "truth")
    obs = observe(s, truth, s.noise)
    obs.to_csv(args.out)
    print(f"wrote {len(obs.labels)} traces x {obs.nt} samples to {args.out}")
    return EXIT_OK


def _location_inputs(args, extra=None):
    extra = dict(extra or {})
    if args.receivers:
        extra["receivers.active"] = ",".join(str(k) for k in _ints(args.receivers, "--receivers"))
    if args.epsilon is not None:
        extra["afm.epsilon"] = str(args.epsilon)
    if args.window is not None:
        extra["window.enabled"] = "true" if args.window else "false"
    s = _setup(args, extra)
    obs = Seismogram.from_csv(args.data)
    if obs.nt != s.cfg.nt or abs(obs.dt - s.cfg.dt) > 1e-9 * s.cfg.dt:
        raise _UsageError(
            f"data time axis (dt={obs.dt:.6g}, nt={obs.nt}) does not match the "
            f"configured solver (dt={s.cfg.dt:.6g}, nt={s.cfg.nt})"
        )
    obs = Seismogram(s.cfg.dt, obs.data, obs.labels)
    x, z, t = _floats(args.init, 3, "--init")
    initial = SourceEstimate((x, z), t, "initial")
    truth = None
    if getattr(args, "truth", None):
        tx, tz, tt = _floats(args.truth, 3, "--truth")
        truth = SourceEstimate((tx, tz), tt, "truth")
    return s, obs, initial, truth, pick_window(s, obs)


def cmd_locate(args):
    extra = {"afm.restarts": "1"} if args.retry else {}
    s, obs, initial, truth, window = _location_inputs(args, extra)
    res = run_location(s, args.method, obs, initial, window)
    if args.method == "afm" and args.retry and not res.verified:
        from ..refine import _widened

        wide = _widened(s.grid, s.cfg)
        res = locate_afm(obs, s.model, s.cfg, s.recv, wide, res.estimate, s.epsilon, s.src,
                         window, stride=s.stride, threads=s.threads)
    _print_result(res, truth)
    if args.out_dir:
        out = Path(args.out_dir)
        emit_figure_data(res, "trajectory", out, truth=truth)
        if res.surface is not None:
            write_gamma_csv(out / "gamma.csv", res.surface)
    return EXIT_OK if res.converged else EXIT_UNVERIFIED


def cmd_surface(args):
    s, obs, initial, truth, window = _location_inputs(args)
    res = locate_afm(obs, s.model, s.cfg, s.recv, s.grid, initial, s.epsilon, s.src, window,
                     stride=s.stride, threads=s.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_gamma_csv(out / "gamma.csv", res.surface)
    kw = {}
    if args.slice_at:
        x, z, t = _floats(args.slice_at, 3, "--slice-at")
        kw = {"xi": (x, z), "tau": t}
    emit_figure_data(res.surface, "gamma_slices", out, **kw)
    _print_result(res, truth)
    return EXIT_OK if res.verified else EXIT_UNVERIFIED


def cmd_experiment(args):
    values = {}
    if args.plan:
        values.update(load_config(args.plan))
    s = _setup(args, values)
    kw = {}
    if args.method:
        kw["method"] = args.method
    if args.trials:
        kw["trials"] = args.trials
    if args.seed is not None:
        kw["seed"] = args.seed
    plan = ExperimentPlan.from_setup(s, **kw)

    def progress(rec):
        print(f"trial {rec.trial}: {rec.classification} {rec.note}".rstrip(), flush=True)

    records, summary = run_experiment(plan, args.out_dir, threads=s.threads,
                                      progress=progress)
    emit_figure_data([r.truth.distance(r.initial) for r in records], "histogram",
                     args.out_dir, upper=_diag(plan))
    for k, v in summary.items():
        print(f"{k} = {v}")
    return EXIT_OK


def _diag(plan):
    tb, ib = plan.truth_box, plan.initial_box
    x0, x1 = min(tb[0], ib[0]), max(tb[1], ib[1])
    z0, z1 = min(tb[2], ib[2]), max(tb[3], ib[3])
    return ((x1 - x0) ** 2 + (z1 - z0) ** 2) ** 0.5


def cmd_selftest(args):
    from .selftest import run_selftest

    return EXIT_OK if run_selftest(print) else EXIT_NUMERICAL


def _common(defaults=True):
    # subcommands must not reset options given before the subcommand name
    kw = {} if defaults else {"argument_default": argparse.SUPPRESS}
    common = argparse.ArgumentParser(add_help=False, **kw)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--preset", "--model", dest="preset",
                        choices=sorted(PRESETS),
                        help="problem preset (default desk)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--threads", type=int,
                        help=f"worker threads (also ${THREADS_ENV})")
    return common


def build_parser():
    p = argparse.ArgumentParser(prog="afmloc", parents=[_common()],
                                description="Waveform-based earthquake location.")
    common = _common(defaults=False)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[common], help="truth -> observed CSV")
    sp.add_argument("--xi", required=True, help="x,z in km")
    sp.add_argument("--tau", required=True, type=float, help="origin time in s")
    sp.add_argument("--out", required=True)
    sp.add_argument("--noise", type=float, help="noise ratio R")
    sp.add_argument("--seed", type=int, help="noise seed")
    sp.set_defaults(func=cmd_simulate)

    def location_args(q):
        q.add_argument("--data", required=True, help="observed seismogram CSV")
        q.add_argument("--init", required=True, help="initial x,z,tau")
        q.add_argument("--receivers", help="active receiver labels, e.g. 3,5,9,14,18")
        q.add_argument("--epsilon", type=float, help="verification tolerance")
        q.add_argument("--truth", help="true x,z,tau (adds error reporting)")
        g = q.add_mutually_exclusive_group()
        g.add_argument("--window", dest="window", action="store_true", default=None)
        g.add_argument("--no-window", dest="window", action="store_false")

    lp = sub.add_parser("locate", parents=[common], help="locate one event")
    location_args(lp)
    lp.add_argument("--method", choices=METHODS, default="afpm")
    lp.add_argument("--retry", action="store_true",
                    help="after a failed verification, search once more over the whole domain")
    lp.add_argument("--out-dir")
    lp.set_defaults(func=cmd_locate)

    sp = sub.add_parser("surface", parents=[common], help="export the Gamma surface")
    location_args(sp)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--slice-at", help="x,z,tau of the cross-section point (default argmin)")
    sp.set_defaults(func=cmd_surface)

    ep = sub.add_parser("experiment", parents=[common], help="batch of random trials")
    ep.add_argument("--plan", help="plan file (same format as --config)")
    ep.add_argument("--method", choices=METHODS)
    ep.add_argument("--trials", type=int)
    ep.add_argument("--seed", type=int)
    ep.add_argument("--out-dir", required=True)
    ep.set_defaults(func=cmd_experiment)

    tp = sub.add_parser("selftest", parents=[common], help="quick invariant checks")
    tp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"afmloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalBlowupError, DegenerateTraceError) as exc:
        print(f"afmloc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AfmError as exc:
        print(f"afmloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"afmloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
