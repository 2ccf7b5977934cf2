"""Command line entry point: ``star-rsma {run,sweep,replay,selftest}``.

Settings are layered: built-in defaults, then ``--config`` file, then
``STAR_RSMA_<KEY>`` environment variables, then explicit flags.
Exit status: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import channel
from .baselines import SchemeId, solve_scheme
from .config import SystemConfig, env_overrides, known_keys, read_kv_file
from .errors import ConfigurationError, NumericError
from .experiments import SweepSpec, format_csv, run_sweep
from .optimizer import OptimizerSettings

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

RUN_HEADER = ("scheme", "seed", "min_rate", "R_c", "relaxed_min_rate", "worst_residual", "feasible", "outer_iterations")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="star-rsma", description="Secure RSMA with a STAR-RIS: optimizer and sweep harness.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key=value scenario/optimizer file")
        sp.add_argument("--solver-tol", type=float, help="conic solver tolerance")

    r = sub.add_parser("run", help="optimize one scenario and print its rate report")
    common(r)
    r.add_argument("--scheme", default="RSMA_STAR")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="write the result CSV row here instead of stdout")
    r.add_argument("--trace", help="write the convergence trace CSV here")
    r.add_argument("--save-channels", help="serialize the channel realization here")

    s = sub.add_parser("sweep", help="Monte-Carlo sweep described by a sweep file")
    common(s)
    s.add_argument("--sweep-spec", "--spec", dest="sweep_spec", required=True)
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--cache", help="directory for per-run result caching")

    rp = sub.add_parser("replay", help="optimize a serialized channel realization")
    common(rp)
    rp.add_argument("channels")
    rp.add_argument("--scheme", default="RSMA_STAR")
    rp.add_argument("--out")

    st = sub.add_parser("selftest", help="run the built-in invariant checks")
    st.add_argument("--instances", type=int, default=20)
    return p


def _layered(args) -> tuple[SystemConfig, OptimizerSettings, dict]:
    values = read_kv_file(args.config) if getattr(args, "config", None) else {}
    opt_keys = OptimizerSettings.keys()
    keys = known_keys(SystemConfig) | opt_keys | {"snr_dB", "inv_sigmaE2_dB"}
    values.update(env_overrides(keys))
    extra = {k: v for k, v in values.items() if k not in keys}
    opt = {k: v for k, v in values.items() if k in opt_keys}
    sys_vals = {k: v for k, v in values.items() if k in keys and k not in opt_keys}
    cfg = SystemConfig.from_mapping(sys_vals)
    settings = OptimizerSettings.from_mapping(opt)
    if getattr(args, "solver_tol", None) is not None:
        settings = settings.replace(solver_tol=args.solver_tol)
    return cfg, settings, extra


def _run_row(scheme: SchemeId, seed: int, res) -> str:
    rep = res.report
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_HEADER)
    w.writerow([scheme.value, seed, repr(rep.min_rate), repr(rep.R_c), repr(res.relaxed_min_rate),
                repr(rep.worst_residual), int(bool(rep.feasible)), len(res.trace) - 1])
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path:
        try:
            with open(path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigurationError(f"cannot write {path}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _optimize_and_report(args, cs, cfg, settings) -> int:
    scheme = SchemeId.parse(args.scheme)
    res = solve_scheme(scheme, cs, cfg, settings)
    sys.stderr.write(res.report.to_kv())
    if getattr(args, "trace", None):
        res.trace.to_csv(args.trace)
    _emit(_run_row(scheme, cs.seed, res), args.out)
    return EXIT_OK if res.report.feasible else EXIT_NUMERIC


def cmd_run(args) -> int:
    cfg, settings, extra = _layered(args)
    if extra:
        raise ConfigurationError(f"unknown configuration keys: {', '.join(sorted(extra))}")
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    cs = channel.generate(cfg, cfg.seed)
    if args.save_channels:
        channel.save(cs, args.save_channels)
    return _optimize_and_report(args, cs, cfg, settings)


def cmd_replay(args) -> int:
    _, settings, _ = _layered(args)
    cs = channel.load(args.channels)
    return _optimize_and_report(args, cs, cs.cfg, settings)


def cmd_sweep(args) -> int:
    base, settings, _ = _layered(args)
    values = read_kv_file(args.sweep_spec)
    spec = SweepSpec.from_mapping(values, base, settings)
    if args.out:
        spec.out = args.out
    if args.workers < 1:
        raise ConfigurationError("--workers must be >= 1")
    rows = run_sweep(spec, workers=args.workers, cache_dir=args.cache)
    if not spec.out:
        sys.stdout.write(format_csv(rows, spec))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from . import selftest

    failures = selftest.run_all(n_instances=args.instances, out=sys.stdout)
    return EXIT_OK if not failures else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "replay": cmd_replay, "selftest": cmd_selftest}
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
