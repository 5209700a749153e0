"""Command-line entry point: ``macsim run|figures|trace|validate``.

Exit codes: 0 success, 1 configuration error, 2 runtime fault,
3 self-check (``--check``) violation.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from .experiment import (
    ConfigError,
    ExperimentConfig,
    apply_seed_env,
    coerce_value,
    parse_config,
    run_checks,
    run_experiment,
    sweep_figures,
    to_csv,
    trend_checks,
    write_csv,
)
from .kernel import COMPILED, S, SimulationFault, TraceWriter
from .network import Network

EXIT_OK, EXIT_CONFIG, EXIT_FAULT, EXIT_CHECK = 0, 1, 2, 3

_HELP = {
    "protocol": "bop or frog",
    "node_count": "nodes including the sink (2..11)",
    "fragment_payload": "FROG-MAC fragment payload in bytes (2..121)",
    "duration": "simulated time, e.g. 1000, 100s, 500ms",
    "replications": "independent runs per point",
    "master_seed": "replication r uses master_seed + r",
    "urgent_law": "poisson or cbr",
    "urgent_interval": "mean urgent inter-arrival per node",
    "normal_law": "poisson or cbr",
    "normal_interval": "normal inter-arrival per node",
    "payload_len": "application payload bytes",
    "queue_capacity": "packets per class per node",
    "t_int": "FROG-MAC interruptible pause",
    "slot_time": "backoff slot",
    "per_byte_time": "airtime per byte",
    "max_retries": "retries before a packet is dropped",
    "warmup": "initial time excluded from delay and throughput",
    "bop_rts_cts": "BoP-MAC uses an RTS/CTS handshake (true/false)",
    "output": "output file (default: stdout)",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage mistakes are configuration errors, not runtime faults
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser, skip=()) -> None:
    p.add_argument("-c", "--config", type=Path, help="key = value config file")
    for f in fields(ExperimentConfig):
        if f.name in skip:
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar="VALUE",
                       help=_HELP.get(f.name))
    p.add_argument("--pure", action="store_true", help="force the pure-Python kernel")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="macsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"macsim {__version__} ({'compiled' if COMPILED else 'pure-Python'} kernel)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one configuration and print its CSV rows")
    _add_config_flags(p)
    p.add_argument("-j", "--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--check", action="store_true", help="exit 3 if a run invariant fails")

    p = sub.add_parser("figures", help="full sweep writing fig4a/fig4b/fig5a/fig5b CSVs")
    _add_config_flags(p, skip=("protocol", "node_count", "fragment_payload", "output"))
    p.add_argument("-o", "--out-dir", type=Path, default=Path("."), help="directory for the CSVs")
    p.add_argument("-j", "--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--check", action="store_true",
                   help="exit 3 if a run invariant or an expected trend fails")

    p = sub.add_parser("trace", help="one run, dumping every dispatched event")
    _add_config_flags(p)
    p.add_argument("--replication", type=int, default=0, help="trace the run seeded master_seed + N")

    p = sub.add_parser("validate", help="check a configuration and print it resolved")
    _add_config_flags(p)
    return parser


def resolve_config(args) -> ExperimentConfig:
    """File values, then MACSIM_SEED, then command-line flags."""
    cfg = ExperimentConfig()
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
        try:
            cfg = parse_config(text)
        except ConfigError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
    cfg = apply_seed_env(cfg)
    overrides = {}
    for f in fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            overrides[f.name] = coerce_value(f.name, raw)
    return replace(cfg, **overrides) if overrides else cfg


def _report(checks, out) -> bool:
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name}: {c.detail}", file=out)
    return all(c.ok for c in checks)


def _cmd_run(args, cfg: ExperimentConfig) -> int:
    result = run_experiment(cfg, workers=args.jobs, pure=args.pure)
    for r in result.failures:
        print(f"error: replication seed {r.seed} failed: {r.error}", file=sys.stderr)
    if cfg.output:
        write_csv(cfg.output, result.rows)
    else:
        sys.stdout.write(to_csv(result.rows))
    if result.failures:
        return EXIT_FAULT
    if args.check and not _report(run_checks(result.runs), sys.stderr):
        return EXIT_CHECK
    return EXIT_OK


def _cmd_figures(args, cfg: ExperimentConfig) -> int:
    sweep = sweep_figures(args.out_dir, cfg, workers=args.jobs, pure=args.pure)
    for name, path in sweep.files.items():
        print(f"wrote {path} ({len(sweep.rows[name])} rows)")
    for r in sweep.failures:
        print(f"error: {r.protocol} n={r.node_count} seed {r.seed} failed: {r.error}", file=sys.stderr)
    if sweep.failures:
        return EXIT_FAULT
    if args.check:
        ok = _report(run_checks(sweep.runs), sys.stdout)
        ok = _report(trend_checks(sweep.rows), sys.stdout) and ok
        if not ok:
            return EXIT_CHECK
    return EXIT_OK


def _cmd_trace(args, cfg: ExperimentConfig) -> int:
    seed = cfg.master_seed + args.replication
    out = open(cfg.output, "w", encoding="utf-8", newline="\n") if cfg.output else sys.stdout
    try:
        net = Network(cfg.run_config(), seed, trace=TraceWriter(out), pure=args.pure)
        res = net.run()
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"{res.events} events, seed {seed}, {cfg.duration / S:g} s simulated", file=sys.stderr)
    return EXIT_OK


def _cmd_validate(args, cfg: ExperimentConfig) -> int:
    for f in fields(ExperimentConfig):
        print(f"{f.name} = {getattr(cfg, f.name)}")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "figures": _cmd_figures, "trace": _cmd_trace, "validate": _cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "jobs", 1) < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args, cfg)
    except SimulationFault as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
