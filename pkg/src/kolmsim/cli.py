"""Command-line entry point.

`kolmsim run <config> --out <dir>` executes one experiment and writes its
artifacts; `kolmsim audit <config>` runs only the bound audits.  Exit
codes: 0 ok, 2 config error, 3 audit failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile

from .errors import AuditFailure, ConfigError, KolmsimError
from .experiments import load_config, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_AUDIT = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kolmsim",
        description="Hermite-Galerkin Kolmogorov-equation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("config", help="path to the JSON run configuration")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="seed override")
    run_p.add_argument("--threads", type=int, default=1,
                       help="worker threads for Monte Carlo sampling")

    audit_p = sub.add_parser("audit", help="run only the bound audits")
    audit_p.add_argument("config", help="path to the JSON run configuration")
    audit_p.add_argument("--out", default=None,
                         help="output directory (default: temporary)")
    audit_p.add_argument("--seed", type=int, default=None, help="seed override")
    audit_p.add_argument("--threads", type=int, default=1)
    return parser


def _error_record(kind: str, message: str):
    json.dump({"error": kind, "detail": message}, sys.stderr)
    sys.stderr.write("\n")


def _audit_failures(audit: dict, prefix: str = "") -> list:
    """Paths of every applicable sub-check whose `passed` flag is False."""
    bad = []
    if isinstance(audit, dict):
        if audit.get("passed") is False and prefix:
            bad.append(prefix)
        for key, value in audit.items():
            if key != "passed":
                bad.extend(_audit_failures(value, f"{prefix}/{key}" if prefix else key))
    elif isinstance(audit, list):
        for i, value in enumerate(audit):
            bad.extend(_audit_failures(value, f"{prefix}[{i}]"))
    return bad


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "audit" and cfg["experiment"] != "audits":
            raise ConfigError("the audit command needs an 'audits' experiment config")
        out_dir = args.out or tempfile.mkdtemp(prefix="kolmsim-audit-")
        audit = run_experiment(cfg, out_dir, seed=args.seed, threads=args.threads)
        failures = _audit_failures(audit)
        if not audit.get("passed", True) or failures:
            _error_record("audit", "failed checks: " + "; ".join(failures or ["root"]))
            return EXIT_AUDIT
        print(f"ok: artifacts in {out_dir}")
        return EXIT_OK
    except ConfigError as exc:
        _error_record("config", str(exc))
        return EXIT_CONFIG
    except AuditFailure as exc:
        _error_record("audit", str(exc))
        return EXIT_AUDIT
    except KolmsimError as exc:
        _error_record("numerical", str(exc))
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
