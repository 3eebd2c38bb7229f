"""``sdmlab <scenario> [--config FILE] [overrides]``

Exit codes: 0 all checks passed, 2 a check failed, 1 configuration or
runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import EXIT_ERROR, SCENARIOS, ConfigError, load_config, run_scenario

log = logging.getLogger("sdmlab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdmlab", description=__doc__.splitlines()[0])
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="INI file; command-line flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--M", dest="M", type=int, help="interleave factor")
    p.add_argument("--osr", type=float)
    p.add_argument("--sigma-tau", dest="sigma_tau", type=float, help="jitter std in units of 1/f_H")
    p.add_argument("--amp-dbfs", dest="amp_dbfs", type=float)
    p.add_argument("--order", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--K", dest="K", type=int, help="grid cells per high-rate period")
    p.add_argument("--psd-segment", dest="psd_segment", type=int)
    p.add_argument("--amp-start", dest="amp_start", type=float)
    p.add_argument("--amp-stop", dest="amp_stop", type=float)
    p.add_argument("--amp-step", dest="amp_step", type=float)
    p.add_argument("--architectures")
    p.add_argument("--correlated", action="store_const", const=True, default=None)
    p.add_argument("--eq-seeds", dest="eq_seeds", type=int)
    p.add_argument("--eq-length", dest="eq_length", type=int)
    p.add_argument("--corrupt-entry", dest="corrupt_entry", help=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"sdmlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        outcome, manifest = run_scenario(cfg)
    except Exception as exc:
        log.exception("run failed")
        print(f"sdmlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for k, v in outcome.metrics.items():
        print(f"{k:>24s} = {v:.6g}")
    for msg in outcome.messages:
        print(msg)
    print(f"manifest: {manifest}")
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
