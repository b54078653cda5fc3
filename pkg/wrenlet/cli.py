"""
wrenlet <command> [--workers a,b,c] [--shards n] [--size bytes] [--profile name]
                  [--seed n] [--medium object|kv] [--out file.csv] [--config path]

Exit status: 0 on success, 1 when a result disagrees with its oracle,
2 for usage and configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from typing import List, Optional, Sequence

from wrenlet.bench import COLUMNS, COMMANDS, WORDCOUNT_REDUCERS, BenchSpec, run
from wrenlet.config import PROFILES, load_config
from wrenlet.costmodel import PriceBook, job_cost, load_trace, write_report
from wrenlet.models import ConfigError, IntermediateTooLarge, MalformedTrace, VerificationFailed
from wrenlet.patterns.layout import Medium

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(
            f"expected comma separated integers, got {text!r}"
        ) from err


def _size(text: str) -> int:
    try:
        return int(float(text))
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected a byte count, got {text!r}") from err


def make_parser() -> argparse.ArgumentParser:
    """Argument parser of the wrenlet command"""
    parser = argparse.ArgumentParser(
        prog="wrenlet", description="Serverless map engine benchmarks on a desk machine"
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--workers", type=_int_list, default=[1], metavar="a,b,c")
    parser.add_argument("--shards", type=_int_list, default=[1], metavar="a,b,c")
    parser.add_argument("--size", type=_size, default=None, metavar="BYTES")
    parser.add_argument("--profile", choices=sorted(PROFILES), default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--medium", choices=[m.value for m in Medium], default=None)
    parser.add_argument("--partitions", type=int, default=None)
    parser.add_argument("--reducers", type=int, default=None)
    parser.add_argument("--skew", type=float, default=0.0)
    parser.add_argument("--sample-rate", type=float, default=0.01)
    parser.add_argument("--out", default=None, metavar="FILE")
    parser.add_argument("--config", default=None, metavar="PATH")
    parser.add_argument("--trace", default=None, metavar="FILE.ndjson")
    parser.add_argument("--plot", action="store_true", help="also write a gnuplot script")
    parser.add_argument("--no-prorate", action="store_true", help="bill key-value shards per hour")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _print_rows(rows: List[dict], columns: Sequence[str]) -> None:
    writer = csv.DictWriter(sys.stdout, list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def _cost(args: argparse.Namespace) -> int:
    if args.trace is None:
        print("wrenlet cost: --trace is required", file=sys.stderr)
        return EXIT_USAGE
    book = PriceBook(prorate_kv_to_seconds=not args.no_prorate)
    report = job_cost(load_trace(args.trace), book)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if args.out is not None:
        write_report(report, args.out)
    return EXIT_OK


def _bench(args: argparse.Namespace) -> int:
    base = load_config(args.config, args.profile)
    spec = BenchSpec(
        command=args.command,
        workers=args.workers,
        shards=args.shards,
        payload_size=args.size,
        profile=base.profile,
        seed=args.seed,
        out=args.out,
        medium=Medium(args.medium) if args.medium else None,
        partitions=args.partitions,
        skew=args.skew,
        sample_rate=args.sample_rate,
        trace=args.trace,
        plot=args.plot,
        reducers=args.reducers or WORDCOUNT_REDUCERS,
    )
    rows = run(spec, base)
    if args.out is None:
        _print_rows(rows, COLUMNS[args.command])
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the wrenlet console script; returns the exit status"""
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        level=logging.INFO if args.verbose else logging.WARNING,
        force=True,
    )
    try:
        if args.command == "cost":
            return _cost(args)
        return _bench(args)
    except VerificationFailed as err:
        logger.error(f"verification failed: {err}")
        return EXIT_VERIFICATION
    except IntermediateTooLarge as err:
        logger.error(f"{err}")
        return EXIT_USAGE
    except (ConfigError, MalformedTrace, ValueError, OSError) as err:
        logger.error(f"{args.command}: {err}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
