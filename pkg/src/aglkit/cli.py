"""Command-line entry point: estimate / synth / validate.

Exit codes: 0 success, 2 input or validation error, 3 total estimation
failure (every requested method errored).
"""

from __future__ import annotations

import argparse
import os
import sys

from .datamodel import load_split_pair, read_manifest, load_log
from .errors import ToolkitError
from .report import (
    ALL_METHODS,
    ReportOptions,
    build_report,
    export_scatter,
    scatter_to_csv,
)
from .synth import SynthConfig, write_ensemble

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_ESTIMATION_FAILURE = 3

_METHOD_FLAGS = {
    "aline-s": "aline_s",
    "aline-d": "aline_d",
    "ac": "ac",
    "atc": "atc",
    "doc-feat": "doc_feat",
    "naive": "naive_agreement",
}


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_estimate(args) -> int:
    try:
        methods = [_METHOD_FLAGS[m.strip()] for m in args.methods.split(",") if m.strip()]
    except KeyError as exc:
        return _fail(f"unknown method {exc.args[0]!r} (choose from {', '.join(_METHOD_FLAGS)})",
                     EXIT_INPUT_ERROR)
    if not methods:
        return _fail("no methods requested", EXIT_INPUT_ERROR)
    try:
        pair = load_split_pair(args.id_manifest, args.ood_manifest, args.metric)
        options = ReportOptions(gate_threshold=args.gate_threshold,
                                clamp_eps=args.clamp_eps,
                                evaluation_mode=args.eval)
        report = build_report(pair, methods, options)
    except ToolkitError as exc:
        return _fail(str(exc), EXIT_INPUT_ERROR)
    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "report.json")
    with open(report_path, "w") as fh:
        fh.write(report.to_json())
    print(f"wrote {report_path}")
    if args.scatter:
        scatter_path = os.path.join(args.out, "scatter.csv")
        with open(scatter_path, "w") as fh:
            fh.write(scatter_to_csv(export_scatter(report, pair, args.clamp_eps)))
        print(f"wrote {scatter_path}")
    if len(report.method_errors) == len(methods):
        for method, msg in report.method_errors.items():
            print(f"method {method} failed: {msg}", file=sys.stderr)
        return EXIT_ESTIMATION_FAILURE
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        config = SynthConfig.from_file(args.config) if args.config else SynthConfig()
        config.seed = args.seed
        paths = write_ensemble(config, args.out)
    except (ToolkitError, OSError) as exc:
        return _fail(str(exc), EXIT_INPUT_ERROR)
    print(f"wrote {paths['manifest']}")
    print(f"wrote {paths['truth']}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        manifest = read_manifest(args.manifest)
        if not manifest.entries:
            return _fail(f"manifest {args.manifest} lists no entries", EXIT_INPUT_ERROR)
        base_dir = os.path.dirname(os.path.abspath(args.manifest))
        for entry in manifest.entries:
            load_log(os.path.join(base_dir, entry.path))
    except ToolkitError as exc:
        return _fail(str(exc), EXIT_INPUT_ERROR)
    print(f"ok: {len(manifest.entries)} logs validated")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aglkit",
                                     description="OOD performance estimation from prediction logs")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="run estimators over a split pair")
    est.add_argument("--id-manifest", required=True)
    est.add_argument("--ood-manifest", required=True)
    est.add_argument("--methods", default=",".join(k for k in _METHOD_FLAGS))
    est.add_argument("--out", required=True)
    est.add_argument("--metric", default=None)
    est.add_argument("--gate-threshold", type=float, default=0.95)
    est.add_argument("--clamp-eps", type=float, default=1e-4)
    est.add_argument("--eval", action="store_true",
                     help="score estimates against OOD gold labels")
    est.add_argument("--scatter", action="store_true", help="also write scatter.csv")
    est.set_defaults(func=cmd_estimate)

    syn = sub.add_parser("synth", help="generate a synthetic ensemble")
    syn.add_argument("--config", default=None, help="key = value config file")
    syn.add_argument("--seed", type=int, required=True)
    syn.add_argument("--out", required=True)
    syn.set_defaults(func=cmd_synth)

    val = sub.add_parser("validate", help="validate a manifest and its logs")
    val.add_argument("--manifest", required=True)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
