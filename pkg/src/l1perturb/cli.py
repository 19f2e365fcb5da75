"""Command line entry point: ``l1perturb <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import acceptance
from .algebra import op_norm
from .harness import (
    CRITERIA,
    EXIT_OK,
    EXIT_OPERATIONAL,
    OPS,
    ConfigError,
    ExperimentConfig,
    ResultBundle,
    _sequence,
    emit_report,
    run_experiment,
)
from .measure import gauge
from .predual import Functional

JSON_ELEMENT_LIMIT = 4096  # largest total matrix dimension written out in full by `gen`


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="master seed (u64), overrides the config")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("--depth", type=int, help="orthogonalization depth")
    common.add_argument("--trials", type=int, help="number of trials")
    common.add_argument("--tol", type=float, help="certification tolerance")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="l1perturb", description="Finite-dimensional L1 perturbation experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="materialize the configured sequence prefix")
    for op in OPS:
        sub.add_parser(op, parents=[common], help=f"run the '{op}' operation on the configured sequence")
    rep = sub.add_parser("report", parents=[common], help="run acceptance criteria (and the config pipeline, if given)")
    rep.add_argument("--scale", type=float, default=1.0, help="fraction of each criterion's trial count")
    rep.add_argument("--only", nargs="*", choices=CRITERIA, help="restrict to these criteria")
    return p


def _load(args, pipeline=None):
    if args.config:
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"invalid JSON in {args.config}: {e}") from None
    else:
        doc = {}
    if pipeline is not None:
        doc["pipeline"] = pipeline
    for key in ("seed", "depth", "trials", "tol"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    if args.out:
        doc["output"] = {"dir": args.out}
    return ExperimentConfig.from_dict(doc)


def _gen(cfg: ExperimentConfig) -> int:
    if cfg.generator is None:
        raise ConfigError("gen needs a generator in the config")
    out = cfg.output.get("dir", "out")
    os.makedirs(out, exist_ok=True)
    xs = _sequence(cfg, cfg.seed)
    labels = getattr(xs, "labels", list(range(1, len(xs) + 1)))
    elems = [x.density if isinstance(x, Functional) else x for x in xs]
    with open(os.path.join(out, f"{cfg.name}_sequence.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["index", "norm1", "op_norm", "gauge"])
        for lab, x in zip(labels, elems):
            wr.writerow([lab, repr(x.norm(1)), repr(op_norm(x)), repr(gauge(x))])
    if elems and elems[0].shape.total_dim <= JSON_ELEMENT_LIMIT:
        with open(os.path.join(out, f"{cfg.name}_sequence.json"), "w") as fh:
            json.dump({"labels": [int(i) for i in labels], "elements": [x.to_json() for x in elems]}, fh)
            fh.write("\n")
    return EXIT_OK


def _report(args) -> int:
    bundle = None
    if args.config:
        cfg = _load(args)
        bundle = run_experiment(cfg)
    else:
        cfg = ExperimentConfig.from_dict({"pipeline": ["props"], "name": "acceptance",
                                          "output": {"dir": args.out or "out"}})
        bundle = ResultBundle(cfg, [])
    for res in acceptance.run_all(args.scale, args.only):
        print(res.line())
        bundle.criteria[res.id] = "pass" if res.passed else "fail"
    for path in emit_report(bundle):
        print(f"wrote {path}")
    return bundle.exit_code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return _report(args)
        if args.command == "gen":
            return _gen(_load(args, pipeline=["props"]))
        bundle = run_experiment(_load(args, pipeline=[args.command]))
        for path in emit_report(bundle):
            print(f"wrote {path}")
        for res in bundle.results:
            if not res.certified:
                print(f"{res.op}: not certified; see summary.json", file=sys.stderr)
        return bundle.exit_code
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
