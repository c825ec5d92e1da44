"""Command-line entry point.

Subcommands: synth, run, serve, scores, target, whatif.  Failures print one
machine-readable ``error: {...}`` line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from . import riskflow
from .config import RiskflowConfig, load_config
from .errors import PlasmoflowError
from .pipeline import run_pipeline
from .snapshots import load_snapshot
from .synth import generate, synth_config_from_dict


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plasmoflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--config", help="JSON config file (synth section or synth keys)")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, help="override the configured seed")

    p = sub.add_parser("run", help="run the full pipeline and publish a snapshot")
    p.add_argument("--config", required=True, help="pipeline JSON config file")
    p.add_argument("--snapshot-dir", required=True)

    p = sub.add_parser("serve", help="serve the HTTP API from the snapshot store")
    p.add_argument("--snapshot-dir", required=True)
    p.add_argument("--bind", default="127.0.0.1:8040", help="addr:port")

    p = sub.add_parser("scores", help="print per-settlement scores for a month")
    p.add_argument("--snapshot-dir", required=True)
    p.add_argument("--month", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("target", help="rank settlements by target effectiveness")
    p.add_argument("--snapshot-dir", required=True)
    p.add_argument("--month", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--settlement", help="show areas importing from this settlement instead")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("whatif", help="recompute scores with incidence zeroed on settlements")
    p.add_argument("--snapshot-dir", required=True)
    p.add_argument("--month", required=True)
    p.add_argument("--zero", required=True, help="comma-separated settlement ids")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except PlasmoflowError as exc:
        print(f"error: {json.dumps(exc.as_dict())}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "synth":
        return _cmd_synth(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "serve":
        return _cmd_serve(args)
    if args.command == "scores":
        return _cmd_scores(args)
    if args.command == "target":
        return _cmd_target(args)
    if args.command == "whatif":
        return _cmd_whatif(args)
    raise AssertionError(f"unhandled command {args.command}")


def _cmd_synth(args) -> int:
    data = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        data = raw.get("synth", raw)
    cfg = synth_config_from_dict(data)
    if args.seed is not None:
        cfg.seed = args.seed
    truth = generate(cfg, args.out)
    print(
        json.dumps(
            {
                "out": args.out,
                "seed": cfg.seed,
                "users": cfg.n_users,
                "settlements": len(truth.population),
                "true_trips": len(truth.trips),
            }
        )
    )
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    sid = run_pipeline(cfg, args.snapshot_dir)
    print(json.dumps({"snapshot_id": sid, "snapshot_dir": args.snapshot_dir}))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(args.snapshot_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
    return 0


def _print_frame(df: pd.DataFrame, fmt: str):
    if fmt == "csv":
        sys.stdout.write(df.to_csv(index=False))
    else:
        print(json.dumps(df.to_dict(orient="records"), indent=2))


def _require_month(snap, month: str):
    if month not in snap.months:
        raise PlasmoflowError(f"month {month} not in snapshot", month=month)


def _cmd_scores(args) -> int:
    snap = load_snapshot(args.snapshot_dir)
    _require_month(snap, args.month)
    _print_frame(snap.scores[snap.scores["month"] == args.month], args.format)
    return 0


def _cmd_target(args) -> int:
    snap = load_snapshot(args.snapshot_dir)
    _require_month(snap, args.month)
    if args.settlement:
        tensors = snap.flow_tensors()
        inc = snap.incidence_table()
        cfg = RiskflowConfig(**snap.manifest["config"]["riskflow"])
        areas = riskflow.importing_areas(tensors, inc, args.settlement, args.month, cfg)
        df = pd.DataFrame(areas, columns=["settlement", "decrease"])
        _print_frame(df, args.format)
        return 0
    ranked = snap.scores[snap.scores["month"] == args.month].sort_values(
        ["target_effectiveness", "settlement"], ascending=[False, True], kind="mergesort"
    )
    _print_frame(ranked.head(args.top), args.format)
    return 0


def _cmd_whatif(args) -> int:
    snap = load_snapshot(args.snapshot_dir)
    _require_month(snap, args.month)
    zero_set = [s for s in args.zero.split(",") if s]
    cfg = RiskflowConfig(**snap.manifest["config"]["riskflow"])
    result = riskflow.whatif(snap.flow_tensors(), snap.incidence_table(), zero_set, args.month, cfg)
    if args.format == "json":
        print(
            json.dumps(
                {
                    "month": result.month,
                    "zero_set": list(result.zero_set),
                    "total_decrease": result.total_decrease,
                    "decreases": result.decreases,
                },
                indent=2,
            )
        )
    else:
        df = pd.DataFrame(
            [{"settlement": s, "decrease": d} for s, d in sorted(result.decreases.items())]
        )
        _print_frame(df, args.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
