"""Command-line surface: generate, solve, train, eval, bench.

Exit codes: 0 success, 2 usage errors (argparse), 3 schema violations,
4 model/data mismatches, 1 anything else that goes wrong in hlwlab.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import allocator, metrics, pipeline
from .config import load_config
from .errors import HlwlabError, ModelMismatchError, SchemaError
from .scenario import dump_record, scenario_from_record, scenario_to_record

EXIT_SCHEMA = 3
EXIT_MISMATCH = 4


def _cmd_gen(args) -> int:
    cfg = load_config(args.config)
    room = cfg.room
    meta = pipeline.generate_dataset(
        room, cfg.lifi_phy, cfg.wifi_phy, n_samples=args.samples,
        label_method=args.label, seed=args.seed, out_path=args.out,
        solver_cfg=cfg.solver, workers=args.workers)
    print(f"wrote {meta.n_samples} records to {args.out} "
          f"(n_a={meta.n_a}, n_u={meta.n_u}, n_f={meta.n_f}, "
          f"labels={meta.label_method})")
    return 0


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    records = pipeline.load_dataset(args.infile)
    out_lines = []
    for rec in records:
        sc, _ = scenario_from_record(rec)
        if args.method == "heuristic":
            alloc = allocator.heuristic_allocate(sc)
        elif args.method == "optimizer":
            alloc = allocator.optimize_allocate(sc, cfg.solver)
        else:
            alloc = allocator.grid_oracle(sc, cfg.solver)
        out_lines.append(dump_record(
            scenario_to_record(sc, alloc.serving_rows(sc), args.method)))
    out_path = args.out or args.infile
    with open(out_path, "w") as fh:
        fh.write("\n".join(out_lines) + "\n")
    print(f"labelled {len(out_lines)} records with {args.method} -> {out_path}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    records = pipeline.load_dataset(args.data)
    train_cfg = cfg.train
    if args.epochs is not None:
        import dataclasses
        train_cfg = dataclasses.replace(train_cfg, epochs=args.epochs)
    if args.seed is not None:
        import dataclasses
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    ckpt, history = pipeline.train(args.model, records, train_cfg,
                                   model_overrides=cfg.model,
                                   progress=lambda row: print(
                                       f"epoch {row['epoch']:3d}  lr {row['lr']:.2e}  "
                                       f"train {row['train_mse']:.3e}  "
                                       f"val {row['val_mse']:.3e}  "
                                       f"val sum rate {row['val_sum_rate_bps']/1e6:.1f} Mbps"))
    pipeline.save_checkpoint(args.out, ckpt)
    if args.history:
        pipeline.history_to_csv(history, args.history)
    print(f"saved checkpoint -> {args.out} "
          f"(best epoch {ckpt['trained_on']['best_epoch']})")
    return 0


def _resolve_method(model_arg: str):
    """--model is either a baseline name or a checkpoint path."""
    if model_arg in ("heuristic", "optimizer", "oracle"):
        return model_arg, None
    ckpt = pipeline.load_checkpoint(model_arg)
    return ckpt["model_kind"], ckpt


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    records = pipeline.load_dataset(args.data)
    method, ckpt = _resolve_method(args.model)
    report = metrics.evaluate(method, records, checkpoint=ckpt,
                              solver_cfg=cfg.solver,
                              bootstrap=cfg.eval["bootstrap"],
                              seed=cfg.eval["seed"],
                              jain_mode=cfg.eval.get("jain_mode", "satisfaction"))
    agg = report.aggregate
    print(f"method={method}  instances={agg['n_instances']}")
    print(f"  mean sum rate : {agg['mean_sum_rate_bps']/1e6:10.2f} Mbps")
    print(f"  mean Jain     : {agg['mean_jain']:10.4f}")
    print(f"  mean gap      : {agg['mean_gap']*100:10.2f} %")
    print(f"  mean wall time: {agg['mean_wall_time_s']*1e3:10.3f} ms")
    if args.report:
        metrics.report_to_csv(report, args.report)
        metrics.aggregate_to_json(report, Path(args.report).with_suffix(".json"))
        print(f"per-instance rows -> {args.report}")
    return 0


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    records = pipeline.load_dataset(args.data)
    method, ckpt = _resolve_method(args.model)
    rows = metrics.bench_inference(method, records, repeats=args.repeats,
                                   checkpoint=ckpt, solver_cfg=cfg.solver)
    for row in rows:
        print(f"{row['method']:>10}  n_a={row['n_a']:<3} n_u={row['n_u']:<3} "
              f"n_f={row['n_f']:<2} median {row['median_ms']:8.3f} ms  "
              f"p95 {row['p95_ms']:8.3f} ms")
    if args.out:
        metrics.bench_to_csv(rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hlwlab",
        description="Load-balancing laboratory for MPTCP-enabled hybrid "
                    "LiFi/WiFi networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labelled scenario dataset")
    p.add_argument("--config", required=True, help="run-config JSON")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--label", choices=["optimizer", "heuristic"],
                   default="optimizer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("solve", help="(re)label an existing dataset")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--method", choices=["optimizer", "heuristic", "oracle"],
                   required=True)
    p.add_argument("--out", help="output path (default: in place)")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("train", help="train a model on a labelled dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=["gat", "dnn"], required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--history", help="write per-epoch CSV here")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a method over a dataset")
    p.add_argument("--model", required=True,
                   help="checkpoint path, or heuristic/optimizer/oracle")
    p.add_argument("--data", required=True)
    p.add_argument("--report", help="per-instance CSV (aggregate JSON beside it)")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="benchmark inference latency")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ModelMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except HlwlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
