"""Evaluation harness: sum rate, Jain's fairness, optimality gap against
the solver, and wall-clock inference benchmarking.

Timed regions cover only the allocation computation itself (model forward
plus feasibility projection for learned methods); scenario and feature
construction are network state that exists either way.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import allocator
from .errors import ConfigError, ModelMismatchError
from .gatmodel import GraphBatch, gat_predict
from .pipeline import model_from_checkpoint
from .scenario import build_graph, scenario_from_record

LEARNED_METHODS = ("gat", "dnn")
ALL_METHODS = ("heuristic", "optimizer", "oracle") + LEARNED_METHODS


def jain_fairness(served, required, mode: str = "satisfaction") -> float:
    """Jain's index over per-UE satisfaction ratios min(served, R)/R.

    1.0 means perfectly even satisfaction; the all-zero edge case is 1.0 by
    convention (evenly nothing). ``mode="absolute"`` applies the index to
    the demand-capped rates themselves instead of the ratios; equal-split
    baselines rank fairest under that variant.
    """
    served = np.asarray(served, dtype=np.float64)
    required = np.asarray(required, dtype=np.float64)
    if (required <= 0).any():
        raise ConfigError("rate requirements must be positive")
    if mode == "satisfaction":
        x = np.minimum(served, required) / required
    elif mode == "absolute":
        x = np.minimum(served, required)
    else:
        raise ConfigError(f"unknown jain mode {mode!r}")
    total = x.sum()
    if total == 0.0:
        return 1.0
    return float(total * total / (len(x) * np.square(x).sum()))


@dataclass
class InstanceResult:
    instance_id: int
    method: str
    n_a: int
    n_u: int
    n_f: int
    sum_rate_bps: float
    jain: float
    objective: float
    gap: float
    wall_time_s: float


@dataclass
class EvalReport:
    rows: list[InstanceResult]
    aggregate: dict


class _MethodRunner:
    """Produces (allocation, wall_time) per scenario for one method."""

    def __init__(self, method: str, checkpoint: Optional[dict],
                 solver_cfg: Optional[allocator.SolverConfig]):
        if method not in ALL_METHODS:
            raise ConfigError(f"unknown method {method!r}")
        self.method = method
        self.solver_cfg = solver_cfg
        self.kind = None
        if method in LEARNED_METHODS:
            if checkpoint is None:
                raise ConfigError(f"method {method!r} needs a checkpoint")
            self.kind, self.cfg, self.params, self.norm = \
                model_from_checkpoint(checkpoint)
            if self.kind != method:
                raise ModelMismatchError(
                    f"checkpoint holds a {self.kind} model, asked for {method}")

    def check_compat(self, sc) -> None:
        if self.kind == "gat" and self.cfg.out_dim != sc.n_subflows:
            raise ModelMismatchError(
                f"checkpoint predicts {self.cfg.out_dim} subflows, "
                f"dataset has {sc.n_subflows}")
        if self.kind == "dnn" and (self.cfg.n_f != sc.n_subflows
                                   or self.cfg.n_u != sc.n_ue):
            raise ModelMismatchError(
                f"DNN checkpoint is fixed to n_u={self.cfg.n_u}, "
                f"n_f={self.cfg.n_f}; dataset has n_u={sc.n_ue}, "
                f"n_f={sc.n_subflows}")

    def prepare(self, sc, labels):
        """Precompute the model input (not timed)."""
        if self.kind == "gat":
            return GraphBatch.from_graph(build_graph(sc, norm=self.norm))
        if self.kind == "dnn":
            g = build_graph(sc, norm=self.norm)
            return g.features[: g.n_ue].ravel()
        return None

    def run(self, sc, labels, prepared):
        t0 = time.perf_counter()
        if self.method == "heuristic":
            alloc = allocator.heuristic_allocate(sc)
        elif self.method == "optimizer":
            alloc = allocator.optimize_allocate(sc, self.solver_cfg)
        elif self.method == "oracle":
            alloc = allocator.grid_oracle(sc, self.solver_cfg)
        elif self.method == "gat":
            pred = gat_predict(prepared, self.params, self.cfg)
            alloc = allocator.project_feasible(pred, sc)
        else:
            from .gatmodel import dnn_forward
            out, _ = dnn_forward(prepared, self.params, self.cfg, training=False)
            alloc = allocator.project_feasible(
                out.reshape(sc.n_ue, sc.n_subflows), sc)
        return alloc, time.perf_counter() - t0


def _reference_sum_rates(pairs, solver_cfg) -> list[float]:
    """Optimizer sum rate per instance: from stored optimizer labels when
    available, otherwise solved on the fly."""
    out = []
    for sc, labels, rec in pairs:
        if labels is not None and rec.get("label_method") == "optimizer":
            alloc = allocator.AllocationMatrix.from_serving_rows(labels, sc)
        else:
            alloc = allocator.optimize_allocate(sc, solver_cfg)
        out.append(allocator.throughput(sc, alloc)[0])
    return out


def evaluate(method: str, records: list[dict], checkpoint: Optional[dict] = None,
             solver_cfg: Optional[allocator.SolverConfig] = None,
             bootstrap: int = 1000, seed: int = 0,
             jain_mode: str = "satisfaction") -> EvalReport:
    """Run one method over a dataset; per-instance rows plus aggregates with
    95% bootstrap intervals on the means."""
    runner = _MethodRunner(method, checkpoint, solver_cfg)
    pairs = []
    for rec in records:
        sc, labels = scenario_from_record(rec)
        runner.check_compat(sc)
        pairs.append((sc, labels, rec))
    ref_rates = _reference_sum_rates(pairs, solver_cfg)

    rows = []
    for idx, ((sc, labels, rec), ref) in enumerate(zip(pairs, ref_rates)):
        prepared = runner.prepare(sc, labels)
        alloc, dt = runner.run(sc, labels, prepared)
        gamma, served = allocator.throughput(sc, alloc)
        obj = allocator.objective(sc, alloc, solver_cfg).value
        gap = (ref - gamma) / ref if ref > 0 else 0.0
        rows.append(InstanceResult(
            instance_id=idx, method=method, n_a=sc.n_ap, n_u=sc.n_ue,
            n_f=sc.n_subflows, sum_rate_bps=gamma,
            jain=jain_fairness(served, sc.req_bps, jain_mode), objective=obj,
            gap=gap,
            wall_time_s=dt))

    rng = np.random.default_rng([seed, 7])
    agg = {"method": method, "n_instances": len(rows)}
    for field_name in ("sum_rate_bps", "jain", "gap", "wall_time_s"):
        vals = np.array([getattr(r, field_name) for r in rows])
        agg[f"mean_{field_name}"] = float(vals.mean())
        if bootstrap > 0 and len(vals) > 1:
            means = np.array([vals[rng.integers(0, len(vals), len(vals))].mean()
                              for _ in range(bootstrap)])
            lo, hi = np.percentile(means, [2.5, 97.5])
            agg[f"ci95_{field_name}"] = [float(lo), float(hi)]
    return EvalReport(rows=rows, aggregate=agg)


def report_to_csv(report: EvalReport, path) -> None:
    cols = ["instance_id", "method", "n_a", "n_u", "n_f", "sum_rate_bps",
            "jain", "objective", "gap", "wall_time_s"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for r in report.rows:
            writer.writerow(asdict(r))


def aggregate_to_json(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.aggregate, fh, indent=2)


def bench_inference(method: str, records: list[dict], repeats: int,
                    checkpoint: Optional[dict] = None,
                    solver_cfg: Optional[allocator.SolverConfig] = None,
                    warmup: int = 3) -> list[dict]:
    """Median/p95 per-instance wall time, one row per (method, n_a, n_u, n_f).

    Single-threaded; warmup runs are excluded from the statistics.
    """
    if repeats < 10:
        raise ConfigError("repeats must be >= 10 for stable statistics")
    runner = _MethodRunner(method, checkpoint, solver_cfg)
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        sc, labels = scenario_from_record(rec)
        runner.check_compat(sc)
        prepared = runner.prepare(sc, labels)
        for _ in range(warmup):
            runner.run(sc, labels, prepared)
        times = [runner.run(sc, labels, prepared)[1] for _ in range(repeats)]
        key = (sc.n_ap, sc.n_ue, sc.n_subflows)
        groups.setdefault(key, []).extend(times)
    rows = []
    for (n_a, n_u, n_f), times in sorted(groups.items()):
        arr = np.array(times)
        rows.append({"method": method, "n_a": n_a, "n_u": n_u, "n_f": n_f,
                     "median_ms": float(np.median(arr) * 1e3),
                     "p95_ms": float(np.percentile(arr, 95) * 1e3),
                     "n_timings": len(arr)})
    return rows


def bench_to_csv(rows: list[dict], path) -> None:
    cols = ["method", "n_a", "n_u", "n_f", "median_ms", "p95_ms", "n_timings"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(rows)
