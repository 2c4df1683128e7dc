"""Dataset generation, normalization fitting, the training loop, and the
checkpoint lifecycle.

Datasets are .jsonl (one scenario record per line) with a sidecar
``<name>.meta.json``. Checkpoints are single JSON documents carrying the
model config, parameters, and the normalization ranges they were trained
with (hash-checked on load).
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import allocator
from .channel import LiFiPhyConfig, WiFiPhyConfig
from .errors import (ConfigError, ConvergenceError, FeasibilityError,
                     IntegrityError, ModelMismatchError, SchemaError)
from .gatmodel import (DnnConfig, DnnParams, GatConfig, GatParams, GraphBatch,
                       dnn_backward, dnn_forward, gat_backward, gat_forward,
                       init_dnn_params, init_gat_params)
from .numcore import AdamState, adam_step, mse_bwd, mse_fwd
from .scenario import (NormMeta, RoomConfig, Scenario, build_graph, build_scenario,
                       dump_record, load_records, scenario_from_record,
                       scenario_to_record, sinr_to_db)

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 100
    lr: float = 1e-3
    lr_decay: float = 0.95
    seed: int = 0
    early_stop_patience: int = 10

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


@dataclass
class DatasetMeta:
    n_samples: int
    n_a: int
    n_f: int
    n_u: object                       # int, or sorted list when mixed
    label_method: Optional[str]
    base_seed: int
    room: dict = field(default_factory=dict)
    lifi_phy: dict = field(default_factory=dict)
    wifi_phy: dict = field(default_factory=dict)
    schema_version: int = 1

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "n_samples": self.n_samples,
                "n_a": self.n_a, "n_f": self.n_f, "n_u": self.n_u,
                "label_method": self.label_method, "base_seed": self.base_seed,
                "room": self.room, "lifi_phy": self.lifi_phy,
                "wifi_phy": self.wifi_phy}


def meta_path(dataset_path) -> Path:
    p = Path(dataset_path)
    return p.with_suffix(".meta.json") if p.suffix == ".jsonl" \
        else Path(str(p) + ".meta.json")


def _label_scenario(sc: Scenario, label_method: str,
                    solver_cfg: Optional[allocator.SolverConfig]):
    if label_method == "heuristic":
        alloc = allocator.heuristic_allocate(sc)
    elif label_method == "optimizer":
        alloc = allocator.optimize_allocate(sc, solver_cfg)
    elif label_method == "oracle":
        alloc = allocator.grid_oracle(sc, solver_cfg)
    else:
        raise ConfigError(f"unknown label method {label_method!r}")
    return alloc.serving_rows(sc)


def _gen_one(args) -> str:
    room, lifi, wifi, seed, idx, n_samples, label_method, solver_cfg = args
    # replacement seeds are a deterministic function of the sample index so
    # results do not depend on worker count or retry interleaving
    for attempt in range(8):
        s = seed + idx if attempt == 0 else seed + n_samples + idx * 1000 + attempt
        sc = build_scenario(room, lifi, wifi, s)
        try:
            labels = _label_scenario(sc, label_method, solver_cfg) \
                if label_method else None
        except (ConvergenceError, FeasibilityError) as exc:
            log.warning("sample %d seed %d failed (%s); drawing replacement",
                        idx, s, exc)
            continue
        return dump_record(scenario_to_record(sc, labels, label_method))
    raise ConvergenceError(f"sample {idx}: all replacement seeds failed")


def generate_dataset(room: RoomConfig, lifi: LiFiPhyConfig, wifi: WiFiPhyConfig,
                     n_samples: int, label_method: Optional[str], seed: int,
                     out_path, solver_cfg: Optional[allocator.SolverConfig] = None,
                     workers: int = 1) -> DatasetMeta:
    """Monte-Carlo dataset: n_samples independent scenarios, labelled unless
    ``label_method`` is None. Idempotent for a fixed seed."""
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    jobs = [(room, lifi, wifi, seed, i, n_samples, label_method, solver_cfg)
            for i in range(n_samples)]
    if workers > 1:
        with Pool(workers) as pool:
            lines = pool.map(_gen_one, jobs, chunksize=8)
    else:
        lines = [_gen_one(j) for j in jobs]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")
    meta = DatasetMeta(n_samples=n_samples, n_a=room.n_ap, n_f=room.n_subflows,
                       n_u=room.n_ue, label_method=label_method, base_seed=seed,
                       room=room.__dict__.copy(), lifi_phy=lifi.__dict__.copy(),
                       wifi_phy=wifi.__dict__.copy())
    with open(meta_path(out_path), "w") as fh:
        json.dump(meta.to_dict(), fh, indent=2)
    return meta


def fit_normalizer(records: list[dict], indices=None) -> NormMeta:
    """Min-max ranges over the training records only: serving-set SINRs in
    floored dB, and raw rate demands."""
    if not records:
        raise ConfigError("cannot fit a normalizer on an empty dataset")
    idx = range(len(records)) if indices is None else indices
    sinr_db, rates = [], []
    for i in idx:
        for u in records[i]["ue"]:
            sinr_db.extend(sinr_to_db(np.asarray(u["sinr"])).tolist())
            rates.append(u["req_bps"])
    lo_s, hi_s = float(min(sinr_db)), float(max(sinr_db))
    lo_r, hi_r = float(min(rates)), float(max(rates))
    if hi_s - lo_s < 1e-12:
        warnings.warn("degenerate SINR range; widening by +-1e-6")
        lo_s, hi_s = lo_s - 1e-6, hi_s + 1e-6
    if hi_r - lo_r < 1e-12:
        warnings.warn("degenerate rate range; widening by +-1e-6")
        lo_r, hi_r = lo_r - 1e-6, hi_r + 1e-6
    return NormMeta(sinr_db_min=lo_s, sinr_db_max=hi_s,
                    rate_min_bps=lo_r, rate_max_bps=hi_r)


def split_train_val(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled 80:20 split; train gets floor(0.8 n)."""
    if n < 5:
        raise ConfigError("need at least 5 samples for an 80:20 split")
    perm = np.random.default_rng([seed, 4]).permutation(n)
    n_train = int(0.8 * n)
    return perm[:n_train], perm[n_train:]


def _norm_hash(norm: NormMeta) -> str:
    blob = json.dumps(norm.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _dnn_features(graph) -> np.ndarray:
    return graph.features[: graph.n_ue].ravel()


def train(model_kind: str, records: list[dict], cfg: TrainConfig,
          model_overrides: Optional[dict] = None,
          progress: Optional[Callable[[dict], None]] = None):
    """Mini-batch supervised training; returns (checkpoint dict, history).

    Graphs are batched as disjoint components so attention neighborhoods
    never cross samples. The checkpoint holds the best-validation-MSE
    parameters.
    """
    if model_kind not in ("gat", "dnn"):
        raise ConfigError(f"unknown model kind {model_kind!r}")
    pairs = [scenario_from_record(r) for r in records]
    if any(labels is None for _, labels in pairs):
        raise ConfigError("dataset is unlabeled; run the solver first")
    n_f = pairs[0][0].n_subflows
    if any(sc.n_subflows != n_f for sc, _ in pairs):
        raise ConfigError("records mix subflow counts within one dataset")

    train_idx, val_idx = split_train_val(len(records), cfg.seed)
    norm = fit_normalizer(records, train_idx)
    graphs = [build_graph(sc, labels, norm) for sc, labels in pairs]
    scenarios = [sc for sc, _ in pairs]

    overrides = dict(model_overrides or {})
    n_u_values = sorted({sc.n_ue for sc in scenarios})
    if model_kind == "gat":
        overrides.setdefault("n_heads", 3 if max(n_u_values) <= 20 else 8)
        model_cfg = GatConfig(in_dim=n_f + 1, out_dim=n_f, **overrides)
        params = init_gat_params(model_cfg, cfg.seed)
    else:
        if len(n_u_values) != 1:
            raise ModelMismatchError("the DNN baseline needs a fixed UE count")
        model_cfg = DnnConfig(n_u=n_u_values[0], n_f=n_f, **overrides)
        params = init_dnn_params(model_cfg, cfg.seed)
        feats = np.stack([_dnn_features(g) for g in graphs])
        labels_flat = np.stack([g.ue_labels.ravel() for g in graphs])

    plist = params.param_list()
    adam = AdamState.for_params(plist, lr=cfg.lr, lr_decay=cfg.lr_decay)
    drop_rng = np.random.default_rng([cfg.seed, 5])
    shuffle_rng = np.random.default_rng([cfg.seed, 6])

    def forward_batch(idx_batch, training):
        if model_kind == "gat":
            batch = GraphBatch.from_graphs([graphs[i] for i in idx_batch])
            pred, caches = gat_forward(batch, params, model_cfg, training,
                                       drop_rng if training else None)
            return pred, batch.labels, (batch, caches)
        x = feats[idx_batch]
        y = labels_flat[idx_batch]
        pred, caches = dnn_forward(x, params, model_cfg, training,
                                   drop_rng if training else None)
        return pred, y, caches

    def backward_batch(ctx, dpred):
        if model_kind == "gat":
            batch, caches = ctx
            return gat_backward(caches, dpred, batch)
        return dnn_backward(ctx, dpred)

    def eval_split(idx_split):
        sq_sum, count, gamma_sum = 0.0, 0, 0.0
        for i in idx_split:
            pred, target, _ = forward_batch([i], training=False)
            d = pred - target
            sq_sum += float((d * d).sum())
            count += d.size
            rows = pred.reshape(scenarios[i].n_ue, n_f)
            alloc = allocator.project_feasible(rows, scenarios[i])
            gamma_sum += allocator.throughput(scenarios[i], alloc)[0]
        return sq_sum / count, gamma_sum / len(idx_split)

    # row 0 is the untrained model, so convergence curves start at the
    # initial loss exactly as a loss-vs-epoch plot would
    train_mse0, _ = eval_split(train_idx)
    val_mse0, val_rate0 = eval_split(val_idx)
    history = [{"epoch": 0, "lr": adam.lr, "train_mse": train_mse0,
                "val_mse": val_mse0, "val_sum_rate_bps": val_rate0}]
    if progress:
        progress(history[0])
    best = {"val_mse": val_mse0, "params": copy.deepcopy(params), "epoch": 0}
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        lr_now = adam.lr
        perm = shuffle_rng.permutation(len(train_idx))
        sq_sum, count = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_size):
            idx_batch = train_idx[perm[lo: lo + cfg.batch_size]]
            pred, target, ctx = forward_batch(idx_batch, training=True)
            loss = mse_fwd(pred, target)
            if not np.isfinite(loss):
                raise ConvergenceError(
                    f"NaN/Inf loss at epoch {epoch}, batch starting {lo}; "
                    f"batch indices {idx_batch.tolist()[:8]}...")
            grads = backward_batch(ctx, mse_bwd(pred, target))
            adam_step(plist, grads, adam)
            sq_sum += loss * pred.size
            count += pred.size
        val_mse, val_rate = eval_split(val_idx)
        row = {"epoch": epoch, "lr": lr_now, "train_mse": sq_sum / count,
               "val_mse": val_mse, "val_sum_rate_bps": val_rate}
        history.append(row)
        if progress:
            progress(row)
        adam.decay_lr()
        if val_mse < best["val_mse"]:
            best = {"val_mse": val_mse, "params": copy.deepcopy(params),
                    "epoch": epoch}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break

    trained_on = {"n_a": scenarios[0].n_ap, "n_f": n_f,
                  "n_u": n_u_values[0] if len(n_u_values) == 1 else n_u_values,
                  "seed": cfg.seed, "epochs_run": len(history) - 1,
                  "best_epoch": best["epoch"]}
    ckpt = {"schema_version": CHECKPOINT_SCHEMA_VERSION, "model_kind": model_kind,
            "config": model_cfg.to_dict(), "norm_meta": norm.to_dict(),
            "norm_meta_hash": _norm_hash(norm),
            "params": best["params"].to_jsonable(), "trained_on": trained_on}
    return ckpt, history


def save_checkpoint(path, ckpt: dict) -> None:
    with open(path, "w") as fh:
        json.dump(ckpt, fh)


def load_checkpoint(path) -> dict:
    try:
        with open(path) as fh:
            ckpt = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON at byte {exc.pos}: {exc.msg}") from exc
    if ckpt.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: unsupported checkpoint schema_version "
            f"{ckpt.get('schema_version')!r}")
    norm = NormMeta.from_dict(ckpt["norm_meta"])
    if _norm_hash(norm) != ckpt.get("norm_meta_hash"):
        raise IntegrityError(f"{path}: normalization metadata hash mismatch")
    return ckpt


def model_from_checkpoint(ckpt: dict):
    """Returns (model_kind, config, params, norm)."""
    norm = NormMeta.from_dict(ckpt["norm_meta"])
    if ckpt["model_kind"] == "gat":
        return "gat", GatConfig.from_dict(ckpt["config"]), \
            GatParams.from_jsonable(ckpt["params"]), norm
    if ckpt["model_kind"] == "dnn":
        return "dnn", DnnConfig.from_dict(ckpt["config"]), \
            DnnParams.from_jsonable(ckpt["params"]), norm
    raise SchemaError(f"unknown model_kind {ckpt['model_kind']!r}")


def history_to_csv(history: list[dict], path) -> None:
    cols = ["epoch", "lr", "train_mse", "val_mse", "val_sum_rate_bps"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        writer.writerows(history)


def load_dataset(path) -> list[dict]:
    records = load_records(path)
    if not records:
        raise SchemaError(f"{path}: empty dataset")
    return records
