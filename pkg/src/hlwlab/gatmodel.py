"""Multi-head graph attention model and the network-centric DNN baseline.

Both are built on the numcore primitives with hand-written backward
passes. The GAT is inductive: one parameter set evaluates on any node
count with a fixed subflow count; the DNN bakes the UE count into its
input layer and rejects anything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ModelMismatchError
from .numcore import (activation, affine_bwd, affine_fwd, dropout_bwd,
                      dropout_fwd, kernels, leaky_relu_bwd, leaky_relu_fwd)
from .scenario import SampleGraph


@dataclass(frozen=True)
class GatConfig:
    in_dim: int                      # n_f + 1 node features
    out_dim: int                     # n_f predicted shares
    n_layers: int = 2
    hidden_dim: int = 32
    n_heads: int = 3
    leaky_slope: float = 0.2
    dropout_p: float = 0.5
    hidden_activation: str = "elu"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        if self.n_layers < 1 or self.n_heads < 1 or self.hidden_dim < 1:
            raise ConfigError("n_layers, n_heads and hidden_dim must be >= 1")
        if self.out_dim != self.in_dim - 1:
            raise ConfigError("out_dim must equal in_dim - 1")
        for name in (self.hidden_activation, self.output_activation):
            activation(name)

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = []
        f_in = self.in_dim
        for layer in range(self.n_layers):
            f_out = self.out_dim if layer == self.n_layers - 1 else self.hidden_dim
            dims.append((f_in, f_out))
            f_in = f_out
        return dims

    def to_dict(self) -> dict:
        return {"in_dim": self.in_dim, "out_dim": self.out_dim,
                "n_layers": self.n_layers, "hidden_dim": self.hidden_dim,
                "n_heads": self.n_heads, "leaky_slope": self.leaky_slope,
                "dropout_p": self.dropout_p,
                "hidden_activation": self.hidden_activation,
                "output_activation": self.output_activation}

    @classmethod
    def from_dict(cls, d: dict) -> "GatConfig":
        return cls(**d)


@dataclass
class GatLayerParams:
    ws: list[np.ndarray]     # per head, (f_out, f_in)
    avs: list[np.ndarray]    # per head, (2 * f_out,) attention vector
    b: np.ndarray            # (f_out,), shared across heads


@dataclass
class GatParams:
    layers: list[GatLayerParams]

    def param_list(self) -> list[np.ndarray]:
        out = []
        for lp in self.layers:
            out.extend(lp.ws)
            out.extend(lp.avs)
            out.append(lp.b)
        return out

    def to_jsonable(self) -> dict:
        return {"layers": [{"heads": [{"W": w.tolist(), "a": a.tolist()}
                                      for w, a in zip(lp.ws, lp.avs)],
                            "b": lp.b.tolist()} for lp in self.layers]}

    @classmethod
    def from_jsonable(cls, d: dict) -> "GatParams":
        layers = []
        for lp in d["layers"]:
            ws = [np.array(h["W"], dtype=np.float64) for h in lp["heads"]]
            avs = [np.array(h["a"], dtype=np.float64) for h in lp["heads"]]
            layers.append(GatLayerParams(ws=ws, avs=avs,
                                         b=np.array(lp["b"], dtype=np.float64)))
        return cls(layers=layers)


@dataclass
class GraphBatch:
    """One or many graphs merged as disjoint components.

    Segments never cross graphs because edge indices are offset per
    component, so a batch behaves exactly like a single big graph.
    """

    features: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    seg_ptr: np.ndarray
    ue_rows: np.ndarray                 # node indices of UE rows, readout order
    labels: Optional[np.ndarray] = None
    graph_slices: list = field(default_factory=list)   # (ue_row_start, n_ue) per graph

    @classmethod
    def from_graphs(cls, graphs: list[SampleGraph]) -> "GraphBatch":
        feats, srcs, dsts, ptrs, ue_rows, labels, slices = [], [], [], [], [], [], []
        node_off = 0
        ue_off = 0
        have_labels = all(g.ue_labels is not None for g in graphs)
        for g in graphs:
            feats.append(g.features)
            srcs.append(g.edge_src + node_off)
            dsts.append(g.edge_dst + node_off)
            ptrs.append(g.seg_ptr[1:] + (ptrs[-1][-1] if ptrs else 0))
            ue_rows.append(np.arange(g.n_ue) + node_off)
            slices.append((ue_off, g.n_ue))
            if have_labels:
                labels.append(g.ue_labels)
            node_off += g.n_nodes
            ue_off += g.n_ue
        return cls(
            features=np.ascontiguousarray(np.concatenate(feats), dtype=np.float64),
            edge_src=np.concatenate(srcs),
            edge_dst=np.concatenate(dsts),
            seg_ptr=np.concatenate([[0]] + ptrs).astype(np.int64),
            ue_rows=np.concatenate(ue_rows),
            labels=np.concatenate(labels) if have_labels else None,
            graph_slices=slices)

    @classmethod
    def from_graph(cls, g: SampleGraph) -> "GraphBatch":
        return cls.from_graphs([g])


def init_gat_params(cfg: GatConfig, seed: int) -> GatParams:
    """Glorot-uniform weights and attention vectors, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for f_in, f_out in cfg.layer_dims():
        lim_w = np.sqrt(6.0 / (f_in + f_out))
        lim_a = np.sqrt(6.0 / (2 * f_out + 1))
        ws = [rng.uniform(-lim_w, lim_w, size=(f_out, f_in))
              for _ in range(cfg.n_heads)]
        avs = [rng.uniform(-lim_a, lim_a, size=2 * f_out)
               for _ in range(cfg.n_heads)]
        layers.append(GatLayerParams(ws=ws, avs=avs, b=np.zeros(f_out)))
    return GatParams(layers=layers)


def gat_layer_fwd(h: np.ndarray, batch: GraphBatch, lp: GatLayerParams,
                  slope: float, act_name: str):
    """One attention layer: per-head attention-weighted neighbor sums,
    head-averaged, biased, then the activation."""
    k_heads = len(lp.ws)
    head_caches = []
    agg_sum = None
    for w, a in zip(lp.ws, lp.avs):
        f_out = w.shape[0]
        z = np.ascontiguousarray(h @ w.T)
        score_dst = z @ a[:f_out]
        score_src = z @ a[f_out:]
        raw = score_dst[batch.edge_dst] + score_src[batch.edge_src]
        lrelu = np.ascontiguousarray(leaky_relu_fwd(raw, slope))
        alpha = kernels.seg_softmax_fwd(lrelu, batch.seg_ptr)
        agg = kernels.edge_aggregate_fwd(alpha, z, batch.edge_src, batch.seg_ptr)
        agg_sum = agg if agg_sum is None else agg_sum + agg
        head_caches.append((z, raw, alpha))
    pre = agg_sum / k_heads + lp.b
    act_f, _ = activation(act_name)
    out = act_f(pre)
    cache = {"h": h, "lp": lp, "heads": head_caches, "pre": pre, "out": out,
             "slope": slope, "act": act_name, "batch": batch}
    return out, cache


def gat_layer_bwd(cache, dout: np.ndarray):
    """Gradients of one attention layer; returns (dh, dws, davs, db)."""
    batch: GraphBatch = cache["batch"]
    lp: GatLayerParams = cache["lp"]
    h = cache["h"]
    k_heads = len(lp.ws)
    _, act_b = activation(cache["act"])
    dpre = act_b(cache["pre"], cache["out"], dout)
    db = dpre.sum(axis=0)
    dagg = np.ascontiguousarray(dpre / k_heads)
    dh = np.zeros_like(h)
    dws, davs = [], []
    n_nodes = h.shape[0]
    for (w, a), (z, raw, alpha) in zip(zip(lp.ws, lp.avs), cache["heads"]):
        f_out = w.shape[0]
        dalpha, dz = kernels.edge_aggregate_bwd(alpha, z, batch.edge_src,
                                                batch.seg_ptr, dagg)
        dlrelu = kernels.seg_softmax_bwd(alpha, dalpha, batch.seg_ptr)
        draw = np.ascontiguousarray(leaky_relu_bwd(raw, dlrelu, cache["slope"]))
        dscore_dst = kernels.seg_sum(draw, batch.seg_ptr)
        dscore_src = kernels.scatter_add_vec(np.zeros(n_nodes), batch.edge_src, draw)
        dz += np.outer(dscore_dst, a[:f_out]) + np.outer(dscore_src, a[f_out:])
        da = np.concatenate([z.T @ dscore_dst, z.T @ dscore_src])
        dws.append(dz.T @ h)
        davs.append(da)
        dh += dz @ w
    return dh, dws, davs, db


def gat_forward(batch: GraphBatch, params: GatParams, cfg: GatConfig,
                training: bool = False,
                rng: Optional[np.random.Generator] = None):
    """Full model forward; returns (UE predictions, caches for backward)."""
    if params.layers[0].ws[0].shape[1] != batch.features.shape[1]:
        raise ModelMismatchError(
            f"graph features have dim {batch.features.shape[1]}, model expects "
            f"{params.layers[0].ws[0].shape[1]}")
    h = batch.features
    caches = []
    last = len(params.layers) - 1
    for li, lp in enumerate(params.layers):
        act = cfg.output_activation if li == last else cfg.hidden_activation
        h_drop, keep = dropout_fwd(h, cfg.dropout_p, training, rng)
        out, cache = gat_layer_fwd(h_drop, batch, lp, cfg.leaky_slope, act)
        cache["keep"] = keep
        caches.append(cache)
        h = out
    return h[batch.ue_rows], caches


def gat_backward(caches, dpred: np.ndarray, batch: GraphBatch) -> list[np.ndarray]:
    """Parameter gradients aligned with GatParams.param_list()."""
    dh = np.zeros_like(caches[-1]["out"])
    dh[batch.ue_rows] = dpred
    per_layer = []
    for cache in reversed(caches):
        dh_in, dws, davs, db = gat_layer_bwd(cache, dh)
        per_layer.append((dws, davs, db))
        dh = dropout_bwd(dh_in, cache["keep"])
    grads = []
    for dws, davs, db in reversed(per_layer):
        grads.extend(dws)
        grads.extend(davs)
        grads.append(db)
    return grads


def gat_predict(batch: GraphBatch, params: GatParams, cfg: GatConfig) -> np.ndarray:
    pred, _ = gat_forward(batch, params, cfg, training=False)
    return pred


# --- network-centric DNN baseline -------------------------------------------

@dataclass(frozen=True)
class DnnConfig:
    n_u: int
    n_f: int
    n_hidden_layers: int = 4
    hidden_width: int = 128
    dropout_p: float = 0.5
    hidden_activation: str = "elu"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        if self.n_u < 1 or self.n_f < 1:
            raise ConfigError("n_u and n_f must be >= 1")
        if self.n_hidden_layers < 1 or self.hidden_width < 1:
            raise ConfigError("hidden layer setup invalid")

    @property
    def in_dim(self) -> int:
        return self.n_u * (self.n_f + 1)

    @property
    def out_dim(self) -> int:
        return self.n_u * self.n_f

    def to_dict(self) -> dict:
        return {"n_u": self.n_u, "n_f": self.n_f,
                "n_hidden_layers": self.n_hidden_layers,
                "hidden_width": self.hidden_width, "dropout_p": self.dropout_p,
                "hidden_activation": self.hidden_activation,
                "output_activation": self.output_activation}

    @classmethod
    def from_dict(cls, d: dict) -> "DnnConfig":
        return cls(**d)


@dataclass
class DnnParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def param_list(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def to_jsonable(self) -> dict:
        return {"layers": [{"W": w.tolist(), "b": b.tolist()}
                           for w, b in zip(self.weights, self.biases)]}

    @classmethod
    def from_jsonable(cls, d: dict) -> "DnnParams":
        return cls(weights=[np.array(x["W"], dtype=np.float64) for x in d["layers"]],
                   biases=[np.array(x["b"], dtype=np.float64) for x in d["layers"]])


def init_dnn_params(cfg: DnnConfig, seed: int) -> DnnParams:
    rng = np.random.default_rng(seed)
    dims = [cfg.in_dim] + [cfg.hidden_width] * cfg.n_hidden_layers + [cfg.out_dim]
    weights, biases = [], []
    for f_in, f_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / (f_in + f_out))
        weights.append(rng.uniform(-lim, lim, size=(f_out, f_in)))
        biases.append(np.zeros(f_out))
    return DnnParams(weights=weights, biases=biases)


def dnn_forward(x: np.ndarray, params: DnnParams, cfg: DnnConfig,
                training: bool = False,
                rng: Optional[np.random.Generator] = None):
    """Fully connected forward over a (batch, in_dim) matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != cfg.in_dim:
        raise ModelMismatchError(
            f"input length {x.shape[1]} != n_u*(n_f+1) = {cfg.in_dim}; "
            "this DNN is fixed to one UE count")
    caches = []
    h = x
    last = len(params.weights) - 1
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        act = cfg.output_activation if li == last else cfg.hidden_activation
        h_drop, keep = dropout_fwd(h, cfg.dropout_p, training, rng)
        pre = affine_fwd(h_drop, w, b)
        act_f, _ = activation(act)
        out = act_f(pre)
        caches.append({"x": h_drop, "keep": keep, "w": w, "pre": pre,
                       "out": out, "act": act})
        h = out
    return h, caches


def dnn_backward(caches, dy: np.ndarray) -> list[np.ndarray]:
    """Gradients aligned with DnnParams.param_list()."""
    grads = []
    dh = dy
    for cache in reversed(caches):
        _, act_b = activation(cache["act"])
        dpre = act_b(cache["pre"], cache["out"], dh)
        dx, dw, db = affine_bwd(cache["x"], cache["w"], dpre)
        grads.append((dw, db))
        dh = dropout_bwd(dx, cache["keep"])
    out = []
    for dw, db in reversed(grads):
        out.extend([dw, db])
    return out
