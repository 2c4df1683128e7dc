"""Network instances: room/AP layout, UE placement, subflow selection and
the node-feature graph handed to the learning models.

AP index 0 is always the single WiFi AP; LiFi APs follow in grid placement
order. Graph nodes are ordered [UE_0..UE_{n_u-1}, WiFi AP, LiFi APs] so UE
label rows align with the model readout rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import LiFiPhyConfig, LinkGeometry, WiFiPhyConfig, lifi_sinr, link_capacity, wifi_snr, lifi_channel_gain
from .errors import ConfigError, IntegrityError, SchemaError

RECORD_SCHEMA_VERSION = 1

# Linear SINR of zero maps to this dB value before min-max scaling.
SINR_DB_FLOOR = -30.0
# Features outside the training range are clamped to this window.
FEATURE_CLAMP = (-0.5, 1.5)


@dataclass(frozen=True)
class RoomConfig:
    """Room geometry, AP grid and traffic parameters of one network scale."""

    length_m: float = 10.0
    width_m: float = 10.0
    height_m: float = 3.0
    lifi_rows: int = 4
    lifi_cols: int = 4
    ap_separation_m: float = 2.5
    wifi_height_m: float = 0.5
    ue_height_m: float = 0.5
    n_ue: int = 20
    n_subflows: int = 3
    mean_rate_bps: float = 100e6

    def __post_init__(self):
        if min(self.length_m, self.width_m, self.height_m) <= 0:
            raise ConfigError("room dimensions must be positive")
        if self.lifi_rows < 1 or self.lifi_cols < 1:
            raise ConfigError("LiFi grid must be at least 1x1")
        if self.ap_separation_m <= 0:
            raise ConfigError("ap_separation_m must be positive")
        if (self.lifi_cols - 1) * self.ap_separation_m > self.length_m or \
           (self.lifi_rows - 1) * self.ap_separation_m > self.width_m:
            raise ConfigError("LiFi grid does not fit inside the room footprint")
        if not 0 <= self.wifi_height_m <= self.height_m:
            raise ConfigError("wifi_height_m outside the room")
        if not 0 <= self.ue_height_m < self.height_m:
            raise ConfigError("ue_height_m outside the room")
        if self.n_ue < 1:
            raise ConfigError("n_ue must be >= 1")
        if self.n_subflows < 2:
            raise ConfigError("n_subflows must be >= 2")
        if self.n_subflows - 1 > self.lifi_rows * self.lifi_cols:
            raise ConfigError("n_subflows - 1 exceeds the number of LiFi APs")
        if self.mean_rate_bps <= 0:
            raise ConfigError("mean_rate_bps must be positive")

    @property
    def n_lifi(self) -> int:
        return self.lifi_rows * self.lifi_cols

    @property
    def n_ap(self) -> int:
        return self.n_lifi + 1


@dataclass
class Scenario:
    """One concrete network instance with per-link SINR and capacity."""

    ap_kinds: list[str]               # "wifi" | "lifi", index 0 is WiFi
    ap_pos: np.ndarray                # (n_a, 3)
    ue_pos: np.ndarray                # (n_u, 3)
    req_bps: np.ndarray               # (n_u,)
    sinr: np.ndarray                  # (n_a, n_u), linear ratios
    capacity_bps: np.ndarray          # (n_a, n_u)
    serving: list[list[int]]          # per UE, [wifi_ap, lifi descending]
    room: Optional[RoomConfig] = None # provenance; required for .jsonl records
    seed: Optional[int] = None

    @property
    def n_ap(self) -> int:
        return len(self.ap_kinds)

    @property
    def n_ue(self) -> int:
        return len(self.req_bps)

    @property
    def n_subflows(self) -> int:
        return len(self.serving[0]) if self.serving else 0

    def served_by(self) -> list[list[int]]:
        """UEs attached to each AP (the U_i sets)."""
        out: list[list[int]] = [[] for _ in range(self.n_ap)]
        for j, s_j in enumerate(self.serving):
            for i in s_j:
                out[i].append(j)
        return out


@dataclass
class NormMeta:
    """Min-max ranges fitted on the training split, reused everywhere else."""

    sinr_db_min: float
    sinr_db_max: float
    rate_min_bps: float
    rate_max_bps: float
    db_floor: float = SINR_DB_FLOOR

    def sinr_feature(self, sinr_linear):
        db = sinr_to_db(np.asarray(sinr_linear, dtype=np.float64), self.db_floor)
        x = (db - self.sinr_db_min) / (self.sinr_db_max - self.sinr_db_min)
        return np.clip(x, *FEATURE_CLAMP)

    def rate_feature(self, rate_bps):
        x = (np.asarray(rate_bps, dtype=np.float64) - self.rate_min_bps) \
            / (self.rate_max_bps - self.rate_min_bps)
        return np.clip(x, *FEATURE_CLAMP)

    def to_dict(self) -> dict:
        return {"sinr_db_min": self.sinr_db_min, "sinr_db_max": self.sinr_db_max,
                "rate_min_bps": self.rate_min_bps, "rate_max_bps": self.rate_max_bps,
                "db_floor": self.db_floor}

    @classmethod
    def from_dict(cls, d: dict) -> "NormMeta":
        return cls(**d)


@dataclass
class SampleGraph:
    """Model-ready graph: features, message-passing edges and UE labels.

    Edges are stored sorted by destination with CSR offsets ``seg_ptr`` so
    per-neighborhood reductions are contiguous. Self-loops guarantee every
    node owns a nonempty segment.
    """

    n_nodes: int
    n_ue: int
    features: np.ndarray              # (n_nodes, n_f + 1)
    edge_src: np.ndarray              # (n_edges,) int64, sorted by dst
    edge_dst: np.ndarray              # (n_edges,) int64, nondecreasing
    seg_ptr: np.ndarray               # (n_nodes + 1,) int64
    serving: list[list[int]]
    ue_labels: Optional[np.ndarray] = None   # (n_ue, n_f)
    norm: Optional[NormMeta] = None

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)


def sinr_to_db(sinr_linear, floor_db: float = SINR_DB_FLOOR):
    """Linear ratio to dB with a floor for zeros (10*log10, floored)."""
    x = np.asarray(sinr_linear, dtype=np.float64)
    out = np.full_like(x, floor_db)
    pos = x > 0
    out[pos] = np.maximum(10.0 * np.log10(x[pos]), floor_db)
    return out


def place_aps(cfg: RoomConfig) -> tuple[list[str], np.ndarray]:
    """WiFi AP at the room centre at table height, LiFi APs on a centered
    ceiling grid with spacing ``ap_separation_m``."""
    kinds = ["wifi"] + ["lifi"] * cfg.n_lifi
    pos = np.zeros((cfg.n_ap, 3))
    pos[0] = (cfg.length_m / 2.0, cfg.width_m / 2.0, cfg.wifi_height_m)
    x0 = (cfg.length_m - (cfg.lifi_cols - 1) * cfg.ap_separation_m) / 2.0
    y0 = (cfg.width_m - (cfg.lifi_rows - 1) * cfg.ap_separation_m) / 2.0
    k = 1
    for r in range(cfg.lifi_rows):
        for c in range(cfg.lifi_cols):
            pos[k] = (x0 + c * cfg.ap_separation_m, y0 + r * cfg.ap_separation_m,
                      cfg.height_m)
            k += 1
    return kinds, pos


def sample_ues(cfg: RoomConfig, seed: int, n_ue: Optional[int] = None) -> np.ndarray:
    """UE positions i.i.d. uniform over the floor at ``ue_height_m``."""
    n = cfg.n_ue if n_ue is None else n_ue
    rng = np.random.default_rng([seed, 0])
    pos = np.empty((n, 3))
    pos[:, 0] = rng.uniform(0.0, cfg.length_m, size=n)
    pos[:, 1] = rng.uniform(0.0, cfg.width_m, size=n)
    pos[:, 2] = cfg.ue_height_m
    return pos


def sample_requirements(cfg: RoomConfig, seed: int, n_ue: Optional[int] = None) -> np.ndarray:
    """Per-UE data rate demands: Gamma with unity shape, i.e. exponential."""
    n = cfg.n_ue if n_ue is None else n_ue
    rng = np.random.default_rng([seed, 1])
    req = rng.gamma(shape=1.0, scale=cfg.mean_rate_bps, size=n)
    return np.maximum(req, 1.0)    # guard against exact zeros


def select_subflows(lifi_gains: np.ndarray, n_subflows: int) -> list[list[int]]:
    """Signal-strength subflow selection.

    ``lifi_gains`` is (n_lifi, n_ue) channel gains; each UE gets the WiFi AP
    (index 0) plus the ``n_subflows - 1`` LiFi APs of largest gain
    (equivalently largest interference-free SNR). Ties break towards the
    lower AP index; within a serving set the order is [WiFi, LiFi descending].
    """
    n_lifi, n_ue = lifi_gains.shape
    if n_subflows - 1 > n_lifi:
        raise ConfigError("not enough LiFi APs for the requested subflow count")
    serving = []
    for j in range(n_ue):
        # stable sort on negated gains keeps the lowest index first on ties
        order = np.argsort(-lifi_gains[:, j], kind="stable")
        picks = order[: n_subflows - 1]
        serving.append([0] + [int(p) + 1 for p in picks])
    return serving


def build_scenario(cfg: RoomConfig, lifi_cfg: LiFiPhyConfig, wifi_cfg: WiFiPhyConfig,
                   seed: int) -> Scenario:
    """Compose placement, channels, SSS and capacities into one instance."""
    kinds, ap_pos = place_aps(cfg)
    ue_pos = sample_ues(cfg, seed)
    req = sample_requirements(cfg, seed)

    n_a, n_u = len(kinds), len(ue_pos)
    gains = np.zeros((cfg.n_lifi, n_u))      # LiFi optical gains, AP-major
    for li in range(cfg.n_lifi):
        for j in range(n_u):
            geom = LinkGeometry(tuple(ap_pos[li + 1]), tuple(ue_pos[j]))
            gains[li, j] = lifi_channel_gain(geom, lifi_cfg)

    sinr = np.zeros((n_a, n_u))
    for j in range(n_u):
        geom = LinkGeometry(tuple(ap_pos[0]), tuple(ue_pos[j]))
        sinr[0, j] = wifi_snr(geom, wifi_cfg)
        for li in range(cfg.n_lifi):
            sinr[li + 1, j] = lifi_sinr(gains[:, j], li, lifi_cfg)

    cap = np.zeros((n_a, n_u))
    for i in range(n_a):
        for j in range(n_u):
            cap[i, j] = link_capacity(sinr[i, j], kinds[i], lifi_cfg, wifi_cfg)

    serving = select_subflows(gains, cfg.n_subflows)
    return Scenario(ap_kinds=kinds, ap_pos=ap_pos, ue_pos=ue_pos,
                    req_bps=req, sinr=sinr, capacity_bps=cap, serving=serving,
                    room=cfg, seed=seed)


def build_graph(sc: Scenario, labels: Optional[np.ndarray] = None,
                norm: Optional[NormMeta] = None) -> SampleGraph:
    """Scenario -> SampleGraph.

    UE feature rows hold the serving-order SINRs and the rate demand
    (min-max scaled when ``norm`` is given, otherwise dB-floored SINR and
    raw rate); AP rows are zero. Message-passing edges are the symmetrized
    UE-AP pairs plus one self-loop per node.
    """
    n_u, n_a, n_f = sc.n_ue, sc.n_ap, sc.n_subflows
    n_nodes = n_u + n_a

    feats = np.zeros((n_nodes, n_f + 1))
    for j, s_j in enumerate(sc.serving):
        g = sc.sinr[s_j, j]
        feats[j, :n_f] = norm.sinr_feature(g) if norm else sinr_to_db(g)
        feats[j, n_f] = norm.rate_feature(sc.req_bps[j]) if norm else sc.req_bps[j]

    if labels is not None:
        labels = np.asarray(labels, dtype=np.float64)
        if labels.shape != (n_u, n_f):
            raise IntegrityError(
                f"labels shape {labels.shape} does not match (n_ue, n_f)=({n_u}, {n_f})")
        if not np.isfinite(labels).all() or labels.min() < -1e-12 or labels.max() > 1 + 1e-9:
            raise IntegrityError("labels outside [0, 1]")
        per_ap = np.zeros(n_a)
        for j, s_j in enumerate(sc.serving):
            per_ap[s_j] += labels[j]
        if per_ap.max() > 1.0 + 1e-9:
            raise IntegrityError("labels violate a per-AP time budget")

    src, dst = [], []
    for j, s_j in enumerate(sc.serving):
        for i in s_j:
            ap_node = n_u + i
            src.append(ap_node); dst.append(j)        # AP -> UE
            src.append(j); dst.append(ap_node)        # UE -> AP
    for v in range(n_nodes):
        src.append(v); dst.append(v)                  # self-loop

    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.argsort(dst, kind="stable")
    src, dst = src[order], dst[order]
    seg_ptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(seg_ptr, dst + 1, 1)
    seg_ptr = np.cumsum(seg_ptr)

    return SampleGraph(n_nodes=n_nodes, n_ue=n_u, features=feats,
                       edge_src=src, edge_dst=dst, seg_ptr=seg_ptr,
                       serving=[list(s) for s in sc.serving],
                       ue_labels=labels, norm=norm)


# --- dataset record (.jsonl) serialization ---------------------------------

def scenario_to_record(sc: Scenario, labels: Optional[np.ndarray] = None,
                       label_method: Optional[str] = None) -> dict:
    if sc.room is None:
        raise SchemaError("scenario has no room config; cannot serialize")
    rec = {
        "schema_version": RECORD_SCHEMA_VERSION,
        "seed": sc.seed,
        "scale": {
            "room": [sc.room.length_m, sc.room.width_m, sc.room.height_m],
            "grid": [sc.room.lifi_rows, sc.room.lifi_cols],
            "d0": sc.room.ap_separation_m,
            "h0": sc.room.wifi_height_m,
        },
        "n_a": sc.n_ap,
        "n_u": sc.n_ue,
        "n_f": sc.n_subflows,
        "ap": [{"kind": k, "pos": list(map(float, p))}
               for k, p in zip(sc.ap_kinds, sc.ap_pos)],
        "ue": [{
            "pos": list(map(float, sc.ue_pos[j])),
            "req_bps": float(sc.req_bps[j]),
            "serving": list(map(int, sc.serving[j])),
            "sinr": [float(sc.sinr[i, j]) for i in sc.serving[j]],
            "cap_bps": [float(sc.capacity_bps[i, j]) for i in sc.serving[j]],
        } for j in range(sc.n_ue)],
    }
    if labels is not None:
        rec["labels"] = [[float(v) for v in row] for row in labels]
        rec["label_method"] = label_method or "optimizer"
    return rec


def scenario_from_record(rec: dict) -> tuple[Scenario, Optional[np.ndarray]]:
    """Rebuild a Scenario (and labels, if present) from one .jsonl record.

    The per-link SINR/capacity matrices are restored sparsely: entries
    outside the serving sets are zero, which is all downstream consumers use.
    """
    if rec.get("schema_version") != RECORD_SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported record schema_version {rec.get('schema_version')!r}")
    scale = rec["scale"]
    n_a, n_u, n_f = rec["n_a"], rec["n_u"], rec["n_f"]
    room = RoomConfig(length_m=scale["room"][0], width_m=scale["room"][1],
                      height_m=scale["room"][2], lifi_rows=scale["grid"][0],
                      lifi_cols=scale["grid"][1], ap_separation_m=scale["d0"],
                      wifi_height_m=scale["h0"],
                      ue_height_m=rec["ue"][0]["pos"][2] if n_u else 0.5,
                      n_ue=n_u, n_subflows=n_f)
    kinds = [a["kind"] for a in rec["ap"]]
    ap_pos = np.array([a["pos"] for a in rec["ap"]])
    ue_pos = np.array([u["pos"] for u in rec["ue"]])
    req = np.array([u["req_bps"] for u in rec["ue"]])
    sinr = np.zeros((n_a, n_u))
    cap = np.zeros((n_a, n_u))
    serving = []
    for j, u in enumerate(rec["ue"]):
        serving.append(list(u["serving"]))
        for k, i in enumerate(u["serving"]):
            sinr[i, j] = u["sinr"][k]
            cap[i, j] = u["cap_bps"][k]
    sc = Scenario(ap_kinds=kinds, ap_pos=ap_pos, ue_pos=ue_pos,
                  req_bps=req, sinr=sinr, capacity_bps=cap, serving=serving,
                  room=room, seed=rec.get("seed"))
    labels = np.array(rec["labels"]) if "labels" in rec else None
    return sc, labels


def dump_record(rec: dict) -> str:
    """One-line JSON with full float round-trip precision."""
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def load_records(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{ln}: invalid JSON ({exc})") from exc
    return out
