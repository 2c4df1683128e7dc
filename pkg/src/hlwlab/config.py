"""Run configuration: one JSON document with optional sections, strict
about unknown keys. Defaults reproduce the 10x10x3 m room with a 4x4 LiFi
grid, 20 UEs and 3 subflows."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .allocator import SolverConfig
from .channel import LiFiPhyConfig, WiFiPhyConfig
from .errors import SchemaError
from .pipeline import TrainConfig
from .scenario import RoomConfig

MODEL_KEYS = {"n_layers", "hidden_dim", "n_heads", "dropout_p", "leaky_slope",
              "n_hidden_layers", "hidden_width"}
EVAL_KEYS = {"bootstrap", "seed", "repeats", "workers", "jain_mode"}


@dataclass
class RunConfig:
    room: RoomConfig = field(default_factory=RoomConfig)
    lifi_phy: LiFiPhyConfig = field(default_factory=LiFiPhyConfig)
    wifi_phy: WiFiPhyConfig = field(default_factory=WiFiPhyConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: dict = field(default_factory=lambda: {"bootstrap": 1000, "seed": 0,
                                                "repeats": 50, "workers": 1,
                                                "jain_mode": "satisfaction"})


def _build_section(cls, data: dict, section: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise SchemaError(f"unknown keys in config section {section!r}: "
                          f"{sorted(unknown)}")
    return cls(**data)


def load_config(path: Optional[str]) -> RunConfig:
    """Parse and validate a config file; None yields the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON at byte {exc.pos}: {exc.msg}") \
            from exc
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: config root must be a JSON object")
    sections = {"room": RoomConfig, "lifi_phy": LiFiPhyConfig,
                "wifi_phy": WiFiPhyConfig, "solver": SolverConfig,
                "train": TrainConfig}
    unknown = set(raw) - set(sections) - {"model", "eval"}
    if unknown:
        raise SchemaError(f"{path}: unknown config sections {sorted(unknown)}")
    cfg = RunConfig()
    for name, cls in sections.items():
        if name in raw:
            setattr(cfg, name, _build_section(cls, raw[name], name))
    if "model" in raw:
        bad = set(raw["model"]) - MODEL_KEYS
        if bad:
            raise SchemaError(f"{path}: unknown model keys {sorted(bad)}")
        cfg.model = dict(raw["model"])
    if "eval" in raw:
        bad = set(raw["eval"]) - EVAL_KEYS
        if bad:
            raise SchemaError(f"{path}: unknown eval keys {sorted(bad)}")
        cfg.eval.update(raw["eval"])
    return cfg
