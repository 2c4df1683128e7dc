import numpy as np
import pytest

from hlwlab.channel import LiFiPhyConfig, WiFiPhyConfig
from hlwlab.scenario import RoomConfig, Scenario, build_scenario


def make_tiny(caps, reqs, serving) -> Scenario:
    """Hand-built instance for allocator tests: capacities (n_a, n_u) with
    AP 0 as the WiFi AP; geometry fields are placeholders."""
    caps = np.asarray(caps, dtype=np.float64)
    n_a, n_u = caps.shape
    return Scenario(ap_kinds=["wifi"] + ["lifi"] * (n_a - 1),
                    ap_pos=np.zeros((n_a, 3)), ue_pos=np.zeros((n_u, 3)),
                    req_bps=np.asarray(reqs, dtype=np.float64),
                    sinr=np.ones_like(caps), capacity_bps=caps,
                    serving=[list(s) for s in serving])


def scale1_room(n_ue=10, n_subflows=2) -> RoomConfig:
    return RoomConfig(length_m=7.5, width_m=7.5, height_m=3.0,
                      lifi_rows=3, lifi_cols=3, ap_separation_m=2.5,
                      n_ue=n_ue, n_subflows=n_subflows)


def scale2_room(n_ue=20, n_subflows=3) -> RoomConfig:
    return RoomConfig(n_ue=n_ue, n_subflows=n_subflows)


@pytest.fixture(scope="session")
def phy():
    return LiFiPhyConfig(), WiFiPhyConfig()


@pytest.fixture(scope="session")
def scale2_scenario(phy):
    return build_scenario(scale2_room(), *phy, seed=11)
