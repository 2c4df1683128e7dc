"""LiFi/WiFi link physics: channel gains, SINR/SNR and link capacities.

All ratios are kept linear; dB conversion happens only at feature
normalization time. Functions here are pure and safe to call from any
number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, GeometryError

SPEED_OF_LIGHT = 299792458.0

# Shannon pre-factor of the optical intensity channel: capacity is
# (B/2) * log2(1 + (e/2pi) * sinr) for LiFi links.
LIFI_SNR_FACTOR = math.e / (2.0 * math.pi)


@dataclass(frozen=True)
class LiFiPhyConfig:
    """Optical front-end and noise parameters of the LiFi downlink."""

    semi_angle_deg: float = 60.0       # LED semi-intensity angle
    pd_area_m2: float = 1e-4           # photodetector physical area
    filter_gain: float = 1.0
    concentrator_gain: float = 1.0
    fov_deg: float = 90.0              # receiver field of view
    responsivity_A_per_W: float = 0.53
    mod_power_W: float = 3.0           # modulated optical power
    noise_psd_A2_per_Hz: float = 1e-21
    bandwidth_Hz: float = 20e6
    nlos_factor: float = 0.0           # diffuse gain as a fraction of LoS

    def __post_init__(self):
        if not 0.0 < self.semi_angle_deg < 90.0:
            raise ConfigError(
                f"semi_angle_deg must lie in (0, 90), got {self.semi_angle_deg}")
        for name in ("pd_area_m2", "filter_gain", "concentrator_gain", "fov_deg",
                     "responsivity_A_per_W", "mod_power_W", "noise_psd_A2_per_Hz",
                     "bandwidth_Hz"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.nlos_factor < 0:
            raise ConfigError("nlos_factor must be >= 0")


@dataclass(frozen=True)
class WiFiPhyConfig:
    """WiFi transmit/noise parameters and the two-slope path-loss model.

    Free-space loss up to ``breakpoint_m``, then an extra
    ``pathloss_exp_after_bp`` power-law slope beyond it. Deterministic on
    purpose so dataset labels are reproducible.
    """

    tx_power_W: float = 0.1                      # 20 dBm
    noise_psd_W_per_Hz: float = 3.9810717055349694e-20   # -174 dBm/Hz + 10 dB NF
    bandwidth_Hz: float = 20e6
    carrier_freq_Hz: float = 2.4e9
    breakpoint_m: float = 10.0
    pathloss_exp_after_bp: float = 3.5

    def __post_init__(self):
        for name in ("tx_power_W", "noise_psd_W_per_Hz", "bandwidth_Hz",
                     "carrier_freq_Hz", "breakpoint_m", "pathloss_exp_after_bp"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True)
class LinkGeometry:
    """One AP-UE link: positions plus transmitter/receiver normals."""

    ap_pos: tuple[float, float, float]
    ue_pos: tuple[float, float, float]
    ap_normal: tuple[float, float, float] = (0.0, 0.0, -1.0)   # facing down
    ue_normal: tuple[float, float, float] = (0.0, 0.0, 1.0)    # facing up

    def __post_init__(self):
        for name in ("ap_normal", "ue_normal"):
            n = getattr(self, name)
            if abs(math.sqrt(n[0]**2 + n[1]**2 + n[2]**2) - 1.0) > 1e-9:
                raise ConfigError(f"{name} must have unit norm")

    @property
    def distance(self) -> float:
        dx = self.ap_pos[0] - self.ue_pos[0]
        dy = self.ap_pos[1] - self.ue_pos[1]
        dz = self.ap_pos[2] - self.ue_pos[2]
        return math.sqrt(dx * dx + dy * dy + dz * dz)


def lambertian_order(semi_angle_deg: float) -> float:
    """Lambertian order m = -1/log2(cos(semi_angle))."""
    if not 0.0 < semi_angle_deg < 90.0:
        raise ConfigError(
            f"semi_angle_deg must lie in (0, 90), got {semi_angle_deg}")
    return -1.0 / math.log2(math.cos(math.radians(semi_angle_deg)))


def lifi_channel_gain(geom: LinkGeometry, cfg: LiFiPhyConfig) -> float:
    """Optical channel gain of one LiFi link (unitless, >= 0).

    Line-of-sight gain from the generalized Lambertian radiation pattern,
    zero when the incidence angle exceeds the receiver FOV. The diffuse
    component is modelled as ``nlos_factor`` times the LoS term, so the
    returned total is (1 + nlos_factor) * H_los.
    """
    d = geom.distance
    if d <= 0.0:
        raise GeometryError("AP and UE coincide; link gain undefined")
    # irradiance/incidence cosines from the line of sight against each normal
    ux = (geom.ue_pos[0] - geom.ap_pos[0]) / d
    uy = (geom.ue_pos[1] - geom.ap_pos[1]) / d
    uz = (geom.ue_pos[2] - geom.ap_pos[2]) / d
    cos_irr = ux * geom.ap_normal[0] + uy * geom.ap_normal[1] + uz * geom.ap_normal[2]
    cos_inc = -(ux * geom.ue_normal[0] + uy * geom.ue_normal[1] + uz * geom.ue_normal[2])
    if cos_irr <= 0.0 or cos_inc <= 0.0:
        return 0.0
    if math.degrees(math.acos(min(cos_inc, 1.0))) > cfg.fov_deg:
        return 0.0
    m = lambertian_order(cfg.semi_angle_deg)
    h_los = ((m + 1.0) * cfg.pd_area_m2 / (2.0 * math.pi * d * d)
             * cos_irr**m * cfg.filter_gain * cfg.concentrator_gain * cos_inc)
    return (1.0 + cfg.nlos_factor) * h_los


def lifi_sinr(gains, serving_ap: int, cfg: LiFiPhyConfig) -> float:
    """SINR of the LiFi link from ``serving_ap``, all other LiFi APs interfering.

    ``gains`` holds the channel gain of every LiFi AP towards this UE. The
    electrical signal power is (R_pd * H * P_mod)^2; interference is the sum
    of the same quantity over the remaining LiFi APs.
    """
    if not 0 <= serving_ap < len(gains):
        raise ConfigError(f"serving_ap {serving_ap} out of range")
    scale = cfg.responsivity_A_per_W * cfg.mod_power_W
    signal = (scale * gains[serving_ap]) ** 2
    interference = sum((scale * g) ** 2 for i, g in enumerate(gains) if i != serving_ap)
    noise = cfg.noise_psd_A2_per_Hz * cfg.bandwidth_Hz
    return signal / (noise + interference)


def wifi_snr(geom: LinkGeometry, cfg: WiFiPhyConfig) -> float:
    """SNR of the WiFi link (single WiFi AP, no co-channel interference)."""
    d = geom.distance
    if d <= 0.0:
        raise GeometryError("AP and UE coincide; link gain undefined")
    lam = SPEED_OF_LIGHT / cfg.carrier_freq_Hz
    bp = cfg.breakpoint_m
    if d <= bp:
        h2 = (lam / (4.0 * math.pi * d)) ** 2
    else:
        h2 = (lam / (4.0 * math.pi * bp)) ** 2 * (bp / d) ** cfg.pathloss_exp_after_bp
    return h2 * cfg.tx_power_W / (cfg.noise_psd_W_per_Hz * cfg.bandwidth_Hz)


def link_capacity(sinr: float, ap_kind: str,
                  lifi_cfg: LiFiPhyConfig, wifi_cfg: WiFiPhyConfig) -> float:
    """Shannon-style link capacity in bits/s for a linear SINR.

    LiFi uses the intensity-channel bound (B/2) * log2(1 + (e/2pi) * sinr);
    WiFi uses B * log2(1 + sinr).
    """
    if sinr < 0.0:
        raise ConfigError(f"sinr must be >= 0, got {sinr}")
    if ap_kind == "lifi":
        return 0.5 * lifi_cfg.bandwidth_Hz * math.log2(1.0 + LIFI_SNR_FACTOR * sinr)
    if ap_kind == "wifi":
        return wifi_cfg.bandwidth_Hz * math.log2(1.0 + sinr)
    raise ConfigError(f"unknown ap_kind {ap_kind!r}")
