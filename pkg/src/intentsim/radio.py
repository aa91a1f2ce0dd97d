"""Radio layer: mobility, propagation, link adaptation, block errors, HARQ.

Link adaptation follows the 4-bit channel quality table from 3GPP TS 36.213
(Table 7.2.3-1 spectral efficiencies).  The channel itself is a deliberately
simple documented model: log-distance pathloss (30 dB at 1 m, exponent 3.5),
log-normal shadowing redrawn every 10 m walked, and an AR(1) fast-fading
process in dB.  Every constant is config-overridable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

# TS 36.213 Table 7.2.3-1 spectral efficiencies, index = CQI 1..15.
CQI_EFFICIENCY = (
    None,
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770,
    1.1758, 1.4766, 1.9141, 2.4063, 2.7305,
    3.3223, 3.9023, 4.5234, 5.1152, 5.5547,
)

_CQI_EPS = 1e-9  # keeps sinr_to_cqi(cqi_threshold_db(c)) == c under float rounding


class Direction(str, Enum):
    UL = "ul"
    DL = "dl"


def cqi_efficiency(cqi: int) -> float:
    if not 1 <= cqi <= 15:
        raise ValueError(f"cqi {cqi} outside 1..15")
    return CQI_EFFICIENCY[cqi]


def sinr_to_cqi(sinr_db: float, shannon_factor: float = 0.6) -> int:
    """Largest CQI whose table efficiency is achievable at this SINR.

    Achievable efficiency is the attenuated Shannon bound
    ``shannon_factor * log2(1 + snr)``; returns 0 when even CQI 1 is out of
    reach (UE is out of range and excluded from scheduling).
    """
    if not math.isfinite(sinr_db):
        raise ValueError("sinr must be finite")
    eff = shannon_factor * math.log2(1.0 + 10.0 ** (sinr_db / 10.0))
    cqi = 0
    for c in range(1, 16):
        if CQI_EFFICIENCY[c] <= eff + _CQI_EPS:
            cqi = c
        else:
            break
    return cqi


def cqi_threshold_db(cqi: int, shannon_factor: float = 0.6) -> float:
    """SINR at which sinr_to_cqi first returns this CQI."""
    eff = cqi_efficiency(cqi)
    return 10.0 * math.log10(2.0 ** (eff / shannon_factor) - 1.0)


def bits_per_alloc(cqi: int, n_prbs: int, prb_hz: float = 180_000.0) -> int:
    """TB capacity in bits for one TTI: floor(eff(cqi) * 180 kHz*ms * PRBs)."""
    if cqi == 0:
        raise ValueError("cqi 0 is unschedulable")
    if n_prbs < 0:
        raise ValueError("n_prbs must be >= 0")
    if n_prbs == 0:
        return 0
    return int(cqi_efficiency(cqi) * (prb_hz / 1000.0) * n_prbs)


def tb_failure_prob(sinr_db: float, cqi: int, slope_db: float = 0.5,
                    shannon_factor: float = 0.6) -> float:
    """Sigmoid BLER centred on the CQI's own selection threshold."""
    x = (sinr_db - cqi_threshold_db(cqi, shannon_factor)) / slope_db
    if x > 60.0:
        return 0.0
    if x < -60.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(x))


def tb_outcome(sinr_db: float, cqi: int, rng, slope_db: float = 0.5,
               shannon_factor: float = 0.6) -> bool:
    """Bernoulli transport-block outcome; True means delivered."""
    p_fail = tb_failure_prob(sinr_db, cqi, slope_db, shannon_factor)
    return rng.uniform() >= p_fail


# --- mobility -------------------------------------------------------------

@dataclass
class UePosition:
    x: float
    y: float
    heading: float
    walked_since_turn: float = 0.0


def step_mobility(pos: UePosition, dt: float, rng, area_m: float = 500.0,
                  speed_mps: float = 3.0 / 3.6, turn_m: float = 10.0) -> UePosition:
    """Advance a random-walk step: constant speed, new heading every 10 m,
    reflection at the area boundary."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return UePosition(pos.x, pos.y, pos.heading, pos.walked_since_turn)
    step = speed_mps * dt
    x = pos.x + math.cos(pos.heading) * step
    y = pos.y + math.sin(pos.heading) * step
    heading = pos.heading
    # fold back into the square, mirroring the heading component that hit
    while not (0.0 <= x <= area_m and 0.0 <= y <= area_m):
        if x < 0.0:
            x = -x
            heading = math.pi - heading
        elif x > area_m:
            x = 2.0 * area_m - x
            heading = math.pi - heading
        if y < 0.0:
            y = -y
            heading = -heading
        elif y > area_m:
            y = 2.0 * area_m - y
            heading = -heading
    walked = pos.walked_since_turn + step
    if walked >= turn_m:
        heading = rng.uniform() * 2.0 * math.pi
        walked = 0.0
    return UePosition(x, y, heading, walked)


def distance_3d(pos: UePosition, area_m: float, enb_height_m: float = 30.0,
                ue_height_m: float = 1.5) -> float:
    """3D distance to the cell-centre mast."""
    cx = cy = area_m / 2.0
    dz = enb_height_m - ue_height_m
    return math.sqrt((pos.x - cx) ** 2 + (pos.y - cy) ** 2 + dz * dz)


# --- propagation ----------------------------------------------------------

def pathloss_db(distance_m: float, ref_db: float = 30.0, exponent: float = 3.5) -> float:
    """Log-distance pathloss, ref_db at 1 m; clamped below 1 m."""
    return ref_db + 10.0 * exponent * math.log10(max(distance_m, 1.0))


def ul_tx_power_dbm(pathloss: float, p0_dbm: float, pwr_range=(-40.0, 23.0)) -> float:
    """Open-loop PUSCH power control with full pathloss compensation."""
    lo, hi = pwr_range
    return min(hi, max(lo, p0_dbm + pathloss))


def noise_dbm(bandwidth_hz: float, nf_db: float, noise_dbm_hz: float = -174.0) -> float:
    return noise_dbm_hz + 10.0 * math.log10(bandwidth_hz) + nf_db


@dataclass
class LinkState:
    pathloss_db: float
    shadowing_db: float
    fastfade_db: float
    sinr_db: float
    cqi: int


def link_sinr_db(pathloss: float, shadowing: float, fastfade: float,
                 direction: Direction, cfg, ref_bw_hz: float) -> float:
    """Received power minus thermal noise over the reference bandwidth."""
    loss = pathloss + shadowing + fastfade
    if direction == Direction.UL:
        tx = ul_tx_power_dbm(pathloss, cfg.p0_pusch_dbm, cfg.ue_tx_pwr_dbm_range)
        nf = cfg.nf_enb_db
    else:
        tx = cfg.enb_tx_pwr_dbm
        nf = cfg.nf_ue_db
    return (tx - loss) - noise_dbm(ref_bw_hz, nf, cfg.noise_dbm_hz)


def ref_share_prbs(cfg, direction: Direction) -> int:
    """Reference per-UE bandwidth share used for CQI measurement noise."""
    if cfg.cqi_ref_share_prbs > 0:
        return cfg.cqi_ref_share_prbs
    cap = cfg.ul_prbs if direction == Direction.UL else cfg.dl_prbs
    return max(1, round(cap / cfg.n_ues))


def compute_sinr(pos: UePosition, direction: Direction, cfg, rng) -> LinkState:
    """One-shot link snapshot drawing fresh shadowing and fading."""
    d = distance_3d(pos, cfg.area_m, cfg.enb_height_m, cfg.ue_height_m)
    pl = pathloss_db(d, cfg.pathloss_ref_db, cfg.pathloss_exponent)
    shadow = rng.normal() * cfg.shadowing_sigma_db
    fade = rng.normal() * cfg.fastfade_sigma_db
    bw = ref_share_prbs(cfg, direction) * cfg.prb_hz
    sinr = link_sinr_db(pl, shadow, fade, direction, cfg, bw)
    return LinkState(pl, shadow, fade, sinr, sinr_to_cqi(sinr, cfg.cqi_shannon_factor))


# --- HARQ -----------------------------------------------------------------

class HarqResult(str, Enum):
    DELIVERED = "delivered"
    RETRY = "retry"
    DROPPED = "dropped"


@dataclass
class HarqProcess:
    ue_id: int
    direction: Direction
    tb_bytes: int
    prbs_reserved: int
    cqi: int
    attempts: int = 1
    segments: list = field(default_factory=list)  # (packet, start, end)


def harq_tick(pending: list, capacity: int):
    """Reserve resources for pending retransmissions, oldest first.

    Returns (scheduled, deferred, reserved_units).  A retransmission reuses
    its original unit count; processes that do not fit stay pending without
    consuming an attempt.
    """
    scheduled, deferred = [], []
    reserved = 0
    for proc in pending:
        if reserved + proc.prbs_reserved <= capacity:
            scheduled.append(proc)
            reserved += proc.prbs_reserved
        else:
            deferred.append(proc)
    return scheduled, deferred, reserved


def complete_attempt(proc: HarqProcess, delivered: bool, max_tx: int = 4) -> HarqResult:
    """Resolve one transmission attempt; the 4th failed attempt drops the TB.

    ``proc.attempts`` counts transmissions already made, including the one
    being resolved (the caller increments it when the retx goes on air).
    """
    if delivered:
        return HarqResult.DELIVERED
    if proc.attempts >= max_tx:
        return HarqResult.DROPPED
    return HarqResult.RETRY
