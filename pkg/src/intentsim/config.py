"""Scenario configuration: defaults, validation, and the text config format.

The config file is plain text, one ``key = value`` per line, ``#`` starts a
comment.  Booleans are ``true``/``false``, the TX-power range is a comma pair
(``-40, 23``).  Every key below is valid in the file and as a CLI override.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

STRATEGIES = ("rr", "cqi", "buffer", "criticality", "pf")
XAPP_POLICIES = ("passthrough", "budget_shed")
IMAGE_ASSIGNMENTS = ("random", "roundrobin")


class ConfigError(ValueError):
    """Raised for unparsable files or invariant violations; names the field."""


@dataclass
class ScenarioConfig:
    # scenario
    area_m: float = 500.0
    n_ues: int = 10
    episode_s: float = 10.0
    ul_pkt_bytes: int = 1400
    dl_pkt_bytes: int = 1400
    ul_rate_bps: int = 100_000
    dl_rate_bps: int = 200_000
    ul_prbs: int = 100
    dl_rbgs: int = 25
    rbg_size_prbs: int = 4
    bandwidth_hz: float = 20e6
    prb_hz: float = 180_000.0
    ue_tx_pwr_dbm_range: tuple = (-40.0, 23.0)
    enb_tx_pwr_dbm: float = 46.0
    p0_pusch_dbm: float = -96.0
    delta_dapp: int = 2
    near_rt_period_ttis: int = 10
    strategy: str = "rr"
    intent_based: bool = False
    seed: int = 1
    dataset_dir: str = "dataset"
    # channel (declared defaults, all overridable)
    pathloss_ref_db: float = 30.0
    pathloss_exponent: float = 3.5
    shadowing_sigma_db: float = 7.0
    shadowing_redraw_m: float = 10.0
    fastfade_sigma_db: float = 4.0
    fastfade_rho: float = 0.98
    noise_dbm_hz: float = -174.0
    nf_ue_db: float = 9.0
    nf_enb_db: float = 5.0
    enb_height_m: float = 30.0
    ue_height_m: float = 1.5
    ue_speed_mps: float = 3.0 / 3.6
    heading_change_m: float = 10.0
    cqi_shannon_factor: float = 0.6
    bler_slope_db: float = 0.5
    harq_max_tx: int = 4
    cqi_ref_share_prbs: int = 0  # 0 = auto: max(1, round(capacity / n_ues))
    cqi_backoff_db: float = 0.0  # link-adaptation margin on reported CQI
    # scheduler constants
    buffer_utility_ref_bytes: int = 50_000
    pf_ewma_ttis: int = 100
    pf_init_bps: float = 1000.0
    qci: int = 9
    # fidelity
    fidelity_alpha: float = 0.4
    fidelity_beta: float = 0.3
    fidelity_gamma: float = 0.3
    fidelity_min: float = 0.2
    content_block_px: int = 16
    content_var_threshold: float = 10.0
    content_var_ratio: float = 0.5
    semantic_threshold: float = 0.8
    # orchestration
    xapp_policy: str = "passthrough"
    image_assignment: str = "random"
    backhaul_offset_ms: float = 0.0
    measure_decision_time: bool = False
    collect_messages: bool = True

    @property
    def episode_ttis(self) -> int:
        return int(round(self.episode_s * 1000.0))

    @property
    def dl_prbs(self) -> int:
        return self.dl_rbgs * self.rbg_size_prbs

    def validate(self) -> "ScenarioConfig":
        def bad(field, why):
            raise ConfigError(f"{field}: {why}")

        if self.episode_s <= 0:
            bad("episode_s", "must be > 0")
        if self.n_ues < 1:
            bad("n_ues", "must be >= 1")
        if not (1 <= self.delta_dapp < self.near_rt_period_ttis):
            bad("delta_dapp", f"must satisfy 1 <= delta_dapp < {self.near_rt_period_ttis}")
        for name in ("ul_pkt_bytes", "dl_pkt_bytes", "ul_rate_bps", "dl_rate_bps",
                     "ul_prbs", "dl_rbgs", "rbg_size_prbs"):
            if getattr(self, name) <= 0:
                bad(name, "must be > 0")
        if self.dl_rbgs * self.rbg_size_prbs > 100:
            bad("dl_rbgs", "dl_rbgs * rbg_size_prbs must be <= 100")
        lo, hi = self.ue_tx_pwr_dbm_range
        if lo > hi:
            bad("ue_tx_pwr_dbm_range", "low bound exceeds high bound")
        if self.strategy not in STRATEGIES:
            bad("strategy", f"must be one of {STRATEGIES}")
        if self.xapp_policy not in XAPP_POLICIES:
            bad("xapp_policy", f"must be one of {XAPP_POLICIES}")
        if self.image_assignment not in IMAGE_ASSIGNMENTS:
            bad("image_assignment", f"must be one of {IMAGE_ASSIGNMENTS}")
        if self.harq_max_tx < 1:
            bad("harq_max_tx", "must be >= 1")
        s = self.fidelity_alpha + self.fidelity_beta + self.fidelity_gamma
        if abs(s - 1.0) > 1e-9:
            bad("fidelity_alpha", "alpha + beta + gamma must equal 1")
        if 224 % self.content_block_px != 0:
            bad("content_block_px", "must divide 224")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _parse_value(key: str, raw: str):
    ftype = _FIELD_TYPES.get(key)
    if ftype is None:
        raise ConfigError(f"{key}: unknown configuration key")
    raw = raw.strip()
    try:
        if ftype == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError("expected true/false")
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "tuple":
            parts = [float(p) for p in raw.split(",")]
            if len(parts) != 2:
                raise ValueError("expected two comma-separated numbers")
            return tuple(parts)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def parse_config_text(text: str) -> dict:
    """Parse the key=value config format into a field dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        out[key] = _parse_value(key, raw)
    return out


def load_config(path, overrides=None) -> ScenarioConfig:
    """Load a config file, apply overrides ("key=value" strings), validate.

    Absent keys keep their defaults; an empty file is a valid default scenario.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"dataset config unreadable: {exc}") from exc
    values = parse_config_text(text)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected 'key=value'")
        key, raw = item.split("=", 1)
        values[key.strip()] = _parse_value(key.strip(), raw)
    cfg = replace(ScenarioConfig(), **values)
    return cfg.validate()


def config_to_text(cfg: ScenarioConfig) -> str:
    """Render a config back to the file format (round-trip helper)."""
    lines = []
    for f in fields(ScenarioConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
