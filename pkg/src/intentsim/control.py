"""Control plane: intent activation, E3/E2 message schemas, and the
reference near-RT policy loop.

Message exchange is synchronous at TTI boundaries: E3 INDICATION / E3
CONTROL pairs every scheduling interval, near-RT REPORTs (measurement +
scheduling summary) and one CONTROL directive every closed 10-TTI window.
The ledger of emitted messages is the signaling-overhead observable behind
messages.csv.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, fields as dc_fields
from enum import Enum

from .radio import Direction
from .scheduler import AllocationMap, AllocEntry


class ServiceModel(str, Enum):
    E2SM_KPM = "E2SM-KPM"
    E2SM_RC = "E2SM-RC"
    E2SM_DAPP = "E2SM-DAPP"
    E3SM = "E3SM"


class MsgType(str, Enum):
    RIC_REPORT = "RIC REPORT"
    RIC_CONTROL = "RIC CONTROL"
    E3_INDICATION = "E3 INDICATION"
    E3_CONTROL = "E3 CONTROL"


# the six (service model, message type) rows that exist on the wire
VALID_PAIRS = {
    (ServiceModel.E2SM_KPM, MsgType.RIC_REPORT),
    (ServiceModel.E2SM_RC, MsgType.RIC_CONTROL),
    (ServiceModel.E2SM_DAPP, MsgType.RIC_REPORT),
    (ServiceModel.E2SM_DAPP, MsgType.RIC_CONTROL),
    (ServiceModel.E3SM, MsgType.E3_INDICATION),
    (ServiceModel.E3SM, MsgType.E3_CONTROL),
}


@dataclass
class Intent:
    object_id: int
    activated_tti: int
    episode_index: int


@dataclass
class UeReportEntry:
    rnti: int
    cqi: int
    qci: int
    buffer_bytes: int
    criticality: float


@dataclass
class E3IndicationPayload:
    active_ues: int
    available_units: int
    subframe: int
    direction: str
    per_ue: list  # UeReportEntry


@dataclass
class E3ControlPayload:
    selections: list  # (rnti, units, mcs)


@dataclass
class KpmReportPayload:
    active_ues: int
    resource_utilization_pct: float
    throughput_bps: float
    latency_ms: float | None
    buffer_level_bytes: int
    cqi_mean: float


@dataclass
class DappUeSummary:
    rnti: int
    avg_throughput_bps: float
    avg_delay_ms: float | None
    bytes_served: int


@dataclass
class DappReportPayload:
    served_ues_total: int
    allocated_units_total: int
    system_load_pct: float
    per_ue: list  # DappUeSummary


@dataclass
class DappControlPayload:
    budget_fraction: float
    strategy_override: str | None
    skip_rntis: tuple
    skip_subframes: tuple


@dataclass
class RcControlPayload:
    scheduling_constraints: str = ""
    prioritization_rules: str = ""
    admission_control: str = ""
    link_adaptation_policy: str = ""


@dataclass
class ControlMessage:
    service_model: ServiceModel
    msg_type: MsgType
    tti: int
    direction: str
    payload: object

    def __post_init__(self):
        if (self.service_model, self.msg_type) not in VALID_PAIRS:
            raise ValueError(
                f"invalid pair {self.service_model}/{self.msg_type}")

    def field_count(self) -> int:
        return _count_leaves(self.payload)


def _count_leaves(obj) -> int:
    if hasattr(obj, "__dataclass_fields__"):
        return sum(_count_leaves(getattr(obj, f.name))
                   for f in dc_fields(obj))
    if isinstance(obj, (list, tuple)):
        return sum(_count_leaves(x) for x in obj)
    return 1


@dataclass
class XappDirective:
    budget_fraction: float = 1.0
    strategy_override: str | None = None
    skip_rntis: frozenset = frozenset()
    skip_subframes: frozenset = frozenset()


# --- producers ---------------------------------------------------------------

def producer_activate(vocab, rng, tti: int = 0, episode_index: int = 0) -> Intent:
    """Uniform draw of one object ID over the dataset vocabulary."""
    ids = sorted(set(vocab))
    if not ids:
        raise ValueError("empty intent vocabulary")
    return Intent(ids[int(rng.integers(len(ids)))], tti, episode_index)


def e3_indication(ue_states, tti: int, direction: Direction,
                  available_units: int) -> ControlMessage:
    per_ue = [UeReportEntry(u.rnti, u.cqi, u.qci, u.buffer_bytes,
                            u.max_criticality) for u in ue_states]
    payload = E3IndicationPayload(len(ue_states), available_units,
                                  tti % 10, direction.value, per_ue)
    return ControlMessage(ServiceModel.E3SM, MsgType.E3_INDICATION, tti,
                          direction.value, payload)


def e3_control(alloc: AllocationMap, tti: int) -> ControlMessage:
    payload = E3ControlPayload(
        [(e.rnti, tuple(e.units), e.mcs) for e in alloc.entries])
    return ControlMessage(ServiceModel.E3SM, MsgType.E3_CONTROL, tti,
                          alloc.direction.value, payload)


def apply_e3_control(msg: ControlMessage) -> AllocationMap:
    """Rebuild the allocation a CONTROL message mirrors (round-trip)."""
    direction = Direction(msg.direction)
    alloc = AllocationMap(direction, [])
    for rnti, units, mcs in msg.payload.selections:
        alloc.entries.append(AllocEntry(rnti, tuple(units), mcs))
    return alloc


def e2_report_kpm(stats: KpmReportPayload, tti: int,
                  direction: Direction) -> ControlMessage:
    return ControlMessage(ServiceModel.E2SM_KPM, MsgType.RIC_REPORT, tti,
                          direction.value, stats)


def e2_report_dapp(summary: DappReportPayload, tti: int,
                   direction: Direction) -> ControlMessage:
    return ControlMessage(ServiceModel.E2SM_DAPP, MsgType.RIC_REPORT, tti,
                          direction.value, summary)


def xapp_step(utilization_pct: float, policy: str = "passthrough") -> XappDirective:
    """Reference near-RT policy.

    ``budget_shed`` trims the budget to 90% once window utilization reaches
    90%; ``passthrough`` always forwards the full budget (the benchmarking
    default).  No strategy override is ever issued by default.
    """
    if policy == "budget_shed" and utilization_pct >= 90.0:
        return XappDirective(budget_fraction=0.9)
    return XappDirective(budget_fraction=1.0)


def dapp_control_message(directive: XappDirective, tti: int) -> ControlMessage:
    payload = DappControlPayload(directive.budget_fraction,
                                 directive.strategy_override,
                                 tuple(sorted(directive.skip_rntis)),
                                 tuple(sorted(directive.skip_subframes)))
    return ControlMessage(ServiceModel.E2SM_DAPP, MsgType.RIC_CONTROL, tti,
                          "-", payload)


def rc_control_message(tti: int, payload: RcControlPayload | None = None) -> ControlMessage:
    """Direct RAN control row: schema coverage, no-op default handler."""
    return ControlMessage(ServiceModel.E2SM_RC, MsgType.RIC_CONTROL, tti,
                          "-", payload or RcControlPayload())


# --- serialization -------------------------------------------------------------

_PAYLOAD_TYPES = {
    (ServiceModel.E3SM, MsgType.E3_INDICATION): E3IndicationPayload,
    (ServiceModel.E3SM, MsgType.E3_CONTROL): E3ControlPayload,
    (ServiceModel.E2SM_KPM, MsgType.RIC_REPORT): KpmReportPayload,
    (ServiceModel.E2SM_DAPP, MsgType.RIC_REPORT): DappReportPayload,
    (ServiceModel.E2SM_DAPP, MsgType.RIC_CONTROL): DappControlPayload,
    (ServiceModel.E2SM_RC, MsgType.RIC_CONTROL): RcControlPayload,
}


def message_to_dict(msg: ControlMessage) -> dict:
    return {
        "service_model": msg.service_model.value,
        "msg_type": msg.msg_type.value,
        "tti": msg.tti,
        "direction": msg.direction,
        "payload": asdict(msg.payload) if hasattr(msg.payload, "__dataclass_fields__")
                   else msg.payload,
    }


def message_from_dict(d: dict) -> ControlMessage:
    sm = ServiceModel(d["service_model"])
    mt = MsgType(d["msg_type"])
    ptype = _PAYLOAD_TYPES[(sm, mt)]
    raw = dict(d["payload"])
    if ptype is E3IndicationPayload:
        raw["per_ue"] = [UeReportEntry(**u) for u in raw["per_ue"]]
    elif ptype is DappReportPayload:
        raw["per_ue"] = [DappUeSummary(**u) for u in raw["per_ue"]]
    elif ptype is E3ControlPayload:
        raw["selections"] = [(r, tuple(u), m) for r, u, m in raw["selections"]]
    elif ptype is DappControlPayload:
        raw["skip_rntis"] = tuple(raw["skip_rntis"])
        raw["skip_subframes"] = tuple(raw["skip_subframes"])
    return ControlMessage(sm, mt, d["tti"], d["direction"], ptype(**raw))
