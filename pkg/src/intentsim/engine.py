"""Episode and batch orchestration.

One episode is a fixed-step loop over 1 ms TTIs (every process in the model
is TTI-quantized, so a general event queue would buy nothing and cost
reproducibility).  Per TTI: paced packet arrivals, mobility, the scheduling
interval boundary every delta_dapp TTIs (HARQ reservation, E3 INDICATION,
demand/utility/selection/allocation, E3 CONTROL), transport-block
transmissions, and the near-RT window close every 10 TTIs (two REPORTs per
direction plus one policy directive).

All randomness flows through named substreams derived from the episode
seed, so (config, seed) fully determines every output and enabling or
disabling one stochastic process does not perturb the others.  Episodes
share no mutable state; batches may run them in worker processes and always
aggregate in (seed, delta) order.
"""

from __future__ import annotations

import math
import time
from bisect import bisect_right
from dataclasses import dataclass, field, replace

import numpy as np

from . import control, fidelity, kpi, scheduler, transport
from .config import ScenarioConfig
from .embedding import ProviderError, SurrogateProvider
from .radio import (Direction, HarqProcess, HarqResult, bits_per_alloc,
                    complete_attempt, cqi_threshold_db, harq_tick,
                    noise_dbm, ref_share_prbs)

RNG_STREAMS = ("mobility", "fading", "shadowing", "traffic", "intent", "harq")

DIRECTIONS = (Direction.UL, Direction.DL)


class EpisodeError(RuntimeError):
    pass


def make_rngs(seed: int) -> dict:
    """One independent generator per stochastic process."""
    return {name: np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), i]))
            for i, name in enumerate(RNG_STREAMS)}


class _CqiMapper:
    """Bisect-based CQI lookup, exactly equivalent to sinr_to_cqi."""

    def __init__(self, shannon_factor: float):
        from .radio import CQI_EFFICIENCY, _CQI_EPS
        self.thresholds = []
        for c in range(1, 16):
            eff = CQI_EFFICIENCY[c] - _CQI_EPS
            self.thresholds.append(10.0 * math.log10(2.0 ** (eff / shannon_factor) - 1.0))
        self.thresholds_arr = np.asarray(self.thresholds)
        self.fail_mid = [cqi_threshold_db(c, shannon_factor) for c in range(1, 16)]

    def cqi(self, sinr_db: float) -> int:
        return bisect_right(self.thresholds, sinr_db)

    def cqi_vec(self, sinr_db: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.thresholds_arr, sinr_db, side="right")


@dataclass
class _Ue:
    x: float
    y: float
    heading: float
    dx: float
    dy: float
    walked: float
    shadow_db: float
    pathloss: float


class _Flow:
    __slots__ = ("flow", "buffer", "arrivals", "next_arrival", "sent",
                 "delivered", "lost", "latencies", "delivered_bytes")

    def __init__(self, flow: transport.ImageFlow, pkt_bytes: int, rate_bps: int):
        self.flow = flow
        self.buffer = transport.RlcBuffer()
        self.arrivals = transport.arrival_ttis(len(flow.packets), pkt_bytes, rate_bps)
        self.next_arrival = 0
        self.sent = 0
        self.delivered = 0
        self.lost = 0
        self.latencies = []
        self.delivered_bytes = 0


class _DirState:
    def __init__(self, direction: Direction, capacity: int):
        self.direction = direction
        self.capacity = capacity
        self.pending = []           # HARQ processes awaiting retransmission
        self.retx_now = []          # scheduled for this interval's first TTI
        self.reserved = 0
        self.grants = []            # (ue_id, n_units, cqi, tb_bytes_cap)
        self.interval_start = -1
        self.rr_cursor = 0
        self.budget_fraction = 1.0
        self.skip_rntis = frozenset()
        self.skip_subframes = frozenset()
        self.usage_unit_ttis = 0
        self.candidate_sizes = []
        self.decision_ns = []
        # closed-window accumulators
        self.win_alloc_units = 0
        self.win_served_ues = 0
        self.win_delivered_bits = 0
        self.win_latencies = []
        self.win_ue_bytes = {}
        self.win_ue_delays = {}
        self.win_used_unit_ttis = 0
        self.last_cqi_mean = 0.0


@dataclass
class FlowSummary:
    ue_id: int
    direction: str
    relevant: bool
    sent: int
    delivered: int
    lost: int
    delivered_bytes: int
    report: fidelity.FidelityReport | None

    def unsettled(self) -> int:
        return self.sent - self.delivered - self.lost


@dataclass
class EpisodeResult:
    seed: int
    delta_dapp: int
    strategy: str
    intent_based: bool
    intent_id: int
    records: list
    flows: list
    message_rows: list = field(default_factory=list)

    def record(self, direction: str) -> kpi.KpiRecord:
        return next(r for r in self.records if r.direction == direction)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "delta_dapp": self.delta_dapp,
            "strategy": self.strategy, "intent_based": self.intent_based,
            "intent_id": self.intent_id,
            "records": [r.row() for r in self.records],
            "flows": [[f.ue_id, f.direction, f.relevant, f.sent, f.delivered,
                       f.lost, f.delivered_bytes,
                       None if f.report is None else
                       [f.report.f0, f.report.f1, f.report.f2, f.report.g_s,
                        f.report.fidelity, f.report.iss, f.report.relevant,
                        f.report.undecodable, f.report.valid]]
                      for f in self.flows],
            "message_rows": [list(r) for r in self.message_rows],
        }


class _SourceArtifacts:
    """Cached per-image evaluation inputs (content-addressed by path)."""

    def __init__(self, provider, block_px):
        self.provider = provider
        self.block_px = block_px
        self.entries = {}
        self.identity = {}  # (f0, f1, f2, g_s, F) of image vs itself

    def get(self, image: transport.DatasetImage):
        entry = self.entries.get(image.path)
        if entry is None:
            from .pngcodec import decode_png
            native = decode_png(image.data)
            pre = fidelity.preprocess(native)
            embeds = (self.provider.embed(pre),
                      [self.provider.embed(p) for p in fidelity.split_patches(pre)])
            var = fidelity.block_variances(pre, self.block_px)
            entry = (native, (pre, embeds, var))
            self.entries[image.path] = entry
        return entry


class _EpisodeRunner:
    def __init__(self, cfg: ScenarioConfig, seed: int, dataset: transport.Dataset,
                 provider, artifacts: _SourceArtifacts | None):
        if len(dataset.images) < cfg.n_ues:
            raise EpisodeError(
                f"dataset holds {len(dataset.images)} images, need >= {cfg.n_ues}")
        self.cfg = cfg
        self.seed = seed
        self.dataset = dataset
        self.provider = provider
        self.artifacts = artifacts or _SourceArtifacts(provider, cfg.content_block_px)
        self.rngs = make_rngs(seed)
        self.mapper = _CqiMapper(cfg.cqi_shannon_factor)
        self.messages = [] if cfg.collect_messages else None
        self.T = cfg.episode_ttis

    # -- setup -------------------------------------------------------------

    def _assign_images(self):
        cfg, ds = self.cfg, self.dataset
        n = len(ds.images)
        rng = self.rngs["traffic"]
        if cfg.image_assignment == "roundrobin":
            ul_idx = [u % n for u in range(cfg.n_ues)]
            dl_idx = [u % n for u in range(cfg.n_ues)]
        else:
            ul_idx = [int(rng.integers(n)) for _ in range(cfg.n_ues)]
            dl_idx = [int(rng.integers(n)) for _ in range(cfg.n_ues)]
        return ul_idx, dl_idx

    def _init_ues(self):
        cfg = self.cfg
        rng = self.rngs["mobility"]
        shadow_rng = self.rngs["shadowing"]
        step = cfg.ue_speed_mps * 1e-3
        ues = []
        for _ in range(cfg.n_ues):
            x = rng.uniform() * cfg.area_m
            y = rng.uniform() * cfg.area_m
            heading = rng.uniform() * 2.0 * math.pi
            shadow = shadow_rng.normal() * cfg.shadowing_sigma_db
            ue = _Ue(x, y, heading, math.cos(heading) * step,
                     math.sin(heading) * step, 0.0, shadow, 0.0)
            ues.append(ue)
        return ues

    def _fade_trace(self) -> np.ndarray:
        """AR(1) fading in dB, shape (T, n_ues, 2), stationary sigma."""
        cfg = self.cfg
        rng = self.rngs["fading"]
        rho = cfg.fastfade_rho
        sigma = cfg.fastfade_sigma_db
        c = sigma * math.sqrt(max(0.0, 1.0 - rho * rho))
        z = rng.standard_normal((self.T, cfg.n_ues, 2))
        trace = np.empty_like(z)
        state = rng.standard_normal((cfg.n_ues, 2)) * sigma
        for t in range(self.T):
            state = rho * state + c * z[t]
            trace[t] = state
        return trace

    def _build_flows(self, intent_id: int):
        cfg = self.cfg
        ul_idx, dl_idx = self._assign_images()
        flows = {Direction.UL: [], Direction.DL: []}
        for ue in range(cfg.n_ues):
            for direction, idx, pkt_bytes, rate in (
                    (Direction.UL, ul_idx[ue], cfg.ul_pkt_bytes, cfg.ul_rate_bps),
                    (Direction.DL, dl_idx[ue], cfg.dl_pkt_bytes, cfg.dl_rate_bps)):
                image = self.dataset.images[idx]
                flow = transport.ImageFlow(ue, direction, image.path, image.data,
                                           image.labels)
                flow.relevant = intent_id in image.labels
                flow.packets = transport.packetize(image.data, image.chunks,
                                                   pkt_bytes, flow.flow_id)
                flows[direction].append(_Flow(flow, pkt_bytes, rate))
        return flows

    # -- per-TTI helpers -----------------------------------------------------

    def _sinr(self, ue_idx: int, direction: Direction, fade_db: float) -> float:
        ue = self.ues[ue_idx]
        if direction == Direction.UL:
            tx = self.tx_ul[ue_idx]
            noise = self.noise_const[Direction.UL]
        else:
            tx = self.cfg.enb_tx_pwr_dbm
            noise = self.noise_const[Direction.DL]
        return tx - (ue.pathloss + ue.shadow_db + fade_db) - noise

    def _step_mobility(self, t: int):
        cfg = self.cfg
        step = cfg.ue_speed_mps * 1e-3
        area = cfg.area_m
        rng = self.rngs["mobility"]
        shadow_rng = self.rngs["shadowing"]
        for ue in self.ues:
            x = ue.x + ue.dx
            y = ue.y + ue.dy
            if x < 0.0 or x > area:
                x = -x if x < 0.0 else 2.0 * area - x
                ue.heading = math.pi - ue.heading
                ue.dx = -ue.dx
            if y < 0.0 or y > area:
                y = -y if y < 0.0 else 2.0 * area - y
                ue.heading = -ue.heading
                ue.dy = -ue.dy
            ue.x, ue.y = x, y
            ue.walked += step
            if ue.walked >= cfg.heading_change_m:
                ue.heading = rng.uniform() * 2.0 * math.pi
                ue.dx = math.cos(ue.heading) * step
                ue.dy = math.sin(ue.heading) * step
                ue.walked = 0.0
                ue.shadow_db = shadow_rng.normal() * cfg.shadowing_sigma_db

    def _update_pathloss(self):
        cfg = self.cfg
        cx = cy = cfg.area_m / 2.0
        dz2 = (cfg.enb_height_m - cfg.ue_height_m) ** 2
        lo, hi = cfg.ue_tx_pwr_dbm_range
        p0 = cfg.p0_pusch_dbm
        ref, ten_exp = cfg.pathloss_ref_db, 10.0 * cfg.pathloss_exponent
        log10, sqrt = math.log10, math.sqrt
        for i, ue in enumerate(self.ues):
            d = sqrt((ue.x - cx) ** 2 + (ue.y - cy) ** 2 + dz2)
            pl = ref + ten_exp * log10(d if d > 1.0 else 1.0)
            ue.pathloss = pl
            self.loss_base[i] = pl + ue.shadow_db
            self.tx_ul[i] = min(hi, max(lo, p0 + pl))

    # -- scheduling interval ---------------------------------------------------

    def _boundary(self, t: int, fade_row: np.ndarray):
        cfg = self.cfg
        self._update_pathloss()
        # directives apply from the first boundary at or after their issue TTI
        while self.pending_directives and self.pending_directives[0][0] <= t:
            _, directive = self.pending_directives.pop(0)
            for ds in self.dirstates.values():
                ds.budget_fraction = directive.budget_fraction
                ds.skip_rntis = directive.skip_rntis
                ds.skip_subframes = directive.skip_subframes
            self.strategy_override = directive.strategy_override
        for direction in DIRECTIONS:
            self._schedule_interval(t, direction, fade_row)

    def _ue_states(self, t: int, direction: Direction, fade_row: np.ndarray):
        cfg = self.cfg
        didx = 0 if direction == Direction.UL else 1
        tx = self.tx_ul if direction == Direction.UL else cfg.enb_tx_pwr_dbm
        sinrs = tx - (self.loss_base + fade_row[:, didx]) - self.noise_const[direction]
        cqi_vec = self.mapper.cqi_vec(sinrs - cfg.cqi_backoff_db)
        states = []
        cqis = {}
        pool = self.state_pool[direction]
        hist = self.pf_hist[direction]
        bits1 = self.bits_one_prb
        for ue_idx, fl in enumerate(self.flows[direction]):
            buf = fl.buffer
            if buf.total_bytes <= 0:
                continue
            cqi = int(cqi_vec[ue_idx])
            if cqi < 1:
                continue
            cqis[ue_idx] = cqi
            st = pool[ue_idx]
            st.cqi = cqi
            st.buffer_bytes = buf.total_bytes
            st.max_criticality = buf.max_criticality()
            st.inst_rate_bps = bits1[cqi] * 1000.0
            st.hist_rate_bps = hist[ue_idx]
            states.append(st)
        return states, cqis

    def _schedule_interval(self, t: int, direction: Direction, fade_row):
        cfg = self.cfg
        ds = self.dirstates[direction]
        scheduled, deferred, reserved = harq_tick(ds.pending, ds.capacity)
        ds.pending = deferred
        ds.retx_now = scheduled
        ds.reserved = reserved
        ds.interval_start = t
        available = ds.capacity - reserved
        states, cqis = self._ue_states(t, direction, fade_row)
        if cqis:
            ds.last_cqi_mean = sum(cqis.values()) / len(cqis)
        if self.messages is not None:
            self._log(control.e3_indication(states, t, direction, available))
        b_max = int(available * ds.budget_fraction)
        strategy = self.strategy_override or cfg.strategy

        t0 = time.perf_counter_ns() if cfg.measure_decision_time else 0
        usable = [u for u in states if u.rnti not in ds.skip_rntis]
        if t % 10 in ds.skip_subframes:
            usable = []
        items = []
        rbg_size = cfg.rbg_size_prbs
        for u in usable:
            demand = scheduler.estimate_demand(u, direction, b_max, rbg_size,
                                               cfg.prb_hz) if b_max > 0 else 0
            if demand <= 0:
                continue
            v = 1.0 if strategy == "rr" else scheduler.utility(
                strategy, u, cfg.buffer_utility_ref_bytes)
            items.append(scheduler.SchedulingItem(u, v, demand))
        pool = scheduler.admit_candidates(items, cfg.intent_based, b_max)
        if strategy == "rr":
            selected, ds.rr_cursor = scheduler.round_robin_select(
                items, b_max, ds.rr_cursor, cfg.n_ues,
                intent_based=cfg.intent_based)
        else:
            selected, _, _ = scheduler.greedy_select(pool, b_max,
                                                     relevant_first=cfg.intent_based)
        alloc = scheduler.build_allocation(selected, direction, reserved,
                                           ds.capacity, b_max)
        if cfg.measure_decision_time:
            ds.decision_ns.append(time.perf_counter_ns() - t0)
        ds.candidate_sizes.append(len(pool))

        ds.grants = []
        for entry, item in zip(alloc.entries, selected):
            n_units = item.demand
            prbs = n_units if direction == Direction.UL else n_units * rbg_size
            tb_bytes = bits_per_alloc(item.ue.cqi, prbs, cfg.prb_hz) // 8
            ds.grants.append((item.rnti, n_units, item.ue.cqi, tb_bytes))
        granted_units = sum(g[1] for g in ds.grants)
        ds.win_alloc_units += granted_units
        ds.win_served_ues += len(ds.grants)
        if self.messages is not None:
            self._log(control.e3_control(alloc, t))

    # -- transmissions -----------------------------------------------------------

    def _transmit(self, t: int, direction: Direction, fade_row):
        cfg = self.cfg
        ds = self.dirstates[direction]
        didx = 0 if direction == Direction.UL else 1
        harq_rng = self.rngs["harq"]
        served_bits = self.served_bits_tti[direction]

        if ds.retx_now and t == ds.interval_start:
            for proc in ds.retx_now:
                proc.attempts += 1
                sinr = self._sinr(proc.ue_id, direction, float(fade_row[proc.ue_id, didx]))
                ok = self._draw_tb(sinr, proc.cqi, harq_rng)
                result = complete_attempt(proc, ok, cfg.harq_max_tx)
                fl = self.flows[direction][proc.ue_id]
                if result == HarqResult.DELIVERED:
                    transport.credit_delivery(proc.segments, t)
                    self._settle_flow(fl, proc.segments, t, direction)
                elif result == HarqResult.DROPPED:
                    transport.mark_lost(proc.segments)
                    self._settle_flow(fl, proc.segments, t, direction)
                else:
                    ds.pending.append(proc)
                served_bits[proc.ue_id] = served_bits.get(proc.ue_id, 0) + proc.tb_bytes * 8
            ds.retx_now = []

        # a grant is held only while the UE has data: usage counts occupied
        # units (transmissions plus retx reserves), not idle grant tails
        used_units = 0
        for ue_idx, n_units, cqi, tb_cap in ds.grants:
            fl = self.flows[direction][ue_idx]
            if fl.buffer.total_bytes <= 0:
                continue
            segments = fl.buffer.take(tb_cap)
            tb_bytes = sum(e - s for _, s, e in segments)
            if tb_bytes == 0:
                continue
            used_units += n_units
            sinr = self._sinr(ue_idx, direction, float(fade_row[ue_idx, didx]))
            ok = self._draw_tb(sinr, cqi, harq_rng)
            if ok:
                transport.credit_delivery(segments, t)
                self._settle_flow(fl, segments, t, direction)
            else:
                proc = HarqProcess(ue_idx, direction, tb_bytes, n_units, cqi,
                                   attempts=1, segments=segments)
                if complete_attempt(proc, False, cfg.harq_max_tx) == HarqResult.DROPPED:
                    transport.mark_lost(segments)
                    self._settle_flow(fl, segments, t, direction)
                else:
                    ds.pending.append(proc)
            served_bits[ue_idx] = served_bits.get(ue_idx, 0) + tb_bytes * 8
        used = used_units + (ds.reserved if t == ds.interval_start else 0)
        ds.usage_unit_ttis += used
        ds.win_used_unit_ttis += used

    def _draw_tb(self, sinr: float, cqi: int, rng) -> bool:
        x = (sinr - self.mapper.fail_mid[cqi - 1]) / self.cfg.bler_slope_db
        if x > 60.0:
            p_fail = 0.0
        elif x < -60.0:
            p_fail = 1.0
        else:
            p_fail = 1.0 / (1.0 + math.exp(x))
        return rng.uniform() >= p_fail

    def _settle_flow(self, fl: _Flow, segments, t: int, direction: Direction):
        """Update per-flow delivery/loss counters for packets that just
        reached a terminal state."""
        ds = self.dirstates[direction]
        seen = set()
        for pkt, _, _ in segments:
            if id(pkt) in seen:
                continue
            seen.add(id(pkt))
            if pkt.status == transport.PacketStatus.DELIVERED and pkt.delivered_tti == t:
                fl.delivered += 1
                fl.delivered_bytes += pkt.size
                latency = (t - pkt.created_tti) + self.cfg.backhaul_offset_ms
                fl.latencies.append(latency)
                ds.win_delivered_bits += pkt.size * 8
                ds.win_latencies.append(latency)
                ds.win_ue_bytes[fl.flow.ue_id] = \
                    ds.win_ue_bytes.get(fl.flow.ue_id, 0) + pkt.size
                ds.win_ue_delays.setdefault(fl.flow.ue_id, []).append(latency)
            elif pkt.status == transport.PacketStatus.LOST and not pkt.loss_counted:
                pkt.loss_counted = True
                fl.lost += 1

    # -- near-RT window ------------------------------------------------------------

    def _close_window(self, t_close: int):
        cfg = self.cfg
        util = {}
        for direction in DIRECTIONS:
            ds = self.dirstates[direction]
            window_ttis = min(10, t_close)
            util_pct = kpi.prb_usage(ds.win_used_unit_ttis, ds.capacity, window_ttis)
            util[direction] = util_pct
            if self.messages is not None:
                active = sum(1 for fl in self.flows[direction]
                             if fl.buffer.total_bytes > 0)
                buffer_total = sum(fl.buffer.total_bytes
                                   for fl in self.flows[direction])
                lat = ds.win_latencies
                kpm = control.KpmReportPayload(
                    active_ues=active,
                    resource_utilization_pct=util_pct,
                    throughput_bps=ds.win_delivered_bits * 100.0,
                    latency_ms=sum(lat) / len(lat) if lat else None,
                    buffer_level_bytes=buffer_total,
                    cqi_mean=ds.last_cqi_mean)
                self._log(control.e2_report_kpm(kpm, t_close, direction))
                per_ue = [control.DappUeSummary(
                    rnti=u,
                    avg_throughput_bps=ds.win_ue_bytes.get(u, 0) * 800.0,
                    avg_delay_ms=(sum(ds.win_ue_delays[u]) / len(ds.win_ue_delays[u])
                                  if u in ds.win_ue_delays else None),
                    bytes_served=ds.win_ue_bytes.get(u, 0))
                    for u in sorted(ds.win_ue_bytes)]
                dapp = control.DappReportPayload(
                    served_ues_total=ds.win_served_ues,
                    allocated_units_total=ds.win_alloc_units,
                    system_load_pct=util_pct,
                    per_ue=per_ue)
                self._log(control.e2_report_dapp(dapp, t_close, direction))
            ds.win_alloc_units = 0
            ds.win_served_ues = 0
            ds.win_delivered_bits = 0
            ds.win_latencies = []
            ds.win_ue_bytes = {}
            ds.win_ue_delays = {}
            ds.win_used_unit_ttis = 0
        directive = control.xapp_step(max(util.values()), cfg.xapp_policy)
        self.pending_directives.append((t_close, directive))
        if self.messages is not None:
            self._log(control.dapp_control_message(directive, t_close))

    def _log(self, msg: control.ControlMessage):
        self.messages.append(msg)

    # -- main loop --------------------------------------------------------------

    def run(self) -> EpisodeResult:
        cfg = self.cfg
        intent = control.producer_activate(self.dataset.vocab,
                                           self.rngs["intent"], 0, 0)
        self.flows = self._build_flows(intent.object_id)
        self.ues = self._init_ues()
        self.loss_base = np.zeros(cfg.n_ues)
        self.tx_ul = np.zeros(cfg.n_ues)
        self._update_pathloss()
        fade = self._fade_trace()
        self.ref_bw = {d: ref_share_prbs(cfg, d) * cfg.prb_hz for d in DIRECTIONS}
        self.noise_const = {
            Direction.UL: noise_dbm(self.ref_bw[Direction.UL], cfg.nf_enb_db,
                                    cfg.noise_dbm_hz),
            Direction.DL: noise_dbm(self.ref_bw[Direction.DL], cfg.nf_ue_db,
                                    cfg.noise_dbm_hz),
        }
        self.bits_one_prb = [0] + [bits_per_alloc(c, 1, cfg.prb_hz)
                                   for c in range(1, 16)]
        self.state_pool = {
            d: [scheduler.UeState(rnti=u, cqi=0, qci=cfg.qci, buffer_bytes=0,
                                  max_criticality=0.0,
                                  relevant=self.flows[d][u].flow.relevant,
                                  inst_rate_bps=0.0, hist_rate_bps=0.0)
                for u in range(cfg.n_ues)]
            for d in DIRECTIONS}
        self.dirstates = {
            Direction.UL: _DirState(Direction.UL, cfg.ul_prbs),
            Direction.DL: _DirState(Direction.DL, cfg.dl_rbgs),
        }
        self.pf_hist = {d: [cfg.pf_init_bps] * cfg.n_ues for d in DIRECTIONS}
        self.pending_directives = []
        self.strategy_override = None
        self.served_bits_tti = {d: {} for d in DIRECTIONS}
        pf_w = 1.0 / cfg.pf_ewma_ttis
        is_pf = cfg.strategy == "pf"

        for t in range(self.T):
            for direction in DIRECTIONS:
                for fl in self.flows[direction]:
                    arr = fl.arrivals
                    while fl.next_arrival < len(arr) and arr[fl.next_arrival] <= t:
                        pkt = fl.flow.packets[fl.next_arrival]
                        pkt.created_tti = t
                        fl.buffer.enqueue(pkt)
                        fl.sent += 1
                        fl.next_arrival += 1
            if t > 0:
                self._step_mobility(t)
            fade_row = fade[t]
            if t % cfg.delta_dapp == 0:
                self._boundary(t, fade_row)
            for direction in DIRECTIONS:
                self._transmit(t, direction, fade_row)
            if is_pf:
                for direction in DIRECTIONS:
                    served = self.served_bits_tti[direction]
                    hist = self.pf_hist[direction]
                    for ue_idx in range(cfg.n_ues):
                        bits = served.get(ue_idx, 0)
                        hist[ue_idx] = (1.0 - pf_w) * hist[ue_idx] + pf_w * bits * 1000.0
                        if hist[ue_idx] < 1e-9:
                            hist[ue_idx] = 1e-9
                    served.clear()
            else:
                for direction in DIRECTIONS:
                    self.served_bits_tti[direction].clear()
            if (t + 1) % cfg.near_rt_period_ttis == 0:
                self._close_window(t + 1)

        return self._finalize(intent)

    # -- evaluation -------------------------------------------------------------

    def _finalize(self, intent: control.Intent) -> EpisodeResult:
        cfg = self.cfg
        weights = fidelity.FidelityWeights(cfg.fidelity_alpha, cfg.fidelity_beta,
                                           cfg.fidelity_gamma)
        flow_summaries = []
        per_dir = {d: [] for d in DIRECTIONS}
        by_path = {im.path: im for im in self.dataset.images}
        for direction in DIRECTIONS:
            for fl in self.flows[direction]:
                image = by_path[fl.flow.path]
                native, source_entry = self.artifacts.get(image)
                full = all(fl.flow.received_mask())
                try:
                    if full and image.path in self.artifacts.identity:
                        f0, f1, f2, g_s, score = self.artifacts.identity[image.path]
                        report = fidelity.FidelityReport(
                            f0, f1, f2, g_s, score,
                            fidelity.iss(score, fl.flow.relevant, cfg.fidelity_min),
                            fl.flow.relevant, False)
                    else:
                        recon = native if full else transport.reconstruct(fl.flow)
                        report = fidelity.evaluate_images(
                            None, recon, self.provider, weights, fl.flow.relevant,
                            cfg.fidelity_min, cfg.semantic_threshold,
                            cfg.content_block_px, cfg.content_var_threshold,
                            cfg.content_var_ratio, source_entry=source_entry)
                        if full:
                            self.artifacts.identity[image.path] = (
                                report.f0, report.f1, report.f2, report.g_s,
                                report.fidelity)
                except ProviderError:
                    report = fidelity.FidelityReport(0, 0, 0, 0, 0, 0,
                                                     fl.flow.relevant, False,
                                                     valid=False)
                summary = FlowSummary(fl.flow.ue_id, direction.value,
                                      fl.flow.relevant, fl.sent, fl.delivered,
                                      fl.lost, fl.delivered_bytes, report)
                flow_summaries.append(summary)
                per_dir[direction].append((fl, summary))

        records = []
        for direction in DIRECTIONS:
            ds = self.dirstates[direction]
            pairs = per_dir[direction]
            sent = sum(fl.sent for fl, _ in pairs)
            delivered = sum(fl.delivered for fl, _ in pairs)
            delivered_bytes = sum(fl.delivered_bytes for fl, _ in pairs)
            reports = [s.report for _, s in pairs if s.report.valid]
            lat, jit = kpi.latency_and_jitter([fl.latencies for fl, _ in pairs])
            usage = kpi.prb_usage(ds.usage_unit_ttis, ds.capacity, self.T)
            dtime = (sum(ds.decision_ns) / len(ds.decision_ns) / 1000.0
                     if ds.decision_ns else None)
            csize = (sum(ds.candidate_sizes) / len(ds.candidate_sizes)
                     if ds.candidate_sizes else 0.0)
            records.append(kpi.KpiRecord(
                direction=direction.value, strategy=cfg.strategy,
                intent_based=cfg.intent_based, delta_dapp=cfg.delta_dapp,
                seed=self.seed,
                pdr=kpi.pdr(sent, delivered),
                throughput_bps=delivered_bytes * 8 / cfg.episode_s,
                latency_ms=lat, jitter_ms=jit, prb_usage_pct=usage,
                decision_time_us=dtime, candidate_set_mean=csize,
                iss_mean=_mean([r.iss for r in reports]),
                f0_mean=_mean([r.f0 for r in reports]),
                f1_mean=_mean([r.f1 for r in reports]),
                f2_mean=_mean([r.f2 for r in reports])))

        message_rows = []
        if self.messages is not None:
            message_rows = [(self.seed, cfg.delta_dapp, m.tti,
                             m.service_model.value, m.msg_type.value,
                             m.direction, m.field_count())
                            for m in self.messages]
        return EpisodeResult(self.seed, cfg.delta_dapp, cfg.strategy,
                             cfg.intent_based, intent.object_id, records,
                             flow_summaries, message_rows)


def _mean(values):
    return sum(values) / len(values) if values else 0.0


def run_episode(cfg: ScenarioConfig, seed: int, dataset=None, provider=None,
                artifacts=None) -> EpisodeResult:
    """Run one fully deterministic episode."""
    cfg.validate()
    if dataset is None:
        dataset = transport.load_dataset(cfg.dataset_dir)
    if provider is None:
        provider = SurrogateProvider()
    return _EpisodeRunner(cfg, seed, dataset, provider, artifacts).run()


@dataclass
class BatchResult:
    episodes: list
    records: list
    message_rows: list
    summary: dict


def run_batch(cfg: ScenarioConfig, seeds, delta_dapp_set, dataset=None,
              provider=None, workers: int = 1) -> BatchResult:
    """Cross product of seeds and delta values; aggregation in (seed, delta)
    sort order regardless of execution order."""
    seeds = list(seeds)
    deltas = list(delta_dapp_set)
    if not seeds:
        raise ValueError("empty seed list")
    if not deltas:
        raise ValueError("empty delta_dapp set")
    if dataset is None:
        dataset = transport.load_dataset(cfg.dataset_dir)
    if provider is None:
        provider = SurrogateProvider()
    jobs = sorted((seed, delta) for seed in seeds for delta in deltas)
    episodes = []
    if workers > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(_run_job, cfg, seed, delta, cfg.dataset_dir): (seed, delta)
                    for seed, delta in jobs}
            results = {}
            for fut in cf.as_completed(futs):
                seed, delta = futs[fut]
                try:
                    results[(seed, delta)] = fut.result()
                except Exception as exc:
                    raise EpisodeError(f"episode (seed={seed}, delta={delta}) failed: {exc}") from exc
        episodes = [results[j] for j in jobs]
    else:
        artifacts = _SourceArtifacts(provider, cfg.content_block_px)
        for seed, delta in jobs:
            run_cfg = replace(cfg, delta_dapp=delta, seed=seed)
            try:
                episodes.append(run_episode(run_cfg, seed, dataset, provider,
                                            artifacts))
            except Exception as exc:
                raise EpisodeError(
                    f"episode (seed={seed}, delta={delta}) failed: {exc}") from exc
    records = [r for ep in episodes for r in ep.records]
    message_rows = [row for ep in episodes for row in ep.message_rows]
    return BatchResult(episodes, records, message_rows, kpi.summarize(records))


def _run_job(cfg, seed, delta, dataset_dir):
    run_cfg = replace(cfg, delta_dapp=delta, seed=seed, dataset_dir=dataset_dir)
    return run_episode(run_cfg, seed)
