"""UE selection and resource allocation for one scheduling interval.

The selection task is a 0/1 knapsack: maximize total utility subject to the
per-interval resource budget.  It is solved with a density greedy — items
sorted by utility per resource unit, scanned once, selecting whatever still
fits — which is O(n log n), suboptimal in general, and exactly optimal when
all demands are equal.  Under intent-based operation, relevant UEs are
admitted unconditionally and scanned first; irrelevant UEs are appended by
density while the cumulative demand stays below the budget.

Demand estimation is grant-based and buffer-aware: each candidate asks for
enough resource units to drain its whole buffer in one TTI at its reported
CQI, clamped to the budget (partial drain) so low-CQI UEs cannot starve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .radio import Direction, bits_per_alloc


@dataclass(slots=True)
class UeState:
    rnti: int
    cqi: int
    qci: int
    buffer_bytes: int
    max_criticality: float
    relevant: bool
    inst_rate_bps: float
    hist_rate_bps: float


@dataclass(slots=True)
class SchedulingItem:
    ue: UeState
    utility: float
    demand: int
    density: float = field(init=False)

    def __post_init__(self):
        self.density = self.utility / self.demand

    @property
    def rnti(self) -> int:
        return self.ue.rnti

    @property
    def relevant(self) -> bool:
        return self.ue.relevant


@dataclass
class AllocEntry:
    rnti: int
    units: tuple  # UL: (start, count) PRB span; DL: RBG index tuple
    mcs: int


@dataclass
class AllocationMap:
    direction: Direction
    entries: list = field(default_factory=list)
    b_max: int = 0
    reserved: int = 0

    def total_units(self) -> int:
        return sum(e.units[1] for e in self.entries) if self.direction == Direction.UL \
            else sum(len(e.units) for e in self.entries)


class AllocationError(RuntimeError):
    """Internal inconsistency: demand exceeded the remaining space."""


def estimate_demand(ue: UeState, direction: Direction, b_max: int,
                    rbg_size: int = 4, prb_hz: float = 180_000.0) -> int:
    """Units needed to drain the buffer in one TTI, clamped to the budget."""
    if ue.cqi < 1:
        raise ValueError("cqi 0 UEs are excluded before demand estimation")
    if ue.buffer_bytes <= 0:
        raise ValueError("demand is defined for non-empty buffers")
    bits = ue.buffer_bytes * 8
    if direction == Direction.UL:
        per_unit = bits_per_alloc(ue.cqi, 1, prb_hz)
    else:
        per_unit = bits_per_alloc(ue.cqi, rbg_size, prb_hz)
    return max(1, min(math.ceil(bits / per_unit), b_max))


def utility(strategy: str, ue: UeState, buffer_ref_bytes: int = 50_000) -> float:
    """Scheduling utility for the greedy strategies."""
    if strategy == "cqi":
        return ue.cqi / 15.0
    if strategy == "buffer":
        return min(ue.buffer_bytes / buffer_ref_bytes, 1.0)
    if strategy == "criticality":
        return ue.max_criticality
    if strategy == "pf":
        return ue.inst_rate_bps / ue.hist_rate_bps
    raise ValueError(f"unknown utility strategy {strategy!r}")


def admit_candidates(items: list, intent_based: bool, b_max: int) -> list:
    """Build the candidate pool for one interval.

    Intent-agnostic operation passes every item through.  Intent-based
    operation admits all relevant items (sorted by density), then appends
    irrelevant items in descending density while the cumulative demand is
    still below the budget.
    """
    if not intent_based:
        return list(items)
    relevant = sorted((it for it in items if it.relevant),
                      key=lambda it: (-it.density, -it.utility, it.rnti))
    irrelevant = sorted((it for it in items if not it.relevant),
                        key=lambda it: (-it.density, -it.utility, it.rnti))
    pool = list(relevant)
    cum = sum(it.demand for it in relevant)
    for it in irrelevant:
        if cum >= b_max:
            break
        pool.append(it)
        cum += it.demand
    return pool


def greedy_select(items: list, b_max: int, relevant_first: bool = False):
    """Density-greedy knapsack scan.

    Sort by density descending (ties: relevant first, higher utility, lower
    RNTI), walk the whole list once and select any item whose demand fits
    the remaining budget.  ``relevant_first`` promotes relevance to the
    primary key (intent-based mode).  Returns (selected, total_v, total_b).
    """
    if relevant_first:
        key = lambda it: (not it.relevant, -it.density, -it.utility, it.rnti)
    else:
        key = lambda it: (-it.density, not it.relevant, -it.utility, it.rnti)
    selected = []
    total_v = 0.0
    remaining = b_max
    for it in sorted(items, key=key):
        if it.demand <= remaining:
            selected.append(it)
            total_v += it.utility
            remaining -= it.demand
    return selected, total_v, b_max - remaining


def _rotate_at(items: list, cursor: int) -> list:
    by_rnti = sorted(items, key=lambda it: it.rnti)
    split = next((i for i, it in enumerate(by_rnti) if it.rnti >= cursor),
                 len(by_rnti))
    return by_rnti[split:] + by_rnti[:split]


def round_robin_select(items: list, b_max: int, cursor: int, n_ues: int,
                       intent_based: bool = False):
    """Cyclic baseline: serve UEs in RNTI order starting at the cursor,
    stopping at the first UE that no longer fits.

    The intent-based variant serves the admission pool instead, relevant
    block ahead of admitted irrelevant, the cursor rotating within each
    block so cyclic fairness survives the re-partitioning.  The cursor
    advances past the last served UE either way.  Returns
    (selected, new_cursor).
    """
    if not items:
        return [], cursor
    if intent_based:
        pool = admit_candidates(items, True, b_max)
        order = _rotate_at([it for it in pool if it.relevant], cursor) + \
            _rotate_at([it for it in pool if not it.relevant], cursor)
    else:
        order = _rotate_at(items, cursor)
    selected = []
    remaining = b_max
    for it in order:
        if it.demand > remaining:
            break
        selected.append(it)
        remaining -= it.demand
    if selected:
        cursor = (selected[-1].rnti + 1) % n_ues
    return selected, cursor


def build_allocation(selected: list, direction: Direction, reserved: int,
                     capacity: int, b_max: int) -> AllocationMap:
    """Translate a selection into concrete resource units.

    HARQ reservations occupy the lowest-indexed units; uplink grants are
    packed left to right as one contiguous span per UE, downlink grants take
    the lowest free RBG indices.
    """
    alloc = AllocationMap(direction, [], b_max, reserved)
    cursor = reserved
    for it in selected:
        if cursor + it.demand > capacity:
            raise AllocationError(
                f"demand {it.demand} exceeds remaining space at unit {cursor}")
        if direction == Direction.UL:
            units = (cursor, it.demand)
        else:
            units = tuple(range(cursor, cursor + it.demand))
        alloc.entries.append(AllocEntry(it.rnti, units, it.ue.cqi))
        cursor += it.demand
    return alloc
