import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentsim import scheduler
from intentsim.radio import Direction
from intentsim.scheduler import (AllocationError, SchedulingItem, UeState,
                                 admit_candidates, build_allocation,
                                 estimate_demand, greedy_select,
                                 round_robin_select, utility)


def ue(rnti=0, cqi=10, buf=1400, crit=0.5, relevant=False, inst=1000.0,
       hist=1000.0):
    return UeState(rnti, cqi, 9, buf, crit, relevant, inst, hist)


def item(rnti, v, b, relevant=False):
    return SchedulingItem(ue(rnti=rnti, relevant=relevant), v, b)


def knapsack_optimum(items, b_max):
    """Exhaustive 2^n oracle (vectorized enumeration)."""
    n = len(items)
    v = np.array([it.utility for it in items])
    b = np.array([it.demand for it in items])
    masks = np.arange(2 ** n)
    bits = (masks[:, None] >> np.arange(n)) & 1
    total_b = bits @ b
    total_v = bits @ v
    total_v[total_b > b_max] = -1.0
    return float(total_v.max())


class TestDemand:
    def test_ul_cqi15(self):
        # 1400 B = 11200 bits over 999 bits/PRB -> 12 PRBs
        assert estimate_demand(ue(cqi=15, buf=1400), Direction.UL, 100) == 12

    def test_dl_cqi15(self):
        # 3996 bits per 4-PRB RBG -> 3 RBGs
        assert estimate_demand(ue(cqi=15, buf=1400), Direction.DL, 25) == 3

    def test_clamped_partial_drain(self):
        big = ue(cqi=1, buf=10**6)
        assert estimate_demand(big, Direction.UL, 100) == 100

    def test_rejects_cqi0(self):
        with pytest.raises(ValueError):
            estimate_demand(ue(cqi=0), Direction.UL, 100)


class TestUtility:
    def test_cqi_anchor(self):
        assert utility("cqi", ue(cqi=15)) == 1.0
        assert utility("cqi", ue(cqi=3)) == pytest.approx(0.2)

    def test_buffer_saturates(self):
        assert utility("buffer", ue(buf=25_000)) == pytest.approx(0.5)
        assert utility("buffer", ue(buf=10**6)) == 1.0

    def test_criticality_passthrough(self):
        assert utility("criticality", ue(crit=0.8)) == 0.8

    def test_pf_fixed_point(self):
        assert utility("pf", ue(inst=5000.0, hist=5000.0)) == 1.0


class TestAdmission:
    def test_agnostic_passthrough(self):
        items = [item(0, 1, 2), item(1, 2, 3)]
        assert admit_candidates(items, False, 10) == items

    def test_relevant_saturation_blocks_irrelevant(self):
        items = [item(0, 1, 10, relevant=True), item(1, 9, 1)]
        pool = admit_candidates(items, True, 10)
        assert [it.rnti for it in pool] == [0]

    def test_admission_trace(self):
        # relevant b=4; irrelevant (rho 2, b 4) and (rho 1, b 4); B=10:
        # cum 4 < 10 admits first, cum 8 < 10 admits second -> pool of 3
        items = [item(0, 1.0, 4, relevant=True),
                 item(1, 8.0, 4), item(2, 4.0, 4)]
        pool = admit_candidates(items, True, 10)
        assert [it.rnti for it in pool] == [0, 1, 2]

    def test_admission_stops_at_capacity(self):
        items = [item(0, 1.0, 6, relevant=True),
                 item(1, 8.0, 4), item(2, 4.0, 4)]
        pool = admit_candidates(items, True, 10)
        # cum 6 admits first irrelevant (cum 10), second sees cum >= B
        assert [it.rnti for it in pool] == [0, 1]


class TestGreedy:
    def test_beats_or_equals_oracle_example(self):
        items = [item(0, 10, 5), item(1, 9, 3), item(2, 6, 6)]
        selected, total_v, total_b = greedy_select(items, 10)
        assert {it.rnti for it in selected} == {0, 1}
        assert total_v == 19 == knapsack_optimum(items, 10)

    def test_documented_suboptimal_instance(self):
        # A:(7,5) C:(12,10) B:(4,5), B=10 -> greedy 11, optimum 12
        items = [item(0, 7, 5), item(2, 12, 10), item(1, 4, 5)]
        selected, total_v, _ = greedy_select(items, 10)
        assert {it.rnti for it in selected} == {0, 1}
        assert total_v == 11
        assert knapsack_optimum(items, 10) == 12

    def test_scan_continues_past_non_fitting(self):
        items = [item(0, 10, 8), item(1, 5, 7), item(2, 1, 2)]
        selected, _, total_b = greedy_select(items, 10)
        assert {it.rnti for it in selected} == {0, 2}
        assert total_b == 10

    @given(st.lists(st.tuples(st.integers(1, 100), st.integers(1, 12)),
                    min_size=1, max_size=10),
           st.integers(0, 30))
    def test_budget_safety(self, raw, b_max):
        items = [item(i, v, b) for i, (v, b) in enumerate(raw)]
        _, _, total_b = greedy_select(items, b_max)
        assert total_b <= b_max

    @given(st.lists(st.integers(1, 50), min_size=1, max_size=10),
           st.integers(1, 8), st.integers(0, 40))
    def test_equal_demand_optimality(self, values, b, b_max):
        items = [item(i, v, b) for i, v in enumerate(values)]
        _, total_v, _ = greedy_select(items, b_max)
        assert total_v == pytest.approx(knapsack_optimum(items, b_max))

    @given(st.lists(st.tuples(st.integers(1, 40), st.integers(1, 9)),
                    min_size=1, max_size=10),
           st.integers(1, 25), st.floats(0.1, 50))
    def test_argmax_invariance_under_scaling(self, raw, b_max, scale):
        items = [item(i, v, b) for i, (v, b) in enumerate(raw)]
        scaled = [item(i, v * scale, b) for i, (v, b) in enumerate(raw)]
        sel_a, _, _ = greedy_select(items, b_max)
        sel_b, _, _ = greedy_select(scaled, b_max)
        assert [it.rnti for it in sel_a] == [it.rnti for it in sel_b]

    @given(st.lists(st.tuples(st.integers(1, 40), st.integers(1, 9)),
                    min_size=1, max_size=12),
           st.integers(1, 25))
    @settings(max_examples=200)
    def test_density_greedy_lower_bound(self, raw, b_max):
        # classic guarantee: greedy >= optimum - max item value
        items = [item(i, v, b) for i, (v, b) in enumerate(raw)]
        _, total_v, _ = greedy_select(items, b_max)
        opt = knapsack_optimum(items, b_max)
        assert total_v >= opt - max(v for v, _ in raw) - 1e-9

    @given(st.lists(st.tuples(st.integers(1, 40), st.integers(1, 9),
                              st.booleans()),
                    min_size=1, max_size=10),
           st.integers(1, 25))
    def test_relevance_dominance_ib(self, raw, b_max):
        items = [item(i, v, b, relevant=r) for i, (v, b, r) in enumerate(raw)]
        pool = admit_candidates(items, True, b_max)
        selected, _, _ = greedy_select(pool, b_max, relevant_first=True)
        chosen = {it.rnti for it in selected}
        rel_budget = b_max - sum(it.demand for it in selected if it.relevant)
        for it in pool:
            if it.relevant and it.rnti not in chosen:
                # an unselected relevant UE must not fit even if every
                # irrelevant grant were revoked
                assert it.demand > rel_budget


class TestRoundRobin:
    def test_hand_trace(self):
        items = [item(i, 1, 4) for i in range(3)]
        selected, cursor = round_robin_select(items, 10, 0, 3)
        assert [it.rnti for it in selected] == [0, 1]
        assert cursor == 2

    def test_zero_budget(self):
        items = [item(0, 1, 4)]
        selected, cursor = round_robin_select(items, 0, 0, 3)
        assert selected == [] and cursor == 0

    def test_single_ue_stable_cycle(self):
        items = [item(0, 1, 4)]
        cursor = 0
        for _ in range(5):
            selected, cursor = round_robin_select(items, 10, cursor, 1)
            assert [it.rnti for it in selected] == [0]
            assert cursor == 0

    def test_cursor_rotation(self):
        items = [item(i, 1, 4) for i in range(3)]
        selected, cursor = round_robin_select(items, 10, 2, 3)
        assert [it.rnti for it in selected] == [2, 0]
        assert cursor == 1

    def test_intent_based_pool_order(self):
        items = [item(0, 1, 4), item(1, 1, 4, relevant=True), item(2, 1, 4)]
        selected, _ = round_robin_select(items, 8, 0, 3, intent_based=True)
        assert selected[0].rnti == 1  # relevant served first


class TestAllocation:
    def test_ul_packing(self):
        sel = [item(0, 1, 3), item(1, 1, 5)]
        alloc = build_allocation(sel, Direction.UL, 0, 10, 10)
        assert [(e.rnti, e.units) for e in alloc.entries] == [(0, (0, 3)),
                                                              (1, (3, 5))]

    def test_dl_skips_reserved(self):
        sel = [item(0, 1, 2)]
        alloc = build_allocation(sel, Direction.DL, 1, 25, 24)
        assert alloc.entries[0].units == (1, 2)

    def test_empty_selection(self):
        alloc = build_allocation([], Direction.UL, 0, 100, 100)
        assert alloc.entries == []

    def test_overflow_is_error(self):
        with pytest.raises(AllocationError):
            build_allocation([item(0, 1, 8)], Direction.UL, 95, 100, 5)

    @given(st.lists(st.tuples(st.integers(1, 30), st.integers(1, 6)),
                    min_size=1, max_size=10),
           st.integers(0, 10))
    def test_ul_contiguous_disjoint(self, raw, reserved):
        items = [item(i, v, b) for i, (v, b) in enumerate(raw)]
        capacity = 60
        selected, _, total_b = greedy_select(items, capacity - reserved)
        alloc = build_allocation(selected, Direction.UL, reserved,
                                 capacity, capacity - reserved)
        spans = sorted(e.units for e in alloc.entries)
        cursor = reserved
        for start, count in spans:
            assert start >= cursor
            cursor = start + count
        assert cursor <= capacity