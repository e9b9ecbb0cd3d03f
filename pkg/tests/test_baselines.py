from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delayhet.core import RoundRecord
from delayhet.selection import (
    FixedSetSelector,
    FlanpSelector,
    FlanpState,
    SamplingSelector,
    SubmodularSelector,
    facility_location_greedy,
    select_divfl,
    select_flanp,
    select_power_of_choice,
    select_random,
)

from .conftest import random_instance


def test_random_full_participation():
    d = select_random(5, 5, np.random.default_rng(0))
    assert d.distinct == [0, 1, 2, 3, 4]
    assert all(c == pytest.approx(0.2) for c in d.coefficients.values())


@given(st.integers(1, 30), st.data())
def test_random_distinct_and_in_range(m, data):
    K = data.draw(st.integers(1, m))
    d = select_random(m, K, np.random.default_rng(data.draw(st.integers(0, 2**32 - 1))))
    assert len(set(d.clients)) == K and all(0 <= i < m for i in d.clients)
    assert sum(d.coefficients.values()) == pytest.approx(1.0, abs=1e-12)


def test_random_deterministic_under_seed():
    a = select_random(20, 4, np.random.default_rng(5))
    b = select_random(20, 4, np.random.default_rng(5))
    assert a.clients == b.clients


@pytest.mark.parametrize("K, m", [(0, 3), (4, 3)])
def test_k_outside_range_rejected(K, m):
    with pytest.raises(ValueError):
        select_random(m, K, np.random.default_rng(0))
    with pytest.raises(ValueError):
        select_power_of_choice(np.ones(m), K, np.random.default_rng(0))
    with pytest.raises(ValueError):
        facility_location_greedy(np.zeros((m, m)), K)


def test_power_of_choice_full_candidates_picks_largest_loss():
    losses = np.array([0.3, 2.0, 0.1, 1.5])
    d = select_power_of_choice(losses, 1, np.random.default_rng(0), candidates=4)
    assert d.clients == (1,)
    d = select_power_of_choice(losses, 2, np.random.default_rng(0), candidates=4)
    assert d.distinct == [1, 3]


def test_power_of_choice_candidate_bounds():
    with pytest.raises(ValueError):
        select_power_of_choice(np.ones(4), 2, np.random.default_rng(0), candidates=1)
    with pytest.raises(ValueError):
        select_power_of_choice(np.ones(4), 2, np.random.default_rng(0), candidates=5)


def test_facility_location_two_clusters():
    pts = np.array([0.0, 0.1, 0.2, 10.0, 10.1])
    D = np.abs(pts[:, None] - pts[None, :])
    # the global medoid 0.2 comes first (cost 20.0 vs 20.1 for 0.1), then the 10.0/10.1 tie keeps the lower id
    assert facility_location_greedy(D, 2) == [2, 3]


def test_divfl_weights_follow_proxy_counts():
    G = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [10.0, 0.0], [10.1, 0.0]])
    d = select_divfl(G, 2)
    assert d.distinct == [2, 3]
    assert d.coefficients[2] == pytest.approx(3 / 5)
    assert d.coefficients[3] == pytest.approx(2 / 5)


def test_flanp_starts_with_fastest_pair_and_doubles():
    state = FlanpState(active=2, patience=2, threshold=0.01)
    assert select_flanp(state, 10).distinct == [0, 1]
    for loss in (1.0, 0.5, 0.499, 0.498):
        state.observe(loss, 10)
    assert state.active == 4
    for loss in (0.497, 0.496):
        state.observe(loss, 10)
    assert state.active == 8
    for loss in (0.495, 0.494, 0.493, 0.492):
        state.observe(loss, 10)
    assert state.active == 10
    assert select_flanp(state, 10).distinct == list(range(10))


def test_flanp_selector_grows_through_observe():
    sel = FlanpSelector(initial=1, patience=1)
    view = SimpleNamespace(m=3)
    assert sel.select(view, np.random.default_rng(0)).distinct == [0]
    sel.observe(RoundRecord(1, 1.0, 1.0, 1.0, 1.0))
    sel.observe(RoundRecord(2, 1.0, 2.0, 1.0, 1.0))
    assert sel.select(view, np.random.default_rng(0)).distinct == [0, 1]


def test_fixed_set_selector_uses_proxy_weights():
    B = np.array([[0, 1, 5], [1, 0, 5], [5, 5, 0.0]])
    d = FixedSetSelector([0, 2], B).select(None, np.random.default_rng(0))
    assert d.coefficients == pytest.approx({0: 2 / 3, 2: 1 / 3})


def test_submodular_selector_caches_until_inputs_change(rng):
    tau, B = random_instance(rng, 6)
    view = SimpleNamespace(m=6, tau=tau, B=B)
    sel = SubmodularSelector()
    first = sel.select(view, rng)
    assert sel.select(view, rng) is first
    view.B = B * 0.5
    assert sel.select(view, rng) is not first


def test_sampling_selector_rejects_large_k(rng):
    tau, B = random_instance(rng, 3, "sampling")
    with pytest.raises(ValueError, match="exceeds"):
        SamplingSelector(K=4).select(SimpleNamespace(m=3, tau=tau, B=B), rng)


def test_sampling_selector_draws_k(rng):
    tau, B = random_instance(rng, 5, "sampling")
    d = SamplingSelector(K=3).select(SimpleNamespace(m=5, tau=tau, B=B), rng)
    assert len(d.clients) == 3
    assert sum(d.coefficients.values()) == pytest.approx(1.0, abs=1e-12)
