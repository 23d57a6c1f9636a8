"""Route selection, dwell-time hysteresis, and failover."""

import pytest

from gamesync.overlay import (LinkKind, LinkSpec, NoAvailableLink,
                              RouteDecision, default_route, on_link_change,
                              select_route)


def relay(link_id=0, delay=250, available=True):
    return LinkSpec(link_id, (0, 1), delay, kind=LinkKind.RELAY,
                    available=available)


def direct(link_id=1, delay=40, available=True):
    return LinkSpec(link_id, (0, 1), delay, kind=LinkKind.DIRECT,
                    available=available)


def test_single_relay_only_option():
    links = [relay()]
    decision = RouteDecision(default_route(links, {}))
    out = select_route(1, links, {0: 250.0}, False, decision, 1000)
    assert out.chosen_link == 0


def test_critical_proximity_picks_fast_direct():
    links = [relay(), direct()]
    decision = RouteDecision(0, last_switch_at=0)
    out = select_route(1, links, {0: 250.0, 1: 40.0}, True, decision, 1000)
    assert out.chosen_link == 1
    assert out.last_switch_at == 1000


def test_without_proximity_relay_is_default():
    links = [relay(), direct()]
    decision = RouteDecision(0, last_switch_at=0)
    out = select_route(1, links, {0: 250.0, 1: 40.0}, False, decision, 1000)
    assert out.chosen_link == 0


def test_hysteresis_trace_per_ms():
    """Direct chosen at t=1000; proximity ends at t=1200; the switch back
    waits for the 500 ms dwell: still direct through 1499, relay at 1500."""
    links = [relay(), direct()]
    decision = RouteDecision(0, last_switch_at=0, hysteresis_ms=500)
    decision = select_route(1, links, {0: 250.0, 1: 40.0}, True, decision, 1000)
    assert decision.chosen_link == 1 and decision.last_switch_at == 1000
    for t in range(1001, 1500):
        decision = select_route(1, links, {0: 250.0, 1: 40.0}, t < 1200,
                                decision, t)
        assert decision.chosen_link == 1, f"flapped early at {t}"
    decision = select_route(1, links, {0: 250.0, 1: 40.0}, False, decision, 1500)
    assert decision.chosen_link == 0
    assert decision.last_switch_at == 1500


def test_no_available_link_raises():
    links = [relay(available=False)]
    with pytest.raises(NoAvailableLink):
        select_route(1, links, {}, False, RouteDecision(0), 0)


def test_failover_same_tick_ignores_hysteresis():
    links = {0: relay(), 1: direct()}
    peer_links = list(links.values())
    decision = RouteDecision(1, last_switch_at=999, hysteresis_ms=500)
    out = on_link_change(links, 1, False, peer_links, decision, 1000,
                         {0: 250.0, 1: 40.0})
    assert out.chosen_link == 0
    assert out.last_switch_at == 1000


def test_unrelated_link_change_keeps_decision():
    links = {0: relay(), 1: direct()}
    decision = RouteDecision(0, last_switch_at=0)
    out = on_link_change(links, 1, False, list(links.values()), decision, 50,
                         {0: 250.0})
    assert out is decision


def test_all_links_down_raises():
    links = {0: relay(), 1: direct()}
    decision = RouteDecision(0)
    out = on_link_change(links, 1, False, list(links.values()), decision, 10, {})
    assert out.chosen_link == 0
    with pytest.raises(NoAvailableLink):
        on_link_change(links, 0, False, list(links.values()), out, 20, {})


def test_deterministic_tie_break_by_link_id():
    links = [direct(3, 40), direct(2, 40), relay(0, 250)]
    decision = RouteDecision(0, last_switch_at=0)
    out = select_route(1, links, {0: 250.0, 2: 40.0, 3: 40.0}, True, decision, 5000)
    assert out.chosen_link == 2


def test_unknown_estimates_sort_last():
    links = [relay(0, 250), direct(1, 40)]
    decision = RouteDecision(0, last_switch_at=0)
    # direct has no estimate yet: keep the measured relay
    out = select_route(1, links, {0: 250.0}, True, decision, 5000)
    assert out.chosen_link == 0


def test_chosen_link_always_available():
    links = [relay(0, 250, available=False), direct(1, 40)]
    decision = RouteDecision(1, last_switch_at=0)
    for t in range(0, 3000, 50):
        decision = select_route(1, links, {1: 40.0}, False, decision, t)
        assert next(l for l in links
                    if l.link_id == decision.chosen_link).available
