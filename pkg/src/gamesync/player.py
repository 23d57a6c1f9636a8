"""Per-client composite wiring every manager into the reception and
transmission pipelines.

Reception runs decode -> delay estimation -> playout buffering -> critical
area tracking -> rollback ordering -> prediction/convergence -> game
callbacks. One detail is deliberately out of nominal order: the consistency
mode that scales a message's playout lag is computed just before the enqueue
(the buffered deadline must reflect it), while the critical-area bookkeeping
stage itself runs after, where the stage instrumentation reports it.

Transmission runs per tick: dead-reckoning gate -> timestamping -> critical
flag -> route selection -> encode -> network. Each player manager is
single-threaded; distinct managers share nothing and talk only through the
network layer.
"""

import time
from collections import deque
from dataclasses import dataclass, field, replace

from gamesync import rollback as rb
from gamesync.clock import (DelaySample, LatencyEstimator, VirtualClock,
                            delay_from_timestamp, rtt_probe)
from gamesync.deadreckoning import (DeadReckoningPolicy, EntityKinematics,
                                    converge, predict, should_send)
from gamesync.locallag import DEFAULT_CLASS, LagPolicy, PlayoutBuffer
from gamesync.overlay import (LinkKind, LinkSpec, NoAvailableLink,
                              PeerCapabilities, RouteDecision, default_route,
                              select_route)
from gamesync.pdu import (DecodeError, EventMessage, PingMessage, PongMessage,
                          StateUpdate, decode, encode)
from gamesync.regions import ConsistencyMode, ModeTracker, RegionSet

NORMAL = ConsistencyMode.NORMAL
STRONG = ConsistencyMode.STRONG

PIPELINE_STAGES = ("decode", "comm", "local_lag", "critical_area",
                   "rollback", "sync", "game")


class ConfigInvalid(Exception):
    pass


class GameCallbacks:
    """Game-facing contract. Override what the game needs; the undo hook
    receives every message a rollback directive reverts (the game keeps its
    own inverse records)."""

    def apply_remote_state(self, entity_id: int, kin: EntityKinematics) -> None:
        pass

    def apply_event(self, msg: EventMessage) -> None:
        pass

    def undo_event(self, msg) -> None:
        pass

    def query_local_state(self, entity_id: int) -> EntityKinematics:
        raise NotImplementedError

    def notify_mode(self, entity_id: int, mode: ConsistencyMode) -> None:
        pass


@dataclass
class PlayerManagerConfig:
    client_id: int
    dr_policy: DeadReckoningPolicy = field(default_factory=DeadReckoningPolicy)
    lag_policy: LagPolicy = field(default_factory=LagPolicy)
    regions: RegionSet = field(default_factory=RegionSet)
    links: list = field(default_factory=list)
    tick_ms: int = 50
    heartbeat_ms: int = 1000
    local_entities: tuple = ()
    entity_class: dict = field(default_factory=dict)
    class_dr_policies: dict = field(default_factory=dict)
    entity_owner: dict = field(default_factory=dict)
    strong_threshold_scale: float = 0.25
    exit_hysteresis_ms: int = 250
    route_hysteresis_ms: int = 500
    overlay_enabled: bool = False
    rollback_scope: str = "all"          # "all" | "events"
    sender_side_lag: bool = True
    receiver_side_lag: bool = True
    critical_tightening: bool = True
    idle_ping_ms: int = 1000
    queue_limit_ms: int = 1000
    history_window_ms: int = 2000
    ewma_alpha: float = 0.125
    clock_offset_ms: int = 0
    critical_proximity_radius_m: float | None = None


@dataclass
class PmCounters:
    sends: int = 0
    sends_in_region: int = 0
    events_sent: int = 0
    data_received: int = 0
    decode_errors: int = 0
    late_messages: int = 0
    rollbacks: int = 0
    duplicates: int = 0
    beyond_window: int = 0
    clock_anomalies: int = 0
    queue_drops: int = 0
    callback_failures: int = 0


@dataclass
class _RemoteView:
    corrected: EntityKinematics
    epoch_start: int
    snapshot: tuple | None    # displayed pos when the epoch began; None snaps


class _DirectiveAdapter:
    """Routes rollback replays through the view bookkeeping before the game."""

    def __init__(self, pm: "PlayerManager", now: int):
        self._pm = pm
        self._now = now

    def undo_event(self, msg):
        self._pm.callbacks.undo_event(msg)

    def apply_event(self, msg):
        self._pm.callbacks.apply_event(msg)

    def apply_remote_state(self, entity_id, kin):
        self._pm._update_view(entity_id, kin, self._now)
        self._pm.callbacks.apply_remote_state(entity_id, kin)


class PlayerManager:
    def __init__(self, config: PlayerManagerConfig, callbacks: GameCallbacks,
                 send_fn):
        """send_fn(link_id, payload) hands a frame to the network layer."""
        self.config = config
        self.callbacks = callbacks
        self._send_fn = send_fn
        self.clock = VirtualClock(config.clock_offset_ms)
        self.estimator = LatencyEstimator(config.ewma_alpha)
        self.buffer = PlayoutBuffer(config.lag_policy)
        self.log = rb.DeliveryLog(config.history_window_ms)
        self.modes = ModeTracker(config.regions, config.exit_hysteresis_ms)
        self.counters = PmCounters()
        self.processing_ns: list[int] = []
        self.switch_log: list[tuple] = []   # (now, peer, old, new, failover)

        self.links_by_id: dict[int, LinkSpec] = {}
        for spec in config.links:
            if config.client_id not in spec.endpoints:
                raise ConfigInvalid(
                    f"link {spec.link_id} does not touch client {config.client_id}")
            self.links_by_id[spec.link_id] = replace(spec)

        self.peers: list[int] = []
        self.peer_links: dict[int, list[LinkSpec]] = {}
        self.routes: dict[int, RouteDecision] = {}
        self._pending: dict[int, deque] = {}
        self._peer_critical: dict[int, bool] = {}
        self._views: dict[int, _RemoteView] = {}
        self._last_sent: dict[int, EntityKinematics] = {}
        self._seqs: dict[int, int] = {}
        self._entity_positions: dict[int, tuple] = {}
        self._entity_modes: dict[int, ConsistencyMode] = {}
        self._outstanding_pings: dict[int, tuple] = {}
        self._ping_counter = 0
        self._last_activity: dict[int, int] = {}
        self._last_ping: dict[int, int] = {}

        # observability hooks (wired by the scenario runner)
        self.on_delivery_metric = None    # fn(now, sender, entity, seq, delay, critical)
        self.estimate_trace: list | None = None
        self.record_stages = False
        self.stage_log: dict[tuple, list[str]] = {}

    # -- session ---------------------------------------------------------

    def start_session(self, peer_capabilities: list[PeerCapabilities],
                      now: int = 0) -> None:
        """Collect peer info, mark unreachable direct links, choose default
        routes, zero sequence counters, and fire the initial ping round."""
        if self.config.tick_ms <= 0:
            raise ConfigInvalid("tick_ms must be > 0")
        if self.config.heartbeat_ms <= 0:
            raise ConfigInvalid("heartbeat_ms must be > 0")
        now = self.clock.read(now)
        self.peers = sorted(c.peer_id for c in peer_capabilities)
        caps = {c.peer_id: c for c in peer_capabilities}
        self._seqs.clear()
        self.estimator.reset()
        for peer in self.peers:
            links = [l for l in self.links_by_id.values()
                     if l.connects(self.config.client_id, peer)]
            if not caps[peer].direct_address_known:
                for l in links:
                    if l.kind is LinkKind.DIRECT:
                        l.available = False
            links.sort(key=lambda l: l.link_id)
            self.peer_links[peer] = links
            self._pending[peer] = deque()
            if links:
                self.routes[peer] = RouteDecision(
                    default_route(links, {}), last_switch_at=now,
                    hysteresis_ms=self.config.route_hysteresis_ms)
            self._send_pings(peer, now)

    # -- reception pipeline ------------------------------------------------

    def on_network_message(self, data: bytes, now: int, link_id: int) -> None:
        t0 = time.perf_counter_ns()
        try:
            self._receive(data, now, link_id)
        finally:
            self.processing_ns.append(time.perf_counter_ns() - t0)

    def _receive(self, data: bytes, now: int, link_id: int) -> None:
        now = self.clock.read(now)
        try:
            msg = decode(data)
        except DecodeError:
            self.counters.decode_errors += 1
            return

        if isinstance(msg, PingMessage):
            pong = PongMessage(self.config.client_id, msg.nonce, now,
                               msg.timestamp)
            link = self.links_by_id.get(link_id)
            if link is not None and link.available:
                self._send_fn(link_id, encode(pong))
            return
        if isinstance(msg, PongMessage):
            entry = self._outstanding_pings.pop(msg.nonce, None)
            if entry is None:
                return
            ping, ping_link = entry
            delay = rtt_probe(ping, msg, now)
            self._observe(msg.sender_id, ping_link, delay, now)
            return

        # data message (state update or event)
        key = rb.stream_key(msg)
        self._stage(key, "decode")
        self.counters.data_received += 1
        res = delay_from_timestamp(msg.timestamp, now)
        if res.clock_anomaly:
            self.counters.clock_anomalies += 1
        self._observe(msg.sender_id, link_id, res.delay_ms, now)
        if isinstance(msg, StateUpdate):
            self._peer_critical[msg.sender_id] = msg.critical
        if self.on_delivery_metric is not None:
            critical = isinstance(msg, StateUpdate) and msg.critical
            self.on_delivery_metric(now, msg.sender_id, msg.entity_id,
                                    msg.seq, res.delay_ms, critical)
        self._stage(key, "comm")

        # Effective mode must be known before the enqueue computes the
        # playout deadline; the stage itself is reported in nominal order.
        mode = self._incoming_mode(msg, now)
        entry = None
        if self.config.receiver_side_lag:
            entry = self.buffer.enqueue(msg, self._class_of(msg.entity_id),
                                        mode, now)
        self._stage(key, "local_lag")

        if isinstance(msg, StateUpdate):
            self._entity_positions[msg.entity_id] = msg.pos
        self._refresh_entity_mode(msg, now)
        self._stage(key, "critical_area")

        if entry is None:
            self._playout(msg, now)
        elif entry.late:
            self.counters.late_messages += 1
            self._playout(msg, now)

    def _incoming_mode(self, msg, now: int) -> ConsistencyMode:
        if not self.config.critical_tightening:
            return NORMAL
        if isinstance(msg, StateUpdate):
            if msg.critical:
                return STRONG
            pos = msg.pos
        else:
            pos = self._entity_positions.get(msg.entity_id)
        if pos is None:
            return NORMAL
        return self.modes.mode_for(msg.entity_id, pos,
                                   self._entity_positions, now)

    def _refresh_entity_mode(self, msg, now: int) -> None:
        if not self.config.critical_tightening:
            return
        pos = self._entity_positions.get(msg.entity_id)
        if pos is None:
            return
        mode = self.modes.mode_for(msg.entity_id, pos,
                                   self._entity_positions, now)
        if isinstance(msg, StateUpdate) and msg.critical:
            mode = STRONG
        self._note_mode(msg.entity_id, mode)

    def _playout(self, msg, now: int) -> None:
        """Rollback ordering, then prediction, then the game."""
        key = rb.stream_key(msg)
        self._stage(key, "rollback")
        in_scope = (self.config.rollback_scope == "all"
                    or isinstance(msg, EventMessage))
        if in_scope:
            outcome = self.log.on_deliver(msg, now)
            if isinstance(outcome, rb.DropDuplicate):
                self.counters.duplicates += 1
                return
            if isinstance(outcome, rb.DropBeyondWindow):
                self.counters.beyond_window += 1
                return
            if isinstance(outcome, rb.RollbackDirective):
                self.counters.rollbacks += 1
                adapter = _DirectiveAdapter(self, now)
                try:
                    rb.apply_directive(adapter, outcome)
                except rb.CallbackFailure:
                    self.counters.callback_failures += 1
                    raise
                self.log.commit(outcome)
                self._stage(key, "sync")
                self._stage(key, "game")
                return
        self._apply_fresh(msg, now, key)

    def _apply_fresh(self, msg, now: int, key) -> None:
        if isinstance(msg, StateUpdate):
            kin = EntityKinematics(msg.pos, msg.vel, msg.timestamp)
            self._update_view(msg.entity_id, kin, now)
            self._stage(key, "sync")
            shown = self.displayed_position(msg.entity_id, now)
            self._stage(key, "game")
            self.callbacks.apply_remote_state(
                msg.entity_id, EntityKinematics(shown, msg.vel, now))
        else:
            self._stage(key, "sync")
            self._stage(key, "game")
            self.callbacks.apply_event(msg)

    def _update_view(self, entity_id: int, kin: EntityKinematics,
                     now: int) -> None:
        view = self._views.get(entity_id)
        if view is None:
            self._views[entity_id] = _RemoteView(kin, now, None)
            return
        if kin.at < view.corrected.at:
            return    # an older correction never regresses the view
        snapshot = self.displayed_position(entity_id, now)
        self._views[entity_id] = _RemoteView(kin, now, snapshot)

    def displayed_position(self, entity_id: int, now: int) -> tuple | None:
        """Current dead-reckoned/converging display position, or None if no
        update has been played out yet."""
        view = self._views.get(entity_id)
        if view is None:
            return None
        if now < view.corrected.at:
            return view.corrected.pos    # skewed clock: no backwards extrapolation
        if view.snapshot is None:
            return predict(view.corrected, now)
        policy = self._dr_policy(entity_id)
        return converge(view.snapshot, view.epoch_start, view.corrected,
                        policy, now)

    # -- transmission pipeline ---------------------------------------------

    def tick(self, now: int) -> None:
        """Release due playouts, evaluate the send gate per local entity,
        refresh idle pings, and flush any queued frames."""
        now = self.clock.read(now)
        for entry in self.buffer.release_due(now):
            self._playout(entry.msg, now)

        states = []
        for entity_id in self.config.local_entities:
            kin = self.callbacks.query_local_state(entity_id)
            self._entity_positions[entity_id] = kin.pos
            mode = NORMAL
            if self.config.critical_tightening:
                mode = self.modes.mode_for(entity_id, kin.pos,
                                           self._entity_positions, now)
            self._note_mode(entity_id, mode)
            states.append((entity_id, kin, mode))

        for entity_id, kin, mode in states:
            policy = self._dr_policy(entity_id)
            scale = self.config.strong_threshold_scale if mode is STRONG else 1.0
            if not should_send(kin, self._last_sent.get(entity_id), policy,
                               now, self.config.heartbeat_ms, scale):
                continue
            seq = self._seqs.get(entity_id, 0) + 1
            self._seqs[entity_id] = seq
            msg = StateUpdate(self.config.client_id, entity_id, seq, now,
                              kin.pos, kin.vel, mode is STRONG)
            data = encode(msg)
            self.counters.sends += 1
            if self.config.regions.any_contains(kin.pos, self._entity_positions):
                self.counters.sends_in_region += 1
            for peer in self.peers:
                self._transmit(peer, data, now)
            self._last_sent[entity_id] = EntityKinematics(kin.pos, kin.vel, now)

        for peer in self.peers:
            idle = now - self._last_activity.get(peer, 0)
            since_ping = now - self._last_ping.get(peer, -self.config.idle_ping_ms)
            if idle >= self.config.idle_ping_ms and since_ping >= self.config.idle_ping_ms:
                self._send_pings(peer, now)
            self._flush_pending(peer, now)

    def send_event(self, entity_id: int, kind, payload: bytes, now: int) -> EventMessage:
        """Send a game event to every peer; with sender-side lag the local
        playout is buffered to the same deadline remote playouts use."""
        now = self.clock.read(now)
        seq = self._seqs.get(entity_id, 0) + 1
        self._seqs[entity_id] = seq
        msg = EventMessage(self.config.client_id, entity_id, seq, now, kind,
                           payload)
        data = encode(msg)
        self.counters.events_sent += 1
        for peer in self.peers:
            self._transmit(peer, data, now)
        mode = self._entity_modes.get(entity_id, NORMAL)
        if self.config.sender_side_lag:
            entry = self.buffer.enqueue(msg, self._class_of(entity_id), mode, now)
            if entry.late:
                self._playout(msg, now)
        else:
            self._playout(msg, now)
        return msg

    def _transmit(self, peer: int, data: bytes, now: int) -> None:
        decision = self.routes.get(peer)
        if decision is None:
            return
        links = self.peer_links[peer]
        if self.config.overlay_enabled:
            try:
                new = select_route(peer, links, self._link_estimates(peer),
                                   self._critical_proximity(peer), decision,
                                   now)
            except NoAvailableLink:
                self._queue_frame(peer, data, now)
                return
            if new.chosen_link != decision.chosen_link:
                self.switch_log.append((now, peer, decision.chosen_link,
                                        new.chosen_link, False))
                self.routes[peer] = new
                decision = new
        chosen = self.links_by_id[decision.chosen_link]
        if not chosen.available:
            # failover: hysteresis only limits quality-driven switching
            decision = self._failover(peer, decision, now)
            if decision is None:
                self._queue_frame(peer, data, now)
                return
        self._flush_pending(peer, now)
        self._send_fn(decision.chosen_link, data)

    def on_link_change(self, link_id: int, available: bool, now: int) -> None:
        """Network-layer notification; fails over same-tick when the change
        downs a chosen link."""
        now = self.clock.read(now)
        link = self.links_by_id.get(link_id)
        if link is None:
            return
        link.available = available
        for peer in self.peers:
            links = self.peer_links[peer]
            if all(l.link_id != link_id for l in links):
                continue
            decision = self.routes.get(peer)
            if decision is None:
                continue
            if available:
                self._flush_pending(peer, now)
                continue
            if decision.chosen_link != link_id:
                continue
            self._failover(peer, decision, now)

    def _failover(self, peer: int, decision: RouteDecision,
                  now: int) -> RouteDecision | None:
        """Immediate reroute to the best available link, bypassing
        hysteresis. Returns None (route left as-is) when nothing is up."""
        alive = [l for l in self.peer_links[peer] if l.available]
        if not alive:
            return None
        estimates = self._link_estimates(peer)
        best = min(alive, key=lambda l: (
            estimates.get(l.link_id) if estimates.get(l.link_id) is not None
            else float("inf"), l.link_id))
        self.switch_log.append((now, peer, decision.chosen_link,
                                best.link_id, True))
        new = replace(decision, chosen_link=best.link_id, last_switch_at=now)
        self.routes[peer] = new
        return new

    def _queue_frame(self, peer: int, data: bytes, now: int) -> None:
        self._pending[peer].append((data, now))

    def _flush_pending(self, peer: int, now: int) -> None:
        pending = self._pending.get(peer)
        if not pending:
            return
        while pending and now - pending[0][1] > self.config.queue_limit_ms:
            pending.popleft()
            self.counters.queue_drops += 1
        if not pending:
            return
        decision = self.routes.get(peer)
        if decision is None:
            return
        link = self.links_by_id[decision.chosen_link]
        if not link.available:
            decision = self._failover(peer, decision, now)
            if decision is None:
                return
        while pending:
            data, _ = pending.popleft()
            self._send_fn(decision.chosen_link, data)

    # -- helpers -----------------------------------------------------------

    def _critical_proximity(self, peer: int) -> bool:
        if not self.config.critical_tightening:
            return False
        local_strong = any(self._entity_modes.get(e) is STRONG
                           for e in self.config.local_entities)
        if local_strong and self._peer_critical.get(peer, False):
            return True
        radius = self.config.critical_proximity_radius_m
        if radius is None:
            return False
        for mine in self.config.local_entities:
            my_pos = self._entity_positions.get(mine)
            if my_pos is None:
                continue
            for other, owner in self.config.entity_owner.items():
                if owner != peer:
                    continue
                pos = self._entity_positions.get(other)
                if pos is None:
                    continue
                dx = my_pos[0] - pos[0]
                dy = my_pos[1] - pos[1]
                if dx * dx + dy * dy <= radius * radius:
                    return True
        return False

    def _link_estimates(self, peer: int) -> dict:
        return {l.link_id: self.estimator.estimate((peer, l.link_id))
                for l in self.peer_links[peer]}

    def _observe(self, peer: int, link_id: int, delay: int, now: int) -> None:
        est = self.estimator.observe(DelaySample((peer, link_id), delay, now))
        self._last_activity[peer] = now
        if self.estimate_trace is not None:
            self.estimate_trace.append((now, peer, link_id, delay, est))

    def _send_pings(self, peer: int, now: int) -> None:
        for link in self.peer_links.get(peer, ()):
            if not link.available:
                continue
            self._ping_counter += 1
            nonce = (self.config.client_id << 32) | (self._ping_counter & 0xFFFFFFFF)
            ping = PingMessage(self.config.client_id, nonce, now)
            self._outstanding_pings[nonce] = (ping, link.link_id)
            self._send_fn(link.link_id, encode(ping))
        self._last_ping[peer] = now

    def _class_of(self, entity_id: int) -> str:
        return self.config.entity_class.get(entity_id, DEFAULT_CLASS)

    def _dr_policy(self, entity_id: int) -> DeadReckoningPolicy:
        return self.config.class_dr_policies.get(self._class_of(entity_id),
                                                 self.config.dr_policy)

    def _note_mode(self, entity_id: int, mode: ConsistencyMode) -> None:
        if self._entity_modes.get(entity_id) != mode:
            self._entity_modes[entity_id] = mode
            self.callbacks.notify_mode(entity_id, mode)

    def mode_of(self, entity_id: int) -> ConsistencyMode:
        return self._entity_modes.get(entity_id, NORMAL)

    def route_to(self, peer: int) -> int | None:
        decision = self.routes.get(peer)
        return None if decision is None else decision.chosen_link

    def _stage(self, key, stage: str) -> None:
        if self.record_stages:
            self.stage_log.setdefault(key, []).append(stage)
