"""Scenario definitions: a strict JSON schema describing clients, scripted
entity motion, links, regions, policies, and toggles.

Motion scripts are closed-form (position as a pure function of virtual
time), which is what gives the metrics an exact ground-truth oracle. Unknown
keys anywhere in the document are rejected.

Top-level document:

    {
      "duration_ms": 30000,
      "tick_ms": 50,                      # optional, default 50
      "seed": 42,                         # optional, default 1
      "clients": [
        {"id": 0,
         "direct_address_known": true,    # optional
         "has_gps_clock": true,           # optional
         "clock_offset_ms": 0,            # optional
         "entities": [
           {"id": 0, "class": "car",
            "motion": {"kind": "constant_velocity", "pos": [0,0], "vel": [10,0]}
                    | {"kind": "waypoints", "points": [[x,y],...],
                       "speed": 10.0, "loop": false},
            "events": [{"kind": "fire", "at": 1000}
                     | {"kind": "fire", "first": 1000, "every": 200, "count": 120}]
           }]}],
      "links": [
        {"id": 0, "endpoints": [0,1], "base_delay_ms": 250,
         "jitter_ms": 0, "jitter_dist": "uniform", "loss_prob": 0.0,
         "kind": "relay", "available": true}],
      "link_events": [
        {"at": 5000, "link": 0, "base_delay_ms": 300}
      | {"at": 8000, "link": 0, "available": false}],
      "regions": [
        {"kind": "rect", "min": [90,-10], "max": [100,10]}
      | {"kind": "circle", "center": [0,0], "radius": 5}
      | {"kind": "anchored_circle", "anchor_entity": 3, "radius": 5}],
      "policies": {
        "default": {"threshold_m": 0.5, "convergence_ms": 200, "lag_ms": 0},
        "classes": {"car": {"lag_ms": 500}},
        "critical_threshold_scale": 0.25,
        "critical_lag_scale": 0.5,
        "heartbeat_ms": 1000,
        "ewma_alpha": 0.125,
        "exit_hysteresis_ms": 250,
        "route_hysteresis_ms": 500,
        "idle_ping_ms": 1000,
        "critical_proximity_radius_m": null
      },
      "toggles": {
        "overlay": false,
        "rollback_scope": "all",          # "all" | "events"
        "sender_side_lag": true,
        "receiver_side_lag": true,
        "critical_tightening": true
      }
    }
"""

import json
import math
from dataclasses import dataclass, field

from gamesync.overlay import LinkKind, LinkSpec
from gamesync.pdu import EventKind
from gamesync.regions import AnchoredCircle, Circle, Rect, Region


class ParseError(Exception):
    """The file is not valid JSON; message carries line/column."""


class ValidationError(Exception):
    """The document violates the schema; message names the field."""


# -- motion scripts --------------------------------------------------------

class ConstantVelocity:
    def __init__(self, pos, vel):
        self.pos0 = (float(pos[0]), float(pos[1]))
        self.vel = (float(vel[0]), float(vel[1]))

    def position(self, t: int) -> tuple[float, float]:
        dt = t / 1000.0
        return (self.pos0[0] + self.vel[0] * dt,
                self.pos0[1] + self.vel[1] * dt)

    def velocity(self, t: int) -> tuple[float, float]:
        return self.vel


class WaypointPath:
    """Piecewise-linear path at constant speed; stops at the last point
    unless loop is set."""

    def __init__(self, points, speed: float, loop: bool = False):
        if len(points) < 2:
            raise ValidationError("motion.points needs at least 2 points")
        if speed <= 0:
            raise ValidationError("motion.speed must be > 0")
        self.points = [(float(x), float(y)) for x, y in points]
        self.speed = float(speed)
        self.loop = loop
        pts = list(self.points)
        if loop:
            pts.append(pts[0])
        self._segments = []
        self._cum = [0.0]
        for a, b in zip(pts, pts[1:]):
            length = math.hypot(b[0] - a[0], b[1] - a[1])
            if length == 0.0:
                raise ValidationError("motion.points contains a zero-length segment")
            self._segments.append((a, b, length))
            self._cum.append(self._cum[-1] + length)
        self.total = self._cum[-1]

    def _locate(self, t: int):
        s = self.speed * (t / 1000.0)
        if self.loop:
            s = math.fmod(s, self.total)
        elif s >= self.total:
            return None
        for i, (a, b, length) in enumerate(self._segments):
            # strict <: a sample exactly on a corner reports the outgoing leg
            if s < self._cum[i + 1] or i == len(self._segments) - 1:
                u = (s - self._cum[i]) / length
                return a, b, length, u
        return None

    def position(self, t: int) -> tuple[float, float]:
        loc = self._locate(t)
        if loc is None:
            return self.points[-1]
        a, b, _, u = loc
        return (a[0] + (b[0] - a[0]) * u, a[1] + (b[1] - a[1]) * u)

    def velocity(self, t: int) -> tuple[float, float]:
        loc = self._locate(t)
        if loc is None:
            return (0.0, 0.0)
        a, b, length, _ = loc
        scale = self.speed / length
        return ((b[0] - a[0]) * scale, (b[1] - a[1]) * scale)


MotionScript = ConstantVelocity | WaypointPath


# -- config dataclasses ----------------------------------------------------

@dataclass
class EntitySpec:
    entity_id: int
    class_id: str
    motion: MotionScript
    events: list = field(default_factory=list)   # [(at_ms, EventKind), ...]


@dataclass
class ClientSpec:
    client_id: int
    entities: list
    direct_address_known: bool = True
    has_gps_clock: bool = True
    clock_offset_ms: int = 0


@dataclass
class ClassPolicy:
    threshold_m: float = 0.5
    convergence_ms: int = 200
    lag_ms: int = 0


@dataclass
class PolicySet:
    default: ClassPolicy = field(default_factory=ClassPolicy)
    classes: dict = field(default_factory=dict)
    critical_threshold_scale: float = 0.25
    critical_lag_scale: float = 0.5
    heartbeat_ms: int = 1000
    ewma_alpha: float = 0.125
    exit_hysteresis_ms: int = 250
    route_hysteresis_ms: int = 500
    idle_ping_ms: int = 1000
    critical_proximity_radius_m: float | None = None

    def for_class(self, class_id: str) -> ClassPolicy:
        return self.classes.get(class_id, self.default)


@dataclass
class Toggles:
    overlay: bool = False
    rollback_scope: str = "all"
    sender_side_lag: bool = True
    receiver_side_lag: bool = True
    critical_tightening: bool = True


@dataclass
class ScenarioConfig:
    duration_ms: int
    tick_ms: int
    seed: int
    clients: list
    links: list
    link_events: list                       # [(at, link_id, field, value)]
    regions: list
    policies: PolicySet
    toggles: Toggles

    def entity_specs(self):
        for client in self.clients:
            for spec in client.entities:
                yield client, spec


# -- parsing ---------------------------------------------------------------

def _require_keys(obj: dict, path: str, required: set, optional: set) -> None:
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: expected an object")
    unknown = set(obj) - required - optional
    if unknown:
        raise ValidationError(f"{path}: unknown key(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ValidationError(f"{path}: missing key(s) {sorted(missing)}")


def _number(obj, path, minimum=None, integer=False):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ValidationError(f"{path}: expected a number")
    if integer and not isinstance(obj, int):
        raise ValidationError(f"{path}: expected an integer")
    if minimum is not None and obj < minimum:
        raise ValidationError(f"{path}: must be >= {minimum}")
    return obj


def _point(obj, path):
    if (not isinstance(obj, list) or len(obj) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in obj)):
        raise ValidationError(f"{path}: expected [x, y]")
    return (float(obj[0]), float(obj[1]))


def _bool(obj, path):
    if not isinstance(obj, bool):
        raise ValidationError(f"{path}: expected a boolean")
    return obj


def _parse_motion(obj, path) -> MotionScript:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError(f"{path}: expected a motion object with 'kind'")
    kind = obj["kind"]
    if kind == "constant_velocity":
        _require_keys(obj, path, {"kind", "pos", "vel"}, set())
        return ConstantVelocity(_point(obj["pos"], f"{path}.pos"),
                                _point(obj["vel"], f"{path}.vel"))
    if kind == "waypoints":
        _require_keys(obj, path, {"kind", "points", "speed"}, {"loop"})
        points = obj["points"]
        if not isinstance(points, list):
            raise ValidationError(f"{path}.points: expected a list")
        pts = [_point(p, f"{path}.points[{i}]") for i, p in enumerate(points)]
        return WaypointPath(pts, _number(obj["speed"], f"{path}.speed"),
                            _bool(obj.get("loop", False), f"{path}.loop"))
    raise ValidationError(f"{path}.kind: unknown motion kind {kind!r}")


_EVENT_KINDS = {"fire": EventKind.FIRE, "spawn": EventKind.SPAWN,
                "despawn": EventKind.DESPAWN}


def _parse_events(items, path):
    events = []
    for i, obj in enumerate(items):
        p = f"{path}[{i}]"
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ValidationError(f"{p}: expected an event object with 'kind'")
        kind = _EVENT_KINDS.get(obj["kind"])
        if kind is None:
            raise ValidationError(f"{p}.kind: unknown event kind {obj['kind']!r}")
        if "at" in obj:
            _require_keys(obj, p, {"kind", "at"}, set())
            events.append((_number(obj["at"], f"{p}.at", 0, True), kind))
        else:
            _require_keys(obj, p, {"kind", "first", "every", "count"}, set())
            first = _number(obj["first"], f"{p}.first", 0, True)
            every = _number(obj["every"], f"{p}.every", 1, True)
            count = _number(obj["count"], f"{p}.count", 1, True)
            events.extend((first + k * every, kind) for k in range(count))
    events.sort()
    return events


def _parse_region(obj, path) -> Region:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError(f"{path}: expected a region object with 'kind'")
    kind = obj["kind"]
    try:
        if kind == "rect":
            _require_keys(obj, path, {"kind", "min", "max"}, set())
            lo = _point(obj["min"], f"{path}.min")
            hi = _point(obj["max"], f"{path}.max")
            return Rect(lo[0], lo[1], hi[0], hi[1])
        if kind == "circle":
            _require_keys(obj, path, {"kind", "center", "radius"}, set())
            return Circle(_point(obj["center"], f"{path}.center"),
                          _number(obj["radius"], f"{path}.radius"))
        if kind == "anchored_circle":
            _require_keys(obj, path, {"kind", "anchor_entity", "radius"}, set())
            return AnchoredCircle(
                _number(obj["anchor_entity"], f"{path}.anchor_entity", 0, True),
                _number(obj["radius"], f"{path}.radius"))
    except ValidationError:
        raise
    except Exception as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    raise ValidationError(f"{path}.kind: unknown region kind {kind!r}")


def _parse_class_policy(obj, path, base: ClassPolicy) -> ClassPolicy:
    _require_keys(obj, path, set(), {"threshold_m", "convergence_ms", "lag_ms"})
    return ClassPolicy(
        threshold_m=_number(obj.get("threshold_m", base.threshold_m),
                            f"{path}.threshold_m", 1e-9),
        convergence_ms=_number(obj.get("convergence_ms", base.convergence_ms),
                               f"{path}.convergence_ms", 0, True),
        lag_ms=_number(obj.get("lag_ms", base.lag_ms), f"{path}.lag_ms", 0, True))


_LINK_KINDS = {"relay": LinkKind.RELAY, "direct": LinkKind.DIRECT}


def parse_scenario(doc: dict) -> ScenarioConfig:
    """Validate a decoded JSON document into a ScenarioConfig."""
    _require_keys(doc, "$", {"duration_ms", "clients"},
                  {"tick_ms", "seed", "links", "link_events", "regions",
                   "policies", "toggles"})
    duration = _number(doc["duration_ms"], "$.duration_ms", 1, True)
    tick = _number(doc.get("tick_ms", 50), "$.tick_ms", 1, True)
    seed = _number(doc.get("seed", 1), "$.seed", 0, True)

    clients = []
    client_ids = set()
    entity_ids = set()
    for i, obj in enumerate(doc["clients"]):
        path = f"$.clients[{i}]"
        _require_keys(obj, path, {"id", "entities"},
                      {"direct_address_known", "has_gps_clock", "clock_offset_ms"})
        cid = _number(obj["id"], f"{path}.id", 0, True)
        if cid in client_ids:
            raise ValidationError(f"{path}.id: duplicate client id {cid}")
        client_ids.add(cid)
        entities = []
        for j, ent in enumerate(obj["entities"]):
            epath = f"{path}.entities[{j}]"
            _require_keys(ent, epath, {"id", "motion"}, {"class", "events"})
            eid = _number(ent["id"], f"{epath}.id", 0, True)
            if eid in entity_ids:
                raise ValidationError(f"{epath}.id: duplicate entity id {eid}")
            entity_ids.add(eid)
            entities.append(EntitySpec(
                entity_id=eid,
                class_id=ent.get("class", "default"),
                motion=_parse_motion(ent["motion"], f"{epath}.motion"),
                events=_parse_events(ent.get("events", []), f"{epath}.events")))
        clients.append(ClientSpec(
            client_id=cid, entities=entities,
            direct_address_known=_bool(obj.get("direct_address_known", True),
                                       f"{path}.direct_address_known"),
            has_gps_clock=_bool(obj.get("has_gps_clock", True),
                                f"{path}.has_gps_clock"),
            clock_offset_ms=_number(obj.get("clock_offset_ms", 0),
                                    f"{path}.clock_offset_ms", None, True)))

    links = []
    link_ids = set()
    for i, obj in enumerate(doc.get("links", [])):
        path = f"$.links[{i}]"
        _require_keys(obj, path, {"id", "endpoints", "base_delay_ms"},
                      {"jitter_ms", "loss_prob", "kind", "available",
                       "jitter_dist"})
        jitter_dist = obj.get("jitter_dist", "uniform")
        if jitter_dist != "uniform":
            # keyword reserved for alternative delay distributions
            raise ValidationError(
                f"{path}.jitter_dist: unsupported distribution {jitter_dist!r}"
                " (available: 'uniform')")
        lid = _number(obj["id"], f"{path}.id", 0, True)
        if lid in link_ids:
            raise ValidationError(f"{path}.id: duplicate link id {lid}")
        link_ids.add(lid)
        endpoints = obj["endpoints"]
        if (not isinstance(endpoints, list) or len(endpoints) != 2
                or endpoints[0] == endpoints[1]):
            raise ValidationError(f"{path}.endpoints: expected two distinct client ids")
        for e in endpoints:
            if e not in client_ids:
                raise ValidationError(f"{path}.endpoints: unknown client {e}")
        kind = obj.get("kind", "relay")
        if kind not in _LINK_KINDS:
            raise ValidationError(f"{path}.kind: unknown link kind {kind!r}")
        try:
            links.append(LinkSpec(
                link_id=lid, endpoints=(endpoints[0], endpoints[1]),
                base_delay_ms=_number(obj["base_delay_ms"],
                                      f"{path}.base_delay_ms", 0, True),
                jitter_ms=_number(obj.get("jitter_ms", 0), f"{path}.jitter_ms", 0, True),
                loss_prob=_number(obj.get("loss_prob", 0.0), f"{path}.loss_prob", 0),
                kind=_LINK_KINDS[kind],
                available=_bool(obj.get("available", True), f"{path}.available")))
        except ValueError as exc:
            raise ValidationError(f"{path}: {exc}") from exc

    link_events = []
    for i, obj in enumerate(doc.get("link_events", [])):
        path = f"$.link_events[{i}]"
        _require_keys(obj, path, {"at", "link"}, {"base_delay_ms", "available"})
        at = _number(obj["at"], f"{path}.at", 0, True)
        lid = obj["link"]
        if lid not in link_ids:
            raise ValidationError(f"{path}.link: unknown link {lid}")
        if "base_delay_ms" in obj:
            link_events.append((at, lid, "base_delay_ms",
                                _number(obj["base_delay_ms"],
                                        f"{path}.base_delay_ms", 0, True)))
        if "available" in obj:
            link_events.append((at, lid, "available",
                                _bool(obj["available"], f"{path}.available")))
        if "base_delay_ms" not in obj and "available" not in obj:
            raise ValidationError(f"{path}: needs base_delay_ms or available")
    link_events.sort(key=lambda e: (e[0], e[1], e[2]))

    regions = [_parse_region(obj, f"$.regions[{i}]")
               for i, obj in enumerate(doc.get("regions", []))]
    for i, region in enumerate(regions):
        if isinstance(region, AnchoredCircle) and region.anchor_entity_id not in entity_ids:
            raise ValidationError(
                f"$.regions[{i}].anchor_entity: unknown entity {region.anchor_entity_id}")

    pol = doc.get("policies", {})
    _require_keys(pol, "$.policies", set(),
                  {"default", "classes", "critical_threshold_scale",
                   "critical_lag_scale", "heartbeat_ms", "ewma_alpha",
                   "exit_hysteresis_ms", "route_hysteresis_ms",
                   "idle_ping_ms", "critical_proximity_radius_m"})
    default = _parse_class_policy(pol.get("default", {}), "$.policies.default",
                                  ClassPolicy())
    classes = {}
    for name, obj in pol.get("classes", {}).items():
        classes[name] = _parse_class_policy(obj, f"$.policies.classes.{name}",
                                            default)
    radius = pol.get("critical_proximity_radius_m")
    policies = PolicySet(
        default=default, classes=classes,
        critical_threshold_scale=_number(pol.get("critical_threshold_scale", 0.25),
                                         "$.policies.critical_threshold_scale", 1e-9),
        critical_lag_scale=_number(pol.get("critical_lag_scale", 0.5),
                                   "$.policies.critical_lag_scale", 1e-9),
        heartbeat_ms=_number(pol.get("heartbeat_ms", 1000),
                             "$.policies.heartbeat_ms", 1, True),
        ewma_alpha=_number(pol.get("ewma_alpha", 0.125), "$.policies.ewma_alpha", 1e-9),
        exit_hysteresis_ms=_number(pol.get("exit_hysteresis_ms", 250),
                                   "$.policies.exit_hysteresis_ms", 0, True),
        route_hysteresis_ms=_number(pol.get("route_hysteresis_ms", 500),
                                    "$.policies.route_hysteresis_ms", 0, True),
        idle_ping_ms=_number(pol.get("idle_ping_ms", 1000),
                             "$.policies.idle_ping_ms", 1, True),
        critical_proximity_radius_m=(None if radius is None else
                                     _number(radius,
                                             "$.policies.critical_proximity_radius_m",
                                             0)))
    if not 0 < policies.critical_threshold_scale <= 1:
        raise ValidationError("$.policies.critical_threshold_scale: must be in (0, 1]")
    if not 0 < policies.critical_lag_scale <= 1:
        raise ValidationError("$.policies.critical_lag_scale: must be in (0, 1]")
    if not 0 < policies.ewma_alpha <= 1:
        raise ValidationError("$.policies.ewma_alpha: must be in (0, 1]")

    tog = doc.get("toggles", {})
    _require_keys(tog, "$.toggles", set(),
                  {"overlay", "rollback_scope", "sender_side_lag",
                   "receiver_side_lag", "critical_tightening"})
    scope = tog.get("rollback_scope", "all")
    if scope not in ("all", "events"):
        raise ValidationError("$.toggles.rollback_scope: must be 'all' or 'events'")
    toggles = Toggles(
        overlay=_bool(tog.get("overlay", False), "$.toggles.overlay"),
        rollback_scope=scope,
        sender_side_lag=_bool(tog.get("sender_side_lag", True),
                              "$.toggles.sender_side_lag"),
        receiver_side_lag=_bool(tog.get("receiver_side_lag", True),
                                "$.toggles.receiver_side_lag"),
        critical_tightening=_bool(tog.get("critical_tightening", True),
                                  "$.toggles.critical_tightening"))

    return ScenarioConfig(duration_ms=duration, tick_ms=tick, seed=seed,
                          clients=clients, links=links,
                          link_events=link_events, regions=regions,
                          policies=policies, toggles=toggles)


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(doc)
