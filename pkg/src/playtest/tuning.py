"""Declarative tuning files: parse, validate, diff, and static balance checks.

A tuning file is one JSON document describing a complete game build:
resources, actions, timed events with XP step rewards, careers,
relationship event chains, and purchasable objects. Parsing is strict
(unknown or missing fields are schema errors); semantic rules such as
reference resolution and monotone thresholds are reported as
diagnostics. The file format is documented in docs/tuning-schema.md.

Configs are immutable after parse and safe to share across concurrent
simulation trials.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .errors import (
    DanglingReference,
    InvariantViolation,
    SchemaError,
    TuningSyntaxError,
    UnknownEvent,
)

SCHEMA_VERSION = 1

REQUIRED_TOP_LEVEL = (
    "schema_version",
    "build_id",
    "resources",
    "actions",
    "events",
    "careers",
    "relationships",
    "objects",
)

EVENT_KINDS = ("career", "relationship")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class RewardBundle:
    career_xp: int = 0
    event_xp: int = 0
    relationship_xp: int = 0
    resources: dict[str, int] = field(default_factory=dict)
    items: dict[str, int] = field(default_factory=dict)


@dataclass
class RequirementSet:
    career: str | None = None
    min_level: int = 1
    owned_object: str | None = None
    during_event: bool = False


@dataclass
class ResourceSpec:
    id: str
    capacity: int
    regen_rate: Fraction  # units per in-game minute
    initial: int


@dataclass
class ActionSpec:
    id: str
    duration: int  # in-game minutes the avatar is locked
    cooldown: int = 0  # extra minutes after the lock before a repeat
    costs: dict[str, int] = field(default_factory=dict)
    consumes_items: dict[str, int] = field(default_factory=dict)
    rewards: RewardBundle = field(default_factory=RewardBundle)
    requires: RequirementSet = field(default_factory=RequirementSet)
    category_tag: str = ""
    delayed_effect: str | None = None  # annotation only; planners ignore it


@dataclass
class EventStep:
    xp_threshold: int
    reward: RewardBundle


@dataclass
class EventSpec:
    id: str
    kind: str  # "career" | "relationship"
    owner_id: str
    time_limit: int
    action_ids: list[str]
    steps: list[EventStep]
    start_requires: RequirementSet = field(default_factory=RequirementSet)

    @property
    def final_threshold(self) -> int:
        return self.steps[-1].xp_threshold


@dataclass
class ObjectUnlock:
    object_id: str
    unlock_level: int
    price_rho: int  # units of the shared resource spent to buy it


@dataclass
class CareerSpec:
    id: str
    max_level: int
    # xp_per_level[k-1] is the cumulative XP at which the career holds
    # level k; the first entry is the level-1 baseline (held from start).
    xp_per_level: list[int]
    events_by_level: dict[int, list[str]] = field(default_factory=dict)
    craft_items: list[str] = field(default_factory=list)
    object_unlocks: list[ObjectUnlock] = field(default_factory=list)

    def xp_for_level(self, level: int) -> int:
        return self.xp_per_level[level - 1]

    def level_for_xp(self, xp: int) -> int:
        level = 1
        for k in range(2, self.max_level + 1):
            if xp >= self.xp_per_level[k - 1]:
                level = k
            else:
                break
        return level


@dataclass
class RelationshipCategorySpec:
    id: str
    event_chain: list[str]


@dataclass
class ObjectSpec:
    id: str
    unlocked_action_ids: list[str]


@dataclass
class TuningConfig:
    build_id: str
    resources: list[ResourceSpec]
    actions: list[ActionSpec]
    events: list[EventSpec]
    careers: list[CareerSpec]
    relationships: list[RelationshipCategorySpec]
    objects: list[ObjectSpec]
    _index: "ConfigIndex | None" = field(
        default=None, repr=False, compare=False
    )

    def index(self) -> "ConfigIndex":
        if self._index is None:
            self._index = ConfigIndex(self)
        return self._index


class ConfigIndex:
    """Lookup tables derived once from an immutable TuningConfig."""

    def __init__(self, config: TuningConfig):
        self.resources = {r.id: r for r in config.resources}
        self.actions = {a.id: a for a in config.actions}
        self.events = {e.id: e for e in config.events}
        self.careers = {c.id: c for c in config.careers}
        self.relationships = {r.id: r for r in config.relationships}
        self.objects = {o.id: o for o in config.objects}
        self.sorted_action_ids = sorted(self.actions)

        # event id -> sorted ids of events an action belongs to
        self.events_of_action: dict[str, list[str]] = {}
        for ev in config.events:
            for aid in ev.action_ids:
                self.events_of_action.setdefault(aid, []).append(ev.id)
        for ids in self.events_of_action.values():
            ids.sort()

        # career event id -> minimum career level that unlocks it
        self.event_unlock_level: dict[str, int] = {}
        for career in config.careers:
            for level, ids in career.events_by_level.items():
                for eid in ids:
                    cur = self.event_unlock_level.get(eid)
                    if cur is None or level < cur:
                        self.event_unlock_level[eid] = level

        # relationship event id -> (category id, 1-based chain position)
        self.chain_position: dict[str, tuple[str, int]] = {}
        for cat in config.relationships:
            for i, eid in enumerate(cat.event_chain):
                self.chain_position[eid] = (cat.id, i + 1)

        # best single-action yields, used as default heuristic scales
        acts = config.actions
        self.max_career_xp = max((a.rewards.career_xp for a in acts), default=0)
        self.max_event_xp = max((a.rewards.event_xp for a in acts), default=0)
        self.max_relationship_xp = max(
            (a.rewards.relationship_xp for a in acts), default=0
        )
        self.max_item_yield: dict[str, int] = {}
        for a in acts:
            for item, n in a.rewards.items.items():
                if n > self.max_item_yield.get(item, 0):
                    self.max_item_yield[item] = n


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    entity: str
    message: str
    code: str
    ref: str | None = None

    def format(self) -> str:
        return f"{self.severity}: {self.entity}: {self.message}"


# ---------------------------------------------------------------------------
# Parsing (strict: unknown or missing fields are schema errors)
# ---------------------------------------------------------------------------

def _expect(obj: Any, path: str, kind: type) -> Any:
    if not isinstance(obj, kind) or (kind is int and isinstance(obj, bool)):
        raise SchemaError(
            f"{path}: expected {kind.__name__}, got {type(obj).__name__}"
        )
    return obj


def _take(obj: dict, path: str, key: str, kind: type, *, default: Any = ...) -> Any:
    if key not in obj:
        if default is ...:
            raise SchemaError(f"{path}: missing required field {key!r}")
        return default
    return _expect(obj[key], f"{path}.{key}", kind)


def _check_no_extras(obj: dict, path: str, allowed: set[str]) -> None:
    extras = set(obj) - allowed
    if extras:
        raise SchemaError(f"{path}: unknown field(s) {sorted(extras)}")


def _int_map(obj: Any, path: str) -> dict[str, int]:
    _expect(obj, path, dict)
    out = {}
    for key, value in obj.items():
        out[key] = _expect(value, f"{path}.{key}", int)
    return out


def _str_list(obj: Any, path: str) -> list[str]:
    _expect(obj, path, list)
    return [_expect(x, f"{path}[{i}]", str) for i, x in enumerate(obj)]


def _parse_rewards(obj: Any, path: str) -> RewardBundle:
    _expect(obj, path, dict)
    allowed = {"career_xp", "event_xp", "relationship_xp", "resources", "items"}
    _check_no_extras(obj, path, allowed)
    return RewardBundle(
        career_xp=_take(obj, path, "career_xp", int, default=0),
        event_xp=_take(obj, path, "event_xp", int, default=0),
        relationship_xp=_take(obj, path, "relationship_xp", int, default=0),
        resources=_int_map(obj.get("resources", {}), f"{path}.resources"),
        items=_int_map(obj.get("items", {}), f"{path}.items"),
    )


def _parse_requires(obj: Any, path: str) -> RequirementSet:
    _expect(obj, path, dict)
    allowed = {"career", "min_level", "owned_object", "during_event"}
    _check_no_extras(obj, path, allowed)
    return RequirementSet(
        career=_take(obj, path, "career", str, default=None),
        min_level=_take(obj, path, "min_level", int, default=1),
        owned_object=_take(obj, path, "owned_object", str, default=None),
        during_event=_take(obj, path, "during_event", bool, default=False),
    )


def _parse_rate(obj: Any, path: str) -> Fraction:
    _expect(obj, path, dict)
    _check_no_extras(obj, path, {"num", "den"})
    num = _take(obj, path, "num", int)
    den = _take(obj, path, "den", int)
    if den <= 0:
        raise SchemaError(f"{path}: den must be positive")
    return Fraction(num, den)


def _parse_resource(obj: Any, path: str) -> ResourceSpec:
    _expect(obj, path, dict)
    _check_no_extras(obj, path, {"id", "capacity", "regen_rate", "initial"})
    return ResourceSpec(
        id=_take(obj, path, "id", str),
        capacity=_take(obj, path, "capacity", int),
        regen_rate=_parse_rate(obj.get("regen_rate"), f"{path}.regen_rate"),
        initial=_take(obj, path, "initial", int),
    )


def _parse_action(obj: Any, path: str) -> ActionSpec:
    _expect(obj, path, dict)
    allowed = {
        "id", "duration", "cooldown", "costs", "consumes_items",
        "rewards", "requires", "category_tag", "delayed_effect",
    }
    _check_no_extras(obj, path, allowed)
    return ActionSpec(
        id=_take(obj, path, "id", str),
        duration=_take(obj, path, "duration", int),
        cooldown=_take(obj, path, "cooldown", int, default=0),
        costs=_int_map(obj.get("costs", {}), f"{path}.costs"),
        consumes_items=_int_map(
            obj.get("consumes_items", {}), f"{path}.consumes_items"
        ),
        rewards=_parse_rewards(obj.get("rewards", {}), f"{path}.rewards"),
        requires=_parse_requires(obj.get("requires", {}), f"{path}.requires"),
        category_tag=_take(obj, path, "category_tag", str, default=""),
        delayed_effect=_take(obj, path, "delayed_effect", str, default=None),
    )


def _parse_step(obj: Any, path: str) -> EventStep:
    _expect(obj, path, dict)
    _check_no_extras(obj, path, {"xp_threshold", "reward"})
    return EventStep(
        xp_threshold=_take(obj, path, "xp_threshold", int),
        reward=_parse_rewards(obj.get("reward", {}), f"{path}.reward"),
    )


def _parse_event(obj: Any, path: str) -> EventSpec:
    _expect(obj, path, dict)
    allowed = {
        "id", "kind", "owner_id", "time_limit",
        "action_ids", "steps", "start_requires",
    }
    _check_no_extras(obj, path, allowed)
    kind = _take(obj, path, "kind", str)
    if kind not in EVENT_KINDS:
        raise SchemaError(f"{path}.kind: must be one of {EVENT_KINDS}")
    steps_raw = _expect(_take(obj, path, "steps", list), f"{path}.steps", list)
    return EventSpec(
        id=_take(obj, path, "id", str),
        kind=kind,
        owner_id=_take(obj, path, "owner_id", str),
        time_limit=_take(obj, path, "time_limit", int),
        action_ids=_str_list(obj.get("action_ids", []), f"{path}.action_ids"),
        steps=[_parse_step(s, f"{path}.steps[{i}]") for i, s in enumerate(steps_raw)],
        start_requires=_parse_requires(
            obj.get("start_requires", {}), f"{path}.start_requires"
        ),
    )


def _parse_unlock(obj: Any, path: str) -> ObjectUnlock:
    _expect(obj, path, dict)
    _check_no_extras(obj, path, {"object", "unlock_level", "price_rho"})
    return ObjectUnlock(
        object_id=_take(obj, path, "object", str),
        unlock_level=_take(obj, path, "unlock_level", int),
        price_rho=_take(obj, path, "price_rho", int),
    )


def _parse_career(obj: Any, path: str) -> CareerSpec:
    _expect(obj, path, dict)
    allowed = {
        "id", "max_level", "xp_per_level", "events_by_level",
        "craft_items", "object_unlocks",
    }
    _check_no_extras(obj, path, allowed)
    levels_raw = _take(obj, path, "events_by_level", dict, default={})
    events_by_level: dict[int, list[str]] = {}
    for key, ids in levels_raw.items():
        try:
            level = int(key)
        except ValueError:
            raise SchemaError(
                f"{path}.events_by_level: level key {key!r} is not an integer"
            ) from None
        events_by_level[level] = _str_list(ids, f"{path}.events_by_level.{key}")
    return CareerSpec(
        id=_take(obj, path, "id", str),
        max_level=_take(obj, path, "max_level", int),
        xp_per_level=[
            _expect(x, f"{path}.xp_per_level[{i}]", int)
            for i, x in enumerate(_take(obj, path, "xp_per_level", list))
        ],
        events_by_level=events_by_level,
        craft_items=_str_list(obj.get("craft_items", []), f"{path}.craft_items"),
        object_unlocks=[
            _parse_unlock(u, f"{path}.object_unlocks[{i}]")
            for i, u in enumerate(obj.get("object_unlocks", []))
        ],
    )


def _parse_relationship(obj: Any, path: str) -> RelationshipCategorySpec:
    _expect(obj, path, dict)
    _check_no_extras(obj, path, {"id", "event_chain"})
    return RelationshipCategorySpec(
        id=_take(obj, path, "id", str),
        event_chain=_str_list(
            _take(obj, path, "event_chain", list), f"{path}.event_chain"
        ),
    )


def _parse_object(obj: Any, path: str) -> ObjectSpec:
    _expect(obj, path, dict)
    _check_no_extras(obj, path, {"id", "unlocked_action_ids"})
    return ObjectSpec(
        id=_take(obj, path, "id", str),
        unlocked_action_ids=_str_list(
            _take(obj, path, "unlocked_action_ids", list),
            f"{path}.unlocked_action_ids",
        ),
    )


def parse_tuning(text: str) -> TuningConfig:
    """Parse one tuning document, raising on the first defect found.

    Raises TuningSyntaxError for malformed JSON, SchemaError for
    structural problems, and DanglingReference / InvariantViolation for
    the first semantic rule the document breaks. The returned config
    satisfies every declared invariant.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TuningSyntaxError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc

    config = build_config(doc)
    for diag in validate(config):
        if diag.severity != "error":
            continue
        if diag.code == "dangling-reference":
            raise DanglingReference(diag.entity, diag.ref or "?")
        raise InvariantViolation(f"{diag.entity}: {diag.message}")
    return config


def build_config(doc: Any) -> TuningConfig:
    """Build a TuningConfig from decoded JSON without semantic validation."""
    _expect(doc, "document", dict)
    missing = [k for k in REQUIRED_TOP_LEVEL if k not in doc]
    if missing:
        raise SchemaError(f"document: missing required field(s) {missing}")
    _check_no_extras(doc, "document", set(REQUIRED_TOP_LEVEL))
    version = _expect(doc["schema_version"], "document.schema_version", int)
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"document.schema_version: expected {SCHEMA_VERSION}, got {version}"
        )
    return TuningConfig(
        build_id=_expect(doc["build_id"], "document.build_id", str),
        resources=[
            _parse_resource(r, f"resources[{i}]")
            for i, r in enumerate(_expect(doc["resources"], "resources", list))
        ],
        actions=[
            _parse_action(a, f"actions[{i}]")
            for i, a in enumerate(_expect(doc["actions"], "actions", list))
        ],
        events=[
            _parse_event(e, f"events[{i}]")
            for i, e in enumerate(_expect(doc["events"], "events", list))
        ],
        careers=[
            _parse_career(c, f"careers[{i}]")
            for i, c in enumerate(_expect(doc["careers"], "careers", list))
        ],
        relationships=[
            _parse_relationship(r, f"relationships[{i}]")
            for i, r in enumerate(
                _expect(doc["relationships"], "relationships", list)
            )
        ],
        objects=[
            _parse_object(o, f"objects[{i}]")
            for i, o in enumerate(_expect(doc["objects"], "objects", list))
        ],
    )

# ---------------------------------------------------------------------------
# Semantic validation
# ---------------------------------------------------------------------------

def _err(entity: str, message: str, code: str, ref: str | None = None) -> Diagnostic:
    return Diagnostic("error", entity, message, code, ref)


def _warn(entity: str, message: str, code: str) -> Diagnostic:
    return Diagnostic("warning", entity, message, code)


def _dangling(site: str, ref: str, what: str) -> Diagnostic:
    return _err(site, f"references unknown {what} {ref!r}", "dangling-reference", ref)


def validate(config: TuningConfig) -> list[Diagnostic]:
    """Check every semantic rule; an empty list means the config is clean."""
    diags: list[Diagnostic] = []
    out = diags.append

    for kind, entries in (
        ("resource", config.resources),
        ("action", config.actions),
        ("event", config.events),
        ("career", config.careers),
        ("relationship", config.relationships),
        ("object", config.objects),
    ):
        seen: set[str] = set()
        for entry in entries:
            if entry.id in seen:
                out(_err(entry.id, f"duplicate {kind} id", "duplicate-id"))
            seen.add(entry.id)

    resources = {r.id for r in config.resources}
    actions = {a.id for a in config.actions}
    events = {e.id: e for e in config.events}
    careers = {c.id for c in config.careers}
    categories = {r.id for r in config.relationships}
    objects = {o.id for o in config.objects}

    def check_amounts(entity: str, amounts: dict[str, int], label: str) -> None:
        for key, value in amounts.items():
            if value < 0:
                out(_err(entity, f"negative {label} for {key!r}", "negative-amount"))

    def check_rewards(entity: str, rewards: RewardBundle) -> None:
        for label, value in (
            ("career_xp", rewards.career_xp),
            ("event_xp", rewards.event_xp),
            ("relationship_xp", rewards.relationship_xp),
        ):
            if value < 0:
                out(_err(entity, f"negative reward {label}", "negative-amount"))
        check_amounts(entity, rewards.resources, "resource reward")
        check_amounts(entity, rewards.items, "item reward")
        for rid in rewards.resources:
            if rid not in resources:
                out(_dangling(entity, rid, "resource"))

    def check_requires(entity: str, req: RequirementSet) -> None:
        if req.career is not None and req.career not in careers:
            out(_dangling(entity, req.career, "career"))
        if req.owned_object is not None and req.owned_object not in objects:
            out(_dangling(entity, req.owned_object, "object"))
        if req.min_level < 1:
            out(_err(entity, "min_level must be >= 1", "bad-level"))

    for res in config.resources:
        if res.capacity < 0:
            out(_err(res.id, "capacity must be >= 0", "negative-amount"))
        if res.initial < 0 or res.initial > res.capacity:
            out(_err(res.id, "initial must satisfy 0 <= initial <= capacity",
                     "initial-exceeds-capacity"))
        if res.regen_rate < 0:
            out(_err(res.id, "regen_rate must be >= 0", "negative-amount"))

    capacity = {r.id: r.capacity for r in config.resources}
    for act in config.actions:
        if act.duration < 0:
            out(_err(act.id, "duration must be >= 0", "negative-amount"))
        if act.cooldown < 0:
            out(_err(act.id, "cooldown must be >= 0", "negative-amount"))
        check_amounts(act.id, act.costs, "cost")
        check_amounts(act.id, act.consumes_items, "item consumption")
        for rid, cost in act.costs.items():
            if rid not in resources:
                out(_dangling(act.id, rid, "resource"))
            elif cost > capacity[rid]:
                out(_warn(act.id,
                          f"cost {cost} exceeds capacity of {rid!r}; "
                          "the action can never be afforded",
                          "cost-exceeds-capacity"))
        check_rewards(act.id, act.rewards)
        check_requires(act.id, act.requires)

    member_of_event = {aid for e in config.events for aid in e.action_ids}
    for act in config.actions:
        if act.requires.during_event and act.id not in member_of_event:
            out(_warn(act.id, "requires an event but belongs to none;"
                              " the action can never be legal",
                      "orphan-event-action"))

    for event in config.events:
        if event.time_limit <= 0:
            out(_err(event.id, "time_limit must be > 0", "bad-time-limit"))
        if not event.steps:
            out(_err(event.id, "steps must be non-empty", "empty-steps"))
        prev = 0
        for i, step in enumerate(event.steps):
            if step.xp_threshold <= 0:
                out(_err(event.id, f"step {i + 1} threshold must be > 0",
                         "bad-threshold"))
            if i > 0 and step.xp_threshold <= prev:
                out(_err(event.id, "thresholds not strictly increasing",
                         "thresholds-not-increasing"))
            prev = step.xp_threshold
            check_rewards(event.id, step.reward)
        if event.kind == "career":
            if event.owner_id not in careers:
                out(_dangling(event.id, event.owner_id, "career"))
        elif event.owner_id not in categories:
            out(_dangling(event.id, event.owner_id, "relationship category"))
        for aid in event.action_ids:
            if aid not in actions:
                out(_dangling(event.id, aid, "action"))
        check_requires(event.id, event.start_requires)

    action_specs = {a.id: a for a in config.actions}
    for event in config.events:
        for aid in event.action_ids:
            spec = action_specs.get(aid)
            if spec is not None and spec.rewards.event_xp == 0:
                out(_warn(event.id,
                          f"member action {aid!r} rewards zero event XP",
                          "zero-event-xp"))

    for career in config.careers:
        if career.max_level < 1:
            out(_err(career.id, "max_level must be >= 1", "bad-level"))
        if len(career.xp_per_level) != career.max_level:
            out(_err(career.id,
                     "xp_per_level must have one entry per level",
                     "xp-table-length"))
        prev = -1
        for xp in career.xp_per_level:
            if xp < 0:
                out(_err(career.id, "xp_per_level entries must be >= 0",
                         "negative-amount"))
            if xp <= prev:
                out(_err(career.id, "xp_per_level not strictly increasing",
                         "xp-not-increasing"))
                break
            prev = xp
        listed: set[str] = set()
        for level, ids in career.events_by_level.items():
            if level < 1 or level > career.max_level:
                out(_err(career.id, f"events_by_level level {level} out of range",
                         "bad-level"))
            for eid in ids:
                listed.add(eid)
                event = events.get(eid)
                if event is None:
                    out(_dangling(career.id, eid, "event"))
                elif event.kind != "career" or event.owner_id != career.id:
                    out(_err(career.id,
                             f"event {eid!r} is not a career event of this career",
                             "wrong-event-owner"))
        owned = {e.id for e in config.events
                 if e.kind == "career" and e.owner_id == career.id}
        for eid in sorted(owned - listed):
            out(_warn(career.id, f"career event {eid!r} is never unlocked",
                      "event-never-unlocked"))
        for unlock in career.object_unlocks:
            if unlock.object_id not in objects:
                out(_dangling(career.id, unlock.object_id, "object"))
            if unlock.unlock_level < 1 or unlock.unlock_level > career.max_level:
                out(_err(career.id,
                         f"unlock_level {unlock.unlock_level} out of range "
                         f"for {unlock.object_id!r}",
                         "bad-level"))
            if unlock.price_rho < 0:
                out(_err(career.id, f"negative price for {unlock.object_id!r}",
                         "negative-amount"))

    for cat in config.relationships:
        if not cat.event_chain:
            out(_err(cat.id, "event_chain must be non-empty", "empty-chain"))
        for eid in cat.event_chain:
            event = events.get(eid)
            if event is None:
                out(_dangling(cat.id, eid, "event"))
            elif event.kind != "relationship" or event.owner_id != cat.id:
                out(_err(cat.id,
                         f"event {eid!r} is not owned by this category",
                         "wrong-event-owner"))

    for obj in config.objects:
        for aid in obj.unlocked_action_ids:
            spec = action_specs.get(aid)
            if spec is None:
                out(_dangling(obj.id, aid, "action"))
            elif spec.requires.owned_object != obj.id:
                out(_err(obj.id,
                         f"unlocked action {aid!r} does not require this object",
                         "unlock-mismatch"))

    return diags


# ---------------------------------------------------------------------------
# Build diffing
# ---------------------------------------------------------------------------

@dataclass
class DiffEntry:
    kind: str
    entity: str
    change: str  # "added" | "removed" | "changed"
    field: str | None = None
    old: Any = None
    new: Any = None


@dataclass
class BuildDiff:
    build_a: str
    build_b: str
    entries: list[DiffEntry]

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def to_jsonable(self) -> dict:
        return {
            "build_a": self.build_a,
            "build_b": self.build_b,
            "entries": [
                {
                    "kind": e.kind,
                    "entity": e.entity,
                    "change": e.change,
                    "field": e.field,
                    "old": _jsonable(e.old),
                    "new": _jsonable(e.new),
                }
                for e in self.entries
            ],
        }

    def format_text(self) -> str:
        if self.is_empty:
            return "no differences"
        lines = []
        for e in self.entries:
            if e.change == "changed":
                lines.append(
                    f"~ {e.kind} {e.entity}: {e.field}: "
                    f"{_jsonable(e.old)} -> {_jsonable(e.new)}"
                )
            elif e.change == "added":
                lines.append(f"+ {e.kind} {e.entity}")
            else:
                lines.append(f"- {e.kind} {e.entity}")
        return "\n".join(lines)


def _jsonable(value: Any) -> Any:
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    return value


def _flatten(value: Any, prefix: str, out: dict[str, Any]) -> None:
    if isinstance(value, (RewardBundle, RequirementSet, EventStep, ObjectUnlock)):
        for name in value.__dataclass_fields__:
            _flatten(getattr(value, name), f"{prefix}.{name}" if prefix else name, out)
    elif isinstance(value, dict):
        for key in sorted(value, key=str):
            _flatten(value[key], f"{prefix}.{key}", out)
        out[f"{prefix}{'.' if prefix else ''}__keys__"] = tuple(sorted(value, key=str))
    elif isinstance(value, list):
        for i, item in enumerate(value):
            _flatten(item, f"{prefix}[{i}]", out)
        out[f"{prefix}.__len__"] = len(value)
    else:
        out[prefix] = value


def _flatten_spec(spec: Any) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for name in spec.__dataclass_fields__:
        if name in ("id", "_index"):
            continue
        _flatten(getattr(spec, name), name, out)
    return out


def diff_builds(a: TuningConfig, b: TuningConfig) -> BuildDiff:
    """Structural diff of two builds: entities added, removed, and changed."""
    entries: list[DiffEntry] = []
    if a.build_id != b.build_id:
        entries.append(DiffEntry("build", a.build_id, "changed",
                                 "build_id", a.build_id, b.build_id))
    for kind, left, right in (
        ("resource", a.resources, b.resources),
        ("action", a.actions, b.actions),
        ("event", a.events, b.events),
        ("career", a.careers, b.careers),
        ("relationship", a.relationships, b.relationships),
        ("object", a.objects, b.objects),
    ):
        lmap = {x.id: x for x in left}
        rmap = {x.id: x for x in right}
        for eid in sorted(set(lmap) | set(rmap)):
            if eid not in rmap:
                entries.append(DiffEntry(kind, eid, "removed"))
            elif eid not in lmap:
                entries.append(DiffEntry(kind, eid, "added"))
            else:
                flat_l = _flatten_spec(lmap[eid])
                flat_r = _flatten_spec(rmap[eid])
                for fieldname in sorted(set(flat_l) | set(flat_r)):
                    old = flat_l.get(fieldname)
                    new = flat_r.get(fieldname)
                    if old != new:
                        entries.append(
                            DiffEntry(kind, eid, "changed", fieldname, old, new)
                        )
    return BuildDiff(a.build_id, b.build_id, entries)


# ---------------------------------------------------------------------------
# Event step curves and the step-anomaly linter
# ---------------------------------------------------------------------------

def event_step_curve(
    config: TuningConfig, event_id: str
) -> list[tuple[int, int]]:
    """Cumulative step payoff: (xp_threshold, total career XP up to that step)."""
    event = config.index().events.get(event_id)
    if event is None:
        raise UnknownEvent(event_id)
    curve = []
    total = 0
    for step in event.steps:
        total += step.reward.career_xp
        curve.append((step.xp_threshold, total))
    return curve


def flag_step_anomalies(
    config: TuningConfig, anomaly_ratio: float = 0.25
) -> list[Diagnostic]:
    """Flag event steps whose marginal payoff collapses relative to step 1.

    A step is anomalous when its marginal reward per marginal threshold
    unit falls below anomaly_ratio times the first step's ratio; zero
    marginal reward over a positive marginal threshold is always flagged.
    Reward value is the XP currency the event progresses: career XP for
    career events, relationship XP for relationship events.
    """
    diags = []
    for event in config.events:
        if len(event.steps) < 2 or event.steps[0].xp_threshold <= 0:
            continue

        def value(step: EventStep) -> int:
            if event.kind == "career":
                return step.reward.career_xp
            return step.reward.relationship_xp

        first = event.steps[0]
        base_ratio = value(first) / first.xp_threshold
        prev_threshold = first.xp_threshold
        for i, step in enumerate(event.steps[1:], start=2):
            span = step.xp_threshold - prev_threshold
            prev_threshold = step.xp_threshold
            if span <= 0:
                continue  # already an error reported by validate()
            marginal = value(step) / span
            if value(step) == 0:
                diags.append(_warn(
                    event.id,
                    f"step {i} adds {span} XP of effort for zero marginal reward",
                    "step-anomaly"))
            elif base_ratio > 0 and marginal < anomaly_ratio * base_ratio:
                diags.append(_warn(
                    event.id,
                    f"step {i} marginal reward rate {marginal:.3f} is below "
                    f"{anomaly_ratio} of step 1 rate {base_ratio:.3f}",
                    "step-anomaly"))
    return diags


# ---------------------------------------------------------------------------
# Serialization (inverse of parse_tuning)
# ---------------------------------------------------------------------------

def _rewards_to_dict(r: RewardBundle) -> dict:
    return {
        "career_xp": r.career_xp,
        "event_xp": r.event_xp,
        "relationship_xp": r.relationship_xp,
        "resources": dict(sorted(r.resources.items())),
        "items": dict(sorted(r.items.items())),
    }


def _requires_to_dict(req: RequirementSet) -> dict:
    out: dict[str, Any] = {}
    if req.career is not None:
        out["career"] = req.career
        out["min_level"] = req.min_level
    if req.owned_object is not None:
        out["owned_object"] = req.owned_object
    if req.during_event:
        out["during_event"] = True
    return out


def config_to_dict(config: TuningConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "build_id": config.build_id,
        "resources": [
            {
                "id": r.id,
                "capacity": r.capacity,
                "regen_rate": {
                    "num": r.regen_rate.numerator,
                    "den": r.regen_rate.denominator,
                },
                "initial": r.initial,
            }
            for r in config.resources
        ],
        "actions": [
            {
                "id": a.id,
                "duration": a.duration,
                "cooldown": a.cooldown,
                "costs": dict(sorted(a.costs.items())),
                "consumes_items": dict(sorted(a.consumes_items.items())),
                "rewards": _rewards_to_dict(a.rewards),
                "requires": _requires_to_dict(a.requires),
                "category_tag": a.category_tag,
                **({"delayed_effect": a.delayed_effect}
                   if a.delayed_effect is not None else {}),
            }
            for a in config.actions
        ],
        "events": [
            {
                "id": e.id,
                "kind": e.kind,
                "owner_id": e.owner_id,
                "time_limit": e.time_limit,
                "action_ids": list(e.action_ids),
                "steps": [
                    {"xp_threshold": s.xp_threshold,
                     "reward": _rewards_to_dict(s.reward)}
                    for s in e.steps
                ],
                "start_requires": _requires_to_dict(e.start_requires),
            }
            for e in config.events
        ],
        "careers": [
            {
                "id": c.id,
                "max_level": c.max_level,
                "xp_per_level": list(c.xp_per_level),
                "events_by_level": {
                    str(level): list(ids)
                    for level, ids in sorted(c.events_by_level.items())
                },
                "craft_items": list(c.craft_items),
                "object_unlocks": [
                    {"object": u.object_id,
                     "unlock_level": u.unlock_level,
                     "price_rho": u.price_rho}
                    for u in c.object_unlocks
                ],
            }
            for c in config.careers
        ],
        "relationships": [
            {"id": r.id, "event_chain": list(r.event_chain)}
            for r in config.relationships
        ],
        "objects": [
            {"id": o.id, "unlocked_action_ids": list(o.unlocked_action_ids)}
            for o in config.objects
        ],
    }


def serialize_tuning(config: TuningConfig, indent: int = 2) -> str:
    return json.dumps(config_to_dict(config), indent=indent) + "\n"
