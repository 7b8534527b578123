"""Deterministic game-mechanics engine: states, transitions, and time.

All transitions are pure: they never mutate the input state, so
independent trials can share one TuningConfig and run in parallel.
Time is integer in-game minutes. Resource regeneration keeps an exact
fractional remainder per resource, so regenerating over one long
advance or many short ones yields identical results.

The trace and per-event log are persistent linked lists (cons cells)
so that appending is O(1) and search trees can branch cheaply; use
trace_entries()/event_log_entries() to materialize them in order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

from .errors import (
    CategoryLocked,
    ChainOrderViolation,
    ClockRegression,
    Deadlock,
    EventInProgress,
    IllegalAction,
    RequirementsUnmet,
    UnknownCareer,
    UnknownObject,
)
from .tuning import EventSpec, RewardBundle, TuningConfig

TRACE_ACT = "act"
TRACE_WAIT = "wait"
TRACE_EVENT_START = "event_start"
TRACE_EVENT_END = "event_end"
TRACE_LEVEL_UP = "level_up"
TRACE_SESSION_END = "session_end"

# cons cell: (payload, previous) or None
_Chain = tuple | None


def _chain_entries(chain: _Chain) -> list:
    out = []
    while chain is not None:
        payload, chain = chain
        out.append(payload)
    out.reverse()
    return out


@dataclass(slots=True)
class EventOutcome:
    """One closed event run, recorded when the event completes or times out."""

    event_id: str
    kind: str
    owner: str
    index: int  # chain position for relationship events, occurrence otherwise
    actions: int
    accrued_xp: int
    completed: bool
    started_at: int
    ended_at: int


@dataclass(slots=True)
class Counters:
    total_actions: int = 0
    event_actions: int = 0
    sessions: int = 0  # completed session gaps; equals session_end entries
    wait_intervals: tuple[int, ...] = ()
    trace: _Chain = None  # entries are (clock, kind, detail)
    event_log: _Chain = None

    def session_count(self) -> int:
        """Sessions played: completed gaps plus the final open session."""
        if self.total_actions == 0:
            return 0
        return self.sessions + 1


def trace_entries(state: "GameState") -> list[tuple[int, str, str]]:
    return _chain_entries(state.counters.trace)


def event_log_entries(state: "GameState") -> list[EventOutcome]:
    return _chain_entries(state.counters.event_log)


def trace_to_jsonl(state: "GameState") -> str:
    """Trace export: one JSON record {clock, kind, detail} per line."""
    lines = [
        json.dumps({"clock": clock, "kind": kind, "detail": detail})
        for clock, kind, detail in trace_entries(state)
    ]
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(slots=True)
class ActiveEvent:
    event_id: str
    accrued_xp: int
    deadline: int
    actions: int
    started_at: int


@dataclass(slots=True)
class CareerState:
    id: str
    level: int
    xp: int


@dataclass(slots=True)
class RelationshipState:
    category: str | None
    completed: int
    xp: int


@dataclass
class ScenarioOverrides:
    """Per-experiment starting conditions applied without cost."""

    career: str | None = None
    relationship_category: str | None = None
    grant_objects: bool = False
    initial_resources: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioOverrides":
        return cls(
            career=data.get("career"),
            relationship_category=data.get("relationship_category"),
            grant_objects=bool(data.get("grant_objects", False)),
            initial_resources=dict(data.get("initial_resources", {})),
        )

    def to_dict(self) -> dict:
        out: dict = {}
        if self.career is not None:
            out["career"] = self.career
        if self.relationship_category is not None:
            out["relationship_category"] = self.relationship_category
        if self.grant_objects:
            out["grant_objects"] = True
        if self.initial_resources:
            out["initial_resources"] = dict(self.initial_resources)
        return out


@dataclass(slots=True)
class GameState:
    """One avatar's complete simulation state. Treat as immutable."""

    clock: int
    resources: dict[str, int]
    regen_remainders: dict[str, int]  # numerator remainder per regen denominator
    locked_until: int
    cooldowns: dict[str, int]  # action id -> first clock minute it is usable again
    career: CareerState | None
    relationship: RelationshipState
    active_event: ActiveEvent | None
    inventory: dict[str, int]
    owned_objects: frozenset[str]
    events_completed: frozenset[str]
    auto_grant_objects: bool
    counters: Counters
    rng_seed: int

    def dedup_key(self) -> tuple:
        """Hashable identity of everything that affects future dynamics.

        Counters, trace, and provenance fields are excluded; expired
        locks and cooldowns and empty inventory slots are normalized
        away so equivalent states collide.
        """
        event = self.active_event
        return (
            self.clock,
            tuple(sorted(self.resources.items())),
            tuple(sorted(
                (k, v) for k, v in self.regen_remainders.items() if v
            )),
            self.locked_until if self.locked_until > self.clock else 0,
            tuple(sorted(
                (a, t) for a, t in self.cooldowns.items() if t > self.clock
            )),
            (self.career.id, self.career.level, self.career.xp)
            if self.career else None,
            (self.relationship.category, self.relationship.completed,
             self.relationship.xp),
            (event.event_id, event.accrued_xp, event.deadline)
            if event else None,
            tuple(sorted((k, v) for k, v in self.inventory.items() if v)),
            tuple(sorted(self.owned_objects)),
            tuple(sorted(self.events_completed)),
        )


def state_digest(state: GameState) -> str:
    return hashlib.sha256(repr(state.dedup_key()).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def initial_state(
    config: TuningConfig, scenario: ScenarioOverrides, seed: int
) -> GameState:
    idx = config.index()
    career = None
    owned: set[str] = set()
    if scenario.career is not None:
        spec = idx.careers.get(scenario.career)
        if spec is None:
            raise UnknownCareer(scenario.career)
        career = CareerState(spec.id, 1, 0)
        if scenario.grant_objects:
            owned.update(
                u.object_id for u in spec.object_unlocks if u.unlock_level <= 1
            )
    category = scenario.relationship_category
    if category is not None and category not in idx.relationships:
        raise UnknownCareer(category)
    resources = {}
    for res in config.resources:
        value = scenario.initial_resources.get(res.id, res.initial)
        resources[res.id] = min(res.capacity, max(0, value))
    for rid in scenario.initial_resources:
        if rid not in idx.resources:
            raise UnknownObject(rid)
    return GameState(
        clock=0,
        resources=resources,
        regen_remainders={r.id: 0 for r in config.resources},
        locked_until=0,
        cooldowns={},
        career=career,
        relationship=RelationshipState(category, 0, 0),
        active_event=None,
        inventory={},
        owned_objects=frozenset(owned),
        events_completed=frozenset(),
        auto_grant_objects=scenario.grant_objects,
        counters=Counters(),
        rng_seed=seed,
    )


# ---------------------------------------------------------------------------
# Legality
# ---------------------------------------------------------------------------

def _event_startable(config: TuningConfig, state: GameState, event: EventSpec) -> bool:
    idx = config.index()
    req = event.start_requires
    if req.career is not None:
        if state.career is None or state.career.id != req.career:
            return False
        if state.career.level < req.min_level:
            return False
    if req.owned_object is not None and req.owned_object not in state.owned_objects:
        return False
    if event.kind == "career":
        unlock = idx.event_unlock_level.get(event.id)
        if unlock is None:
            return False
        if state.career is None or state.career.id != event.owner_id:
            return False
        if state.career.level < unlock:
            return False
    else:
        position = idx.chain_position.get(event.id)
        if position is None:
            return False
        category, index = position
        rel = state.relationship
        if rel.category is not None and rel.category != category:
            return False
        if index != rel.completed + 1:
            return False
    return True


def startable_events(config: TuningConfig, state: GameState) -> list[str]:
    """Events that start_event would accept right now, in id order."""
    if state.active_event is not None:
        return []
    return [
        e.id for e in sorted(config.events, key=lambda e: e.id)
        if _event_startable(config, state, e)
    ]


def _implicit_start_target(
    config: TuningConfig, state: GameState, action_id: str
) -> str | None:
    """Startable event (smallest id) whose action list contains action_id."""
    idx = config.index()
    for eid in idx.events_of_action.get(action_id, ()):
        if _event_startable(config, state, idx.events[eid]):
            return eid
    return None


def _action_legal(config: TuningConfig, state: GameState, action_id: str) -> bool:
    idx = config.index()
    action = idx.actions[action_id]
    if state.cooldowns.get(action_id, 0) > state.clock:
        return False
    req = action.requires
    if req.career is not None:
        if state.career is None or state.career.id != req.career:
            return False
        if state.career.level < req.min_level:
            return False
    if req.owned_object is not None and req.owned_object not in state.owned_objects:
        return False
    if req.during_event:
        event = state.active_event
        if event is not None:
            if action_id not in idx.events[event.event_id].action_ids:
                return False
        elif _implicit_start_target(config, state, action_id) is None:
            return False
    for rid, cost in action.costs.items():
        if state.resources.get(rid, 0) < cost:
            return False
    for item, count in action.consumes_items.items():
        if state.inventory.get(item, 0) < count:
            return False
    return True


def legal_actions(config: TuningConfig, state: GameState) -> list[str]:
    """Actions executable right now, in lexicographic id order."""
    if state.locked_until > state.clock:
        return []
    return [
        aid for aid in config.index().sorted_action_ids
        if _action_legal(config, state, aid)
    ]


# ---------------------------------------------------------------------------
# Reward application
# ---------------------------------------------------------------------------

def _grant_bundle(
    config: TuningConfig,
    bundle: RewardBundle,
    clock: int,
    auto_grant: bool,
    career: CareerState | None,
    relationship: RelationshipState,
    resources: dict[str, int],
    inventory: dict[str, int],
    owned: frozenset[str],
    trace: _Chain,
) -> tuple[
    CareerState | None, RelationshipState, dict[str, int], dict[str, int],
    frozenset[str], _Chain,
]:
    """Pay one reward bundle. Event XP accrual is handled by the caller."""
    idx = config.index()
    if bundle.career_xp and career is not None:
        spec = idx.careers[career.id]
        xp = career.xp + bundle.career_xp
        level = max(spec.level_for_xp(xp), career.level)
        if level > career.level:
            for reached in range(career.level + 1, level + 1):
                trace = ((clock, TRACE_LEVEL_UP, f"{career.id}:{reached}"), trace)
            if auto_grant:
                granted = {
                    u.object_id for u in spec.object_unlocks
                    if u.unlock_level <= level and u.object_id not in owned
                }
                if granted:
                    owned = owned | granted
        career = CareerState(career.id, level, xp)
    if bundle.relationship_xp:
        relationship = RelationshipState(
            relationship.category,
            relationship.completed,
            relationship.xp + bundle.relationship_xp,
        )
    if bundle.resources:
        resources = dict(resources)
        for rid, amount in bundle.resources.items():
            cap = idx.resources[rid].capacity
            resources[rid] = min(cap, resources.get(rid, 0) + amount)
    if bundle.items:
        inventory = dict(inventory)
        for item, count in bundle.items.items():
            inventory[item] = inventory.get(item, 0) + count
    return career, relationship, resources, inventory, owned, trace


def _close_event(
    config: TuningConfig,
    at_clock: int,
    event_state: ActiveEvent,
    completed: bool,
    auto_grant: bool,
    career: CareerState | None,
    relationship: RelationshipState,
    resources: dict[str, int],
    inventory: dict[str, int],
    owned: frozenset[str],
    events_completed: frozenset[str],
    trace: _Chain,
    event_log: _Chain,
):
    """Pay every reached step exactly once and record the outcome."""
    idx = config.index()
    event = idx.events[event_state.event_id]
    for step in event.steps:
        if event_state.accrued_xp >= step.xp_threshold:
            career, relationship, resources, inventory, owned, trace = _grant_bundle(
                config, step.reward, at_clock, auto_grant,
                career, relationship, resources, inventory, owned, trace,
            )
    if event.kind == "relationship":
        index = relationship.completed + 1
        if completed:
            relationship = RelationshipState(
                relationship.category, relationship.completed + 1, relationship.xp
            )
    else:
        index = 1
        log = event_log
        while log is not None:
            outcome, log = log
            if outcome.event_id == event.id:
                index += 1
    if completed:
        events_completed = events_completed | {event.id}
    status = "completed" if completed else "timeout"
    trace = ((at_clock, TRACE_EVENT_END, f"{event.id}:{status}"), trace)
    event_log = (
        EventOutcome(
            event_id=event.id,
            kind=event.kind,
            owner=event.owner_id,
            index=index,
            actions=event_state.actions,
            accrued_xp=event_state.accrued_xp,
            completed=completed,
            started_at=event_state.started_at,
            ended_at=at_clock,
        ),
        event_log,
    )
    return (
        career, relationship, resources, inventory, owned,
        events_completed, trace, event_log,
    )


def _begin_event(
    config: TuningConfig, state: GameState, event_id: str
) -> tuple[ActiveEvent, RelationshipState, _Chain]:
    event = config.index().events[event_id]
    relationship = state.relationship
    if event.kind == "relationship" and relationship.category is None:
        relationship = RelationshipState(
            event.owner_id, relationship.completed, relationship.xp
        )
    active = ActiveEvent(
        event_id=event_id,
        accrued_xp=0,
        deadline=state.clock + event.time_limit,
        actions=0,
        started_at=state.clock,
    )
    trace = ((state.clock, TRACE_EVENT_START, event_id), state.counters.trace)
    return active, relationship, trace


def start_event(config: TuningConfig, state: GameState, event_id: str) -> GameState:
    """Begin a timed event; the first relationship event locks the category."""
    idx = config.index()
    event = idx.events.get(event_id)
    if event is None:
        raise RequirementsUnmet(f"unknown event {event_id!r}")
    if state.active_event is not None:
        raise EventInProgress(state.active_event.event_id)
    if event.kind == "relationship":
        position = idx.chain_position.get(event_id)
        if position is None:
            raise RequirementsUnmet(f"{event_id!r} is not part of any chain")
        category, index = position
        rel = state.relationship
        if rel.category is not None and rel.category != category:
            raise CategoryLocked(
                f"relationship is locked to {rel.category!r}, "
                f"{event_id!r} belongs to {category!r}"
            )
        if index != rel.completed + 1:
            raise ChainOrderViolation(
                f"{event_id!r} is event #{index} of {category!r}; "
                f"next is #{rel.completed + 1}"
            )
    if not _event_startable(config, state, event):
        raise RequirementsUnmet(f"requirements for {event_id!r} are not met")
    active, relationship, trace = _begin_event(config, state, event_id)
    return replace(
        state,
        active_event=active,
        relationship=relationship,
        counters=replace(state.counters, trace=trace),
    )


# ---------------------------------------------------------------------------
# Acting
# ---------------------------------------------------------------------------

def apply_action(config: TuningConfig, state: GameState, action_id: str) -> GameState:
    """Execute one legal action at the current clock (no time passes)."""
    idx = config.index()
    action = idx.actions.get(action_id)
    if action is None or state.locked_until > state.clock or not _action_legal(
        config, state, action_id
    ):
        raise IllegalAction(action_id)

    clock = state.clock
    career = state.career
    relationship = state.relationship
    owned = state.owned_objects
    events_completed = state.events_completed
    active = state.active_event
    counters = state.counters
    trace = counters.trace
    event_log = counters.event_log

    resources = state.resources
    if action.costs:
        resources = dict(resources)
        for rid, cost in action.costs.items():
            resources[rid] -= cost
    inventory = state.inventory
    if action.consumes_items:
        inventory = dict(inventory)
        for item, count in action.consumes_items.items():
            inventory[item] -= count

    if action.requires.during_event and active is None:
        target = _implicit_start_target(config, state, action_id)
        event = idx.events[target]
        if event.kind == "relationship" and relationship.category is None:
            relationship = RelationshipState(
                event.owner_id, relationship.completed, relationship.xp
            )
        active = ActiveEvent(target, 0, clock + event.time_limit, 0, clock)
        trace = ((clock, TRACE_EVENT_START, target), trace)

    event_actions = counters.event_actions
    if (
        active is not None
        and action.rewards.event_xp > 0
        and action_id in idx.events[active.event_id].action_ids
    ):
        active = ActiveEvent(
            active.event_id,
            active.accrued_xp + action.rewards.event_xp,
            active.deadline,
            active.actions + 1,
            active.started_at,
        )
        event_actions += 1

    career, relationship, resources, inventory, owned, trace = _grant_bundle(
        config, action.rewards, clock, state.auto_grant_objects,
        career, relationship, resources, inventory, owned, trace,
    )

    trace = ((clock, TRACE_ACT, action_id), trace)

    if active is not None:
        final = idx.events[active.event_id].final_threshold
        if active.accrued_xp >= final:
            (
                career, relationship, resources, inventory, owned,
                events_completed, trace, event_log,
            ) = _close_event(
                config, clock, active, True, state.auto_grant_objects,
                career, relationship, resources, inventory, owned,
                events_completed, trace, event_log,
            )
            active = None

    cooldowns = state.cooldowns
    if action.cooldown > 0:
        cooldowns = dict(cooldowns)
        cooldowns[action_id] = clock + action.duration + action.cooldown

    return GameState(
        clock=clock,
        resources=resources,
        regen_remainders=state.regen_remainders,
        locked_until=clock + action.duration,
        cooldowns=cooldowns,
        career=career,
        relationship=relationship,
        active_event=active,
        inventory=inventory,
        owned_objects=owned,
        events_completed=events_completed,
        auto_grant_objects=state.auto_grant_objects,
        counters=Counters(
            total_actions=counters.total_actions + 1,
            event_actions=event_actions,
            sessions=counters.sessions,
            wait_intervals=counters.wait_intervals,
            trace=trace,
            event_log=event_log,
        ),
        rng_seed=state.rng_seed,
    )


# ---------------------------------------------------------------------------
# Time
# ---------------------------------------------------------------------------

def _regen(
    config: TuningConfig,
    resources: dict[str, int],
    remainders: dict[str, int],
    dt: int,
) -> tuple[dict[str, int], dict[str, int]]:
    if dt == 0:
        return resources, remainders
    new_res = dict(resources)
    new_rem = dict(remainders)
    for res in config.resources:
        rate = res.regen_rate
        if rate == 0:
            continue
        acc = rate.numerator * dt + new_rem[res.id]
        gain, new_rem[res.id] = divmod(acc, rate.denominator)
        if gain:
            new_res[res.id] = min(res.capacity, new_res[res.id] + gain)
    return new_res, new_rem


def advance_time(config: TuningConfig, state: GameState, until: int) -> GameState:
    """Move the clock forward, regenerating resources exactly.

    An active event whose deadline falls inside the advance is closed at
    the deadline: every reached step is paid, then time continues.
    """
    if until < state.clock:
        raise ClockRegression(f"{until} < {state.clock}")
    if until == state.clock:
        return state

    active = state.active_event
    if active is not None and active.deadline <= until:
        resources, remainders = _regen(
            config, state.resources, state.regen_remainders,
            active.deadline - state.clock,
        )
        completed = (
            active.accrued_xp
            >= config.index().events[active.event_id].final_threshold
        )
        (
            career, relationship, resources, inventory, owned,
            events_completed, trace, event_log,
        ) = _close_event(
            config, active.deadline, active, completed,
            state.auto_grant_objects, state.career, state.relationship,
            resources, state.inventory, state.owned_objects,
            state.events_completed, state.counters.trace,
            state.counters.event_log,
        )
        resources, remainders = _regen(
            config, resources, remainders, until - active.deadline
        )
        return replace(
            state,
            clock=until,
            resources=resources,
            regen_remainders=remainders,
            career=career,
            relationship=relationship,
            active_event=None,
            inventory=inventory,
            owned_objects=owned,
            events_completed=events_completed,
            counters=replace(state.counters, trace=trace, event_log=event_log),
        )

    resources, remainders = _regen(
        config, state.resources, state.regen_remainders, until - state.clock
    )
    return replace(
        state, clock=until, resources=resources, regen_remainders=remainders
    )


def step_action(config: TuningConfig, state: GameState, action_id: str) -> GameState:
    """Apply an action, then let its duration elapse (the planner's act edge)."""
    after = apply_action(config, state, action_id)
    return advance_time(config, after, after.locked_until)


# ---------------------------------------------------------------------------
# Availability
# ---------------------------------------------------------------------------

def _static_ready_time(
    config: TuningConfig, state: GameState, action_id: str
) -> int | None:
    """Earliest clock at which the action becomes legal, assuming the
    world only changes by time passing (event closures excluded)."""
    idx = config.index()
    action = idx.actions[action_id]
    req = action.requires
    if req.career is not None:
        if state.career is None or state.career.id != req.career:
            return None
        if state.career.level < req.min_level:
            return None
    if req.owned_object is not None and req.owned_object not in state.owned_objects:
        return None
    if req.during_event:
        event = state.active_event
        if event is not None:
            if action_id not in idx.events[event.event_id].action_ids:
                return None
        elif _implicit_start_target(config, state, action_id) is None:
            return None
    for item, count in action.consumes_items.items():
        if state.inventory.get(item, 0) < count:
            return None

    ready = max(state.clock, state.locked_until, state.cooldowns.get(action_id, 0))
    for rid, cost in action.costs.items():
        res = idx.resources[rid]
        have = state.resources.get(rid, 0)
        if have >= cost:
            continue
        if cost > res.capacity:
            return None
        rate = res.regen_rate
        if rate == 0:
            return None
        need = (cost - have) * rate.denominator - state.regen_remainders.get(rid, 0)
        dt = -(-need // rate.numerator)  # ceil division
        ready = max(ready, state.clock + dt)
    return ready


def next_availability(config: TuningConfig, state: GameState) -> int | None:
    """Smallest future clock time at which some action is legal, or None."""
    scratch = state
    for _ in range(64):  # a few event closures at most on any sane config
        if legal_actions(config, scratch):
            return scratch.clock
        candidates = []
        for aid in config.index().sorted_action_ids:
            t = _static_ready_time(config, scratch, aid)
            if t is not None and t > scratch.clock:
                candidates.append(t)
        deadline = (
            scratch.active_event.deadline if scratch.active_event else None
        )
        if deadline is not None:
            candidates.append(deadline)
        if not candidates:
            return None
        target = min(candidates)
        scratch = advance_time(config, scratch, target)
        if legal_actions(config, scratch):
            return target
        if target != deadline:
            return None  # static promise failed and no event closed: dead
    return None


def close_session_if_idle(config: TuningConfig, state: GameState) -> GameState:
    """End the session: record the wait gap and jump to the next availability."""
    if legal_actions(config, state):
        raise IllegalAction("session close while actions are legal")
    target = next_availability(config, state)
    if target is None:
        raise Deadlock("no action can ever become legal")
    interval = target - state.clock
    counters = replace(
        state.counters,
        sessions=state.counters.sessions + 1,
        wait_intervals=state.counters.wait_intervals + (interval,),
        trace=((state.clock, TRACE_SESSION_END, str(interval)),
               state.counters.trace),
    )
    return advance_time(config, replace(state, counters=counters), target)
