"""Exception types shared across the package."""


class PlaytestError(Exception):
    """Base class for every domain error raised by this package."""


# --- tuning files ---

class TuningSyntaxError(PlaytestError):
    """Malformed tuning document (bad JSON); message carries line/column."""


class SchemaError(PlaytestError):
    """Structurally valid JSON that does not match the tuning schema."""


class DanglingReference(PlaytestError):
    """An identifier referenced somewhere does not resolve to a declared entity."""

    def __init__(self, site: str, ref: str):
        super().__init__(f"{site} references unknown id {ref!r}")
        self.site = site
        self.ref = ref


class InvariantViolation(PlaytestError):
    """A declared tuning rule does not hold (named in the message)."""


class UnknownEvent(PlaytestError):
    pass


class UnknownCareer(PlaytestError):
    pass


class UnknownObject(PlaytestError):
    pass


# --- simulation ---

class IllegalAction(PlaytestError):
    """An action was applied that is not currently legal (planner bug)."""


class ClockRegression(PlaytestError):
    """Attempt to advance the clock backwards."""


class EventInProgress(PlaytestError):
    pass


class CategoryLocked(PlaytestError):
    """Relationship category already fixed by the first event chosen."""


class ChainOrderViolation(PlaytestError):
    """Relationship events must be started in chain order."""


class RequirementsUnmet(PlaytestError):
    pass


class Deadlock(PlaytestError):
    """No action can ever become legal from this state."""


# --- experiments ---

class NoRelationshipEvents(PlaytestError):
    pass


class TargetAboveCap(PlaytestError):
    pass


class CareerMissingInBuild(PlaytestError):
    pass
