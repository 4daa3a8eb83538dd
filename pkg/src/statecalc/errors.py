"""Exception hierarchy shared by every module."""


class CalcError(Exception):
    """Base class. ``position`` is the trace index where evaluation failed, if known."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.message = message
        self.position = position

    def locate(self, position):
        if self.position is None:
            self.position = position
        return self

    def __str__(self):
        if self.position is None:
            return self.message
        return f"{self.message} (at trace position {self.position})"


class AlphabetViolation(CalcError, ValueError):
    def __init__(self, event, position=None, detail=""):
        msg = f"event {event!r} is outside the alphabet"
        if detail:
            msg += f": {detail}"
        super().__init__(msg, position)
        self.event = event


class InvalidEventError(AlphabetViolation):
    """An event is in the alphabet by name but its payload is unusable."""


class SubstitutionError(CalcError, TypeError):
    """A driver produced something that is not a trace over the inner alphabet."""


class EvaluationError(CalcError):
    """A pointwise operator failed on the component values."""


class FeedbackError(CalcError):
    def __init__(self, message, component, event=None, position=None):
        super().__init__(f"component {component}: {message}", position)
        self.component = component
        self.event = event


class IncompleteExploration(CalcError):
    """State exploration hit its bound before closing."""

    def __init__(self, message, explored):
        super().__init__(message)
        self.explored = explored


class ScheduleError(CalcError):
    """A schedule entry breaks the network axioms or a scenario constraint."""


class SpuriousReceiveError(ScheduleError):
    pass


class ScenarioError(CalcError):
    """Scenario file failed to parse or validate. ``field`` names the offending path."""

    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
