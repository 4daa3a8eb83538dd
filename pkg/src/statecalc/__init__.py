"""State-variable calculus over generalized Moore machines, products with feedback,
and a broadcast-network harness for acknowledgment-based commit protocols."""

__version__ = "0.1.0"

from .errors import (
    AlphabetViolation,
    CalcError,
    EvaluationError,
    FeedbackError,
    IncompleteExploration,
    InvalidEventError,
    ScenarioError,
    ScheduleError,
    SpuriousReceiveError,
    SubstitutionError,
)
from .machine import (
    Alphabet,
    EquivalenceResult,
    Machine,
    Partition,
    equivalent,
    minimize,
    nerode_classes_bounded,
    reachable,
    run,
    state_after,
    step_state,
)
from .product import (
    bidirectional_register,
    cascade_product,
    general_product,
    is_finite_state,
    multi_step_product,
    shift_register,
)
from .values import NULLM, NULLS, NULLV, UNSPECIFIED, Event, FrozenMap
from .variables import (
    StateVariable,
    after,
    combine,
    constant,
    define,
    initial_of,
    substitute,
    to_machine,
    trace_variable,
)
