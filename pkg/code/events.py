"""
LeverageCycle - Progress Events
===============================
Typed progress events, a bus that checks their payloads, and a console
reporter that prints them.

Solvers emit; nothing in the numerical code prints directly. The CLI
attaches a ConsoleReporter unless --quiet is given.

Payload schema (every key listed is required, extra keys are allowed):

    edge_step     edge, step, update, dt
    simplex_step  step, update, dt
    dt_halved     stage, step, dt, reason
    solve_done    stage, steps, residual
    warning       message (plus free-form context)
    paths_done    n_paths, n_steps, projections
"""

import math
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Type, TypedDict, Union

from errors import InvalidParameterError


class Event(str, Enum):
    EDGE_STEP = "edge_step"
    SIMPLEX_STEP = "simplex_step"
    DT_HALVED = "dt_halved"
    SOLVE_DONE = "solve_done"
    WARNING = "warning"
    PATHS_DONE = "paths_done"


class EdgeStep(TypedDict):
    edge: str
    step: int
    update: float
    dt: float


class SimplexStep(TypedDict):
    step: int
    update: float
    dt: float


class DtHalved(TypedDict):
    stage: str
    step: int
    dt: float
    reason: str


class SolveDone(TypedDict):
    stage: str
    steps: int
    residual: float


class WarningRaised(TypedDict):
    message: str


class PathsDone(TypedDict):
    n_paths: int
    n_steps: int
    projections: int


PAYLOADS: Dict[Event, Type] = {
    Event.EDGE_STEP: EdgeStep,
    Event.SIMPLEX_STEP: SimplexStep,
    Event.DT_HALVED: DtHalved,
    Event.SOLVE_DONE: SolveDone,
    Event.WARNING: WarningRaised,
    Event.PATHS_DONE: PathsDone,
}

# Module-level names used by the solvers
EDGE_STEP = Event.EDGE_STEP
SIMPLEX_STEP = Event.SIMPLEX_STEP
DT_HALVED = Event.DT_HALVED
SOLVE_DONE = Event.SOLVE_DONE
WARNING = Event.WARNING
PATHS_DONE = Event.PATHS_DONE

ALL_EVENTS = tuple(Event)

Listener = Callable[[Mapping], None]


def as_event(name: Union[str, Event]) -> Event:
    try:
        return Event(name)
    except ValueError:
        raise InvalidParameterError("unknown event", {"event": name}) from None


def check_payload(event: Event, data: Mapping) -> None:
    """Raise InvalidParameterError if `data` misses a key of the event's schema"""
    if not isinstance(data, Mapping):
        raise InvalidParameterError("event payload must be a mapping",
                                    {"event": event.value, "type": type(data).__name__})
    missing = sorted(set(PAYLOADS[event].__annotations__) - set(data))
    if missing:
        raise InvalidParameterError("event payload is missing keys",
                                    {"event": event.value, "missing": missing})


class EventBus:
    """Event bus for progress updates to the console or to tests"""

    def __init__(self):
        self.listeners: Dict[Event, List[Listener]] = {}

    def subscribe(self, event: Union[str, Event], callback: Listener):
        self.listeners.setdefault(as_event(event), []).append(callback)

    def unsubscribe(self, event: Union[str, Event], callback: Listener):
        callbacks = self.listeners.get(as_event(event), [])
        if callback in callbacks:
            callbacks.remove(callback)

    def emit(self, event: Union[str, Event], data: Mapping):
        event = as_event(event)
        check_payload(event, data)
        for callback in list(self.listeners.get(event, [])):
            try:
                callback(data)
            except Exception as e:
                print(f"Event handler error ({event.value}): {e}")


# Global event bus
events = EventBus()


# ============================================================================
# Console reporter
# ============================================================================

class ConsoleReporter:
    """
    Prints solver progress with a [LeverageCycle] prefix.

    Step events are throttled: only every `every`-th step is printed.
    Warnings, step-size changes and completion are always printed.
    """

    PREFIX = "[LeverageCycle]"

    def __init__(self, every: int = 200, printer: Callable[[str], None] = print):
        self.every = max(1, int(every))
        self.printer = printer
        self._bus: Optional[EventBus] = None

    def attach(self, bus: EventBus = events) -> "ConsoleReporter":
        for name in ALL_EVENTS:
            bus.subscribe(name, self._handler(name))
        self._bus = bus
        return self

    def detach(self):
        if self._bus is None:
            return
        for name in ALL_EVENTS:
            for callback in list(self._bus.listeners.get(name, [])):
                if getattr(callback, "__self__", None) is self:
                    self._bus.unsubscribe(name, callback)
        self._bus = None

    def _handler(self, name: Event) -> Listener:
        return getattr(self, f"on_{name.value}")

    def on_edge_step(self, data: Dict):
        if data["step"] % self.every == 0:
            self.printer(
                f"{self.PREFIX} edge {data['edge']} step {data['step']}: "
                f"update={_fmt(data['update'])} dt={data['dt']:g}"
            )

    def on_simplex_step(self, data: Dict):
        if data["step"] % self.every == 0:
            self.printer(
                f"{self.PREFIX} simplex step {data['step']}: "
                f"update={_fmt(data['update'])} dt={data['dt']:g}"
            )

    def on_dt_halved(self, data: Dict):
        self.printer(
            f"{self.PREFIX} {data['stage']}: pseudo-time step reduced to "
            f"{data['dt']:g} ({data['reason']})"
        )

    def on_solve_done(self, data: Dict):
        self.printer(
            f"{self.PREFIX} {data['stage']} converged in {data['steps']} steps, "
            f"residual={_fmt(data['residual'])}"
        )

    def on_warning(self, data: Dict):
        self.printer(f"{self.PREFIX} warning: {data['message']}")

    def on_paths_done(self, data: Dict):
        self.printer(
            f"{self.PREFIX} simulated {data['n_paths']} paths x {data['n_steps']} steps "
            f"({data['projections']} boundary projections)"
        )


def _fmt(value: float) -> str:
    if value is None or not math.isfinite(value):
        return str(value)
    return f"{value:.3e}"


def warn(message: str, **context):
    """Emit a warning event"""
    events.emit(WARNING, {"message": message, **context})
