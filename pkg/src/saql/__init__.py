"""saql: a stream anomaly query language and execution engine.

Detects abnormal system behaviors (rule-based, time-series, invariant-based
and outlier-based anomaly models) over a live feed of system monitoring
events, with multi-query stream sharing, a file-backed event store/replayer
and an HTTP/CLI operator surface.
"""

from saql.events import (
    Entity,
    EntityKind,
    Event,
    EventType,
    Operation,
    event_type,
    parse_event,
    serialize_event,
)

__version__ = "0.1.0"

__all__ = [
    "Entity",
    "EntityKind",
    "Event",
    "EventType",
    "Operation",
    "event_type",
    "parse_event",
    "serialize_event",
    "__version__",
]
