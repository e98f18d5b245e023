"""Context-oriented configuration runtime.

Persistent contextual values live in key-value configuration files, adapt to
the active layers, and themselves drive layer activation.  Changes propagate
to dependent values in topological order at explicit synchronization points,
other processes are notified through pluggable transports, and a code
generator turns specifications into typed accessors.
"""

from .errors import (
    ContextError,
    ConversionError,
    CtxvalError,
    CycleError,
    GenerationError,
    MergeConflictError,
    ParseError,
    PropagationCycleError,
    SpecError,
    StoreError,
)
from .notify import (
    ChangeEvent,
    PendingFlag,
    PidSignalTransport,
    StampFileTransport,
    check_and_sync,
)
from .runtime import (
    Context,
    ContextualValue,
    build_context,
    evaluate,
    from_text,
    to_text,
)
from .spec import (
    CVSpec,
    DependencyGraph,
    UpdateOrder,
    build_dependency_graph,
    extract_specs,
    make_update_order,
    topo_order,
)
from .store import (
    ConfigEntry,
    ConfigStore,
    EMPTY_STORE,
    KeyPath,
    SpecSection,
    StoreHandle,
    kdb_get,
    kdb_set,
    lookup_raw,
    parse_config,
    serialize_config,
    three_way_merge,
)

__version__ = "0.1.0"

__all__ = [
    "ChangeEvent",
    "ConfigEntry",
    "ConfigStore",
    "Context",
    "ContextError",
    "ContextualValue",
    "ConversionError",
    "CtxvalError",
    "CVSpec",
    "CycleError",
    "DependencyGraph",
    "EMPTY_STORE",
    "GenerationError",
    "KeyPath",
    "MergeConflictError",
    "ParseError",
    "PendingFlag",
    "PidSignalTransport",
    "PropagationCycleError",
    "SpecError",
    "SpecSection",
    "StampFileTransport",
    "StoreError",
    "StoreHandle",
    "UpdateOrder",
    "build_context",
    "build_dependency_graph",
    "check_and_sync",
    "evaluate",
    "extract_specs",
    "from_text",
    "kdb_get",
    "kdb_set",
    "lookup_raw",
    "make_update_order",
    "parse_config",
    "serialize_config",
    "three_way_merge",
    "to_text",
    "topo_order",
]
