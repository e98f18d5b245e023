"""Exception hierarchy shared across the package.

Every error a caller is expected to handle derives from CtxvalError so CLI
entry points can map the whole family to a single exit code.
"""

from __future__ import annotations


class CtxvalError(Exception):
    """Base class for all domain errors raised by this package."""


class ParseError(CtxvalError):
    """A configuration file (or key string) could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class StoreError(CtxvalError):
    """Persistence-level failure that is not a parse error."""


class MergeConflictError(StoreError):
    """Both sides of a three-way merge changed the same key differently.

    Nothing is written when this is raised; `conflicts` carries every
    conflicting rendered key, sorted.
    """

    def __init__(self, conflicts: list[str]):
        self.conflicts = sorted(conflicts)
        super().__init__("merge conflict on: " + ", ".join(self.conflicts))


class SpecError(CtxvalError):
    """A contextual value specification is invalid."""


class CycleError(SpecError):
    """The dependency graph between contextual values contains a cycle.

    `cycle` is one offending layer-name sequence, closed (first == last).
    """

    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("dependency cycle: " + " -> ".join(self.cycle))


class ConversionError(CtxvalError):
    """A text value does not convert to the declared value type."""


class GenerationError(CtxvalError):
    """Code generation failed (e.g. two key paths map to one type name)."""


class ContextError(CtxvalError):
    """A context operation was used against its contract."""


class PropagationCycleError(ContextError):
    """A propagation pass tried to update the same contextual value twice.

    This is the run-time backstop for cyclic dependencies that were not
    caught when the specification was parsed.
    """

    def __init__(self, layer_name: str):
        self.layer_name = layer_name
        super().__init__(
            f"propagation revisited contextual value for layer {layer_name!r}; "
            "cyclic dependency at run time"
        )
