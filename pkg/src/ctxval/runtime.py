"""The context engine.

A `Context` owns a layer map (name -> text value; active iff non-empty), the
contextual values registered as observers, and an in-memory view of the
configuration store.  Reading a contextual value returns its cache and never
touches the store or the layer map; all recomputation happens inside the
explicit synchronization operations (activate, deactivate, assign, scope
entry/exit, sync), which propagate layer changes to dependent values in
topological update order.

A Context and its values are confined to one thread.  Cross-thread and
cross-process coordination happens exclusively through the persistent store:
each thread owns its own Context and StoreHandle and syncs at its own
synchronization points.
"""

from __future__ import annotations

import heapq
import re
from contextlib import contextmanager
from typing import Callable, Iterable, Union

from .errors import ContextError, ConversionError, PropagationCycleError
from .spec import CVSpec, UpdateOrder
from .store import EMPTY_STORE, PLACEHOLDER, ConfigStore, StoreHandle

I64_MIN = -(2**63)
I64_MAX = 2**63 - 1

_LONG_RE = re.compile(r"^[+-]?[0-9]+$")

Value = Union[str, int, float, bool]


def from_text(type_name: str, text: str) -> Value:
    """Convert stored text to a typed value.

    Empty text maps to the type's zero value so absent entries and empty
    defaults stay usable for every type.
    """
    if type_name == "string":
        return text
    if text == "":
        return {"long": 0, "double": 0.0, "boolean": False}[type_name]
    if type_name == "long":
        if not _LONG_RE.match(text):
            raise ConversionError(f"{text!r} is not a decimal integer")
        n = int(text)
        if not I64_MIN <= n <= I64_MAX:
            raise ConversionError(f"{text!r} out of 64-bit signed range")
        return n
    if type_name == "double":
        try:
            return float(text)
        except ValueError:
            raise ConversionError(f"{text!r} is not a double") from None
    if type_name == "boolean":
        if text == "1":
            return True
        if text == "0":
            return False
        raise ConversionError(f"boolean text must be '0' or '1', got {text!r}")
    raise ConversionError(f"unknown type {type_name!r}")


def to_text(value: Value) -> str:
    """Render a typed value as stored text; inverse of from_text."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    raise ConversionError(f"unsupported value {value!r}")


def coerce(type_name: str, value: Value) -> Value:
    """Validate a Python value against the declared type before assignment."""
    if type_name == "string":
        if not isinstance(value, str):
            raise ConversionError(f"expected str, got {type(value).__name__}")
        if "\n" in value:
            raise ConversionError("string values must be single-line")
        return value
    if type_name == "boolean":
        if not isinstance(value, bool):
            raise ConversionError(f"expected bool, got {type(value).__name__}")
        return value
    if type_name == "long":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConversionError(f"expected int, got {type(value).__name__}")
        if not I64_MIN <= value <= I64_MAX:
            raise ConversionError(f"{value!r} out of 64-bit signed range")
        return value
    if type_name == "double":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConversionError(f"expected float, got {type(value).__name__}")
        return float(value)
    raise ConversionError(f"unknown type {type_name!r}")


def evaluate(
    spec: CVSpec, layers: dict[str, str], store: ConfigStore
) -> tuple[str, Value]:
    """Resolve one contextual value under the given layers.

    Placeholders substitute the named layer's value when the layer is active,
    `*` otherwise.  On a lookup miss the substituted positions degrade to `*`
    one at a time from rightmost to leftmost, cumulatively, ending at the
    all-`*` key; a final miss yields the spec default.  The returned concrete
    key is always the pre-fallback substitution: it names the write slot.
    """
    parts: list[str] = []
    substituted: list[int] = []
    for seg in spec.key_pattern.segments:
        if seg.kind == PLACEHOLDER:
            layer_value = layers.get(seg.text, "")
            if layer_value:
                substituted.append(len(parts))
                parts.append(layer_value)
            else:
                parts.append("*")
        else:
            parts.append(seg.render())
    concrete_key = "/".join(parts)
    text = store.lookup(concrete_key)
    if text is None and substituted:
        fallback = list(parts)
        for pos in reversed(substituted):
            fallback[pos] = "*"
            text = store.lookup("/".join(fallback))
            if text is not None:
                break
    if text is None:
        text = spec.default_value
    return concrete_key, from_text(spec.type_name, text)


class ContextualValue:
    """One contextual value: a cached, context-dependent typed variable.

    `slots` remembers the value seen or written for every concrete key this
    value has visited; `cache` is what `read` returns, wait-free.
    """

    def __init__(self, spec: CVSpec):
        self.spec = spec
        self.slots: dict[str, Value] = {}
        self.current_key: str = "/".join(
            "*" if seg.kind == PLACEHOLDER else seg.render()
            for seg in spec.key_pattern.segments
        )
        self.cache: Value = from_text(spec.type_name, spec.default_value)
        self.activated: bool = False

    def read(self) -> Value:
        return self.cache

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"<ContextualValue {self.spec.layer_name} "
            f"{self.current_key}={self.cache!r}>"
        )


Activation = Union[tuple[str, str], ContextualValue]

Hook = Callable[[str, str, str], None]


class Context:
    """Per-thread subject: active layers, observers, update order, hooks."""

    def __init__(self, order: UpdateOrder, store: ConfigStore = EMPTY_STORE):
        self.order = order
        self.store = store
        self.layers: dict[str, str] = {}
        self.scope_stack: list[dict[str, str]] = []
        self._observers: dict[str, ContextualValue] = {}
        self._hooks: dict[str, list[Hook]] = {}
        self._index: dict[str, int] = {
            s.layer_name: i for i, s in enumerate(order.specs)
        }
        self._consumers: dict[str, list[int]] = {}
        for i, s in enumerate(order.specs):
            for dep in s.dependencies:
                self._consumers.setdefault(dep, []).append(i)
        for indices in self._consumers.values():
            indices.sort()

    # -- registration ----------------------------------------------------

    def register(self, cv: ContextualValue) -> None:
        """Attach a value as the observer for its layer and initialize it."""
        layer = cv.spec.layer_name
        if layer not in self._index:
            raise ContextError(
                f"spec for layer {layer!r} is not part of this context's order"
            )
        owner = self._observers.get(layer)
        if owner is not None and owner is not cv:
            raise ContextError(f"layer {layer!r} already has a contextual value")
        self._observers[layer] = cv
        self._refresh(cv)

    def cv(self, layer_name: str) -> ContextualValue:
        """The registered value providing `layer_name`."""
        try:
            return self._observers[layer_name]
        except KeyError:
            raise ContextError(f"no contextual value for layer {layer_name!r}") from None

    # -- synchronization operations ---------------------------------------

    def activate(self, cv: ContextualValue) -> None:
        """Publish the value's cache as its layer and update dependents."""
        if self._observers.get(cv.spec.layer_name) is not cv:
            self.register(cv)
        cv.activated = True
        changed: dict[str, tuple[str, str]] = {}
        pending: list[int] = []
        queued: set[int] = set()
        self._set_layer(cv.spec.layer_name, to_text(cv.cache), changed, pending, queued)
        self._propagate(changed, {self._index[cv.spec.layer_name]}, pending, queued)

    def deactivate(self, cv: ContextualValue) -> None:
        """Withdraw the value's layer; later assignments stop propagating."""
        if not cv.activated:
            raise ContextError(
                f"contextual value for layer {cv.spec.layer_name!r} is not activated"
            )
        cv.activated = False
        changed: dict[str, tuple[str, str]] = {}
        pending: list[int] = []
        queued: set[int] = set()
        self._set_layer(cv.spec.layer_name, "", changed, pending, queued)
        self._propagate(changed, {self._index[cv.spec.layer_name]}, pending, queued)

    def assign(self, cv: ContextualValue, value: Value) -> None:
        """Write the value into its current slot; active layers follow."""
        value = coerce(cv.spec.type_name, value)
        text = to_text(value)
        self.store = self.store.set(cv.current_key, text)
        cv.slots[cv.current_key] = value
        cv.cache = value
        if not cv.activated:
            return
        changed: dict[str, tuple[str, str]] = {}
        pending: list[int] = []
        queued: set[int] = set()
        self._set_layer(cv.spec.layer_name, text, changed, pending, queued)
        origin = {self._index[cv.spec.layer_name]} if cv.spec.layer_name in self._index else set()
        self._propagate(changed, origin, pending, queued)

    def activate_layer(self, name: str, value: str) -> None:
        """Activate a plain named layer (no contextual value behind it).

        Layers provided by a registered contextual value are driven through
        that value; overriding them by name would leave the layer and the
        value's cache in contradiction.
        """
        self._guard_plain(name)
        changed: dict[str, tuple[str, str]] = {}
        pending: list[int] = []
        queued: set[int] = set()
        self._set_layer(name, value, changed, pending, queued)
        self._propagate(changed, set(), pending, queued)

    def deactivate_layer(self, name: str) -> None:
        self.activate_layer(name, "")

    def _guard_plain(self, name: str) -> None:
        if name in self._observers:
            raise ContextError(
                f"layer {name!r} is provided by a contextual value; "
                "activate/assign that value instead"
            )

    @contextmanager
    def scope(self, *activations: Activation):
        """Dynamically scoped activation: apply, run, restore (LIFO)."""
        pairs: list[tuple[str, str]] = []
        for item in activations:
            if isinstance(item, ContextualValue):
                pairs.append((item.spec.layer_name, to_text(item.cache)))
            else:
                name, value = item
                self._guard_plain(name)
                pairs.append((name, value))
        snapshot = {}
        for name, _ in pairs:
            if name not in snapshot:
                snapshot[name] = self.layers.get(name, "")
        self.scope_stack.append(snapshot)
        try:
            self._apply_layer_values(pairs)
            yield self
        finally:
            self.scope_stack.pop()
            self._apply_layer_values(list(snapshot.items()))

    def with_scope(self, activations: Iterable[Activation], body: Callable[[], None]):
        """Run `body` inside `scope(*activations)`; restore even on error."""
        with self.scope(*activations):
            return body()

    def sync(self, handle: StoreHandle) -> None:
        """Refresh every contextual value from the persistent store, in order.

        Equivalent to a correctly ordered assignment of every value: each one
        re-evaluates under the current layers and, when activated, refreshes
        its layer before dependents are processed.  Unpersisted slot writes
        are discarded; the file is the truth at a synchronization point.
        """
        new_store, _ = handle.get()
        self.store = new_store
        for cv in self._observers.values():
            cv.slots.clear()
        changed: dict[str, tuple[str, str]] = {}
        pending = list(range(len(self.order.specs)))
        self._propagate(changed, set(), pending, set(pending))

    # -- introspection -----------------------------------------------------

    def active_layers(self) -> dict[str, str]:
        """Snapshot of all layers with a non-empty value."""
        return {name: value for name, value in self.layers.items() if value}

    def register_hook(self, layer_name: str, callback: Hook) -> None:
        """Run `callback(layer, old, new)` whenever that layer's value moves.

        Hooks across layers fire in update-order sequence; a hook error
        aborts the remaining hooks and surfaces to the caller.
        """
        self._hooks.setdefault(layer_name, []).append(callback)

    # -- internals ----------------------------------------------------------

    def _refresh(self, cv: ContextualValue) -> None:
        concrete_key, value = evaluate(cv.spec, self.layers, self.store)
        cv.current_key = concrete_key
        cv.slots[concrete_key] = value
        cv.cache = value

    def _set_layer(
        self,
        name: str,
        value: str,
        changed: dict[str, tuple[str, str]],
        pending: list[int],
        queued: set[int],
    ) -> None:
        old = self.layers.get(name, "")
        if value == old:
            return
        if value == "":
            self.layers.pop(name, None)  # empty means inactive; keep map tidy
        else:
            self.layers[name] = value
        first_old = changed[name][0] if name in changed else old
        if first_old == value:
            changed.pop(name, None)
        else:
            changed[name] = (first_old, value)
        for idx in self._consumers.get(name, ()):
            if idx not in queued:
                queued.add(idx)
                heapq.heappush(pending, idx)

    def _apply_layer_values(self, pairs: list[tuple[str, str]]) -> None:
        changed: dict[str, tuple[str, str]] = {}
        pending: list[int] = []
        queued: set[int] = set()
        for name, value in pairs:
            self._set_layer(name, value, changed, pending, queued)
        self._propagate(changed, set(), pending, queued)

    def _propagate(
        self,
        changed: dict[str, tuple[str, str]],
        updated: set[int],
        pending: list[int],
        queued: set[int],
    ) -> None:
        """Re-evaluate affected values in topological position order.

        Revisiting an index already updated in this pass means a dependency
        cycle escaped static validation; that is a run-time error.
        """
        heapq.heapify(pending)
        while pending:
            idx = heapq.heappop(pending)
            queued.discard(idx)
            spec = self.order.specs[idx]
            if idx in updated:
                raise PropagationCycleError(spec.layer_name)
            updated.add(idx)
            cv = self._observers.get(spec.layer_name)
            if cv is None:
                continue
            self._refresh(cv)
            if cv.activated:
                self._set_layer(
                    spec.layer_name, to_text(cv.cache), changed, pending, queued
                )
        self._fire_hooks(changed)

    def _fire_hooks(self, changed: dict[str, tuple[str, str]]) -> None:
        if not changed:
            return
        def position(name: str):
            return (self._index.get(name, len(self._index)), name)
        for name in sorted(changed, key=position):
            old, new = changed[name]
            for callback in self._hooks.get(name, ()):
                callback(name, old, new)


def build_context(store: ConfigStore) -> Context:
    """Context over all specs in `store`, with one registered value each."""
    from .spec import extract_specs, make_update_order

    order = make_update_order(extract_specs(store))
    ctx = Context(order, store)
    for spec in order.specs:
        ctx.register(ContextualValue(spec))
    return ctx
