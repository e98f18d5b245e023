"""Shared test utilities: an independent reference model of the runtime.

NaiveModel recomputes every contextual value from scratch after every
operation, with its own substitution and fallback code working on rendered
pattern strings.  It deliberately shares no propagation machinery with the
production runtime; agreement between the two is what the oracle-equivalence
tests check.
"""

from __future__ import annotations

import re

_PLACEHOLDER_RE = re.compile(r"%([^%/]+)%")


def substitute_pattern(pattern: str, layers: dict[str, str]) -> str:
    """Replace %name% with the active layer value, '*' otherwise."""

    def repl(match):
        value = layers.get(match.group(1), "")
        return value if value else "*"

    return _PLACEHOLDER_RE.sub(repl, pattern)


def cascade_keys(pattern: str, layers: dict[str, str]) -> list[str]:
    """All keys a lookup may consult, in order: exact first, then the
    substituted placeholder positions degraded to '*' cumulatively from the
    rightmost."""
    parts = pattern.split("/")
    segs = []
    substituted = []
    for i, part in enumerate(parts):
        m = _PLACEHOLDER_RE.fullmatch(part)
        if m:
            value = layers.get(m.group(1), "")
            if value:
                segs.append(value)
                substituted.append(i)
            else:
                segs.append("*")
        else:
            segs.append(part)
    keys = ["/".join(segs)]
    degraded = list(segs)
    for pos in reversed(substituted):
        degraded[pos] = "*"
        keys.append("/".join(degraded))
    return keys


class ModelCV:
    def __init__(self, layer_name: str, pattern: str, default: str):
        self.layer_name = layer_name
        self.pattern = pattern
        self.default = default
        self.activated = False
        self.cache = default


class NaiveModel:
    """Reference semantics: layers, entries, and full recomputation."""

    def __init__(self, ordered_specs: list[tuple[str, str, str]],
                 entries: dict[str, str]):
        # ordered_specs: (layer_name, pattern, default) already in update order
        self.cvs = [ModelCV(*t) for t in ordered_specs]
        self.by_layer = {cv.layer_name: cv for cv in self.cvs}
        self.entries = dict(entries)
        self.layers: dict[str, str] = {}
        self.recompute()

    def recompute(self) -> None:
        for cv in self.cvs:
            text = None
            for key in cascade_keys(cv.pattern, self.layers):
                if key in self.entries:
                    text = self.entries[key]
                    break
            if text is None:
                text = cv.default
            cv.cache = text
            if cv.activated:
                self.layers[cv.layer_name] = text

    def current_key(self, layer_name: str) -> str:
        return substitute_pattern(self.by_layer[layer_name].pattern, self.layers)

    # -- operations mirrored against the production runtime ---------------

    def activate(self, layer_name: str) -> None:
        cv = self.by_layer[layer_name]
        cv.activated = True
        self.layers[layer_name] = cv.cache
        self.recompute()

    def deactivate(self, layer_name: str) -> None:
        cv = self.by_layer[layer_name]
        cv.activated = False
        self.layers[layer_name] = ""
        self.recompute()

    def assign(self, layer_name: str, text: str) -> None:
        cv = self.by_layer[layer_name]
        self.entries[self.current_key(layer_name)] = text
        cv.cache = text
        if cv.activated:
            self.layers[layer_name] = text
        self.recompute()

    def set_plain(self, name: str, value: str) -> None:
        self.layers[name] = value
        self.recompute()

    def scope_enter(self, pairs: list[tuple[str, str]]) -> dict[str, str]:
        snapshot = {}
        for name, _ in pairs:
            if name not in snapshot:
                snapshot[name] = self.layers.get(name, "")
        for name, value in pairs:
            self.layers[name] = value
        self.recompute()
        return snapshot

    def scope_exit(self, snapshot: dict[str, str]) -> None:
        for name, value in snapshot.items():
            self.layers[name] = value
        self.recompute()

    def sync(self, file_entries: dict[str, str]) -> None:
        self.entries = dict(file_entries)
        self.recompute()

    def caches(self) -> dict[str, str]:
        return {cv.layer_name: cv.cache for cv in self.cvs}

    def active_layers(self) -> dict[str, str]:
        return {n: v for n, v in self.layers.items() if v}
