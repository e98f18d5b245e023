"""Key-value configuration store: parse, hold, merge, and persist `.ecf` files.

One text format serves both plain configuration and contextual value
specifications:

    # comment lines and blank lines are ignored
    path/key = value              entry (config)
    [some/key/%place%]            opens a specification section
    type := string                property of the most recent section

Keys are `/`-separated paths.  A segment is a literal, the wildcard `*`, or a
placeholder `%name%`.  Placeholders are only legal in section keys.  Values
run to end of line; there are no escape sequences and no multi-line values.
Duplicate entry keys and duplicate section keys are parse errors rather than
last-wins, because silent shadowing hides context bugs.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional, Union

from .errors import MergeConflictError, ParseError, StoreError

LITERAL = "literal"
WILDCARD = "wildcard"
PLACEHOLDER = "placeholder"

# banned inside any segment; ':' is included so `key = value` lines can never
# be confused with `name := value` property lines
_BANNED_CHARS = set("/[]:=")


@dataclass(frozen=True)
class Segment:
    kind: str  # LITERAL | WILDCARD | PLACEHOLDER
    text: str  # literal text or placeholder name; "*" for the wildcard

    def render(self) -> str:
        if self.kind == PLACEHOLDER:
            return f"%{self.text}%"
        return self.text


@dataclass(frozen=True)
class KeyPath:
    """Hierarchical name of a config entry or contextual value."""

    segments: tuple[Segment, ...]

    @classmethod
    def parse(cls, text: str, allow_placeholders: bool = True) -> "KeyPath":
        if not text:
            raise ParseError("empty key")
        segments = []
        for raw in text.split("/"):
            if raw != raw.strip():
                raise ParseError(f"whitespace at segment edge in key {text!r}")
            if not raw:
                raise ParseError(f"empty segment in key {text!r}")
            if raw == "*":
                segments.append(Segment(WILDCARD, "*"))
                continue
            if raw.startswith("%") or raw.endswith("%"):
                name = raw[1:-1]
                if not (raw.startswith("%") and raw.endswith("%")) or not name:
                    raise ParseError(f"malformed placeholder {raw!r} in key {text!r}")
                if "%" in name or any(c in _BANNED_CHARS for c in name):
                    raise ParseError(f"malformed placeholder {raw!r} in key {text!r}")
                if not allow_placeholders:
                    raise ParseError(
                        f"placeholder {raw!r} not permitted in a configuration key"
                    )
                segments.append(Segment(PLACEHOLDER, name))
                continue
            if "%" in raw:
                raise ParseError(f"stray '%' in key segment {raw!r}")
            if any(c in _BANNED_CHARS for c in raw):
                raise ParseError(f"illegal character in key segment {raw!r}")
            segments.append(Segment(LITERAL, raw))
        return cls(tuple(segments))

    def render(self) -> str:
        return "/".join(seg.render() for seg in self.segments)

    def placeholder_names(self) -> list[str]:
        return [s.text for s in self.segments if s.kind == PLACEHOLDER]

    def literal_segments(self) -> list[str]:
        return [s.text for s in self.segments if s.kind == LITERAL]

    def has_placeholders(self) -> bool:
        return any(s.kind == PLACEHOLDER for s in self.segments)

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.render()


@dataclass(frozen=True)
class ConfigEntry:
    key: KeyPath
    value: str


@dataclass
class SpecSection:
    key: KeyPath
    properties: dict[str, str] = field(default_factory=dict)


Item = Union[ConfigEntry, SpecSection]


class ConfigStore:
    """Ordered entries plus specification sections; the persistent truth.

    Instances are treated as immutable once handed out: mutating operations
    return a new store.  Iteration order equals file order, which makes
    serialization round-trip stable.
    """

    def __init__(self, items: Optional[list[Item]] = None):
        self._items: tuple[Item, ...] = tuple(items or ())
        self._entries: dict[str, str] = {}
        for item in self._items:
            if isinstance(item, ConfigEntry):
                rendered = item.key.render()
                if rendered in self._entries:
                    raise ParseError(f"duplicate key {rendered!r}")
                self._entries[rendered] = item.value

    @property
    def items(self) -> tuple[Item, ...]:
        return self._items

    @property
    def entries(self) -> Mapping[str, str]:
        return self._entries

    @property
    def specs(self) -> list[SpecSection]:
        return [i for i in self._items if isinstance(i, SpecSection)]

    def lookup(self, key: str) -> Optional[str]:
        """Exact rendered-string match; absent is a normal result."""
        return self._entries.get(key)

    def set(self, key: str, value: str) -> "ConfigStore":
        """Return a store with `key` set to `value` (replaced or appended)."""
        path = KeyPath.parse(key, allow_placeholders=False)
        rendered = path.render()
        if "\n" in value:
            raise StoreError("entry values must be single-line")
        items = list(self._items)
        for i, item in enumerate(items):
            if isinstance(item, ConfigEntry) and item.key.render() == rendered:
                items[i] = ConfigEntry(item.key, value)
                return ConfigStore(items)
        items.append(ConfigEntry(path, value))
        return ConfigStore(items)

    def remove(self, key: str) -> "ConfigStore":
        items = [
            item
            for item in self._items
            if not (isinstance(item, ConfigEntry) and item.key.render() == key)
        ]
        return ConfigStore(items)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfigStore):
            return NotImplemented
        return self._items == other._items

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self._items)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        n_e = len(self._entries)
        n_s = len(self.specs)
        return f"<ConfigStore {n_e} entries, {n_s} specs>"


EMPTY_STORE = ConfigStore()


def parse_config(text: str) -> ConfigStore:
    """Parse full file contents into a ConfigStore.

    Line grammar: `#` comments, `[key]` sections, `name := value` properties,
    `key = value` entries split at the first `=` not preceded by `:`.
    """
    items: list[Item] = []
    current: Optional[SpecSection] = None
    seen_entries: set[str] = set()
    seen_sections: set[str] = set()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ParseError(f"malformed section line {line!r}", line_no)
            key_text = line[1:-1].strip()
            try:
                key = KeyPath.parse(key_text)
            except ParseError as exc:
                raise ParseError(str(exc), line_no) from None
            rendered = key.render()
            if rendered in seen_sections:
                raise ParseError(f"duplicate section {rendered!r}", line_no)
            seen_sections.add(rendered)
            current = SpecSection(key)
            items.append(current)
            continue
        # The first '=' decides the line kind: preceded by ':' it assigns a
        # section property, otherwise it introduces a config entry.
        eq = line.find("=")
        if eq < 0:
            raise ParseError(f"cannot parse line {line!r}", line_no)
        if eq > 0 and line[eq - 1] == ":":
            if current is None:
                raise ParseError("':=' property before any section", line_no)
            name = line[: eq - 1].strip()
            value = line[eq + 1 :].strip()
            if not name:
                raise ParseError("property line with empty name", line_no)
            if name in current.properties:
                raise ParseError(
                    f"duplicate property {name!r} in section "
                    f"{current.key.render()!r}",
                    line_no,
                )
            current.properties[name] = value
            continue
        key_text = line[:eq].strip()
        value = line[eq + 1 :].strip()
        try:
            key = KeyPath.parse(key_text, allow_placeholders=False)
        except ParseError as exc:
            raise ParseError(str(exc), line_no) from None
        rendered = key.render()
        if rendered in seen_entries:
            raise ParseError(f"duplicate key {rendered!r}", line_no)
        seen_entries.add(rendered)
        items.append(ConfigEntry(key, value))

    return ConfigStore(items)


def serialize_config(store: ConfigStore) -> str:
    """Emit the store in canonical text form, in stored order.

    parse_config(serialize_config(s)) == s for every store; the text is also
    byte-stable for files already in canonical form.
    """
    lines: list[str] = []
    for item in store:
        if isinstance(item, ConfigEntry):
            k = item.key.render()
            lines.append(f"{k} = {item.value}" if item.value else f"{k} =")
        else:
            lines.append(f"[{item.key.render()}]")
            for name, value in item.properties.items():
                lines.append(f"{name} := {value}" if value else f"{name} :=")
    return "\n".join(lines) + "\n" if lines else ""


def lookup_raw(store: ConfigStore, key: str) -> Optional[str]:
    """Exact rendered-key lookup; wildcard matching is the runtime's job."""
    return store.lookup(key)


def three_way_merge(
    base: ConfigStore, ours: ConfigStore, theirs: ConfigStore
) -> ConfigStore:
    """Reconcile concurrent edits key by key.

    Per key: an unchanged side yields to the other; identical changes agree;
    diverging changes conflict.  Additions and deletions are transitions
    to/from absent.  Sections merge with the same rule at whole-section
    granularity.
    """
    conflicts: list[str] = []

    def resolve(key: str, b, o, t):
        if o == b:
            return t
        if t == b:
            return o
        if o == t:
            return o
        conflicts.append(key)
        return None

    merged_entries: dict[str, Optional[str]] = {}
    all_keys = list(base.entries)
    all_keys += [k for k in ours.entries if k not in base.entries]
    all_keys += [
        k for k in theirs.entries if k not in base.entries and k not in ours.entries
    ]
    for key in all_keys:
        merged_entries[key] = resolve(
            key, base.lookup(key), ours.lookup(key), theirs.lookup(key)
        )

    def sections_by_key(store: ConfigStore) -> dict[str, SpecSection]:
        return {s.key.render(): s for s in store.specs}

    b_secs, o_secs, t_secs = (
        sections_by_key(base),
        sections_by_key(ours),
        sections_by_key(theirs),
    )
    sec_keys = list(b_secs)
    sec_keys += [k for k in o_secs if k not in b_secs]
    sec_keys += [k for k in t_secs if k not in b_secs and k not in o_secs]
    merged_secs: dict[str, Optional[SpecSection]] = {}
    for key in sec_keys:
        merged_secs[key] = resolve(key, b_secs.get(key), o_secs.get(key), t_secs.get(key))

    if conflicts:
        raise MergeConflictError(conflicts)

    # Base order first, then additions sorted by key so the result does not
    # depend on which side is called "ours".
    items: list[Item] = []
    emitted_entries: set[str] = set()
    emitted_secs: set[str] = set()
    for item in base:
        if isinstance(item, ConfigEntry):
            key = item.key.render()
            value = merged_entries[key]
            emitted_entries.add(key)
            if value is not None:
                items.append(ConfigEntry(item.key, value))
        else:
            key = item.key.render()
            section = merged_secs[key]
            emitted_secs.add(key)
            if section is not None:
                items.append(SpecSection(section.key, dict(section.properties)))
    added_entries = sorted(
        k for k, v in merged_entries.items() if v is not None and k not in emitted_entries
    )
    for key in added_entries:
        items.append(ConfigEntry(KeyPath.parse(key, allow_placeholders=False),
                                 merged_entries[key]))
    added_secs = sorted(
        k for k, s in merged_secs.items() if s is not None and k not in emitted_secs
    )
    for key in added_secs:
        section = merged_secs[key]
        items.append(SpecSection(section.key, dict(section.properties)))
    return ConfigStore(items)


_UNSET = object()


class StoreHandle:
    """Single-owner handle over one `.ecf` file (or a directory of them).

    `get` re-parses only when the modification token (mtime, size) moved;
    `set` reconciles concurrent writers with a three-way merge and writes
    atomically (temp file + rename).  Distinct handles over the same file
    coordinate only through that merge-on-set protocol.
    """

    def __init__(self, path, transport=None):
        self.path = Path(path)
        self.transport = transport  # needs .publish_change(parent_path)
        self.last_loaded: ConfigStore = EMPTY_STORE
        self.last_stamp = _UNSET

    def _stat_token(self):
        try:
            if self.path.is_dir():
                token = []
                for child in sorted(self.path.glob("*.ecf")):
                    st = child.stat()
                    token.append((child.name, st.st_mtime_ns, st.st_size))
                return ("dir", tuple(token))
            st = self.path.stat()
            return (st.st_mtime_ns, st.st_size)
        except FileNotFoundError:
            return None

    def _read_text(self) -> str:
        if self.path.is_dir():
            parts = []
            for child in sorted(self.path.glob("*.ecf")):
                parts.append(child.read_text(encoding="utf-8"))
            return "".join(parts)
        try:
            return self.path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return ""

    def get(self) -> tuple[ConfigStore, bool]:
        """Parse the file if it changed; otherwise return the cached store."""
        token = self._stat_token()
        if self.last_stamp is not _UNSET and token == self.last_stamp:
            return self.last_loaded, False
        store = parse_config(self._read_text())
        self.last_loaded = store
        self.last_stamp = token
        return store, True

    def set(self, store: ConfigStore) -> None:
        """Persist `store`, merging in concurrent on-disk changes first."""
        if self.path.is_dir():
            raise StoreError("cannot write through a directory handle")
        token = self._stat_token()
        to_write = store
        if token != self.last_stamp:
            theirs = parse_config(self._read_text())
            to_write = three_way_merge(self.last_loaded, store, theirs)
        self._write_atomic(serialize_config(to_write))
        self.last_loaded = to_write
        self.last_stamp = self._stat_token()
        if self.transport is not None:
            self.transport.publish_change(str(self.path))

    def _write_atomic(self, text: str) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(
            dir=self.path.parent, prefix=f".{self.path.name}.", suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, self.path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise


# spec-facing aliases matching the persistence vocabulary
def kdb_get(handle: StoreHandle) -> tuple[ConfigStore, bool]:
    return handle.get()


def kdb_set(handle: StoreHandle, store: ConfigStore) -> None:
    handle.set(store)
