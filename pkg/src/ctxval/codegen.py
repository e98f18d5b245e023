"""Generate typed accessor source from contextual value specifications.

The generated package mirrors the key hierarchy: one module per top-level
path segment holds an accessor class per node (CamelCase of the literal
segments, e.g. ``person/visits`` -> ``PersonVisits``), and ``environment.py``
holds an ``Environment`` class that builds a context and registers every
value in topological order.  Placeholder segments are runtime-variable and
contribute no node.  Generation is deterministic: identical specs produce
byte-identical output.

The emitter targets Python; it is kept separate from the model so further
emitters can be added without touching hierarchy construction.
"""

from __future__ import annotations

import json
import keyword
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GenerationError
from .spec import CVSpec

GENERATED_HEADER = "# Generated by `cv gen`. Do not edit by hand.\n"


@dataclass
class GenNode:
    segment: str
    path: tuple[str, ...]
    spec: CVSpec | None = None
    children: dict[str, "GenNode"] = field(default_factory=dict)

    def walk(self):
        """Depth-first preorder over this subtree, children by name."""
        yield self
        for name in sorted(self.children):
            yield from self.children[name].walk()


@dataclass
class GenModel:
    root: GenNode
    specs: list[CVSpec]
    type_names: dict[tuple[str, ...], str]


def _camel(segment: str) -> str:
    parts = [p for p in segment.replace("-", "_").split("_") if p]
    return "".join(p[:1].upper() + p[1:] for p in parts)


def _identifier(segment: str) -> str:
    name = segment.replace("-", "_")
    if not name.isidentifier() or keyword.iskeyword(name):
        name = "_" + "".join(c if c.isalnum() or c == "_" else "_" for c in name)
    return name


def type_name_for(path: tuple[str, ...]) -> str:
    return "".join(_camel(seg) for seg in path)


def build_model(specs: list[CVSpec]) -> GenModel:
    """Arrange specs into the accessor hierarchy and name every type."""
    root = GenNode(segment="", path=())
    for spec in specs:
        literals = tuple(spec.key_pattern.literal_segments())
        if not literals:
            # values like [%lang%] with layer/name live directly under root,
            # addressed by their layer name
            literals = (spec.layer_name,)
        node = root
        for seg in literals:
            node = node.children.setdefault(
                seg, GenNode(segment=seg, path=node.path + (seg,))
            )
        if node.spec is not None:
            raise GenerationError(
                f"values {node.spec.key_pattern.render()!r} and "
                f"{spec.key_pattern.render()!r} share the accessor path "
                f"{'/'.join(literals)!r}"
            )
        node.spec = spec

    type_names: dict[tuple[str, ...], str] = {}
    seen: dict[str, tuple[str, ...]] = {}
    for node in root.walk():
        if node is root:
            continue
        name = type_name_for(node.path)
        if name in seen:
            raise GenerationError(
                f"paths {'/'.join(seen[name])!r} and {'/'.join(node.path)!r} "
                f"both generate type {name!r}"
            )
        if name == "Environment":
            raise GenerationError(
                "path {!r} collides with the generated Environment type".format(
                    "/".join(node.path)
                )
            )
        seen[name] = node.path
        type_names[node.path] = name
    return GenModel(root=root, specs=list(specs), type_names=type_names)


def _spec_literal(spec: CVSpec) -> str:
    return (
        "CVSpec(key_pattern=KeyPath.parse({pattern!r}), type_name={type_name!r}, "
        "layer_name={layer!r}, order_pref={order!r}, default_value={default!r})"
    ).format(
        pattern=spec.key_pattern.render(),
        type_name=spec.type_name,
        layer=spec.layer_name,
        order=spec.order_pref,
        default=spec.default_value,
    )


def _emit_node_class(node: GenNode, type_names: dict[tuple[str, ...], str]) -> str:
    name = type_names[node.path]
    lines = [f"class {name}:"]
    if node.spec is not None:
        pattern = node.spec.key_pattern.render()
        lines.append(f'    """Accessor for the contextual value `{pattern}`."""')
        lines.append("")
        lines.append(f"    layer_name = {node.spec.layer_name!r}")
        lines.append(f"    key_pattern = {pattern!r}")
        lines.append(f"    value_type = {node.spec.type_name!r}")
    else:
        joined = "/".join(node.path)
        lines.append(f'    """Hierarchy node for `{joined}`."""')
    lines.append("")
    lines.append("    def __init__(self, context, cvs):")
    lines.append("        self._context = context")
    if node.spec is not None:
        lines.append("        self._cv = cvs[self.layer_name]")
    for child_name in sorted(node.children):
        child = node.children[child_name]
        attr = _identifier(child_name)
        lines.append(
            f"        self.{attr} = {type_names[child.path]}(context, cvs)"
        )
    if node.spec is not None:
        lines.append("")
        lines.append("    def read(self):")
        lines.append("        return self._cv.read()")
        lines.append("")
        lines.append("    def assign(self, value):")
        lines.append("        self._context.assign(self._cv, value)")
        lines.append("")
        lines.append("    def activate(self):")
        lines.append("        self._context.activate(self._cv)")
        lines.append("")
        lines.append("    def deactivate(self):")
        lines.append("        self._context.deactivate(self._cv)")
        lines.append("")
        lines.append("    @property")
        lines.append("    def activated(self):")
        lines.append("        return self._cv.activated")
    return "\n".join(lines) + "\n"


def _emit_subtree_module(top: GenNode, type_names: dict[tuple[str, ...], str]) -> str:
    parts = [GENERATED_HEADER]
    classes = [_emit_node_class(node, type_names) for node in top.walk()]
    parts.append("\n\n".join(classes))
    return "\n".join(parts)


def _emit_environment(model: GenModel) -> str:
    lines = [GENERATED_HEADER]
    lines.append("from ctxval.runtime import Context, ContextualValue")
    lines.append("from ctxval.spec import CVSpec, make_update_order")
    lines.append("from ctxval.store import EMPTY_STORE, KeyPath")
    lines.append("")
    top_names = sorted(model.root.children)
    for seg in top_names:
        node = model.root.children[seg]
        lines.append(
            f"from .{_identifier(seg)} import {model.type_names[node.path]}"
        )
    lines.append("")
    lines.append("_SPECS = [")
    for spec in model.specs:
        lines.append(f"    {_spec_literal(spec)},")
    lines.append("]")
    lines.append("")
    lines.append("")
    lines.append("class Environment:")
    lines.append('    """Context bootstrap: every generated value, registered in update order."""')
    lines.append("")
    lines.append("    def __init__(self, handle=None, store=None):")
    lines.append("        self._handle = handle")
    lines.append("        if store is None:")
    lines.append("            store = handle.get()[0] if handle is not None else EMPTY_STORE")
    lines.append("        self._order = make_update_order(list(_SPECS))")
    lines.append("        self.context = Context(self._order, store)")
    lines.append("        cvs = {}")
    lines.append("        for spec in self._order.specs:")
    lines.append("            cv = ContextualValue(spec)")
    lines.append("            self.context.register(cv)")
    lines.append("            cvs[spec.layer_name] = cv")
    for seg in top_names:
        node = model.root.children[seg]
        lines.append(
            f"        self.{_identifier(seg)} = "
            f"{model.type_names[node.path]}(self.context, cvs)"
        )
    lines.append("")
    lines.append("    def sync(self):")
    lines.append("        if self._handle is None:")
    lines.append('            raise RuntimeError("Environment was built without a store handle")')
    lines.append("        self.context.sync(self._handle)")
    lines.append("")
    lines.append("    def activate_all(self):")
    lines.append("        for spec in self._order.specs:")
    lines.append("            self.context.activate(self.context.cv(spec.layer_name))")
    return "\n".join(lines) + "\n"


def _emit_init(model: GenModel) -> str:
    lines = [GENERATED_HEADER]
    lines.append("from .environment import Environment")
    lines.append("")
    lines.append('__all__ = ["Environment"]')
    return "\n".join(lines) + "\n"


def generate(model: GenModel, out_dir) -> dict:
    """Write the accessor package to `out_dir`; return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    for seg in sorted(model.root.children):
        node = model.root.children[seg]
        files[f"{_identifier(seg)}.py"] = _emit_subtree_module(node, model.type_names)
    files["environment.py"] = _emit_environment(model)
    files["__init__.py"] = _emit_init(model)

    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")

    manifest = {
        "values": len(model.specs),
        "types": sorted(model.type_names.values()) + ["Environment"],
        "files": sorted(files),
        "lines": sum(text.count("\n") for text in files.values()),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest
