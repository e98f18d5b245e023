"""Contextual value specifications and their dependency order.

A specification section like

    [greeting/%language%]
    type := string
    default := Hi.

describes one contextual value.  The last literal segment of the key names
the layer the value provides (here `greeting`), unless `layer/name` renames
it.  Placeholders name the layers the value depends on.  Updates must run
providers before consumers; Kahn's algorithm computes that order, with the
optional integer `layer/order` property breaking ties among simultaneously
ready values.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .errors import CycleError, SpecError
from .store import ConfigStore, KeyPath, SpecSection

VALUE_TYPES = ("string", "long", "double", "boolean")


@dataclass(frozen=True)
class CVSpec:
    """One contextual value's specification."""

    key_pattern: KeyPath
    type_name: str = "string"
    layer_name: str = ""
    order_pref: int | None = None
    default_value: str = ""

    @property
    def dependencies(self) -> frozenset[str]:
        return frozenset(self.key_pattern.placeholder_names())


def spec_from_section(section: SpecSection) -> CVSpec:
    """Build and validate a CVSpec from one `[key]` section."""
    pattern = section.key
    rendered = pattern.render()
    props = section.properties

    type_name = props.get("type", "string")
    if type_name not in VALUE_TYPES:
        raise SpecError(
            f"unknown type {type_name!r} for {rendered!r} "
            f"(expected one of {', '.join(VALUE_TYPES)})"
        )

    layer_name = props.get("layer/name")
    if layer_name is not None:
        if "/" in layer_name or "%" in layer_name or not layer_name:
            raise SpecError(f"invalid layer/name {layer_name!r} for {rendered!r}")
    else:
        literals = pattern.literal_segments()
        if not literals:
            raise SpecError(
                f"cannot derive a layer name for {rendered!r}; set layer/name"
            )
        layer_name = literals[-1]

    order_pref = None
    if "layer/order" in props:
        try:
            order_pref = int(props["layer/order"])
        except ValueError:
            raise SpecError(
                f"layer/order for {rendered!r} must be an integer, "
                f"got {props['layer/order']!r}"
            ) from None

    spec = CVSpec(
        key_pattern=pattern,
        type_name=type_name,
        layer_name=layer_name,
        order_pref=order_pref,
        default_value=props.get("default", ""),
    )
    if layer_name in spec.dependencies:
        raise CycleError([layer_name, layer_name])
    return spec


def extract_specs(store: ConfigStore) -> list[CVSpec]:
    """One CVSpec per section, in file order; layer names must be unique."""
    specs = [spec_from_section(section) for section in store.specs]
    seen: dict[str, str] = {}
    for spec in specs:
        pattern = spec.key_pattern.render()
        if spec.layer_name in seen:
            raise SpecError(
                f"layer {spec.layer_name!r} provided by both "
                f"{seen[spec.layer_name]!r} and {pattern!r}"
            )
        seen[spec.layer_name] = pattern
    return specs


@dataclass
class DependencyGraph:
    """Provider -> consumer edges between specs; acyclic by construction.

    Placeholders that no spec provides are external layers: they resolve
    against plain named layers at run time and contribute no edge.
    """

    nodes: list[CVSpec]
    edges: set[tuple[str, str]]  # (provider layer, consumer layer)
    external_layers: set[str]

    def consumers_of(self, layer_name: str) -> list[CVSpec]:
        return [n for n in self.nodes if layer_name in n.dependencies]


def _find_cycle(nodes: list[str], succ: dict[str, list[str]]) -> list[str]:
    """Return one cycle as a closed layer-name sequence."""
    state: dict[str, int] = {}  # 0 unseen, 1 on stack, 2 done
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        state[n] = 1
        stack.append(n)
        for m in succ.get(n, ()):
            if state.get(m, 0) == 1:
                return stack[stack.index(m) :] + [m]
            if state.get(m, 0) == 0:
                found = visit(m)
                if found:
                    return found
        stack.pop()
        state[n] = 2
        return None

    for n in nodes:
        if state.get(n, 0) == 0:
            found = visit(n)
            if found:
                return found
    raise AssertionError("cycle reported but not found")


def build_dependency_graph(specs: list[CVSpec]) -> DependencyGraph:
    """Derive edges from placeholders; reject cyclic specifications."""
    providers = {s.layer_name: s for s in specs}
    if len(providers) != len(specs):
        raise SpecError("layer names must be unique across specs")
    edges: set[tuple[str, str]] = set()
    external: set[str] = set()
    succ: dict[str, list[str]] = {s.layer_name: [] for s in specs}
    for spec in specs:
        for dep in sorted(spec.dependencies):
            if dep in providers:
                edges.add((dep, spec.layer_name))
                succ[dep].append(spec.layer_name)
            else:
                external.add(dep)

    # Kahn over the provider graph just to detect cycles early.
    indegree = {name: 0 for name in providers}
    for _, consumer in edges:
        indegree[consumer] += 1
    ready = [n for n, d in indegree.items() if d == 0]
    done = 0
    while ready:
        n = ready.pop()
        done += 1
        for m in succ[n]:
            indegree[m] -= 1
            if indegree[m] == 0:
                ready.append(m)
    if done != len(providers):
        remaining = [n for n, d in indegree.items() if d > 0]
        raise CycleError(_find_cycle(remaining, succ))

    return DependencyGraph(nodes=list(specs), edges=edges, external_layers=external)


@dataclass
class UpdateOrder:
    """Specs in a valid update order, plus preference warnings."""

    specs: list[CVSpec]
    warnings: list[str] = field(default_factory=list)

    def index_of(self, layer_name: str) -> int | None:
        for i, spec in enumerate(self.specs):
            if spec.layer_name == layer_name:
                return i
        return None


def topo_order(graph: DependencyGraph) -> UpdateOrder:
    """Kahn's algorithm with `layer/order` preferences among ready nodes.

    Ready nodes are taken by ascending order preference (absent sorts last),
    ties by layer name.  When an edge forces two preferenced layers into the
    opposite order the result is still topologically valid and one warning
    per violated pair is recorded.
    """
    specs = graph.nodes
    by_layer = {s.layer_name: s for s in specs}
    indegree = {s.layer_name: 0 for s in specs}
    succ: dict[str, list[str]] = {s.layer_name: [] for s in specs}
    for provider, consumer in sorted(graph.edges):
        indegree[consumer] += 1
        succ[provider].append(consumer)

    def rank(layer: str):
        pref = by_layer[layer].order_pref
        return (0, pref, layer) if pref is not None else (1, 0, layer)

    heap = [rank(n) for n, d in indegree.items() if d == 0]
    heapq.heapify(heap)
    ordered: list[CVSpec] = []
    while heap:
        _, _, layer = heapq.heappop(heap)
        ordered.append(by_layer[layer])
        for consumer in succ[layer]:
            indegree[consumer] -= 1
            if indegree[consumer] == 0:
                heapq.heappush(heap, rank(consumer))
    if len(ordered) != len(specs):
        raise AssertionError("graph was not acyclic")  # pragma: no cover

    position = {s.layer_name: i for i, s in enumerate(ordered)}
    warnings: list[str] = []
    preferenced = sorted(
        (s for s in specs if s.order_pref is not None),
        key=lambda s: (s.order_pref, s.layer_name),
    )
    for i, first in enumerate(preferenced):
        for second in preferenced[i + 1 :]:
            if first.order_pref >= second.order_pref:
                continue
            if position[first.layer_name] > position[second.layer_name]:
                warnings.append(
                    f"layer/order prefers {first.layer_name!r} "
                    f"(order {first.order_pref}) before {second.layer_name!r} "
                    f"(order {second.order_pref}) but dependencies force "
                    f"{second.layer_name!r} first"
                )
    return UpdateOrder(specs=ordered, warnings=warnings)


def make_update_order(specs: list[CVSpec]) -> UpdateOrder:
    """Validate specs and compute their update order in one step."""
    return topo_order(build_dependency_graph(specs))
