"""Detection of GA tracker objects in snapshots of a page's JS globals.

The capture layer dumps every JavaScript context into a GlobalSnapshot:
for each global variable a shallow, depth-limited shape (methods, attributes,
primitive values). A global whose shape contains all methods and attributes
required by a library signature is a GA object; its tracker registry is then
read out into TrackerObject records carrying the per-tracker configuration.

The option key that matters is ``anonymizeIp`` — case-sensitive: a tracker is
anonymizing only when exactly that key holds boolean true.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

MAX_ATTRIBUTE_DEPTH = 3

#: Registry attribute the capture layer fills per matched global.
REGISTRY_ATTRIBUTES = {"analytics_js": "trackers", "ga_js": "accounts"}

ANONYMIZE_OPTION = "anonymizeIp"


class Library(Enum):
    ANALYTICS_JS = "analytics_js"
    GA_JS = "ga_js"


class ValueKind(Enum):
    FUNCTION = "function"
    OBJECT = "object"
    ARRAY = "array"
    PRIMITIVE = "primitive"


@dataclass(frozen=True)
class ValueShape:
    """Shallow shape of one JS value.

    ``value`` is populated for PRIMITIVE kinds only; the capture layer embeds
    primitive attribute values directly so tracker configuration is readable.
    """

    kind: ValueKind
    method_names: frozenset[str] = frozenset()
    attribute_names: frozenset[str] = frozenset()
    attributes: dict[str, "ValueShape"] = field(default_factory=dict)
    value: object = None

    def __post_init__(self) -> None:
        overlap = self.method_names & self.attribute_names
        if overlap:
            raise ValueError(f"names are both method and attribute: {sorted(overlap)}")


@dataclass(frozen=True)
class GlobalSnapshot:
    """All globals of one JS context (main frame or a third-party frame)."""

    context_id: str
    globals: dict[str, ValueShape]

    def __post_init__(self) -> None:
        if not self.context_id:
            raise ValueError("context_id must be non-empty")


@dataclass(frozen=True)
class LibrarySignature:
    library: Library
    required_methods: frozenset[str]
    required_attributes: frozenset[str]

    def __post_init__(self) -> None:
        if not (self.required_methods | self.required_attributes):
            raise ValueError("signature requires at least one method or attribute")

    def matches(self, shape: ValueShape) -> bool:
        return self.required_methods <= shape.method_names and (
            self.required_attributes <= shape.attribute_names
        )


class AnonymizeIp(Enum):
    TRUE = "true"
    FALSE = "false"
    UNSET = "unset"


def anonymize_state(config: dict[str, object]) -> AnonymizeIp:
    """Evaluate a tracker configuration. The key is case-sensitive; any
    variant spelling leaves the option unset as far as GA is concerned."""
    if ANONYMIZE_OPTION not in config:
        return AnonymizeIp.UNSET
    return AnonymizeIp.TRUE if config[ANONYMIZE_OPTION] is True else AnonymizeIp.FALSE


@dataclass(frozen=True)
class TrackerObject:
    """A configured GA tracker instance found in a snapshot."""

    source_library: Library
    name: str
    tracking_id: str | None
    config: tuple[tuple[str, object], ...]
    anonymize_ip: AnonymizeIp

    @classmethod
    def from_config(
        cls, library: Library, name: str, config: dict[str, object]
    ) -> "TrackerObject":
        tid = config.get("trackingId") or config.get("accountId")
        return cls(
            source_library=library,
            name=name,
            tracking_id=tid if isinstance(tid, str) else None,
            config=tuple(sorted(config.items(), key=lambda kv: kv[0])),
            anonymize_ip=anonymize_state(config),
        )

    def config_dict(self) -> dict[str, object]:
        return dict(self.config)

    def to_json(self) -> dict:
        return {
            "library": self.source_library.value,
            "name": self.name,
            "tracking_id": self.tracking_id,
            "config": self.config_dict(),
            "anonymize_ip": self.anonymize_ip.value,
        }


def default_signatures() -> list[LibrarySignature]:
    raw = json.loads(resources.files("checkga").joinpath("data/signatures.json").read_text())
    return [
        LibrarySignature(
            library=Library(entry["library"]),
            required_methods=frozenset(entry["methods"]),
            required_attributes=frozenset(entry["attributes"]),
        )
        for entry in raw["signatures"]
    ]


def detect_ga_objects(
    snapshot: GlobalSnapshot, signatures: list[LibrarySignature] | None = None
) -> list[tuple[str, Library]]:
    """Globals matching a library signature; first matching signature wins,
    so each global maps to at most one library."""
    if signatures is None:
        signatures = default_signatures()
    if not signatures:
        raise ValueError("signature list must be non-empty")
    found = []
    for name, shape in snapshot.globals.items():
        for sig in signatures:
            if sig.matches(shape):
                found.append((name, sig.library))
                break
    return found


@dataclass(frozen=True)
class TrackerExtraction:
    trackers: tuple[TrackerObject, ...]
    registry_missing: bool = False

    @property
    def diagnostics(self) -> list[str]:
        if self.registry_missing:
            return ["tracker registry detail missing from snapshot"]
        return []


def extract_trackers(
    global_name: str, snapshot: GlobalSnapshot, library: Library
) -> TrackerExtraction:
    """Read the matched global's tracker registry out of the snapshot.

    A snapshot without the registry detail yields no trackers plus the
    registry_missing flag — not the same thing as an empty registry.
    """
    shape = snapshot.globals[global_name]
    registry = shape.attributes.get(REGISTRY_ATTRIBUTES[library.value])
    if registry is None:
        return TrackerExtraction(trackers=(), registry_missing=True)
    trackers = []
    for idx, key in enumerate(_registry_order(registry.attributes)):
        item = registry.attributes[key]
        config = {
            attr: sub.value
            for attr, sub in item.attributes.items()
            if sub.kind is ValueKind.PRIMITIVE
        }
        raw_name = config.get("name")
        local = raw_name if isinstance(raw_name, str) and raw_name else f"t{idx}"
        trackers.append(
            TrackerObject.from_config(library, f"{snapshot.context_id}:{local}", config)
        )
    return TrackerExtraction(trackers=tuple(trackers))


def _registry_order(attrs: dict[str, ValueShape]) -> list[str]:
    def sort_key(k: str):
        return (0, int(k)) if k.isdigit() else (1, k)

    return sorted(attrs, key=sort_key)


def shape_from_json(data: object, depth: int = 0) -> ValueShape:
    """Wire format: {kind, methods:[...], attributes:{...}}.

    Attribute values may be nested shapes or bare JSON literals; literals
    become PRIMITIVE shapes carrying the value. Nesting beyond the depth
    limit is dropped.
    """
    if not isinstance(data, dict) or "kind" not in data:
        return ValueShape(kind=ValueKind.PRIMITIVE, value=data)
    attributes: dict[str, ValueShape] = {}
    if depth < MAX_ATTRIBUTE_DEPTH:
        for name, sub in data.get("attributes", {}).items():
            attributes[name] = shape_from_json(sub, depth + 1)
    return ValueShape(
        kind=ValueKind(data["kind"]),
        method_names=frozenset(data.get("methods", [])),
        attribute_names=frozenset(data.get("attributes", {})),
        attributes=attributes,
    )


def shape_to_json(shape: ValueShape) -> object:
    if shape.kind is ValueKind.PRIMITIVE and not shape.attributes and not shape.method_names:
        return shape.value
    return {
        "kind": shape.kind.value,
        "methods": sorted(shape.method_names),
        "attributes": {name: shape_to_json(sub) for name, sub in shape.attributes.items()},
    }


def snapshot_from_json(data: dict) -> GlobalSnapshot:
    return GlobalSnapshot(
        context_id=data["context_id"],
        globals={name: shape_from_json(sub) for name, sub in data.get("globals", {}).items()},
    )


def snapshot_to_json(snapshot: GlobalSnapshot) -> dict:
    return {
        "context_id": snapshot.context_id,
        "globals": {name: shape_to_json(shape) for name, shape in snapshot.globals.items()},
    }
