"""Heterogeneous process-graph types.

A record is a directed graph over material entities, tool entities and
activities. Usage edges run entity -> activity (consumption); generation
edges run activity -> entity (production). Roles and the activity ordering
are derived, not parsed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import MalformedDocument

MATERIAL_CLASSES = ("battery", "thermoelectric", "magnetic", "other")
ROLES = ("precursor", "intermediate", "product", "tool", "unconnected")


@dataclass
class EntityNode:
    id: str
    label: str
    kind: str  # "material" | "tool"
    attributes: dict[str, str] = field(default_factory=dict)
    role: str | None = None  # filled by assign_roles

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "kind": self.kind,
            "attributes": dict(self.attributes),
            "role": self.role,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntityNode":
        return cls(
            id=d["id"],
            label=d["label"],
            kind=d["kind"],
            attributes=dict(d.get("attributes", {})),
            role=d.get("role"),
        )


@dataclass
class ActivityNode:
    id: str
    label: str
    conditions: dict[str, str] = field(default_factory=dict)
    source_position: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "conditions": dict(self.conditions),
            "source_position": self.source_position,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ActivityNode":
        return cls(
            id=d["id"],
            label=d["label"],
            conditions=dict(d.get("conditions", {})),
            source_position=int(d.get("source_position", 0)),
        )


@dataclass
class ProcessGraph:
    """One synthesis record as a typed heterogeneous directed graph."""

    record_id: str
    doi: str = ""
    year: int | None = None
    material_class: str = "other"
    material_entities: list[EntityNode] = field(default_factory=list)
    tool_entities: list[EntityNode] = field(default_factory=list)
    activities: list[ActivityNode] = field(default_factory=list)
    usage_edges: list[tuple[str, str]] = field(default_factory=list)  # (entity, activity)
    generation_edges: list[tuple[str, str]] = field(default_factory=list)  # (activity, entity)
    ordered_activity_ids: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)  # parse-time diagnostics, not serialized

    # --- lookups -------------------------------------------------------------

    def entities(self) -> list[EntityNode]:
        return self.material_entities + self.tool_entities

    def entity_by_id(self) -> dict[str, EntityNode]:
        return {e.id: e for e in self.entities()}

    def activity_by_id(self) -> dict[str, ActivityNode]:
        return {a.id: a for a in self.activities}

    def used_by(self, activity_id: str) -> list[str]:
        """Entity ids consumed by the activity, in edge order."""
        return [e for (e, a) in self.usage_edges if a == activity_id]

    def generated_by(self, activity_id: str) -> list[str]:
        """Entity ids produced by the activity, in edge order."""
        return [e for (a, e) in self.generation_edges if a == activity_id]

    def ordered_activities(self) -> list[ActivityNode]:
        by_id = self.activity_by_id()
        return [by_id[i] for i in self.ordered_activity_ids]

    # --- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "doi": self.doi,
            "year": self.year,
            "material_class": self.material_class,
            "material_entities": [e.to_dict() for e in self.material_entities],
            "tool_entities": [e.to_dict() for e in self.tool_entities],
            "activities": [a.to_dict() for a in self.activities],
            "usage_edges": [list(e) for e in self.usage_edges],
            "generation_edges": [list(e) for e in self.generation_edges],
            "ordered_activity_ids": list(self.ordered_activity_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessGraph":
        return cls(
            record_id=d["record_id"],
            doi=d.get("doi", ""),
            year=d.get("year"),
            material_class=d.get("material_class", "other"),
            material_entities=[EntityNode.from_dict(x) for x in d.get("material_entities", [])],
            tool_entities=[EntityNode.from_dict(x) for x in d.get("tool_entities", [])],
            activities=[ActivityNode.from_dict(x) for x in d.get("activities", [])],
            usage_edges=[tuple(e) for e in d.get("usage_edges", [])],
            generation_edges=[tuple(e) for e in d.get("generation_edges", [])],
            ordered_activity_ids=list(d.get("ordered_activity_ids", [])),
        )


def validate_graph(g: ProcessGraph) -> None:
    """Check the structural invariants; raises MalformedDocument on violation.

    - node ids unique across materials, tools and activities
    - usage edges run (material|tool) -> activity
    - generation edges run activity -> (material|tool)
    - every edge endpoint resolves to an existing node
    """
    ids: set[str] = set()
    for node in [*g.entities(), *g.activities]:
        if node.id in ids:
            raise MalformedDocument(f"{g.record_id}: duplicate node id {node.id!r}")
        ids.add(node.id)
    entity_ids = {e.id for e in g.entities()}
    activity_ids = {a.id for a in g.activities}
    for src, dst in g.usage_edges:
        if src not in entity_ids or dst not in activity_ids:
            raise MalformedDocument(
                f"{g.record_id}: usage edge ({src!r}, {dst!r}) must run entity -> activity"
            )
    for src, dst in g.generation_edges:
        if src not in activity_ids or dst not in entity_ids:
            raise MalformedDocument(
                f"{g.record_id}: generation edge ({src!r}, {dst!r}) must run activity -> entity"
            )
    positions = [a.source_position for a in g.activities]
    if len(set(positions)) != len(positions):
        raise MalformedDocument(f"{g.record_id}: duplicate activity source positions")
