"""Category hierarchy with visual genus/differentia definitions.

A hierarchy is a forest of named categories. Every node carries two pieces of
visual-property text: the genus (what it shares with its parent's kind) and
the differentia (what separates it from its siblings). Nodes are addressed by
conceptual identifiers such as "1-1" or "2-5-3": dash-joined 1-based child
positions, derived from tree position and never stored independently of it.

The file format is JSON, one document per campaign:

    {"roots": [{"id": "1", "name": "Bird", "genus": "...", "differentia": "...",
                "provenance": "...", "children": [...]}]}

``docs/hierarchy.schema.json`` holds the formal schema; the parser enforces it
and reports every violation at once rather than stopping at the first.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import (
    HierarchyParseError,
    HierarchyValidationError,
    NodeNotFoundError,
    Violation,
)

_NODE_FIELDS = {"id", "name", "genus", "differentia", "provenance", "children"}


@dataclass(frozen=True, order=True)
class ConceptId:
    """Positional identifier: "2-5-3" is the third child of the fifth child of root 2."""

    path: tuple[int, ...]

    def __post_init__(self):
        if not self.path or any(type(i) is not int or i < 1 for i in self.path):
            raise ValueError(f"concept id path must be non-empty 1-based integers: {self.path!r}")

    @classmethod
    def parse(cls, text: str) -> "ConceptId":
        parts = text.split("-")
        # reject leading zeros and signs so parse(render(x)) == x is the only accepted spelling
        if not all(p.isdigit() and str(int(p)) == p and int(p) >= 1 for p in parts):
            raise ValueError(f"malformed concept id: {text!r}")
        return cls(tuple(int(p) for p in parts))

    def render(self) -> str:
        return "-".join(str(i) for i in self.path)

    @property
    def depth(self) -> int:
        return len(self.path)

    @property
    def is_root(self) -> bool:
        return len(self.path) == 1

    def parent(self) -> "ConceptId | None":
        return ConceptId(self.path[:-1]) if len(self.path) > 1 else None

    def child(self, index: int) -> "ConceptId":
        return ConceptId(self.path + (index,))

    def is_ancestor_of(self, other: "ConceptId") -> bool:
        """Strict ancestry: a proper prefix of ``other``."""
        return len(self.path) < len(other.path) and other.path[: len(self.path)] == self.path

    def prefixes(self) -> tuple["ConceptId", ...]:
        """Every prefix id from the root down to (and including) this id."""
        return tuple(ConceptId(self.path[:k]) for k in range(1, len(self.path) + 1))

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class VisualCategory:
    """One node: a name plus the genus/differentia texts that define it visually.

    ``genus`` states the properties shared with the parent's kind; ``differentia``
    states what distinguishes this node from its siblings and is the text behind
    the node's yes/no question. ``provenance`` is free-text lineage (for example
    a knowledge-base reference) and carries no semantics.
    """

    id: ConceptId
    name: str
    genus: str
    differentia: str
    children: tuple["VisualCategory", ...] = ()
    provenance: str = ""

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class Hierarchy:
    """Immutable forest of VisualCategory nodes indexed by ConceptId."""

    roots: tuple[VisualCategory, ...]
    index: dict[ConceptId, VisualCategory] = field(compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, cid: ConceptId) -> bool:
        return cid in self.index

    def __iter__(self):
        """Document-order walk over every node."""
        stack = list(reversed(self.roots))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def node(self, cid: ConceptId) -> VisualCategory:
        try:
            return self.index[cid]
        except KeyError:
            raise NodeNotFoundError(f"no node with id {cid.render()!r}") from None

    def ancestors(self, cid: ConceptId) -> tuple[VisualCategory, ...]:
        """Nodes above ``cid``, root first, excluding ``cid`` itself."""
        self.node(cid)
        return tuple(self.index[p] for p in cid.prefixes()[:-1])

    def path_nodes(self, cid: ConceptId) -> tuple[VisualCategory, ...]:
        """Nodes from the root down to and including ``cid``."""
        self.node(cid)
        return tuple(self.index[p] for p in cid.prefixes())

    def leaves(self) -> tuple[VisualCategory, ...]:
        return tuple(n for n in self if n.is_leaf)


def parse_hierarchy(document: str) -> Hierarchy:
    """Parse and validate a hierarchy document.

    Raises HierarchyParseError for malformed syntax (with line/column) and
    HierarchyValidationError listing every invariant violation otherwise.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise HierarchyParseError(
            f"invalid document at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    return hierarchy_from_document(doc)


def hierarchy_from_document(doc: object) -> Hierarchy:
    """Build a Hierarchy from already-deserialized document data."""
    violations: list[Violation] = []
    roots: list[VisualCategory] = []

    if not isinstance(doc, dict) or set(doc) != {"roots"} or not isinstance(doc.get("roots"), list):
        violations.append(
            Violation("schema", "$", 'document must be an object with exactly one key "roots" (an array)')
        )
    else:
        seen: dict[ConceptId, str] = {}
        for pos, raw in enumerate(doc["roots"], start=1):
            node = _build_node(raw, ConceptId((pos,)), seen, violations)
            if node is not None:
                roots.append(node)

    if violations:
        raise HierarchyValidationError(violations)

    index: dict[ConceptId, VisualCategory] = {}
    for root in roots:
        _index_into(root, index)
    return Hierarchy(roots=tuple(roots), index=index)


def _build_node(
    raw: object,
    expected: ConceptId,
    seen: dict[ConceptId, str],
    violations: list[Violation],
) -> VisualCategory | None:
    locus = expected.render()
    if not isinstance(raw, dict):
        violations.append(Violation("schema", locus, "node must be an object"))
        return None

    unknown = set(raw) - _NODE_FIELDS
    if unknown:
        violations.append(Violation("schema", locus, f"unknown field(s): {sorted(unknown)}"))

    for name, required in (("id", True), ("name", True), ("genus", False), ("differentia", True)):
        if name not in raw:
            if required:
                violations.append(Violation("schema", locus, f'missing field "{name}"'))
        elif not isinstance(raw[name], str):
            violations.append(Violation("schema", locus, f'field "{name}" must be a string'))
    if "provenance" in raw and not isinstance(raw["provenance"], str):
        violations.append(Violation("schema", locus, 'field "provenance" must be a string'))

    declared: ConceptId | None = None
    raw_id = raw.get("id")
    if isinstance(raw_id, str):
        try:
            declared = ConceptId.parse(raw_id)
        except ValueError:
            violations.append(Violation("schema", locus, f"malformed id {raw_id!r}"))
    if declared is not None:
        if declared != expected:
            violations.append(
                Violation(
                    "id-position-mismatch",
                    locus,
                    f"declared id {declared.render()!r} does not match tree position {expected.render()!r}",
                )
            )
        if declared in seen:
            violations.append(
                Violation("duplicate-id", locus, f"id {declared.render()!r} already used at {seen[declared]}")
            )
        else:
            seen[declared] = locus

    name = raw.get("name") if isinstance(raw.get("name"), str) else ""
    if "name" in raw and isinstance(raw["name"], str) and not raw["name"].strip():
        violations.append(Violation("schema", locus, "name must be non-empty"))

    genus = raw.get("genus") if isinstance(raw.get("genus"), str) else ""
    differentia = raw.get("differentia") if isinstance(raw.get("differentia"), str) else ""
    if "differentia" in raw and isinstance(raw["differentia"], str) and not differentia.strip():
        violations.append(
            Violation("empty-differentia", locus, "differentia must be non-empty (it is the node's question text)")
        )
    if not expected.is_root and not genus.strip():
        violations.append(
            Violation("empty-genus", locus, "non-root nodes must state the genus shared with the parent")
        )

    children_raw = raw.get("children", [])
    children: list[VisualCategory] = []
    if not isinstance(children_raw, list):
        violations.append(Violation("schema", locus, 'field "children" must be an array'))
    else:
        for pos, child_raw in enumerate(children_raw, start=1):
            child = _build_node(child_raw, expected.child(pos), seen, violations)
            if child is not None:
                children.append(child)

    return VisualCategory(
        id=expected,
        name=name,
        genus=genus,
        differentia=differentia,
        children=tuple(children),
        provenance=raw.get("provenance", "") if isinstance(raw.get("provenance"), str) else "",
    )


def _index_into(node: VisualCategory, index: dict[ConceptId, VisualCategory]) -> None:
    index[node.id] = node
    for child in node.children:
        _index_into(child, index)


def to_document(h: Hierarchy) -> dict:
    """Serialize back to document data; parse(to_document(h)) reproduces ``h``."""

    def node_doc(n: VisualCategory) -> dict:
        doc: dict = {
            "id": n.id.render(),
            "name": n.name,
            "genus": n.genus,
            "differentia": n.differentia,
        }
        if n.provenance:
            doc["provenance"] = n.provenance
        doc["children"] = [node_doc(c) for c in n.children]
        return doc

    return {"roots": [node_doc(r) for r in h.roots]}


def node_lookup(h: Hierarchy, cid: ConceptId) -> VisualCategory:
    return h.node(cid)


def ancestors(h: Hierarchy, cid: ConceptId) -> tuple[VisualCategory, ...]:
    return h.ancestors(cid)


def leaves(h: Hierarchy) -> tuple[VisualCategory, ...]:
    return h.leaves()
