"""Knowledge-graph value type: typed entity assertions plus provenance-tagged
triples, with deterministic merge and byte-exact canonical serialization.

Graphs are values. They are built from record streams or per-article
fragments, merged with order-insensitive set semantics, and never mutated
afterwards.

Record file format (UTF-8, tab-separated, one record per line):

    E<TAB>entity<TAB>class<TAB>article_id
    T<TAB>subject<TAB>predicate<TAB>object<TAB>article_id

Entity fields may contain spaces; class, predicate, and article_id are
whitespace-free tokens.
"""

from dataclasses import dataclass, field

__all__ = [
    "EntityAssertion",
    "TripleAssertion",
    "KnowledgeGraph",
    "GraphDiagnostics",
    "normalize_entity",
    "build_graph",
    "parse_records",
    "merge",
    "instantiated_classes",
    "instantiated_properties",
    "entities_of_type",
    "canonical_serialize",
]


@dataclass(frozen=True)
class EntityAssertion:
    entity: str
    cls: str
    provenance: str


@dataclass(frozen=True)
class TripleAssertion:
    subject: str
    predicate: str
    object: str
    provenance: str


@dataclass
class GraphDiagnostics:
    malformed_lines: int = 0
    closure_violations: int = 0
    class_conflicts: int = 0
    notes: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class KnowledgeGraph:
    """Deduplicated entity-type assertions and triples.

    `entities` maps entity id to (class, provenance); `triples` maps
    (subject, predicate, object) to provenance. Content equality ignores
    batch metadata.
    """

    entities: dict[str, tuple[str, str]] = field(default_factory=dict)
    triples: dict[tuple[str, str, str], str] = field(default_factory=dict)
    batch_id: str = field(default="", compare=False)
    timestamp: int = field(default=0, compare=False)

    def entity_assertions(self) -> list[EntityAssertion]:
        return [
            EntityAssertion(e, c, p)
            for e, (c, p) in sorted(self.entities.items())
        ]

    def triple_assertions(self) -> list[TripleAssertion]:
        return [
            TripleAssertion(s, p, o, prov)
            for (s, p, o), prov in sorted(self.triples.items())
        ]

    def __len__(self) -> int:
        return len(self.entities)


def normalize_entity(surface: str) -> str:
    """Trim and collapse internal whitespace to single spaces, preserving case."""
    return " ".join(surface.split())


def build_graph(
    entity_records: list[EntityAssertion],
    triple_records: list[TripleAssertion],
    batch_id: str = "",
    timestamp: int = 0,
) -> tuple[KnowledgeGraph, GraphDiagnostics]:
    """Assemble a valid graph from raw assertion lists.

    Dedup rules keep the result independent of record order: conflicting
    class assertions keep the lexicographically smaller class (counted as a
    conflict), duplicate assertions keep the lexicographically smallest
    provenance, and triples whose endpoints carry no entity assertion are
    dropped (counted as closure violations).
    """
    diags = GraphDiagnostics()

    by_entity: dict[str, list[EntityAssertion]] = {}
    for rec in entity_records:
        by_entity.setdefault(rec.entity, []).append(rec)

    entities: dict[str, tuple[str, str]] = {}
    for entity, recs in by_entity.items():
        kept_cls = min(r.cls for r in recs)
        if any(r.cls != kept_cls for r in recs):
            diags.class_conflicts += 1
        prov = min(r.provenance for r in recs if r.cls == kept_cls)
        entities[entity] = (kept_cls, prov)

    triples: dict[tuple[str, str, str], str] = {}
    for rec in triple_records:
        if rec.subject not in entities or rec.object not in entities:
            diags.closure_violations += 1
            diags.notes.append(
                f"dropped triple with unasserted endpoint: "
                f"({rec.subject}, {rec.predicate}, {rec.object})"
            )
            continue
        key = (rec.subject, rec.predicate, rec.object)
        if key in triples:
            triples[key] = min(triples[key], rec.provenance)
        else:
            triples[key] = rec.provenance

    graph = KnowledgeGraph(
        entities=entities, triples=triples, batch_id=batch_id, timestamp=timestamp
    )
    return graph, diags


def _is_token(value: str) -> bool:
    return bool(value) and value == "".join(value.split())


def parse_record_line(line: str) -> EntityAssertion | TripleAssertion | None:
    """Parse one record line; None if it fails the record grammar."""
    fields = line.split("\t")
    if fields[0] == "E" and len(fields) == 4:
        entity = normalize_entity(fields[1])
        cls, prov = fields[2], fields[3]
        if entity and _is_token(cls) and _is_token(prov):
            return EntityAssertion(entity, cls, prov)
    elif fields[0] == "T" and len(fields) == 5:
        subj = normalize_entity(fields[1])
        pred = fields[2]
        obj = normalize_entity(fields[3])
        prov = fields[4]
        if subj and obj and _is_token(pred) and _is_token(prov):
            return TripleAssertion(subj, pred, obj, prov)
    return None


def parse_records(
    text: str, batch_id: str = "", timestamp: int = 0
) -> tuple[KnowledgeGraph, GraphDiagnostics]:
    """Parse E/T record text into a graph.

    Malformed lines are skipped and counted, never fatal. Triples may
    reference entities declared anywhere in the text; dangling triples are
    dropped and counted as closure violations.
    """
    entity_records: list[EntityAssertion] = []
    triple_records: list[TripleAssertion] = []
    malformed = 0
    for raw in text.splitlines():
        if not raw.strip():
            continue
        rec = parse_record_line(raw)
        if rec is None:
            malformed += 1
            continue
        if isinstance(rec, EntityAssertion):
            entity_records.append(rec)
        else:
            triple_records.append(rec)

    graph, diags = build_graph(
        entity_records, triple_records, batch_id=batch_id, timestamp=timestamp
    )
    diags.malformed_lines = malformed
    return graph, diags


def merge(
    g1: KnowledgeGraph, g2: KnowledgeGraph
) -> tuple[KnowledgeGraph, int]:
    """Set union of two graphs; returns the union and the number of
    entities whose class assertions conflicted. Result content is
    independent of argument order; batch metadata is taken from `g1`."""
    entity_records = [
        EntityAssertion(e, c, p)
        for g in (g1, g2)
        for e, (c, p) in g.entities.items()
    ]
    triple_records = [
        TripleAssertion(s, p, o, prov)
        for g in (g1, g2)
        for (s, p, o), prov in g.triples.items()
    ]
    merged, diags = build_graph(
        entity_records,
        triple_records,
        batch_id=g1.batch_id,
        timestamp=g1.timestamp,
    )
    return merged, diags.class_conflicts


def instantiated_classes(g: KnowledgeGraph) -> set[str]:
    """Classes with at least one entity assertion."""
    return {cls for cls, _ in g.entities.values()}


def instantiated_properties(g: KnowledgeGraph) -> set[str]:
    """Properties used by at least one triple."""
    return {pred for (_, pred, _) in g.triples}


def entities_of_type(
    g: KnowledgeGraph, class_filter: set[str]
) -> list[tuple[str, str]]:
    """All (entity, class) assertions whose class is in the filter, sorted.

    Unknown classes in the filter simply match nothing.
    """
    return sorted(
        (entity, cls)
        for entity, (cls, _) in g.entities.items()
        if cls in class_filter
    )


def canonical_serialize(g: KnowledgeGraph) -> str:
    """Byte-stable text form: sorted E records, then sorted T records, LF
    line endings. parse_records() of the output reproduces the graph."""
    e_lines = sorted(
        f"E\t{entity}\t{cls}\t{prov}"
        for entity, (cls, prov) in g.entities.items()
    )
    t_lines = sorted(
        f"T\t{s}\t{p}\t{o}\t{prov}" for (s, p, o), prov in g.triples.items()
    )
    lines = e_lines + t_lines
    return "".join(line + "\n" for line in lines)
