import random

from kgmon.graph import (
    EntityAssertion,
    KnowledgeGraph,
    TripleAssertion,
    build_graph,
    canonical_serialize,
    entities_of_type,
    instantiated_classes,
    instantiated_properties,
    merge,
    normalize_entity,
    parse_record_line,
    parse_records,
)


def _random_graph(rng, tag="g"):
    entities = [
        EntityAssertion(
            f"e{rng.randrange(12)}",
            rng.choice("ABCD"),
            f"{tag}{rng.randrange(4)}",
        )
        for _ in range(rng.randrange(0, 15))
    ]
    names = [r.entity for r in entities] or ["e0"]
    triples = [
        TripleAssertion(
            rng.choice(names),
            rng.choice("pq"),
            rng.choice(names),
            f"{tag}{rng.randrange(4)}",
        )
        for _ in range(rng.randrange(0, 10))
    ]
    graph, _ = build_graph(entities, triples, batch_id=tag, timestamp=1)
    return graph


def test_normalize_entity():
    assert normalize_entity("  Acme   Corp \t") == "Acme Corp"
    assert normalize_entity("Acme Corp") == "Acme Corp"
    assert normalize_entity(" \t ") == ""
    assert normalize_entity("ACME") == "ACME"


def test_parse_record_line_shapes():
    rec = parse_record_line("E\t Alice  Chen\tPerson\ta1")
    assert rec == EntityAssertion("Alice Chen", "Person", "a1")
    rec = parse_record_line("T\tAlice Chen\tworksFor\tAcme  Corp\ta1")
    assert rec == TripleAssertion("Alice Chen", "worksFor", "Acme Corp", "a1")
    for bad in (
        "E\tAlice\tPerson",
        "E\tAlice\tPerson\ta1\textra",
        "E\t  \tPerson\ta1",
        "E\tAlice\tPer son\ta1",
        "E\tAlice\tPerson\ta 1",
        "T\tAlice\tworksFor\ta1",
        "T\t\tworksFor\tAcme\ta1",
        "T\tAlice\twork For\tAcme\ta1",
        "X\tAlice\tPerson\ta1",
        "garbage",
    ):
        assert parse_record_line(bad) is None


def test_parse_records_counts_and_content():
    text = (
        "E\tAlice\tPerson\ta1\n"
        "\n"
        "not a record\n"
        "E\tAcme\tOrganization\ta1\n"
        "T\tAlice\tworksFor\tAcme\ta1\n"
        "T\tAlice\tworksFor\tGhost\ta1\n"
    )
    graph, diags = parse_records(text, batch_id="b", timestamp=9)
    assert diags.malformed_lines == 1
    assert diags.closure_violations == 1
    assert any("Ghost" in note for note in diags.notes)
    assert graph.entities == {"Alice": ("Person", "a1"), "Acme": ("Organization", "a1")}
    assert graph.triples == {("Alice", "worksFor", "Acme"): "a1"}
    assert graph.batch_id == "b" and graph.timestamp == 9


def test_triple_may_precede_entity_declarations():
    text = (
        "T\tAlice\tworksFor\tAcme\ta1\n"
        "E\tAlice\tPerson\ta1\n"
        "E\tAcme\tOrganization\ta1\n"
    )
    graph, diags = parse_records(text)
    assert diags.closure_violations == 0
    assert ("Alice", "worksFor", "Acme") in graph.triples


def test_class_conflict_keeps_smaller_class():
    records = [
        EntityAssertion("Alice", "Person", "a2"),
        EntityAssertion("Alice", "Agent", "a9"),
        EntityAssertion("Alice", "Agent", "a3"),
    ]
    graph, diags = build_graph(records, [])
    assert diags.class_conflicts == 1
    assert graph.entities["Alice"] == ("Agent", "a3")


def test_duplicate_provenance_keeps_smallest():
    records = [
        EntityAssertion("Alice", "Person", "a9"),
        EntityAssertion("Alice", "Person", "a1"),
    ]
    triples = [
        TripleAssertion("Alice", "knows", "Alice", "a7"),
        TripleAssertion("Alice", "knows", "Alice", "a2"),
    ]
    graph, diags = build_graph(records, triples)
    assert diags.class_conflicts == 0
    assert graph.entities["Alice"] == ("Person", "a1")
    assert graph.triples[("Alice", "knows", "Alice")] == "a2"


def test_build_is_order_insensitive():
    rng = random.Random(11)
    for _ in range(100):
        entities = [
            EntityAssertion(f"e{rng.randrange(6)}", rng.choice("AB"), f"a{rng.randrange(3)}")
            for _ in range(rng.randrange(1, 10))
        ]
        triples = [
            TripleAssertion(f"e{rng.randrange(6)}", "p", f"e{rng.randrange(6)}", "a0")
            for _ in range(rng.randrange(0, 6))
        ]
        base, _ = build_graph(entities, triples)
        shuffled_e, shuffled_t = entities[:], triples[:]
        rng.shuffle(shuffled_e)
        rng.shuffle(shuffled_t)
        again, _ = build_graph(shuffled_e, shuffled_t)
        assert again == base


def test_merge_set_semantics():
    rng = random.Random(23)
    for _ in range(100):
        g1 = _random_graph(rng, "a")
        g2 = _random_graph(rng, "b")
        g3 = _random_graph(rng, "c")
        ab, _ = merge(g1, g2)
        ba, _ = merge(g2, g1)
        assert ab == ba
        self_merge, conflicts = merge(g1, g1)
        assert self_merge == g1
        assert conflicts == 0
        left, _ = merge(ab, g3)
        bc, _ = merge(g2, g3)
        right, _ = merge(g1, bc)
        assert left == right


def test_merge_reports_conflicts_and_keeps_metadata():
    g1, _ = build_graph([EntityAssertion("x", "B", "a1")], [], batch_id="first", timestamp=5)
    g2, _ = build_graph([EntityAssertion("x", "A", "a2")], [], batch_id="second", timestamp=6)
    merged, conflicts = merge(g1, g2)
    assert conflicts == 1
    assert merged.entities["x"] == ("A", "a2")
    assert merged.batch_id == "first" and merged.timestamp == 5


def test_instantiation_views():
    graph, _ = parse_records(
        "E\tAlice\tPerson\ta1\n"
        "E\tAcme\tCompany\ta1\n"
        "E\tBerlin\tCity\ta1\n"
        "T\tAlice\tworksFor\tAcme\ta1\n"
    )
    assert instantiated_classes(graph) == {"Person", "Company", "City"}
    assert instantiated_properties(graph) == {"worksFor"}
    assert entities_of_type(graph, {"Person", "City", "Ghost"}) == [
        ("Alice", "Person"),
        ("Berlin", "City"),
    ]
    assert entities_of_type(graph, set()) == []


def test_canonical_serialize_round_trip_and_stability():
    rng = random.Random(37)
    for _ in range(100):
        graph = _random_graph(rng)
        text = canonical_serialize(graph)
        reparsed, diags = parse_records(text)
        assert diags.malformed_lines == 0
        assert diags.closure_violations == 0
        assert reparsed == graph
        assert canonical_serialize(reparsed) == text
        lines = text.splitlines()
        assert lines == sorted(lines, key=lambda l: (l[0] != "E", l))


def test_canonical_serialize_empty():
    assert canonical_serialize(KnowledgeGraph()) == ""
    graph, _ = parse_records("")
    assert graph == KnowledgeGraph()
    assert len(graph) == 0
