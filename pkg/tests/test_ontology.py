import random

import pytest

from kgmon.ontology import (
    OntologyError,
    class_depth,
    is_permissible,
    load_ontology,
)

from conftest import ONTOLOGY_TEXT


def test_load_counts_and_lookup(onto):
    assert onto.class_count == 5
    assert onto.property_count == 2
    assert set(onto.classes) == {"Person", "Organization", "Company", "Location", "City"}
    assert onto.properties["worksFor"].domain == "Person"
    assert onto.properties["worksFor"].range == "Organization"
    assert onto.ner_map == {"PERSON": "Person", "ORG": "Organization", "LOC": "Location"}


def test_comments_and_blank_lines_ignored():
    text = "\n# header\n\nCLASS A\n   \n# tail\nCLASS B SUBCLASS_OF A\n"
    onto = load_ontology(text)
    assert set(onto.classes) == {"A", "B"}
    assert onto.classes["B"].parent == "A"


def test_forward_reference_to_parent():
    onto = load_ontology("CLASS Child SUBCLASS_OF Parent\nCLASS Parent\n")
    assert onto.classes["Child"].parent == "Parent"
    assert class_depth(onto, "Child") == 1


def test_depths_along_chain():
    onto = load_ontology(
        "CLASS A\nCLASS B SUBCLASS_OF A\nCLASS C SUBCLASS_OF B\nCLASS D SUBCLASS_OF C\n"
    )
    assert [class_depth(onto, c) for c in "ABCD"] == [0, 1, 2, 3]


def test_ancestors_nearest_first(onto):
    assert onto.ancestors("Company") == ["Organization"]
    assert onto.ancestors("Person") == []
    deep = load_ontology("CLASS A\nCLASS B SUBCLASS_OF A\nCLASS C SUBCLASS_OF B\n")
    assert deep.ancestors("C") == ["B", "A"]


def test_is_subclass_reflexive_and_transitive(onto):
    assert onto.is_subclass("Company", "Company")
    assert onto.is_subclass("Company", "Organization")
    assert not onto.is_subclass("Organization", "Company")
    assert not onto.is_subclass("Person", "Organization")


def test_descendants_strict_and_sorted():
    onto = load_ontology(
        "CLASS A\nCLASS C SUBCLASS_OF A\nCLASS B SUBCLASS_OF A\nCLASS D SUBCLASS_OF B\n"
    )
    assert onto.descendants("A") == ["B", "C", "D"]
    assert onto.descendants("D") == []


def test_unknown_class_queries_raise(onto):
    with pytest.raises(OntologyError):
        onto.ancestors("Nope")
    with pytest.raises(OntologyError):
        onto.descendants("Nope")
    with pytest.raises(OntologyError):
        onto.is_subclass("Person", "Nope")
    with pytest.raises(OntologyError):
        class_depth(onto, "Nope")


def test_duplicate_declarations_rejected():
    with pytest.raises(OntologyError, match="duplicate class"):
        load_ontology("CLASS A\nCLASS A\n")
    with pytest.raises(OntologyError, match="duplicate property"):
        load_ontology("CLASS A\nPROPERTY p DOMAIN A RANGE A\nPROPERTY p DOMAIN A RANGE A\n")
    with pytest.raises(OntologyError, match="duplicate NER tag"):
        load_ontology("CLASS A\nNERMAP T A\nNERMAP T A\n")


def test_unknown_references_rejected():
    with pytest.raises(OntologyError, match="unknown parent"):
        load_ontology("CLASS A SUBCLASS_OF Ghost\n")
    with pytest.raises(OntologyError, match="unknown class"):
        load_ontology("CLASS A\nPROPERTY p DOMAIN A RANGE Ghost\n")
    with pytest.raises(OntologyError, match="unknown class"):
        load_ontology("CLASS A\nPROPERTY p DOMAIN Ghost RANGE A\n")
    with pytest.raises(OntologyError, match="unknown class"):
        load_ontology("CLASS A\nNERMAP T Ghost\n")


def test_subclass_cycle_rejected():
    with pytest.raises(OntologyError, match="cycle"):
        load_ontology("CLASS A SUBCLASS_OF B\nCLASS B SUBCLASS_OF A\n")
    with pytest.raises(OntologyError, match="cycle"):
        load_ontology(
            "CLASS A SUBCLASS_OF C\nCLASS B SUBCLASS_OF A\nCLASS C SUBCLASS_OF B\n"
        )


def test_malformed_lines_rejected():
    for bad in (
        "CLASS\n",
        "CLASS A B\n",
        "CLASS A SUBCLASS_OF\n",
        "PROPERTY p DOMAIN A\n",
        "PROPERTY p A B\n",
        "NERMAP T\n",
        "WIDGET A\n",
    ):
        with pytest.raises(OntologyError, match="line 1"):
            load_ontology(bad)


def test_is_permissible_with_subclasses(onto):
    assert is_permissible(onto, "Person", "worksFor", "Organization")
    assert is_permissible(onto, "Person", "worksFor", "Company")
    assert is_permissible(onto, "Company", "locatedIn", "City")
    assert not is_permissible(onto, "Organization", "worksFor", "Organization")
    assert not is_permissible(onto, "Person", "locatedIn", "City")
    with pytest.raises(OntologyError):
        is_permissible(onto, "Person", "ghostProp", "Organization")
    with pytest.raises(OntologyError):
        is_permissible(onto, "Ghost", "worksFor", "Organization")


def test_source_text_kept_but_not_compared(onto):
    twin = load_ontology(ONTOLOGY_TEXT + "\n# trailing comment\n")
    assert twin == onto
    assert twin.source != onto.source


def test_random_forests_depth_consistency():
    rng = random.Random(7)
    for _ in range(50):
        n = rng.randint(1, 12)
        names = [f"C{i}" for i in range(n)]
        lines = []
        parent_of = {}
        for i, name in enumerate(names):
            if i and rng.random() < 0.6:
                parent_of[name] = rng.choice(names[:i])
                lines.append(f"CLASS {name} SUBCLASS_OF {parent_of[name]}")
            else:
                parent_of[name] = None
                lines.append(f"CLASS {name}")
        rng.shuffle(lines)
        onto = load_ontology("\n".join(lines))
        for name in names:
            expect = 0
            cur = parent_of[name]
            while cur is not None:
                expect += 1
                cur = parent_of[cur]
            assert class_depth(onto, name) == expect
            assert len(onto.ancestors(name)) == expect
