import pytest

from kgmon.extract import ArticleDoc, load_dictionary, load_rules
from kgmon.ontology import load_ontology

ONTOLOGY_TEXT = (
    "# people, employers and places\n"
    "CLASS Person\n"
    "CLASS Organization\n"
    "CLASS Company SUBCLASS_OF Organization\n"
    "CLASS Location\n"
    "CLASS City SUBCLASS_OF Location\n"
    "PROPERTY worksFor DOMAIN Person RANGE Organization\n"
    "PROPERTY locatedIn DOMAIN Organization RANGE Location\n"
    "NERMAP PERSON Person\n"
    "NERMAP ORG Organization\n"
    "NERMAP LOC Location\n"
)

DICTIONARY_TEXT = (
    "Alice Chen\tPerson\n"
    "Bob Marsh\tPerson\n"
    "Dana Wu\tPerson\n"
    "Acme Corp\tCompany\n"
    "Globex\tOrganization\n"
    "Initech\tCompany\n"
    "Berlin\tCity\n"
    "Geneva\tCity\n"
    "Lake Victoria\tLocation\n"
)

RULES_TEXT = (
    "r1\t{subject:Person} works for {object:Organization}\tworksFor\n"
    "r2\t{subject:Organization} is based in {object:Location}\tlocatedIn\n"
)


@pytest.fixture(scope="session")
def onto():
    return load_ontology(ONTOLOGY_TEXT)


@pytest.fixture(scope="session")
def dictionary(onto):
    return load_dictionary(DICTIONARY_TEXT, onto)


@pytest.fixture(scope="session")
def rules(onto):
    return load_rules(RULES_TEXT, onto)


@pytest.fixture
def article():
    return ArticleDoc(
        id="a1",
        published_at=100,
        text="Alice Chen works for Acme Corp. Acme Corp is based in Berlin.",
    )
