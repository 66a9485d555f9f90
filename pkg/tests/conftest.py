import pytest

from negokit.core import CBScenario, Role, money
from negokit.corpus import lexicon_from_records, parse_corpus
from negokit.simulator import train_sl
from negokit.synth import synth_dialogues

CORPUS_SEED = 7
CORPUS_SIZE = 200


@pytest.fixture(scope="session")
def records():
    return synth_dialogues(CORPUS_SEED, CORPUS_SIZE)


@pytest.fixture(scope="session")
def artifacts(records):
    return train_sl(records, smoothing=0.01)


@pytest.fixture(scope="session")
def lexicon(artifacts):
    return artifacts.lexicon


@pytest.fixture(scope="session")
def parsed(records, lexicon):
    return parse_corpus(records, lexicon)


@pytest.fixture(scope="session")
def scenarios(records):
    return [r.scenario for r in records]


@pytest.fixture()
def tv_scenario():
    return CBScenario(
        category="electronics",
        title="JVC HD-ILA 1080P 70 Inch TV",
        description="Tv is approximately 10 years old. Just installed new lamp.",
        listing_price=money(275),
        buyer_target=money(192),
    )
