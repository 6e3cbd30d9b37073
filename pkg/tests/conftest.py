import pytest

from rxdialog.datagen import (
    generate_dialogues,
    load_default_grammar,
    load_scenarios,
    load_seed_corpus,
)
from rxdialog.drugdb import load_fixture_db
from rxdialog.taxonomy import load_default_schema

# Frozen training recipe shared by NLU-dependent suites (seed and sizes are
# part of the regression surface; see tests/test_acceptance.py).
NLU_SEED = 7
NLU_EPOCHS = 10
TED_SEED = 3
TED_SESSIONS = 280


@pytest.fixture(scope="session")
def schema():
    return load_default_schema()


@pytest.fixture(scope="session")
def db():
    return load_fixture_db()


@pytest.fixture(scope="session")
def grammar():
    return load_default_grammar()


@pytest.fixture(scope="session")
def seed_corpus():
    return load_seed_corpus()


@pytest.fixture(scope="session")
def timings():
    return {}


@pytest.fixture(scope="session")
def nlu_corpus(db, schema, grammar, seed_corpus, timings):
    import time

    from rxdialog.training import build_nlu_corpus

    t0 = time.perf_counter()
    corpus = build_nlu_corpus(db, schema, g=grammar, seed_corpus=seed_corpus,
                              rng_seed=NLU_SEED)
    timings["nlu_corpus_s"] = time.perf_counter() - t0
    return corpus


@pytest.fixture(scope="session")
def nlu_models(nlu_corpus, db, schema, timings):
    import time

    from rxdialog.training import train_nlu

    t0 = time.perf_counter()
    models = train_nlu(nlu_corpus, db, schema,
                       crf_hp={"epochs": NLU_EPOCHS, "seed": NLU_SEED})
    timings["nlu_train_s"] = time.perf_counter() - t0
    return models


@pytest.fixture(scope="session")
def dialogue_sessions(db, schema):
    templates = load_scenarios()
    return generate_dialogues(templates, None, db, n=TED_SESSIONS, rng_seed=11,
                              schema=schema)


@pytest.fixture(scope="session")
def ted_split(dialogue_sessions):
    from rxdialog.policy import sessions_to_ted

    ted_sessions = sessions_to_ted(dialogue_sessions)
    return ted_sessions[:240], ted_sessions[240:]


@pytest.fixture(scope="session")
def ted_model(ted_split):
    from rxdialog.policy import ted_train

    train, _ = ted_split
    return ted_train(train, {"seed": TED_SEED})


@pytest.fixture
def engine(nlu_models, db, schema):
    from rxdialog.engine import Engine

    crf, intent_model = nlu_models
    ticker = iter(range(1, 100000))

    return Engine(schema=schema, db=db, crf=crf, intent_model=intent_model,
                  policy="rule", clock=lambda: float(next(ticker)))


@pytest.fixture
def ted_engine(nlu_models, ted_model, db, schema):
    from rxdialog.engine import Engine

    crf, intent_model = nlu_models
    ticker = iter(range(1, 100000))
    return Engine(schema=schema, db=db, crf=crf, intent_model=intent_model,
                  policy="ted", ted_model=ted_model,
                  clock=lambda: float(next(ticker)))
