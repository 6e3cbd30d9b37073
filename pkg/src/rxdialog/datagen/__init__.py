"""Grammar-based data generation: utterances, balanced corpora, dialogues."""

from .grammar import (
    DepthLimitExceeded,
    Grammar,
    GrammarError,
    GrammarParser,
    NonTerminal,
    Terminal,
    expand,
    load_grammar,
    parse_grammar,
)
from .balance import BalanceReport, generate_balanced, slot_distribution
from .dialogues import (
    GeneratedSession,
    ScenarioError,
    ScenarioTemplate,
    export_sessions,
    generate_dialogues,
    import_sessions,
    instantiate,
    load_scenarios,
)
from importlib import resources as _resources


def load_default_grammar() -> Grammar:
    ref = _resources.files("rxdialog.data").joinpath("grammar.rxg")
    with ref.open(encoding="utf-8") as fh:
        return parse_grammar(fh.read(), source="grammar.rxg")


def load_seed_corpus():
    from ..corpusio import import_conll
    ref = _resources.files("rxdialog.data").joinpath("seed_corpus.conll")
    with _resources.as_file(ref) as p:
        return import_conll(p).utterances


__all__ = [
    "BalanceReport", "DepthLimitExceeded", "GeneratedSession", "Grammar",
    "GrammarError", "GrammarParser", "NonTerminal", "ScenarioError",
    "ScenarioTemplate", "Terminal", "expand", "export_sessions",
    "generate_balanced", "generate_dialogues", "import_sessions", "instantiate",
    "load_default_grammar", "load_grammar", "load_scenarios", "load_seed_corpus",
    "parse_grammar", "slot_distribution",
]
