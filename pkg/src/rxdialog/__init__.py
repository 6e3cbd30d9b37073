"""rxdialog: a goal-oriented drug-prescription dialogue engine.

Subpackages and modules:
  taxonomy  - slot schema, intents, dialogue acts, prescription frames
  drugdb    - drug database ingestion and constraint-narrowing disambiguation
  nlu       - tokenizer, CRF slot tagger, intent classifier, lexicon baseline
  datagen   - grammar-based utterance and dialogue-session generation
  policy    - rule policy and the learned action-embedding policy
  engine    - session orchestration, prescription checking, summaries
  metrics   - event-log parsing and dialogue metrics
  corpusio  - CoNLL and dialogue-session corpus formats
  service   - HTTP session API
  cli       - operator command line
"""

__version__ = "0.1.0"
