"""Operator command line: generate data, train models, serve, evaluate."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__


def _write_report(report: dict, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, ensure_ascii=False)
            fh.write("\n")


def _load_db(path):
    from .drugdb import ingest, load_fixture_db
    return ingest(path) if path else load_fixture_db()


def _load_grammar(path):
    from .datagen import load_default_grammar, load_grammar
    return load_grammar(path) if path else load_default_grammar()


def cmd_gen_data(args) -> int:
    from .corpusio import ConllDocument, export_conll
    from .datagen import generate_balanced, load_seed_corpus
    from .taxonomy import load_default_schema

    schema = load_default_schema()
    db = _load_db(args.db)
    grammar = _load_grammar(args.grammar)
    seed_corpus = load_seed_corpus()
    report = generate_balanced(grammar, seed_corpus, db,
                               {"min_count_per_slot": args.min_count,
                                "max_total": args.max_total},
                               rng_seed=args.seed, schema=schema)
    utterances = (seed_corpus + report.generated) if args.include_seed else report.generated
    export_conll(ConllDocument(utterances=utterances, source_tag="generated"), args.out)
    summary = {
        "generated": len(report.generated),
        "max_min_ratio": report.max_min_ratio,
        "exhausted_budget": report.exhausted_budget,
        "unreachable_slots": report.unreachable_slots,
        "final_counts": report.final_counts,
    }
    print(f"wrote {len(utterances)} utterances to {args.out} "
          f"(ratio {report.max_min_ratio:.2f})")
    if report.unreachable_slots:
        print("warning: unreachable slots: " + ", ".join(report.unreachable_slots))
    _write_report(summary, args.report)
    return 0


def cmd_gen_dialogues(args) -> int:
    from .datagen import export_sessions, generate_dialogues, load_scenarios
    from .taxonomy import load_default_schema

    schema = load_default_schema()
    db = _load_db(args.db)
    templates = load_scenarios(args.scenarios)
    sessions = generate_dialogues(templates, None, db, n=args.n, rng_seed=args.seed,
                                  schema=schema)
    export_sessions(sessions, args.out)
    outcomes = {}
    for s in sessions:
        outcomes[s.outcome] = outcomes.get(s.outcome, 0) + 1
    print(f"wrote {len(sessions)} sessions to {args.out} ({outcomes})")
    _write_report({"n_sessions": len(sessions), "outcomes": outcomes}, args.report)
    return 0


def cmd_train_nlu(args) -> int:
    from .evaluation import evaluate_slots, intent_accuracy, report_dict
    from .taxonomy import load_default_schema
    from .training import build_nlu_corpus, train_nlu

    schema = load_default_schema()
    db = _load_db(args.db)
    corpus = build_nlu_corpus(db, schema, min_count_per_slot=args.min_count,
                              rng_seed=args.seed)
    crf, intent_model = train_nlu(corpus, db, schema,
                                  crf_hp={"epochs": args.epochs, "seed": args.seed})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    crf.save(out_dir / "crf.rxnlu")
    intent_model.save(out_dir / "intent.rxnlu")
    slot_report = evaluate_slots(crf, corpus.test, schema)
    acc = intent_accuracy(intent_model, corpus.test)
    print(f"saved models to {out_dir}; held-out micro-F1 {slot_report.micro.f1:.4f}, "
          f"intent accuracy {acc:.4f}")
    _write_report(report_dict(slot_report, acc), args.report)
    return 0


def cmd_train_policy(args) -> int:
    from .datagen import import_sessions
    from .policy import next_action_accuracy, sessions_to_ted, ted_train

    sessions = sessions_to_ted(import_sessions(args.sessions))
    n_held = max(1, int(0.1 * len(sessions)))
    train, held = sessions[:-n_held], sessions[-n_held:]
    model = ted_train(train, {"seed": args.seed, "epochs": args.epochs,
                              "history": args.history})
    model.save(args.out)
    acc = next_action_accuracy(model, held)
    print(f"saved policy to {args.out}; held-out next-action accuracy {acc:.4f}")
    _write_report({"held_out_accuracy": acc, "training_log": model.training_log},
                  args.report)
    return 0


def cmd_eval_nlu(args) -> int:
    from .evaluation import evaluate_slots, intent_accuracy, report_dict
    from .nlu import CrfModel, IntentModel
    from .taxonomy import load_default_schema
    from .training import build_nlu_corpus

    schema = load_default_schema()
    db = _load_db(args.db)
    corpus = build_nlu_corpus(db, schema, rng_seed=args.seed)
    crf = CrfModel.load(args.crf)
    intent_model = IntentModel.load(args.intent)
    slot_report = evaluate_slots(crf, corpus.test, schema)
    acc = intent_accuracy(intent_model, corpus.test)
    report = report_dict(slot_report, acc)
    print(json.dumps({"intent_accuracy": report["intent_accuracy"],
                      "slot_micro": report["slot_micro"],
                      "slot_macro": report["slot_macro"]}, indent=2))
    _write_report(report, args.report)
    return 0


def cmd_eval_policy(args) -> int:
    from .datagen import import_sessions
    from .policy import TedModel, next_action_accuracy, sessions_to_ted

    model = TedModel.load(args.ted)
    sessions = sessions_to_ted(import_sessions(args.sessions))
    acc = next_action_accuracy(model, sessions)
    print(f"next-action accuracy: {acc:.4f} over {len(sessions)} sessions")
    _write_report({"next_action_accuracy": acc, "n_sessions": len(sessions)},
                  args.report)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, http_api

    config = ServiceConfig.resolve(args.config)
    if args.port:
        config.port = args.port
    app = http_api(config)
    uvicorn.run(app, host=args.host, port=config.port, log_level="info")
    return 0


def cmd_metrics(args) -> int:
    from .metrics import (aggregate, load_participants, owners_from_events,
                          parse_event_log, rows_to_csv)

    result = parse_event_log(args.log)
    meta = load_participants(args.participants)
    owners = owners_from_events(result.sessions)
    rows = aggregate(result.sessions, meta, owners, group_by=args.group_by)
    sys.stdout.write(rows_to_csv(rows))
    if result.rejects:
        print(f"rejected {len(result.rejects)} malformed lines", file=sys.stderr)
    _write_report({
        "rows": [vars(r) for r in rows],
        "rejects": result.rejects,
    }, args.report)
    return 0


def cmd_export_conll(args) -> int:
    from .corpusio import export_conll, import_conll

    doc = import_conll(args.infile, columns=(args.token_column, args.label_column))
    export_conll(doc, args.out)
    print(f"re-exported {len(doc.utterances)} utterances to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rxdialog",
                                     description="prescription dialogue toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a slot-balanced NLU corpus")
    p.add_argument("--min-count", type=int, default=120)
    p.add_argument("--max-total", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grammar")
    p.add_argument("--db")
    p.add_argument("--include-seed", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-dialogues", help="generate dialogue sessions")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenarios")
    p.add_argument("--db")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_gen_dialogues)

    p = sub.add_parser("train-nlu", help="train the slot tagger and intent model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--min-count", type=int, default=120)
    p.add_argument("--db")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_train_nlu)

    p = sub.add_parser("train-policy", help="train the embedding dialogue policy")
    p.add_argument("--sessions", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--history", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("eval-nlu", help="evaluate NLU models on the generated split")
    p.add_argument("--crf", required=True)
    p.add_argument("--intent", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--db")
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval_nlu)

    p = sub.add_parser("eval-policy", help="evaluate a trained policy on sessions")
    p.add_argument("--ted", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval_policy)

    p = sub.add_parser("serve", help="run the HTTP session API")
    p.add_argument("--config")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("metrics", help="compute dialogue metrics from an event log")
    p.add_argument("--log", required=True)
    p.add_argument("--participants", required=True)
    p.add_argument("--group-by", default="category",
                   choices=["category", "age_band", "gender", "none"])
    p.add_argument("--report")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("export-conll", help="normalize a CoNLL corpus file")
    p.add_argument("--infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--token-column", type=int, default=0)
    p.add_argument("--label-column", type=int, default=1)
    p.set_defaults(func=cmd_export_conll)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # runtime failures exit 1 with a clear message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
