import json
from importlib import resources

from rxdialog.cli import main


def test_unknown_flag_exits_2(capsys):
    assert main(["gen-data", "--no-such-flag"]) == 2


def test_unknown_command_exits_2():
    assert main(["frobnicate"]) == 2


def test_missing_required_arg_exits_2():
    assert main(["gen-data"]) == 2


def test_gen_data_deterministic(tmp_path):
    out1 = tmp_path / "a.conll"
    out2 = tmp_path / "b.conll"
    for out in (out1, out2):
        code = main(["gen-data", "--min-count", "30", "--seed", "7",
                     "--out", str(out)])
        assert code == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_gen_data_report(tmp_path):
    report_path = tmp_path / "report.json"
    code = main(["gen-data", "--min-count", "25", "--seed", "1",
                 "--out", str(tmp_path / "c.conll"), "--report", str(report_path)])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["generated"] > 0
    assert report["max_min_ratio"] >= 1.0


def test_gen_dialogues_deterministic(tmp_path):
    out1 = tmp_path / "a.jsonl"
    out2 = tmp_path / "b.jsonl"
    for out in (out1, out2):
        assert main(["gen-dialogues", "--n", "40", "--seed", "3",
                     "--out", str(out)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_train_and_eval_policy_via_cli(tmp_path):
    sessions = tmp_path / "sessions.jsonl"
    assert main(["gen-dialogues", "--n", "120", "--seed", "5",
                 "--out", str(sessions)]) == 0
    model_path = tmp_path / "policy.rxted"
    report_path = tmp_path / "train.json"
    assert main(["train-policy", "--sessions", str(sessions), "--seed", "2",
                 "--epochs", "12", "--out", str(model_path),
                 "--report", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["held_out_accuracy"] > 0.5
    eval_report = tmp_path / "eval.json"
    assert main(["eval-policy", "--ted", str(model_path),
                 "--sessions", str(sessions), "--report", str(eval_report)]) == 0
    assert json.loads(eval_report.read_text())["next_action_accuracy"] > 0.5


def test_metrics_cli(tmp_path, capsys):
    with resources.as_file(resources.files("rxdialog.data")
                           .joinpath("events_fixture.jsonl")) as log_path, \
         resources.as_file(resources.files("rxdialog.data")
                           .joinpath("participants_fixture.json")) as partic_path:
        code = main(["metrics", "--log", str(log_path),
                     "--participants", str(partic_path), "--group-by", "category"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("group,")
    assert "physician" in out


def test_export_conll_cli(tmp_path):
    src = tmp_path / "src.conll"
    src.write_text("# intent = confirm\nyes\tO\n\n")
    dst = tmp_path / "dst.conll"
    assert main(["export-conll", "--infile", str(src), "--out", str(dst)]) == 0
    assert "yes\tO" in dst.read_text()


def test_runtime_error_exits_1(tmp_path, capsys):
    assert main(["metrics", "--log", str(tmp_path / "missing.jsonl"),
                 "--participants", str(tmp_path / "missing.json")]) == 1
    assert "error:" in capsys.readouterr().err
