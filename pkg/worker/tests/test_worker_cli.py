import json

from augforge_worker.cli import main

from wire_fixtures import FIXED_TAIL_CANDIDATE


def test_evaluate_command(tmp_path, capsys):
    source = tmp_path / "candidate.py"
    source.write_text(FIXED_TAIL_CANDIDATE)
    code = main([
        "evaluate", "--file", str(source),
        "--train-samples", "96", "--test-samples", "48",
    ])
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert 0.0 <= result["accuracy"] <= 1.0


def test_evaluate_command_reports_failure(tmp_path, capsys):
    source = tmp_path / "broken.py"
    source.write_text("def transform(:\n")
    code = main([
        "evaluate", "--file", str(source),
        "--train-samples", "96", "--test-samples", "48",
    ])
    assert code == 1
    assert json.loads(capsys.readouterr().out)["error_class"] == "syntax_error"


def test_finetune_command(tmp_path, capsys):
    data = tmp_path / "pairs.jsonl"
    rows = [{"prompt": f"p{i}", "output": f"o{i}"} for i in range(3)]
    data.write_text("".join(json.dumps(r) + "\n" for r in rows))
    code = main(["finetune", "--data", str(data), "--out", str(tmp_path / "adapter")])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["epoch_losses"]) == 3
    assert (tmp_path / "adapter" / "adapter_model.pt").exists()
