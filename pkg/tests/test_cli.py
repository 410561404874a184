import json
import os

import pytest

import scenario
from lecquiz.cli import main
from lecquiz.generation import write_transcript


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Lecture texts, transcripts and a sweep config in an isolated cwd."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("LECQUIZ_OUT_DIR", raising=False)
    monkeypatch.delenv("LECQUIZ_GENERATOR_CMD", raising=False)
    scenario.build_sweep(tmp_path / "inputs")
    conf = {
        "qc_spec": {"retry_max": 3, "n_questions": 8},
        "generator": {"kind": "scripted-mock", "transcript": "inputs/transcripts/{lecture}_seed{seed}.jsonl"},
        "lectures": [
            {"name": lec, "pdf": f"inputs/{lec}.txt", "topics": [it["FocusTopic"] for it in scenario.LECTURE_ITEMS[lec]]}
            for lec in scenario.LECTURES
        ],
    }
    (tmp_path / "sweep.json").write_text(json.dumps(conf))
    return tmp_path


def listing(root):
    return sorted(str(p.relative_to(root)) for p in root.rglob("*"))


def test_run_requires_pdf(capsys):
    assert main(["run", "--seed", "0"]) == 2
    assert "--pdf" in capsys.readouterr().err


def test_unknown_flag():
    assert main(["qc", "--bank", "x.jsonl", "--frobnicate"]) == 2


def test_run_with_transcript(workspace, capsys):
    code = main(["run", "--pdf", "inputs/InfoTheory.txt", "--seed", "4", "--out", "runs", "--topic", "Entropy",
                 "--transcript", "inputs/transcripts/InfoTheory_seed4.jsonl"])
    assert code == 0
    err = capsys.readouterr().err
    assert "tries 9, retries 1" in err
    run_dir = workspace / "runs" / "InfoTheory_seed4"
    assert {p.name for p in run_dir.iterdir()} == {
        "questions.json", "QuestionBank.csv", "auto_check_issues.json", "run_manifest.json"}


def test_run_output_dir_from_env(workspace, monkeypatch):
    monkeypatch.setenv("LECQUIZ_OUT_DIR", str(workspace / "envout"))
    assert main(["run", "--pdf", "inputs/StatMech.txt", "--topic", "a", "--transcript",
                 "inputs/transcripts/StatMech_seed0.jsonl"]) == 0
    assert (workspace / "envout" / "StatMech_seed0" / "questions.json").exists()


def test_run_aborts_with_exit_1(workspace):
    write_transcript(workspace / "bad.jsonl", ["{}"] * 4)
    assert main(["run", "--pdf", "inputs/InfoTheory.txt", "--topic", "a", "--out", "runs",
                 "--transcript", "bad.jsonl"]) == 1


def test_run_without_topics(workspace, capsys):
    assert main(["run", "--pdf", "inputs/InfoTheory.txt", "--out", "runs",
                 "--transcript", "inputs/transcripts/InfoTheory_seed0.jsonl"]) == 1
    assert "topic plan is empty" in capsys.readouterr().err


def test_missing_input_document(workspace):
    assert main(["run", "--pdf", "nope.txt", "--out", "runs", "--transcript", "bad.jsonl"]) == 1


def test_bad_config(workspace):
    (workspace / "broken.json").write_text("{not json")
    assert main(["run", "--pdf", "inputs/InfoTheory.txt", "--config", "broken.json"]) == 2
    (workspace / "odd.json").write_text(json.dumps({"qc_spec": {"retry_max": -1}}))
    assert main(["run", "--pdf", "inputs/InfoTheory.txt", "--config", "odd.json"]) == 2


def test_sweep_select_report_qc(workspace, capsys):
    before = set(listing(workspace))
    assert main(["sweep", "--config", "sweep.json", "--out", "sw", "--jobs", "2"]) == 0
    created = set(listing(workspace)) - before
    assert all(p.startswith("sw") for p in created)
    summary = json.loads((workspace / "sw" / "sweep_summary.json").read_text())
    assert summary["attempts_total"] == 122 and summary["retry_rate_pct"] == 1.6
    capsys.readouterr()

    assert main(["select", "--sweep", "sw", "--out", "deploy"]) == 0
    err = capsys.readouterr().err
    assert "selected InfoTheory seed 2" in err and "selected Thermodynamics seed 0" in err
    assert "selected StatMech seed 0" in err
    bank = workspace / "deploy" / "final_bank.jsonl"
    assert len(bank.read_text().splitlines()) == 24
    assert (workspace / "deploy" / "final_bank.csv").exists()

    before_bytes = bank.read_bytes()
    assert main(["qc", "--bank", str(bank)]) == 0
    out1 = capsys.readouterr().out
    assert main(["qc", "--bank", str(bank)]) == 0
    assert capsys.readouterr().out == out1 == "24 items: 0 hard failures, 0 warnings\n"
    assert bank.read_bytes() == before_bytes

    assert main(["select", "--sweep", "sw", "--out", "deploy2", "--seed", "L01=3", "--format", "jsonl"]) == 0
    first = json.loads((workspace / "deploy2" / "final_bank.jsonl").read_text().splitlines()[0])
    assert first["seed"] == 3 and first["run"] == "RUN3"

    (workspace / "sw" / "sweep_report.txt").unlink()
    assert main(["report", "--sweep", "sw"]) == 0
    out = capsys.readouterr().out
    assert "Retry rate        1.6% (2/122 attempts)" in out
    assert (workspace / "sw" / "sweep_report.txt").read_text() == out


def test_sweep_with_aborted_run(workspace, capsys):
    write_transcript(workspace / "inputs" / "transcripts" / "StatMech_seed1.jsonl", ["nope"] * 4)
    assert main(["sweep", "--config", "sweep.json", "--out", "sw", "--seeds", "0,1"]) == 1
    summary = json.loads((workspace / "sw" / "sweep_summary.json").read_text())
    assert summary["runs"] == 6 and summary["failed_runs"] == 1
    assert (workspace / "sw" / "sweep_report.txt").exists()


def test_select_without_eligible_run(workspace):
    assert main(["sweep", "--config", "sweep.json", "--out", "sw", "--seeds", "1"]) == 0
    assert main(["select", "--sweep", "sw"]) == 1


def test_qc_reports_hard_failures(workspace, capsys):
    items = [scenario.INFO_ITEMS[0], scenario.INFO_ITEMS[0]]
    (workspace / "questions.json").write_text(json.dumps(items))
    assert main(["qc", "--bank", "questions.json"]) == 1
    captured = capsys.readouterr()
    assert captured.out == "2 items: 1 hard failures, 0 warnings\n"
    assert "duplicate_question" in captured.err


def test_export_internal_bank(workspace):
    (workspace / "q").mkdir()
    (workspace / "q" / "questions.json").write_text(json.dumps(scenario.THERMO_ITEMS))
    assert main(["export", "--bank", "q/questions.json", "--out", "exp", "--code", "L02",
                 "--lecture", "Thermodynamics", "--pdf", "Thermodynamics.pdf", "--name", "thermo"]) == 0
    lines = (workspace / "exp" / "thermo.jsonl").read_text().splitlines()
    rec = json.loads(lines[6])
    assert rec["id"] == "L02_Q07" and rec["pdf_basename"] == "Thermodynamics.pdf"
    # re-exporting the release file reproduces it
    assert main(["export", "--bank", "exp/thermo.jsonl", "--out", "exp2", "--name", "thermo"]) == 0
    assert (workspace / "exp2" / "thermo.jsonl").read_bytes() == (workspace / "exp" / "thermo.jsonl").read_bytes()
    assert (workspace / "exp2" / "thermo.csv").read_bytes() == (workspace / "exp" / "thermo.csv").read_bytes()


def test_expr_subcommands(capsys):
    assert main(["expr", "eval", "2*log2(0.5)"]) == 0
    assert capsys.readouterr().out.strip() == "parsed-constant: 2 * log2(0.5) = -2"
    assert main(["expr", "eval", "0.469 bits"]) == 0
    assert "[bits]" in capsys.readouterr().out
    assert main(["expr", "eval", "n*R*ln(V2/V1)"]) == 0
    assert "free variables: R, V1, V2, n" in capsys.readouterr().out
    assert main(["expr", "eval", "heat flows"]) == 1
    assert main(["expr", "eval", "log2(0)"]) == 1
    capsys.readouterr()
    assert main(["expr", "equiv", "log2(0.25)", "2*log2(0.5)"]) == 0
    assert capsys.readouterr().out.strip() == "equivalent"
    assert main(["expr", "equiv", "log2(0.25)", "log2(0.125)"]) == 0
    assert capsys.readouterr().out.strip() == "distinct"
    assert main(["expr", "equiv", "0.469 bits", "heat flows from hot to cold"]) == 1


def test_help_lists_subcommands(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for cmd in ("run", "sweep", "select", "qc", "export", "report", "expr"):
        assert cmd in out


def test_external_command_from_env(workspace, monkeypatch):
    script = workspace / "fake_model.py"
    script.write_text(
        "import json, re, sys\n"
        "prompt = open(sys.argv[1]).read()\n"
        "q = int(re.search(r'\"ID\":\"Q(\\d+)\"', prompt).group(1))\n"
        f"items = {json.dumps(scenario.STATMECH_ITEMS)!r}\n"
        "print(json.dumps(json.loads(items)[q - 1]))\n"
    )
    monkeypatch.setenv("LECQUIZ_GENERATOR_CMD", f"{os.sys.executable} {script} {{prompt_file}}")
    assert main(["run", "--pdf", "inputs/StatMech.txt", "--out", "ext", "--topic", "Boltzmann"]) == 0
    data = json.loads((workspace / "ext" / "StatMech_seed0" / "questions.json").read_text())
    assert [d["Question"] for d in data] == [it["Question"] for it in scenario.STATMECH_ITEMS]
