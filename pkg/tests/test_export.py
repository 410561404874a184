import csv
import io
import json

import pytest
from hypothesis import given, strategies as st

import scenario
from lecquiz.export import (
    CSV_FIELDS,
    JSONL_FIELDS,
    ExportRecord,
    aggregate_report,
    dumps_csv,
    dumps_jsonl,
    export_csv,
    export_jsonl,
    format_report,
    issues_from_verdicts,
    load_bank,
    read_csv,
    read_jsonl,
    read_question_bank_csv,
    write_question_bank_csv,
    write_questions_json,
)
from lecquiz.items import Finding, QcVerdict, validate_item
from lecquiz.pipeline import RunRow, STATUS_COMPLETE, summarize_runs


def bank24():
    records = []
    for n, lec in enumerate(scenario.LECTURES, start=1):
        for q, raw in enumerate(scenario.LECTURE_ITEMS[lec], start=1):
            records.append(ExportRecord.from_item(validate_item(raw), lecture=lec, run="RUN0", seed=0,
                                                  pdf_basename=f"{lec}.pdf", item_id=f"L{n:02d}_Q{q:02d}"))
    return records


def test_jsonl_layout(tmp_path):
    path = export_jsonl(bank24(), tmp_path / "bank.jsonl")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 24
    first = json.loads(lines[0])
    assert list(first) == list(JSONL_FIELDS)
    assert list(first["options"]) == list("ABCDE")
    assert first["id"] == "L01_Q01" and first["correct"] == "B"


def test_empty_bank(tmp_path):
    assert export_jsonl([], tmp_path / "e.jsonl").read_bytes() == b""
    assert read_jsonl(tmp_path / "e.jsonl") == []
    assert read_csv(export_csv([], tmp_path / "e.csv")) == []


def test_round_trips_are_byte_identical(tmp_path):
    records = bank24()
    j1 = export_jsonl(records, tmp_path / "a.jsonl")
    c1 = export_csv(records, tmp_path / "a.csv")
    assert read_jsonl(j1) == records and read_csv(c1) == records
    j2 = export_jsonl(read_jsonl(j1), tmp_path / "b.jsonl")
    c2 = export_csv(read_csv(c1), tmp_path / "b.csv")
    assert j1.read_bytes() == j2.read_bytes()
    assert c1.read_bytes() == c2.read_bytes()


def test_csv_dialect(tmp_path):
    path = export_csv(bank24(), tmp_path / "bank.csv")
    data = path.read_bytes()
    assert not data.startswith(b"\xef\xbb\xbf")
    assert data.count(b"\r\n") >= 25
    with open(path, newline="", encoding="utf-8") as f:
        header = next(csv.reader(f))
    assert tuple(header) == CSV_FIELDS
    lf = dumps_csv(bank24(), crlf=False)
    assert "\r\n" not in lf


def test_comma_in_option_is_quoted():
    rec = bank24()[0]
    rec = ExportRecord(**{**rec.__dict__, "options": {**rec.options, "A": 'H(X,Y), "joint"'}})
    text = dumps_csv([rec])
    assert '"H(X,Y), ""joint"""' in text


def test_duplicate_ids_rejected(tmp_path):
    records = bank24()
    with pytest.raises(ValueError, match="duplicate"):
        export_jsonl(records + records[:1], tmp_path / "x.jsonl")


record_text = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), max_size=20)


@given(st.lists(st.tuples(record_text, record_text, st.integers(0, 99)), max_size=5))
def test_lossless_round_trip_property(rows):
    base = bank24()[0]
    records = [
        ExportRecord(**{**base.__dict__, "id": f"L01_Q{i:02d}", "question": q, "explanation": e, "seed": s,
                        "options": {k: q + k for k in "ABCDE"}})
        for i, (q, e, s) in enumerate(rows)
    ]
    # JSONL lines end with "\n" only; str.splitlines would also break on U+0085 and U+2028
    assert [ExportRecord.from_json_dict(json.loads(line)) for line in dumps_jsonl(records).split("\n") if line] == records
    assert [ExportRecord.from_csv_row(r) for r in csv.DictReader(io.StringIO(dumps_csv(records), newline=""))] == records


def test_internal_artifacts_round_trip(tmp_path):
    items = [validate_item(x) for x in scenario.INFO_ITEMS]
    write_questions_json(items, tmp_path / "questions.json")
    write_question_bank_csv(items, tmp_path / "QuestionBank.csv")
    assert load_bank(tmp_path / "questions.json") == items
    assert read_question_bank_csv(tmp_path / "QuestionBank.csv") == items
    assert load_bank(tmp_path / "QuestionBank.csv") == items
    export_jsonl(bank24(), tmp_path / "b.jsonl")
    assert [it.question for it in load_bank(tmp_path / "b.jsonl")][:8] == [it.question for it in items]
    with pytest.raises(ValueError):
        load_bank(tmp_path / "bank.xml")


def test_issue_entries():
    v = [QcVerdict("Q01", (), (Finding("duplicate_options_numeric_const", "options C,E both evaluate to -2"),)),
         QcVerdict("Q02")]
    assert issues_from_verdicts(v) == [
        {"item_id": "Q01", "flag": "duplicate_options_numeric_const", "detail": "options C,E both evaluate to -2"}
    ]
    assert issues_from_verdicts([QcVerdict("Q03")]) == []


def test_report_formatting(tmp_path):
    rows = [
        RunRow("InfoTheory", 0, STATUS_COMPLETE, 8, 8, 8, 0, 58.554, {"duplicate_options_numeric_const": 1}),
        RunRow("InfoTheory", 4, STATUS_COMPLETE, 8, 8, 9, 1, 61.0),
    ]
    summary = summarize_runs(rows)
    text = format_report(summary)
    assert "Retry rate        5.9% (1/17 attempts)" in text
    assert "58.55" in text and "11.1" in text
    assert "duplicate_options_numeric_const" in text
    single = format_report(summarize_runs(rows[:1]))
    assert "± 0.00 s (n=1)" in single
    j, t = aggregate_report(summary, tmp_path / "rep")
    assert json.loads(j.read_text()) == summary
    assert t.read_text() == text
