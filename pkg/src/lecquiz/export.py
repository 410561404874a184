"""Release-schema exports, issue logs and sweep reports."""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .items import INTERNAL_FIELDS, LETTERS, McqItem, QcVerdict, validate_item

JSONL_FIELDS = (
    "lecture",
    "run",
    "seed",
    "pdf_basename",
    "source_pages",
    "id",
    "category",
    "focus_topic",
    "question",
    "options",
    "correct",
    "explanation",
)
CSV_FIELDS = tuple(
    x for f in JSONL_FIELDS for x in ([f"option_{k}" for k in LETTERS] if f == "options" else [f])
)


@dataclass(frozen=True)
class ExportRecord:
    lecture: str
    run: str
    seed: int
    pdf_basename: str
    source_pages: str
    id: str
    category: str
    focus_topic: str
    question: str
    options: dict[str, str]
    correct: str
    explanation: str

    def to_json_dict(self) -> dict[str, Any]:
        out = {f: getattr(self, f) for f in JSONL_FIELDS}
        out["options"] = {k: self.options[k] for k in LETTERS}
        return out

    def to_csv_row(self) -> dict[str, str]:
        row: dict[str, Any] = {}
        for f in JSONL_FIELDS:
            if f == "options":
                row.update({f"option_{k}": self.options[k] for k in LETTERS})
            else:
                row[f] = getattr(self, f)
        row["seed"] = str(self.seed)
        return row

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "ExportRecord":
        missing = [f for f in JSONL_FIELDS if f not in d]
        if missing:
            raise ValueError(f"export record missing fields: {', '.join(missing)}")
        kw = {f: d[f] for f in JSONL_FIELDS}
        kw["options"] = {k: kw["options"][k] for k in LETTERS}
        kw["seed"] = int(kw["seed"])
        return cls(**kw)

    @classmethod
    def from_csv_row(cls, row: Mapping[str, str]) -> "ExportRecord":
        d: dict[str, Any] = {f: row[f] for f in JSONL_FIELDS if f != "options"}
        d["options"] = {k: row[f"option_{k}"] for k in LETTERS}
        return cls.from_json_dict(d)

    @classmethod
    def from_item(cls, item: McqItem, *, lecture: str, run: str, seed: int, pdf_basename: str, item_id: str):
        return cls(
            lecture=lecture,
            run=run,
            seed=seed,
            pdf_basename=pdf_basename,
            source_pages=item.source_pages,
            id=item_id,
            category=item.category,
            focus_topic=item.focus_topic,
            question=item.question,
            options=dict(item.options),
            correct=item.correct_option,
            explanation=item.explanation,
        )

    def to_item(self) -> McqItem:
        return McqItem(
            id=self.id,
            source_pages=self.source_pages,
            question=self.question,
            options=dict(self.options),
            correct_option=self.correct,
            explanation=self.explanation,
            category=self.category,
            focus_topic=self.focus_topic,
        )


def _check_unique_ids(records: Sequence[ExportRecord]) -> None:
    seen = set()
    for r in records:
        if r.id in seen:
            raise ValueError(f"duplicate record id {r.id!r}")
        seen.add(r.id)


def dumps_jsonl(records: Sequence[ExportRecord]) -> str:
    return "".join(json.dumps(r.to_json_dict(), ensure_ascii=False) + "\n" for r in records)


def export_jsonl(records: Sequence[ExportRecord], path: str | os.PathLike) -> Path:
    """One object per line in the fixed release key order."""
    _check_unique_ids(records)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dumps_jsonl(records))
    return path


def read_jsonl(path: str | os.PathLike) -> list[ExportRecord]:
    with open(path, encoding="utf-8") as f:
        return [ExportRecord.from_json_dict(json.loads(line)) for line in f if line.strip()]


def dumps_csv(records: Sequence[ExportRecord], *, crlf: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\r\n" if crlf else "\n")
    writer.writeheader()
    for r in records:
        writer.writerow(r.to_csv_row())
    return buf.getvalue()


def export_csv(records: Sequence[ExportRecord], path: str | os.PathLike, *, crlf: bool = True) -> Path:
    """RFC 4180 CSV (UTF-8, no BOM) with the options flattened to five columns."""
    _check_unique_ids(records)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dumps_csv(records, crlf=crlf))
    return path


def read_csv(path: str | os.PathLike) -> list[ExportRecord]:
    with open(path, encoding="utf-8", newline="") as f:
        return [ExportRecord.from_csv_row(row) for row in csv.DictReader(f)]


# -- run-level artifacts (internal schema) -----------------------------------


def write_questions_json(items: Sequence[McqItem], path: str | os.PathLike) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        json.dump([it.to_internal() for it in items], f, indent=2, ensure_ascii=False)
        f.write("\n")
    return path


def read_questions_json(path: str | os.PathLike) -> list[McqItem]:
    with open(path, encoding="utf-8") as f:
        return [validate_item(raw) for raw in json.load(f)]


def write_question_bank_csv(items: Sequence[McqItem], path: str | os.PathLike, *, crlf: bool = True) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=INTERNAL_FIELDS, lineterminator="\r\n" if crlf else "\n")
        writer.writeheader()
        for it in items:
            writer.writerow(it.to_internal())
    return path


def read_question_bank_csv(path: str | os.PathLike) -> list[McqItem]:
    with open(path, encoding="utf-8", newline="") as f:
        return [validate_item(row) for row in csv.DictReader(f)]


def load_bank(path: str | os.PathLike) -> list[McqItem]:
    """Read items from a release JSONL/CSV or an internal questions.json/CSV."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return [r.to_item() for r in read_jsonl(path)]
    if path.suffix == ".json":
        return read_questions_json(path)
    if path.suffix == ".csv":
        with open(path, encoding="utf-8", newline="") as f:
            header = next(csv.reader(f), [])
        if "ID" in header:
            return read_question_bank_csv(path)
        return [r.to_item() for r in read_csv(path)]
    raise ValueError(f"unrecognised bank format: {path.name}")


def issues_from_verdicts(verdicts: Iterable[QcVerdict]) -> list[dict[str, str]]:
    return [
        {"item_id": v.item_id, "flag": w.name, "detail": w.detail}
        for v in verdicts
        for w in v.warnings
    ]


def write_issues_log(verdicts: Iterable[QcVerdict], path: str | os.PathLike) -> Path:
    """Warnings of accepted items as a JSON list of ``{item_id, flag, detail}``."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        json.dump(issues_from_verdicts(verdicts), f, indent=2, ensure_ascii=False)
        f.write("\n")
    return path


def read_issues_log(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


# -- sweep reports -----------------------------------------------------------


def _stat(s: Mapping[str, Any]) -> str:
    text = f"{s['mean']:.2f} ± {s['sd']:.2f} s"
    if s["n"] > 1:
        return text + f" (min {s['min']:.2f}, max {s['max']:.2f})"
    return text + f" (n={s['n']})"


def format_report(summary: Mapping[str, Any]) -> str:
    """Plain-text version of a sweep summary."""
    lines = [
        "Seed sweep summary",
        f"  Runs              {summary['runs']} ({summary['completed_runs']} complete, "
        f"{summary['failed_runs']} not complete)",
        f"  Target items      {summary['target_items']}",
        f"  QC acceptance     {summary['accepted_items']}/{summary['target_items']} "
        f"(rate {summary['acceptance_rate']:.1f})",
        f"  Total attempts    {summary['attempts_total']}",
        f"  Retry rate        {summary['retry_rate_pct']:.1f}% "
        f"({summary['retries']}/{summary['attempts_total']} attempts)",
    ]
    if summary["runtime_per_run"]["n"]:
        lines.append(f"  Runtime / run     {_stat(summary['runtime_per_run'])}")
        lines.append(f"  Runtime / item    {_stat(summary['runtime_per_item'])}")
    lines.append(
        f"  Warning flags     {summary['warnings_total']} ({summary['warning_share_pct']:.1f}%) "
        f"in {summary['flagged_runs']} runs"
    )
    for flag, entry in summary["warnings_by_flag"].items():
        lines.append(f"    {flag:<38} {entry['count']:>3}  {entry['share_pct']:.1f}%")
    lines.append("")
    lines.append(f"  {'Lecture':<16}{'Seed':>5}{'Runtime':>10}{'s/q':>7}{'Tries':>7}{'Retries':>9}{'Retry%':>8}  Flags")
    for row in summary["per_run"]:
        flags = ",".join(f"{k}x{v}" for k, v in sorted(row["flags"].items())) or "--"
        if row.get("error"):
            flags = f"error: {row['error']}"
        lines.append(
            f"  {row['lecture']:<16}{row['seed']:>5}{row['wall_seconds']:>10.2f}{row['seconds_per_item']:>7.2f}"
            f"{row['tries']:>7}{row['retries']:>9}{row['retry_pct']:>8.1f}  {flags}"
        )
    return "\n".join(lines) + "\n"


def aggregate_report(summary: Mapping[str, Any], out_dir: str | os.PathLike) -> tuple[Path, Path]:
    """Write ``sweep_summary.json`` and ``sweep_report.txt`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "sweep_summary.json"
    with open(json_path, "w", encoding="utf-8", newline="") as f:
        json.dump(summary, f, indent=2, ensure_ascii=False)
        f.write("\n")
    txt_path = out_dir / "sweep_report.txt"
    txt_path.write_text(format_report(summary), encoding="utf-8")
    return json_path, txt_path
