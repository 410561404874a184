"""Item schema, run configuration and run manifest records."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from .expr import EquivConfig

log = logging.getLogger(__name__)

LETTERS = ("A", "B", "C", "D", "E")
OPTION_KEYS = tuple(f"Option{x}" for x in LETTERS)

# Order the generator is asked to emit keys in; validation reports the first
# problem in this order.
REQUIRED_KEYS = (
    "SourcePages",
    "Question",
    *OPTION_KEYS,
    "CorrectOption",
    "Explanation",
    "ID",
    "Category",
    "FocusTopic",
)
# Column order for questions.json / QuestionBank.csv.
INTERNAL_FIELDS = (
    "ID",
    "SourcePages",
    "Question",
    *OPTION_KEYS,
    "CorrectOption",
    "Explanation",
    "Category",
    "FocusTopic",
)
_NON_EMPTY = {"SourcePages", "Question", "ID", *OPTION_KEYS}

WARN_ROUNDING = "rounding_instruction_missing_suspect"
WARN_DUP_CONST = "duplicate_options_numeric_const"
WARNING_FLAGS = (WARN_ROUNDING, WARN_DUP_CONST)


class SchemaViolation(ValueError):
    """A generator reply is missing a required key or has a malformed value."""

    def __init__(self, key: str, message: str | None = None):
        super().__init__(message or f"missing or malformed key {key!r}")
        self.key = key


class InvalidCorrectOption(SchemaViolation):
    def __init__(self, value: Any):
        super().__init__("CorrectOption", f"CorrectOption must be one letter A-E, got {value!r}")
        self.value = value


@dataclass(frozen=True)
class McqItem:
    id: str
    source_pages: str
    question: str
    options: dict[str, str]
    correct_option: str
    explanation: str = ""
    category: str = "MCQ"
    focus_topic: str = ""

    @property
    def correct_text(self) -> str:
        return self.options[self.correct_option]

    def distractors(self) -> list[tuple[str, str]]:
        return [(k, v) for k, v in self.options.items() if k != self.correct_option]

    def to_internal(self) -> dict[str, str]:
        """Serialize to the internal artifact form (generator key names)."""
        out = {"ID": self.id, "SourcePages": self.source_pages, "Question": self.question}
        for letter in LETTERS:
            out[f"Option{letter}"] = self.options[letter]
        out["CorrectOption"] = self.correct_option
        out["Explanation"] = self.explanation
        out["Category"] = self.category
        out["FocusTopic"] = self.focus_topic
        return out

    def with_id(self, new_id: str) -> "McqItem":
        return dataclasses.replace(self, id=new_id)


def validate_item(raw: Any) -> McqItem:
    """Check a parsed generator reply and map it onto :class:`McqItem`.

    Raises :class:`SchemaViolation` naming the first bad key, or
    :class:`InvalidCorrectOption` when the answer key is not a single letter
    A-E.  Unknown extra keys are dropped.
    """
    if not isinstance(raw, Mapping):
        raise SchemaViolation("<root>", f"expected a JSON object, got {type(raw).__name__}")
    for key in REQUIRED_KEYS:
        if key not in raw:
            raise SchemaViolation(key, f"missing key {key!r}")
        value = raw[key]
        if not isinstance(value, str):
            raise SchemaViolation(key, f"{key!r} must be a string, got {type(value).__name__}")
        if key in _NON_EMPTY and not value.strip():
            raise SchemaViolation(key, f"{key!r} must be non-empty")
        if "\x00" in value:
            # cannot be written to CSV
            raise SchemaViolation(key, f"{key!r} contains a NUL character")
    letter = raw["CorrectOption"].strip().upper()
    if letter not in LETTERS:
        raise InvalidCorrectOption(raw["CorrectOption"])
    extra = sorted(set(raw) - set(REQUIRED_KEYS))
    if extra:
        log.info("dropping unknown keys from generator reply: %s", ", ".join(extra))
    return McqItem(
        id=raw["ID"].strip(),
        source_pages=raw["SourcePages"].strip(),
        question=raw["Question"],
        options={x: raw[f"Option{x}"] for x in LETTERS},
        correct_option=letter,
        explanation=raw["Explanation"],
        category=raw["Category"],
        focus_topic=raw["FocusTopic"],
    )


def checksum_file(path: str | os.PathLike) -> str:
    """SHA-256 of the file's bytes as 64 lowercase hex characters."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def rfc3339(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


# -- run configuration -------------------------------------------------------

DEFAULT_COMMAND = (
    "llama-cli -m {model} -f {prompt_file} --seed {seed} --temp {temperature} "
    "--top-p {top_p} -n {max_new_tokens} -c {context_window} --no-display-prompt"
)


@dataclass
class ModelSpec:
    command_template: str = DEFAULT_COMMAND
    model_id: str = "qwen2.5-14b-instruct-q4_k_m.gguf"
    context_window: int = 4096
    temperature: float = 0.2
    top_p: float = 0.9
    max_new_tokens: int = 900


@dataclass
class QcSpec:
    fuzzy_threshold: float = 0.92
    equiv: EquivConfig = field(default_factory=EquivConfig)
    retry_max: int = 3
    n_questions: int = 8

    def __post_init__(self):
        if self.retry_max < 0:
            raise ValueError("retry_max must be >= 0")
        if self.n_questions < 1:
            raise ValueError("n_questions must be >= 1")
        if not 0 < self.fuzzy_threshold <= 1:
            raise ValueError("fuzzy_threshold must be in (0, 1]")


@dataclass
class RunConfig:
    """Everything that defines a reproducible run."""

    input_document: str
    seed: int = 0
    model_spec: ModelSpec = field(default_factory=ModelSpec)
    qc_spec: QcSpec = field(default_factory=QcSpec)
    topic_plan_mode: str = "provided"
    topics: list[str] = field(default_factory=list)
    lecture: str = ""
    max_chunk_chars: int = 8000
    extractor_command: str | None = None

    def __post_init__(self):
        if self.topic_plan_mode not in ("provided", "generated"):
            raise ValueError(f"unknown topic_plan_mode {self.topic_plan_mode!r}")
        if not self.lecture:
            self.lecture = Path(self.input_document).stem

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        data = dict(data)
        model = ModelSpec(**data.pop("model_spec", {}))
        qc = dict(data.pop("qc_spec", {}))
        qc["equiv"] = EquivConfig(**qc.pop("equiv", {}))
        return cls(model_spec=model, qc_spec=QcSpec(**qc), **data)


# -- run records -------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    """A named hard-check failure or warning flag."""

    name: str
    detail: str


@dataclass(frozen=True)
class QcVerdict:
    item_id: str
    hard_failures: tuple[Finding, ...] = ()
    warnings: tuple[Finding, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.hard_failures

    def reason(self) -> str:
        return "; ".join(f"{f.name}: {f.detail}" for f in self.hard_failures)


@dataclass
class Attempt:
    q_index: int
    attempt: int
    seed: int
    accepted: bool
    reason: str = ""


@dataclass
class RunManifest:
    config: dict
    started_at: str = ""
    finished_at: str = ""
    wall_seconds: float = 0.0
    status: str = ""
    attempts: list[Attempt] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)
    tool_versions: dict[str, str] = field(default_factory=dict)

    @property
    def attempts_total(self) -> int:
        return len(self.attempts)

    @property
    def accepted_count(self) -> int:
        return sum(a.accepted for a in self.attempts)

    @property
    def rejected_count(self) -> int:
        return self.attempts_total - self.accepted_count

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "wall_seconds": round(self.wall_seconds, 6),
            "status": self.status,
            "attempts_total": self.attempts_total,
            "accepted_count": self.accepted_count,
            "rejected_count": self.rejected_count,
            "attempts": [dataclasses.asdict(a) for a in self.attempts],
            "outputs": {name: {"sha256": digest} for name, digest in self.outputs.items()},
            "tool_versions": self.tool_versions,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunManifest":
        return cls(
            config=data["config"],
            started_at=data.get("started_at", ""),
            finished_at=data.get("finished_at", ""),
            wall_seconds=float(data.get("wall_seconds", 0.0)),
            status=data.get("status", ""),
            attempts=[Attempt(**a) for a in data.get("attempts", [])],
            outputs={k: v["sha256"] for k, v in data.get("outputs", {}).items()},
            tool_versions=dict(data.get("tool_versions", {})),
        )

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
            f.write("\n")


def load_manifest(path: str | os.PathLike) -> RunManifest:
    with open(path, encoding="utf-8") as f:
        return RunManifest.from_dict(json.load(f))


def verify_checksums(manifest: RunManifest, run_dir: str | os.PathLike) -> dict[str, bool]:
    """Recompute every recorded output digest; map file name to match."""
    run_dir = Path(run_dir)
    return {name: checksum_file(run_dir / name) == digest for name, digest in manifest.outputs.items()}
