"""Prompting and invoking the draft generator."""
from __future__ import annotations

import hashlib
import json
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Sequence

from .items import ModelSpec


class GeneratorError(RuntimeError):
    pass


class GeneratorTimeout(GeneratorError):
    pass


class ExtractionError(ValueError):
    pass


class NoObjectFound(ExtractionError):
    pass


class MalformedObject(ExtractionError):
    pass


@dataclass(frozen=True)
class PromptContext:
    lecture_excerpt: str
    focus_topic: str
    q_index: int
    previously_asked: tuple[str, ...] = ()
    source_pages_hint: str = "p.1"

    def __post_init__(self):
        if not self.lecture_excerpt.strip():
            raise ValueError("lecture_excerpt must be non-empty")
        if self.q_index < 1:
            raise ValueError("q_index must be >= 1")


PROMPT_TEMPLATE = """\
You are an instructor writing high-quality multiple-choice questions (MCQs).
Use ONLY the lecture excerpt below as your source.

OUTPUT FORMAT (STRICT JSON ONLY):
- Output must be a single JSON object only (no markdown, no commentary).
- Create exactly ONE MCQ with 5 choices: OptionA..OptionE.
- CorrectOption must be one of: A, B, C, D, E (single letter).
- SourcePages must be included (e.g., "p.1" or "p.1-2").

{{"SourcePages":"{source_pages}","Question":"...?",
 "OptionA":"...","OptionB":"...","OptionC":"...","OptionD":"...","OptionE":"...",
 "CorrectOption":"A","Explanation":"...",
 "ID":"{item_id}","Category":"MCQ","FocusTopic":"{focus_topic}"}}

CONTENT RULES:
- The question must be answerable from the excerpt alone.
- Exactly 5 options and exactly 1 correct option.
- No outside knowledge; no ambiguous or multiple-correct items.
- Keep the explanation short and tied to the excerpt.
- Do not repeat a previously asked question.
- If the correct answer is a rounded number, state the rounding in the question.

FOCUS TOPIC: {focus_topic}
{previous}
LECTURE EXCERPT ({source_pages}):
{excerpt}
"""


def render_prompt(ctx: PromptContext, feedback: str | None = None) -> str:
    """Fill the one-question prompt; ``feedback`` is the previous rejection reason."""
    previous = ""
    if ctx.previously_asked:
        previous = "\nPREVIOUSLY ASKED (do not repeat):\n" + "".join(f"- {q}\n" for q in ctx.previously_asked)
    prompt = PROMPT_TEMPLATE.format(
        source_pages=ctx.source_pages_hint,
        item_id=f"Q{ctx.q_index:02d}",
        focus_topic=ctx.focus_topic,
        previous=previous,
        excerpt=ctx.lecture_excerpt.strip(),
    )
    if feedback:
        prompt += f"\nYOUR PREVIOUS ATTEMPT WAS REJECTED: {feedback}. Fix this and output one JSON object.\n"
    return prompt


def attempt_seed(run_seed: int, q_index: int, attempt: int) -> int:
    """Seed for attempt ``attempt`` (0-based) of slot ``q_index``."""
    if attempt == 0:
        return run_seed
    digest = hashlib.sha256(f"{q_index}:{attempt}".encode()).digest()
    return (run_seed ^ int.from_bytes(digest[:4], "big")) & 0x7FFFFFFF


def extract_json_object(raw_text: str) -> dict:
    """Parse the first balanced ``{...}`` span in ``raw_text``.

    Surrounding noise such as code fences is ignored.  Raises
    :class:`NoObjectFound` if no balanced span exists and
    :class:`MalformedObject` if the span is not a valid JSON object.
    """
    start = raw_text.find("{")
    if start < 0:
        raise NoObjectFound("no JSON object in generator output")
    depth = 0
    in_string = escaped = False
    for i in range(start, len(raw_text)):
        ch = raw_text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                span = raw_text[start : i + 1]
                break
    else:
        raise NoObjectFound("unbalanced JSON object in generator output")
    try:
        obj = json.loads(span)
    except json.JSONDecodeError as exc:
        raise MalformedObject(f"invalid JSON: {exc.msg} at char {exc.pos}") from None
    return obj


@dataclass
class GeneratorReply:
    raw_text: str
    attempt_seed: int
    extracted_object: dict | None = None
    extraction_error: str | None = None

    @classmethod
    def from_text(cls, raw_text: str, seed: int) -> "GeneratorReply":
        try:
            return cls(raw_text, seed, extract_json_object(raw_text))
        except ExtractionError as exc:
            return cls(raw_text, seed, None, f"{type(exc).__name__}: {exc}")


class Generator(Protocol):
    def complete(self, prompt: str, seed: int, decoding: ModelSpec) -> str: ...


@dataclass
class GeneratorSpec:
    kind: str = "scripted-mock"
    command_template: str = ""
    timeout_seconds: int = 120
    transcript: str = ""

    def __post_init__(self):
        if self.kind not in ("external-command", "scripted-mock"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "external-command" and not self.command_template.strip():
            raise ValueError("external-command generator needs a command template")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")


class CommandGenerator:
    """Run a local inference command; the prompt travels through a temp file.

    Placeholders in the template: ``{prompt_file}``, ``{seed}``,
    ``{temperature}``, ``{top_p}``, ``{max_new_tokens}``, ``{context_window}``
    and ``{model}``.
    """

    def __init__(self, command_template: str, timeout_seconds: float = 120):
        self.command_template = command_template
        self.timeout_seconds = timeout_seconds

    def complete(self, prompt: str, seed: int, decoding: ModelSpec) -> str:
        fd, prompt_file = tempfile.mkstemp(prefix="lecquiz-prompt-", suffix=".txt")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(prompt)
            values = dict(
                prompt_file=prompt_file,
                seed=seed,
                temperature=decoding.temperature,
                top_p=decoding.top_p,
                max_new_tokens=decoding.max_new_tokens,
                context_window=decoding.context_window,
                model=decoding.model_id,
            )
            argv = [tok.format(**values) for tok in shlex.split(self.command_template)]
            try:
                proc = subprocess.run(argv, capture_output=True, timeout=self.timeout_seconds, check=False)
            except subprocess.TimeoutExpired:
                raise GeneratorTimeout(f"generator timed out after {self.timeout_seconds}s") from None
            except OSError as exc:
                raise GeneratorError(f"cannot run generator: {exc}") from exc
        finally:
            os.unlink(prompt_file)
        stderr = proc.stderr.decode("utf-8", "replace").strip()
        if proc.returncode != 0:
            raise GeneratorError(f"generator exited with {proc.returncode}: {stderr}")
        out = proc.stdout.decode("utf-8", "replace")
        if not out.strip():
            raise GeneratorError(f"generator produced no output{': ' + stderr if stderr else ''}")
        return out


class ScriptedGenerator:
    """Replay canned replies in order; for tests and offline replays."""

    def __init__(self, replies: Sequence[str]):
        self.replies = list(replies)
        self.position = 0
        self.prompts: list[str] = []

    @classmethod
    def from_jsonl(cls, path: str | os.PathLike) -> "ScriptedGenerator":
        replies = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    replies.append(json.loads(line)["raw_text"])
        return cls(replies)

    def complete(self, prompt: str, seed: int, decoding: ModelSpec) -> str:
        self.prompts.append(prompt)
        if self.position >= len(self.replies):
            raise GeneratorError("scripted transcript exhausted")
        reply = self.replies[self.position]
        self.position += 1
        if not reply.strip():
            raise GeneratorError("generator produced no output")
        return reply


def write_transcript(path: str | os.PathLike, replies: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in replies:
            f.write(json.dumps({"raw_text": r}, ensure_ascii=False) + "\n")


def make_generator(spec: GeneratorSpec, **fmt: Any) -> Generator:
    """Build a generator; ``fmt`` fills placeholders in the transcript path."""
    if spec.kind == "external-command":
        return CommandGenerator(spec.command_template, spec.timeout_seconds)
    path = spec.transcript.format(**fmt) if fmt else spec.transcript
    if not path:
        raise ValueError("scripted-mock generator needs a transcript path")
    return ScriptedGenerator.from_jsonl(Path(path))


def invoke(generator: Generator, prompt: str, seed: int, decoding: ModelSpec) -> GeneratorReply:
    """Call ``generator`` once and pre-extract the JSON object from its reply."""
    return GeneratorReply.from_text(generator.complete(prompt, seed, decoding), seed)
