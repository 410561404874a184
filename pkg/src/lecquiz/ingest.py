"""Lecture ingestion: page text, chunking and the topic plan."""
from __future__ import annotations

import re
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

FORM_FEED = "\f"
DEFAULT_EXTRACTOR = "pdftotext -layout {path} -"
DEFAULT_MAX_CHUNK_CHARS = 8000

_PARAGRAPH_SPLIT = re.compile(r"\n\s*\n")
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


class IngestError(RuntimeError):
    pass


class EmptyDocumentError(IngestError):
    pass


class ExtractorError(IngestError):
    pass


class PlanError(RuntimeError):
    pass


@dataclass(frozen=True)
class LectureChunk:
    index: int
    start_page: int
    end_page: int
    text: str

    @property
    def pages_label(self) -> str:
        if self.start_page == self.end_page:
            return f"p.{self.start_page}"
        return f"p.{self.start_page}-{self.end_page}"


def split_pages(text: str, marker: str | None = None) -> list[str]:
    if marker is None:
        pages = text.split(FORM_FEED)
    else:
        pages, cur = [], []
        for line in text.splitlines(keepends=True):
            if line.strip() == marker:
                pages.append("".join(cur))
                cur = []
            else:
                cur.append(line)
        pages.append("".join(cur))
    # pdftotext ends every page with a form feed
    if len(pages) > 1 and not pages[-1].strip():
        pages.pop()
    return pages


def extract_text(
    document: str | Path,
    *,
    extractor_command: str | None = None,
    marker: str | None = None,
    timeout: float = 120,
) -> list[tuple[int, str]]:
    """Return ``(page_number, text)`` pairs, 1-indexed.

    PDFs go through ``extractor_command`` (``{path}`` is substituted and the
    command must print form-feed separated pages); anything else is read as
    UTF-8 text and split on form feeds or on lines equal to ``marker``.
    """
    path = Path(document)
    if path.suffix.lower() == ".pdf":
        argv = [tok.format(path=str(path)) for tok in shlex.split(extractor_command or DEFAULT_EXTRACTOR)]
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ExtractorError(f"text extractor failed to run: {exc}") from exc
        if proc.returncode != 0:
            stderr = proc.stderr.decode("utf-8", "replace").strip()
            raise ExtractorError(f"text extractor exited with {proc.returncode}: {stderr}")
        text = proc.stdout.decode("utf-8", "replace")
    else:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IngestError(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise EmptyDocumentError(f"no extractable text in {path}")
    return list(enumerate(split_pages(text, marker), start=1))


def _split_long(paragraph: str, limit: int) -> list[str]:
    pieces: list[str] = []
    cur = ""
    for sentence in _SENTENCE_SPLIT.split(paragraph):
        while len(sentence) > limit:
            if cur:
                pieces.append(cur)
                cur = ""
            pieces.append(sentence[:limit])
            sentence = sentence[limit:]
        if not sentence:
            continue
        if cur and len(cur) + 1 + len(sentence) > limit:
            pieces.append(cur)
            cur = sentence
        else:
            cur = f"{cur} {sentence}" if cur else sentence
    if cur:
        pieces.append(cur)
    return pieces


def segment(pages: Sequence[tuple[int, str]], max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS) -> list[LectureChunk]:
    """Greedily pack whole paragraphs into chunks of at most ``max_chunk_chars``.

    A paragraph longer than the limit is split at sentence ends (and a
    sentence longer than the limit at the limit).  Page ranges of consecutive
    chunks leave no gaps and together cover every page; neighbours share a
    page only when that page was split between them.
    """
    if max_chunk_chars <= 0:
        raise ValueError("max_chunk_chars must be positive")
    pieces: list[tuple[int, str]] = []
    for page_no, text in pages:
        for para in _PARAGRAPH_SPLIT.split(text):
            para = para.strip()
            if not para:
                continue
            if len(para) > max_chunk_chars:
                pieces.extend((page_no, p) for p in _split_long(para, max_chunk_chars))
            else:
                pieces.append((page_no, para))
    if not pieces:
        return []

    groups: list[list[tuple[int, str]]] = [[]]
    cur_len = 0
    for page_no, piece in pieces:
        added = len(piece) + (2 if groups[-1] else 0)
        if groups[-1] and cur_len + added > max_chunk_chars:
            groups.append([])
            cur_len, added = 0, len(piece)
        groups[-1].append((page_no, piece))
        cur_len += added

    # A chunk's range runs from the page of its first paragraph to the page
    # before the next chunk starts, so pages without text are absorbed and a
    # page split between two chunks is shared by both.
    final_page = max(p for p, _ in pages)
    starts = [1] + [g[0][0] for g in groups[1:]]
    chunks = []
    for i, group in enumerate(groups):
        if i + 1 < len(groups):
            nxt = starts[i + 1]
            end = nxt if group[-1][0] == nxt else nxt - 1
        else:
            end = final_page
        text = "\n\n".join(piece for _, piece in group)
        chunks.append(LectureChunk(i, starts[i], end, text))
    return chunks


def parse_topic_lines(text: str, limit: int | None = None) -> list[str]:
    topics: list[str] = []
    for line in text.splitlines():
        label = re.sub(r"^\s*(?:[-*•]|\d+[.)])\s*", "", line).strip()
        if label and label not in topics:
            topics.append(label)
    return topics[:limit] if limit else topics


def topic_prompt(chunks: Sequence[LectureChunk], n_topics: int) -> str:
    excerpt = "\n\n".join(c.text for c in chunks)
    return (
        f"List up to {n_topics} short topic labels (key definitions, laws, worked examples) "
        "covered by the lecture excerpt below, one per line, no numbering or commentary.\n\n"
        f"LECTURE EXCERPT:\n{excerpt}\n"
    )


def plan_topics(
    chunks: Sequence[LectureChunk],
    mode: str = "provided",
    *,
    provided: Sequence[str] = (),
    ask: Callable[[str], str] | None = None,
    n_topics: int = 8,
) -> list[str]:
    """Build the topic plan used to vary focus across question slots.

    ``ask`` maps a prompt to the generator's raw text and is only used in
    ``generated`` mode.
    """
    if not chunks:
        raise PlanError("no lecture chunks to plan from")
    if mode == "provided":
        topics = list(provided)
        if len(set(topics)) != len(topics):
            raise PlanError("provided topic labels must be unique")
    elif mode == "generated":
        if ask is None:
            raise PlanError("generated topic plan needs a generator")
        topics = parse_topic_lines(ask(topic_prompt(chunks, n_topics)), n_topics)
    else:
        raise PlanError(f"unknown topic plan mode {mode!r}")
    if not topics:
        raise PlanError("topic plan is empty (give topics or use the generated plan mode)")
    return topics
