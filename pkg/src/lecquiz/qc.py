"""Two-level quality control for drafted items.

Hard checks reject the item and trigger a retry; warnings accept it and put
it on the human review queue.
"""
from __future__ import annotations

import itertools
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Sequence

from . import kernels
from .expr import (
    EquivConfig,
    ParseOutcome,
    ParseStatus,
    Verdict,
    compare,
    eval_const,
    DomainError,
    parse_option_text,
)
from .items import LETTERS, WARN_DUP_CONST, WARN_ROUNDING, Finding, McqItem, QcVerdict

DEFAULT_ROUNDING_KEYWORDS = (
    "round",
    "rounded",
    "approximately",
    "approx",
    "nearest",
    "decimal place",
    "decimal places",
    "significant figure",
)

CHECK_SCHEMA = "schema"
CHECK_EXTRACT = "json_extraction"
CHECK_DUPLICATE = "duplicate_question"
CHECK_SINGLE_CORRECT = "single_correct"
CHECK_UNIQUE_CORRECT = "unique_correct"

_DECIMAL_RE = re.compile(r"[+-]?(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?")


@dataclass(frozen=True)
class QcConfig:
    fuzzy_threshold: float = 0.92
    equiv: EquivConfig = field(default_factory=EquivConfig)
    rounding_keywords: tuple[str, ...] = DEFAULT_ROUNDING_KEYWORDS

    def __post_init__(self):
        if not 0 < self.fuzzy_threshold <= 1:
            raise ValueError("fuzzy_threshold must be in (0, 1]")
        if not self.rounding_keywords:
            raise ValueError("rounding_keywords must be non-empty")


def normalize_text(s: str) -> str:
    """Lowercase, NFKC-normalize and collapse whitespace."""
    # NFKC and lower() can each undo the other's fixed point on a few code
    # points, so iterate to a fixed point.
    prev = None
    while s != prev:
        prev = s
        s = " ".join(unicodedata.normalize("NFKC", s).lower().split())
    return s


def similarity(a: str, b: str) -> float:
    """``1 - edit_distance / max_len`` over normalized text; 1.0 for two empties."""
    a, b = normalize_text(a), normalize_text(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - kernels.levenshtein(a, b) / longest


def check_duplicate_question(
    candidate: McqItem, accepted: Sequence[McqItem], cfg: QcConfig = QcConfig()
) -> list[Finding]:
    stem = normalize_text(candidate.question)
    for prior in accepted:
        other = normalize_text(prior.question)
        if stem == other:
            return [Finding(CHECK_DUPLICATE, f"exact duplicate of {prior.id}")]
        score = similarity(stem, other)
        if score >= cfg.fuzzy_threshold:
            return [Finding(CHECK_DUPLICATE, f"near-duplicate of {prior.id} (similarity {score:.4f})")]
    return []


def check_single_correct_structure(item: McqItem) -> list[Finding]:
    # The schema already forces one letter; this re-asserts it so that
    # multi-answer formats have somewhere to plug in.
    if item.correct_option not in LETTERS or set(item.options) != set(LETTERS):
        return [Finding(CHECK_SINGLE_CORRECT, f"correct option {item.correct_option!r} is not one of A-E")]
    return []


def _parsed_options(item: McqItem) -> dict[str, ParseOutcome]:
    return {k: parse_option_text(v) for k, v in item.options.items()}


def check_unique_correct(item: McqItem, cfg: QcConfig = QcConfig()) -> list[Finding]:
    parsed = _parsed_options(item)
    key = item.correct_option
    key_text = normalize_text(item.correct_text)
    failures = []
    for letter, text in item.distractors():
        if normalize_text(text) == key_text:
            failures.append(Finding(CHECK_UNIQUE_CORRECT, f"option {letter} repeats the correct option {key}"))
            continue
        result = compare(parsed[letter], parsed[key], cfg.equiv)
        if result.verdict is Verdict.EQUIVALENT:
            failures.append(
                Finding(CHECK_UNIQUE_CORRECT, f"option {letter} is equivalent to the correct option {key}")
            )
    return failures


def warn_duplicate_constant_distractors(item: McqItem, cfg: QcConfig = QcConfig()) -> list[Finding]:
    parsed = _parsed_options(item)
    constants = [
        (letter, parsed[letter])
        for letter, _ in item.distractors()
        if parsed[letter].status is ParseStatus.CONSTANT
    ]
    flags = []
    for (la, pa), (lb, pb) in itertools.combinations(constants, 2):
        result = compare(pa, pb, cfg.equiv)
        if result.verdict is Verdict.EQUIVALENT:
            value = result.values[0][0]
            flags.append(Finding(WARN_DUP_CONST, f"options {la},{lb} both evaluate to {value:.10g}"))
    return flags


def _has_rounding_phrase(stem: str, keywords: Sequence[str]) -> bool:
    stem = normalize_text(stem)
    return any(re.search(r"\b" + re.escape(k.lower()), stem) for k in keywords)


def warn_missing_rounding(item: McqItem, cfg: QcConfig = QcConfig()) -> list[Finding]:
    parsed = parse_option_text(item.correct_text)
    if parsed.status is not ParseStatus.CONSTANT or not _DECIMAL_RE.fullmatch(parsed.text):
        return []
    try:
        value = eval_const(parsed.expr, log_base=cfg.equiv.log_base)
    except DomainError:
        return []
    if abs(value - round(value)) <= 1e-9:
        return []
    if _has_rounding_phrase(item.question, cfg.rounding_keywords):
        return []
    return [
        Finding(
            WARN_ROUNDING,
            f"correct option {item.correct_option} is the decimal {parsed.text!r} "
            "but the stem gives no rounding instruction",
        )
    ]


def run_qc(candidate: McqItem, accepted: Sequence[McqItem], cfg: QcConfig = QcConfig()) -> QcVerdict:
    """Run every check on ``candidate`` against the items already accepted."""
    hard = [
        *check_single_correct_structure(candidate),
        *check_duplicate_question(candidate, accepted, cfg),
        *check_unique_correct(candidate, cfg),
    ]
    warnings = [
        *warn_missing_rounding(candidate, cfg),
        *warn_duplicate_constant_distractors(candidate, cfg),
    ]
    return QcVerdict(candidate.id, tuple(hard), tuple(warnings))


def qc_bank(items: Sequence[McqItem], cfg: QcConfig = QcConfig()) -> list[QcVerdict]:
    """Re-check a finished bank in order, each item against those before it."""
    return [run_qc(item, items[:i], cfg) for i, item in enumerate(items)]
