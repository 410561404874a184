"""Run orchestration: one reproducible run, seed sweeps and deploy-set selection."""
from __future__ import annotations

import dataclasses
import json
import logging
import platform
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import __version__, kernels
from .export import (
    ExportRecord,
    read_issues_log,
    read_questions_json,
    write_issues_log,
    write_question_bank_csv,
    write_questions_json,
)
from .generation import (
    Generator,
    GeneratorError,
    PromptContext,
    attempt_seed,
    invoke,
    render_prompt,
)
from .ingest import extract_text, plan_topics, segment
from .items import (
    WARNING_FLAGS,
    Attempt,
    McqItem,
    QcVerdict,
    RunConfig,
    RunManifest,
    SchemaViolation,
    checksum_file,
    load_manifest,
    rfc3339,
    utc_now,
    validate_item,
)
from .qc import CHECK_EXTRACT, CHECK_SCHEMA, QcConfig, run_qc

log = logging.getLogger(__name__)

STATUS_COMPLETE = "complete"
STATUS_ABORTED = "aborted-budget-exhausted"
STATUS_ERROR = "error"

QUESTIONS_JSON = "questions.json"
QUESTION_BANK_CSV = "QuestionBank.csv"
ISSUES_JSON = "auto_check_issues.json"
MANIFEST_JSON = "run_manifest.json"


class RunAborted(RuntimeError):
    pass


class NoEligibleRun(RuntimeError):
    pass


@dataclass
class RunState:
    accepted: list[McqItem] = field(default_factory=list)
    attempts: list[Attempt] = field(default_factory=list)
    slot_attempts: dict[int, int] = field(default_factory=dict)
    verdicts: list[QcVerdict] = field(default_factory=list)
    started_at: datetime | None = None
    finished_at: datetime | None = None

    @property
    def attempts_total(self) -> int:
        return len(self.attempts)

    @property
    def retries(self) -> int:
        return sum(not a.accepted for a in self.attempts)

    @property
    def warnings(self) -> list:
        return [w for v in self.verdicts for w in v.warnings]


@dataclass
class RunResult:
    status: str
    state: RunState
    manifest: RunManifest
    run_dir: Path
    outputs: dict[str, Path]

    @property
    def tries(self) -> int:
        return self.state.attempts_total

    @property
    def retries(self) -> int:
        return self.state.retries

    @property
    def retry_rate(self) -> float:
        return self.retries / self.tries if self.tries else 0.0


def run_dir_name(cfg: RunConfig) -> str:
    return f"{cfg.lecture}_seed{cfg.seed}"


def qc_config_for(cfg: RunConfig) -> QcConfig:
    qc = cfg.qc_spec
    # sampled-equivalence draws are tied to the run seed
    equiv = dataclasses.replace(qc.equiv, rng_seed=qc.equiv.rng_seed * 1_000_003 + cfg.seed)
    return QcConfig(fuzzy_threshold=qc.fuzzy_threshold, equiv=equiv)


def _try_slot(cfg, generator, ctx, q, accepted, qc_cfg, state) -> tuple[McqItem | None, QcVerdict | None, bool]:
    """Attempt one question slot; returns (item, verdict, only_generator_errors)."""
    feedback = None
    generator_errors = 0
    budget = 1 + cfg.qc_spec.retry_max
    for attempt in range(budget):
        seed = attempt_seed(cfg.seed, q, attempt)
        state.slot_attempts[q] = attempt + 1
        prompt = render_prompt(ctx, feedback)
        reason = ""
        item = verdict = None
        try:
            reply = invoke(generator, prompt, seed, cfg.model_spec)
        except GeneratorError as exc:
            generator_errors += 1
            reason = f"generator_error: {exc}"
        else:
            if reply.extracted_object is None:
                reason = f"{CHECK_EXTRACT}: {reply.extraction_error}"
            else:
                try:
                    item = validate_item(reply.extracted_object).with_id(f"Q{q:02d}")
                except SchemaViolation as exc:
                    reason = f"{CHECK_SCHEMA}: {exc}"
                else:
                    verdict = run_qc(item, accepted, qc_cfg)
                    if not verdict.passed:
                        reason = verdict.reason()
        state.attempts.append(Attempt(q, attempt, seed, not reason, reason))
        if not reason:
            return item, verdict, False
        log.info("Q%02d attempt %d rejected: %s", q, attempt, reason)
        feedback = reason
    return None, None, generator_errors == budget


def execute_run(
    cfg: RunConfig,
    generator: Generator,
    out_dir: str | Path,
    *,
    clock: Callable[[], datetime] = utc_now,
    tool_versions: Mapping[str, str] | None = None,
) -> RunResult:
    """Ingest, plan, then draft/QC/retry until ``n_questions`` items are accepted.

    A slot that fails ``1 + retry_max`` times aborts the run.  Artifacts and
    the manifest are written in every case; if the slot failed only because
    the generator itself kept erroring, :class:`GeneratorError` is raised
    after writing.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = RunState(started_at=clock())
    n = cfg.qc_spec.n_questions

    pages = extract_text(cfg.input_document, extractor_command=cfg.extractor_command)
    chunks = segment(pages, cfg.max_chunk_chars)
    topics = plan_topics(
        chunks,
        cfg.topic_plan_mode,
        provided=cfg.topics,
        ask=lambda prompt: generator.complete(prompt, cfg.seed, cfg.model_spec),
        n_topics=n,
    )
    qc_cfg = qc_config_for(cfg)

    status = STATUS_COMPLETE
    generator_failure = None
    for q in range(1, n + 1):
        chunk = chunks[(q - 1) % len(chunks)]
        ctx = PromptContext(
            lecture_excerpt=chunk.text,
            focus_topic=topics[(q - 1) % len(topics)],
            q_index=q,
            previously_asked=tuple(it.question for it in state.accepted),
            source_pages_hint=chunk.pages_label,
        )
        item, verdict, only_gen_errors = _try_slot(cfg, generator, ctx, q, state.accepted, qc_cfg, state)
        if item is None:
            status = STATUS_ABORTED
            if only_gen_errors:
                generator_failure = state.attempts[-1].reason
            log.warning("Q%02d exhausted its retry budget; aborting run", q)
            break
        state.accepted.append(item)
        state.verdicts.append(verdict)
    state.finished_at = clock()

    outputs = {
        QUESTIONS_JSON: write_questions_json(state.accepted, out_dir / QUESTIONS_JSON),
        QUESTION_BANK_CSV: write_question_bank_csv(state.accepted, out_dir / QUESTION_BANK_CSV),
        ISSUES_JSON: write_issues_log(state.verdicts, out_dir / ISSUES_JSON),
    }
    versions = {
        "lecquiz": __version__,
        "kernel_backend": kernels.BACKEND,
        "python": platform.python_version(),
    }
    versions.update(tool_versions or {})
    manifest = RunManifest(
        config=cfg.to_dict(),
        started_at=rfc3339(state.started_at),
        finished_at=rfc3339(state.finished_at),
        wall_seconds=(state.finished_at - state.started_at).total_seconds(),
        status=status,
        attempts=list(state.attempts),
        outputs={name: checksum_file(p) for name, p in outputs.items()},
        tool_versions=versions,
    )
    manifest.write(out_dir / MANIFEST_JSON)
    outputs[MANIFEST_JSON] = out_dir / MANIFEST_JSON
    if generator_failure:
        raise GeneratorError(generator_failure)
    return RunResult(status, state, manifest, out_dir, outputs)


# -- sweeps ------------------------------------------------------------------


@dataclass
class RunRow:
    lecture: str
    seed: int
    status: str
    n_questions: int
    accepted: int = 0
    tries: int = 0
    retries: int = 0
    wall_seconds: float = 0.0
    flags: dict[str, int] = field(default_factory=dict)
    run_dir: str = ""
    pdf_basename: str = ""
    error: str = ""

    @property
    def warnings(self) -> int:
        return sum(self.flags.values())

    @property
    def retry_pct(self) -> float:
        return 100.0 * self.retries / self.tries if self.tries else 0.0

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["wall_seconds"] = round(self.wall_seconds, 2)
        d["seconds_per_item"] = round(self.wall_seconds / self.accepted, 2) if self.accepted else 0.0
        d["retry_pct"] = round(self.retry_pct, 1)
        d["warnings"] = self.warnings
        return d

    @classmethod
    def from_run_dir(cls, run_dir: str | Path) -> "RunRow":
        run_dir = Path(run_dir)
        manifest = load_manifest(run_dir / MANIFEST_JSON)
        cfg = manifest.config
        flags: dict[str, int] = {}
        issues_path = run_dir / ISSUES_JSON
        if issues_path.exists():
            for issue in read_issues_log(issues_path):
                flags[issue["flag"]] = flags.get(issue["flag"], 0) + 1
        return cls(
            lecture=cfg["lecture"],
            seed=cfg["seed"],
            status=manifest.status,
            n_questions=cfg["qc_spec"]["n_questions"],
            accepted=manifest.accepted_count,
            tries=manifest.attempts_total,
            retries=manifest.rejected_count,
            wall_seconds=manifest.wall_seconds,
            flags=flags,
            run_dir=str(run_dir),
            pdf_basename=Path(cfg["input_document"]).name,
        )


def _row_from_result(cfg: RunConfig, result: RunResult) -> RunRow:
    flags: dict[str, int] = {}
    for w in result.state.warnings:
        flags[w.name] = flags.get(w.name, 0) + 1
    return RunRow(
        lecture=cfg.lecture,
        seed=cfg.seed,
        status=result.status,
        n_questions=cfg.qc_spec.n_questions,
        accepted=len(result.state.accepted),
        tries=result.tries,
        retries=result.retries,
        wall_seconds=result.manifest.wall_seconds,
        flags=flags,
        run_dir=str(result.run_dir),
        pdf_basename=Path(cfg.input_document).name,
    )


def _describe(values: Sequence[float]) -> dict[str, Any]:
    if not values:
        return {"n": 0, "mean": 0.0, "sd": 0.0, "min": 0.0, "max": 0.0}
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return {
        "n": len(values),
        "mean": round(statistics.fmean(values), 2),
        "sd": round(sd, 2),
        "min": round(min(values), 2),
        "max": round(max(values), 2),
    }


def summarize_runs(rows: Sequence[RunRow]) -> dict[str, Any]:
    """Aggregate per-run rows into the sweep summary document."""
    target = sum(r.n_questions for r in rows)
    accepted = sum(r.accepted for r in rows)
    attempts = sum(r.tries for r in rows)
    retries = sum(r.retries for r in rows)
    warnings = sum(r.warnings for r in rows)
    finished = [r for r in rows if r.status == STATUS_COMPLETE]
    per_run = [r.wall_seconds for r in finished]
    per_item = [r.wall_seconds / r.accepted for r in finished if r.accepted]
    by_flag = {}
    for flag in WARNING_FLAGS:
        count = sum(r.flags.get(flag, 0) for r in rows)
        by_flag[flag] = {"count": count, "share_pct": round(100.0 * count / accepted, 1) if accepted else 0.0}
    return {
        "runs": len(rows),
        "completed_runs": len(finished),
        "failed_runs": len(rows) - len(finished),
        "target_items": target,
        "accepted_items": accepted,
        "acceptance_rate": accepted / target if target else 0.0,
        "attempts_total": attempts,
        "retries": retries,
        "retry_rate": retries / attempts if attempts else 0.0,
        "retry_rate_pct": round(100.0 * retries / attempts, 1) if attempts else 0.0,
        "runtime_per_run": _describe(per_run),
        "runtime_per_item": _describe(per_item),
        "warnings_total": warnings,
        "warning_share_pct": round(100.0 * warnings / accepted, 1) if accepted else 0.0,
        "warnings_by_flag": by_flag,
        "flagged_runs": sum(1 for r in rows if r.warnings),
        "per_run": [r.to_dict() for r in rows],
    }


def sweep(
    cfgs: Sequence[RunConfig],
    make_generator: Callable[[RunConfig], Generator],
    out_root: str | Path,
    *,
    jobs: int = 1,
    clock: Callable[[], datetime] = utc_now,
) -> tuple[list[RunRow], dict[str, Any]]:
    """Execute every run (each in its own directory) and aggregate.

    A run that raises is recorded as an ``error`` row and the sweep moves on.
    """
    out_root = Path(out_root)

    def one(cfg: RunConfig) -> RunRow:
        run_dir = out_root / run_dir_name(cfg)
        try:
            result = execute_run(cfg, make_generator(cfg), run_dir, clock=clock)
        except Exception as exc:  # noqa: BLE001 - recorded in the summary
            log.error("run %s failed: %s", run_dir.name, exc)
            row = RunRow(cfg.lecture, cfg.seed, STATUS_ERROR, cfg.qc_spec.n_questions,
                         run_dir=str(run_dir), pdf_basename=Path(cfg.input_document).name,
                         error=f"{type(exc).__name__}: {exc}")
            if (run_dir / MANIFEST_JSON).exists():
                partial = RunRow.from_run_dir(run_dir)
                partial.status, partial.error = STATUS_ERROR, row.error
                return partial
            return row
        return _row_from_result(cfg, result)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, cfgs))
    else:
        rows = [one(cfg) for cfg in cfgs]
    return rows, summarize_runs(rows)


def rows_from_sweep_dir(sweep_dir: str | Path) -> list[RunRow]:
    """Rebuild run rows from the run directories under ``sweep_dir``."""
    rows = [RunRow.from_run_dir(p.parent) for p in sorted(Path(sweep_dir).glob(f"*/{MANIFEST_JSON}"))]
    summary_path = Path(sweep_dir) / "sweep_summary.json"
    if summary_path.exists():
        # keep the original run order
        order = {(r["lecture"], r["seed"]): i for i, r in enumerate(json.loads(summary_path.read_text())["per_run"])}
        rows.sort(key=lambda r: order.get((r.lecture, r.seed), len(order)))
    return rows


# -- deploy-set selection ----------------------------------------------------


@dataclass
class DeploySelection:
    runs: list[RunRow]
    records: list[ExportRecord]


def select_deploy_set(
    rows: Sequence[RunRow],
    rule: str = "zero-warnings",
    overrides: Mapping[str, int] | None = None,
    *,
    load_items: Callable[[RunRow], list[McqItem]] | None = None,
) -> DeploySelection:
    """Pick one run per lecture and merge their items into a curated bank.

    ``zero-warnings`` takes the lowest-seed complete run with no warning
    flags.  ``overrides`` maps a lecture name or ``L01``-style code to the
    seed to use instead.  Lectures are numbered in order of first appearance.
    """
    if rule != "zero-warnings":
        raise ValueError(f"unknown selection rule {rule!r}")
    overrides = dict(overrides or {})
    load_items = load_items or (lambda row: read_questions_json(Path(row.run_dir) / QUESTIONS_JSON))
    lectures: list[str] = []
    for r in rows:
        if r.lecture not in lectures:
            lectures.append(r.lecture)

    chosen: list[RunRow] = []
    records: list[ExportRecord] = []
    for n, lecture in enumerate(lectures, start=1):
        code = f"L{n:02d}"
        runs = [r for r in rows if r.lecture == lecture]
        forced = overrides.get(lecture, overrides.get(code))
        if forced is not None:
            picks = [r for r in runs if r.seed == forced]
            if not picks:
                raise NoEligibleRun(f"{lecture}: no run with seed {forced}")
        else:
            picks = sorted((r for r in runs if r.status == STATUS_COMPLETE and r.warnings == 0), key=lambda r: r.seed)
            if not picks:
                raise NoEligibleRun(f"{lecture}: every run carries warnings or is incomplete")
        row = picks[0]
        chosen.append(row)
        for q, item in enumerate(load_items(row), start=1):
            records.append(
                ExportRecord.from_item(
                    item,
                    lecture=lecture,
                    run=f"RUN{row.seed}",
                    seed=row.seed,
                    pdf_basename=row.pdf_basename,
                    item_id=f"{code}_Q{q:02d}",
                )
            )
    return DeploySelection(chosen, records)
