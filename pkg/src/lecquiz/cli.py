"""Command-line entry point.

Exit status: 0 on success, 1 on domain failures (aborted runs, hard QC
failures in a bank, no eligible deploy run), 2 on usage or config errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .expr import EquivConfig, Verdict, DomainError, compare, eval_const, parse_option_text
from .export import ExportRecord, aggregate_report, export_csv, export_jsonl, format_report, load_bank, read_csv, read_jsonl
from .generation import GeneratorError, GeneratorSpec, make_generator
from .ingest import IngestError, PlanError
from .items import ModelSpec, QcSpec, RunConfig
from .pipeline import (
    STATUS_COMPLETE,
    NoEligibleRun,
    execute_run,
    rows_from_sweep_dir,
    run_dir_name,
    select_deploy_set,
    summarize_runs,
    sweep,
)
from .qc import QcConfig, qc_bank

log = logging.getLogger("lecquiz")

ENV_OUT_DIR = "LECQUIZ_OUT_DIR"
ENV_GENERATOR_CMD = "LECQUIZ_GENERATOR_CMD"


class ConfigError(ValueError):
    pass


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- config ------------------------------------------------------------------


def load_config(path: str | None) -> tuple[dict[str, Any], Path]:
    if not path:
        return {}, Path.cwd()
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data, Path(path).resolve().parent


def _resolve(base: Path, p: str | None) -> str | None:
    if not p:
        return p
    return str(p) if Path(p).is_absolute() else str(base / p)


def build_run_config(conf: dict, base: Path, *, pdf: str, seed: int | None, lecture: str | None = None,
                     topics: Sequence[str] | None = None) -> RunConfig:
    try:
        qc = dict(conf.get("qc_spec", {}))
        equiv = EquivConfig(**qc.pop("equiv", {}))
        return RunConfig(
            input_document=pdf,
            seed=seed if seed is not None else int(conf.get("seed", 0)),
            model_spec=ModelSpec(**conf.get("model_spec", {})),
            qc_spec=QcSpec(equiv=equiv, **qc),
            topic_plan_mode=conf.get("topic_plan_mode", "provided"),
            topics=list(topics if topics is not None else conf.get("topics", [])),
            lecture=lecture or "",
            max_chunk_chars=int(conf.get("max_chunk_chars", 8000)),
            extractor_command=conf.get("extractor_command"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run configuration: {exc}") from exc


def build_generator_spec(conf: dict, base: Path, args: argparse.Namespace) -> GeneratorSpec:
    g = dict(conf.get("generator", {}))
    if g.get("transcript"):
        g["transcript"] = _resolve(base, g["transcript"])
    env_cmd = os.environ.get(ENV_GENERATOR_CMD)
    if env_cmd:
        g.update(kind="external-command", command_template=env_cmd)
    if getattr(args, "transcript", None):
        g.update(kind="scripted-mock", transcript=args.transcript)
    if getattr(args, "command", None):
        g.update(kind="external-command", command_template=args.command)
    if "kind" not in g:
        g["kind"] = "external-command"
        g.setdefault("command_template", conf.get("model_spec", {}).get("command_template", ModelSpec().command_template))
    try:
        return GeneratorSpec(**g)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid generator configuration: {exc}") from exc


def _out_dir(args: argparse.Namespace, conf: dict, base: Path, default: str) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(ENV_OUT_DIR):
        return Path(os.environ[ENV_OUT_DIR])
    if conf.get("output_dir"):
        return Path(_resolve(base, conf["output_dir"]))
    return Path(default)


# -- subcommands -------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    conf, base = load_config(args.config)
    cfg = build_run_config(conf, base, pdf=args.pdf, seed=args.seed, lecture=args.lecture, topics=args.topic)
    spec = build_generator_spec(conf, base, args)
    generator = make_generator(spec, lecture=cfg.lecture, seed=cfg.seed)
    run_dir = _out_dir(args, conf, base, "runs") / run_dir_name(cfg)
    result = execute_run(cfg, generator, run_dir)
    _err(
        f"{run_dir}: {result.status}; accepted {len(result.state.accepted)}/{cfg.qc_spec.n_questions}, "
        f"tries {result.tries}, retries {result.retries}, warnings {len(result.state.warnings)}"
    )
    return 0 if result.status == STATUS_COMPLETE else 1


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def cmd_sweep(args: argparse.Namespace) -> int:
    conf, base = load_config(args.config)
    lectures = conf.get("lectures") or []
    if not lectures:
        raise ConfigError("sweep config needs a non-empty 'lectures' list")
    seeds = args.seeds if args.seeds is not None else conf.get("seeds", [0, 1, 2, 3, 4])
    cfgs = []
    for lec in lectures:
        for seed in seeds:
            cfgs.append(
                build_run_config(conf, base, pdf=_resolve(base, lec["pdf"]), seed=seed,
                                 lecture=lec.get("name"), topics=lec.get("topics"))
            )
    spec = build_generator_spec(conf, base, args)
    out = _out_dir(args, conf, base, "sweep")
    rows, summary = sweep(cfgs, lambda c: make_generator(spec, lecture=c.lecture, seed=c.seed), out, jobs=args.jobs)
    json_path, _ = aggregate_report(summary, out)
    _err(format_report(summary))
    _err(f"summary written to {json_path}")
    return 0 if all(r.status == STATUS_COMPLETE for r in rows) else 1


def _parse_override(text: str) -> tuple[str, int]:
    key, sep, seed = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected LECTURE=SEED, got {text!r}")
    try:
        return key, int(seed)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed in {text!r}") from None


def _write_bank(records: list[ExportRecord], out: Path, name: str, fmt: str) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("jsonl", "both"):
        written.append(export_jsonl(records, out / f"{name}.jsonl"))
    if fmt in ("csv", "both"):
        written.append(export_csv(records, out / f"{name}.csv"))
    return written


def cmd_select(args: argparse.Namespace) -> int:
    rows = rows_from_sweep_dir(args.sweep)
    if not rows:
        raise ConfigError(f"no run directories under {args.sweep}")
    selection = select_deploy_set(rows, args.rule, dict(args.seed or []))
    out = Path(args.out) if args.out else Path(args.sweep)
    for row in selection.runs:
        _err(f"selected {row.lecture} seed {row.seed} ({row.accepted} items, {row.warnings} warnings)")
    for path in _write_bank(selection.records, out, args.name, args.format):
        _err(f"wrote {path} ({len(selection.records)} records)")
    return 0


def cmd_qc(args: argparse.Namespace) -> int:
    items = load_bank(args.bank)
    verdicts = qc_bank(items, QcConfig(fuzzy_threshold=args.fuzzy_threshold))
    hard = warnings = 0
    for v in verdicts:
        for f in v.hard_failures:
            _err(f"{v.item_id}: HARD {f.name}: {f.detail}")
        for w in v.warnings:
            _err(f"{v.item_id}: warning {w.name}: {w.detail}")
        hard += len(v.hard_failures)
        warnings += len(v.warnings)
    print(f"{len(items)} items: {hard} hard failures, {warnings} warnings")
    return 0 if hard == 0 else 1


def cmd_export(args: argparse.Namespace) -> int:
    src = Path(args.bank)
    if src.suffix == ".jsonl":
        records = read_jsonl(src)
    elif src.suffix == ".csv" and "ID" not in src.read_text(encoding="utf-8").splitlines()[0].split(","):
        records = read_csv(src)
    else:
        code = args.code or "L01"
        records = [
            ExportRecord.from_item(it, lecture=args.lecture or src.parent.name, run=f"RUN{args.seed}",
                                   seed=args.seed, pdf_basename=args.pdf or "", item_id=f"{code}_Q{q:02d}")
            for q, it in enumerate(load_bank(src), start=1)
        ]
    for path in _write_bank(records, Path(args.out), args.name or src.stem, args.format):
        _err(f"wrote {path} ({len(records)} records)")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    rows = rows_from_sweep_dir(args.sweep)
    if not rows:
        raise ConfigError(f"no run directories under {args.sweep}")
    summary = summarize_runs(rows)
    aggregate_report(summary, args.sweep)
    sys.stdout.write(format_report(summary))
    return 0


def cmd_expr(args: argparse.Namespace) -> int:
    if args.expr_cmd == "eval":
        p = parse_option_text(args.text)
        if not p.is_expression:
            print(f"{p.status.value}")
            return 1
        unit = f" [{p.stripped_unit}]" if p.stripped_unit else ""
        if p.free_variables:
            print(f"{p.status.value}: {p.expr}{unit}; free variables: {', '.join(sorted(p.free_variables))}")
            return 0
        try:
            value = eval_const(p.expr)
        except DomainError as exc:
            print(f"{p.status.value}: {p.expr}{unit}; domain error: {exc}")
            return 1
        print(f"{p.status.value}: {p.expr}{unit} = {value:.12g}")
        return 0
    cfg = EquivConfig(const_tolerance=args.tol, rng_seed=args.rng_seed)
    result = compare(parse_option_text(args.a), parse_option_text(args.b), cfg)
    print(result.verdict.value)
    for va, vb in result.values:
        _err(f"  {va:.12g}  vs  {vb:.12g}")
    return 0 if result.verdict is not Verdict.INCOMPARABLE else 1


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lecquiz", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lecquiz {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    r = sub.add_parser("run", help="execute one reproducible run")
    r.add_argument("--pdf", required=True, help="lecture PDF or page-delimited text file")
    r.add_argument("--seed", type=int, help="run seed (default: config value or 0)")
    r.add_argument("--config", help="JSON run configuration")
    r.add_argument("--lecture", help="lecture label (default: input file stem)")
    r.add_argument("--topic", action="append", help="focus topic for the provided plan; repeatable")
    r.add_argument("--out", help=f"output root (env {ENV_OUT_DIR}; default ./runs)")
    r.add_argument("--transcript", help="replay a scripted JSONL transcript instead of a model")
    r.add_argument("--command", help="external generator command template")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every lecture in the config across seeds")
    s.add_argument("--config", required=True, help="JSON config with a 'lectures' list")
    s.add_argument("--seeds", type=_parse_seeds, help="comma-separated seeds (default 0,1,2,3,4)")
    s.add_argument("--out", help=f"sweep directory (env {ENV_OUT_DIR}; default ./sweep)")
    s.add_argument("--jobs", type=int, default=1, help="parallel runs")
    s.add_argument("--transcript", help="transcript path template, may use {lecture} and {seed}")
    s.add_argument("--command", help="external generator command template")
    s.set_defaults(func=cmd_sweep)

    sel = sub.add_parser("select", help="pick one run per lecture into a deploy set")
    sel.add_argument("--sweep", required=True, help="sweep directory")
    sel.add_argument("--rule", default="zero-warnings", choices=["zero-warnings"])
    sel.add_argument("--seed", action="append", type=_parse_override, metavar="LECTURE=SEED",
                     help="force a seed for a lecture (name or L01-style code); repeatable")
    sel.add_argument("--out", help="output directory (default: the sweep directory)")
    sel.add_argument("--name", default="final_bank", help="bank file stem")
    sel.add_argument("--format", choices=["jsonl", "csv", "both"], default="both")
    sel.set_defaults(func=cmd_select)

    q = sub.add_parser("qc", help="re-run QC over an existing bank (read-only)")
    q.add_argument("--bank", required=True, help="bank file (.jsonl, .csv or questions.json)")
    q.add_argument("--fuzzy-threshold", type=float, default=0.92)
    q.set_defaults(func=cmd_qc)

    e = sub.add_parser("export", help="convert a bank to release JSONL/CSV")
    e.add_argument("--bank", required=True)
    e.add_argument("--format", choices=["jsonl", "csv", "both"], default="both")
    e.add_argument("--out", required=True)
    e.add_argument("--name", help="output file stem (default: input stem)")
    e.add_argument("--lecture", help="lecture label for internal-schema input")
    e.add_argument("--code", help="lecture code for ids, e.g. L01")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--pdf", help="pdf_basename for internal-schema input")
    e.set_defaults(func=cmd_export)

    rp = sub.add_parser("report", help="rebuild the aggregate report of a sweep")
    rp.add_argument("--sweep", required=True)
    rp.set_defaults(func=cmd_report)

    x = sub.add_parser("expr", help="debug the option expression checker")
    xs = x.add_subparsers(dest="expr_cmd", required=True)
    xe = xs.add_parser("eval", help="parse and evaluate one option")
    xe.add_argument("text")
    xq = xs.add_parser("equiv", help="compare two options")
    xq.add_argument("a")
    xq.add_argument("b")
    xq.add_argument("--tol", type=float, default=1e-9)
    xq.add_argument("--rng-seed", type=int, default=0)
    x.set_defaults(func=cmd_expr)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"lecquiz: {exc}")
        return 2
    except (NoEligibleRun, GeneratorError, IngestError, PlanError, OSError, ValueError) as exc:
        _err(f"lecquiz: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
