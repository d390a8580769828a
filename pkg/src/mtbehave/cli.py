"""Command-line entry point for the whole pipeline.

Exit codes: 0 success, 1 usage/config error, 2 provider/adapter failure,
3 data-invariant violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from .config import RunConfig, derive_seed, load_config
from .errors import (
    ConfigError,
    DataInvariantError,
    MtBehaveError,
    ProviderError,
    SuiteLoadError,
    UnanswerableValueError,
)
from .generation import (
    generate_contrastive_pair,
    generate_exhaustive_candidates,
    generate_suite,
    generation_stats,
)
from .metrics import ResampleConfig, diversity_series, trend_fit
from .model import (
    CandidateEntry,
    PropertySpec,
    load_candidates,
    load_suite,
    load_translations,
    load_verdicts,
    save_candidates,
    save_suite,
    save_translations,
    save_verdicts,
)
from .runner import (
    CandidateEdit,
    DetectorContext,
    TranslationCache,
    apply_candidate_edits,
    build_report,
    evaluate,
    file_sha256,
    sample_for_annotation,
    translate_all,
)

log = logging.getLogger(__name__)


class UsageError(MtBehaveError):
    """Raised for bad command lines; mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _add_config_options(p: argparse.ArgumentParser, properties: bool = True) -> None:
    p.add_argument("--config", required=True, help="run configuration (path or preset:<name>)")
    if properties:
        p.add_argument(
            "--property", action="append", default=None, metavar="ID",
            help="restrict to this property id (repeatable)",
        )
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--offline", action="store_true", help="forbid network providers/adapters")


def build_parser() -> _Parser:
    parser = _Parser(prog="mtbehave", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate property test suites via the LLM provider")
    _add_config_options(p)
    p.add_argument("--target", type=int, default=None, help="cases per property (default 1000)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("candidates", help="generate candidate translation sets per value")
    _add_config_options(p)
    p.set_defaults(func=cmd_candidates)

    p = sub.add_parser("run", help="translate suites, judge outputs, and build reports")
    _add_config_options(p)
    p.add_argument(
        "--system", action="append", default=None, metavar="ID",
        help="restrict to this system id (repeatable)",
    )
    p.add_argument("--k", type=int, default=None, help="bootstrap resample count")
    p.add_argument("--alpha", type=float, default=None, help="significance level")
    p.add_argument("--out", default=None, metavar="DIR", help="run output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="print a paired-comparison table from a report")
    p.add_argument("--report", required=True, help="report.json produced by `run`")
    p.add_argument("--property", action="append", default=None, metavar="ID")
    p.add_argument("a", help="system id of model A")
    p.add_argument("b", help="system id of model B")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("diversity", help="per-sentence novel n-gram fraction of a suite")
    _add_config_options(p)
    p.add_argument("--n", type=int, default=3, help="n-gram order (default 3)")
    p.add_argument("--degree", type=int, default=2, help="trend polynomial degree")
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("annotate", help="sample pass/fail verdicts into a review file")
    _add_config_options(p)
    p.add_argument("--run", required=True, metavar="DIR", help="run directory to annotate")
    p.add_argument("--system", default=None, metavar="ID")
    p.add_argument("--k", type=int, default=100, help="sample size per stratum (default 100)")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("apply-edits", help="apply candidate edits; tally annotated FP/FN")
    _add_config_options(p)
    p.add_argument("--edits", required=True, help="JSONL of {value, add:[...], remove:[...]}")
    p.add_argument("--review", default=None, help="annotated review file for FP/FN tallies")
    p.set_defaults(func=cmd_apply_edits)

    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "seed": getattr(args, "seed", None),
        "target_count": getattr(args, "target", None),
        "k": getattr(args, "k", None),
        "alpha": getattr(args, "alpha", None),
        "offline": getattr(args, "offline", False),
    }


def _select_properties(config: RunConfig, ids: list[str] | None) -> list[PropertySpec]:
    if ids:
        return [config.property_by_id(i) for i in ids]
    if not config.properties:
        raise ConfigError("no properties configured")
    return list(config.properties)


def _load_property_suite(config: RunConfig, prop_id: str):
    path = config.property_dir(prop_id) / "suite.jsonl"
    if not path.exists():
        raise ConfigError(f"no suite for property {prop_id!r} at {path}; run `generate` first")
    suite = load_suite(path)
    strays = [c.id for c in suite if c.property_id != prop_id]
    if strays:
        raise DataInvariantError(
            f"{path}: cases {strays[:3]} do not belong to property {prop_id!r}"
        )
    return suite


def _load_property_candidates(config: RunConfig, prop_id: str) -> dict[str, CandidateEntry]:
    path = config.property_dir(prop_id) / "candidates.jsonl"
    if not path.exists():
        raise ConfigError(
            f"no candidates for property {prop_id!r} at {path}; run `candidates` first"
        )
    return load_candidates(path)


def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    props = _select_properties(config, args.property)
    llm = config.build_llm()
    for spec in props:
        cases, logbook = generate_suite(
            spec,
            config.target_count,
            llm,
            seed=derive_seed(config.seed, f"generate:{spec.id}"),
            temperature=config.llm.temperature,
            presence_penalty=config.llm.presence_penalty,
        )
        prop_dir = config.property_dir(spec.id)
        save_suite(cases, prop_dir / "suite.jsonl")
        _write_json(logbook.to_dict(), prop_dir / "genlog.json")
        kept_pct, unique_pct = generation_stats(logbook)
        print(
            f"{spec.id}: {len(cases)} cases "
            f"(kept {kept_pct:.1%} of emitted, {unique_pct:.1%} unique values) "
            f"-> {prop_dir / 'suite.jsonl'}"
        )
    return 0


def cmd_candidates(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    props = _select_properties(config, args.property)
    llm = config.build_llm()
    for spec in props:
        suite = _load_property_suite(config, spec.id)
        prop_dir = config.property_dir(spec.id)
        path = prop_dir / "candidates.jsonl"
        existing = load_candidates(path) if path.exists() else {}
        values = list(dict.fromkeys(case.value for case in suite))
        first_sentence = {}
        for case in suite:
            first_sentence.setdefault(case.value, case.source)
        generated = 0
        unanswerable: list[str] = []
        entries: dict[str, CandidateEntry] = dict(existing)
        for value in values:
            if value in entries:
                continue
            try:
                if spec.detector == "exhaustive":
                    entry: CandidateEntry = generate_exhaustive_candidates(
                        value,
                        spec,
                        llm,
                        temperature=config.llm.temperature,
                        presence_penalty=config.llm.presence_penalty,
                    )
                else:
                    entry = generate_contrastive_pair(
                        value,
                        first_sentence[value],
                        spec,
                        llm,
                        temperature=config.llm.temperature,
                        presence_penalty=config.llm.presence_penalty,
                    )
            except UnanswerableValueError:
                unanswerable.append(value)
                continue
            entries[value] = entry
            generated += 1
        save_candidates(entries.values(), path)
        summary = {
            "property_id": spec.id,
            "values_total": len(values),
            "already_present": len(existing),
            "generated": generated,
            "unanswerable": unanswerable,
        }
        _write_json(summary, prop_dir / "candidates_summary.json")
        line = (
            f"{spec.id}: {generated} new candidate sets "
            f"({len(existing)} kept, {len(values)} values) -> {path}"
        )
        if unanswerable:
            line += f"; NA for {len(unanswerable)} values: {', '.join(unanswerable)}"
        print(line)
    return 0


def _run_directory(config: RunConfig, out: str | None) -> Path:
    if out:
        return Path(out)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S")
    base = config.workspace / "runs" / stamp
    run_dir = base
    suffix = 1
    while run_dir.exists():
        suffix += 1
        run_dir = base.with_name(f"{stamp}-{suffix}")
    return run_dir


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    props = _select_properties(config, args.property)
    if args.system:
        systems = [config.system_by_id(i) for i in args.system]
    else:
        systems = list(config.systems)
    if not systems:
        raise ConfigError("no systems configured")
    run_dir = _run_directory(config, args.out)
    cache = TranslationCache(config.workspace / "cache" / "translations")
    embedder = None
    if any(p.detector == "contrastive" for p in props):
        embedder = config.build_embedder()
    ctx = DetectorContext(
        tokenizer=config.tokenizer, embedder=embedder, token_boundary=config.token_boundary
    )

    all_verdicts = []
    reports: dict[str, dict] = {}
    report_texts: list[str] = []
    records_by_system: dict[str, list] = {s.system_id: [] for s in systems}
    failure_counts: dict[str, int] = {}
    missing_by_property: dict[str, dict[str, int]] = {}
    for spec in props:
        suite = _load_property_suite(config, spec.id)
        candidates = _load_property_candidates(config, spec.id)
        prop_dir = config.property_dir(spec.id)
        prop_verdicts = []
        for sys_spec in systems:
            adapter = config.build_adapter(sys_spec)
            result = translate_all(suite, adapter, cache)
            records_by_system[sys_spec.system_id].extend(result.records)
            if result.failures:
                failure_counts[sys_spec.system_id] = (
                    failure_counts.get(sys_spec.system_id, 0) + len(result.failures)
                )
            evaluation = evaluate(spec, suite, candidates, result.records, ctx)
            prop_verdicts.extend(evaluation.verdicts)
            if evaluation.missing:
                per = missing_by_property.setdefault(spec.id, {})
                for m in evaluation.missing:
                    per[m.value] = len(m.case_ids)
        cfg = ResampleConfig(
            k=config.k, alpha=config.alpha, seed=derive_seed(config.seed, f"bootstrap:{spec.id}")
        )
        metadata = {
            "suite_sha256": file_sha256(prop_dir / "suite.jsonl"),
            "candidates_sha256": file_sha256(prop_dir / "candidates.jsonl"),
            "tokenizer": {
                "mode": config.tokenizer.mode,
                "strip_edge_punct": config.tokenizer.strip_edge_punct,
            },
            "token_boundary": config.token_boundary,
        }
        report = build_report(spec, suite, prop_verdicts, cfg, metadata)
        reports[spec.id] = report.to_dict()
        report_texts.append(report.render_text())
        all_verdicts.extend(prop_verdicts)
        for stat in report.systems:
            print(
                f"{spec.id} / {stat.system_id}: MPR {stat.mpr:.3f} "
                f"[{stat.ci.lo:.3f}, {stat.ci.hi:.3f}] over n={stat.n}"
            )

    run_dir.mkdir(parents=True, exist_ok=True)
    for system_id, records in records_by_system.items():
        save_translations(records, run_dir / "translations" / f"{system_id}.jsonl")
    save_verdicts(all_verdicts, run_dir / "verdicts.jsonl")
    _write_json({"properties": reports}, run_dir / "report.json")
    report_txt = run_dir / "report.txt"
    report_txt.write_text("\n".join(report_texts), encoding="utf-8", newline="\n")
    # Timestamps live here, apart from the report, so re-runs stay byte-identical.
    _write_json(
        {
            "timestamp_utc": datetime.now(timezone.utc).isoformat(),
            "config": str(args.config),
            "seed": config.seed,
            "properties": [p.id for p in props],
            "systems": [s.system_id for s in systems],
            "translation_failures": failure_counts,
            "missing_candidates": missing_by_property,
        },
        run_dir / "runmeta.json",
    )
    print(f"report -> {run_dir / 'report.json'}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    report_path = Path(args.report)
    if not report_path.exists():
        raise ConfigError(f"report file {report_path} not found")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    properties = report.get("properties", {})
    if args.property:
        missing = [p for p in args.property if p not in properties]
        if missing:
            raise ConfigError(f"report has no properties {missing}")
        properties = {p: properties[p] for p in args.property}
    rows = []
    for prop_id, prop_report in properties.items():
        systems = prop_report.get("systems", {})
        for sys_id in (args.a, args.b):
            if sys_id not in systems:
                raise ConfigError(f"property {prop_id!r}: unknown system id {sys_id!r}")
        found = None
        for comp in prop_report.get("comparisons", []):
            if {comp["a"], comp["b"]} == {args.a, args.b}:
                found = comp
                break
        if found is None:
            raise ConfigError(f"property {prop_id!r}: no comparison between {args.a} and {args.b}")
        rows.append((prop_id, found))
    header = f"{'Property':<18}{'Model A':<18}{'Model B':<18}{'Winner':<18}{'p-value':>8}"
    print(header)
    for prop_id, comp in rows:
        winner = comp["winner"] if comp["winner"] is not None else "(tie)"
        verdict = "significant" if comp["significant"] else "not significant"
        print(
            f"{prop_id:<18}{comp['a']:<18}{comp['b']:<18}{winner:<18}"
            f"{comp['p_value']:>8.3f}  {verdict}"
        )
    return 0


def cmd_diversity(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    props = _select_properties(config, args.property)
    for spec in props:
        suite = _load_property_suite(config, spec.id)
        series = diversity_series(suite, args.n, config.tokenizer)
        usable = [v for v in series if v is not None]
        trend = None
        if len(usable) > args.degree:
            trend = {"degree": args.degree, "coefficients": trend_fit(series, args.degree)}
        out = {
            "property_id": spec.id,
            "n": args.n,
            "series": series,
            "trend": trend,
        }
        path = config.property_dir(spec.id) / "diversity.json"
        _write_json(out, path)
        mean = sum(usable) / len(usable) if usable else float("nan")
        print(
            f"{spec.id}: {len(series)} sentences, mean div_{args.n} {mean:.3f}, "
            f"skipped {len(series) - len(usable)} -> {path}"
        )
    return 0


def cmd_annotate(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    props = _select_properties(config, args.property)
    run_dir = Path(args.run)
    verdicts_path = run_dir / "verdicts.jsonl"
    if not verdicts_path.exists():
        raise ConfigError(f"{verdicts_path} not found; point --run at a run directory")
    verdicts = load_verdicts(verdicts_path)
    for spec in props:
        suite = _load_property_suite(config, spec.id)
        candidates = _load_property_candidates(config, spec.id)
        case_by_id = {c.id: c for c in suite}
        prop_verdicts = [v for v in verdicts if v.case_id in case_by_id]
        system_ids = sorted({v.system_id for v in prop_verdicts})
        if args.system:
            if args.system not in system_ids:
                raise ConfigError(
                    f"property {spec.id!r}: no verdicts for system {args.system!r}"
                )
            system_ids = [args.system]
        elif len(system_ids) > 1:
            raise ConfigError(
                f"property {spec.id!r} has verdicts for {system_ids}; pick one with --system"
            )
        for system_id in system_ids:
            translations = {
                r.case_id: r.translation
                for r in load_translations(run_dir / "translations" / f"{system_id}.jsonl")
            }
            selected = [v for v in prop_verdicts if v.system_id == system_id]
            passes, fails = sample_for_annotation(
                selected, args.k, seed=derive_seed(config.seed, f"annotate:{spec.id}:{system_id}")
            )
            rows = []
            for verdict in passes + fails:
                case = case_by_id[verdict.case_id]
                entry = candidates.get(case.value)
                row = {
                    "case_id": case.id,
                    "system_id": system_id,
                    "property_id": spec.id,
                    "source": case.source,
                    "value": case.value,
                    "translation": translations.get(case.id, ""),
                    "pass": verdict.passed,
                    "annotation": "",
                }
                if verdict.matched_candidate is not None:
                    row["matched_candidate"] = verdict.matched_candidate
                if verdict.scores is not None:
                    row["scores"] = list(verdict.scores)
                if entry is not None:
                    row.update(entry.to_dict())
                rows.append(row)
            path = run_dir / f"review_{spec.id}_{system_id}.jsonl"
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                for row in rows:
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            print(
                f"{spec.id} / {system_id}: {len(passes)} passes + {len(fails)} fails -> {path}"
            )
    return 0


def _load_edits(path: Path) -> list[CandidateEdit]:
    if not path.exists():
        raise ConfigError(f"edits file {path} not found")
    edits = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SuiteLoadError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "value" not in obj:
                raise SuiteLoadError(f"{path}:{lineno}: expected an object with a 'value' key")
            add = obj.get("add", [])
            remove = obj.get("remove", [])
            if not isinstance(add, list) or not isinstance(remove, list):
                raise SuiteLoadError(f"{path}:{lineno}: 'add'/'remove' must be lists")
            edits.append(
                CandidateEdit(
                    value=str(obj["value"]),
                    add=tuple(str(x) for x in add),
                    remove=tuple(str(x) for x in remove),
                )
            )
    return edits


def _review_tallies(path: Path) -> dict:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise SuiteLoadError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
    annotated = [r for r in rows if str(r.get("annotation", "")).strip()]
    fp = sum(1 for r in annotated if r.get("pass") and r["annotation"].lower() == "incorrect")
    fn = sum(1 for r in annotated if not r.get("pass") and r["annotation"].lower() == "incorrect")
    n_pass = sum(1 for r in annotated if r.get("pass"))
    n_fail = len(annotated) - n_pass
    return {"fp": fp, "fn": fn, "annotated_passes": n_pass, "annotated_fails": n_fail}


def cmd_apply_edits(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    props = _select_properties(config, args.property)
    if len(props) != 1:
        raise ConfigError("apply-edits works on exactly one property; pass --property ID")
    spec = props[0]
    prop_dir = config.property_dir(spec.id)
    candidates = _load_property_candidates(config, spec.id)
    edits = _load_edits(Path(args.edits))
    updated, audit = apply_candidate_edits(candidates, edits)
    save_candidates(updated.values(), prop_dir / "candidates.jsonl")
    if audit:
        with open(prop_dir / "candidates_audit.log", "a", encoding="utf-8", newline="\n") as fh:
            for line in audit:
                fh.write(line + "\n")
    print(f"{spec.id}: applied {len(edits)} edits ({len(audit)} changes)")
    if args.review:
        tallies = _review_tallies(Path(args.review))
        print(
            f"annotated review: FP {tallies['fp']}/{tallies['annotated_passes']} passes, "
            f"FN {tallies['fn']}/{tallies['annotated_fails']} fails"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", level=logging.WARNING)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return 2
    except DataInvariantError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
