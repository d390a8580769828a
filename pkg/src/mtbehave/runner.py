"""End-to-end evaluation: translate suites, judge translations, build reports.

Adapters realize the MT system boundary three ways: an HTTP endpoint, a local
command speaking line-per-sentence over standard streams, or a file of
precomputed translations (for systems run elsewhere).
"""
from __future__ import annotations

import hashlib
import json
import logging
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import requests

from .detection import CachedEmbedder, Embedder, TokenizerConfig, judge_contrastive, match_exhaustive
from .errors import AdapterError, ConfigError, DataInvariantError
from .metrics import (
    Interval,
    PairedResult,
    ResampleConfig,
    Sample,
    bootstrap_ci,
    macro_pass_rate,
    paired_bootstrap,
)
from .model import (
    CandidateEntry,
    CandidateSet,
    ContrastivePair,
    PropertySpec,
    TestCase,
    TranslationRecord,
    Verdict,
)

log = logging.getLogger(__name__)

ADAPTER_KINDS = ("http", "command", "file")
DEFAULT_HTTP_BATCH_SIZE = 32
_HTTP_RETRIES = 3


@dataclass(frozen=True)
class AdapterSpec:
    """Declarative description of one MT system under test."""

    system_id: str
    kind: str
    endpoint: str = ""
    command: str = ""
    path: str = ""
    language_pair: tuple[str, str] = ("", "")
    batch_size: int = DEFAULT_HTTP_BATCH_SIZE

    def __post_init__(self) -> None:
        if not self.system_id:
            raise ConfigError("system_id must be nonempty")
        if self.kind not in ADAPTER_KINDS:
            raise ConfigError(f"system {self.system_id}: unknown adapter kind {self.kind!r}")
        required = {"http": self.endpoint, "command": self.command, "file": self.path}[self.kind]
        if not required:
            raise ConfigError(
                f"system {self.system_id}: adapter kind {self.kind!r} needs its "
                f"{'endpoint' if self.kind == 'http' else self.kind} field"
            )
        object.__setattr__(self, "language_pair", tuple(self.language_pair))


class HttpMtAdapter:
    """Batched POST {"texts": [...], "src", "tgt"} -> {"translations": [...]}."""

    def __init__(self, spec: AdapterSpec, session: requests.Session | None = None) -> None:
        self.system_id = spec.system_id
        self.endpoint = spec.endpoint
        self.language_pair = spec.language_pair
        self.batch_size = spec.batch_size
        self._session = session or requests.Session()

    def translate(self, sources: Sequence[str]) -> list[str | None]:
        out: list[str | None] = []
        src, tgt = self.language_pair
        for start in range(0, len(sources), self.batch_size):
            batch = list(sources[start : start + self.batch_size])
            payload = {"texts": batch, "src": src, "tgt": tgt}
            try:
                translations = self._post_batch(payload, len(batch))
            except AdapterError as exc:
                log.warning("system %s: batch at %d failed: %s", self.system_id, start, exc)
                translations = [None] * len(batch)
            out.extend(translations)
        return out

    def _post_batch(self, payload: dict, expected: int) -> list[str]:
        last_exc: Exception | None = None
        for _ in range(_HTTP_RETRIES):
            try:
                resp = self._session.post(self.endpoint, json=payload, timeout=120.0)
                resp.raise_for_status()
                translations = resp.json()["translations"]
                if len(translations) != expected:
                    raise AdapterError(
                        f"{self.endpoint} returned {len(translations)} translations "
                        f"for {expected} texts"
                    )
                return [str(t) for t in translations]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_exc = exc
        raise AdapterError(f"HTTP adapter failed after {_HTTP_RETRIES} attempts: {last_exc}")


class CommandMtAdapter:
    """Runs a local command: one source per line in, one translation out."""

    def __init__(self, spec: AdapterSpec) -> None:
        self.system_id = spec.system_id
        self.argv = shlex.split(spec.command)

    def translate(self, sources: Sequence[str]) -> list[str | None]:
        # Sources are single sentences; embedded newlines would desync the
        # line protocol, so they are flattened to spaces.
        lines = [s.replace("\n", " ") for s in sources]
        try:
            proc = subprocess.run(
                self.argv,
                input="\n".join(lines) + "\n" if lines else "",
                capture_output=True,
                text=True,
                check=False,
            )
        except OSError as exc:
            raise AdapterError(f"command {self.argv!r} could not be run: {exc}") from exc
        if proc.returncode != 0:
            raise AdapterError(
                f"command {self.argv!r} exited {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        out_lines = proc.stdout.splitlines()
        if len(out_lines) != len(lines):
            raise AdapterError(
                f"command {self.argv!r} returned {len(out_lines)} lines for {len(lines)} inputs"
            )
        return list(out_lines)


class FileMtAdapter:
    """Serves precomputed translations from a translations.jsonl file."""

    def __init__(self, spec: AdapterSpec, records: Sequence[TranslationRecord] | None = None) -> None:
        self.system_id = spec.system_id
        if records is None:
            from .model import load_translations

            records = load_translations(spec.path)
        self._by_case = {
            r.case_id: r.translation for r in records if r.system_id == self.system_id
        }

    def translate_cases(self, cases: Sequence[TestCase]) -> list[str | None]:
        return [self._by_case.get(case.id) for case in cases]


class TranslationCache:
    """Disk cache keyed by (system_id, sha256 of source); JSONL per system."""

    def __init__(self, directory: Path | str) -> None:
        self.directory = Path(directory)
        self._maps: dict[str, dict[str, str]] = {}

    def _path(self, system_id: str) -> Path:
        return self.directory / f"{system_id}.jsonl"

    def _load(self, system_id: str) -> dict[str, str]:
        if system_id not in self._maps:
            entries: dict[str, str] = {}
            path = self._path(system_id)
            if path.exists():
                with open(path, encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            obj = json.loads(line)
                            entries[obj["source_sha256"]] = obj["translation"]
            self._maps[system_id] = entries
        return self._maps[system_id]

    @staticmethod
    def _key(source: str) -> str:
        return hashlib.sha256(source.encode("utf-8")).hexdigest()

    def get(self, system_id: str, source: str) -> str | None:
        return self._load(system_id).get(self._key(source))

    def put(self, system_id: str, source: str, translation: str) -> None:
        key = self._key(source)
        entries = self._load(system_id)
        if key in entries:
            return
        entries[key] = translation
        self.directory.mkdir(parents=True, exist_ok=True)
        with open(self._path(system_id), "a", encoding="utf-8", newline="\n") as fh:
            fh.write(
                json.dumps({"source_sha256": key, "translation": translation}, ensure_ascii=False)
                + "\n"
            )


@dataclass(frozen=True)
class TranslationFailure:
    case_id: str
    reason: str


@dataclass
class TranslationResult:
    """Per-case translations plus failures excluded from statistics."""

    records: list[TranslationRecord]
    failures: list[TranslationFailure] = field(default_factory=list)


def translate_all(
    suite: Sequence[TestCase], adapter, cache: TranslationCache | None = None
) -> TranslationResult:
    """Translate every case, serving repeats from the cache.

    Sources go out bracket-free (TestCase.source is already marker-stripped).
    Failed cases are recorded and excluded rather than counted as fails:
    infrastructure failure is not a linguistic failure.
    """
    if not suite:
        raise DataInvariantError("cannot translate an empty suite")
    system_id = adapter.system_id
    translations: dict[str, str] = {}
    failures: list[TranslationFailure] = []
    pending: list[TestCase] = []
    for case in suite:
        cached = cache.get(system_id, case.source) if cache else None
        if cached is not None:
            translations[case.id] = cached
        else:
            pending.append(case)
    if pending:
        try:
            if hasattr(adapter, "translate_cases"):
                outputs = adapter.translate_cases(pending)
            else:
                outputs = adapter.translate([case.source for case in pending])
        except AdapterError as exc:
            outputs = [None] * len(pending)
            log.warning("system %s: %s", system_id, exc)
            failures.extend(TranslationFailure(c.id, str(exc)) for c in pending)
            pending = []
        for case, output in zip(pending, outputs):
            if output is None:
                failures.append(TranslationFailure(case.id, "no translation produced"))
            else:
                translations[case.id] = output
                if cache:
                    cache.put(system_id, case.source, output)
    if failures:
        log.warning(
            "system %s: %d/%d cases failed translation and are excluded",
            system_id,
            len(failures),
            len(suite),
        )
    records = [
        TranslationRecord(case_id=c.id, system_id=system_id, translation=translations[c.id])
        for c in suite
        if c.id in translations
    ]
    return TranslationResult(records=records, failures=failures)


@dataclass
class DetectorContext:
    """Runtime wiring for the detectors."""

    tokenizer: TokenizerConfig = TokenizerConfig()
    embedder: Embedder | None = None
    token_boundary: bool = False

    def cached_embedder(self) -> Embedder:
        if self.embedder is None:
            raise ConfigError("contrastive detection requires an embedding provider")
        if not isinstance(self.embedder, CachedEmbedder):
            self.embedder = CachedEmbedder(self.embedder)
        return self.embedder


@dataclass(frozen=True)
class MissingCandidates:
    value: str
    case_ids: tuple[str, ...]


@dataclass
class EvaluationResult:
    verdicts: list[Verdict]
    missing: list[MissingCandidates] = field(default_factory=list)


def evaluate(
    spec: PropertySpec,
    suite: Sequence[TestCase],
    candidates: Mapping[str, CandidateEntry],
    translations: Sequence[TranslationRecord],
    ctx: DetectorContext | None = None,
) -> EvaluationResult:
    """Route each translation to the property's detector.

    Cases whose value has no candidate entry are reported in the result, not
    silently dropped.
    """
    ctx = ctx or DetectorContext()
    case_by_id = {case.id: case for case in suite}
    missing: dict[str, list[str]] = {}
    verdicts: list[Verdict] = []
    for record in translations:
        case = case_by_id.get(record.case_id)
        if case is None:
            raise DataInvariantError(f"translation references unknown case {record.case_id!r}")
        entry = candidates.get(case.value)
        if entry is None:
            missing.setdefault(case.value, []).append(case.id)
            continue
        if spec.detector == "exhaustive":
            if not isinstance(entry, CandidateSet):
                raise DataInvariantError(
                    f"value {case.value!r}: exhaustive detector needs a candidate set, "
                    f"got a contrastive pair"
                )
            verdict = match_exhaustive(
                record.translation,
                entry,
                token_boundary=ctx.token_boundary,
                case_id=record.case_id,
                system_id=record.system_id,
            )
        else:
            if not isinstance(entry, ContrastivePair):
                raise DataInvariantError(
                    f"value {case.value!r}: contrastive detector needs a contrastive pair"
                )
            verdict = judge_contrastive(
                record.translation,
                entry,
                ctx.cached_embedder(),
                ctx.tokenizer,
                case_id=record.case_id,
                system_id=record.system_id,
            )
        verdicts.append(verdict)
    missing_list = [MissingCandidates(v, tuple(ids)) for v, ids in missing.items()]
    if missing_list:
        n_cases = sum(len(m.case_ids) for m in missing_list)
        log.warning(
            "property %s: %d values (%d cases) have no candidates and were skipped",
            spec.id,
            len(missing_list),
            n_cases,
        )
    return EvaluationResult(verdicts=verdicts, missing=missing_list)


@dataclass(frozen=True)
class SystemStats:
    system_id: str
    mpr: float
    ci: Interval
    n: int
    values: int
    passes: int
    fails: int


@dataclass(frozen=True)
class Comparison:
    a: str
    b: str
    winner: str | None
    p_value: float
    significant: bool


@dataclass(frozen=True)
class SuiteReport:
    """Per-property evaluation summary across systems."""

    property_id: str
    detector: str
    k: int
    alpha: float
    seed: int
    systems: tuple[SystemStats, ...]
    comparisons: tuple[Comparison, ...]
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "property_id": self.property_id,
            "detector": self.detector,
            "k": self.k,
            "alpha": self.alpha,
            "seed": self.seed,
            "systems": {
                s.system_id: {
                    "mpr": s.mpr,
                    "ci": [s.ci.lo, s.ci.hi],
                    "n": s.n,
                    "values": s.values,
                    "passes": s.passes,
                    "fails": s.fails,
                    "k": self.k,
                    "alpha": self.alpha,
                    "seed": self.seed,
                }
                for s in self.systems
            },
            "comparisons": [
                {
                    "a": c.a,
                    "b": c.b,
                    "winner": c.winner,
                    "p_value": c.p_value,
                    "significant": c.significant,
                }
                for c in self.comparisons
            ],
            "metadata": self.metadata,
        }

    def render_text(self) -> str:
        lines = [
            f"Property: {self.property_id}  "
            f"(detector: {self.detector}, k={self.k}, alpha={self.alpha})",
            "",
            f"{'System':<24}{'MPR':>8}  {'95% CI':>18}  {'n':>6}  {'values':>7}",
        ]
        for s in self.systems:
            ci = f"[{s.ci.lo:.3f}, {s.ci.hi:.3f}]"
            lines.append(f"{s.system_id:<24}{s.mpr:>8.3f}  {ci:>18}  {s.n:>6}  {s.values:>7}")
        if self.comparisons:
            lines += ["", f"{'Model A':<20}{'Model B':<20}{'Winner':<20}{'p-value':>8}"]
            for c in self.comparisons:
                winner = c.winner if c.winner is not None else "(tie)"
                mark = " *" if c.significant else ""
                lines.append(f"{c.a:<20}{c.b:<20}{winner:<20}{c.p_value:>8.3f}{mark}")
        return "\n".join(lines) + "\n"


def build_report(
    spec: PropertySpec,
    suite: Sequence[TestCase],
    verdicts: Sequence[Verdict],
    cfg: ResampleConfig,
    metadata: dict | None = None,
) -> SuiteReport:
    """Aggregate verdicts into per-system MPR + CI and pairwise comparisons.

    Statistics are computed over the cases every system has a verdict for, so
    n is identical across systems and comparisons stay properly paired.
    """
    if not verdicts:
        raise DataInvariantError("cannot build a report from zero verdicts")
    value_of = {case.id: case.value for case in suite}
    by_system: dict[str, dict[str, Verdict]] = {}
    for verdict in verdicts:
        if verdict.case_id not in value_of:
            raise DataInvariantError(f"verdict references unknown case {verdict.case_id!r}")
        per = by_system.setdefault(verdict.system_id, {})
        if verdict.case_id in per:
            raise DataInvariantError(
                f"duplicate verdict for case {verdict.case_id!r}, system {verdict.system_id!r}"
            )
        per[verdict.case_id] = verdict
    system_ids = list(by_system)
    common = set.intersection(*(set(m) for m in by_system.values()))
    ordered_ids = [case.id for case in suite if case.id in common]
    if not ordered_ids:
        raise DataInvariantError("no case is covered by every system")
    dropped = {
        sys: sorted(set(m) - common) for sys, m in by_system.items() if set(m) - common
    }
    if dropped:
        log.warning(
            "report restricted to %d common cases; dropped per system: %s",
            len(ordered_ids),
            {k: len(v) for k, v in dropped.items()},
        )

    samples: dict[str, Sample] = {}
    stats: list[SystemStats] = []
    for system_id in system_ids:
        pairs = [
            (value_of[cid], int(by_system[system_id][cid].passed)) for cid in ordered_ids
        ]
        sample = Sample.from_pairs(pairs)
        samples[system_id] = sample
        passes = sum(sample.passes())
        stats.append(
            SystemStats(
                system_id=system_id,
                mpr=macro_pass_rate(sample),
                ci=bootstrap_ci(sample, cfg),
                n=len(sample),
                values=len(sample.groups()),
                passes=passes,
                fails=len(sample) - passes,
            )
        )

    comparisons: list[Comparison] = []
    for i in range(len(system_ids)):
        for j in range(i + 1, len(system_ids)):
            a, b = system_ids[i], system_ids[j]
            result: PairedResult = paired_bootstrap(samples[a], samples[b], cfg)
            winner = {"a": a, "b": b, None: None}[result.winner]
            comparisons.append(
                Comparison(
                    a=a,
                    b=b,
                    winner=winner,
                    p_value=result.p_value,
                    significant=result.significant,
                )
            )

    meta = dict(metadata or {})
    if dropped:
        meta["excluded_case_counts"] = {k: len(v) for k, v in dropped.items()}
    return SuiteReport(
        property_id=spec.id,
        detector=spec.detector,
        k=cfg.k,
        alpha=cfg.alpha,
        seed=cfg.seed,
        systems=tuple(stats),
        comparisons=tuple(comparisons),
        metadata=meta,
    )


def sample_for_annotation(
    verdicts: Sequence[Verdict], k: int, seed: int = 0
) -> tuple[list[Verdict], list[Verdict]]:
    """Uniform samples (without replacement) of k passes and k fails.

    A stratum smaller than k is returned whole, with a warning.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    passes = [v for v in verdicts if v.passed]
    fails = [v for v in verdicts if not v.passed]
    rng = np.random.default_rng(seed)

    def pick(stratum: list[Verdict], label: str) -> list[Verdict]:
        if len(stratum) < k:
            log.warning("only %d %s verdicts available (asked for %d)", len(stratum), label, k)
            return list(stratum)
        idx = sorted(rng.choice(len(stratum), size=k, replace=False).tolist())
        return [stratum[i] for i in idx]

    return pick(passes, "pass"), pick(fails, "fail")


@dataclass(frozen=True)
class CandidateEdit:
    """One annotation-loop correction to an exhaustive candidate set."""

    value: str
    add: tuple[str, ...] = ()
    remove: tuple[str, ...] = ()


def apply_candidate_edits(
    candidates: Mapping[str, CandidateEntry], edits: Sequence[CandidateEdit]
) -> tuple[dict[str, CandidateEntry], list[str]]:
    """Apply removals then additions; returns new candidates and audit lines."""
    out: dict[str, CandidateEntry] = dict(candidates)
    audit: list[str] = []
    for edit in edits:
        entry = out.get(edit.value)
        if entry is None:
            raise DataInvariantError(f"edit references unknown value {edit.value!r}")
        if isinstance(entry, ContrastivePair):
            raise DataInvariantError(
                f"value {edit.value!r} has contrastive candidates; add/remove edits "
                f"apply to exhaustive sets only"
            )
        current = list(entry.candidates)
        for cand in edit.remove:
            if cand not in current:
                raise DataInvariantError(
                    f"cannot remove {cand!r} from {edit.value!r}: not present"
                )
            if len(current) == 1:
                raise DataInvariantError(
                    f"cannot remove {cand!r}: it is the last candidate for {edit.value!r}"
                )
            current.remove(cand)
            audit.append(f"{edit.value}: removed {cand!r}")
        folded = {c.casefold() for c in current}
        for cand in edit.add:
            if not cand or not cand.strip():
                raise DataInvariantError(f"cannot add a blank candidate to {edit.value!r}")
            if cand.casefold() in folded:
                audit.append(f"{edit.value}: skipped {cand!r} (already present)")
                continue
            current.append(cand)
            folded.add(cand.casefold())
            audit.append(f"{edit.value}: added {cand!r}")
        out[edit.value] = CandidateSet(value=edit.value, candidates=tuple(current))
    return out, audit


def file_sha256(path: Path | str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
