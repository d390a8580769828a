"""Core domain types and the JSONL formats every other module consumes.

All types are immutable value objects: safe to share across threads.
Files are UTF-8, one JSON object per line, LF endings.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Union

from .errors import (
    DataInvariantError,
    EmptyValueError,
    MultipleValuesError,
    NoValueError,
    SuiteLoadError,
    UnbalancedBracketsError,
)

DETECTOR_KINDS = ("exhaustive", "contrastive")


def _fold(text: str) -> str:
    """Full Unicode case folding; the single definition of "case-insensitive"."""
    return text.casefold()


@dataclass(frozen=True)
class PropertySpec:
    """Declarative description of one tested language property."""

    id: str
    name: str
    detector: str
    source_prompt: str
    candidate_prompt: str
    demos: tuple[str, ...]
    language_pair: tuple[str, str]
    foil_prompt: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise DataInvariantError("property id must be nonempty")
        if self.detector not in DETECTOR_KINDS:
            raise DataInvariantError(
                f"property {self.id}: unknown detector {self.detector!r}"
            )
        if self.detector == "contrastive" and not self.foil_prompt:
            raise DataInvariantError(
                f"property {self.id}: contrastive detector requires a foil_prompt"
            )
        if len(self.demos) < 1:
            raise DataInvariantError(f"property {self.id}: at least one demo required")
        object.__setattr__(self, "demos", tuple(self.demos))
        object.__setattr__(self, "language_pair", tuple(self.language_pair))


@dataclass(frozen=True)
class ParsedSentence:
    """A bracket-parsed line: the TestCase fragment before an id is assigned."""

    raw: str
    source: str
    value: str
    value_span: tuple[int, int]


def parse_bracketed(raw: str) -> ParsedSentence:
    """Parse one generated line into (source, value, span).

    `raw` is the line with any leading "- " item marker already removed.
    The returned source is `raw` minus the two bracket characters, and
    the span locates the value inside that stripped sentence.
    """
    opens = raw.count("[")
    closes = raw.count("]")
    if opens != closes:
        raise UnbalancedBracketsError(raw)
    if opens == 0:
        raise NoValueError(raw)
    if opens > 1:
        raise MultipleValuesError(raw)
    i = raw.index("[")
    j = raw.index("]")
    if j < i:
        raise UnbalancedBracketsError(raw)
    value = raw[i + 1 : j]
    if not value.strip():
        raise EmptyValueError(raw)
    source = raw[:i] + value + raw[j + 1 :]
    return ParsedSentence(raw=raw, source=source, value=value, value_span=(i, i + len(value)))


@dataclass(frozen=True)
class TestCase:
    """One source sentence with a single tagged property value.

    Spans are half-open [start, end) intervals in Unicode scalar values.
    """

    __test__ = False  # not a pytest class, despite the name

    id: str
    property_id: str
    raw: str
    source: str
    value: str
    value_span: tuple[int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "value_span", tuple(self.value_span))
        s, e = self.value_span
        if not self.value:
            raise DataInvariantError(f"case {self.id}: empty value")
        if not (0 <= s <= e <= len(self.source)):
            raise DataInvariantError(f"case {self.id}: span {self.value_span} out of range")
        if self.source[s:e] != self.value:
            raise DataInvariantError(
                f"case {self.id}: source[{s}:{e}] != value {self.value!r}"
            )
        if self.raw.count("[") != 1 or self.raw.count("]") != 1:
            raise DataInvariantError(f"case {self.id}: raw must contain exactly one bracket pair")
        if self.reconstruct_raw() != self.raw:
            raise DataInvariantError(f"case {self.id}: source/span does not reconstruct raw")

    def reconstruct_raw(self) -> str:
        s, e = self.value_span
        return self.source[:s] + "[" + self.value + "]" + self.source[e:]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "property_id": self.property_id,
            "raw": self.raw,
            "source": self.source,
            "value": self.value,
            "value_span": list(self.value_span),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TestCase":
        return cls(
            id=d["id"],
            property_id=d["property_id"],
            raw=d["raw"],
            source=d["source"],
            value=d["value"],
            value_span=tuple(d["value_span"]),
        )


@dataclass(frozen=True)
class CandidateSet:
    """All (practically all) valid target-language translations of one value."""

    value: str
    candidates: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise DataInvariantError(f"candidate set for {self.value!r} is empty")
        seen: set[str] = set()
        for cand in self.candidates:
            if not cand or not cand.strip():
                raise DataInvariantError(f"candidate set for {self.value!r} has a blank entry")
            folded = _fold(cand)
            if folded in seen:
                raise DataInvariantError(
                    f"candidate set for {self.value!r} has duplicate entry {cand!r}"
                )
            seen.add(folded)

    def to_dict(self) -> dict:
        return {"value": self.value, "candidates": list(self.candidates)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CandidateSet":
        return cls(value=d["value"], candidates=tuple(d["candidates"]))


@dataclass(frozen=True)
class ContrastivePair:
    """Correct-meaning vs. literal-foil translation candidates for one value."""

    value: str
    correct: tuple[str, ...]
    foil: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "correct", tuple(self.correct))
        object.__setattr__(self, "foil", tuple(self.foil))
        if not self.correct or not self.foil:
            raise DataInvariantError(
                f"contrastive pair for {self.value!r} needs nonempty correct and foil lists"
            )
        folded_correct = {_fold(c) for c in self.correct}
        overlap = [f for f in self.foil if _fold(f) in folded_correct]
        if overlap:
            raise DataInvariantError(
                f"contrastive pair for {self.value!r}: correct/foil overlap {overlap!r}"
            )

    def to_dict(self) -> dict:
        return {"value": self.value, "correct": list(self.correct), "foil": list(self.foil)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ContrastivePair":
        return cls(value=d["value"], correct=tuple(d["correct"]), foil=tuple(d["foil"]))


CandidateEntry = Union[CandidateSet, ContrastivePair]


@dataclass(frozen=True)
class TranslationRecord:
    """One MT system's translation of one test case."""

    case_id: str
    system_id: str
    translation: str

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "system_id": self.system_id,
            "translation": self.translation,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TranslationRecord":
        return cls(case_id=d["case_id"], system_id=d["system_id"], translation=d["translation"])


@dataclass(frozen=True)
class Verdict:
    """Pass/fail decision for one (test case, system).

    Exhaustive passes carry the matching candidate; contrastive verdicts
    carry the (sim_correct, sim_foil) score pair.
    """

    case_id: str
    system_id: str
    passed: bool
    matched_candidate: str | None = None
    scores: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.scores is not None:
            object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))

    def to_dict(self) -> dict:
        d: dict = {"case_id": self.case_id, "system_id": self.system_id, "pass": self.passed}
        if self.matched_candidate is not None:
            d["matched_candidate"] = self.matched_candidate
        if self.scores is not None:
            d["scores"] = list(self.scores)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Verdict":
        scores = d.get("scores")
        return cls(
            case_id=d["case_id"],
            system_id=d["system_id"],
            passed=bool(d["pass"]),
            matched_candidate=d.get("matched_candidate"),
            scores=tuple(scores) if scores is not None else None,
        )


# ---------------------------------------------------------------------------
# JSONL serialization


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SuiteLoadError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise SuiteLoadError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _write_jsonl(rows: Iterable[dict], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def save_suite(cases: Iterable[TestCase], path: Path | str) -> None:
    _write_jsonl((c.to_dict() for c in cases), Path(path))


def load_suite(path: Path | str) -> list[TestCase]:
    """Load a suite; save/load round-trips to structurally equal cases."""
    path = Path(path)
    cases: list[TestCase] = []
    seen_ids: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            case = TestCase.from_dict(obj)
        except KeyError as exc:
            raise SuiteLoadError(f"{path}:{lineno}: missing field {exc}") from exc
        if case.id in seen_ids:
            raise DataInvariantError(f"{path}:{lineno}: duplicate case id {case.id!r}")
        seen_ids.add(case.id)
        cases.append(case)
    return cases


def save_candidates(entries: Iterable[CandidateEntry], path: Path | str) -> None:
    _write_jsonl((e.to_dict() for e in entries), Path(path))


def load_candidates(path: Path | str) -> dict[str, CandidateEntry]:
    """Load candidates keyed by property value, preserving file order."""
    path = Path(path)
    out: dict[str, CandidateEntry] = {}
    for lineno, obj in _iter_jsonl(path):
        try:
            if "candidates" in obj:
                entry: CandidateEntry = CandidateSet.from_dict(obj)
            elif "correct" in obj or "foil" in obj:
                entry = ContrastivePair.from_dict(obj)
            else:
                raise SuiteLoadError(
                    f"{path}:{lineno}: neither 'candidates' nor 'correct'/'foil' present"
                )
        except KeyError as exc:
            raise SuiteLoadError(f"{path}:{lineno}: missing field {exc}") from exc
        if entry.value in out:
            raise DataInvariantError(f"{path}:{lineno}: duplicate value {entry.value!r}")
        out[entry.value] = entry
    return out


def save_translations(records: Iterable[TranslationRecord], path: Path | str) -> None:
    _write_jsonl((r.to_dict() for r in records), Path(path))


def load_translations(path: Path | str) -> list[TranslationRecord]:
    path = Path(path)
    records = []
    for lineno, obj in _iter_jsonl(path):
        try:
            records.append(TranslationRecord.from_dict(obj))
        except KeyError as exc:
            raise SuiteLoadError(f"{path}:{lineno}: missing field {exc}") from exc
    return records


def save_verdicts(verdicts: Iterable[Verdict], path: Path | str) -> None:
    _write_jsonl((v.to_dict() for v in verdicts), Path(path))


def load_verdicts(path: Path | str) -> list[Verdict]:
    path = Path(path)
    verdicts = []
    for lineno, obj in _iter_jsonl(path):
        try:
            verdicts.append(Verdict.from_dict(obj))
        except KeyError as exc:
            raise SuiteLoadError(f"{path}:{lineno}: missing field {exc}") from exc
    return verdicts
