"""LLM-driven test suite and candidate generation.

Drives a text-generation provider with per-property prompt templates, parses
the itemized output, filters it (single bracketed value, single sentence, no
duplicates), and loops until the suite reaches its target size.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import (
    BracketParseError,
    ConfigError,
    DataInvariantError,
    EmptyAfterParseError,
    MaxBatchesExceededError,
    UnanswerableValueError,
)
from .model import CandidateSet, ContrastivePair, ParsedSentence, PropertySpec, TestCase, parse_bracketed
from .providers import DEFAULT_PRESENCE_PENALTY, DEFAULT_TEMPERATURE, LlmProvider, LlmRequest

log = logging.getLogger(__name__)

DEFAULT_TARGET_COUNT = 1000

# Human-readable names keep rendered prompts natural; unknown tags pass through.
LANGUAGE_NAMES = {
    "en": "English",
    "de": "German",
    "es": "Spanish",
    "ja": "Japanese",
    "fr": "French",
    "it": "Italian",
    "pt": "Portuguese",
    "zh": "Chinese",
    "ko": "Korean",
}

_DEMO_SLOT = re.compile(r"\{demo_(\d+)\}")
_KNOWN_SLOTS = ("{property}", "{src_lang}", "{tgt_lang}", "{value}", "{sentence}")
_SENTENCE_BREAK = re.compile(r"[.!?]\s+[^\W\d_]")
_WS = re.compile(r"\s+")


def language_name(tag: str) -> str:
    return LANGUAGE_NAMES.get(tag.lower(), tag)


def _render(template: str, mapping: Mapping[str, str]) -> str:
    out = template
    for key, val in mapping.items():
        out = out.replace("{" + key + "}", val)
    return out


def _check_unfilled(text: str, context: str) -> None:
    leftover = _DEMO_SLOT.search(text)
    if leftover:
        raise ConfigError(
            f"{context}: demo slot {{demo_{leftover.group(1)}}} has no matching demo"
        )
    for slot in _KNOWN_SLOTS:
        if slot in text:
            raise ConfigError(f"{context}: placeholder {slot} was not filled")


def _base_mapping(spec: PropertySpec) -> dict[str, str]:
    src, tgt = spec.language_pair
    return {
        "property": spec.name,
        "src_lang": language_name(src),
        "tgt_lang": language_name(tgt),
    }


def render_source_prompt(spec: PropertySpec) -> str:
    """Fill the property's source-sentence template with its name and demos."""
    mapping = _base_mapping(spec)
    for match in _DEMO_SLOT.finditer(spec.source_prompt):
        index = int(match.group(1))
        if index < 1 or index > len(spec.demos):
            raise ConfigError(
                f"property {spec.id}: template needs demo #{index} but only "
                f"{len(spec.demos)} demos are configured"
            )
        mapping[f"demo_{index}"] = spec.demos[index - 1]
    rendered = _render(spec.source_prompt, mapping)
    _check_unfilled(rendered, f"property {spec.id} source prompt")
    return rendered


def render_candidate_prompt(spec: PropertySpec, value: str) -> str:
    """Fill the exhaustive-candidates template for one property value."""
    mapping = _base_mapping(spec)
    mapping["value"] = value
    rendered = _render(spec.candidate_prompt, mapping)
    _check_unfilled(rendered, f"property {spec.id} candidate prompt")
    return rendered


def render_contrastive_prompts(spec: PropertySpec, value: str, sentence: str) -> tuple[str, str]:
    """Fill the (correct, foil) templates for one contrastive value.

    The correct-side template sees the full source sentence so the prompt
    carries the value in context; the foil side sees the value alone.
    """
    if not spec.foil_prompt:
        raise ConfigError(f"property {spec.id}: no foil prompt configured")
    mapping = _base_mapping(spec)
    mapping["value"] = value
    mapping["sentence"] = sentence
    correct = _render(spec.candidate_prompt, mapping)
    foil = _render(spec.foil_prompt, mapping)
    _check_unfilled(correct, f"property {spec.id} correct prompt")
    _check_unfilled(foil, f"property {spec.id} foil prompt")
    return correct, foil


def parse_item_list(response: str) -> list[str]:
    """Extract "- " items from a response, dropping chatter and blank lines."""
    items = []
    for line in response.splitlines():
        stripped = line.strip()
        if stripped.startswith("- "):
            items.append(stripped[2:].strip())
    return items


def _count_chatter(response: str) -> int:
    return sum(
        1
        for line in response.splitlines()
        if line.strip() and not line.strip().startswith("- ")
    )


def normalize_sentence(text: str) -> str:
    """Duplicate-detection key: trimmed, whitespace-collapsed, case-folded."""
    return _WS.sub(" ", text.strip()).casefold()


def is_multi_sentence(text: str) -> bool:
    # Terminal mark followed by whitespace and a letter; abbreviations cause
    # some false rejections, which is acceptable at generation cost.
    return bool(_SENTENCE_BREAK.search(text.strip()))


def filter_sentences(
    parsed: Sequence[str], seen: set[str]
) -> tuple[list[ParsedSentence], list[tuple[str, str]]]:
    """Apply the acceptance filters to a batch of generated lines.

    `seen` carries normalized sentences accepted so far and is updated in
    place. Returns accepted fragments and (line, reason) rejections.
    """
    accepted: list[ParsedSentence] = []
    rejections: list[tuple[str, str]] = []
    for item in parsed:
        try:
            fragment = parse_bracketed(item)
        except BracketParseError as exc:
            rejections.append((item, exc.reason))
            continue
        if is_multi_sentence(fragment.source):
            rejections.append((item, "multi_sentence"))
            continue
        key = normalize_sentence(fragment.source)
        if key in seen:
            rejections.append((item, "duplicate"))
            continue
        seen.add(key)
        accepted.append(fragment)
    return accepted, rejections


@dataclass
class BatchStats:
    """Filter outcome of one generation batch; emitted = kept + rejected."""

    emitted: int
    kept: int
    rejected_by_reason: dict[str, int]
    chatter: int = 0

    def __post_init__(self) -> None:
        rejected = sum(self.rejected_by_reason.values())
        if self.emitted != self.kept + rejected:
            raise DataInvariantError(
                f"batch stats do not reconcile: {self.emitted} != {self.kept} + {rejected}"
            )


@dataclass
class GenerationLog:
    """Accounting for one property's generation run."""

    property_id: str
    batches: list[BatchStats] = field(default_factory=list)
    accepted: list[dict] = field(default_factory=list)
    value_counts: dict[str, int] = field(default_factory=dict)
    truncated: int = 0

    @property
    def emitted(self) -> int:
        return sum(b.emitted for b in self.batches)

    @property
    def kept(self) -> int:
        return sum(b.kept for b in self.batches)

    def rejected_totals(self) -> dict[str, int]:
        totals: dict[str, int] = {}
        for batch in self.batches:
            for reason, count in batch.rejected_by_reason.items():
                totals[reason] = totals.get(reason, 0) + count
        return totals

    def to_dict(self) -> dict:
        return {
            "property_id": self.property_id,
            "emitted": self.emitted,
            "kept": self.kept,
            "rejected_by_reason": self.rejected_totals(),
            "truncated": self.truncated,
            "batches": [
                {
                    "emitted": b.emitted,
                    "kept": b.kept,
                    "chatter": b.chatter,
                    "rejected_by_reason": b.rejected_by_reason,
                }
                for b in self.batches
            ],
            "accepted": self.accepted,
            "value_counts": self.value_counts,
        }


def default_max_batches(target_count: int) -> int:
    # Each batch nominally yields 10 items; the cap stops degenerate loops.
    return max(1, math.ceil(target_count / 2))


def generate_suite(
    spec: PropertySpec,
    target_count: int,
    llm: LlmProvider,
    seed: int = 0,
    *,
    temperature: float = DEFAULT_TEMPERATURE,
    presence_penalty: float = DEFAULT_PRESENCE_PENALTY,
    max_batches: int | None = None,
) -> tuple[list[TestCase], GenerationLog]:
    """Generate test cases for one property until `target_count` are kept.

    The identical prompt is re-issued every batch (demo rotation is a
    possible extension; `seed` is reserved for it and for provider-side
    sampling). Deterministic given a deterministic provider.
    """
    del seed  # reserved; generation state is fully provider-driven today
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    if max_batches is None:
        max_batches = default_max_batches(target_count)
    prompt = render_source_prompt(spec)
    request = LlmRequest(prompt=prompt, temperature=temperature, presence_penalty=presence_penalty)
    seen: set[str] = set()
    cases: list[TestCase] = []
    logbook = GenerationLog(property_id=spec.id)
    for batch_index in range(max_batches):
        response = llm.complete(request)
        items = parse_item_list(response)
        accepted, rejections = filter_sentences(items, seen)
        reasons: dict[str, int] = {}
        for _, reason in rejections:
            reasons[reason] = reasons.get(reason, 0) + 1
        logbook.batches.append(
            BatchStats(
                emitted=len(items),
                kept=len(accepted),
                rejected_by_reason=reasons,
                chatter=_count_chatter(response),
            )
        )
        for fragment in accepted:
            logbook.value_counts[fragment.value] = (
                logbook.value_counts.get(fragment.value, 0) + 1
            )
            if len(cases) >= target_count:
                logbook.truncated += 1
                continue
            case = TestCase(
                id=f"{spec.id}-{len(cases):05d}",
                property_id=spec.id,
                raw=fragment.raw,
                source=fragment.source,
                value=fragment.value,
                value_span=fragment.value_span,
            )
            cases.append(case)
            logbook.accepted.append({"id": case.id, "batch": batch_index, "value": case.value})
        if len(cases) >= target_count:
            return cases, logbook
    raise MaxBatchesExceededError(
        f"property {spec.id}: {len(cases)}/{target_count} cases after {max_batches} batches"
    )


def _parse_pipe_list(response: str, value: str, side: str = "") -> list[str]:
    text = response.strip()
    if text == "NA":
        raise UnanswerableValueError(value, side)
    entries = []
    seen: set[str] = set()
    for part in text.split("|"):
        part = part.strip()
        if not part:
            continue
        folded = part.casefold()
        if folded in seen:
            continue
        seen.add(folded)
        entries.append(part)
    if not entries:
        raise EmptyAfterParseError(
            f"candidate response for {value!r} parsed to an empty list: {response!r}"
        )
    return entries


def generate_exhaustive_candidates(
    value: str,
    spec: PropertySpec,
    llm: LlmProvider,
    *,
    temperature: float = DEFAULT_TEMPERATURE,
    presence_penalty: float = DEFAULT_PRESENCE_PENALTY,
) -> CandidateSet:
    """Ask the LLM for every valid translation of one property value."""
    if not value:
        raise ValueError("value must be nonempty")
    prompt = render_candidate_prompt(spec, value)
    response = llm.complete(
        LlmRequest(prompt=prompt, temperature=temperature, presence_penalty=presence_penalty)
    )
    return CandidateSet(value=value, candidates=tuple(_parse_pipe_list(response, value)))


def generate_contrastive_pair(
    value: str,
    sentence: str,
    spec: PropertySpec,
    llm: LlmProvider,
    *,
    temperature: float = DEFAULT_TEMPERATURE,
    presence_penalty: float = DEFAULT_PRESENCE_PENALTY,
) -> ContrastivePair:
    """Ask the LLM for correct-meaning and literal-foil translation lists.

    Entries the LLM proposes on both sides are kept only as correct: a string
    it considers a valid figurative translation must not cause a fail.
    """
    if not value:
        raise ValueError("value must be nonempty")
    correct_prompt, foil_prompt = render_contrastive_prompts(spec, value, sentence)
    correct_resp = llm.complete(
        LlmRequest(prompt=correct_prompt, temperature=temperature, presence_penalty=presence_penalty)
    )
    foil_resp = llm.complete(
        LlmRequest(prompt=foil_prompt, temperature=temperature, presence_penalty=presence_penalty)
    )
    correct = _parse_pipe_list(correct_resp, value, side="correct")
    foil = _parse_pipe_list(foil_resp, value, side="foil")
    folded_correct = {c.casefold() for c in correct}
    foil = [f for f in foil if f.casefold() not in folded_correct]
    if not foil:
        raise DataInvariantError(
            f"contrastive pair for {value!r}: every foil overlaps the correct list"
        )
    return ContrastivePair(value=value, correct=tuple(correct), foil=tuple(foil))


def generation_stats(logbook: GenerationLog) -> tuple[float, float]:
    """(kept fraction of emitted, distinct-value fraction of kept)."""
    if not logbook.batches:
        raise DataInvariantError("generation log has no batches")
    emitted = logbook.emitted
    if emitted == 0:
        raise DataInvariantError("no items were emitted")
    kept = logbook.kept
    unique = len(logbook.value_counts)
    return kept / emitted, (unique / kept) if kept else 0.0
