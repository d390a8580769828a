"""Pass-fail detectors.

Exhaustive properties use case-insensitive substring matching against the
candidate set. Contrastive properties compare the translation's n-grams to
correct and foil candidates via embedding cosine similarity, where n is the
token count of the candidate under consideration.
"""
from __future__ import annotations

import math
import threading
import unicodedata
from dataclasses import dataclass
from typing import Protocol, Sequence

from .errors import DataInvariantError
from .model import CandidateSet, ContrastivePair, Verdict

EmbeddingVector = tuple[float, ...]

TOKENIZER_MODES = ("whitespace", "character")


class Embedder(Protocol):
    """Maps texts to fixed-dimension vectors; dim is constant per session."""

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


@dataclass(frozen=True)
class TokenizerConfig:
    """How translations and candidates are split into tokens.

    Whitespace mode suits space-segmented languages; character mode is for
    non-segmented scripts, where n becomes a character count.
    """

    mode: str = "whitespace"
    strip_edge_punct: bool = True

    def __post_init__(self) -> None:
        if self.mode not in TOKENIZER_MODES:
            raise DataInvariantError(f"unknown tokenizer mode {self.mode!r}")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_edges(token: str) -> str:
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def tokenize(text: str, tok: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Split text into tokens per the tokenizer config."""
    if tok.mode == "character":
        stripped = text.strip()
        if tok.strip_edge_punct:
            stripped = _strip_edges(stripped)
        return list(stripped)
    tokens = text.split()
    if tok.strip_edge_punct:
        tokens = [s for t in tokens if (s := _strip_edges(t))]
    return tokens


def ngrams(text: str, n: int, tok: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """All contiguous n-token windows of text, rejoined as strings.

    A text with fewer than n tokens yields one gram: the whole tokenized
    text. This keeps short translations comparable instead of auto-failing.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    toks = tokenize(text, tok)
    sep = "" if tok.mode == "character" else " "
    if len(toks) < n:
        return [sep.join(toks)]
    return [sep.join(toks[i : i + n]) for i in range(len(toks) - n + 1)]


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity in [-1, 1]; normalizes regardless of input norms."""
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    ta, tb = tuple(a), tuple(b)
    norm_a = sum(x * x for x in ta)
    norm_b = sum(x * x for x in tb)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine undefined for the zero vector")
    if ta == tb:
        return 1.0
    dot = sum(x * y for x, y in zip(ta, tb))
    return max(-1.0, min(1.0, dot / math.sqrt(norm_a * norm_b)))


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def _contains(haystack: str, needle: str, token_boundary: bool) -> bool:
    if not token_boundary:
        return needle in haystack
    start = 0
    while True:
        i = haystack.find(needle, start)
        if i < 0:
            return False
        before_ok = i == 0 or not _is_word_char(haystack[i - 1])
        j = i + len(needle)
        after_ok = j >= len(haystack) or not _is_word_char(haystack[j])
        if before_ok and after_ok:
            return True
        start = i + 1


def match_exhaustive(
    translation: str,
    candidates: CandidateSet,
    *,
    token_boundary: bool = False,
    case_id: str = "",
    system_id: str = "",
) -> Verdict:
    """Pass iff some candidate occurs in the translation, case-folded.

    Plain substring containment by default; `token_boundary=True` opts in to
    requiring non-word characters (or edges) around the match, for suites
    where e.g. a short unit symbol matching inside a longer word is unwanted.
    """
    folded = translation.casefold()
    for cand in candidates.candidates:
        if _contains(folded, cand.casefold(), token_boundary):
            return Verdict(
                case_id=case_id, system_id=system_id, passed=True, matched_candidate=cand
            )
    return Verdict(case_id=case_id, system_id=system_id, passed=False)


def max_sim(
    translation: str,
    candidate: str,
    embedder: Embedder,
    tok: TokenizerConfig = TokenizerConfig(),
) -> float:
    """Maximum cosine similarity between the candidate and any n-gram of the
    translation, with n equal to the candidate's token count."""
    if not candidate:
        raise ValueError("candidate must be nonempty")
    n = len(tokenize(candidate, tok)) or 1
    grams = ngrams(translation, n, tok)
    vectors = embedder.embed([candidate, *grams])
    cand_vec = vectors[0]
    return max(cosine(vec, cand_vec) for vec in vectors[1:])


def judge_contrastive(
    translation: str,
    pair: ContrastivePair,
    embedder: Embedder,
    tok: TokenizerConfig = TokenizerConfig(),
    *,
    case_id: str = "",
    system_id: str = "",
) -> Verdict:
    """Pass iff the translation is at least as close to the correct
    candidates as to the foils; ties pass."""
    sim_correct = max(max_sim(translation, c, embedder, tok) for c in pair.correct)
    sim_foil = max(max_sim(translation, f, embedder, tok) for f in pair.foil)
    return Verdict(
        case_id=case_id,
        system_id=system_id,
        passed=sim_correct >= sim_foil,
        scores=(sim_correct, sim_foil),
    )


class CachedEmbedder:
    """Thread-safe embedding cache keyed by exact text.

    Candidates embed once per suite and grams once per translation; repeat
    judgements against the same texts never re-hit the provider.
    """

    def __init__(self, inner: Embedder) -> None:
        self._inner = inner
        self._cache: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()
        self._dim: int | None = None

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            vectors = self._inner.embed(missing)
            if len(vectors) != len(missing):
                raise DataInvariantError(
                    f"embedder returned {len(vectors)} vectors for {len(missing)} texts"
                )
            with self._lock:
                for text, vec in zip(missing, vectors):
                    vec = tuple(vec)
                    if self._dim is None:
                        self._dim = len(vec)
                    elif len(vec) != self._dim:
                        raise DataInvariantError(
                            f"embedding dim changed from {self._dim} to {len(vec)}"
                        )
                    self._cache[text] = vec
        with self._lock:
            return [self._cache[t] for t in texts]
