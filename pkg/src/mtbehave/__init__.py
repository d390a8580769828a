"""Behavioral-testing harness for machine translation systems.

Generates property-tagged test suites and candidate translation sets via an
LLM provider, judges MT outputs with string-matching and contrastive
n-gram-similarity detectors, and reports macro pass rates with bootstrap
confidence intervals and paired significance tests.
"""

from .detection import (
    CachedEmbedder,
    TokenizerConfig,
    cosine,
    judge_contrastive,
    match_exhaustive,
    max_sim,
    ngrams,
    tokenize,
)
from .generation import (
    GenerationLog,
    filter_sentences,
    generate_contrastive_pair,
    generate_exhaustive_candidates,
    generate_suite,
    generation_stats,
    parse_item_list,
    render_candidate_prompt,
    render_contrastive_prompts,
    render_source_prompt,
)
from .metrics import (
    Interval,
    PairedResult,
    ResampleConfig,
    Sample,
    bootstrap_ci,
    diversity_series,
    macro_pass_rate,
    paired_bootstrap,
    pass_rate,
    trend_fit,
)
from .model import (
    CandidateSet,
    ContrastivePair,
    PropertySpec,
    TestCase,
    TranslationRecord,
    Verdict,
    load_candidates,
    load_suite,
    load_translations,
    load_verdicts,
    parse_bracketed,
    save_candidates,
    save_suite,
    save_translations,
    save_verdicts,
)
from .providers import (
    HashEmbedder,
    HttpChatProvider,
    HttpEmbedder,
    LlmRequest,
    ReplayProvider,
    replay_key,
    write_replay_responses,
)
from .runner import (
    AdapterSpec,
    CandidateEdit,
    DetectorContext,
    SuiteReport,
    TranslationCache,
    apply_candidate_edits,
    build_report,
    evaluate,
    sample_for_annotation,
    translate_all,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterSpec",
    "CachedEmbedder",
    "CandidateEdit",
    "CandidateSet",
    "ContrastivePair",
    "DetectorContext",
    "GenerationLog",
    "HashEmbedder",
    "HttpChatProvider",
    "HttpEmbedder",
    "Interval",
    "LlmRequest",
    "PairedResult",
    "PropertySpec",
    "ReplayProvider",
    "ResampleConfig",
    "Sample",
    "SuiteReport",
    "TestCase",
    "TokenizerConfig",
    "TranslationCache",
    "TranslationRecord",
    "Verdict",
    "apply_candidate_edits",
    "bootstrap_ci",
    "build_report",
    "cosine",
    "diversity_series",
    "evaluate",
    "filter_sentences",
    "generate_contrastive_pair",
    "generate_exhaustive_candidates",
    "generate_suite",
    "generation_stats",
    "judge_contrastive",
    "load_candidates",
    "load_suite",
    "load_translations",
    "load_verdicts",
    "macro_pass_rate",
    "match_exhaustive",
    "max_sim",
    "ngrams",
    "paired_bootstrap",
    "parse_bracketed",
    "parse_item_list",
    "pass_rate",
    "render_candidate_prompt",
    "render_contrastive_prompts",
    "render_source_prompt",
    "replay_key",
    "sample_for_annotation",
    "save_candidates",
    "save_suite",
    "save_translations",
    "save_verdicts",
    "tokenize",
    "translate_all",
    "trend_fit",
    "write_replay_responses",
]
