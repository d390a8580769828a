"""Acceptance criteria, one test per criterion.

Each test prints `ACCEPTANCE <n> <name>: PASS|FAIL` (visible with -s or in
captured output on failure). Tolerances are fixed here, not calibrated.
"""
from __future__ import annotations

import functools
import json
import random
import time


from mtbehave.cli import main
from mtbehave.config import load_config
from mtbehave.detection import TokenizerConfig, cosine, judge_contrastive, match_exhaustive, max_sim, ngrams, tokenize
from mtbehave.generation import generate_suite, generation_stats
from mtbehave.metrics import (
    Interval,
    ResampleConfig,
    Sample,
    bootstrap_ci,
    diversity_series,
    macro_pass_rate,
    paired_bootstrap,
    pass_rate,
)
from mtbehave.model import CandidateSet, ContrastivePair, TestCase, TranslationRecord, parse_bracketed
from mtbehave.providers import HashEmbedder
from mtbehave.runner import CandidateEdit, apply_candidate_edits, evaluate

from conftest import ScriptedLlm, build_offline_workspace, make_spec


def criterion(number: int, name: str):
    """Print the per-criterion pass/fail line around the wrapped test."""

    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {number:2d} {name}: FAIL")
                raise
            print(f"ACCEPTANCE {number:2d} {name}: PASS")
            return result

        return wrapper

    return decorate


# -- 1 ----------------------------------------------------------------------

ALPHABET = "abcdeßÄÉ😀 .,'"


def random_text(rng: random.Random, max_len: int) -> str:
    return "".join(rng.choice(ALPHABET) for _ in range(rng.randint(0, max_len)))


@criterion(1, "detector oracle equivalence (10k instances, <5s)")
def test_detector_oracle_equivalence():
    rng = random.Random(104729)
    instances = []
    while len(instances) < 10_000:
        translation = random_text(rng, 24)
        candidates = []
        for _ in range(rng.randint(1, 5)):
            cand = random_text(rng, 4).strip()
            if cand:
                candidates.append(cand)
        if not candidates:
            continue
        # plant a true match in a third of the instances
        if rng.random() < 0.33:
            pos = rng.randint(0, len(translation))
            translation = translation[:pos] + rng.choice(candidates) + translation[pos:]
        folded_seen: set[str] = set()
        unique = [c for c in candidates if not (c.casefold() in folded_seen or folded_seen.add(c.casefold()))]
        instances.append((translation, CandidateSet(value="v", candidates=tuple(unique))))

    start = time.perf_counter()
    outcomes = [match_exhaustive(t, cs).passed for t, cs in instances]
    elapsed = time.perf_counter() - start
    expected = [any(c.casefold() in t.casefold() for c in cs.candidates) for t, cs in instances]
    assert outcomes == expected
    assert 0 < sum(outcomes) < len(outcomes), "fixture must exercise both verdicts"
    assert elapsed < 5.0, f"detector took {elapsed:.2f}s"


# -- 2 ----------------------------------------------------------------------


@criterion(2, "contrastive max-similarity equals brute force (1k instances)")
def test_algorithm_equivalence():
    rng = random.Random(1299709)
    embedder = HashEmbedder(dim=32)
    tok = TokenizerConfig()
    words = ["viel", "Glück", "Bein", "brich", "dir", "ein", "heute", "Morgen", "läuft", "gut"]

    def phrase(k_min=1, k_max=4):
        return " ".join(rng.choice(words) for _ in range(rng.randint(k_min, k_max)))

    checked_pass = checked_fail = 0
    for _ in range(1_000):
        translation = phrase(0, 10)
        correct = phrase()
        foil = phrase()
        if foil.casefold() == correct.casefold():
            foil = foil + " anders"
        pair = ContrastivePair(value="v", correct=(correct,), foil=(foil,))

        def brute(candidate: str) -> float:
            n = len(tokenize(candidate, tok)) or 1
            cand_vec = embedder.embed([candidate])[0]
            return max(
                cosine(embedder.embed([g])[0], cand_vec) for g in ngrams(translation, n, tok)
            )

        sim_correct, sim_foil = brute(correct), brute(foil)
        assert max_sim(translation, correct, embedder, tok) == sim_correct
        assert max_sim(translation, foil, embedder, tok) == sim_foil
        verdict = judge_contrastive(translation, pair, embedder, tok)
        assert verdict.passed == (sim_correct >= sim_foil)
        assert verdict.scores == (sim_correct, sim_foil)
        checked_pass += verdict.passed
        checked_fail += not verdict.passed
    assert checked_pass and checked_fail, "fixture must exercise both verdicts"


# -- 3 ----------------------------------------------------------------------


@criterion(3, "worked examples: unit matching, decimal formats, 2-gram")
def test_worked_paper_examples():
    cset = CandidateSet(value="miles", candidates=("Meilen", "mi"))
    assert match_exhaustive("Ich lief 3 Meilen.", cset).passed
    assert not match_exhaustive("Ich lief 3 km.", cset).passed

    decimals = CandidateSet(value="4200.4", candidates=("4200,4", "4.200,4"))
    assert match_exhaustive("Das Unternehmen erhielt 4200,4€.", decimals).passed
    assert match_exhaustive("Das Unternehmen erhielt 4.200,4€.", decimals).passed

    grams = ngrams("Estoy muy emocionado por el concierto", 2, TokenizerConfig())
    assert "muy emocionado" in grams


# -- 4 ----------------------------------------------------------------------


@criterion(4, "metrics identities: MPR/PR relations and bounds (10k samples)")
def test_metrics_identities():
    rng = random.Random(15485863)
    sample = Sample.from_pairs([("A", 1), ("A", 0), ("B", 1), ("B", 1), ("B", 1), ("B", 1)])
    assert macro_pass_rate(sample) == 0.75
    assert pass_rate(sample) == 5 / 6

    for _ in range(10_000):
        n = rng.randint(1, 12)
        values = [f"v{rng.randint(0, 5)}" for _ in range(n)]
        pairs = [(v, rng.randint(0, 1)) for v in values]
        s = Sample.from_pairs(pairs)
        pr, mpr = pass_rate(s), macro_pass_rate(s)
        assert 0.0 <= pr <= 1.0 and 0.0 <= mpr <= 1.0
        singleton = Sample.from_pairs(
            [(f"u{i}", p) for i, (_, p) in enumerate(pairs)]
        )
        assert macro_pass_rate(singleton) == pass_rate(singleton)


# -- 5 ----------------------------------------------------------------------


@criterion(5, "bootstrap coverage 95% +/- 4pt at p in {0.3, 0.7, 0.9} (<60s)")
def test_bootstrap_coverage():
    start = time.perf_counter()
    datasets = 200
    n = 1000
    for case_index, p in enumerate((0.3, 0.7, 0.9)):
        hits = 0
        for i in range(datasets):
            rng = random.Random(900_001 + 7919 * case_index + i)
            sample = Sample.from_pairs(
                ("v", 1 if rng.random() < p else 0) for _ in range(n)
            )
            ci = bootstrap_ci(sample, ResampleConfig(k=1000, alpha=0.05, seed=i))
            hits += ci.lo <= p <= ci.hi
        coverage = hits / datasets
        assert 0.91 <= coverage <= 0.99, f"coverage {coverage:.3f} at p={p}"
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"coverage study took {elapsed:.1f}s"


# -- 6 ----------------------------------------------------------------------


@criterion(6, "paired bootstrap: tie=0.5 exactly, separation=0.0, antisymmetry")
def test_paired_bootstrap_sanity():
    cfg = ResampleConfig(k=500, alpha=0.05, seed=31)
    rng = random.Random(32452843)
    identical = Sample.from_pairs(("v", rng.randint(0, 1)) for _ in range(200))
    result = paired_bootstrap(identical, identical, cfg)
    assert result.p_value == 0.5
    assert result.winner is None

    n = 100
    all_pass = Sample.from_pairs([("v", 1)] * n)
    all_fail = Sample.from_pairs([("v", 0)] * n)
    separated = paired_bootstrap(all_pass, all_fail, cfg)
    assert separated.winner == "a" and separated.p_value == 0.0

    small = ResampleConfig(k=80, alpha=0.05, seed=5)
    for _ in range(100):
        n = rng.randint(4, 30)
        values = [rng.choice("abc") for _ in range(n)]
        a = Sample.from_pairs((v, rng.randint(0, 1)) for v in values)
        b = Sample.from_pairs((v, rng.randint(0, 1)) for v in values)
        fwd = paired_bootstrap(a, b, small)
        rev = paired_bootstrap(b, a, small)
        assert fwd.p_value == rev.p_value
        assert {"a": "b", "b": "a", None: None}[fwd.winner] == rev.winner
        assert (fwd.wins_a, fwd.wins_b) == (rev.wins_b, rev.wins_a)


# -- 7 ----------------------------------------------------------------------


@criterion(7, "diversity: first=1.0, repeat=0.0, oracle on 100 random suites")
def test_diversity_metric():
    assert diversity_series(["a b c d"], 3) == [1.0]
    assert diversity_series(["a b c d", "a b c d"], 3) == [1.0, 0.0]

    rng = random.Random(49979687)
    words = ["uno", "dos", "tres", "cuatro", "cinco", "seis"]
    for _ in range(100):
        n = rng.randint(1, 3)
        sentences = [
            " ".join(rng.choice(words) for _ in range(rng.randint(n, 8))) for _ in range(2)
        ]
        first_grams = {
            tuple(sentences[0].split()[i : i + n])
            for i in range(len(sentences[0].split()) - n + 1)
        }
        second_grams = {
            tuple(sentences[1].split()[i : i + n])
            for i in range(len(sentences[1].split()) - n + 1)
        }
        expected = [1.0, len(second_grams - first_grams) / len(second_grams)]
        got = diversity_series(sentences, n)
        assert got == expected
        assert all(0.0 <= v <= 1.0 for v in got)


# -- 8 ----------------------------------------------------------------------


@criterion(8, "end-to-end determinism and names-property MPR 1.0")
def test_end_to_end_determinism(tmp_path):
    config_path = build_offline_workspace(tmp_path)
    config = load_config(str(config_path))
    suite_path = config.property_dir("names") / "suite.jsonl"
    candidates_path = config.property_dir("names") / "candidates.jsonl"

    snapshots = []
    for execution in (1, 2):
        assert main(["generate", "--config", str(config_path)]) == 0
        assert main(["candidates", "--config", str(config_path)]) == 0
        out_dir = tmp_path / f"exec{execution}"
        assert main(["run", "--config", str(config_path), "--out", str(out_dir)]) == 0
        snapshots.append(
            {
                "suite": suite_path.read_bytes(),
                "candidates": candidates_path.read_bytes(),
                "verdicts": (out_dir / "verdicts.jsonl").read_bytes(),
                "report": (out_dir / "report.json").read_bytes(),
            }
        )
    assert snapshots[0] == snapshots[1]

    report = json.loads(snapshots[0]["report"].decode("utf-8"))
    names = report["properties"]["names"]["systems"]["identity"]
    assert names["mpr"] == 1.0
    assert names["ci"] == [1.0, 1.0]


# -- 9 ----------------------------------------------------------------------


@criterion(9, "annotation edits: additions never lower, removals never raise")
def test_annotation_monotonicity(units_spec):
    rng = random.Random(67867967)
    unit_names = [f"unit{i}" for i in range(10)]
    raws = [
        f"Case {i} measured [" + rng.choice(unit_names) + "] exactly."
        for i in range(100)
    ]
    suite = []
    for i, raw in enumerate(raws):
        parsed = parse_bracketed(raw)
        suite.append(
            TestCase(
                id=f"units-{i:05d}", property_id="units", raw=parsed.raw,
                source=parsed.source, value=parsed.value, value_span=parsed.value_span,
            )
        )
    candidates = {
        name: CandidateSet(value=name, candidates=(f"Einheit{name[4:]}", name.upper()))
        for name in unit_names
    }
    translations = {}
    for system, hit_rate in (("good", 0.8), ("poor", 0.4)):
        translations[system] = [
            TranslationRecord(
                case_id=c.id,
                system_id=system,
                translation=(
                    f"Der Wert war Einheit{c.value[4:]}."
                    if rng.random() < hit_rate
                    else "Der Wert fehlt."
                ),
            )
            for c in suite
        ]

    def pass_counts(cands):
        return {
            system: sum(
                v.passed for v in evaluate(units_spec, suite, cands, recs).verdicts
            )
            for system, recs in translations.items()
        }

    before = pass_counts(candidates)
    additions = [CandidateEdit(value=name, add=("Wert",)) for name in unit_names[:4]]
    added, _ = apply_candidate_edits(candidates, additions)
    after_add = pass_counts(added)
    for system in translations:
        assert after_add[system] >= before[system]
    assert any(after_add[s] > before[s] for s in translations)

    removals = [CandidateEdit(value=name, remove=(name.upper(),)) for name in unit_names]
    removed, _ = apply_candidate_edits(candidates, removals)
    after_remove = pass_counts(removed)
    for system in translations:
        assert after_remove[system] <= before[system]


# -- 10 ---------------------------------------------------------------------


@criterion(10, "generation stats: engineered 30% rejection yields kept=70%")
def test_generation_statistics(units_spec):
    def batch(start: int) -> str:
        uniques = [f"Sentence {i} holds [{i} units] fine." for i in range(start, start + 7)]
        dups = [uniques[0], uniques[1]]
        multi = f"Pair [{start}] and [{start + 1}] both appear."
        return "\n".join(f"- {s}" for s in uniques + dups + [multi])

    llm = ScriptedLlm([batch(0), batch(100), batch(200)])
    cases, logbook = generate_suite(units_spec, 21, llm)
    assert len(cases) == 21
    kept_pct, _ = generation_stats(logbook)
    assert kept_pct == 0.7
    rejected = logbook.rejected_totals()
    assert rejected == {"duplicate": 6, "multi_value": 3}
    assert logbook.emitted == logbook.kept + sum(rejected.values())
    for stats in logbook.batches:
        assert stats.emitted == stats.kept + sum(stats.rejected_by_reason.values())
