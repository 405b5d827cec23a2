"""Synthetic data: random constituency trees and a separable toy corpus.

The toy corpus stitches together copula clauses ("the food was great") whose
adjective determines each target's polarity, so a model that learns to read
the right clause can reach perfect accuracy. Gold scopes are the clause
spans; everything is generated from a seeded RNG and serializes bytewise
identically for identical arguments.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import AnnotatedSentence, ConstituencyTree, parse_ptb, _sentence_from_record

PHRASE_LABELS = ["S", "NP", "VP", "PP", "ADJP", "ADVP", "SBAR", "PRN"]
POS_LABELS = ["NN", "JJ", "VBD", "DT", "RB", "CC", "IN", ".", ","]
WORDS = ["alpha", "beta", "gamma", "delta", "echo", "fox", "golf",
         "hotel", "india", "(", ")", "kilo", "lima"]


def random_tree_text(rng: np.random.Generator, max_tokens: int = 10,
                     bare_word_prob: float = 0.15) -> str:
    """A random bracketed tree over nonsense words, in canonical form.

    Single-token spans usually become preterminals but occasionally attach
    as bare words, exercising both child kinds downstream.
    """
    n = int(rng.integers(1, max_tokens + 1))
    words = [WORDS[rng.integers(0, len(WORDS))] for _ in range(n)]

    def escape(word: str) -> str:
        return {"(": "-LRB-", ")": "-RRB-"}.get(word, word)

    def preterminal(i: int) -> str:
        label = POS_LABELS[rng.integers(0, len(POS_LABELS))]
        return f"({label} {escape(words[i])})"

    def build(lo: int, hi: int) -> str:
        if hi - lo == 1:
            return preterminal(lo)
        label = PHRASE_LABELS[rng.integers(0, len(PHRASE_LABELS))]
        k = int(rng.integers(2, min(4, hi - lo) + 1))
        cuts = sorted(rng.choice(np.arange(lo + 1, hi), size=k - 1, replace=False).tolist())
        bounds = [lo] + cuts + [hi]
        parts = []
        for a, b in zip(bounds[:-1], bounds[1:]):
            if b - a == 1 and rng.random() < bare_word_prob:
                parts.append(escape(words[a]))
            else:
                parts.append(build(a, b))
        return f"({label} {' '.join(parts)})"

    if n == 1:
        return preterminal(0)
    return build(0, n)


def random_tree(rng: np.random.Generator, max_tokens: int = 10) -> ConstituencyTree:
    return parse_ptb(random_tree_text(rng, max_tokens))


# ---------------------------------------------------------------------------
# toy corpus

NOUNS = ["food", "service", "staff", "menu", "pizza", "decor", "price",
         "waiter", "wine", "coffee", "dessert", "ambience", "soup", "salad"]
ADJECTIVES = {
    "positive": ["great", "lovely", "superb", "fantastic", "delicious",
                 "wonderful", "excellent", "amazing"],
    "negative": ["awful", "dreadful", "terrible", "bland", "horrible",
                 "disappointing", "stale", "rude"],
    "neutral": ["okay", "average", "ordinary", "acceptable", "standard",
                "unremarkable"],
}
VERBS = ["was", "seemed", "looked", "tasted"]
CONJUNCTIONS = ["but", "and", "while"]


def _pick(rng: np.random.Generator, items: list[str]) -> str:
    return items[rng.integers(0, len(items))]


def _make_clause(rng: np.random.Generator, noun: str, adjective: str, offset: int):
    """Tokens, bracketed fragment, dependency rows, and spans for one clause.

    Dependency rows are (dependent, head, relation) with the clause-internal
    head left as the adjective; the caller wires clause heads together.
    """
    verb = _pick(rng, VERBS)
    with_adverb = rng.random() < 0.3
    tokens = ["the", noun, verb] + (["really", adjective] if with_adverb else [adjective])
    adj_pos = offset + len(tokens) - 1
    noun_pos = offset + 1
    deps = [(offset, noun_pos, "det"), (noun_pos, adj_pos, "nsubj"),
            (offset + 2, adj_pos, "cop")]
    adjp = f"(ADJP (RB really) (JJ {adjective}))" if with_adverb else f"(ADJP (JJ {adjective}))"
    if with_adverb:
        deps.append((offset + 3, adj_pos, "advmod"))
    ptb = f"(S (NP (DT the) (NN {noun})) (VP (VBD {verb}) {adjp}))"
    return tokens, ptb, deps, noun_pos, adj_pos, (offset, offset + len(tokens))


def generate_toy_corpus(size: int, seed: int, min_targets: int = 2,
                        max_targets: int = 2) -> list[AnnotatedSentence]:
    """Sentences of 2+ clauses, one polarity-cued target per clause."""
    if not 1 <= min_targets <= max_targets:
        raise ValueError("need 1 <= min_targets <= max_targets")
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(size):
        k = int(rng.integers(min_targets, max_targets + 1))
        nouns = list(rng.choice(NOUNS, size=k, replace=False))
        if k == 2:
            polarities = ["positive", "negative"]
            rng.shuffle(polarities)
        else:
            # Mixed by construction: never all targets share a polarity.
            polarities = [_pick(rng, list(ADJECTIVES)) for _ in range(k)]
            if len(set(polarities)) == 1:
                flip = int(rng.integers(0, k))
                others = [p for p in ADJECTIVES if p != polarities[flip]]
                polarities[flip] = _pick(rng, others)

        tokens: list[str] = []
        clause_ptbs: list[str] = []
        dep_rows: list[tuple[int, int, str]] = []
        targets = []
        clause_heads: list[int] = []
        for c in range(k):
            adjective = _pick(rng, ADJECTIVES[polarities[c]])
            if c > 0:
                conj = _pick(rng, CONJUNCTIONS)
                conj_pos = len(tokens)
                tokens.append(conj)
                clause_ptbs.append(f"(CC {conj})")
            ctoks, ptb, deps, noun_pos, adj_pos, span = _make_clause(
                rng, nouns[c], adjective, len(tokens))
            tokens.extend(ctoks)
            clause_ptbs.append(ptb)
            dep_rows.extend(deps)
            if c > 0:
                dep_rows.append((conj_pos, adj_pos, "cc"))
                dep_rows.append((adj_pos, clause_heads[0], "conj"))
            clause_heads.append(adj_pos)
            targets.append({"noun_pos": noun_pos, "adj_pos": adj_pos,
                            "span": span, "polarity": polarities[c]})
        period_pos = len(tokens)
        tokens.append(".")
        dep_rows.append((period_pos, clause_heads[0], "punct"))
        dep_rows.append((clause_heads[0], -1, "root"))

        n = len(tokens)
        target_objs = []
        for t in targets:
            bio = ["O"] * n
            bio[t["span"][0]] = "B"
            for i in range(t["span"][0] + 1, t["span"][1]):
                bio[i] = "I"
            target_objs.append({
                "span": [t["noun_pos"], t["noun_pos"]],
                "polarity": t["polarity"],
                "scope_bio": bio,
                "opinion_spans": [[t["adj_pos"], t["adj_pos"]]],
            })
        conllu = "\n".join(
            f"{dep + 1}\t{tokens[dep]}\t_\t_\t_\t_\t{0 if head < 0 else head + 1}\t{rel}\t_\t_"
            for dep, head, rel in sorted(dep_rows))
        records.append({
            "tokens": tokens,
            "ptb": f"(S {' '.join(clause_ptbs)} (. .))",
            "conllu": conllu,
            "targets": target_objs,
        })
    # Round everything through the validating loader so the generator can
    # never emit a corpus the rest of the system would reject.
    return [_sentence_from_record(rec, i) for i, rec in enumerate(records)]


def write_toy_corpus(path: str | Path, size: int, seed: int,
                     min_targets: int = 2, max_targets: int = 2) -> None:
    from .corpus import sentence_to_record

    sentences = generate_toy_corpus(size, seed, min_targets, max_targets)
    records = [sentence_to_record(s) for s in sentences]
    Path(path).write_text(json.dumps(records, indent=1) + "\n", encoding="utf-8")
