"""Minimal-constituent scope selection and rule-based pre-annotation.

A scope is the smallest well-formed constituent whose leaves contain a
target and its opinion words. Selection minimizes an effective leaf count
that skips extraneous material (punctuation, parentheticals) and breaks
ties toward the tightest, deepest, leftmost constituent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import AnnotatedSentence, ConstituencyTree, TargetInstance

# Punctuation POS tags plus the parenthetical phrase label.
DEFAULT_EXCLUDED_LABELS = frozenset({".", ",", ":", "''", "``", "-LRB-", "-RRB-", "PRN"})

# Labels treated as clause boundaries by the clause-restricted hit strategy.
CLAUSE_LABELS = frozenset({"S", "SBAR", "SINV", "SQ"})


@dataclass(frozen=True)
class ExclusionPolicy:
    """Which node labels hide their leaves from the effective count."""

    excluded_labels: frozenset[str] = DEFAULT_EXCLUDED_LABELS

    def excludes(self, label: str) -> bool:
        return label in self.excluded_labels


@dataclass(frozen=True)
class ScopeSpan:
    start: int            # token span [start, stop)
    stop: int
    constituent_id: int
    effective_leaves: int

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.stop)


def _contains(outer: tuple[int, int], inner: tuple[int, int]) -> bool:
    return outer[0] <= inner[0] and inner[1] <= outer[1]


def _check_span(span: tuple[int, int], n: int, what: str) -> None:
    if not (0 <= span[0] < span[1] <= n):
        raise ValueError(f"{what} span {span} outside sentence of {n} tokens")


def candidate_set(tree: ConstituencyTree, target: tuple[int, int],
                  opinion: list[tuple[int, int]] | None = None) -> list[int]:
    """Constituents whose leaves contain the target and every opinion span.

    Spans are half-open. The result is the ancestor chain of the lowest
    covering constituent, ordered bottom-up; the root always qualifies.
    """
    n = tree.node(tree.root).span[1]
    _check_span(target, n, "target")
    lo, hi = target
    for sp in opinion or []:
        _check_span(sp, n, "opinion")
        lo, hi = min(lo, sp[0]), max(hi, sp[1])
    constituents = set(tree.constituent_ids())
    # Walk up from any leaf in the covered region; node spans that contain
    # a common region are nested, so candidates form this ancestor chain.
    leaf = next(node.node_id for node in tree.nodes
                if node.is_leaf and node.span[0] == lo)
    return [nid for nid in tree.ancestors(leaf)
            if nid in constituents and _contains(tree.node(nid).span, (lo, hi))]


def effective_leaf_count(tree: ConstituencyTree, node_id: int,
                         policy: ExclusionPolicy | None = None) -> int:
    """Leaves under a node whose path from the node carries no excluded label."""
    policy = policy or ExclusionPolicy()

    def count(nid: int) -> int:
        node = tree.node(nid)
        if node.is_leaf:
            return 1
        if policy.excludes(node.label):
            return 0
        return sum(count(c) for c in node.children)

    return count(node_id)


def select_scope(tree: ConstituencyTree, target: tuple[int, int],
                 opinion: list[tuple[int, int]] | None = None,
                 policy: ExclusionPolicy | None = None) -> ScopeSpan:
    """Pick the candidate constituent with the fewest effective leaves.

    Ties break toward the smallest raw span, then the deepest node, then
    the leftmost span.
    """
    policy = policy or ExclusionPolicy()
    best: tuple | None = None
    best_id = -1
    for nid in candidate_set(tree, target, opinion):
        node = tree.node(nid)
        key = (effective_leaf_count(tree, nid, policy),
               node.span[1] - node.span[0],
               -tree.depth(nid),
               node.span[0])
        if best is None or key < best:
            best = key
            best_id = nid
    assert best is not None  # root always qualifies
    node = tree.node(best_id)
    return ScopeSpan(start=node.span[0], stop=node.span[1],
                     constituent_id=best_id, effective_leaves=best[0])


def to_bio(scope: ScopeSpan, n: int) -> list[str]:
    """B at the scope start, I through the rest of it, O elsewhere."""
    if not (0 <= scope.start < scope.stop <= n):
        raise ValueError(f"scope span [{scope.start}, {scope.stop}) outside 0..{n}")
    tags = ["O"] * n
    tags[scope.start] = "B"
    for i in range(scope.start + 1, scope.stop):
        tags[i] = "I"
    return tags


def bio_to_spans(bio: list[str]) -> list[tuple[int, int]]:
    """Half-open spans of the B/I runs in a tag sequence.

    Lenient on predicted sequences: an I with no open span starts one.
    """
    spans: list[tuple[int, int]] = []
    start: int | None = None
    for i, tag in enumerate(bio):
        if tag == "B":
            if start is not None:
                spans.append((start, i))
            start = i
        elif tag == "I":
            if start is None:
                start = i
        else:
            if start is not None:
                spans.append((start, i))
                start = None
    if start is not None:
        spans.append((start, len(bio)))
    return spans


# ---------------------------------------------------------------------------
# rule-based pre-annotation


@dataclass
class Lexicon:
    """Opinion-word list; single lowercase token per entry."""

    words: frozenset[str]

    @classmethod
    def from_file(cls, path) -> "Lexicon":
        entries = set()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                word = line.strip().lower()
                if word and not word.startswith("#"):
                    entries.add(word)
        return cls(words=frozenset(entries))

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.words


@dataclass
class PreAnnotation:
    bio: list[str]
    provenance: str                     # "auto" or "auto-weak"
    scope: ScopeSpan
    opinion_spans: list[tuple[int, int]] = field(default_factory=list)


def _lexicon_hits(tokens: list[str], lexicon: Lexicon,
                  target: tuple[int, int]) -> list[int]:
    """Positions of lexicon words outside the (half-open) target span."""
    return [i for i, tok in enumerate(tokens)
            if tok in lexicon and not target[0] <= i < target[1]]


def _minimal_clause(tree: ConstituencyTree, target: tuple[int, int]) -> tuple[int, int]:
    for nid in candidate_set(tree, target):
        if tree.node(nid).label in CLAUSE_LABELS:
            return tree.node(nid).span
    return tree.node(tree.root).span


def pre_annotate(sentence: AnnotatedSentence, target: TargetInstance,
                 lexicon: Lexicon, policy: ExclusionPolicy | None = None,
                 strategy: str = "nearest") -> PreAnnotation:
    """Propose a scope for one target from lexicon hits.

    strategy="nearest" keeps the single hit closest to the target (leftmost
    on ties); strategy="clause" keeps every hit inside the target's minimal
    clause. With no hits the proposal falls back to the smallest constituent
    over the target alone and is flagged "auto-weak".
    """
    if strategy not in ("nearest", "clause"):
        raise ValueError(f"unknown strategy {strategy!r}")
    n = len(sentence.tokens)
    tspan = target.token_range
    hits = _lexicon_hits(sentence.tokens, lexicon, tspan)
    if strategy == "clause" and hits:
        lo, hi = _minimal_clause(sentence.tree, tspan)
        clause_hits = [h for h in hits if lo <= h < hi]
        hits = clause_hits or hits

    if not hits:
        scope = select_scope(sentence.tree, tspan, [], policy)
        return PreAnnotation(bio=to_bio(scope, n), provenance="auto-weak", scope=scope)

    if strategy == "nearest":
        def distance(pos: int) -> int:
            if pos < tspan[0]:
                return tspan[0] - pos
            return pos - (tspan[1] - 1)

        best = min(hits, key=lambda p: (distance(p), p))
        chosen = [best]
    else:
        chosen = hits
    opinion = [(h, h + 1) for h in chosen]
    scope = select_scope(sentence.tree, tspan, opinion, policy)
    return PreAnnotation(bio=to_bio(scope, n), provenance="auto",
                         scope=scope, opinion_spans=opinion)


def annotate_corpus(sentences: list[AnnotatedSentence], lexicon: Lexicon,
                    policy: ExclusionPolicy | None = None,
                    strategy: str = "nearest") -> list[AnnotatedSentence]:
    """Fill scope_bio and provenance on every target, in place."""
    for sentence in sentences:
        for target in sentence.targets:
            proposal = pre_annotate(sentence, target, lexicon, policy, strategy)
            target.scope_bio = proposal.bio
            target.scope_provenance = proposal.provenance
    return sentences
