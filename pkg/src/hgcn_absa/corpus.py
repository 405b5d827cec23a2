"""Readers and validators for all external data.

Covers bracketed constituency trees, CoNLL-U dependency blocks, the JSON
dataset format, plain-text embedding tables, and vocabulary construction.
Malformed input is rejected with a located error, never repaired.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

POLARITIES = ("positive", "neutral", "negative")
ROOT = -1  # head index of the root token


class PtbParseError(ValueError):
    """Bracketed-tree syntax error; carries the character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at character {offset})")
        self.offset = offset


class ConlluParseError(ValueError):
    """CoNLL-U block error; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DatasetError(ValueError):
    """Dataset validation failure naming the record and field."""

    def __init__(self, record: int, field_name: str, message: str):
        super().__init__(f"record {record}, field '{field_name}': {message}")
        self.record = record
        self.field_name = field_name


# ---------------------------------------------------------------------------
# constituency trees


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    label: str                 # constituent/POS label, or the word itself for leaves
    children: tuple[int, ...]  # empty for leaves
    span: tuple[int, int]      # leaf-token span [start, end)

    @property
    def is_leaf(self) -> bool:
        return not self.children


class ConstituencyTree:
    """Immutable constituency tree with ids, labels, and leaf spans."""

    def __init__(self, nodes: list[TreeNode], root: int):
        self.nodes = nodes
        self.root = root
        self._parents: dict[int, int] = {}
        for node in nodes:
            for ch in node.children:
                self._parents[ch] = node.node_id

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def parent(self, node_id: int) -> int | None:
        return self._parents.get(node_id)

    def depth(self, node_id: int) -> int:
        d = 0
        while (p := self._parents.get(node_id)) is not None:
            node_id = p
            d += 1
        return d

    def is_preterminal(self, node_id: int) -> bool:
        node = self.nodes[node_id]
        return bool(node.children) and all(self.nodes[c].is_leaf for c in node.children)

    def leaves(self) -> list[TreeNode]:
        out: list[TreeNode] = []

        def walk(nid: int) -> None:
            node = self.nodes[nid]
            if node.is_leaf:
                out.append(node)
            else:
                for c in node.children:
                    walk(c)

        walk(self.root)
        return out

    def leaf_words(self) -> list[str]:
        return [leaf.label for leaf in self.leaves()]

    def constituent_ids(self) -> list[int]:
        """Internal nodes above the POS level; the root always counts."""
        out = []
        for node in self.nodes:
            if node.is_leaf:
                continue
            if node.node_id == self.root or not self.is_preterminal(node.node_id):
                out.append(node.node_id)
        return out

    def internal_ids(self) -> list[int]:
        return [n.node_id for n in self.nodes if not n.is_leaf]

    def ancestors(self, node_id: int) -> list[int]:
        """Chain from node_id up to the root, inclusive of node_id."""
        chain = [node_id]
        while (p := self._parents.get(node_id)) is not None:
            chain.append(p)
            node_id = p
        return chain


_WORD_ESCAPES = {"-LRB-": "(", "-RRB-": ")"}
_WORD_UNESCAPES = {"(": "-LRB-", ")": "-RRB-"}


def parse_ptb(text: str) -> ConstituencyTree:
    """Parse one Penn-Treebank-style bracketed tree.

    Leaf tokens -LRB-/-RRB- are decoded to parentheses; labels are kept
    verbatim. Raises PtbParseError with a character offset on bad syntax.
    """
    tokens: list[tuple[str, int]] = []  # (token, offset)
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    if not tokens:
        raise PtbParseError("empty input", 0)

    nodes: list[TreeNode] = []
    next_leaf = [0]
    pos = [0]

    def need(kind: str) -> tuple[str, int]:
        if pos[0] >= len(tokens):
            raise PtbParseError(f"unexpected end of input, expected {kind}", len(text))
        tok = tokens[pos[0]]
        pos[0] += 1
        return tok

    def parse_node() -> int:
        tok, off = need("'('")
        if tok != "(":
            raise PtbParseError(f"expected '(' but found {tok!r}", off)
        label, off = need("a node label")
        if label in "()":
            raise PtbParseError("missing node label", off)
        children: list[int] = []
        while True:
            if pos[0] >= len(tokens):
                raise PtbParseError("unbalanced parentheses: missing ')'", len(text))
            tok, off = tokens[pos[0]]
            if tok == ")":
                pos[0] += 1
                break
            if tok == "(":
                children.append(parse_node())
            else:
                pos[0] += 1
                word = _WORD_ESCAPES.get(tok, tok)
                leaf_idx = next_leaf[0]
                next_leaf[0] += 1
                nodes.append(TreeNode(len(nodes), word, (), (leaf_idx, leaf_idx + 1)))
                children.append(nodes[-1].node_id)
        if not children:
            raise PtbParseError(f"node '{label}' has no children", off)
        span = (nodes[children[0]].span[0], nodes[children[-1]].span[1])
        nodes.append(TreeNode(len(nodes), label, tuple(children), span))
        return nodes[-1].node_id

    root = parse_node()
    if pos[0] != len(tokens):
        raise PtbParseError("trailing content after tree", tokens[pos[0]][1])
    return ConstituencyTree(nodes, root)


def serialize_ptb(tree: ConstituencyTree) -> str:
    def emit(nid: int) -> str:
        node = tree.node(nid)
        if node.is_leaf:
            return _WORD_UNESCAPES.get(node.label, node.label)
        inner = " ".join(emit(c) for c in node.children)
        return f"({node.label} {inner})"

    return emit(tree.root)


# ---------------------------------------------------------------------------
# dependency graphs


@dataclass(frozen=True)
class DependencyEdge:
    head: int       # 0-based token index, or ROOT
    dependent: int  # 0-based token index
    relation: str


class DependencyGraph:
    """One labeled head per token, exactly one token headed by ROOT."""

    def __init__(self, edges: list[DependencyEdge]):
        self.edges = edges

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def root_token(self) -> int:
        for e in self.edges:
            if e.head == ROOT:
                return e.dependent
        raise ConlluParseError("graph has no root edge")


def parse_conllu(block: str) -> DependencyGraph:
    """Parse one CoNLL-U sentence block into a DependencyGraph.

    Accepts 8+ column rows (HEAD and DEPREL at the standard positions);
    multi-word tokens, empty nodes, and comments are skipped. Errors carry
    the 1-based line number within the block.
    """
    rows: list[tuple[int, int, str, int]] = []  # (id, head, deprel, line_no)
    for line_no, raw in enumerate(block.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t") if "\t" in line else line.split()
        if len(cols) < 8:
            raise ConlluParseError(f"expected at least 8 columns, found {len(cols)}", line_no)
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:
            continue  # multi-word token / empty node
        try:
            idx = int(tok_id)
        except ValueError:
            raise ConlluParseError(f"token id {tok_id!r} is not an integer", line_no)
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(f"HEAD {cols[6]!r} is not an integer", line_no)
        rows.append((idx, head, cols[7], line_no))

    if not rows:
        raise ConlluParseError("block contains no token lines")

    n = len(rows)
    seen: set[int] = set()
    edges: list[DependencyEdge | None] = [None] * n
    root_count = 0
    for idx, head, deprel, line_no in rows:
        if idx in seen:
            raise ConlluParseError(f"duplicate token id {idx}", line_no)
        seen.add(idx)
        if not 1 <= idx <= n:
            raise ConlluParseError(f"token id {idx} outside 1..{n}", line_no)
        if not 0 <= head <= n:
            raise ConlluParseError(f"head {head} outside 0..{n}", line_no)
        if head == idx:
            raise ConlluParseError(f"token {idx} is its own head", line_no)
        if head == 0:
            root_count += 1
        edges[idx - 1] = DependencyEdge(ROOT if head == 0 else head - 1, idx - 1, deprel)
    if root_count == 0:
        raise ConlluParseError("no token is headed by ROOT")
    if root_count > 1:
        raise ConlluParseError(f"{root_count} tokens are headed by ROOT, expected 1")
    return DependencyGraph([e for e in edges if e is not None])


# ---------------------------------------------------------------------------
# dataset


@dataclass
class TargetInstance:
    """One target mention; `span` is inclusive on both ends, as in the JSON."""

    span: tuple[int, int]
    polarity: str
    scope_bio: list[str] | None = None
    opinion_spans: list[tuple[int, int]] | None = None
    scope_provenance: str | None = None

    @property
    def token_range(self) -> tuple[int, int]:
        """Half-open [start, stop) form of the target span."""
        return (self.span[0], self.span[1] + 1)


@dataclass
class AnnotatedSentence:
    tokens: list[str]
    tree: ConstituencyTree
    deps: DependencyGraph
    targets: list[TargetInstance]

    def __len__(self) -> int:
        return len(self.tokens)


def validate_bio(bio: list[str], n: int, target: tuple[int, int] | None = None) -> str | None:
    """Return a violation message for a BIO sequence, or None if valid.

    `target` is an inclusive token span that must be fully covered by B/I.
    """
    if len(bio) != n:
        return f"length {len(bio)} != token count {n}"
    prev = "O"
    for i, tag in enumerate(bio):
        if tag not in ("B", "I", "O"):
            return f"unknown tag {tag!r} at position {i}"
        if tag == "I" and prev == "O":
            return f"I without preceding B at position {i}"
        prev = tag
    if target is not None:
        for i in range(target[0], target[1] + 1):
            if bio[i] == "O":
                return f"target token {i} tagged O, must be inside the scope"
    return None


def _sentence_from_record(obj: dict, record: int) -> AnnotatedSentence:
    if not isinstance(obj, dict):
        raise DatasetError(record, "<record>", "expected a JSON object")
    tokens = obj.get("tokens")
    if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) for t in tokens):
        raise DatasetError(record, "tokens", "expected a nonempty list of strings")
    n = len(tokens)

    try:
        tree = parse_ptb(obj.get("ptb", ""))
    except PtbParseError as exc:
        raise DatasetError(record, "ptb", str(exc))
    if tree.leaf_words() != tokens:
        raise DatasetError(record, "ptb",
                           f"tree leaves {tree.leaf_words()} do not match tokens {tokens}")

    try:
        deps = parse_conllu(obj.get("conllu", ""))
    except ConlluParseError as exc:
        raise DatasetError(record, "conllu", str(exc))
    if len(deps) != n:
        raise DatasetError(record, "conllu",
                           f"{len(deps)} dependency edges for {n} tokens")

    raw_targets = obj.get("targets")
    if not isinstance(raw_targets, list) or not raw_targets:
        raise DatasetError(record, "targets", "expected a nonempty list")
    targets: list[TargetInstance] = []
    for k, t in enumerate(raw_targets):
        fld = f"targets[{k}]"
        span = t.get("span")
        if (not isinstance(span, list) or len(span) != 2
                or not all(isinstance(v, int) for v in span)):
            raise DatasetError(record, fld + ".span", "expected [i, j] token indices")
        i, j = span
        if not (0 <= i <= j < n):
            raise DatasetError(record, fld + ".span", f"[{i}, {j}] outside 0..{n - 1}")
        polarity = t.get("polarity")
        if polarity not in POLARITIES:
            raise DatasetError(record, fld + ".polarity",
                               f"{polarity!r} not one of {POLARITIES}")
        bio = t.get("scope_bio")
        if bio is not None:
            problem = validate_bio(bio, n, (i, j))
            if problem:
                raise DatasetError(record, fld + ".scope_bio", problem)
        spans = t.get("opinion_spans")
        opinion: list[tuple[int, int]] | None = None
        if spans is not None:
            opinion = []
            for s in spans:
                if (not isinstance(s, list) or len(s) != 2
                        or not (0 <= s[0] <= s[1] < n)):
                    raise DatasetError(record, fld + ".opinion_spans",
                                       f"bad span {s} for {n} tokens")
                opinion.append((s[0], s[1]))
        targets.append(TargetInstance(
            span=(i, j), polarity=polarity, scope_bio=list(bio) if bio else None,
            opinion_spans=opinion, scope_provenance=t.get("scope_provenance")))
    return AnnotatedSentence(tokens=list(tokens), tree=tree, deps=deps, targets=targets)


def load_dataset(path: str | Path) -> list[AnnotatedSentence]:
    """Load and fully validate a dataset file (JSON array or JSON lines)."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return []
    if text.lstrip().startswith("["):
        records = json.loads(text)
    else:
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    return [_sentence_from_record(obj, idx) for idx, obj in enumerate(records)]


def sentence_to_record(sentence: AnnotatedSentence) -> dict:
    """Inverse of `_sentence_from_record` for writing dataset files."""
    targets = []
    for t in sentence.targets:
        obj: dict = {"span": list(t.span), "polarity": t.polarity}
        if t.scope_bio is not None:
            obj["scope_bio"] = list(t.scope_bio)
        if t.opinion_spans is not None:
            obj["opinion_spans"] = [list(s) for s in t.opinion_spans]
        if t.scope_provenance is not None:
            obj["scope_provenance"] = t.scope_provenance
        targets.append(obj)
    return {
        "tokens": list(sentence.tokens),
        "ptb": serialize_ptb(sentence.tree),
        "conllu": serialize_conllu(sentence.deps, sentence.tokens),
        "targets": targets,
    }


def serialize_conllu(deps: DependencyGraph, tokens: list[str]) -> str:
    lines = []
    for e in sorted(deps.edges, key=lambda e: e.dependent):
        head = 0 if e.head == ROOT else e.head + 1
        lines.append("\t".join([str(e.dependent + 1), tokens[e.dependent],
                                "_", "_", "_", "_", str(head), e.relation, "_", "_"]))
    return "\n".join(lines)


def save_dataset(sentences: list[AnnotatedSentence], path: str | Path) -> None:
    records = [sentence_to_record(s) for s in sentences]
    Path(path).write_text(json.dumps(records, indent=1) + "\n", encoding="utf-8")


def corpus_stats(sentences: list[AnnotatedSentence]) -> dict:
    """Instance counts by polarity plus sentence/target totals."""
    by_polarity = {p: 0 for p in POLARITIES}
    with_scope = 0
    for s in sentences:
        for t in s.targets:
            by_polarity[t.polarity] += 1
            if t.scope_bio is not None:
                with_scope += 1
    total = sum(by_polarity.values())
    return {"sentences": len(sentences), "targets": total,
            "with_scope": with_scope, **by_polarity}


# ---------------------------------------------------------------------------
# vocabulary and embeddings

UNK = "<unk>"


class Vocabulary:
    """Lowercased token vocabulary; ids follow first-appearance order."""

    def __init__(self, words: list[str] | None = None):
        self.words: list[str] = [UNK]
        self.index: dict[str, int] = {UNK: 0}
        for w in words or []:
            self.add(w)

    def add(self, word: str) -> int:
        w = word.lower()
        if w not in self.index:
            self.index[w] = len(self.words)
            self.words.append(w)
        return self.index[w]

    def lookup(self, word: str) -> int:
        return self.index.get(word.lower(), 0)

    def __len__(self) -> int:
        return len(self.words)


def build_vocab(sentences: list[AnnotatedSentence]) -> Vocabulary:
    vocab = Vocabulary()
    for s in sentences:
        for tok in s.tokens:
            vocab.add(tok)
    return vocab


def collect_labels(sentences: list[AnnotatedSentence]) -> list[str]:
    """All internal-node labels (constituents and POS tags), first-seen order."""
    seen: dict[str, None] = {}
    for s in sentences:
        for node in s.tree.nodes:
            if not node.is_leaf:
                seen.setdefault(node.label, None)
    return list(seen)


def collect_relations(sentences: list[AnnotatedSentence]) -> list[str]:
    seen: dict[str, None] = {}
    for s in sentences:
        for e in s.deps.edges:
            seen.setdefault(e.relation, None)
    return list(seen)


@dataclass
class EmbeddingTable:
    vectors: np.ndarray            # (|V|, dim) aligned with the vocabulary
    dim: int
    missing: list[str] = field(default_factory=list)  # vocab words absent from the file


def load_embeddings(path: str | Path, vocab: Vocabulary,
                    unk_policy: str = "mean") -> EmbeddingTable:
    """Read whitespace-separated "word v1 .. vD" lines for a vocabulary.

    Words absent from the file get the mean of all loaded vectors (or zeros
    under unk_policy="zeros"); the unknown entry follows the same policy.
    """
    if unk_policy not in ("mean", "zeros"):
        raise ValueError(f"unknown unk_policy {unk_policy!r}")
    dim: int | None = None
    found: dict[int, np.ndarray] = {}
    total = np.zeros(0)
    count = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                total = np.zeros(dim)
            elif len(values) != dim:
                raise ValueError(f"{path}: line {line_no} has {len(values)} values, expected {dim}")
            vec = np.asarray([float(v) for v in values])
            total += vec
            count += 1
            idx = vocab.index.get(word.lower())
            if idx is not None and idx not in found:
                found[idx] = vec
    if dim is None:
        raise ValueError(f"{path}: no embedding rows found")
    fallback = (total / count) if (unk_policy == "mean" and count) else np.zeros(dim)
    table = np.tile(fallback, (len(vocab), 1))
    for idx, vec in found.items():
        table[idx] = vec
    missing = [w for w, i in vocab.index.items() if i not in found and w != UNK]
    return EmbeddingTable(vectors=table, dim=dim, missing=missing)
