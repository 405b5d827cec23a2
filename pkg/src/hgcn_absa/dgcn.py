"""Dependency branch: relation-gated adjacency and degree-normalized propagation.

Each dependency edge contributes two directed entries (head->dependent with
its relation label, dependent->head with the "inv:" variant) and every token
carries a "self" loop. An entry's value is a sigmoid gate computed from the
relation embedding, so absent entries are exactly zero and present ones lie
strictly inside (0, 1). Normalization counts structural edges, not gate
values, keeping it independent of the learned gates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cgcn import GcnLayer
from .corpus import ROOT, DependencyGraph

SELF_RELATION = "self"
UNKNOWN_RELATION = "<unk>"


def relation_vocabulary(relations: list[str]) -> list[str]:
    """Corpus relations plus self, unknown, and inverse variants."""
    out = [SELF_RELATION, UNKNOWN_RELATION, f"inv:{UNKNOWN_RELATION}"]
    for rel in relations:
        if rel not in out:
            out.append(rel)
    for rel in relations:
        inv = f"inv:{rel}"
        if inv not in out:
            out.append(inv)
    return out


@dataclass
class RelationTable:
    relations: list[str]
    index: dict[str, int]
    embeddings: Tensor  # (|relations|, d_r)
    w_gate: Tensor      # (d_r, 1)
    b_gate: Tensor      # (1,)

    def lookup(self, relation: str) -> int:
        idx = self.index.get(relation)
        if idx is not None:
            return idx
        # Unseen relations at inference map to the reserved unknown rows.
        fallback = f"inv:{UNKNOWN_RELATION}" if relation.startswith("inv:") else UNKNOWN_RELATION
        return self.index[fallback]


@dataclass
class DgcnParams:
    relation_table: RelationTable
    layers: list[GcnLayer]

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = [("dgcn.rel.emb", self.relation_table.embeddings),
               ("dgcn.rel.w_gate", self.relation_table.w_gate),
               ("dgcn.rel.b_gate", self.relation_table.b_gate)]
        for i, layer in enumerate(self.layers):
            out += [(f"dgcn.layer{i}.w", layer.w), (f"dgcn.layer{i}.b", layer.b)]
        return out


def init_dgcn(rng: np.random.Generator, relations: list[str], d_r: int, hidden: int,
              num_layers: int, init_scale: float = 0.1) -> DgcnParams:
    vocab = relation_vocabulary(relations)
    table = RelationTable(
        relations=vocab,
        index={rel: i for i, rel in enumerate(vocab)},
        embeddings=Tensor(rng.uniform(-init_scale, init_scale, (len(vocab), d_r)),
                          requires_grad=True),
        w_gate=Tensor(rng.uniform(-init_scale, init_scale, (d_r, 1)), requires_grad=True),
        b_gate=Tensor(np.zeros(1), requires_grad=True),
    )
    layers = [GcnLayer(w=Tensor(rng.uniform(-init_scale, init_scale, (hidden, hidden)),
                                requires_grad=True),
                       b=Tensor(np.zeros(hidden), requires_grad=True))
              for _ in range(num_layers)]
    return DgcnParams(relation_table=table, layers=layers)


def structural_edges(deps: DependencyGraph, n: int) -> list[tuple[int, int, str]]:
    """Deterministic (row, col, relation) entries: self loops, then per-edge
    direct and inverse entries ordered by dependent index. If a direct entry
    and the inverse of another edge would collide (a 2-cycle in a malformed
    but accepted graph), the direct entry wins."""
    entries: list[tuple[int, int, str]] = [(i, i, SELF_RELATION) for i in range(n)]
    taken = {(i, i) for i in range(n)}
    for e in sorted(deps.edges, key=lambda e: e.dependent):
        if e.head == ROOT:
            continue
        for pos, rel in (((e.head, e.dependent), e.relation),
                         ((e.dependent, e.head), f"inv:{e.relation}")):
            if pos not in taken:
                taken.add(pos)
                entries.append((pos[0], pos[1], rel))
    return entries


@dataclass
class GatedAdjacency:
    matrix: Tensor          # (n, n); gated entries in (0, 1), absent exactly 0
    degrees: np.ndarray     # structural degree per row, self loop included


def build_gated_adjacency(deps: DependencyGraph, n: int,
                          table: RelationTable) -> GatedAdjacency:
    entries = structural_edges(deps, n)
    rows = [r for r, _, _ in entries]
    cols = [c for _, c, _ in entries]
    rel_ids = [table.lookup(rel) for _, _, rel in entries]
    rel_vecs = ad.gather_rows(table.embeddings, rel_ids)           # (E, d_r)
    gates = ad.sigmoid(ad.add(ad.matmul(rel_vecs, table.w_gate),
                              table.b_gate))                       # (E, 1)
    matrix = ad.scatter_matrix(ad.reshape(gates, (len(entries),)), rows, cols, (n, n))
    degrees = np.zeros(n)
    for r, _, _ in entries:
        degrees[r] += 1.0
    return GatedAdjacency(matrix=matrix, degrees=degrees)


def dgcn_propagate(H: Tensor, adjacency: GatedAdjacency,
                   layers: list[GcnLayer]) -> Tensor:
    inv_degree = Tensor(np.diag(1.0 / adjacency.degrees))
    h = H
    for layer in layers:
        y = ad.add(ad.matmul(h, layer.w), layer.b)
        h = ad.relu(ad.matmul(inv_degree, ad.matmul(adjacency.matrix, y)))
    return h
