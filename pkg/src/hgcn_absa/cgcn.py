"""Constituency branch: compose constituents, propagate, decode back to tokens.

Graph nodes are constituents (internal nodes above the POS level; the root
always counts). A constituent's initial representation averages its own
projected label embedding, the projected label embeddings of its child
constituents and preterminals, and the encoder rows of the words below
those children. Attention back to tokens is masked so a word can only
receive information from its ancestor constituents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import ConstituencyTree


class UnknownLabelError(KeyError):
    """A tree used a constituent label missing from the closed label set."""


@dataclass
class LabelTable:
    labels: list[str]
    index: dict[str, int]
    embeddings: Tensor  # (|labels|, d_c)
    projection: Tensor  # (d_c, hidden)

    def lookup(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise UnknownLabelError(f"constituent label {label!r} not in the corpus label set")


@dataclass
class GcnLayer:
    w: Tensor
    b: Tensor
    ln_gain: Tensor | None = None
    ln_bias: Tensor | None = None


@dataclass
class CgcnParams:
    label_table: LabelTable
    layers: list[GcnLayer]
    w_q: Tensor
    w_k: Tensor

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = [("cgcn.labels.emb", self.label_table.embeddings),
               ("cgcn.labels.proj", self.label_table.projection)]
        for i, layer in enumerate(self.layers):
            out += [(f"cgcn.layer{i}.w", layer.w), (f"cgcn.layer{i}.b", layer.b)]
            if layer.ln_gain is not None:
                out += [(f"cgcn.layer{i}.ln_gain", layer.ln_gain),
                        (f"cgcn.layer{i}.ln_bias", layer.ln_bias)]
        out += [("cgcn.w_q", self.w_q), ("cgcn.w_k", self.w_k)]
        return out


def init_cgcn(rng: np.random.Generator, labels: list[str], d_c: int, hidden: int,
              num_layers: int, layer_norm: bool = True,
              init_scale: float = 0.1) -> CgcnParams:
    table = LabelTable(
        labels=list(labels),
        index={lab: i for i, lab in enumerate(labels)},
        embeddings=Tensor(rng.uniform(-init_scale, init_scale, (len(labels), d_c)),
                          requires_grad=True),
        projection=Tensor(rng.uniform(-init_scale, init_scale, (d_c, hidden)),
                          requires_grad=True),
    )
    layers = []
    for _ in range(num_layers):
        layers.append(GcnLayer(
            w=Tensor(rng.uniform(-init_scale, init_scale, (hidden, hidden)),
                     requires_grad=True),
            b=Tensor(np.zeros(hidden), requires_grad=True),
            ln_gain=Tensor(np.ones(hidden), requires_grad=True) if layer_norm else None,
            ln_bias=Tensor(np.zeros(hidden), requires_grad=True) if layer_norm else None,
        ))
    w_q = Tensor(rng.uniform(-init_scale, init_scale, (hidden, hidden)), requires_grad=True)
    w_k = Tensor(rng.uniform(-init_scale, init_scale, (hidden, hidden)), requires_grad=True)
    return CgcnParams(label_table=table, layers=layers, w_q=w_q, w_k=w_k)


@dataclass
class ConstituentGraph:
    node_ids: list[int]            # tree node ids, one per graph node
    position: dict[int, int]       # tree node id -> graph index
    normalized_adjacency: np.ndarray  # (m, m) = D^-1 (A + I), constant
    descriptors: list[str]         # "NP[0:2]"-style names for inspection

    @property
    def size(self) -> int:
        return len(self.node_ids)


def build_constituent_graph(tree: ConstituencyTree) -> ConstituentGraph:
    ids = tree.constituent_ids()
    position = {nid: i for i, nid in enumerate(ids)}
    m = len(ids)
    adjacency = np.eye(m)
    for nid in ids:
        for child in tree.node(nid).children:
            j = position.get(child)
            if j is not None:
                adjacency[position[nid], j] = 1.0
                adjacency[j, position[nid]] = 1.0
    degrees = adjacency.sum(axis=1)
    descriptors = [f"{tree.node(nid).label}[{tree.node(nid).span[0]}:{tree.node(nid).span[1]}]"
                   for nid in ids]
    return ConstituentGraph(node_ids=ids, position=position,
                            normalized_adjacency=adjacency / degrees[:, None],
                            descriptors=descriptors)


def constituent_encode(tree: ConstituencyTree, graph: ConstituentGraph,
                       H: Tensor, table: LabelTable) -> Tensor:
    """Initial (m, hidden) constituent representations by term averaging."""
    projected = ad.matmul(table.embeddings, table.projection)  # (|labels|, hidden)

    def label_term(nid: int) -> Tensor:
        return ad.row(projected, table.lookup(tree.node(nid).label))

    reps = []
    for nid in graph.node_ids:
        terms = [label_term(nid)]
        for child in tree.node(nid).children:
            node = tree.node(child)
            if node.is_leaf:
                terms.append(ad.row(H, node.span[0]))
            elif tree.is_preterminal(child) and child not in graph.position:
                terms.append(label_term(child))
                for leaf in tree.node(child).children:
                    terms.append(ad.row(H, tree.node(leaf).span[0]))
            else:
                terms.append(label_term(child))
        stacked = ad.stack_rows(terms)
        reps.append(ad.rows_mean(stacked, list(range(len(terms)))))
    return ad.stack_rows(reps)


def gcn_propagate(x: Tensor, normalized_adjacency: Tensor | np.ndarray,
                  layers: list[GcnLayer], use_layer_norm: bool = True) -> Tensor:
    """Stacked degree-normalized propagation: relu(D^-1 A (xW + b)) per layer."""
    adj = normalized_adjacency if isinstance(normalized_adjacency, Tensor) \
        else Tensor(normalized_adjacency)
    h = x
    for layer in layers:
        y = ad.add(ad.matmul(h, layer.w), layer.b)
        h = ad.relu(ad.matmul(adj, y))
        if use_layer_norm and layer.ln_gain is not None:
            h = ad.layer_norm(h, layer.ln_gain, layer.ln_bias)
    return h


def ct_attention_mask(tree: ConstituencyTree, graph: ConstituentGraph, n: int) -> np.ndarray:
    """(n, m) boolean: word w may attend to constituent c iff w is below c."""
    mask = np.zeros((n, graph.size), dtype=bool)
    for j, nid in enumerate(graph.node_ids):
        lo, hi = tree.node(nid).span
        mask[lo:hi, j] = True
    if not mask.any(axis=1).all():
        raise ValueError("a word has no covering constituent")  # unreachable: root spans all
    return mask


def ct_attention(H: Tensor, keys: Tensor, values: Tensor, mask: np.ndarray,
                 w_q: Tensor, w_k: Tensor) -> tuple[Tensor, Tensor]:
    """Masked scaled dot-product readout; returns (per-token mix, attention)."""
    d = H.shape[-1]
    q = ad.matmul(H, w_q)
    k = ad.matmul(keys, w_k)
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d))
    attention = ad.masked_softmax(scores, mask)
    return ad.matmul(attention, values), attention
