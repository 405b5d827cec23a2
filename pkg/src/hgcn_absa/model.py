"""Model assembly: configuration, parameters, per-instance forward, joint loss.

Token representations from the BiLSTM feed both graph branches; their
outputs are concatenated per token into the syntactic matrix that drives
the CRF scope tagger (optionally with a binary target-indicator column)
and, mean-pooled over the target tokens, the three-way polarity head.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cgcn import (CgcnParams, build_constituent_graph, constituent_encode,
                   ct_attention, ct_attention_mask, gcn_propagate, init_cgcn)
from .corpus import (POLARITIES, AnnotatedSentence, EmbeddingTable, Vocabulary)
from .crf import CrfParams, crf_emissions, crf_nll, init_crf, viterbi_decode
from .dgcn import DgcnParams, build_gated_adjacency, dgcn_propagate, init_dgcn
from .encoder import EncoderParams, encode, init_encoder
from .scope import bio_to_spans

POLARITY_INDEX = {p: i for i, p in enumerate(POLARITIES)}


@dataclass
class ModelConfig:
    embedding_dim: int = 300
    hidden_dim: int = 100          # per BiLSTM direction
    label_dim: int = 100           # constituent label embeddings
    relation_dim: int = 30         # dependency relation embeddings
    cgcn_layers: int = 2
    dgcn_layers: int = 2
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 32
    scope_loss_weight: float = 3e-2   # couples the CRF loss into the joint loss
    l2_weight: float = 1e-4
    seed: int = 1
    hard_bio: bool = False
    target_indicator: bool = True
    dropout: float = 0.0
    use_cgcn: bool = True
    use_dgcn: bool = True
    train_embeddings: bool = False
    cgcn_layer_norm: bool = True
    unk_embedding: str = "mean"
    init_scale: float = 0.1

    def __post_init__(self):
        for name in ("embedding_dim", "hidden_dim", "label_dim", "relation_dim",
                     "cgcn_layers", "dgcn_layers", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"config.{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("config.learning_rate must be positive")
        if self.scope_loss_weight < 0 or self.l2_weight < 0:
            raise ValueError("loss weights must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("config.dropout must lie in [0, 1)")
        if not (self.use_cgcn or self.use_dgcn):
            raise ValueError("at least one of use_cgcn/use_dgcn must be on")

    @property
    def token_width(self) -> int:
        return 2 * self.hidden_dim

    @property
    def syn_width(self) -> int:
        return self.token_width * (int(self.use_cgcn) + int(self.use_dgcn))

    @property
    def crf_input_dim(self) -> int:
        return self.syn_width + (1 if self.target_indicator else 0)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ClassifierParams:
    w: Tensor  # (syn_width, 3)
    b: Tensor  # (3,)

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return [("classifier.w", self.w), ("classifier.b", self.b)]


@dataclass
class ModelParameters:
    vocab: Vocabulary
    embeddings: Tensor
    encoder: EncoderParams
    cgcn: CgcnParams | None
    dgcn: DgcnParams | None
    crf: CrfParams
    classifier: ClassifierParams
    train_embeddings: bool = False

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = [("embeddings", self.embeddings)]
        out += self.encoder.named_tensors()
        if self.cgcn is not None:
            out += self.cgcn.named_tensors()
        if self.dgcn is not None:
            out += self.dgcn.named_tensors()
        out += self.crf.named_tensors()
        out += self.classifier.named_tensors()
        return out

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(name, t) for name, t in self.named_tensors()
                if t.requires_grad]

    def zero_grads(self) -> None:
        for _, t in self.named_tensors():
            t.zero_grad()


def init_parameters(config: ModelConfig, vocab: Vocabulary, labels: list[str],
                    relations: list[str],
                    embedding_table: EmbeddingTable | None = None,
                    rng: np.random.Generator | None = None) -> ModelParameters:
    """Draw all weights (uniform in [-scale, scale], biases zero) in a fixed order."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if embedding_table is not None:
        if embedding_table.dim != config.embedding_dim:
            raise ValueError(f"embedding file is {embedding_table.dim}-d, "
                             f"config expects {config.embedding_dim}-d")
        emb_data = np.array(embedding_table.vectors, dtype=np.float64)
    else:
        emb_data = rng.uniform(-config.init_scale, config.init_scale,
                               (len(vocab), config.embedding_dim))
    embeddings = Tensor(emb_data, requires_grad=config.train_embeddings)
    encoder = init_encoder(rng, config.embedding_dim, config.hidden_dim,
                           config.init_scale)
    cgcn = init_cgcn(rng, labels, config.label_dim, config.token_width,
                     config.cgcn_layers, layer_norm=config.cgcn_layer_norm,
                     init_scale=config.init_scale) if config.use_cgcn else None
    dgcn = init_dgcn(rng, relations, config.relation_dim, config.token_width,
                     config.dgcn_layers, config.init_scale) if config.use_dgcn else None
    crf = init_crf(rng, config.crf_input_dim, hard_bio=config.hard_bio,
                   init_scale=config.init_scale)
    classifier = ClassifierParams(
        w=Tensor(rng.uniform(-config.init_scale, config.init_scale,
                             (config.syn_width, 3)), requires_grad=True),
        b=Tensor(np.zeros(3), requires_grad=True),
    )
    return ModelParameters(vocab=vocab, embeddings=embeddings, encoder=encoder,
                           cgcn=cgcn, dgcn=dgcn, crf=crf, classifier=classifier,
                           train_embeddings=config.train_embeddings)


@dataclass
class SentenceForward:
    """Target-independent work shared by all of a sentence's instances."""

    h_syn: Tensor                     # (n, syn_width)
    attention: Tensor | None          # (n, m) constituent-token weights
    constituents: list[str]           # descriptors aligned with attention columns


@dataclass
class InstanceForward:
    h_syn: Tensor
    crf_input: Tensor                 # (n, syn_width [+1])
    h_senti: Tensor                   # (syn_width,)
    logits: Tensor                    # (3,)
    probabilities: np.ndarray         # softmax of the logits


def forward_sentence(sentence: AnnotatedSentence, params: ModelParameters,
                     config: ModelConfig, rng: np.random.Generator | None = None,
                     training: bool = False) -> SentenceForward:
    token_ids = [params.vocab.lookup(tok) for tok in sentence.tokens]
    H = encode(token_ids, params.embeddings, params.encoder)
    if training and config.dropout > 0.0:
        if rng is None:
            raise ValueError("dropout requires an RNG during training")
        H = ad.dropout(H, config.dropout, rng)

    parts: list[Tensor] = []
    attention = None
    constituents: list[str] = []
    if config.use_cgcn:
        assert params.cgcn is not None
        graph = build_constituent_graph(sentence.tree)
        keys = constituent_encode(sentence.tree, graph, H, params.cgcn.label_table)
        values = gcn_propagate(keys, graph.normalized_adjacency, params.cgcn.layers,
                               use_layer_norm=config.cgcn_layer_norm)
        mask = ct_attention_mask(sentence.tree, graph, len(sentence.tokens))
        h_cons, attention = ct_attention(H, keys, values, mask,
                                         params.cgcn.w_q, params.cgcn.w_k)
        constituents = graph.descriptors
        parts.append(h_cons)
    if config.use_dgcn:
        assert params.dgcn is not None
        adjacency = build_gated_adjacency(sentence.deps, len(sentence.tokens),
                                          params.dgcn.relation_table)
        parts.append(dgcn_propagate(H, adjacency, params.dgcn.layers))

    h_syn = parts[0] if len(parts) == 1 else ad.concat_last(parts)
    if training and config.dropout > 0.0:
        h_syn = ad.dropout(h_syn, config.dropout, rng)
    return SentenceForward(h_syn=h_syn, attention=attention, constituents=constituents)


def forward_instance(sentence: AnnotatedSentence, target_index: int,
                     params: ModelParameters, config: ModelConfig,
                     shared: SentenceForward | None = None,
                     rng: np.random.Generator | None = None,
                     training: bool = False) -> InstanceForward:
    target = sentence.targets[target_index]
    lo, hi = target.token_range
    if hi <= lo:
        raise ValueError(f"empty target span {target.span}")
    if shared is None:
        shared = forward_sentence(sentence, params, config, rng=rng, training=training)
    h_syn = shared.h_syn

    crf_input = h_syn
    if config.target_indicator:
        indicator = np.zeros((len(sentence.tokens), 1))
        indicator[lo:hi, 0] = 1.0
        crf_input = ad.concat_last([h_syn, Tensor(indicator)])

    h_senti = ad.rows_mean(h_syn, list(range(lo, hi)))
    logits = ad.add(ad.matmul(h_senti, params.classifier.w), params.classifier.b)
    z = logits.data - logits.data.max()
    probabilities = np.exp(z) / np.exp(z).sum()
    return InstanceForward(h_syn=h_syn, crf_input=crf_input, h_senti=h_senti,
                           logits=logits, probabilities=probabilities)


def polarity_nll(logits: Tensor, polarity: str) -> Tensor:
    """Cross-entropy of the gold polarity under softmax(logits)."""
    gold = POLARITY_INDEX[polarity]
    log_z = ad.logsumexp(logits, axis=0)
    return ad.add(log_z, ad.scale(ad.tsum(ad.gather_rows(logits, [gold])), -1.0))


def instance_losses(sentence: AnnotatedSentence, target_index: int,
                    params: ModelParameters, config: ModelConfig,
                    shared: SentenceForward | None = None,
                    rng: np.random.Generator | None = None,
                    training: bool = False) -> tuple[Tensor, Tensor | None]:
    """(polarity loss, scope NLL or None when no gold scope is present)."""
    fwd = forward_instance(sentence, target_index, params, config,
                           shared=shared, rng=rng, training=training)
    target = sentence.targets[target_index]
    pol = polarity_nll(fwd.logits, target.polarity)
    scope = None
    if target.scope_bio is not None and config.scope_loss_weight > 0.0:
        emissions = crf_emissions(fwd.crf_input, params.crf)
        scope = crf_nll(emissions, target.scope_bio, params.crf)
    return pol, scope


Instance = tuple[AnnotatedSentence, int]


def iter_instances(corpus: list[AnnotatedSentence]) -> Iterator[Instance]:
    for sentence in corpus:
        for k in range(len(sentence.targets)):
            yield sentence, k


def joint_loss(instances: list[Instance], params: ModelParameters,
               config: ModelConfig) -> Tensor:
    """Summed polarity loss + weighted scope loss + L2 penalty, on one tape."""
    total: Tensor | None = None

    def accumulate(term: Tensor) -> None:
        nonlocal total
        total = term if total is None else ad.add(total, term)

    for sentence, k in instances:
        pol, scope = instance_losses(sentence, k, params, config)
        accumulate(pol)
        if scope is not None:
            accumulate(ad.scale(scope, config.scope_loss_weight))
    if total is None:
        raise ValueError("joint_loss: empty batch")
    if config.l2_weight > 0.0:
        penalty = ad.squared_l2([t for _, t in params.trainable()])
        accumulate(ad.scale(penalty, config.l2_weight))
    return total


@dataclass
class ScopePrediction:
    bio: list[str]
    span: tuple[int, int] | None      # first decoded span, half-open
    distribution: dict[str, float]
    polarity: str
    path_score: float = 0.0


def predict_instance(sentence: AnnotatedSentence, target_index: int,
                     params: ModelParameters, config: ModelConfig,
                     shared: SentenceForward | None = None) -> ScopePrediction:
    fwd = forward_instance(sentence, target_index, params, config, shared=shared)
    emissions = crf_emissions(fwd.crf_input, params.crf)
    bio, score = viterbi_decode(emissions.data, params.crf)
    spans = bio_to_spans(bio)
    distribution = {p: float(fwd.probabilities[i]) for i, p in enumerate(POLARITIES)}
    return ScopePrediction(
        bio=bio,
        span=spans[0] if spans else None,
        distribution=distribution,
        polarity=POLARITIES[int(np.argmax(fwd.probabilities))],
        path_score=score,
    )
