"""Training loop (Adam over accumulated per-sentence tapes) and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .corpus import (AnnotatedSentence, EmbeddingTable, build_vocab,
                     collect_labels, collect_relations)
from .model import (Instance, ModelConfig, ModelParameters, forward_sentence,
                    instance_losses, init_parameters, iter_instances,
                    predict_instance)
from .scope import bio_to_spans

log = logging.getLogger(__name__)


class Adam:
    """Standard Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: list[tuple[str, Tensor]]) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name, p in params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float
    scope_f1: float
    dev_accuracy: float | None = None

    def to_dict(self) -> dict:
        out = {"epoch": self.epoch, "loss": self.loss,
               "accuracy": self.accuracy, "scope_f1": self.scope_f1}
        if self.dev_accuracy is not None:
            out["dev_accuracy"] = self.dev_accuracy
        return out


@dataclass
class TrainResult:
    params: ModelParameters
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None                     # by dev accuracy
    best_state: dict[str, np.ndarray] | None = None

    def restore_best(self) -> None:
        """Overwrite the live parameters with the best-dev-epoch snapshot."""
        if self.best_state is None:
            raise ValueError("no dev split was used; there is no best state")
        for name, tensor in self.params.named_tensors():
            tensor.data = self.best_state[name].copy()


def train(corpus: list[AnnotatedSentence], config: ModelConfig,
          embedding_table: EmbeddingTable | None = None,
          params: ModelParameters | None = None,
          dev_corpus: list[AnnotatedSentence] | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None,
          after_batch: Callable[[int, ModelParameters], None] | None = None) -> TrainResult:
    """Train on a corpus with seeded, bitwise-reproducible behavior.

    Per batch, each instance runs forward/backward on its own tape and the
    gradients accumulate on the shared parameters; the L2 penalty is applied
    once per batch on a separate tape. `after_batch` fires after the backward
    passes and before the optimizer step (grads are still populated).

    There is no early stopping: training always runs the configured number
    of epochs. When `dev_corpus` is given, the epoch with the best dev
    accuracy is remembered as a parameter snapshot on the result.
    """
    if not corpus:
        raise ValueError("train: empty corpus")
    rng = np.random.default_rng(config.seed)
    if params is None:
        vocab = build_vocab(corpus)
        params = init_parameters(config, vocab, collect_labels(corpus),
                                 collect_relations(corpus), embedding_table, rng=rng)
    trainable = params.trainable()
    optimizer = Adam(lr=config.learning_rate)
    instances: list[Instance] = list(iter_instances(corpus))
    result = TrainResult(params=params)
    best_dev = -1.0

    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(instances))
        epoch_loss = 0.0
        first_batch_loss: float | None = None
        last_batch_loss = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = [instances[i] for i in order[lo:lo + config.batch_size]]
            batch_loss = 0.0
            for sentence, k in batch:
                with Tape() as tape:
                    shared = forward_sentence(sentence, params, config,
                                              rng=rng, training=True)
                    pol, scope = instance_losses(sentence, k, params, config,
                                                 shared=shared, rng=rng, training=True)
                    loss = pol if scope is None else \
                        ad.add(pol, ad.scale(scope, config.scope_loss_weight))
                    tape.backward(loss)
                batch_loss += loss.item()
            if config.l2_weight > 0.0:
                with Tape() as tape:
                    penalty = ad.scale(ad.squared_l2([t for _, t in trainable]),
                                       config.l2_weight)
                    tape.backward(penalty)
                batch_loss += penalty.item()
            step += 1
            if after_batch is not None:
                after_batch(step, params)
            optimizer.step(trainable)
            params.zero_grads()
            epoch_loss += batch_loss
            if first_batch_loss is None:
                first_batch_loss = batch_loss
            last_batch_loss = batch_loss
        if epoch == 1 and first_batch_loss is not None \
                and last_batch_loss > first_batch_loss:
            log.warning("loss rose across the first epoch (%.4f -> %.4f)",
                        first_batch_loss, last_batch_loss)
        metrics = evaluate(corpus, params, config)
        record = EpochRecord(epoch=epoch, loss=epoch_loss,
                             accuracy=metrics["accuracy"],
                             scope_f1=metrics["scope"]["f1"])
        if dev_corpus is not None:
            record.dev_accuracy = evaluate(dev_corpus, params, config)["accuracy"]
            if record.dev_accuracy > best_dev:
                best_dev = record.dev_accuracy
                result.best_epoch = epoch
                result.best_state = {name: t.data.copy()
                                     for name, t in params.named_tensors()}
        result.history.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return result


def span_prf(pred_spans: list[list[tuple[int, int]]],
             gold_spans: list[list[tuple[int, int]]]) -> dict:
    """Micro precision/recall/F1 on exact span matches."""
    tp = fp = fn = 0
    for pred, gold in zip(pred_spans, gold_spans):
        gold_left = list(gold)
        for span in pred:
            if span in gold_left:
                gold_left.remove(span)
                tp += 1
            else:
                fp += 1
        fn += len(gold_left)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1,
            "matched": tp, "predicted": tp + fp, "gold": tp + fn}


def evaluate(corpus: list[AnnotatedSentence], params: ModelParameters,
             config: ModelConfig) -> dict:
    """Polarity accuracy (overall and by target count) plus scope span F1."""
    correct = total = 0
    buckets: dict[int, list[int]] = {}
    pred_spans: list[list[tuple[int, int]]] = []
    gold_spans: list[list[tuple[int, int]]] = []
    for sentence in corpus:
        shared = forward_sentence(sentence, params, config)
        bucket = buckets.setdefault(len(sentence.targets), [0, 0])
        for k, target in enumerate(sentence.targets):
            prediction = predict_instance(sentence, k, params, config, shared=shared)
            hit = int(prediction.polarity == target.polarity)
            correct += hit
            total += 1
            bucket[0] += hit
            bucket[1] += 1
            if target.scope_bio is not None:
                pred_spans.append(bio_to_spans(prediction.bio))
                gold_spans.append(bio_to_spans(target.scope_bio))
    by_count = {
        str(k): {"correct": c, "total": t, "accuracy": c / t}
        for k, (c, t) in sorted(buckets.items())
    }
    return {
        "accuracy": correct / total if total else 0.0,
        "correct": correct,
        "total": total,
        "by_target_count": by_count,
        "scope": span_prf(pred_spans, gold_spans),
    }
