"""Acceptance suite: one test per criterion, one printed pass line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The two training criteria dominate the runtime (several minutes).
"""

import json
import time
from itertools import product
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from hgcn_absa import autodiff as ad
from hgcn_absa.annotation.server import create_app
from hgcn_absa.autodiff import Tape, Tensor
from hgcn_absa.cgcn import (build_constituent_graph, constituent_encode,
                            ct_attention, ct_attention_mask, gcn_propagate,
                            init_cgcn)
from hgcn_absa.checkpoint import load_checkpoint, save_checkpoint
from hgcn_absa.cli import main as cli_main
from hgcn_absa.corpus import (ConlluParseError, load_dataset, parse_conllu,
                              parse_ptb, serialize_ptb)
from hgcn_absa.crf import TAGS, TAG_INDEX, crf_nll, enumerate_nll, init_crf, viterbi_decode
from hgcn_absa.dgcn import build_gated_adjacency, init_dgcn, relation_vocabulary
from hgcn_absa.gradcheck import grad_check
from hgcn_absa.model import ModelConfig, instance_losses, iter_instances, joint_loss
from hgcn_absa.scope import ExclusionPolicy, Lexicon, select_scope, to_bio
from hgcn_absa.toydata import generate_toy_corpus, random_tree
from hgcn_absa.training import evaluate, train

from conftest import build_params, small_config
from test_scope import brute_force_scope

DATA = Path(__file__).resolve().parents[1] / "data"


def report(criterion: int, detail: str) -> None:
    print(f"criterion {criterion}: PASS — {detail}")


def test_criterion_1_gradient_integrity(demo_corpus):
    """End-to-end joint-loss gradients over every parameter tensor.

    The architecture is exercised at reduced widths so central differences
    over all coordinates finish inside the two-minute budget; every
    parameter group (encoder, CGCN incl. W_q/W_k and label embeddings,
    DGCN incl. relation embeddings and gate, CRF, classifier) is covered.
    """
    start = time.time()
    config = small_config()
    params = build_params(demo_corpus, config, seed=3)
    jitter = np.random.default_rng(17)
    for _, t in params.trainable():
        t.data += jitter.uniform(0.02, 0.1, t.shape) * jitter.choice([-1.0, 1.0], t.shape)
    # Three 8-token instances: both targets of the two-clause review plus
    # the parenthetical sentence.
    instances = [(demo_corpus[0], 0), (demo_corpus[0], 1), (demo_corpus[2], 0)]
    assert all(6 <= len(s.tokens) <= 8 for s, _ in instances)

    def fn():
        return joint_loss(instances, params, config)

    covered = {name.split(".")[0] for name, _ in params.trainable()}
    assert covered == {"encoder", "cgcn", "dgcn", "crf", "classifier"}
    names = {name for name, _ in params.trainable()}
    assert {"cgcn.w_q", "cgcn.w_k", "cgcn.labels.emb",
            "dgcn.rel.emb", "dgcn.rel.w_gate"} <= names

    report_card = grad_check(fn, params.trainable(), step=1e-5, tolerance=1e-4)
    elapsed = time.time() - start
    assert report_card.passed, report_card.worst()
    assert elapsed < 120.0, f"gradient check took {elapsed:.0f}s"
    report(1, f"max relative error {report_card.max_relative_error:.2e} over "
              f"{len(report_card.per_param)} tensors in {elapsed:.0f}s")


def test_criterion_2_crf_correctness():
    rng = np.random.default_rng(23)
    checked = 0
    for _ in range(100):
        n = int(rng.integers(1, 6))
        params = init_crf(rng, input_dim=4, init_scale=1.0)
        emissions = rng.normal(size=(n, 3)) * 2.0
        gold = [TAGS[i] for i in rng.integers(0, 3, size=n)]
        if gold[0] == "I":
            gold[0] = "B"
        for t in range(1, n):
            if gold[t] == "I" and gold[t - 1] == "O":
                gold[t] = "B"
        nll = crf_nll(Tensor(emissions), gold, params).item()
        assert abs(nll - enumerate_nll(emissions, gold, params)) < 1e-10

        def path_score(seq):
            s = params.start.data[seq[0]] + params.end.data[seq[-1]]
            s += sum(emissions[t][y] for t, y in enumerate(seq))
            s += sum(params.transitions.data[a][b] for a, b in zip(seq, seq[1:]))
            return s

        best = max(product(range(3), repeat=n), key=path_score)
        decoded, _ = viterbi_decode(emissions, params)
        assert decoded == [TAGS[i] for i in best]

        total = sum(np.exp(-crf_nll(Tensor(emissions), list(seq), params).item())
                    for seq in product(TAGS, repeat=n))
        assert abs(total - 1.0) < 1e-8
        checked += 1
    report(2, f"{checked} random instances: NLL within 1e-10 of enumeration, "
              "Viterbi exact, normalization within 1e-8")


def test_criterion_3_scope_oracle_equivalence(demo_corpus):
    rng = np.random.default_rng(29)
    policy = ExclusionPolicy()
    for _ in range(1000):
        tree = random_tree(rng, max_tokens=12)
        n = tree.node(tree.root).span[1]
        t0 = int(rng.integers(0, n))
        t1 = int(rng.integers(t0 + 1, n + 1))
        opinion = []
        for _ in range(int(rng.integers(0, 3))):
            o0 = int(rng.integers(0, n))
            opinion.append((o0, int(rng.integers(o0 + 1, n + 1))))
        got = select_scope(tree, (t0, t1), opinion, policy)
        assert got.constituent_id == brute_force_scope(tree, (t0, t1), opinion, policy)

    sentence = demo_corpus[0]  # Great food but the service was dreadful !
    scope = select_scope(sentence.tree, (1, 2), [(0, 1)])
    assert [sentence.tokens[i] for i in range(*scope.span)] == ["Great", "food"]
    assert to_bio(scope, 8) == ["B", "I", "O", "O", "O", "O", "O", "O"]
    report(3, "1000 random trees match brute force; worked example yields "
              "'Great food' with BIO B I O O O O O O")


def test_criterion_4_mask_exactness():
    rng = np.random.default_rng(31)
    rows = 0
    for _ in range(200):
        tree = random_tree(rng, max_tokens=10)
        n = tree.node(tree.root).span[1]
        graph = build_constituent_graph(tree)
        labels = list({node.label for node in tree.nodes if not node.is_leaf})
        params = init_cgcn(rng, labels, d_c=3, hidden=6, num_layers=1)
        H = Tensor(rng.normal(size=(n, 6)))
        mask = ct_attention_mask(tree, graph, n)
        keys = constituent_encode(tree, graph, H, params.label_table)
        values = gcn_propagate(keys, graph.normalized_adjacency, params.layers)
        _, attention = ct_attention(H, keys, values, mask, params.w_q, params.w_k)
        assert np.all(attention.data[~mask] == 0.0)
        assert np.allclose(attention.data.sum(axis=1), 1.0, atol=1e-12)
        rows += n
    report(4, f"200 random trees ({rows} rows): non-descendant entries exactly "
              "zero, rows sum to 1 within 1e-12")


def test_criterion_5_gate_behavior():
    deps = parse_conllu("1 a _ _ _ _ 2 amod\n2 b _ _ _ _ 0 root")
    vocab = relation_vocabulary(["amod"])
    from hgcn_absa.dgcn import RelationTable

    table = RelationTable(relations=vocab, index={r: i for i, r in enumerate(vocab)},
                          embeddings=Tensor(np.zeros((len(vocab), 3))),
                          w_gate=Tensor(np.zeros((3, 1))),
                          b_gate=Tensor(np.zeros(1)))
    adjacency = build_gated_adjacency(deps, 2, table)
    present = adjacency.matrix.data != 0.0
    assert np.all(adjacency.matrix.data[present] == 0.5)
    assert adjacency.matrix.data[~present].size == 0  # 2 tokens: all 4 entries present

    chain = parse_conllu("1 a _ _ _ _ 3 det\n2 b _ _ _ _ 3 amod\n3 c _ _ _ _ 0 root")
    table3 = RelationTable(relations=vocab, index={r: i for i, r in enumerate(vocab)},
                           embeddings=Tensor(np.zeros((len(vocab), 3))),
                           w_gate=Tensor(np.zeros((3, 1))),
                           b_gate=Tensor(np.zeros(1)))
    adj3 = build_gated_adjacency(chain, 3, table3)
    assert adj3.matrix.data[0, 1] == 0.0 and adj3.matrix.data[1, 0] == 0.0

    # Gradients flow into the relation embeddings on a dependency-sensitive
    # instance; L2 is off so the only path into E_rel is through the gates.
    corpus = generate_toy_corpus(1, seed=33)
    config = small_config(l2_weight=0.0)
    params = build_params(corpus, config, seed=7)
    with Tape() as tape:
        tape.backward(joint_loss([(corpus[0], 0)], params, config))
    grad = params.dgcn.relation_table.embeddings.grad
    assert grad is not None and float(np.abs(grad).max()) > 0.0
    report(5, "zero-parameter gates are exactly 0.5, absent entries exactly 0, "
              f"max |dL/dE_rel| = {float(np.abs(grad).max()):.2e}")


def test_criterion_6_toy_end_to_end(tmp_path):
    start = time.time()
    corpus_path = tmp_path / "toy50.json"
    assert cli_main(["gen-toy", "--out", str(corpus_path), "--size", "50",
                     "--seed", "7"]) == 0
    again = tmp_path / "toy50-again.json"
    assert cli_main(["gen-toy", "--out", str(again), "--size", "50",
                     "--seed", "7"]) == 0
    assert corpus_path.read_bytes() == again.read_bytes()

    corpus = load_dataset(corpus_path)
    assert len(corpus) == 50
    assert all(len(s.targets) == 2 and
               {t.polarity for t in s.targets} == {"positive", "negative"}
               for s in corpus)

    config = ModelConfig(epochs=60, seed=1)  # stock hyperparameters, <=100 epochs
    assert (config.learning_rate, config.batch_size) == (0.01, 32)
    assert (config.scope_loss_weight, config.l2_weight) == (3e-2, 1e-4)
    result = train(corpus, config)
    metrics = evaluate(corpus, result.params, config)
    elapsed = time.time() - start
    assert metrics["accuracy"] == 1.0, metrics["accuracy"]
    assert metrics["scope"]["f1"] >= 0.95, metrics["scope"]
    assert elapsed < 600.0, f"end-to-end run took {elapsed:.0f}s"

    epoch1 = [train(corpus, ModelConfig(epochs=1, seed=1)).history[0].loss
              for _ in range(2)]
    assert epoch1[0] == epoch1[1]  # bitwise reproducible
    report(6, f"accuracy 1.00, scope F1 {metrics['scope']['f1']:.2f} after "
              f"{config.epochs} epochs in {elapsed:.0f}s; epoch-1 loss "
              f"bitwise-reproducible ({epoch1[0]!r})")


def test_criterion_7_multi_target_discrimination():
    corpus = generate_toy_corpus(24, seed=11, min_targets=2, max_targets=4)
    buckets = {len(s.targets) for s in corpus}
    assert buckets == {2, 3, 4}
    assert all(len({t.polarity for t in s.targets}) > 1 for s in corpus)
    config = ModelConfig(epochs=70, seed=1)
    result = train(corpus, config)
    metrics = evaluate(corpus, result.params, config)
    for count, stats in metrics["by_target_count"].items():
        assert stats["accuracy"] >= 0.95, (count, stats)
    report(7, "per-bucket accuracy " + ", ".join(
        f"{k}:{v['accuracy']:.2f}" for k, v in metrics["by_target_count"].items()))


def test_criterion_8_ablation_wiring():
    corpus = generate_toy_corpus(6, seed=13)
    # Scope loss off: CRF transition gradients must stay exactly zero. The
    # L2 term is disabled too, since it feeds every trainable tensor.
    config = small_config(epochs=2, scope_loss_weight=0.0, l2_weight=0.0)
    flags = []

    def watch(step, params):
        grad = params.crf.transitions.grad
        flags.append(grad is None or not np.any(grad))

    train(corpus, config, after_batch=watch)
    assert flags and all(flags)

    widths = {}
    for name, branch_flags in (("cgcn", dict(use_cgcn=True, use_dgcn=False)),
                               ("dgcn", dict(use_cgcn=False, use_dgcn=True))):
        branch_config = small_config(epochs=2, **branch_flags)
        branch_result = train(corpus, branch_config)
        branch_metrics = evaluate(corpus, branch_result.params, branch_config)
        assert 0.0 <= branch_metrics["accuracy"] <= 1.0
        widths[name] = branch_config.syn_width
    full_width = small_config().syn_width
    assert widths["cgcn"] == widths["dgcn"] == full_width // 2
    report(8, "scope-loss-off run kept CRF transition gradients at zero over "
              f"{len(flags)} batches; single-branch configs train at width "
              f"{full_width // 2}")


def test_criterion_9_format_robustness(tmp_path, demo_corpus):
    rng = np.random.default_rng(37)
    from hgcn_absa.toydata import random_tree_text

    for _ in range(1000):
        text = random_tree_text(rng)
        tree = parse_ptb(text)
        again = parse_ptb(serialize_ptb(tree))
        assert serialize_ptb(again) == serialize_ptb(tree)
        assert again.leaf_words() == tree.leaf_words()

    malformed = [
        ("1 a _ _ _ _ 5 dep\n2 b _ _ _ _ 0 root", 1),        # head out of range
        ("1 a _ _ _ _ 0 root\n1 b _ _ _ _ 1 dep", 2),        # duplicate id
        ("1 a _ _ _ _ 1 dep\n2 b _ _ _ _ 0 root", 1),        # self-headed token
        ("1 a _ _ _ _ x root", 1),                           # non-integer head
        ("1 a _ _ _ _ 2 dep", 1),                            # head beyond block
    ]
    for block, line in malformed:
        with pytest.raises(ConlluParseError) as err:
            parse_conllu(block)
        assert err.value.line == line, block

    config = small_config()
    params = build_params(demo_corpus, config, seed=19)
    rng2 = np.random.default_rng(1)
    for _, t in params.named_tensors():
        t.data += rng2.normal(size=t.shape) * 0.01
    ckpt = tmp_path / "model.json"
    save_checkpoint(ckpt, params, config)
    loaded, _ = load_checkpoint(ckpt)
    for (name, a), (_, b) in zip(params.named_tensors(), loaded.named_tensors()):
        assert a.data.tobytes() == b.data.tobytes(), name
    report(9, "1000 tree round-trips, 5 line-accurate CoNLL-U rejections, "
              "bit-exact checkpoint round-trip")


def test_criterion_10_annotation_loop(tmp_path):
    corpus = load_dataset(DATA / "demo.json")
    for sentence in corpus:
        for target in sentence.targets:
            target.scope_bio = None
            target.scope_provenance = None
    app = create_app(sentences=corpus, store_dir=tmp_path / "store",
                     lexicon=Lexicon.from_file(DATA / "lexicon.txt"))
    client = TestClient(app)

    proposal = client.post("/api/docs/0/targets/0/pre-annotate").json()
    assert proposal["bio"] == ["B", "I", "O", "O", "O", "O", "O", "O"]

    # A human grows the right boundary by one token, exactly what the UI's
    # save action POSTs.
    adjusted = ["B", "I", "I", "O", "O", "O", "O", "O"]
    doc = client.get("/api/docs/0").json()
    version = doc["targets"][0]["record"]["version"]
    saved = client.post("/api/docs/0/targets/0/scope", json={"bio": adjusted},
                        headers={"If-Match": str(version)})
    assert saved.status_code == 200
    assert saved.json()["provenance"] == "human"

    exported = client.get("/api/export").json()
    export_path = tmp_path / "export.json"
    export_path.write_text(json.dumps(exported))
    reloaded = load_dataset(export_path)  # zero validation errors
    assert reloaded[0].targets[0].scope_bio == adjusted

    stats = client.get("/api/stats").json()
    assert stats["total"] == 4 and stats["human"] == 1
    assert stats["adjustment_ratio"] == 1 / 4
    report(10, "pre-annotate -> boundary edit -> save -> export reloads "
               f"cleanly; adjustment_ratio = {stats['adjustment_ratio']}")
