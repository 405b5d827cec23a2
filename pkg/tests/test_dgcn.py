import numpy as np

from hgcn_absa import autodiff as ad
from hgcn_absa.autodiff import Tape, Tensor
from hgcn_absa.cgcn import GcnLayer
from hgcn_absa.corpus import parse_conllu
from hgcn_absa.dgcn import (
    RelationTable, build_gated_adjacency, dgcn_propagate, init_dgcn,
    relation_vocabulary, structural_edges,
)
from hgcn_absa.gradcheck import grad_check

TWO_TOKENS = "1 a _ _ _ _ 2 amod\n2 b _ _ _ _ 0 root"
CHAIN = "1 a _ _ _ _ 2 det\n2 b _ _ _ _ 3 nsubj\n3 c _ _ _ _ 0 root"


def zero_gate_table(relations) -> RelationTable:
    vocab = relation_vocabulary(relations)
    return RelationTable(relations=vocab,
                         index={r: i for i, r in enumerate(vocab)},
                         embeddings=Tensor(np.zeros((len(vocab), 4))),
                         w_gate=Tensor(np.zeros((4, 1))),
                         b_gate=Tensor(np.zeros(1)))


def test_relation_vocabulary_has_self_unknown_and_inverses():
    vocab = relation_vocabulary(["amod", "nsubj"])
    assert vocab[0] == "self"
    assert "<unk>" in vocab and "inv:<unk>" in vocab
    assert "inv:amod" in vocab and "inv:nsubj" in vocab


def test_structural_edges_pattern():
    deps = parse_conllu(TWO_TOKENS)
    entries = structural_edges(deps, 2)
    assert (0, 0, "self") in entries and (1, 1, "self") in entries
    assert (1, 0, "amod") in entries      # head -> dependent
    assert (0, 1, "inv:amod") in entries  # dependent -> head
    assert len(entries) == 4


def test_zero_gate_parameters_give_exact_half():
    deps = parse_conllu(TWO_TOKENS)
    adj = build_gated_adjacency(deps, 2, zero_gate_table(["amod"]))
    assert adj.matrix.data[0, 0] == 0.5 and adj.matrix.data[1, 1] == 0.5
    assert adj.matrix.data[1, 0] == 0.5 and adj.matrix.data[0, 1] == 0.5
    assert adj.degrees.tolist() == [2.0, 2.0]


def test_saturated_gate_and_absent_entries_exact_zero():
    deps = parse_conllu(CHAIN)
    table = zero_gate_table(["det", "nsubj"])
    table.b_gate = Tensor(np.full(1, 10.0))
    adj = build_gated_adjacency(deps, 3, table)
    present = adj.matrix.data != 0.0
    assert np.allclose(adj.matrix.data[present], 1.0 / (1.0 + np.exp(-10.0)))
    assert adj.matrix.data[0, 2] == 0.0 and adj.matrix.data[2, 0] == 0.0


def test_hand_set_gate_value():
    deps = parse_conllu(TWO_TOKENS)
    vocab = relation_vocabulary(["amod"])
    rng = np.random.default_rng(0)
    emb = rng.normal(size=(len(vocab), 4))
    w = rng.normal(size=(4, 1))
    b = rng.normal(size=1)
    table = RelationTable(relations=vocab, index={r: i for i, r in enumerate(vocab)},
                          embeddings=Tensor(emb), w_gate=Tensor(w), b_gate=Tensor(b))
    adj = build_gated_adjacency(deps, 2, table)
    amod = vocab.index("amod")
    want = 1.0 / (1.0 + np.exp(-(emb[amod] @ w[:, 0] + b[0])))
    assert abs(adj.matrix.data[1, 0] - want) < 1e-12


def test_unseen_relation_maps_to_reserved_rows():
    table = zero_gate_table(["amod"])
    assert table.lookup("xcomp") == table.index["<unk>"]
    assert table.lookup("inv:xcomp") == table.index["inv:<unk>"]
    deps = parse_conllu("1 a _ _ _ _ 2 xcomp\n2 b _ _ _ _ 0 root")
    adj = build_gated_adjacency(deps, 2, table)  # must not raise
    assert adj.matrix.data[1, 0] == 0.5


def test_single_token_output_is_gate_times_input():
    deps = parse_conllu("1 a _ _ _ _ 0 root")
    table = zero_gate_table([])
    adj = build_gated_adjacency(deps, 1, table)
    h = Tensor(np.array([[0.4, 1.2]]))
    layer = GcnLayer(w=Tensor(np.eye(2)), b=Tensor(np.zeros(2)))
    out = dgcn_propagate(h, adj, [layer])
    assert np.allclose(out.data, 0.5 * h.data, atol=1e-15)


def test_two_token_zero_gates_match_hand_computation():
    deps = parse_conllu(TWO_TOKENS)
    adj = build_gated_adjacency(deps, 2, zero_gate_table(["amod"]))
    h = np.array([[1.0, -2.0], [0.5, 3.0]])
    w = np.array([[0.2, -0.4], [0.6, 0.1]])
    b = np.array([0.05, -0.05])
    layer = GcnLayer(w=Tensor(w), b=Tensor(b))
    got = dgcn_propagate(Tensor(h), adj, [layer]).data
    y = h @ w + b
    want = np.maximum(0.5 * (0.5 * y + 0.5 * y[::-1]), 0.0)
    assert np.allclose(got, want, atol=1e-14)


def test_gradients_flow_into_relation_embeddings():
    rng = np.random.default_rng(1)
    params = init_dgcn(rng, ["amod"], d_r=3, hidden=4, num_layers=1)
    deps = parse_conllu(TWO_TOKENS)
    H = Tensor(rng.normal(size=(2, 4)))
    with Tape() as tape:
        adj = build_gated_adjacency(deps, 2, params.relation_table)
        out = dgcn_propagate(H, adj, params.layers)
        tape.backward(ad.tsum(out))
    grads = params.relation_table.embeddings.grad
    assert grads is not None
    used = [params.relation_table.lookup(r)
            for r in ("self", "amod", "inv:amod")]
    for idx in used:
        assert np.any(grads[idx] != 0.0)


def test_dgcn_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    params = init_dgcn(rng, ["det", "nsubj"], d_r=3, hidden=4, num_layers=2)
    deps = parse_conllu(CHAIN)
    H = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    weights = Tensor(rng.normal(size=(3, 4)))

    def fn():
        adj = build_gated_adjacency(deps, 3, params.relation_table)
        return ad.tsum(ad.mul(dgcn_propagate(H, adj, params.layers), weights))

    named = params.named_tensors() + [("H", H)]
    report = grad_check(fn, named, step=1e-5, tolerance=1e-4)
    assert report.passed, report.worst()


def test_one_layer_sees_only_one_hop():
    deps = parse_conllu(CHAIN)  # 0 <- 1 <- 2, so 0 and 2 are two hops apart
    table = zero_gate_table(["det", "nsubj"])
    adj = build_gated_adjacency(deps, 3, table)
    rng = np.random.default_rng(3)
    h1 = rng.normal(size=(3, 4))
    h2 = h1.copy()
    h2[2] += 1.0
    layer = [GcnLayer(w=Tensor(rng.normal(size=(4, 4))), b=Tensor(np.zeros(4)))]
    out1 = dgcn_propagate(Tensor(h1), adj, layer).data
    out2 = dgcn_propagate(Tensor(h2), adj, layer).data
    assert np.array_equal(out1[0], out2[0])
    assert not np.array_equal(out1[1], out2[1])
