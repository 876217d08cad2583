import numpy as np
import pytest

from hgcn import autodiff as ad
from hgcn.autodiff import Tape, Tensor, parameter
from hgcn.errors import FormatError, ShapeError
from hgcn.gradcheck import run_gradcheck, tiny_instance
from hgcn.graph import EdgeSet, SubgraphSpec, adjacency, assemble_graph, build_intra_edges
from hgcn.model import (ABLATIONS, GatParams, MatchingConfig, ModelConfig, SageParams,
                        attention_weights, crossmodal_layer, forward, gat_fuse, init_xavier,
                        knn_matching, load_checkpoint, pool_and_classify, sage_forward,
                        save_checkpoint)


def sage_params(w_self, w_neigh, bias):
    return SageParams(parameter(w_self), parameter(w_neigh), parameter(bias))


# ------------------------------------------------------------------ sage


def test_sage_identity_configuration():
    x = np.abs(np.random.default_rng(0).normal(size=(4, 3)))
    adj = adjacency(build_intra_edges(SubgraphSpec(4, 1, 1)), 4, 4)
    out = sage_forward(sage_params(np.eye(3), np.zeros((3, 3)), np.zeros(3)), Tensor(x), adj)
    assert np.array_equal(out.data, x)


def test_sage_pure_neighbour_exchange():
    adj = np.array([[1.0, 1.0], [1.0, 1.0]])
    out = sage_forward(sage_params(np.zeros((2, 2)), np.eye(2), np.zeros(2)),
                       Tensor(np.eye(2)), adj)
    assert np.array_equal(out.data, [[0, 1], [1, 0]])


def test_sage_isolated_node_gets_no_neighbour_term():
    adj = np.eye(3)
    x = np.ones((3, 2))
    out = sage_forward(sage_params(np.zeros((2, 2)), np.ones((2, 2)), np.full(2, 0.5)),
                       Tensor(x), adj)
    assert np.array_equal(out.data, np.full((3, 2), 0.5))


def test_sage_shape_errors():
    p = sage_params(np.eye(3), np.eye(3), np.zeros(3))
    with pytest.raises(ShapeError):
        sage_forward(p, Tensor(np.ones((4, 2))), np.eye(4))
    with pytest.raises(ShapeError):
        sage_forward(p, Tensor(np.ones((4, 3))), np.eye(5))


# ------------------------------------------------------------------ matching


def test_knn_examples():
    cfg = MatchingConfig(k=3)
    rng = np.random.default_rng(0)
    edges = knn_matching(rng.normal(size=(1, 2)), rng.normal(size=(3, 2)), cfg)
    assert set(edges.pairs) == {(0, 0), (0, 1), (0, 2)}
    edges = knn_matching(np.array([[1.0, 0.0]]),
                         np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]), MatchingConfig(k=1))
    assert edges.pairs == ((0, 0),)


def test_knn_edge_counts():
    rng = np.random.default_rng(2)
    a, v = rng.normal(size=(7, 4)), rng.normal(size=(5, 4))
    for k in (1, 3, 5, 9):
        per_node = knn_matching(a, v, MatchingConfig(k=k))
        assert all(len(per_node.neighbors(i)) == min(k, 5) for i in range(7))
        glob = knn_matching(a, v, MatchingConfig(k=k, scope="global-top-k"))
        assert len(glob) == min(k, 35)


def test_cosine_matching_is_scale_invariant():
    rng = np.random.default_rng(5)
    a, v = rng.normal(size=(6, 3)), rng.normal(size=(4, 3))
    for scope in ("per-audio-node", "global-top-k"):
        cfg = MatchingConfig(k=2, scope=scope)
        assert knn_matching(a, v, cfg) == knn_matching(3.7 * a, v, cfg)
        assert knn_matching(a, v, cfg) == knn_matching(a, 0.01 * v, cfg)


def test_zero_vector_has_distance_one():
    edges = knn_matching(np.zeros((1, 2)), np.array([[1.0, 0.0], [0.0, 1.0]]), MatchingConfig(k=1))
    # all distances tie at 1, the smaller video index wins
    assert edges.pairs == ((0, 0),)


def test_matching_config_validation():
    with pytest.raises(ValueError):
        MatchingConfig(k=0)
    with pytest.raises(ValueError):
        MatchingConfig(distance="manhattan")


# ------------------------------------------------------------------ attention


def gat_params(rng, d_in, d_out):
    return GatParams(parameter(rng.normal(size=(d_in, d_out))),
                     parameter(rng.normal(size=(1, 2 * d_out))), 0.2)


def test_single_neighbour_passes_projection_through():
    rng = np.random.default_rng(1)
    p = gat_params(rng, 3, 2)
    a, v = rng.normal(size=(2, 3)), rng.normal(size=(4, 3))
    edges = EdgeSet("audio-video", ((0, 3), (1, 0)))
    out = gat_fuse(p, Tensor(a), Tensor(v), edges).data
    proj = v @ p.w.data
    assert np.allclose(out, proj[[3, 0]], rtol=0, atol=1e-15)


def test_identical_neighbours_share_attention():
    rng = np.random.default_rng(2)
    p = gat_params(rng, 3, 2)
    v = np.tile(rng.normal(size=(1, 3)), (2, 1))
    mask = np.ones((1, 2), dtype=bool)
    alpha = attention_weights(p, Tensor(rng.normal(size=(1, 3))), Tensor(v), mask)
    assert np.allclose(alpha, [[0.5, 0.5]], atol=1e-15)


def test_attention_rows_sum_to_one_and_unmatched_rows_are_zero():
    rng = np.random.default_rng(3)
    p = gat_params(rng, 4, 3)
    a, v = rng.normal(size=(5, 4)), rng.normal(size=(6, 4))
    mask = rng.random((5, 6)) < 0.5
    mask[2] = False
    alpha = attention_weights(p, Tensor(a), Tensor(v), mask)
    sums = alpha.sum(axis=1)
    assert np.all(np.abs(sums[mask.any(axis=1)] - 1) < 1e-12)
    assert np.all(gat_fuse(p, Tensor(a), Tensor(v), mask).data[2] == 0)


# ------------------------------------------------------------------ crossmodal layer


def _layer_inputs(seed=0):
    model, graph = tiny_instance(seed)
    n = model.config
    rng = np.random.default_rng(seed + 100)
    a = Tensor(rng.normal(size=(n.n_audio, n.hidden)))
    v = Tensor(rng.normal(size=(n.n_video, n.hidden)))
    adj_a = adjacency(graph.edges_aa, n.n_audio, n.n_audio)
    adj_v = adjacency(graph.edges_vv, n.n_video, n.n_video)
    return model, a, v, adj_a, adj_v


def test_video_output_ignores_audio():
    model, a, v, adj_a, adj_v = _layer_inputs()
    _, v1, _ = crossmodal_layer(model, a, v, adj_a, adj_v)
    _, v2, _ = crossmodal_layer(model, Tensor(a.data * -4 + 1), v, adj_a, adj_v)
    assert v1.data.tobytes() == v2.data.tobytes()


def test_zero_attention_weights_leave_shared_branch():
    model, a, v, adj_a, adj_v = _layer_inputs(1)
    for head in model.cross_gat:
        head.w.data[:] = 0.0
    out_a, _, _ = crossmodal_layer(model, a, v, adj_a, adj_v)
    shared = sage_forward(model.shared_sage, a, adj_a)
    assert np.array_equal(out_a.data, shared.data)


def test_shared_weights_are_one_object():
    model, a, v, adj_a, adj_v = _layer_inputs(2)
    w = model.shared_sage.w_self
    for pick in (0, 1):
        with Tape() as tape:
            out = ad.total(crossmodal_layer(model, a, v, adj_a, adj_v)[pick])
        g = ad.backward(tape, out, [w])[w]
        # both branches reach the same tensor
        assert np.any(g != 0)


# ------------------------------------------------------------------ pooling and forward


def test_pooling_special_cases():
    model, _ = tiny_instance(0)
    q, p, h = model.config.n_audio, model.config.n_video, model.config.hidden
    rng = np.random.default_rng(9)
    fa, fv = rng.normal(size=(q, h)), rng.normal(size=(p, h))
    model.pooling.p_audio.data = np.full((1, q), 1 / q)
    model.pooling.p_video.data = np.full((1, p), 1 / p)
    model.classifier_w.data = np.eye(2 * h, model.config.n_classes)
    model.classifier_b.data[:] = 0
    logits = pool_and_classify(model, Tensor(fa), Tensor(fv)).data
    expected = np.concatenate([fa.mean(axis=0), fv.mean(axis=0)])[:model.config.n_classes]
    assert np.allclose(logits.ravel(), expected)
    model.pooling.p_audio.data = np.eye(q)[[2]]
    model.classifier_w.data = np.eye(2 * h)[:, :h]
    model.classifier_b.data = np.zeros((1, h))
    pooled = pool_and_classify(model, Tensor(fa), Tensor(fv)).data
    assert np.allclose(pooled.ravel(), fa[2])
    perm = rng.permutation(q)
    weights = rng.random((1, q))
    model.pooling.p_audio.data = weights
    before = pool_and_classify(model, Tensor(fa), Tensor(fv)).data
    model.pooling.p_audio.data = weights[:, perm]
    after = pool_and_classify(model, Tensor(fa[perm]), Tensor(fv)).data
    assert np.allclose(before, after, atol=1e-14)


def _default_graph(cfg, seed=0):
    rng = np.random.default_rng(seed)
    return assemble_graph(rng.normal(size=(cfg.n_audio, cfg.d_audio)),
                          rng.normal(size=(cfg.n_video, cfg.d_video)),
                          SubgraphSpec(cfg.n_audio, 3, 1), SubgraphSpec(cfg.n_video, 1, 1),
                          np.eye(cfg.n_classes)[0])


def test_default_forward_shape_and_determinism():
    cfg = ModelConfig(n_classes=4)
    model = init_xavier(cfg, 3)
    graph = _default_graph(cfg)
    logits, edges = forward(model, graph)
    assert logits.shape == (4,)
    assert len(edges) == 3 * 30
    again, _ = forward(model, graph)
    assert logits.data.tobytes() == again.data.tobytes()
    batched, batch_edges = forward(model, [graph, graph])
    assert batched.shape == (2, 4) and batch_edges[1] == edges
    assert np.allclose(batched.data[0], logits.data, atol=1e-13)


def test_incompatible_graph_is_named():
    model = init_xavier(ModelConfig(), 0)
    bad = _default_graph(ModelConfig(n_audio=12))
    bad.id = "odd-one"
    with pytest.raises(ShapeError, match="odd-one"):
        forward(model, bad)


def test_init_properties():
    cfg = ModelConfig()
    m1, m2 = init_xavier(cfg, 7), init_xavier(cfg, 7)
    for (n1, t1), (n2, t2) in zip(m1.named_parameters(), m2.named_parameters()):
        assert n1 == n2 and t1.data.tobytes() == t2.data.tobytes()
    assert m1.pooling.p_audio.data.sum() == pytest.approx(1.0)
    assert m1.pooling.p_video.data.sum() == pytest.approx(1.0)
    w = m1.audio_layers[0].w_self.data
    bound = np.sqrt(6 / (w.shape[0] + w.shape[1]))
    assert np.all(np.abs(w) <= bound)
    assert all(np.all(layer.bias.data == 0) for layer in m1.audio_layers)
    big = init_xavier(ModelConfig(d_audio=40, hidden=25), 1).audio_layers[0].w_self.data
    assert big.size == 1000 and np.all(np.abs(big) <= np.sqrt(6 / 65))
    assert init_xavier(cfg, 8).classifier_w.data.tobytes() != m1.classifier_w.data.tobytes()


@pytest.mark.parametrize("ablation", ABLATIONS)
def test_ablation_structure(ablation):
    model = init_xavier(ModelConfig(ablation=ablation), 0)
    groups = model.named_groups()
    cfg = model.config
    assert ("video_sage" in groups) == (ablation != "audio-only")
    assert ("audio_sage" in groups) == (ablation != "video-only")
    assert ("cross_gat" in groups) == (ablation in ("full", "no-learnable-pool"))
    depth = len(model.audio_layers or model.video_layers)
    assert depth + int(cfg.has_crossmodal) == 4
    frozen = {id(t) for t in model.pooling.tensors()}
    trainable = {id(t) for t in model.trainable()}
    assert (frozen & trainable == set()) == (ablation == "no-learnable-pool")
    logits, _ = forward(model, _default_graph(cfg))
    assert logits.shape == (2,)


@pytest.mark.parametrize("ablation", ABLATIONS)
def test_gradcheck_every_ablation(ablation):
    report = run_gradcheck(seed=4, ablation=ablation)
    assert report.passed, report.lines()


def test_checkpoint_round_trip_and_errors(tmp_path):
    model = init_xavier(ModelConfig(hidden=8, k=2, scope="global-top-k"), 5)
    path = tmp_path / "m.hgm"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.config == model.config
    for (n1, t1), (n2, t2) in zip(model.named_parameters(), back.named_parameters()):
        assert n1 == n2 and t1.data.tobytes() == t2.data.tobytes()
    raw = path.read_bytes()
    path.write_bytes(b"HGMX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(path)
    path.write_bytes(raw[:-8])
    with pytest.raises(FormatError, match="truncated"):
        load_checkpoint(path)
