import math

import numpy as np
import pytest

from hlwlab.errors import ConfigError, ModelMismatchError
from hlwlab.gatmodel import (DnnConfig, DnnParams, GatConfig, GatLayerParams,
                             GatParams, GraphBatch, dnn_backward, dnn_forward,
                             gat_backward, gat_forward, gat_layer_fwd,
                             gat_predict, init_dnn_params, init_gat_params)
from hlwlab.numcore import grad_check, mse_bwd, mse_fwd
from hlwlab.scenario import SampleGraph


def toy_graph(n_ue, n_ap, serving, feats):
    """SampleGraph straight from a serving structure and a feature matrix."""
    n_nodes = n_ue + n_ap
    src, dst = [], []
    for j, s in enumerate(serving):
        for i in s:
            ap = n_ue + i
            src += [ap, j]
            dst += [j, ap]
    for v in range(n_nodes):
        src.append(v)
        dst.append(v)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.argsort(dst, kind="stable")
    src, dst = src[order], dst[order]
    seg = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(seg, dst + 1, 1)
    seg = np.cumsum(seg)
    return SampleGraph(n_nodes=n_nodes, n_ue=n_ue,
                       features=np.asarray(feats, dtype=np.float64),
                       edge_src=src, edge_dst=dst, seg_ptr=seg,
                       serving=[list(s) for s in serving])


def random_graph(rng, n_ue=2, n_ap=3, n_f=2):
    feats = np.zeros((n_ue + n_ap, n_f + 1))
    feats[:n_ue] = rng.random((n_ue, n_f + 1))
    serving = [sorted(rng.choice(n_ap, size=n_f, replace=False).tolist())
               for _ in range(n_ue)]
    return toy_graph(n_ue, n_ap, serving, feats)


def path3_batch():
    """3-node path 0-1-2 with self-loops, scalar features."""
    src = []
    dst = []
    for a, b in [(0, 1), (1, 0), (1, 2), (2, 1), (0, 0), (1, 1), (2, 2)]:
        src.append(b)
        dst.append(a)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.argsort(dst, kind="stable")
    src, dst = src[order], dst[order]
    seg = np.zeros(4, dtype=np.int64)
    np.add.at(seg, dst + 1, 1)
    seg = np.cumsum(seg)
    feats = np.array([[0.3], [-0.7], [1.1]])
    g = SampleGraph(n_nodes=3, n_ue=0, features=feats, edge_src=src,
                    edge_dst=dst, seg_ptr=seg, serving=[])
    return GraphBatch.from_graph(g)


class TestLayerHandComputation:
    def test_path_graph_matches_pencil_and_paper(self):
        batch = path3_batch()
        w, a1, a2, bias, slope = 0.8, 0.5, -0.4, 0.1, 0.2
        lp = GatLayerParams(ws=[np.array([[w]])],
                            avs=[np.array([a1, a2])],
                            b=np.array([bias]))
        out, _ = gat_layer_fwd(batch.features, batch, lp, slope, "sigmoid")

        x = [0.3, -0.7, 1.1]
        z = [w * v for v in x]
        neigh = {0: [0, 1], 1: [0, 1, 2], 2: [1, 2]}

        def lrelu(v):
            return v if v >= 0 else slope * v

        expect = []
        for i in range(3):
            logits = [lrelu(a1 * z[i] + a2 * z[j]) for j in neigh[i]]
            mx = max(logits)
            ex = [math.exp(v - mx) for v in logits]
            tot = sum(ex)
            agg = sum(e / tot * z[j] for e, j in zip(ex, neigh[i]))
            expect.append(1.0 / (1.0 + math.exp(-(agg + bias))))
        assert np.allclose(out.ravel(), expect, atol=1e-12)

    def test_zero_features_elu_gives_zero(self):
        batch = path3_batch()
        batch.features = np.zeros_like(batch.features)
        lp = GatLayerParams(ws=[np.array([[1.3]])],
                            avs=[np.array([0.5, -0.2])],
                            b=np.zeros(1))
        out, _ = gat_layer_fwd(batch.features, batch, lp, 0.2, "elu")
        assert np.all(out == 0.0)

    def test_singleton_selfloop(self):
        g = SampleGraph(n_nodes=1, n_ue=0,
                        features=np.array([[0.7, -0.2]]),
                        edge_src=np.array([0]), edge_dst=np.array([0]),
                        seg_ptr=np.array([0, 1]), serving=[])
        batch = GraphBatch.from_graph(g)
        rng = np.random.default_rng(0)
        ws = [rng.standard_normal((3, 2)) for _ in range(2)]
        lp = GatLayerParams(ws=ws, avs=[rng.standard_normal(6) for _ in range(2)],
                            b=np.zeros(3))
        out, cache = gat_layer_fwd(batch.features, batch, lp, 0.2, "sigmoid")
        mean_wh = sum(w @ g.features[0] for w in ws) / 2
        assert np.allclose(out[0], 1 / (1 + np.exp(-mean_wh)), atol=1e-12)
        for _, _, alpha in cache["heads"]:
            assert alpha[0] == 1.0


class TestForward:
    def setup_method(self):
        self.cfg = GatConfig(in_dim=3, out_dim=2, hidden_dim=8, n_heads=3,
                             dropout_p=0.0)
        self.params = init_gat_params(self.cfg, seed=0)

    def test_outputs_in_unit_interval(self):
        rng = np.random.default_rng(1)
        for seed in range(5):
            g = random_graph(np.random.default_rng(seed))
            pred = gat_predict(GraphBatch.from_graph(g), self.params, self.cfg)
            assert pred.shape == (2, 2)
            assert np.all((pred > 0) & (pred < 1))

    def test_ue_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        feats = np.zeros((4 + 3, 3))
        feats[:4] = rng.random((4, 3))
        serving = [[0, 1], [1, 2], [0, 2], [0, 1]]
        g = toy_graph(4, 3, serving, feats)
        pred = gat_predict(GraphBatch.from_graph(g), self.params, self.cfg)
        perm = [2, 0, 3, 1]
        feats_p = feats.copy()
        feats_p[:4] = feats[perm]
        gp = toy_graph(4, 3, [serving[p] for p in perm], feats_p)
        pred_p = gat_predict(GraphBatch.from_graph(gp), self.params, self.cfg)
        assert np.abs(pred[perm] - pred_p).max() < 1e-9

    def test_same_params_any_ue_count(self):
        # inductive contract: one checkpoint, different graph sizes
        for n_ue in (2, 10, 25):
            rng = np.random.default_rng(n_ue)
            feats = np.zeros((n_ue + 4, 3))
            feats[:n_ue] = rng.random((n_ue, 3))
            serving = [sorted(rng.choice(4, 2, replace=False).tolist())
                       for _ in range(n_ue)]
            g = toy_graph(n_ue, 4, serving, feats)
            pred = gat_predict(GraphBatch.from_graph(g), self.params, self.cfg)
            assert pred.shape == (n_ue, 2) and np.isfinite(pred).all()

    def test_feature_dim_mismatch(self):
        g = random_graph(np.random.default_rng(3), n_f=3)   # 4 features
        with pytest.raises(ModelMismatchError):
            gat_predict(GraphBatch.from_graph(g), self.params, self.cfg)

    def test_attention_rows_sum_to_one(self):
        g = random_graph(np.random.default_rng(4))
        batch = GraphBatch.from_graph(g)
        _, caches = gat_forward(batch, self.params, self.cfg, training=False)
        for cache in caches:
            for _, _, alpha in cache["heads"]:
                sums = np.add.reduceat(alpha, batch.seg_ptr[:-1])
                assert np.allclose(sums, 1.0, atol=1e-12)
                assert (alpha > 0).all()


class TestBackward:
    def test_fd_small_graph(self):
        cfg = GatConfig(in_dim=3, out_dim=2, hidden_dim=6, n_heads=2,
                        dropout_p=0.0)
        params = init_gat_params(cfg, seed=3)
        g = random_graph(np.random.default_rng(5))
        batch = GraphBatch.from_graph(g)
        target = np.random.default_rng(6).random((2, 2))

        def loss():
            pred, caches = gat_forward(batch, params, cfg, training=False)
            return mse_fwd(pred, target), \
                gat_backward(caches, mse_bwd(pred, target), batch)

        report = grad_check(loss, params.param_list())
        assert report.max_rel_err < 1e-4

    def test_zero_loss_grad_zero(self):
        cfg = GatConfig(in_dim=3, out_dim=2, hidden_dim=4, n_heads=2,
                        dropout_p=0.0)
        params = init_gat_params(cfg, seed=4)
        batch = GraphBatch.from_graph(random_graph(np.random.default_rng(7)))
        pred, caches = gat_forward(batch, params, cfg, training=False)
        grads = gat_backward(caches, np.zeros_like(pred), batch)
        assert all(np.all(g == 0.0) for g in grads)

    def test_duplicated_heads_get_identical_gradients(self):
        cfg = GatConfig(in_dim=3, out_dim=2, hidden_dim=4, n_heads=3,
                        dropout_p=0.0)
        params = init_gat_params(cfg, seed=5)
        for lp in params.layers:       # force all heads identical
            for k in range(1, len(lp.ws)):
                lp.ws[k] = lp.ws[0].copy()
                lp.avs[k] = lp.avs[0].copy()
        batch = GraphBatch.from_graph(random_graph(np.random.default_rng(8)))
        target = np.random.default_rng(9).random((2, 2))
        pred, caches = gat_forward(batch, params, cfg, training=False)
        grads = gat_backward(caches, mse_bwd(pred, target), batch)
        k = cfg.n_heads
        for li in range(cfg.n_layers):
            base = li * (2 * k + 1)
            for h in range(1, k):
                assert np.allclose(grads[base], grads[base + h], atol=1e-12)
                assert np.allclose(grads[base + k], grads[base + k + h],
                                   atol=1e-12)


class TestInit:
    def test_deterministic(self):
        cfg = GatConfig(in_dim=4, out_dim=3)
        a = init_gat_params(cfg, seed=1)
        b = init_gat_params(cfg, seed=1)
        for pa, pb in zip(a.param_list(), b.param_list()):
            assert np.array_equal(pa, pb)

    def test_glorot_variance(self):
        cfg = GatConfig(in_dim=40, out_dim=39, hidden_dim=200, n_heads=1)
        params = init_gat_params(cfg, seed=2)
        w = params.layers[0].ws[0]     # 200 x 40
        expect = 2.0 / (40 + 200)
        assert abs(w.var() - expect) / expect < 0.1

    def test_biases_zero(self):
        params = init_gat_params(GatConfig(in_dim=3, out_dim=2), seed=0)
        for lp in params.layers:
            assert np.all(lp.b == 0.0)

    def test_finite_outputs_zero_seed(self):
        cfg = GatConfig(in_dim=3, out_dim=2, dropout_p=0.0)
        params = init_gat_params(cfg, seed=0)
        g = random_graph(np.random.default_rng(10))
        pred = gat_predict(GraphBatch.from_graph(g), params, cfg)
        assert np.isfinite(pred).all()

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            GatConfig(in_dim=3, out_dim=3)     # must be in_dim - 1
        with pytest.raises(ConfigError):
            GatConfig(in_dim=3, out_dim=2, n_layers=0)


class TestDnn:
    def test_zero_weights_give_half(self):
        cfg = DnnConfig(n_u=3, n_f=2, n_hidden_layers=2, hidden_width=8)
        params = init_dnn_params(cfg, seed=0)
        for w in params.weights:
            w[:] = 0.0
        y, _ = dnn_forward(np.zeros((1, cfg.in_dim)), params, cfg)
        assert np.allclose(y, 0.5)

    def test_fd_gradients(self):
        cfg = DnnConfig(n_u=2, n_f=2, n_hidden_layers=2, hidden_width=6,
                        dropout_p=0.0)
        params = init_dnn_params(cfg, seed=1)
        rng = np.random.default_rng(2)
        x = rng.random((3, cfg.in_dim))
        t = rng.random((3, cfg.out_dim))

        def loss():
            y, caches = dnn_forward(x, params, cfg, training=False)
            return mse_fwd(y, t), dnn_backward(caches, mse_bwd(y, t))

        report = grad_check(loss, params.param_list())
        assert report.max_rel_err < 1e-6

    def test_wrong_input_length_rejected(self):
        cfg = DnnConfig(n_u=3, n_f=2)
        params = init_dnn_params(cfg, seed=0)
        with pytest.raises(ModelMismatchError):
            dnn_forward(np.zeros((1, 8)), params, cfg)   # needs 9

    def test_roundtrip_jsonable(self):
        cfg = DnnConfig(n_u=2, n_f=2, n_hidden_layers=1, hidden_width=4)
        params = init_dnn_params(cfg, seed=3)
        clone = DnnParams.from_jsonable(params.to_jsonable())
        for a, b in zip(params.param_list(), clone.param_list()):
            assert np.array_equal(a, b)


class TestParamsSerialization:
    def test_gat_roundtrip(self):
        cfg = GatConfig(in_dim=3, out_dim=2, hidden_dim=4, n_heads=2)
        params = init_gat_params(cfg, seed=6)
        clone = GatParams.from_jsonable(params.to_jsonable())
        for a, b in zip(params.param_list(), clone.param_list()):
            assert np.array_equal(a, b)
