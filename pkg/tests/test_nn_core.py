"""Core network substrate: catalog ops, assembly, training, gradients."""

import hashlib

import numpy as np
import pytest

import tanas.nn as nn
from tanas.errors import TrainingError, ValidationError


def param_digest(net):
    return hashlib.sha256(net.parameter_bytes()).hexdigest()


def naive_conv2d(x, W, b, pad, dil):
    """Brute-force correlation oracle (independent of the layer code)."""
    B, Ci, H, Wd = x.shape
    Co, _, kh, kw = W.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    Ho = H + 2 * pad[0] - dil * (kh - 1)
    Wo = Wd + 2 * pad[1] - dil * (kw - 1)
    y = np.zeros((B, Co, Ho, Wo))
    for bb in range(B):
        for o in range(Co):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(Ci):
                        for u in range(kh):
                            for v in range(kw):
                                acc += W[o, c, u, v] * xp[bb, c, i + u * dil, j + v * dil]
                    y[bb, o, i, j] = acc + (b[o] if b is not None else 0.0)
    return y


def naive_maxpool2x2(x, stride):
    B, C, H, W = x.shape
    if stride == 1:
        xp = np.pad(x, ((0, 0), (0, 0), (0, 1), (0, 1)), constant_values=-np.inf)
        Ho, Wo = H, W
    else:
        xp, Ho, Wo = x, H // 2, W // 2
    y = np.zeros((B, C, Ho, Wo))
    for i in range(Ho):
        for j in range(Wo):
            y[:, :, i, j] = xp[:, :, i * stride:i * stride + 2,
                               j * stride:j * stride + 2].max(axis=(2, 3))
    return y


class TestCatalogOps:
    @pytest.mark.parametrize("op", nn.CELL_SAFE_OPS)
    @pytest.mark.parametrize("shape", [(1, 6, 6), (3, 8, 8), (2, 7, 9), (4, 28, 28)])
    def test_cell_ops_preserve_shape(self, op, shape):
        spec = {"identity": nn.identity_op, "zero": nn.zero_op,
                "maxpool2x2": nn.maxpool2x2, "dil_conv3x3": nn.dil_conv3x3,
                "sep_conv3x3": nn.sep_conv3x3, "conv5x5": nn.conv5x5}[op]()
        lay_net = nn.build_network([spec, nn.dense(2)], shape, seed=1)
        x = np.random.default_rng(0).random((2,) + shape, dtype=np.float32)
        y, _ = lay_net.layers[0].forward(x)
        assert y.shape == x.shape

    def test_zero_op_exact(self):
        net = nn.build_network([nn.zero_op(), nn.dense(2)], (2, 5, 5), seed=0)
        x = np.random.default_rng(1).standard_normal((3, 2, 5, 5)).astype(np.float32)
        y, _ = net.layers[0].forward(x)
        assert np.all(y == 0.0)

    def test_identity_op_exact(self):
        net = nn.build_network([nn.identity_op(), nn.dense(2)], (2, 5, 5), seed=0)
        x = np.random.default_rng(1).standard_normal((3, 2, 5, 5)).astype(np.float32)
        y, _ = net.layers[0].forward(x)
        assert np.array_equal(y, x)

    @pytest.mark.parametrize("pad,dil,kern", [((0, 0), 1, (3, 3)), ((2, 2), 2, (3, 3)),
                                              ((2, 2), 1, (5, 5)), ((1, 2), 1, (3, 5))])
    def test_conv_matches_bruteforce(self, pad, dil, kern):
        rng = np.random.default_rng(42)
        net = nn.build_network(
            [nn.conv(4, *kern, padding=pad, dilation=dil, activation="linear"),
             nn.dense(2)], (3, 8, 9), dtype="float64", seed=5)
        lay = net.layers[0]
        x = rng.standard_normal((2, 3, 8, 9))
        got, _ = lay.forward(x)
        want = naive_conv2d(x, lay.params["W"], lay.params["b"], pad, dil)
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_maxpool_matches_bruteforce(self, stride):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 3, 6, 8))
        net = nn.build_network([nn.maxpool2x2(stride=stride), nn.dense(2)],
                               (3, 6, 8), dtype="float64", seed=0)
        got, _ = net.layers[0].forward(x)
        np.testing.assert_array_equal(got, naive_maxpool2x2(x, stride))


class TestBuildNetwork:
    def test_representative_stack(self):
        net = nn.build_network([nn.conv(32, 5, 5), nn.dense(1024), nn.dense(2)],
                               (1, 28, 28), seed=0)
        assert net.output_dim == 2
        x = np.zeros((3, 1, 28, 28), dtype=np.float32)
        assert net.forward(x).shape == (3, 2)

    def test_empty_spec_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            nn.build_network([], (1, 28, 28))

    def test_transform_stack_on_flat_features(self):
        net = nn.build_network([nn.dense(2048), nn.dense(512), nn.dense(1024)],
                               (1024,), seed=0)
        assert [l.kind for l in net.layers] == ["dense", "dense", "dense"]
        assert net.output_dim == 1024

    def test_shape_mismatch_is_descriptive(self):
        with pytest.raises(ValidationError, match="layer 0"):
            nn.build_network([nn.conv(8, 9, 9)], (1, 4, 4))

    def test_parameter_count_is_element_sum(self):
        net = nn.build_network([nn.dense(3), nn.dense(2)], (4,), seed=0)
        # (4*3 + 3) + (3*2 + 2)
        assert net.parameter_count() == 15 + 8


class TestTrain:
    def test_linear_regression_reaches_least_squares_optimum(self):
        rng = np.random.default_rng(11)
        n, d = 256, 6
        X = rng.standard_normal((n, d))
        w_true = rng.standard_normal((d, 1))
        y = X @ w_true + 0.01 * rng.standard_normal((n, 1))
        # independent oracle: normal equations
        w_opt, *_ = np.linalg.lstsq(X, y, rcond=None)
        opt_loss = float(np.mean((X @ w_opt - y) ** 2))

        net = nn.build_network([{"kind": "dense", "units": 1, "bias": False,
                                 "activation": None}], (d,), dtype="float64", seed=3)
        cfg = nn.TrainConfig(loss="mean_squared_error", learning_rate=0.05,
                             batch_size=32, max_epochs=300, seed=4)
        final = nn.train(net, (X, y), cfg)
        assert abs(final.loss - opt_loss) < 1e-3

    def test_zero_learning_rate_is_noop(self):
        rng = np.random.default_rng(5)
        X = rng.random((40, 8)).astype(np.float32)
        y = (rng.random(40) > 0.5).astype(np.int64)
        net = nn.build_network([nn.dense(6), nn.dense(2)], (8,), seed=9)
        before = param_digest(net)
        initial = nn.evaluate(net, (X, y))
        cfg = nn.TrainConfig(learning_rate=0.0, batch_size=16, max_epochs=2, seed=1)
        final = nn.train(net, (X, y), cfg)
        assert param_digest(net) == before
        np.testing.assert_allclose(final.loss, initial.loss, rtol=1e-5)
        assert final.accuracy == initial.accuracy

    def test_fixed_seed_training_is_bitwise_reproducible(self):
        rng = np.random.default_rng(6)
        X = rng.random((60, 10)).astype(np.float32)
        y = (X.sum(axis=1) > 5).astype(np.int64)
        digests = []
        for _ in range(2):
            net = nn.build_network([nn.dense(12), nn.dense(2)], (10,), seed=21)
            nn.train(net, (X, y), nn.TrainConfig(learning_rate=0.1, batch_size=8,
                                                 max_epochs=4, seed=33))
            digests.append(param_digest(net))
        assert digests[0] == digests[1]

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_nonfinite_loss_aborts_with_location(self):
        X = np.full((16, 4), 1e30, dtype=np.float32)
        y = np.zeros((16, 1), dtype=np.float32)
        net = nn.build_network([{"kind": "dense", "units": 1, "bias": True,
                                 "activation": None}], (4,), seed=0)
        cfg = nn.TrainConfig(loss="mean_squared_error", learning_rate=10.0,
                             batch_size=8, max_epochs=3, seed=0)
        with pytest.raises(TrainingError, match=r"epoch \d+, batch \d+"):
            nn.train(net, (X, y), cfg)


class TestEvaluate:
    def test_constant_predictor_on_balanced_labels(self):
        # bias forces a constant argmax; balanced labels give accuracy 0.5
        net = nn.build_network([nn.dense(2)], (3,), seed=0)
        net.layers[0].params["W"][...] = 0.0
        net.layers[0].params["b"][...] = np.array([1.0, 0.0], dtype=np.float32)
        X = np.random.default_rng(0).random((50, 3)).astype(np.float32)
        y = np.array([0, 1] * 25, dtype=np.int64)
        assert nn.evaluate(net, (X, y)).accuracy == 0.5

    def test_perfect_memorizer_scores_one(self):
        X = np.eye(4, dtype=np.float32)
        y = np.array([0, 1, 0, 1], dtype=np.int64)
        net = nn.build_network([nn.dense(2)], (4,), seed=0)
        W = np.zeros((4, 2), dtype=np.float32)
        for i, lab in enumerate(y):
            W[i, lab] = 5.0
        net.layers[0].params["W"][...] = W
        assert nn.evaluate(net, (X, y)).accuracy == 1.0

    def test_evaluate_never_mutates_weights(self):
        net = nn.build_network([nn.dense(8), nn.dense(2)], (5,), seed=2)
        X = np.random.default_rng(1).random((30, 5)).astype(np.float32)
        y = np.zeros(30, dtype=np.int64)
        before = param_digest(net)
        nn.evaluate(net, (X, y))
        assert param_digest(net) == before

    def test_empty_data_rejected(self):
        net = nn.build_network([nn.dense(2)], (5,), seed=0)
        with pytest.raises(ValidationError, match="at least one sample"):
            nn.evaluate(net, (np.zeros((0, 5)), np.zeros(0, dtype=np.int64)))


class TestPenultimateFeatures:
    def test_representative_features_are_1024_wide(self):
        net = nn.build_network([nn.conv(32, 5, 5), nn.dense(1024), nn.dense(2)],
                               (1, 28, 28), seed=0)
        x = np.random.default_rng(0).random((5, 1, 28, 28), dtype=np.float32)
        feats = nn.penultimate_features(net, x)
        assert feats.shape == (5, 1024)

    def test_two_calls_identical(self):
        net = nn.build_network([nn.dense(16), nn.dense(4), nn.dense(2)], (6,), seed=1)
        x = np.random.default_rng(2).random((7, 6)).astype(np.float32)
        a = nn.penultimate_features(net, x)
        b = nn.penultimate_features(net, x)
        np.testing.assert_array_equal(a, b)

    def test_single_parametric_layer_rejected(self):
        net = nn.build_network([nn.dense(2)], (6,), seed=0)
        with pytest.raises(ValidationError, match="penultimate"):
            nn.penultimate_features(net, np.zeros((1, 6), dtype=np.float32))

    def test_features_compose_with_transform_net(self):
        rep = nn.build_network([nn.conv(4, 5, 5), nn.dense(32), nn.dense(2)],
                               (1, 12, 12), seed=0)
        x = np.random.default_rng(3).random((6, 1, 12, 12), dtype=np.float32)
        feats = nn.penultimate_features(rep, x)
        tnet = nn.build_network([nn.dense(64), nn.dense(16), nn.dense(32)],
                                (feats.shape[1],), seed=1)
        assert tnet.forward(feats).shape == (6, 32)


class TestGradientCheck:
    def test_two_layer_dense_passes(self):
        rng = np.random.default_rng(8)
        net = nn.build_network([nn.dense(8), nn.dense(3)], (5,), dtype="float64", seed=4)
        X = rng.standard_normal((12, 5))
        y = rng.integers(0, 3, size=12)
        res = nn.gradient_check(net, (X, y), tolerance=1e-4)
        assert res.ok, res.report

    def test_zero_network_zero_loss_passes(self):
        net = nn.build_network([{"kind": "dense", "units": 2, "bias": False,
                                 "activation": None}], (4,), dtype="float64", seed=0)
        net.layers[0].params["W"][...] = 0.0
        X = np.random.default_rng(0).standard_normal((6, 4))
        res = nn.gradient_check(net, (X, np.zeros((6, 2))), tolerance=1e-4,
                                loss="mean_squared_error")
        assert res.ok

    def test_corrupted_gradient_detected(self):
        net = nn.build_network([nn.dense(4), nn.dense(2)], (3,), dtype="float64", seed=1)
        lay = net.layers[1]
        orig = lay.backward

        def corrupted(dy, cache):
            dx, grads = orig(dy, cache)
            grads["W"] = grads["W"].copy()
            grads["W"].flat[0] += 1.0
            return dx, grads

        lay.backward = corrupted
        X = np.random.default_rng(2).standard_normal((10, 3))
        y = np.random.default_rng(3).integers(0, 2, size=10)
        res = nn.gradient_check(net, (X, y), tolerance=1e-4)
        assert not res.ok
        assert res.worst is not None
        assert "mismatch" in res.report

    def test_conv_pool_net_passes(self):
        rng = np.random.default_rng(9)
        net = nn.build_network([nn.conv(3, 3, 3, padding=1), nn.maxpool2x2(stride=2),
                                nn.dense(3)], (2, 6, 6), dtype="float64", seed=7)
        X = rng.standard_normal((4, 2, 6, 6))
        y = rng.integers(0, 3, size=4)
        res = nn.gradient_check(net, (X, y), tolerance=1e-4)
        assert res.ok, res.report

    def test_cell_net_passes(self):
        rng = np.random.default_rng(10)
        edges = [(0, 1, "sep_conv3x3"), (0, 2, "dil_conv3x3"), (1, 2, "maxpool2x2"),
                 (0, 3, "identity"), (1, 3, "conv5x5"), (2, 3, "zero")]
        net = nn.build_network([nn.cell(4, edges, 2), nn.global_avg_pool(),
                                nn.dense(2)], (2, 6, 6), dtype="float64", seed=13)
        X = rng.standard_normal((3, 2, 6, 6))
        y = rng.integers(0, 2, size=3)
        res = nn.gradient_check(net, (X, y), tolerance=1e-4)
        assert res.ok, res.report

    def test_refuses_oversized_network(self):
        net = nn.build_network([nn.dense(200), nn.dense(200)], (100,), seed=0)
        with pytest.raises(ValidationError, match="10000"):
            nn.gradient_check(net, (np.zeros((1, 100)), np.zeros(1, dtype=int)),
                              tolerance=1e-4)


class TestCellSemantics:
    def test_all_identity_cell_is_scaled_identity(self):
        # dense 3-node wiring of identities: v1 = x, v2 = x + v1 = 2x;
        # with a block-identity projection the output is (a + 2b) * x
        edges = [(0, 1, "identity"), (0, 2, "identity"), (1, 2, "identity")]
        net = nn.build_network([nn.cell(3, edges, 2), nn.global_avg_pool(),
                                nn.dense(2)], (2, 5, 5), dtype="float64", seed=0)
        cell = net.layers[0]
        C = 2
        proj = np.zeros_like(cell.params["proj.W"])
        a, b = 0.25, 1.5
        for c in range(C):
            proj[c, c, 0, 0] = a
            proj[c, C + c, 0, 0] = b
        cell.params["proj.W"][...] = proj
        x = np.random.default_rng(4).standard_normal((3, 2, 5, 5))
        y, _ = cell.forward(x)
        np.testing.assert_allclose(y, (a + 2 * b) * x, rtol=1e-12)

    def test_all_zero_cell_outputs_exact_zero(self):
        edges = [(0, 1, "zero"), (0, 2, "zero"), (1, 2, "zero")]
        net = nn.build_network([nn.cell(3, edges, 2), nn.global_avg_pool(),
                                nn.dense(2)], (2, 5, 5), seed=0)
        x = np.random.default_rng(5).standard_normal((3, 2, 5, 5)).astype(np.float32)
        y, _ = net.layers[0].forward(x)
        assert np.all(y == 0.0)
        # classifier head is still well-defined
        assert net.forward(x).shape == (3, 2)

    def test_cell_network_trains(self):
        edges = [(0, 1, "sep_conv3x3"), (0, 2, "identity"), (1, 2, "maxpool2x2")]
        net = nn.build_network([nn.conv(4, 3, 3, padding=1), nn.cell(3, edges, 4),
                                nn.global_avg_pool(), nn.dense(2)], (1, 8, 8), seed=3)
        rng = np.random.default_rng(6)
        X = rng.random((32, 1, 8, 8)).astype(np.float32)
        y = (X.mean(axis=(1, 2, 3)) > 0.5).astype(np.int64)
        m = nn.train(net, (X, y), nn.TrainConfig(learning_rate=0.1, batch_size=8,
                                                 max_epochs=3, seed=0))
        assert np.isfinite(m.loss)


class TestCheckpoint:
    def test_roundtrip_is_bitwise_lossless(self, tmp_path):
        net = nn.build_network([nn.conv(4, 3, 3, padding=1), nn.dense(10), nn.dense(2)],
                               (1, 6, 6), seed=17)
        # dirty the weights so we are not saving pristine init
        nn.train(net, (np.random.default_rng(0).random((20, 1, 6, 6), dtype=np.float32),
                       np.random.default_rng(1).integers(0, 2, 20)),
                 nn.TrainConfig(learning_rate=0.05, batch_size=5, max_epochs=1, seed=2))
        p = tmp_path / "weights"
        nn.save_checkpoint(net, p, metadata={"note": "test"})
        loaded, meta = nn.load_checkpoint(p)
        assert meta == {"note": "test"}
        assert param_digest(loaded) == param_digest(net)
        assert loaded.descriptors() == net.descriptors()

    def test_masks_roundtrip_and_reapply(self, tmp_path):
        net = nn.build_network([nn.dense(4), nn.dense(2)], (3,), seed=0)
        lay = net.layers[0]
        mask = np.ones_like(lay.params["W"])
        mask[0, :] = 0.0
        lay.masks["W"] = mask
        lay.apply_masks()
        p = tmp_path / "weights"
        nn.save_checkpoint(net, p)
        loaded, _ = nn.load_checkpoint(p)
        assert np.all(loaded.layers[0].params["W"][0, :] == 0.0)
        np.testing.assert_array_equal(loaded.layers[0].masks["W"], mask)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "weights"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(Exception, match="magic"):
            nn.load_checkpoint(p)

    def test_truncated_payload_rejected(self, tmp_path):
        net = nn.build_network([nn.dense(2)], (3,), seed=0)
        p = tmp_path / "weights"
        nn.save_checkpoint(net, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-4])
        with pytest.raises(Exception, match="truncated"):
            nn.load_checkpoint(p)
