import json
import math

import numpy as np
import pytest

from clmmlab import nets
from clmmlab.nets import (
    CheckpointError,
    NetworkParams,
    OptimizerState,
    TrainingDiverged,
    apply_update,
    clip_by_global_norm,
    forward,
    global_norm,
    init_params,
    load_checkpoint,
    loss_and_gradients,
    save_checkpoint,
    soft_update,
)


def zero_params(input_dim=2, hidden=(2, 2), n_out=3):
    h1, h2 = hidden
    return NetworkParams(
        w1=np.zeros((input_dim, h1)), b1=np.zeros(h1),
        w2=np.zeros((h1, h2)), b2=np.zeros(h2),
        wv=np.zeros((h2, 1)), bv=np.zeros(1),
        wa=np.zeros((h2, n_out)), ba=np.zeros(n_out),
    )


class TestForward:
    def test_dueling_substitution(self):
        # all-zero trunk, v = 1, adv = [1, 2, 3] -> q = v + adv - mean(adv)
        p = zero_params()
        p.bv[:] = 1.0
        p.ba[:] = [1.0, 2.0, 3.0]
        q, v, adv = forward(p, np.array([0.3, -0.7]))
        assert v == 1.0
        assert np.allclose(adv, [1.0, 2.0, 3.0])
        assert np.allclose(q, [0.0, 1.0, 2.0])

    def test_zero_net_is_zero(self):
        p = zero_params()
        q, v, adv = forward(p, np.array([5.0, -2.0]))
        assert np.all(q == 0.0) and v == 0.0

    def test_mean_q_equals_v(self):
        p = init_params(8, 5, hidden=(16, 16), seed=3)
        rng = np.random.default_rng(4)
        s = rng.normal(size=(1000, 8))
        q, v, adv = forward(p, s)
        assert np.max(np.abs(q.mean(axis=1) - v)) < 1e-6

    def test_batch_matches_single(self):
        p = init_params(6, 4, seed=5)
        rng = np.random.default_rng(6)
        s = rng.normal(size=(7, 6))
        qb, vb, _ = forward(p, s)
        for i in range(7):
            qi, vi, _ = forward(p, s[i])
            assert np.allclose(qb[i], qi)
            assert vb[i] == pytest.approx(vi)

    def test_input_dim_mismatch(self):
        p = init_params(6, 4, seed=5)
        with pytest.raises(CheckpointError):
            forward(p, np.zeros(5))


class TestLoss:
    def test_exact_fit_zero_loss_zero_grads(self):
        p = zero_params()
        s = np.zeros((4, 2))
        a = np.array([0, 1, 2, 0])
        y = np.zeros(4)
        loss, g = loss_and_gradients(p, s, a, y)
        assert loss == 0.0
        assert global_norm(g) == 0.0

    def test_single_row_error_two(self):
        p = zero_params()
        loss, _ = loss_and_gradients(p, np.zeros((1, 2)), np.array([1]),
                                     np.array([-2.0]))
        assert loss == 4.0

    def test_empty_batch_rejected(self):
        p = zero_params()
        with pytest.raises(ValueError):
            loss_and_gradients(p, np.zeros((0, 2)), np.array([]), np.array([]))

    def test_gradients_match_finite_differences(self):
        # pick a seed whose preactivations stay clear of the ReLU kink
        eps = 1e-5
        for seed in range(20):
            p = init_params(3, 3, hidden=(4, 4), seed=seed)
            rng = np.random.default_rng(100 + seed)
            s = rng.normal(size=(5, 3))
            z1 = s @ p.w1 + p.b1
            h1 = np.maximum(z1, 0.0)
            z2 = h1 @ p.w2 + p.b2
            if min(np.abs(z1).min(), np.abs(z2).min()) > 1e-3:
                break
        else:
            pytest.fail("no kink-free configuration found")
        a = rng.integers(0, 3, size=5)
        y = rng.normal(size=5)
        _, grads = loss_and_gradients(p, s, a, y)
        worst = 0.0
        for name, arr in p.arrays():
            g = getattr(grads, name)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + eps
                lp, _ = loss_and_gradients(p, s, a, y)
                arr[idx] = orig - eps
                lm, _ = loss_and_gradients(p, s, a, y)
                arr[idx] = orig
                fd = (lp - lm) / (2 * eps)
                denom = max(abs(fd), abs(g[idx]), 1e-8)
                worst = max(worst, abs(fd - g[idx]) / denom)
        assert worst < 1e-4


class TestOptimizer:
    def test_zero_grads_noop_from_fresh_state(self):
        p = init_params(4, 3, seed=1)
        opt = OptimizerState.for_params(p)
        g = NetworkParams(**{n: np.zeros_like(a) for n, a in p.arrays()})
        p2 = apply_update(p, opt, g)
        for n, a in p.arrays():
            assert np.array_equal(getattr(p2, n), a)

    def test_clip_scales_to_limit(self):
        p = zero_params(4, (4, 4), 3)
        g = NetworkParams(**{n: np.zeros_like(a) for n, a in p.arrays()})
        g.w1[0, 0] = 7.0
        assert global_norm(g) == pytest.approx(7.0)
        clipped = clip_by_global_norm(g, 0.7)
        assert global_norm(clipped) == pytest.approx(0.7)
        below = clip_by_global_norm(clipped, 0.7)
        assert below is clipped  # under the limit passes through untouched

    def test_update_determinism(self):
        def run():
            p = init_params(4, 3, seed=2)
            opt = OptimizerState.for_params(p)
            rng = np.random.default_rng(3)
            for _ in range(5):
                s = rng.normal(size=(6, 4))
                a = rng.integers(0, 3, size=6)
                y = rng.normal(size=6)
                _, g = loss_and_gradients(p, s, a, y)
                p = apply_update(p, opt, g)
            return p
        p1, p2 = run(), run()
        for n, a in p1.arrays():
            assert np.array_equal(getattr(p2, n), a)

    def test_nonfinite_gradients_raise(self):
        p = init_params(4, 3, seed=1)
        opt = OptimizerState.for_params(p)
        g = NetworkParams(**{n: np.zeros_like(a) for n, a in p.arrays()})
        g.w2[0, 0] = math.nan
        with pytest.raises(TrainingDiverged):
            apply_update(p, opt, g)

    def test_training_reduces_loss(self):
        p = init_params(4, 3, seed=7)
        opt = OptimizerState.for_params(p, learning_rate=1e-2)
        rng = np.random.default_rng(8)
        s = rng.normal(size=(32, 4))
        a = rng.integers(0, 3, size=32)
        y = rng.normal(size=32)
        first, _ = loss_and_gradients(p, s, a, y)
        for _ in range(200):
            _, g = loss_and_gradients(p, s, a, y)
            p = apply_update(p, opt, g)
        last, _ = loss_and_gradients(p, s, a, y)
        assert last < 0.1 * first


class TestSoftUpdate:
    def test_identity_when_equal(self):
        p = init_params(4, 3, seed=1)
        out = soft_update(p, p, 0.01)
        for n, a in p.arrays():
            assert np.allclose(getattr(out, n), a)

    def test_rate_one_copies_local(self):
        t = init_params(4, 3, seed=1)
        l = init_params(4, 3, seed=2)
        out = soft_update(t, l, 1.0)
        for n, a in l.arrays():
            assert np.array_equal(getattr(out, n), a)

    def test_scalar_case(self):
        t = zero_params()
        l = zero_params()
        l.bv[:] = 1.0
        out = soft_update(t, l, 0.01)
        assert out.bv[0] == pytest.approx(0.01)

    def test_shape_mismatch(self):
        t = init_params(4, 3, seed=1)
        l = init_params(4, 5, seed=1)
        with pytest.raises(CheckpointError):
            soft_update(t, l, 0.01)


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path):
        p = init_params(32, 11, seed=9)
        opt = OptimizerState.for_params(p)
        rng = np.random.default_rng(10)
        for _ in range(3):
            s = rng.normal(size=(8, 32))
            a = rng.integers(0, 11, size=8)
            y = rng.normal(size=8)
            _, g = loss_and_gradients(p, s, a, y)
            p = apply_update(p, opt, g)
        path = str(tmp_path / "net.json")
        save_checkpoint(path, p, opt, metadata={"seed": 9, "config_hash": "abc123"})
        p2, opt2, meta = load_checkpoint(path)
        for n, a in p.arrays():
            assert np.array_equal(getattr(p2, n), a)
        assert opt2.step == opt.step
        for n in opt.m:
            assert np.array_equal(opt2.m[n], opt.m[n])
            assert np.array_equal(opt2.v[n], opt.v[n])
        assert meta["seed"] == 9

    def test_shape_tamper_rejected(self, tmp_path):
        p = init_params(8, 3, seed=1)
        path = str(tmp_path / "net.json")
        save_checkpoint(path, p)
        doc = json.loads(open(path).read())
        doc["params"]["w2"]["shape"] = [64, 63]
        open(path, "w").write(json.dumps(doc))
        with pytest.raises(CheckpointError) as ei:
            load_checkpoint(path)
        assert "w2" in str(ei.value)

    def test_missing_field_rejected(self, tmp_path):
        p = init_params(8, 3, seed=1)
        path = str(tmp_path / "net.json")
        save_checkpoint(path, p)
        doc = json.loads(open(path).read())
        del doc["params"]["ba"]
        open(path, "w").write(json.dumps(doc))
        with pytest.raises(CheckpointError) as ei:
            load_checkpoint(path)
        assert "ba" in str(ei.value)

    def test_corrupt_json_rejected(self, tmp_path):
        path = str(tmp_path / "net.json")
        open(path, "w").write("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_hash_mismatch_warns_but_loads(self, tmp_path):
        p = init_params(8, 3, seed=1)
        path = str(tmp_path / "net.json")
        save_checkpoint(path, p, metadata={"config_hash": "aaa"})
        with pytest.warns(UserWarning):
            p2, _, _ = load_checkpoint(path, expect_config_hash="bbb")
        assert np.array_equal(p2.w1, p.w1)
