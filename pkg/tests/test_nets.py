import numpy as np
import pytest

from uwbnav.nets import (
    ActorNet, AdamState, ArchitectureMismatchError, Mlp, NetFormatError,
    TwoBranchCritic, adam_step, copy_params, init_mlp, load_net, params_digest,
    save_net,
)
from helpers import finite_difference_grads, relative_error


def zero_mlp(dims, acts):
    ws = [np.zeros((a, b)) for a, b in zip(dims, dims[1:])]
    bs = [np.zeros(b) for b in dims[1:]]
    return Mlp(ws, bs, list(acts))


class TestForward:
    def test_zero_weights_sigmoid(self):
        net = zero_mlp((3, 1), ["sigmoid"])
        assert net.forward(np.ones(3)) == pytest.approx(0.5)

    def test_zero_weights_tanh(self):
        net = zero_mlp((3, 1), ["tanh"])
        assert net.forward(np.ones(3)) == pytest.approx(0.0)

    def test_identity_linear_layer(self):
        net = Mlp([np.eye(4)], [np.zeros(4)], ["linear"])
        x = np.array([1.0, -2.0, 3.0, 0.5])
        assert np.allclose(net.forward(x), x)

    def test_dimension_mismatch_rejected(self):
        net = zero_mlp((3, 2), ["relu"])
        with pytest.raises(ValueError):
            net.forward(np.ones(4))

    def test_forward_is_pure(self):
        net = init_mlp((5, 8, 2), ["relu", "linear"], 0)
        x = np.random.default_rng(1).normal(size=5)
        a = net.forward(x)
        b = net.forward(x)
        assert np.array_equal(a, b)

    def test_batch_and_single_agree(self):
        net = init_mlp((5, 8, 2), ["relu", "tanh"], 0)
        xs = np.random.default_rng(2).normal(size=(7, 5))
        batch = net.forward(xs)
        for i in range(7):
            assert np.allclose(batch[i], net.forward(xs[i]))


class TestBackward:
    def test_hand_chain_rule_1x1(self):
        net = Mlp([np.array([[3.0]])], [np.zeros(1)], ["linear"])
        y, cache = net.forward_cached(np.array([2.0]))
        assert y == pytest.approx(6.0)
        grads, gin = net.backward(cache, np.array([1.0]))
        assert grads[0] == pytest.approx(2.0)   # dW = x
        assert grads[1] == pytest.approx(1.0)   # db
        assert gin == pytest.approx(3.0)        # dx = w

    def test_relu_blocks_negative_preactivation(self):
        net = Mlp([np.array([[1.0]])], [np.array([-5.0])], ["relu"])
        y, cache = net.forward_cached(np.array([2.0]))
        assert y == 0.0
        grads, gin = net.backward(cache, np.array([1.0]))
        assert grads[0] == 0.0
        assert gin == 0.0

    def test_gradcheck_small_net(self):
        rng = np.random.default_rng(42)
        net = init_mlp((62, 8, 2), ["relu", "tanh"], rng)
        x = rng.normal(size=62)
        gout = rng.normal(size=2)
        _, cache = net.forward_cached(x)
        grads, gin = net.backward(cache, gout)

        def objective():
            return float(net.forward(x) @ gout)

        fd = finite_difference_grads(net.params(), objective)
        for g, f in zip(grads, fd):
            assert relative_error(g, f) < 1e-4

        xs = [x]

        def obj_input():
            return float(net.forward(xs[0]) @ gout)

        fd_in = finite_difference_grads([xs[0]], obj_input)[0]
        assert relative_error(gin, fd_in) < 1e-4

    def test_stale_cache_detected(self):
        net = init_mlp((3, 2), ["linear"], 0)
        with pytest.raises(ValueError):
            net.backward((None, False), np.ones(2))


class TestActorCritic:
    def test_actor_output_bounds(self):
        # strictly inside the open intervals for in-distribution inputs;
        # closed at the boundary only where float64 saturates
        actor = ActorNet.build(0)
        rng = np.random.default_rng(3)
        for scale in (0.1, 1.0):
            out = actor.forward(rng.normal(size=(50, 62)) * scale)
            assert np.all(out[:, 0] > 0) and np.all(out[:, 0] < 1)
            assert np.all(out[:, 1] > -1) and np.all(out[:, 1] < 1)
        out = actor.forward(rng.normal(size=(50, 62)) * 1e4)
        assert np.all(out[:, 0] >= 0) and np.all(out[:, 0] <= 1)
        assert np.all(out[:, 1] >= -1) and np.all(out[:, 1] <= 1)
        assert np.all(np.isfinite(out))

    def test_zero_actor_outputs_center(self):
        actor = ActorNet(zero_mlp((62, 8), ["relu"]),
                         zero_mlp((8, 1), ["sigmoid"]),
                         zero_mlp((8, 1), ["tanh"]))
        out = actor.forward(np.ones(62))
        assert out[0] == pytest.approx(0.5)
        assert out[1] == pytest.approx(0.0)

    def test_actor_gradcheck_small(self):
        rng = np.random.default_rng(7)
        actor = ActorNet(init_mlp((6, 8, 5), ["relu", "relu"], rng),
                         init_mlp((5, 1), ["sigmoid"], rng),
                         init_mlp((5, 1), ["tanh"], rng))
        x = rng.normal(size=(3, 6))
        gout = rng.normal(size=(3, 2))
        _, cache = actor.forward_cached(x)
        grads, _ = actor.backward(cache, gout)

        def objective():
            return float(np.sum(actor.forward(x) * gout))

        fd = finite_difference_grads(actor.params(), objective)
        for g, f in zip(grads, fd):
            assert relative_error(g, f) < 1e-4

    def test_critic_gradcheck_small_with_inputs(self):
        rng = np.random.default_rng(9)
        critic = TwoBranchCritic(init_mlp((6, 7), ["relu"], rng),
                                 init_mlp((2, 3), ["relu"], rng),
                                 init_mlp((10, 8, 1), ["relu", "linear"], rng))
        s = rng.normal(size=(4, 6))
        a = rng.normal(size=(4, 2))
        gq = rng.normal(size=4)
        _, cache = critic.forward_cached(s, a)
        grads, (gs, ga) = critic.backward(cache, gq)

        def objective():
            return float(critic.forward(s, a) @ gq)

        fd = finite_difference_grads(critic.params(), objective)
        for g, f in zip(grads, fd):
            assert relative_error(g, f) < 1e-4
        fd_s = finite_difference_grads([s], objective)[0]
        fd_a = finite_difference_grads([a], objective)[0]
        assert relative_error(gs, fd_s) < 1e-4
        assert relative_error(ga, fd_a) < 1e-4

    def test_action_gradient_nonzero(self):
        critic = TwoBranchCritic.build(11)
        rng = np.random.default_rng(12)
        s = rng.normal(size=(5, 62))
        a = rng.uniform(-1, 1, size=(5, 2))
        _, cache = critic.forward_cached(s, a)
        _, (gs, ga) = critic.backward(cache, np.ones(5))
        assert np.abs(ga).max() > 0
        assert np.abs(gs).max() > 0

    def test_full_size_shapes(self):
        actor = ActorNet.build(5)
        critic = TwoBranchCritic.build(6)
        assert actor.trunk.dims == (62, 512, 256, 256)
        assert critic.state_branch.dims == (62, 256)
        assert critic.action_branch.dims == (2, 64)
        assert critic.trunk.dims == (320, 256, 128, 1)
        assert critic.trunk.acts[-1] == "linear"


class TestAdam:
    def test_zero_grad_no_change(self):
        p = [np.array([1.0, 2.0])]
        st = AdamState(p)
        adam_step(p, [np.zeros(2)], st, 0.00025)
        assert np.allclose(p[0], [1.0, 2.0])

    def test_first_step_magnitude(self):
        # step 1 with bias correction: delta = -lr * g / (|g| + eps) ~ -lr * sign(g)
        p = [np.array([0.0])]
        st = AdamState(p)
        adam_step(p, [np.array([0.5])], st, 0.00025)
        assert p[0][0] == pytest.approx(-0.00025, rel=1e-5)

    def test_moment_accumulation_shrinks_steps(self):
        # grads are consumed as scratch, so pass a fresh array per call
        p = [np.array([0.0])]
        st = AdamState(p)
        adam_step(p, [np.array([0.5])], st, 0.00025)
        d1 = abs(p[0][0])
        before = p[0][0]
        adam_step(p, [np.array([0.5])], st, 0.00025)
        d2 = abs(p[0][0] - before)
        assert d2 <= d1 + 1e-9

    def test_shape_mismatch_rejected(self):
        p = [np.zeros(3)]
        st = AdamState(p)
        with pytest.raises(ValueError):
            adam_step(p, [np.zeros(4)], st, 0.1)


class TestInit:
    def test_deterministic_for_seed(self):
        a = init_mlp((62, 512, 1), ["relu", "linear"], 123)
        b = init_mlp((62, 512, 1), ["relu", "linear"], 123)
        assert params_digest(a) == params_digest(b)

    def test_he_bound_for_relu(self):
        net = init_mlp((256, 64), ["relu"], 0)
        bound = np.sqrt(6.0 / 256)
        assert np.all(np.abs(net.weights[0]) <= bound)
        assert np.abs(net.weights[0]).max() > 0.8 * bound  # actually fills the range

    def test_xavier_bound_for_tanh(self):
        net = init_mlp((256, 64), ["tanh"], 0)
        bound = np.sqrt(6.0 / (256 + 64))
        assert np.all(np.abs(net.weights[0]) <= bound)

    def test_biases_zero(self):
        net = init_mlp((10, 20, 3), ["relu", "linear"], 5)
        for b in net.biases:
            assert np.all(b == 0.0)


class TestSerialization:
    def test_round_trip_identical_outputs(self, tmp_path):
        rng = np.random.default_rng(31)
        for net in (init_mlp((5, 8, 2), ["relu", "tanh"], rng),
                    ActorNet.build(rng), TwoBranchCritic.build(rng)):
            path = tmp_path / "net.bin"
            save_net(net, path)
            loaded = load_net(path)
            assert params_digest(net) == params_digest(loaded)
            if isinstance(net, TwoBranchCritic):
                s = rng.normal(size=(10, 62))
                a = rng.normal(size=(10, 2))
                assert np.array_equal(net.forward(s, a), loaded.forward(s, a))
            else:
                x = rng.normal(size=(100, net.input_dim))
                assert np.array_equal(net.forward(x), loaded.forward(x))

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "net.bin"
        save_net(init_mlp((5, 3), ["linear"], 0), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(NetFormatError):
            load_net(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "net.bin"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(NetFormatError):
            load_net(path)

    def test_kind_mismatch_rejected(self, tmp_path):
        path = tmp_path / "net.bin"
        save_net(ActorNet.build(0), path)
        with pytest.raises(ArchitectureMismatchError):
            load_net(path, expect="critic")

    def test_float32_round_trip(self, tmp_path):
        net = ActorNet.build(2).astype(np.float32)
        path = tmp_path / "net32.bin"
        save_net(net, path)
        loaded = load_net(path)
        assert loaded.trunk.weights[0].dtype == np.float32
        x = np.random.default_rng(0).normal(size=62).astype(np.float32)
        assert np.array_equal(net.forward(x), loaded.forward(x))


class TestCopyParams:
    def test_copy_and_digest(self):
        a = ActorNet.build(1)
        b = ActorNet.build(2)
        assert params_digest(a) != params_digest(b)
        copy_params(a, b)
        assert params_digest(a) == params_digest(b)
        # copies, not aliases
        a.trunk.weights[0][0, 0] += 1.0
        assert params_digest(a) != params_digest(b)

    def test_shape_mismatch_rejected(self):
        a = init_mlp((3, 2), ["linear"], 0)
        b = init_mlp((3, 4), ["linear"], 0)
        with pytest.raises(ArchitectureMismatchError):
            copy_params(a, b)
