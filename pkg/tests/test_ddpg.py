import numpy as np
import pytest

from uwbnav.ddpg import (
    AgentNets, Batch, DdpgConfig, EpisodeRecord, ReplayBuffer, TrainingLog,
    Transition, actor_update, compute_reward, critic_target, critic_update,
    epsilon, hard_update_targets, select_action, train,
)
from uwbnav.nets import (
    ActorNet, AdamState, Mlp, TwoBranchCritic, init_mlp, params_digest,
)
from uwbnav.scenario import load_bundled_scenario
from helpers import finite_difference_grads, relative_error

CFG = DdpgConfig()


def make_transition(rng, done=False, reason="running"):
    return Transition(rng.normal(size=62), rng.uniform(-1, 1, 2),
                      float(rng.normal()), rng.normal(size=62), done, reason)


def zero_mlp(dims, acts):
    return Mlp([np.zeros((a, b)) for a, b in zip(dims, dims[1:])],
               [np.zeros(b) for b in dims[1:]], list(acts))


class TestEpsilon:
    def test_schedule_values(self):
        assert epsilon(0, CFG) == 1.0
        assert epsilon(1, CFG) == pytest.approx(0.998)
        # 0.998**2000 ~ 0.0183 < eps_min
        assert epsilon(2000, CFG) == 0.05

    def test_monotone_and_bounded(self):
        values = [epsilon(e, CFG) for e in range(0, 4000, 7)]
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert all(CFG.eps_min <= v <= CFG.eps0 for v in values)

    def test_negative_episode_rejected(self):
        with pytest.raises(ValueError):
            epsilon(-1, CFG)


class TestSelectAction:
    def test_eps_zero_returns_actor_output(self):
        actor = ActorNet(zero_mlp((62, 8), ["relu"]), zero_mlp((8, 1), ["sigmoid"]),
                         zero_mlp((8, 1), ["tanh"]))
        a = select_action(actor, np.zeros(62), 0.0, np.random.default_rng(0))
        assert a[0] == pytest.approx(0.5)
        assert a[1] == pytest.approx(0.0)

    def test_eps_one_uniform_marginals(self):
        # chi-square over 10 bins per axis, 1e4 draws
        actor = ActorNet.build(0)
        rng = np.random.default_rng(1)
        draws = np.array([select_action(actor, np.zeros(62), 1.0, rng)
                          for _ in range(10_000)])
        assert draws[:, 0].min() >= 0 and draws[:, 0].max() <= 1
        assert draws[:, 1].min() >= -1 and draws[:, 1].max() <= 1
        for axis, lo, hi in ((0, 0.0, 1.0), (1, -1.0, 1.0)):
            counts, _ = np.histogram(draws[:, axis], bins=10, range=(lo, hi))
            expected = len(draws) / 10
            chi2 = float(np.sum((counts - expected) ** 2 / expected))
            # 9 dof: p=0.001 critical value is 27.88
            assert chi2 < 27.88

    def test_mixing_probability(self):
        actor = ActorNet.build(0)
        rng = np.random.default_rng(2)
        obs = np.zeros(62)
        deterministic = actor.forward(obs)
        hits = sum(np.array_equal(select_action(actor, obs, 0.3, rng), deterministic)
                   for _ in range(2000))
        assert 0.62 < hits / 2000 < 0.78


class TestComputeReward:
    def test_goal_and_collision_values(self):
        assert compute_reward(1.0, 0.5, 0.3, 0.1, "goal", CFG) == 1000.0
        assert compute_reward(1.0, 0.5, 0.3, 0.1, "collision", CFG) == -200.0

    def test_shaping_value(self):
        # h_R = 1 at omega_prev=0, heading=0; 3 * 1 * 10 * 0.01 = 0.3
        r = compute_reward(1.0, 0.99, 0.0, 0.0, "running", CFG)
        assert r == pytest.approx(0.3)

    def test_heading_one_radian_zeroes_reward(self):
        # h_R = -(0 - 1)^2 + 1 = 0
        for dd in (0.05, -0.05, 0.3):
            assert compute_reward(1.0, 1.0 - dd, 1.0, 0.0, "running", CFG) \
                == pytest.approx(0.0)

    def test_terminal_ignores_shaping_inputs(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            args = (rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(-3, 3),
                    rng.uniform(-1, 1))
            assert compute_reward(*args, "goal", CFG) == 1000.0
            assert compute_reward(*args, "collision", CFG) == -200.0

    def test_abs_mode_sign_follows_heading(self):
        # default: |delta d| scaled by the heading factor, so movement while
        # pointing away (h_R < 0) is punished even though distance grows
        approach = compute_reward(1.0, 0.9, 0.0, 0.0, "running", CFG)
        flee_pointing_away = compute_reward(0.9, 1.0, 3.0, 0.0, "running", CFG)
        assert approach == pytest.approx(3.0)
        assert flee_pointing_away < 0

    def test_signed_mode(self):
        cfg = DdpgConfig(delta_d_mode="signed")
        approach = compute_reward(1.0, 0.9, 0.0, 0.0, "running", cfg)
        retreat = compute_reward(0.9, 1.0, 0.0, 0.0, "running", cfg)
        assert approach > 0 > retreat

    def test_heading_reward_uses_control_frequency(self):
        # omega/(1.2*f) with f = 1/0.33: omega=1.2*f makes the term 1
        omega = 1.2 * CFG.control_freq
        r = compute_reward(1.0, 1.0, 0.0, omega, "running", CFG)
        assert r == pytest.approx(0.0)  # h_R = 1 - 1 = 0... with dd=0 anyway
        r2 = compute_reward(1.0, 0.9, 1.0, omega, "running", CFG)
        assert r2 == pytest.approx(3.0)  # h_R = -(1-1)^2+1 = 1, dd=0.1


class TestReplayBuffer:
    def test_capacity_and_eviction(self):
        buf = ReplayBuffer(capacity=100)
        rng = np.random.default_rng(4)
        markers = []
        for i in range(130):
            tr = make_transition(rng)
            tr.r = float(i)
            markers.append(i)
            buf.push(tr)
        assert len(buf) == 100
        stored = {buf.get(i).r for i in range(len(buf))}
        assert stored == set(float(i) for i in range(30, 130))

    def test_sample_without_replacement(self):
        buf = ReplayBuffer(capacity=64)
        rng = np.random.default_rng(5)
        for _ in range(64):
            buf.push(make_transition(rng))
        batch = buf.sample(64, rng)
        # sampling the whole buffer must touch every row exactly once
        assert batch.s.shape == (64, 62)
        rows = {tuple(row) for row in batch.s}
        assert len(rows) == 64

    def test_sample_too_large_rejected(self):
        buf = ReplayBuffer(capacity=10)
        buf.push(make_transition(np.random.default_rng(6)))
        with pytest.raises(ValueError):
            buf.sample(2, np.random.default_rng(0))

    def test_sampling_uniformity(self):
        buf = ReplayBuffer(capacity=50)
        rng = np.random.default_rng(7)
        for i in range(50):
            tr = make_transition(rng)
            tr.r = float(i)
            buf.push(tr)
        counts = np.zeros(50)
        for _ in range(2000):
            batch = buf.sample(10, rng)
            for r in batch.r:
                counts[int(r)] += 1
        expected = 2000 * 10 / 50
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        # 49 dof, p=0.001 critical value ~ 85.4
        assert chi2 < 85.4


class TestCriticTarget:
    def test_terminal_no_bootstrap(self):
        agent = AgentNets.build(0)
        batch = Batch(np.zeros((1, 62)), np.zeros((1, 2)), np.array([-200.0]),
                      np.zeros((1, 62)), np.array([True]))
        y = critic_target(batch, agent.target_actor, agent.target_critic, 0.99)
        assert y[0] == -200.0

    def test_zero_nets_pass_reward_through(self):
        actor = ActorNet(zero_mlp((62, 8), ["relu"]), zero_mlp((8, 1), ["sigmoid"]),
                         zero_mlp((8, 1), ["tanh"]))
        critic = TwoBranchCritic(zero_mlp((62, 4), ["relu"]),
                                 zero_mlp((2, 4), ["relu"]),
                                 zero_mlp((8, 1), ["linear"]))
        batch = Batch(np.zeros((1, 62)), np.zeros((1, 2)), np.array([0.3]),
                      np.zeros((1, 62)), np.array([False]))
        y = critic_target(batch, actor, critic, 0.99)
        assert y[0] == pytest.approx(0.3)

    def test_constant_q_arithmetic(self):
        actor = ActorNet(zero_mlp((62, 8), ["relu"]), zero_mlp((8, 1), ["sigmoid"]),
                         zero_mlp((8, 1), ["tanh"]))
        critic = TwoBranchCritic(zero_mlp((62, 4), ["relu"]),
                                 zero_mlp((2, 4), ["relu"]),
                                 Mlp([np.zeros((8, 1))], [np.array([10.0])],
                                     ["linear"]))
        batch = Batch(np.zeros((1, 62)), np.zeros((1, 2)), np.array([0.3]),
                      np.zeros((1, 62)), np.array([False]))
        y = critic_target(batch, actor, critic, 0.99)
        assert y[0] == pytest.approx(0.3 + 0.99 * 10.0)


class TestCriticUpdate:
    def test_perfect_targets_leave_params(self):
        critic = TwoBranchCritic.build(1)
        rng = np.random.default_rng(8)
        batch = Batch(rng.normal(size=(16, 62)), rng.uniform(-1, 1, (16, 2)),
                      np.zeros(16), rng.normal(size=(16, 62)),
                      np.zeros(16, dtype=bool))
        y = critic.forward(batch.s, batch.a)
        digest = params_digest(critic)
        loss = critic_update(critic, AdamState(critic.params()), batch, y, 0.00025)
        assert loss == 0.0
        assert params_digest(critic) == digest

    def test_gradient_matches_hand_derivative(self):
        # 1-parameter critic: Q = theta * a, loss = (Q - y)^2
        class TinyCritic:
            def __init__(self):
                self.theta = np.array([[2.0]])

            def params(self):
                return [self.theta]

            def forward_cached(self, s, a, keep_cache=True):
                return (a @ self.theta.T)[:, 0], a

            def backward(self, cache, gq):
                a = cache
                grads = [gq.reshape(1, -1) @ a]
                return grads, (None, gq[:, None] * self.theta[0])

        critic = TinyCritic()
        batch = Batch(np.zeros((1, 1)), np.array([[3.0]]), np.zeros(1),
                      np.zeros((1, 1)), np.zeros(1, dtype=bool))
        y = np.array([1.0])
        # Q = 6, dLoss/dtheta = 2*(Q - y)*a = 2*5*3 = 30
        state = AdamState(critic.params())
        loss = critic_update(critic, state, batch, y, 0.0)
        assert loss == pytest.approx(25.0)
        assert state.m[0][0, 0] == pytest.approx(0.1 * 30.0)  # (1-beta1)*g

    def test_loss_decreases_on_fixed_batch(self):
        critic = TwoBranchCritic.build(2)
        rng = np.random.default_rng(9)
        batch = Batch(rng.normal(size=(32, 62)), rng.uniform(-1, 1, (32, 2)),
                      np.zeros(32), rng.normal(size=(32, 62)),
                      np.zeros(32, dtype=bool))
        y = rng.normal(size=32)
        adam = AdamState(critic.params())
        # small enough lr that 100 steps stay in the descent regime
        losses = [critic_update(critic, adam, batch, y, 3e-5) for _ in range(100)]
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))
        assert losses[-1] < 0.05 * losses[0]


class TestActorUpdate:
    def test_action_blind_critic_leaves_actor(self):
        actor = ActorNet.build(3)
        critic = TwoBranchCritic(init_mlp((62, 4), ["relu"], 0),
                                 zero_mlp((2, 4), ["relu"]),
                                 init_mlp((8, 1), ["linear"], 1))
        digest = params_digest(actor)
        states = np.random.default_rng(10).normal(size=(8, 62))
        actor_update(actor, critic, AdamState(actor.params()), states, 0.00025)
        assert params_digest(actor) == digest

    def test_quadratic_critic_pulls_action_toward_optimum(self):
        # Q(s, a) = -(a_v - 0.7)^2: ascent must move the v head toward 0.7
        class QuadCritic:
            def forward_cached(self, s, a, keep_cache=True):
                return -(a[:, 0] - 0.7) ** 2, a

            def backward(self, cache, gq):
                a = cache
                ga = np.zeros_like(a)
                ga[:, 0] = gq * (-2.0) * (a[:, 0] - 0.7)
                return [], (None, ga)

        actor = ActorNet(zero_mlp((62, 8), ["relu"]), zero_mlp((8, 1), ["sigmoid"]),
                         zero_mlp((8, 1), ["tanh"]))
        states = np.zeros((4, 62))
        before = actor.forward(states)[0, 0]
        assert before == pytest.approx(0.5)
        adam = AdamState(actor.params())
        for _ in range(200):
            actor_update(actor, QuadCritic(), adam, states, 0.01)
        after = actor.forward(states)[0, 0]
        assert 0.5 < after <= 0.7 + 1e-6
        assert abs(after - 0.7) < abs(before - 0.7)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        actor = ActorNet(init_mlp((6, 8, 5), ["relu", "relu"], rng),
                         init_mlp((5, 1), ["sigmoid"], rng),
                         init_mlp((5, 1), ["tanh"], rng))
        critic = TwoBranchCritic(init_mlp((6, 7), ["relu"], rng),
                                 init_mlp((2, 3), ["relu"], rng),
                                 init_mlp((10, 8, 1), ["relu", "linear"], rng))
        states = rng.normal(size=(5, 6))

        a, acache = actor.forward_cached(states)
        q, ccache = critic.forward_cached(states, a)
        gq = np.full(q.shape, -1.0 / q.shape[0])
        _, (_, ga) = critic.backward(ccache, gq)
        agrads, _ = actor.backward(acache, ga)

        def objective():
            # negated mean Q, the quantity actor_update descends on
            return -float(np.mean(critic.forward(states, actor.forward(states))))

        fd = finite_difference_grads(actor.params(), objective)
        for g, f in zip(agrads, fd):
            assert relative_error(g, f) < 1e-4

    def test_critic_untouched(self):
        actor = ActorNet.build(4)
        critic = TwoBranchCritic.build(5)
        digest = params_digest(critic)
        states = np.random.default_rng(12).normal(size=(8, 62))
        actor_update(actor, critic, AdamState(actor.params()), states, 0.00025)
        assert params_digest(critic) == digest


class TestHardUpdateTargets:
    def test_sync_schedule(self):
        agent = AgentNets.build(6)
        agent.actor.trunk.weights[0][0, 0] += 0.5
        hard_update_targets(agent, 1999, CFG)
        assert params_digest(agent.target_actor) != params_digest(agent.actor)
        hard_update_targets(agent, 2000, CFG)
        assert params_digest(agent.target_actor) == params_digest(agent.actor)
        assert params_digest(agent.target_critic) == params_digest(agent.critic)

    def test_initial_copy_at_step_zero(self):
        agent = AgentNets.build(7)
        agent.critic.trunk.biases[-1][0] = 3.0
        hard_update_targets(agent, 0, CFG)
        assert params_digest(agent.target_critic) == params_digest(agent.critic)

    def test_targets_stable_between_syncs(self):
        agent = AgentNets.build(8)
        before = params_digest(agent.target_actor)
        for step in range(1, 1999, 13):
            hard_update_targets(agent, step, CFG)
        assert params_digest(agent.target_actor) == before


class TestConfigValidation:
    def test_batch_exceeding_capacity(self):
        cfg = DdpgConfig(batch_size=128, buffer_capacity=64)
        with pytest.raises(ValueError):
            cfg.validate()

    def test_bad_gamma(self):
        with pytest.raises(ValueError):
            DdpgConfig(gamma=0.0).validate()

    def test_bad_eps_ordering(self):
        with pytest.raises(ValueError):
            DdpgConfig(eps_min=0.5, eps0=0.1).validate()

    def test_train_surfaces_config_error(self):
        scen = load_bundled_scenario("train_arena").spec
        with pytest.raises(ValueError):
            train(scen, DdpgConfig(batch_size=128, buffer_capacity=64), seed=0,
                  episodes=1)


class TestTrainingLog:
    def test_round_trip(self, tmp_path):
        log = TrainingLog()
        log.append(EpisodeRecord(0, 12, -200.0, "collision", 1.0, 0.5, -3.0))
        log.append(EpisodeRecord(1, 40, 1003.4, "goal", 0.998, 0.2, 5.5))
        path = tmp_path / "log.jsonl"
        log.write(path)
        back = TrainingLog.read(path)
        assert back.records == log.records

    def test_success_rate_window(self):
        log = TrainingLog()
        for i in range(10):
            outcome = "goal" if i >= 5 else "timeout"
            log.append(EpisodeRecord(i, 1, 0.0, outcome, 0.5, 0.0, 0.0))
        assert log.success_rate(10) == 0.5
        assert log.success_rate(5) == 1.0


class TestTrainSmoke:
    def make_cfg(self):
        return DdpgConfig(warmup_transitions=64, episode_timeout=15.0)

    def test_deterministic_for_seed(self):
        scen = load_bundled_scenario("train_arena").spec
        actor1, log1 = train(scen, self.make_cfg(), seed=77, episodes=2)
        actor2, log2 = train(scen, self.make_cfg(), seed=77, episodes=2)
        assert log1.to_lines() == log2.to_lines()
        assert params_digest(actor1) == params_digest(actor2)

    def test_different_seed_differs(self):
        scen = load_bundled_scenario("train_arena").spec
        _, log1 = train(scen, self.make_cfg(), seed=1, episodes=2)
        _, log2 = train(scen, self.make_cfg(), seed=2, episodes=2)
        assert log1.to_lines() != log2.to_lines()

    def test_updates_happen_and_log_fields_populate(self):
        scen = load_bundled_scenario("train_arena").spec
        _, log = train(scen, self.make_cfg(), seed=3, episodes=3)
        assert len(log.records) == 3
        assert any(r.critic_loss != 0.0 for r in log.records)
        outcomes = {r.outcome for r in log.records}
        assert outcomes <= {"goal", "collision", "timeout"}
        assert [r.episode for r in log.records] == [0, 1, 2]
