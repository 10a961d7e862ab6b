"""DDPG training and inference for the point-to-point planner.

Replay buffer, epsilon-greedy exploration over the continuous action space,
reward shaping, critic/actor updates and hard target synchronization, plus
the episodic training loop against the 2D simulator.

Actions are normalized: (v_norm in [0, 1], w_norm in [-1, 1]); physical
commands are v_norm * v_max and w_norm * omega_max.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import nets
from .nets import ActorNet, TwoBranchCritic, AdamState, adam_step, copy_params
from .perception import PerceptionConfig, build_observation
from .simcore import (
    RobotState, ScenarioSpec, SimParams, advance_obstacles, run_control_step,
    sample_free_point, scan_lidar,
)

OUTCOME_RUNNING = "running"
OUTCOME_GOAL = "goal"
OUTCOME_COLLISION = "collision"
OUTCOME_TIMEOUT = "timeout"
_OUTCOME_CODES = {OUTCOME_RUNNING: 0, OUTCOME_GOAL: 1, OUTCOME_COLLISION: 2,
                  OUTCOME_TIMEOUT: 3}
_OUTCOME_NAMES = {v: k for k, v in _OUTCOME_CODES.items()}


@dataclass
class DdpgConfig:
    gamma: float = 0.99
    lr: float = 0.00025
    batch_size: int = 64
    target_update_steps: int = 2000
    eps0: float = 1.0
    eps_min: float = 0.05
    eps_decay: float = 0.998
    control_period: float = 0.33          # s; control frequency f = 1/0.33 Hz
    buffer_capacity: int = 1_000_000
    warmup_transitions: int = 1000
    episode_timeout: float = 250.0        # s of sim time per training episode
    reward_goal: float = 1000.0
    reward_collision: float = -200.0
    shaping_gain_outer: float = 3.0
    shaping_gain_dist: float = 10.0
    heading_divisor: float = 1.2
    delta_d_mode: str = "abs"             # "abs" or "signed"

    @property
    def control_freq(self) -> float:
        return 1.0 / self.control_period

    def validate(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not (0.0 <= self.eps_min <= self.eps0 <= 1.0):
            raise ValueError("need 0 <= eps_min <= eps0 <= 1")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size exceeds buffer capacity")
        if self.warmup_transitions > self.buffer_capacity:
            raise ValueError("warmup_transitions exceeds buffer capacity")
        if self.warmup_transitions < self.batch_size:
            raise ValueError("warmup_transitions must cover at least one batch")
        if self.delta_d_mode not in ("signed", "abs"):
            raise ValueError(f"unknown delta_d_mode {self.delta_d_mode!r}")
        if self.lr <= 0 or self.control_period <= 0 or self.episode_timeout <= 0:
            raise ValueError("lr, control_period, episode_timeout must be positive")


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool
    done_reason: str = OUTCOME_RUNNING


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray


class ReplayBuffer:
    """Bounded ring of transitions backed by numpy arrays.

    Storage grows in chunks up to capacity, then the oldest entries are
    overwritten. Batch sampling is uniform without replacement.
    """

    _CHUNK = 4096

    def __init__(self, capacity: int = 1_000_000, obs_dim: int = nets.OBS_DIM,
                 act_dim: int = nets.ACTION_DIM):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self._alloc = 0
        self._size = 0
        self._head = 0
        self._s = np.zeros((0, obs_dim))
        self._a = np.zeros((0, act_dim))
        self._r = np.zeros(0)
        self._sn = np.zeros((0, obs_dim))
        self._done = np.zeros(0, dtype=bool)
        self._reason = np.zeros(0, dtype=np.uint8)

    def __len__(self) -> int:
        return self._size

    def _grow(self, n: int) -> None:
        def bigger(arr, shape):
            out = np.zeros(shape, dtype=arr.dtype)
            out[:arr.shape[0]] = arr
            return out
        self._s = bigger(self._s, (n, self.obs_dim))
        self._a = bigger(self._a, (n, self.act_dim))
        self._r = bigger(self._r, n)
        self._sn = bigger(self._sn, (n, self.obs_dim))
        self._done = bigger(self._done, n)
        self._reason = bigger(self._reason, n)
        self._alloc = n

    def push(self, tr: Transition) -> None:
        if self._head >= self._alloc and self._alloc < self.capacity:
            self._grow(min(self.capacity, max(2 * self._alloc, self._CHUNK)))
        i = self._head
        self._s[i] = tr.s
        self._a[i] = tr.a
        self._r[i] = tr.r
        self._sn[i] = tr.s_next
        self._done[i] = tr.done
        self._reason[i] = _OUTCOME_CODES[tr.done_reason]
        self._head = (self._head + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def get(self, i: int) -> Transition:
        """i-th stored slot (test helper); slot order is insertion order only
        until the ring wraps."""
        if not (0 <= i < self._size):
            raise IndexError(i)
        return Transition(self._s[i].copy(), self._a[i].copy(), float(self._r[i]),
                          self._sn[i].copy(), bool(self._done[i]),
                          _OUTCOME_NAMES[int(self._reason[i])])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if batch_size > self._size:
            raise ValueError(f"cannot sample {batch_size} from {self._size} stored")
        idx = _floyd_sample(self._size, batch_size, rng)
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._sn[idx],
                     self._done[idx])


def _floyd_sample(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """k distinct indices from range(n) with exactly k rng draws."""
    chosen: set[int] = set()
    out = np.empty(k, dtype=np.int64)
    pos = 0
    for i in range(n - k, n):
        j = int(rng.integers(0, i + 1))
        if j in chosen:
            j = i
        chosen.add(j)
        out[pos] = j
        pos += 1
    return out


def epsilon(episode: int, cfg: DdpgConfig) -> float:
    """Per-episode exploration probability: max(eps0 * decay^episode, eps_min)."""
    if episode < 0:
        raise ValueError("episode must be >= 0")
    return max(cfg.eps0 * cfg.eps_decay ** episode, cfg.eps_min)


def select_action(actor: ActorNet, obs_vec: np.ndarray, eps: float,
                  rng: np.random.Generator) -> np.ndarray:
    """With probability eps a uniform random action, else the actor output."""
    if not (0.0 <= eps <= 1.0):
        raise ValueError("eps must be in [0, 1]")
    if rng.random() < eps:
        return np.array([rng.uniform(0.0, 1.0), rng.uniform(-1.0, 1.0)])
    return np.asarray(actor.forward(obs_vec), dtype=float)


def heading_reward(heading: float, omega_prev: float, cfg: DdpgConfig) -> float:
    """Shaping factor peaking at 1 when the previous angular command points
    the robot at the goal."""
    err = omega_prev / (cfg.heading_divisor * cfg.control_freq) - heading
    return 1.0 - err * err


def compute_reward(d_prev: float, d_curr: float, heading: float,
                   omega_prev: float, event: str, cfg: DdpgConfig) -> float:
    """Terminal rewards on goal/collision, distance-progress shaping otherwise.

    The progress magnitude uses |d_prev - d_curr| by default, so the shaping
    sign comes from the heading factor alone; pointing away from the goal
    while moving is punished and pointing at it rewarded. The "signed" mode
    (sign from the distance change) is selectable but measurably exploitable:
    fleeing with the goal behind the robot makes both factors negative and
    the product positive, and agents find that.
    """
    if d_prev < 0 or d_curr < 0:
        raise ValueError("distances must be >= 0")
    if event == OUTCOME_GOAL:
        return cfg.reward_goal
    if event == OUTCOME_COLLISION:
        return cfg.reward_collision
    dd = d_prev - d_curr
    if cfg.delta_d_mode == "abs":
        dd = abs(dd)
    return (cfg.shaping_gain_outer * heading_reward(heading, omega_prev, cfg)
            * cfg.shaping_gain_dist * dd)


def critic_target(batch: Batch, target_actor: ActorNet,
                  target_critic: TwoBranchCritic, gamma: float) -> np.ndarray:
    """Bootstrap targets y = r + gamma * Q'(s', mu'(s')); y = r at episode end."""
    a_next = target_actor.forward(batch.s_next)
    q_next = target_critic.forward(batch.s_next, a_next)
    return batch.r + gamma * q_next * (~batch.done)


def critic_update(critic: TwoBranchCritic, adam: AdamState, batch: Batch,
                  y: np.ndarray, lr: float) -> float:
    """One Adam step on the mean squared Bellman error; returns pre-step loss."""
    q, cache = critic.forward_cached(batch.s, batch.a)
    err = q - y
    loss = float(np.mean(err * err))
    gq = 2.0 * err / err.shape[0]
    grads, _ = critic.backward(cache, gq)
    adam_step(critic.params(), grads, adam, lr)
    return loss


def actor_update(actor: ActorNet, critic, adam: AdamState, states: np.ndarray,
                 lr: float) -> float:
    """One Adam ascent step on mean_b Q(s_b, mu(s_b)); returns the pre-step
    mean Q. Gradients flow through the critic to its action input and then
    through the actor; critic parameters are untouched."""
    states = np.atleast_2d(states)
    a, acache = actor.forward_cached(states)
    q, ccache = critic.forward_cached(states, a)
    mean_q = float(np.mean(q))
    gq = np.full(q.shape, -1.0 / q.shape[0])  # descent on -mean(Q)
    _, (_, ga) = critic.backward(ccache, gq)
    agrads, _ = actor.backward(acache, ga)
    adam_step(actor.params(), agrads, adam, lr)
    return mean_q


@dataclass
class AgentNets:
    actor: ActorNet
    critic: TwoBranchCritic
    target_actor: ActorNet
    target_critic: TwoBranchCritic

    @classmethod
    def build(cls, seed) -> "AgentNets":
        rng = np.random.default_rng(seed)
        actor = ActorNet.build(rng)
        critic = TwoBranchCritic.build(rng)
        return cls(actor, critic, actor.clone(), critic.clone())


def hard_update_targets(agent: AgentNets, step: int, cfg: DdpgConfig) -> AgentNets:
    """Copy online params into the targets whenever step hits the schedule."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step % cfg.target_update_steps == 0:
        copy_params(agent.actor, agent.target_actor)
        copy_params(agent.critic, agent.target_critic)
    return agent


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    episode: int
    steps: int
    ret: float
    outcome: str
    epsilon: float
    critic_loss: float
    mean_q: float

    def to_json(self) -> str:
        return json.dumps({
            "episode": self.episode, "steps": self.steps, "return": self.ret,
            "outcome": self.outcome, "epsilon": self.epsilon,
            "critic_loss": self.critic_loss, "mean_q": self.mean_q,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "EpisodeRecord":
        d = json.loads(line)
        return cls(d["episode"], d["steps"], d["return"], d["outcome"],
                   d["epsilon"], d["critic_loss"], d["mean_q"])


class TrainingLog:
    """Append-only per-episode records, serialized as JSON lines."""

    def __init__(self, records: Optional[list[EpisodeRecord]] = None):
        self.records: list[EpisodeRecord] = records or []

    def append(self, rec: EpisodeRecord) -> None:
        self.records.append(rec)

    def to_lines(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_lines())

    @classmethod
    def read(cls, path) -> "TrainingLog":
        lines = Path(path).read_text().splitlines()
        return cls([EpisodeRecord.from_json(ln) for ln in lines if ln.strip()])

    def success_rate(self, window: int = 100) -> float:
        """Fraction of goal outcomes over the trailing window."""
        tail = self.records[-window:]
        if not tail:
            return 0.0
        return sum(r.outcome == OUTCOME_GOAL for r in tail) / len(tail)


ScenarioSampler = Callable[[int, np.random.Generator], ScenarioSpec]


def _resolve_sampler(scenario_sampler) -> ScenarioSampler:
    if isinstance(scenario_sampler, ScenarioSpec):
        return lambda episode, rng: scenario_sampler
    if callable(scenario_sampler):
        return scenario_sampler
    raise TypeError("scenario_sampler must be a ScenarioSpec or callable")


GoalSampler = Callable[[int, ScenarioSpec, np.random.Generator],
                       tuple[float, float]]


def train(
    scenario_sampler,
    cfg: DdpgConfig,
    seed: int,
    episodes: int = 3000,
    perception: Optional[PerceptionConfig] = None,
    sim: Optional[SimParams] = None,
    stop_fn: Optional[Callable[[TrainingLog], bool]] = None,
    checkpoint_dir=None,
    checkpoint_every: int = 0,
    start_episode: int = 0,
    agent: Optional[AgentNets] = None,
    log: Optional[TrainingLog] = None,
    progress: Optional[Callable[[EpisodeRecord], None]] = None,
    goal_sampler: Optional[GoalSampler] = None,
) -> tuple[ActorNet, TrainingLog]:
    """Episodic DDPG training, fully reproducible from seed.

    Each episode resets the robot to the scenario start, samples a random
    collision-free goal at least 0.5 m from walls, and rolls control steps
    at the control period. After the warmup transition count every control
    step performs one critic update and one actor update, with hard target
    syncs on the configured schedule.

    goal_sampler overrides the uniform free-space goal draw (e.g. for a
    distance curriculum); the default matches the contract above.
    """
    cfg.validate()
    sampler = _resolve_sampler(scenario_sampler)
    sim = sim or SimParams(control_period=cfg.control_period)
    rng = np.random.default_rng(seed)
    if agent is None:
        agent = AgentNets.build(rng.integers(2**63 - 1))
    buffer = ReplayBuffer(cfg.buffer_capacity)
    adam_critic = AdamState(agent.critic.params())
    adam_actor = AdamState(agent.actor.params())
    log = log or TrainingLog()
    hard_update_targets(agent, 0, cfg)
    update_count = 0
    max_steps = math.ceil(cfg.episode_timeout / sim.step_duration)

    for episode in range(start_episode, start_episode + episodes):
        scenario = sampler(episode, rng)
        pcfg = perception or PerceptionConfig(d_norm=scenario.map.diagonal)
        eps = epsilon(episode, cfg)
        state = RobotState(*scenario.start, v=0.0, omega=0.0, t=0.0)
        if goal_sampler is not None:
            goal = goal_sampler(episode, scenario, rng)
        else:
            goal = sample_free_point(scenario, rng, margin=0.5)
        obs = _observe(state, scenario, goal, pcfg, sim)
        vec = obs.vector(pcfg)
        ep_return = 0.0
        losses: list[float] = []
        qs: list[float] = []
        outcome = OUTCOME_RUNNING
        steps = 0

        for _ in range(max_steps):
            action = select_action(agent.actor, vec, eps, rng)
            cmd = (float(action[0]) * sim.limits.v_max,
                   float(action[1]) * sim.limits.omega_max)
            res = run_control_step(state, cmd, scenario, sim.dt, sim.n_substeps,
                                   sim.robot_radius, sim.limits)
            next_state = res.state
            next_obs = _observe(next_state, scenario, goal, pcfg, sim)
            next_vec = next_obs.vector(pcfg)

            if res.collided:
                outcome = OUTCOME_COLLISION
            elif next_obs.goal_distance < scenario.goal_radius:
                outcome = OUTCOME_GOAL
            elif next_state.t >= cfg.episode_timeout:
                outcome = OUTCOME_TIMEOUT
            else:
                outcome = OUTCOME_RUNNING
            done = outcome != OUTCOME_RUNNING

            r = compute_reward(obs.goal_distance, next_obs.goal_distance,
                               next_obs.goal_heading, cmd[1], outcome, cfg)
            buffer.push(Transition(vec, action, r, next_vec, done, outcome))
            ep_return += r
            steps += 1

            if len(buffer) >= cfg.warmup_transitions:
                batch = buffer.sample(cfg.batch_size, rng)
                y = critic_target(batch, agent.target_actor, agent.target_critic,
                                  cfg.gamma)
                losses.append(critic_update(agent.critic, adam_critic, batch, y,
                                            cfg.lr))
                qs.append(actor_update(agent.actor, agent.critic, adam_actor,
                                       batch.s, cfg.lr))
                update_count += 1
                hard_update_targets(agent, update_count, cfg)
                _assert_finite(agent)

            state, obs, vec = next_state, next_obs, next_vec
            if done:
                break

        rec = EpisodeRecord(
            episode=episode, steps=steps, ret=ep_return, outcome=outcome,
            epsilon=eps,
            critic_loss=float(np.mean(losses)) if losses else 0.0,
            mean_q=float(np.mean(qs)) if qs else 0.0,
        )
        log.append(rec)
        if progress is not None:
            progress(rec)
        if checkpoint_dir is not None and checkpoint_every > 0 \
                and (episode + 1) % checkpoint_every == 0:
            save_checkpoint(checkpoint_dir, agent, episode + 1)
        if stop_fn is not None and stop_fn(log):
            break

    return agent.actor, log


def _observe(state: RobotState, scenario: ScenarioSpec, goal, pcfg, sim: SimParams):
    moving = advance_obstacles(scenario.obstacles, state.t)
    scan = scan_lidar(scenario.map, moving, state, sim.n_rays, pcfg.max_range)
    return build_observation(scan, (state.x, state.y, state.theta), goal, pcfg)


def _assert_finite(agent: AgentNets) -> None:
    for p in agent.actor.params() + agent.critic.params():
        if not np.isfinite(p).all():
            raise FloatingPointError("non-finite network parameter after update")


def save_checkpoint(directory, agent: AgentNets, episode: int) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nets.save_net(agent.actor, d / "actor.net")
    nets.save_net(agent.critic, d / "critic.net")
    (d / "trainer_state.json").write_text(json.dumps({"episode": episode}))


def load_checkpoint(directory) -> tuple[AgentNets, int]:
    """Restore nets and the episode counter; targets re-sync from the online
    nets and optimizer moments restart."""
    d = Path(directory)
    actor = nets.load_net(d / "actor.net", expect="actor")
    critic = nets.load_net(d / "critic.net", expect="critic")
    episode = json.loads((d / "trainer_state.json").read_text())["episode"]
    return AgentNets(actor, critic, actor.clone(), critic.clone()), episode
