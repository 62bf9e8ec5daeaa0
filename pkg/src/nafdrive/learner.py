"""Training machinery: replay memory, TD targets against a frozen copy of
the parameters, the mini-batch squared-error loss, the two-stage freezing
schedule, and the top-level interleaved simulate/train loop.

The "two parallel loops" (simulation and training) are realized as a
deterministic interleave: one environment tick, then one gradient step
once the buffer holds a full batch.  The whole pipeline is a pure
function of (TrainConfig, WorldConfig, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, NumericalError
from .nafq import (Action, NafParams, RlState, explore_action, fit_gradients,
                   greedy_actions_batch, q_values_batch)
from .netcore import adaptive_update, net_forward, opt_init
from .simworld import EpisodeMetrics, World, WorldConfig

PRETRAIN = "pretrain"
JOINT = "joint"


@dataclass
class Transition:
    s: RlState
    a: Action
    s_next: RlState
    r: float
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions; oldest entry evicted first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0

    def __len__(self):
        return len(self._items)

    def push(self, transition: Transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._cursor] = transition
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, n: int, rng) -> list[Transition]:
        """n transitions drawn uniformly with replacement."""
        if not self._items:
            raise ContractError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=n)
        return [self._items[i] for i in idx]

    def contents(self) -> list[Transition]:
        return list(self._items)


@dataclass
class TrainConfig:
    dt: float = 0.1
    learning_rate: float = 0.0005
    gamma: float = 0.95
    batch_size: int = 64
    target_sync_every: int = 1000
    pretrain_steps: int = 200_000
    total_steps: int = 400_000
    checkpoint_schedule: list[int] = field(
        default_factory=lambda: [40_000 * k for k in range(1, 11)]
    )
    sigma_start: float = 0.1
    sigma_end: float = 0.01
    buffer_capacity: int = 1_000
    loss_log_every: int = 20
    seed: int = 0

    def validate(self):
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigurationError("gamma must be in [0, 1)")
        for name in ("batch_size", "target_sync_every", "pretrain_steps",
                     "total_steps", "buffer_capacity", "loss_log_every"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.dt <= 0 or self.learning_rate < 0:
            raise ConfigurationError("dt must be positive and learning_rate >= 0")
        if not (self.sigma_start >= self.sigma_end >= 0):
            raise ConfigurationError("need sigma_start >= sigma_end >= 0")
        return self


def td_target(tr: Transition, target_params: NafParams, gamma: float) -> float:
    """r + gamma * max_a' Q(s', a'; frozen params); the max is V(s') exactly."""
    if tr.terminal:
        return tr.r
    v_next, _ = net_forward(target_params.v_net, tr.s_next.as_array())
    return tr.r + gamma * float(v_next[0])


def _batch_arrays(batch: list[Transition]):
    states = np.stack([tr.s.as_array() for tr in batch])
    actions = np.array([tr.a.a_yaw for tr in batch])
    next_states = np.stack([tr.s_next.as_array() for tr in batch])
    rewards = np.array([tr.r for tr in batch])
    nonterminal = np.array([0.0 if tr.terminal else 1.0 for tr in batch])
    return states, actions, next_states, rewards, nonterminal


def _targets(next_states, rewards, nonterminal, target_params, gamma):
    v_next, _ = net_forward(target_params.v_net, next_states)
    return rewards + gamma * nonterminal * v_next[:, 0]


def batch_loss(batch, params: NafParams, target_params: NafParams, gamma: float):
    """Mean squared TD error over the batch; also returns per-item errors."""
    if not batch:
        raise ContractError("empty batch")
    states, actions, next_states, rewards, nonterminal = _batch_arrays(batch)
    targets = _targets(next_states, rewards, nonterminal, target_params, gamma)
    q, _ = q_values_batch(states, actions, params)
    errors = targets - q
    return float(np.mean(errors**2)), errors


def train_step(params: NafParams, target_params: NafParams, batch,
               stage: str, opt_states: dict, lr: float, gamma: float) -> float:
    """One semi-gradient step on the mini-batch loss.

    The target is treated as a constant (no gradient through the frozen
    copy).  In the pretrain stage only the curvature and value networks
    update; the three greedy-head networks stay bit-frozen.
    """
    if stage not in (PRETRAIN, JOINT):
        raise ConfigurationError(f"unknown stage {stage!r}")
    states, actions, next_states, rewards, nonterminal = _batch_arrays(batch)
    targets = _targets(next_states, rewards, nonterminal, target_params, gamma)

    # semi-gradient: dL/dtheta = (2/N) * sum_i (Q_i - target_i) * dQ_i/dtheta
    loss, grads = fit_gradients(states, actions, targets, params)
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss; step aborted")

    trainable = params.NET_NAMES if stage == JOINT else ("m_net", "v_net")
    for name in trainable:
        adaptive_update(getattr(params, name), grads[name], opt_states[name], lr)
    return loss


def sync_target(params: NafParams) -> NafParams:
    """Bit-exact copy of the online parameters for target computation."""
    return params.copy()


def opt_states_init(params: NafParams) -> dict:
    return {name: opt_init(net) for name, net in params.nets().items()}


def make_rngs(seed: int) -> dict:
    """Named deterministic substreams derived from one master seed."""
    names = ("init", "spawn", "trigger", "explore", "replay")
    seqs = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(seq) for name, seq in zip(names, seqs)}


def sigma_at(cfg: TrainConfig, step: int) -> float:
    """Linear exploration-noise decay over the configured total steps."""
    if cfg.total_steps <= 1:
        return cfg.sigma_end
    frac = min(1.0, (step - 1) / (cfg.total_steps - 1))
    return cfg.sigma_start + (cfg.sigma_end - cfg.sigma_start) * frac


@dataclass
class TrainResult:
    params: NafParams
    target_params: NafParams
    opt_states: dict
    rngs: dict
    loss_rows: list[tuple[int, float | None]]
    episode_rows: list[EpisodeMetrics]
    checkpoint_steps: list[int]
    faults: list[str]


def run_training(train_cfg: TrainConfig, world_cfg: WorldConfig,
                 checkpoint_hook=None, naf_constants: dict | None = None) -> TrainResult:
    """Interleaved simulate/train loop.

    Per tick: every maneuvering vehicle acts under the current parameters
    with Gaussian exploration and its transition enters the buffer; one
    gradient step runs once the buffer holds a full batch; the frozen copy
    is overwritten every target_sync_every steps; the stage switches from
    pretrain to joint after pretrain_steps.  Loss is logged every
    loss_log_every global steps (empty before the first trained step) and
    `checkpoint_hook(step, state_dict)` fires at each scheduled step.
    """
    train_cfg.validate()
    rngs = make_rngs(train_cfg.seed)
    params = NafParams.init(rngs["init"], **(naf_constants or {}))
    target_params = sync_target(params)
    opt_states = opt_states_init(params)
    buffer = ReplayBuffer(train_cfg.buffer_capacity)
    world = World(world_cfg, rngs["spawn"], rngs["trigger"])

    loss_rows: list[tuple[int, float | None]] = []
    episode_rows: list[EpisodeMetrics] = []
    checkpoint_steps: list[int] = []
    schedule = set(train_cfg.checkpoint_schedule)
    last_loss: float | None = None

    rng_explore = rngs["explore"]

    def policy(states):
        S = np.stack([s.as_array() for s in states])
        mu = greedy_actions_batch(S, params)
        noise = rng_explore.normal(0.0, sigma, size=len(states))
        a = np.clip(mu + noise, -params.a_clip, params.a_clip)
        return [Action(float(x)) for x in a]

    for step in range(1, train_cfg.total_steps + 1):
        sigma = sigma_at(train_cfg, step)
        result = world.step(policy, train_cfg.dt)
        for tr in result.transitions:
            buffer.push(Transition(tr.s, tr.a, tr.s_next, tr.r, tr.terminal))
        episode_rows.extend(result.episodes)

        if len(buffer) >= train_cfg.batch_size:
            batch = buffer.sample(train_cfg.batch_size, rngs["replay"])
            stage = PRETRAIN if step <= train_cfg.pretrain_steps else JOINT
            last_loss = train_step(params, target_params, batch, stage,
                                   opt_states, train_cfg.learning_rate,
                                   train_cfg.gamma)
        if step % train_cfg.loss_log_every == 0:
            loss_rows.append((step, last_loss))
        if step % train_cfg.target_sync_every == 0:
            target_params = sync_target(params)
        if step in schedule:
            checkpoint_steps.append(step)
            if checkpoint_hook is not None:
                checkpoint_hook(step, {
                    "params": params,
                    "target_params": target_params,
                    "opt_states": opt_states,
                    "rngs": rngs,
                })

    return TrainResult(params, target_params, opt_states, rngs,
                       loss_rows, episode_rows, checkpoint_steps,
                       list(world.fault_log))
