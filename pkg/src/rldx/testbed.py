"""Miniature DRL stack with switchable fault injection.

A deterministic gridworld plus a tiny numpy MLP trained as a DQN (replay
buffer, target network, epsilon-greedy behavior policy, MC dropout) generate
complete trace streams that exercise every diagnostic.  Identical
(faults, seed, episodes) arguments reproduce a byte-identical stream.

Faults are independent toggles:

  F1  zero weight initialization (main and target)
  F2  bias initialization at 1.0 (main and target)
  F3  actions predicted with the target model instead of the main model
  F4  target model parameters never synchronized
  F5  exploration factor decays in a cliff at the start of training
  F6  no exploration (epsilon pinned at 0)
  F7  q-targets computed with discount 1.0 while the run declares 0.99
  F8  no replay buffer (each update trains on the latest transition)
  F9  terminal transitions not masked in the q-target
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from rldx.events import (
    EpisodeEnd,
    EpisodeStart,
    ExplorationValue,
    McDropoutSamples,
    ModelUpdate,
    QTargetBatch,
    RunEnd,
    RunMeta,
    RunStart,
    Step,
    TargetSync,
    TensorStats,
    TraceEvent,
    tensor_stats,
)

FAULTS = {
    "F1": "zero weight initialization",
    "F2": "bias initialization at 1.0",
    "F3": "actions predicted with the target model",
    "F4": "target model never synchronized",
    "F5": "exploration factor cliff decay",
    "F6": "no exploration (epsilon = 0)",
    "F7": "discount 1.0 in q-targets",
    "F8": "no replay buffer",
    "F9": "terminal state ignored in q-targets",
}

_EXPECTED = {
    "F1": {"NN.W3"},
    "F2": {"NN.B1"},
    "F3": {"AGT.d3"},
    "F4": {"AGT.d1"},
    "F5": {"EXP.d2"},
    "F6": {"EXP.d1"},
    "F7": {"QTR.d1"},
    "F8": {"AGT.d4"},
    "F9": {"QTR.d1"},
}

# Training constants.  The learning rate is tuned so plain SGD on the mean
# squared TD error converges on the default budget: smaller rates let the
# max-bootstrap bias balloon the values before exploration has decayed.
# Temperatures shape the logged action distributions (sharp acting softmax,
# softer probe softmax for the update-drift comparison).
DISCOUNT = 0.99
TARGET_SYNC_PERIOD = 50
REPLAY_CAPACITY = 2000
BATCH_SIZE = 32
LEARNING_RATE = 0.3
ACT_TEMPERATURE = 0.001  # near-greedy softmax component of the behavior policy
PROBE_TEMPERATURE = 0.85
EPSILON_FLOOR = 0.05
DROPOUT_RATE = 0.1
MC_SAMPLES = 20
MC_EVERY = 10
DEFAULT_PROBE_EPISODES = 20
OUTPUT_INIT_SCALE = 0.01
# Epsilon decays per environment step over ~80% of the expected step budget;
# the nominal episode length prices in episodes shortening as learning lands.
NOMINAL_EPISODE_STEPS = 45


def validate_faults(faults: Iterable[str]) -> frozenset[str]:
    fs = frozenset(faults)
    unknown = fs - set(FAULTS)
    if unknown:
        raise ValueError(
            f"unknown faults {sorted(unknown)}; valid names: {', '.join(sorted(FAULTS))}"
        )
    return fs


def expected_diagnoses(faults: Iterable[str]) -> frozenset[str]:
    """Diagnostic ids the engine is expected to fire for a fault set."""
    fs = validate_faults(faults)
    out: set[str] = set()
    for f in fs:
        out |= _EXPECTED[f]
    return frozenset(out)


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridWorld:
    """Deterministic gridworld; reaching the goal pays ``goal_reward``."""

    width: int = 8
    height: int = 8
    start: tuple[int, int] = (0, 0)
    goal: tuple[int, int] = (7, 7)
    step_reward: float = -0.01
    goal_reward: float = 1.0
    max_steps: int = 100

    def __post_init__(self):
        for cell in (self.start, self.goal):
            if not (0 <= cell[0] < self.width and 0 <= cell[1] < self.height):
                raise ValueError(f"cell {cell} outside the {self.width}x{self.height} grid")
        if self.start == self.goal:
            raise ValueError("goal must differ from start")

    def observe(self, cell: tuple[int, int]) -> tuple[float, float]:
        return (cell[0] / (self.width - 1), cell[1] / (self.height - 1))


class EnvState(NamedTuple):
    cell: tuple[int, int]
    steps: int


# action encoding: 0 up, 1 down, 2 left, 3 right (moves clamp at walls)
_MOVES = ((0, 1), (0, -1), (-1, 0), (1, 0))


def env_step(env: GridWorld, state: EnvState, action: int) -> tuple[EnvState, float, bool]:
    if not 0 <= action < 4:
        raise ValueError(f"invalid action {action}; expected 0..3 (up/down/left/right)")
    dx, dy = _MOVES[action]
    x = min(env.width - 1, max(0, state.cell[0] + dx))
    y = min(env.height - 1, max(0, state.cell[1] + dy))
    nxt = EnvState((x, y), state.steps + 1)
    if (x, y) == env.goal:
        return nxt, env.goal_reward, True
    return nxt, env.step_reward, nxt.steps >= env.max_steps


# ---------------------------------------------------------------------------
# function approximator
# ---------------------------------------------------------------------------


class TinyMlp:
    """2 -> 32 -> 32 -> 4 MLP with rectifier hiddens and manual backprop."""

    HIDDEN = 32
    N_IN = 2
    N_OUT = 4

    def __init__(self, rng: np.random.Generator, zero_weights=False, bias_value=0.0):
        def init(n_in, n_out, scale=None):
            if zero_weights:
                return np.zeros((n_in, n_out))
            sigma = math.sqrt(2.0 / n_in) if scale is None else scale
            return rng.normal(0.0, sigma, size=(n_in, n_out))

        h = self.HIDDEN
        self.w1 = init(self.N_IN, h)
        self.b1 = np.full(h, bias_value, dtype=np.float64)
        self.w2 = init(h, h)
        self.b2 = np.full(h, bias_value, dtype=np.float64)
        # near-zero initial outputs keep early bootstrap targets grounded
        self.w3 = init(h, self.N_OUT, scale=OUTPUT_INIT_SCALE)
        self.b3 = np.full(self.N_OUT, bias_value, dtype=np.float64)

    @property
    def param_count(self) -> int:
        return sum(p.size for _, p in self.named_params())

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("l1.weight", self.w1),
            ("l1.bias", self.b1),
            ("l2.weight", self.w2),
            ("l2.bias", self.b2),
            ("l3.weight", self.w3),
            ("l3.bias", self.b3),
        ]

    def copy_from(self, other: "TinyMlp") -> None:
        for (_, dst), (_, src) in zip(self.named_params(), other.named_params()):
            dst[...] = src

    def forward(self, x: np.ndarray, return_hidden=False):
        z1 = x @ self.w1 + self.b1
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ self.w2 + self.b2
        h2 = np.maximum(z2, 0.0)
        q = h2 @ self.w3 + self.b3
        if return_hidden:
            return q, (z1, h1, z2, h2)
        return q

    def dropout_forward(self, x: np.ndarray, rng: np.random.Generator, rate: float):
        keep = 1.0 - rate
        h1 = np.maximum(x @ self.w1 + self.b1, 0.0)
        h1 = h1 * (rng.random(h1.shape) >= rate) / keep
        h2 = np.maximum(h1 @ self.w2 + self.b2, 0.0)
        h2 = h2 * (rng.random(h2.shape) >= rate) / keep
        return h2 @ self.w3 + self.b3

    def train_step(self, states, actions, targets, lr):
        """One SGD step on the squared TD error; returns (loss, grads, hidden)."""
        n = states.shape[0]
        q, (z1, h1, z2, h2) = self.forward(states, return_hidden=True)
        picked = q[np.arange(n), actions]
        err = picked - targets
        loss = float(np.mean(err * err))
        dq = np.zeros_like(q)
        dq[np.arange(n), actions] = 2.0 * err / n
        dw3 = h2.T @ dq
        db3 = dq.sum(axis=0)
        dh2 = dq @ self.w3.T
        dz2 = dh2 * (z2 > 0)
        dw2 = h1.T @ dz2
        db2 = dz2.sum(axis=0)
        dh1 = dz2 @ self.w2.T
        dz1 = dh1 * (z1 > 0)
        dw1 = states.T @ dz1
        db1 = dz1.sum(axis=0)
        grads = [
            ("l1.weight", dw1),
            ("l1.bias", db1),
            ("l2.weight", dw2),
            ("l2.bias", db2),
            ("l3.weight", dw3),
            ("l3.bias", db3),
        ]
        self.w1 -= lr * dw1
        self.b1 -= lr * db1
        self.w2 -= lr * dw2
        self.b2 -= lr * db2
        self.w3 -= lr * dw3
        self.b3 -= lr * db3
        return loss, grads, (h1, h2)


def _softmax(q: np.ndarray, temperature: float) -> np.ndarray:
    z = (q - q.max(axis=-1, keepdims=True)) / temperature
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _behavior_probs(q: np.ndarray, epsilon: float) -> np.ndarray:
    p = epsilon / 4.0 + (1.0 - epsilon) * _softmax(q, ACT_TEMPERATURE)
    return p / p.sum()


# ---------------------------------------------------------------------------
# trace generation
# ---------------------------------------------------------------------------


def _probe_batch(env: GridWorld) -> np.ndarray:
    cells = [(0, 0), (7, 0), (0, 7), (7, 7), (3, 3), (4, 2), (2, 5), (6, 4)]
    return np.array(
        [env.observe((min(x, env.width - 1), min(y, env.height - 1))) for x, y in cells]
    )


def _param_stats(model: TinyMlp) -> tuple[TensorStats, ...]:
    return tuple(tensor_stats(name, arr) for name, arr in model.named_params())


def run_training(
    faults: Iterable[str] = (),
    seed: int = 0,
    episodes: int = 300,
) -> Iterator[TraceEvent]:
    """Generate one complete training trace with the given faults injected."""
    fault_set = validate_faults(faults)
    if episodes < 5:
        raise ValueError("need at least 5 episodes")

    env = GridWorld()
    rng = np.random.default_rng(seed)
    probe_eps = min(DEFAULT_PROBE_EPISODES, max(2, episodes // 5))
    n_train = episodes - probe_eps

    tag = "" if not fault_set else "-" + "+".join(sorted(fault_set))
    meta = RunMeta(
        run_id=f"gridworld-s{seed}{tag}",
        total_episodes=episodes,
        max_steps_per_episode=env.max_steps,
        max_reward=env.goal_reward,
        discount=DISCOUNT,
        action_space_size=4,
        target_sync_period=TARGET_SYNC_PERIOD,
        probe_episodes=probe_eps,
    )
    yield RunStart(meta)

    main = TinyMlp(rng, zero_weights="F1" in fault_set, bias_value=1.0 if "F2" in fault_set else 0.0)
    target = TinyMlp(rng)  # consume rng identically regardless of faults
    target.copy_from(main)
    probe_states = _probe_batch(env)
    gamma = 1.0 if "F7" in fault_set else DISCOUNT
    mask_terminals = "F9" not in fault_set

    replay: list[tuple] = []
    replay_pos = 0
    global_step = 0
    update_idx = 0
    uniform = (0.25, 0.25, 0.25, 0.25)
    target_stats = _param_stats(target)  # constant between syncs

    step_budget = n_train * NOMINAL_EPISODE_STEPS
    ramp_steps = max(1, round(0.8 * step_budget))
    cliff_steps = max(1, round(0.01 * step_budget))

    def epsilon_for(train_steps: int) -> float:
        if "F6" in fault_set:
            return 0.0
        if "F5" in fault_set:
            return max(0.01, 1.0 + (0.01 - 1.0) * train_steps / cliff_steps)
        return max(EPSILON_FLOOR, 1.0 + (EPSILON_FLOOR - 1.0) * train_steps / ramp_steps)

    def push(transition) -> None:
        nonlocal replay_pos
        if "F8" in fault_set:
            replay.clear()
            replay.append(transition)
            return
        if len(replay) < REPLAY_CAPACITY:
            replay.append(transition)
        else:
            replay[replay_pos] = transition
            replay_pos = (replay_pos + 1) % REPLAY_CAPACITY

    train_steps = 0
    for ep in range(episodes):
        probe = ep < probe_eps
        yield EpisodeStart(ep, probe)
        if not probe:
            yield ExplorationValue(global_step, epsilon_for(train_steps))
        state = EnvState(env.start, 0)
        total_reward = 0.0
        t = 0
        done = False
        while not done:
            obs = env.observe(state.cell)
            if probe:
                action = int(rng.integers(4))
                probs_main = probs_used = uniform
            else:
                # the agent samples actions from the logged behavior
                # distribution: an epsilon mixture over a near-greedy softmax
                eps = epsilon_for(train_steps)
                x = np.array(obs)
                q_main = main.forward(x)
                p_main = _behavior_probs(q_main, eps)
                if "F3" in fault_set:
                    p_used = _behavior_probs(target.forward(x), eps)
                else:
                    p_used = p_main
                action = min(int(np.searchsorted(np.cumsum(p_used), rng.random())), 3)
                probs_main = tuple(p_main)
                probs_used = tuple(p_used) if "F3" in fault_set else probs_main
                train_steps += 1

            nxt, reward, done = env_step(env, state, action)
            total_reward += reward
            yield Step(ep, t, obs, action, reward, done, probs_main, probs_used)
            push((obs, action, reward, env.observe(nxt.cell), done))
            global_step += 1
            t += 1

            if not probe and ("F8" in fault_set or len(replay) >= BATCH_SIZE):
                if "F8" in fault_set:
                    batch = replay
                else:
                    picks = rng.choice(len(replay), size=BATCH_SIZE, replace=False)
                    batch = [replay[i] for i in picks]
                b_s = np.array([tr[0] for tr in batch])
                b_a = np.array([tr[1] for tr in batch])
                b_r = np.array([tr[2] for tr in batch])
                b_s2 = np.array([tr[3] for tr in batch])
                b_d = np.array([tr[4] for tr in batch])
                q_next = target.forward(b_s2).max(axis=1)
                mask = (1.0 - b_d.astype(np.float64)) if mask_terminals else np.ones(len(batch))
                targets = b_r + gamma * q_next * mask
                loss, grads, (h1, h2) = main.train_step(b_s, b_a, targets, LEARNING_RATE)
                update_idx += 1
                if "F4" not in fault_set and update_idx % TARGET_SYNC_PERIOD == 0:
                    target.copy_from(main)
                    target_stats = _param_stats(target)
                    yield TargetSync(update_idx)
                probe_q = main.forward(probe_states)
                yield ModelUpdate(
                    update_idx=update_idx,
                    loss=loss,
                    main_params=_param_stats(main),
                    target_params=target_stats,
                    grad_norms=tuple(
                        (name, float(np.sqrt(np.square(g).sum()))) for name, g in grads
                    ),
                    activations=(
                        tensor_stats("l1.relu", h1),
                        tensor_stats("l2.relu", h2),
                    ),
                    probe_outputs=tuple(
                        tuple(row) for row in _softmax(probe_q, PROBE_TEMPERATURE)
                    ),
                )
                yield QTargetBatch(
                    update_idx=update_idx,
                    transitions=tuple(
                        (float(r), bool(d), float(qn))
                        for r, d, qn in zip(b_r, b_d, q_next)
                    ),
                    predicted_targets=tuple(float(y) for y in targets),
                )
                if update_idx % MC_EVERY == 0:
                    samples = np.stack(
                        [
                            main.dropout_forward(probe_states, rng, DROPOUT_RATE)
                            for _ in range(MC_SAMPLES)
                        ]
                    )
                    yield McDropoutSamples(
                        update_idx, tuple(tuple(tuple(row) for row in s) for s in samples)
                    )
            state = nxt
        yield EpisodeEnd(ep, total_reward, t)
    yield RunEnd(meta.run_id)
