"""Double DQN training on top of the dueling network.

The learner is deliberately plain: uniform replay, epsilon-greedy
exploration with a linear decay, one gradient step per environment step
once the warm-start threshold is reached, soft target updates, and greedy
evaluation on a held-out environment every few episodes with
best-so-far parameter retention and early stopping.

Episode ends in both environments here are data truncations, not MDP
terminals, so stored transitions always bootstrap (terminal flag False).
"""

import csv
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import nets
from .nets import NetworkParams, OptimizerState, TrainingDiverged

TRAINING_LOG_HEADER = [
    "episode", "steps", "epsilon", "train_return", "val_return", "loss",
]


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling.

    Observations are kept as float32 to bound memory at the default
    million-transition capacity.
    """

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.terminal = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, s, a, r, s2, terminal: bool) -> None:
        i = self._next
        self.obs[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_obs[i] = s2
        self.terminal[i] = terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if batch_size > self._size:
            raise ValueError(
                f"cannot sample {batch_size} from buffer of size {self._size}"
            )
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return (
            self.obs[idx].astype(np.float64),
            self.actions[idx],
            self.rewards[idx],
            self.next_obs[idx].astype(np.float64),
            self.terminal[idx],
        )


@dataclass(frozen=True)
class DDQNConfig:
    gamma: float = 0.9
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    learning_rate: float = 1e-4
    clip_norm: float = 0.7
    soft_update_rate: float = 0.01
    hidden: Tuple[int, int] = (64, 64)
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5
    warm_start: int = 1000
    learn_every: int = 1
    eval_every_episodes: int = 20
    patience: int = 15

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        for eps in (self.eps_start, self.eps_end):
            if not (0.0 <= eps <= 1.0):
                raise ValueError(f"epsilon must be in [0, 1], got {eps}")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("batch_size must fit in the buffer")

    def epsilon_at(self, step: int, budget: int) -> float:
        """Linear decay from eps_start to eps_end over eps_fraction of budget."""
        horizon = max(1, int(self.eps_fraction * budget))
        frac = min(1.0, step / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


def ddqn_target(
    r,
    s2,
    done,
    local: NetworkParams,
    target: NetworkParams,
    gamma: float,
):
    """Double-DQN target: bootstrap with the target net at the local argmax.

    Accepts scalars or batches; numpy argmax breaks ties toward the lowest
    action index.
    """
    r = np.asarray(r, dtype=float)
    done = np.asarray(done, dtype=bool)
    single = np.asarray(s2).ndim == 1
    s2b = np.asarray(s2, dtype=float)
    if single:
        s2b = s2b[None, :]
    q_local, _, _ = nets.forward(local, s2b)
    q_target, _, _ = nets.forward(target, s2b)
    best = q_local.argmax(axis=1)
    boot = q_target[np.arange(len(s2b)), best]
    y = r + gamma * np.where(done, 0.0, boot)
    if single:
        return float(y.reshape(-1)[0])
    return y


def greedy_rollout(env, params: NetworkParams, offset: int):
    """Run one episode acting greedily; returns (total reward, actions, infos)."""
    obs = env.reset(offset)
    total = 0.0
    actions: List[int] = []
    infos: List[Dict] = []
    done = False
    while not done:
        q, _, _ = nets.forward(params, obs)
        a = int(q.argmax())
        obs, r, done, info = env.step(a)
        total += r
        actions.append(a)
        infos.append(info)
    return total, actions, infos


@dataclass
class TrainingResult:
    params: NetworkParams
    log: List[Dict] = field(default_factory=list)
    steps: int = 0
    episodes: int = 0
    best_val_return: float = float("-inf")
    stopped_early: bool = False


def train_ddqn(
    train_env,
    eval_env,
    config: DDQNConfig,
    budget: int,
    seed: int = 0,
    eval_offsets: Optional[Sequence[int]] = None,
    diverged_checkpoint_path: Optional[str] = None,
    progress: Optional[Callable[[Dict], None]] = None,
) -> TrainingResult:
    """Train on random-offset episodes; keep the best validation snapshot.

    budget is the total environment-step allowance. Evaluation runs
    greedily on eval_env every eval_every_episodes episodes; training
    stops early after `patience` evaluations without a new best.
    """
    rng = np.random.default_rng(seed)
    n_actions = train_env.config.n_actions
    probe = train_env.reset(train_env.min_offset())
    obs_dim = len(probe)
    local = nets.init_params(obs_dim, n_actions + 1, hidden=config.hidden, seed=seed)
    target = local.copy()
    opt = OptimizerState.for_params(local, learning_rate=config.learning_rate,
                                    clip_norm=config.clip_norm)
    buffer = ReplayBuffer(config.buffer_capacity, obs_dim)
    if eval_offsets is None:
        eval_offsets = [eval_env.min_offset()]

    result = TrainingResult(params=local.copy())
    steps = 0
    evals_since_best = 0
    last_loss = float("nan")

    def evaluate(params: NetworkParams) -> float:
        return float(np.mean([
            greedy_rollout(eval_env, params, off)[0] for off in eval_offsets
        ]))

    while steps < budget:
        offset = train_env.sample_offset(rng)
        obs = train_env.reset(offset)
        done = False
        ep_return = 0.0
        while not done and steps < budget:
            eps = config.epsilon_at(steps, budget)
            if rng.random() < eps:
                a = int(rng.integers(0, n_actions + 1))
            else:
                q, _, _ = nets.forward(local, obs)
                a = int(q.argmax())
            next_obs, r, done, _ = train_env.step(a)
            # episode ends are truncations of a continuing task: bootstrap
            buffer.add(obs, a, r, next_obs, terminal=False)
            obs = next_obs
            ep_return += r
            steps += 1
            if len(buffer) >= config.warm_start and steps % config.learn_every == 0:
                s, a_b, r_b, s2, term = buffer.sample(config.batch_size, rng)
                y = ddqn_target(r_b, s2, term, local, target, config.gamma)
                loss, grads = loss_and_grads_checked(
                    local, s, a_b, y, diverged_checkpoint_path, opt)
                local = nets.apply_update(local, opt, grads)
                target = nets.soft_update(target, local, config.soft_update_rate)
                last_loss = loss
        result.episodes += 1

        if result.episodes % config.eval_every_episodes == 0 or steps >= budget:
            val_return = evaluate(local)
            row = {
                "episode": result.episodes,
                "steps": steps,
                "epsilon": config.epsilon_at(steps, budget),
                "train_return": ep_return,
                "val_return": val_return,
                "loss": last_loss,
            }
            result.log.append(row)
            if progress is not None:
                progress(row)
            if val_return > result.best_val_return:
                result.best_val_return = val_return
                result.params = local.copy()
                evals_since_best = 0
            else:
                evals_since_best += 1
                if evals_since_best >= config.patience:
                    result.stopped_early = True
                    break

    result.steps = steps
    if result.best_val_return == float("-inf"):
        # no evaluation ever ran (tiny budgets): fall back to last params
        result.params = local.copy()
        result.best_val_return = evaluate(local)
    return result


def loss_and_grads_checked(params, s, a, y, checkpoint_path, opt):
    loss, grads = nets.loss_and_gradients(params, s, a, y)
    if not np.isfinite(loss):
        if checkpoint_path is not None:
            nets.save_checkpoint(checkpoint_path, params, opt,
                                 metadata={"reason": "divergence"})
        raise TrainingDiverged(f"loss became {loss}")
    return loss, grads


def write_training_log(rows: Sequence[Dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAINING_LOG_HEADER)
        for row in rows:
            writer.writerow([
                row["episode"], row["steps"], repr(row["epsilon"]),
                repr(row["train_return"]), repr(row["val_return"]),
                repr(row["loss"]),
            ])
