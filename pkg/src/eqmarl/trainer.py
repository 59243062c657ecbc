"""Advantage actor-critic training loop over the shared critic frameworks.

One epoch is: roll out a full episode with the shared policy, estimate the
joint value of every visited joint observation in one batch, form constant
Q targets Q_t = sum_n r_t + gamma * V(o_{t+1}), and take a single Adam step
per model on the episode-averaged losses.  The buffer's final entry holds
only the post-action observation; it is never indexed as an update step and
serves purely as the bootstrap source, with V forced to zero when the
episode ended in a terminal state.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import envs as envs_mod
from .actors import ClassicalActor, QuantumActor
from .critics import CriticFramework, CriticKind
from .entangle import EntanglementStyle
from .nn import AdamState, actor_loss, adam_step, huber_loss, huber_loss_grad
from .vqc import Squash

CSV_HEADER = ("epoch,score,total_coins,own_coin_rate,avg_reward,"
              "actor_loss,critic_loss,episode_len")

# Per-block learning rates.  Quantum models group parameters into angle,
# scaling/encoder, and output-weight blocks with separate rates.
QUANTUM_RATES = {"theta": 0.01, "lam": 0.1, "encoder": 0.1, "w": 0.1}
QUANTUM_RATES_MINIGRID = {"theta": 0.001, "encoder": 0.001, "lam": 0.01,
                          "w": 0.1}
CLASSICAL_RATE = 0.001
CLASSICAL_RATE_MINIGRID = 0.0001


@dataclass
class TrainConfig:
    """Everything one training run needs; JSON round-trips losslessly."""

    env: str = "coingame"
    mode: str = "mdp"
    framework: str = "eqmarl"
    entanglement: str = "psi+"
    epochs: int = 3000
    seed: int = 0
    gamma: float = 0.99
    alpha: float = 0.001
    beta: float = 1.0
    num_qubits: int = 4
    num_layers: int = 5
    hidden: int = 0              # 0 = per-environment default (12 / 100)
    num_agents: int = 2
    checkpoint_every: int = 0    # 0 = only at the end
    full_entropy: bool = False
    learning_rates: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.env not in ("coingame", "cartpole", "minigrid"):
            raise ValueError(f"unknown env: {self.env!r}")
        if self.mode not in ("mdp", "pomdp"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        CriticKind.parse(self.framework)
        EntanglementStyle.parse(self.entanglement)
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if (self.env in ("coingame", "cartpole") and self.mode == "mdp"
                and self.num_qubits != 4):
            raise ValueError(
                "direct observation-matrix encoding fixes num_qubits at 4")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")

    @property
    def hidden_units(self) -> int:
        if self.hidden:
            return self.hidden
        return 100 if self.env == "minigrid" else 12

    def rates(self, quantum: bool) -> dict[str, float]:
        if self.learning_rates:
            return dict(self.learning_rates)
        if quantum:
            return dict(QUANTUM_RATES_MINIGRID if self.env == "minigrid"
                        else QUANTUM_RATES)
        rate = (CLASSICAL_RATE_MINIGRID if self.env == "minigrid"
                else CLASSICAL_RATE)
        return {"net": rate}

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def make_env(config: TrainConfig, seed: int):
    if config.env == "coingame":
        return envs_mod.CoinGameEnv(seed, mode=config.mode)
    if config.env == "cartpole":
        return envs_mod.CartPoleEnv(seed, num_agents=config.num_agents,
                                    mode=config.mode)
    return envs_mod.MiniGridEnv(seed, num_agents=config.num_agents)


def _quantum_input(config: TrainConfig) -> tuple[bool, bool, int]:
    """(encoded_input, lambda_trainable, flat obs dim) for quantum models."""
    if config.env == "coingame":
        if config.mode == "mdp":
            return False, True, 36
        return True, False, 27
    if config.env == "cartpole":
        if config.mode == "mdp":
            return False, True, 4
        return True, False, 4
    return True, False, envs_mod.MiniGridEnv.obs_dim


def make_actor(config: TrainConfig, rng: np.random.Generator):
    env_cls = {"coingame": envs_mod.CoinGameEnv,
               "cartpole": envs_mod.CartPoleEnv,
               "minigrid": envs_mod.MiniGridEnv}[config.env]
    num_actions = env_cls.num_actions
    if config.env == "minigrid":
        return ClassicalActor(envs_mod.MiniGridEnv.obs_dim, num_actions, rng,
                              hidden=config.hidden_units)
    encoded, lam_train, obs_dim = _quantum_input(config)
    return QuantumActor(num_actions, rng, num_qubits=config.num_qubits,
                        num_layers=config.num_layers, beta=config.beta,
                        obs_dim=obs_dim, encoded_input=encoded,
                        lambda_trainable=lam_train)


def make_critic(config: TrainConfig, rng: np.random.Generator):
    kind = CriticKind.parse(config.framework)
    encoded, lam_train, obs_dim = _quantum_input(config)
    if kind in (CriticKind.FCTDE, CriticKind.SCTDE):
        flat = {"coingame": 36 if config.mode == "mdp" else 27,
                "cartpole": 4,
                "minigrid": envs_mod.MiniGridEnv.obs_dim}[config.env]
        return CriticFramework(kind, config.num_agents, flat, rng,
                               hidden=config.hidden_units)
    return CriticFramework(kind, config.num_agents, obs_dim, rng,
                           style=EntanglementStyle.parse(config.entanglement),
                           num_qubits=config.num_qubits,
                           num_layers=config.num_layers,
                           hidden=config.hidden_units,
                           encoded_input=encoded,
                           lambda_trainable=lam_train)


def actor_obs(config: TrainConfig, raw: np.ndarray) -> np.ndarray:
    """Transform one agent's raw observation for the policy input."""
    if config.env == "minigrid":
        return envs_mod.flatten(raw)
    if config.env == "cartpole":
        if config.mode == "mdp":
            return envs_mod.cartpole_mdp_matrix(raw)
        return np.asarray(raw, dtype=float) / envs_mod.CARTPOLE_SCALE
    if config.mode == "mdp":
        return envs_mod.coingame_mdp_matrix(raw)
    return envs_mod.flatten(raw)


def critic_obs(config: TrainConfig, raw: np.ndarray,
               quantum: bool) -> np.ndarray:
    """Transform one agent's raw observation for the critic input."""
    if not quantum:
        return envs_mod.flatten(raw)
    return actor_obs(config, raw)


@dataclass
class Episode:
    """One rollout: indexing is [step][agent] for rewards and actions.

    ``obs`` has t+1 entries: the pre-action observation of every step plus
    the final post-action observation, which serves only as the bootstrap
    source and is never paired with an action of its own.
    """

    obs: list[list[np.ndarray]]       # length t+1
    actions: np.ndarray               # (t, N)
    rewards: np.ndarray               # (t, N)
    infos: list[dict]
    length: int
    terminated: bool = False          # ended by the environment, not the cap


def rollout(env, actor, config: TrainConfig, rng: np.random.Generator,
            greedy: bool = False) -> Episode:
    raw = env.reset()
    obs_seq = []
    actions = []
    rewards = []
    infos = []
    done = False
    info = {}
    while not done:
        obs_seq.append([np.asarray(o) for o in raw])
        step_actions = []
        for n in range(env.num_agents):
            transformed = actor_obs(config, raw[n])
            if greedy:
                probs, _ = actor.probabilities(
                    transformed[None] if transformed.ndim in (1, 2)
                    else transformed)
                step_actions.append(int(np.argmax(probs[0])))
            else:
                step_actions.append(actor.policy_forward(transformed, rng)
                                    .action)
        raw, r, done, info = env.step(step_actions)
        actions.append(step_actions)
        rewards.append(r)
        infos.append(info)
    obs_seq.append([np.asarray(o) for o in raw])
    return Episode(obs_seq, np.asarray(actions), np.asarray(rewards), infos,
                   len(actions), terminated=bool(info.get("terminal", False)))


def compute_targets(values: np.ndarray, rewards: np.ndarray, gamma: float,
                    terminated: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Constant Q targets and advantages for every transition.

    ``values`` holds V(o_0..o_t) with one more entry than there are reward
    rows; the final entry is only the bootstrap for the last transition and
    is replaced by zero when the episode ended in a terminal state (a
    time-limit cut keeps the estimated value).
    """
    joint_r = rewards.sum(axis=1)
    v_next = values[1:].astype(float).copy()
    if terminated:
        v_next[-1] = 0.0
    q = joint_r + gamma * v_next
    a = q - values[:-1]
    return q, a


def compute_metrics(episode: Episode, env_kind: str) -> dict:
    score = float(episode.rewards.sum())
    n_agents = episode.rewards.shape[1]
    metrics = {"score": score, "avg_reward": score / n_agents,
               "episode_len": episode.length, "total_coins": 0,
               "own_coin_rate": 0.0}
    if env_kind == "coingame":
        collections = [c for info in episode.infos
                       for c in info.get("collections", [])]
        total = len(collections)
        own = sum(1 for _, is_own in collections if is_own)
        metrics["total_coins"] = total
        metrics["own_coin_rate"] = own / total if total else 0.0
    return metrics


class Trainer:
    """Owns the models, optimizers, and RNG streams for one training run."""

    def __init__(self, config: TrainConfig):
        self.config = config
        seq = np.random.SeedSequence(config.seed)
        env_seed, init_seed, sample_seed = seq.spawn(3)
        self.env = make_env(config, env_seed)
        init_rng = np.random.default_rng(init_seed)
        self.actor = make_actor(config, init_rng)
        self.critic = make_critic(config, init_rng)
        self.sample_rng = np.random.default_rng(sample_seed)
        self.quantum_critic = self.critic.kind in (CriticKind.EQMARL,
                                                   CriticKind.QFCTDE)
        quantum_actor = isinstance(self.actor, QuantumActor)
        self.actor_opt = self._make_opts(self.actor.param_groups(),
                                         config.rates(quantum_actor))
        self.critic_opt = self._make_opts(self.critic.param_groups(),
                                          config.rates(self.quantum_critic))
        self.epoch = 0

    @staticmethod
    def _make_opts(groups: dict[str, list[np.ndarray]],
                   rates: dict[str, float]) -> dict[str, AdamState]:
        opts = {}
        for name, tensors in groups.items():
            if name not in rates:
                raise ValueError(f"no learning rate for parameter group "
                                 f"{name!r}")
            opts[name] = AdamState.for_params(tensors, rates[name])
        return opts

    def _critic_batch(self, episode: Episode) -> list[np.ndarray]:
        per_agent = []
        for n in range(self.env.num_agents):
            per_agent.append(np.stack([
                critic_obs(self.config, episode.obs[tau][n],
                           self.quantum_critic)
                for tau in range(len(episode.obs))]))
        return per_agent

    def train_epoch(self) -> dict:
        cfg = self.config
        episode = rollout(self.env, self.actor, cfg, self.sample_rng)
        t = episode.length
        if t < 1:
            raise RuntimeError("episode too short to form any update step")

        # Critic: one batched evaluation of V over all t+1 observations.
        batch = self._critic_batch(episode)
        est = self.critic.estimate_joint_value(batch)
        q, advantages = compute_targets(est.value, episode.rewards, cfg.gamma,
                                        episode.terminated)
        critic_loss = huber_loss(est.value[:-1], q)
        dvalue = np.zeros(t + 1)
        dvalue[:-1] = huber_loss_grad(est.value[:-1], q)
        critic_grads = self.critic.backward(est, dvalue)
        for name, opt in self.critic_opt.items():
            adam_step(self.critic.param_groups()[name],
                      critic_grads.groups[name], opt)

        # Actor: accumulate all agents' terms on the one shared parameter set.
        stacked_obs = np.concatenate([
            np.stack([actor_obs(cfg, episode.obs[tau][n])
                      for tau in range(t)])
            for n in range(self.env.num_agents)])
        stacked_actions = np.concatenate([episode.actions[:, n]
                                          for n in range(self.env.num_agents)])
        stacked_adv = np.concatenate([advantages
                                      for _ in range(self.env.num_agents)])
        probs, _ = self.actor.probabilities(stacked_obs)
        chosen = probs[np.arange(len(stacked_actions)), stacked_actions]
        a_loss = actor_loss(stacked_adv, chosen, cfg.alpha,
                            full_probs=probs if cfg.full_entropy else None)
        actor_grads = self.actor.backward(stacked_obs, stacked_actions,
                                         stacked_adv, cfg.alpha,
                                         full_entropy=cfg.full_entropy)
        for name, opt in self.actor_opt.items():
            adam_step(self.actor.param_groups()[name], actor_grads[name], opt)

        metrics = compute_metrics(episode, cfg.env)
        row = {"epoch": self.epoch, **metrics, "actor_loss": a_loss,
               "critic_loss": critic_loss}
        for value in row.values():
            if not np.isfinite(value):
                raise RuntimeError(f"non-finite metric in epoch row: {row}")
        self.epoch += 1
        return row

    # -- persistence --------------------------------------------------------

    def named_tensors(self) -> dict[str, np.ndarray]:
        tensors = {}
        for model, label in ((self.actor, "actor"), (self.critic, "critic")):
            for name, group in model.param_groups().items():
                for i, tensor in enumerate(group):
                    tensors[f"{label}/{name}/{i}"] = tensor
        return tensors

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        live = self.named_tensors()
        if set(live) != set(tensors):
            raise ValueError("checkpoint tensor names do not match the models")
        for name, tensor in tensors.items():
            live[name][...] = tensor


def format_row(row: dict) -> str:
    def fmt(x):
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        return format(float(x), ".17g")

    return ",".join(fmt(row[k]) for k in
                    ("epoch", "score", "total_coins", "own_coin_rate",
                     "avg_reward", "actor_loss", "critic_loss",
                     "episode_len"))


def run_training(config: TrainConfig, csv_path=None,
                 checkpoint_path=None) -> list[dict]:
    """Train for the configured number of epochs, logging one CSV row each."""
    from .nn import save_tensors

    trainer = Trainer(config)
    rows = []
    fh = open(csv_path, "w") if csv_path else None
    try:
        if fh:
            fh.write(CSV_HEADER + "\n")
        for _ in range(config.epochs):
            row = trainer.train_epoch()
            rows.append(row)
            if fh:
                fh.write(format_row(row) + "\n")
                fh.flush()
            if (checkpoint_path and config.checkpoint_every
                    and trainer.epoch % config.checkpoint_every == 0):
                save_tensors(checkpoint_path, trainer.named_tensors())
        if checkpoint_path:
            save_tensors(checkpoint_path, trainer.named_tensors())
    finally:
        if fh:
            fh.close()
    return rows
