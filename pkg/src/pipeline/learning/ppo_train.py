"""Treinamento PPO (coleta -> GAE -> épocas de minibatch -> Adam).

Fluxo por atualização:
  1. collect_rollout: n_steps decisões em cada ambiente com a política atual
     (θ_old), guardando log-prob da amostra gaussiana não limitada;
  2. compute_gae: vantagens por recursão reversa, retornos = vantagens + valores;
  3. n_epochs passadas sobre n_minibatches, cada uma com ppo_loss ->
     clip_grad_norm -> adam_step.

Estados recorrentes usados no update são os armazenados durante a coleta
(aproximação de estado "velho"); o gradiente não atravessa o tempo.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
import pandera.pandas as pa

from modules.datafilehandler import DataFileHandler
from modules.exceptions import ConfigError, NumericalError, ShapeError
from modules.logger import require_logger
from modules.util import derive_seed, format_duration
from pipeline.learning._contracts.train_log_contract import (
    EpisodeContract,
    RewardCurveContract,
    TrainLogContract,
)
from pipeline.learning.checkpoint import save_checkpoint
from pipeline.learning.neuralnet import (
    AdamState,
    NetConfig,
    PolicyNetwork,
    RecurrentState,
    adam_step,
    clip_grad_norm,
    gaussian_entropy,
    gaussian_log_prob,
    gaussian_log_prob_grads,
    sample_action,
)
from pipeline.simulation.camera_render import CameraConfig
from pipeline.simulation.env_world import Outcome, RewardConfig, WorldConfig
from pipeline.simulation.rover_env import RoverNavEnv
from pipeline.vision.preprocess import ObservationConfig

SCHEMA_DIR = Path(__file__).resolve().parent / "schemas" / "csv"
ADV_EPS = 1e-8
DESK_TOTAL_TIMESTEPS = 200_000
FULL_TOTAL_TIMESTEPS = 5_000_000


@dataclass(frozen=True)
class PpoConfig:
    total_timesteps: int = FULL_TOTAL_TIMESTEPS
    learning_rate: float = 0.0003
    gamma: float = 0.85
    ent_coef: float = 0.01
    n_epochs: int = 4
    clip_range: float = 0.2
    n_steps: int = 64
    gae_lambda: float = 0.95
    vf_coef: float = 0.5
    n_minibatches: int = 1
    max_grad_norm: float = 0.5
    seed: int = 0
    n_envs: int = 4
    checkpoint_every: int = 0
    reward_window: int = 50
    log_wallclock: bool = False

    @property
    def batch_size(self) -> int:
        return self.n_steps * self.n_envs

    def validate(self) -> "PpoConfig":
        if self.total_timesteps < 0:
            raise ConfigError("ppo.total_timesteps não pode ser negativo")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError(f"ppo.gamma deve estar em (0, 1] (recebido {self.gamma})")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError(f"ppo.gae_lambda deve estar em [0, 1] (recebido {self.gae_lambda})")
        if self.clip_range <= 0:
            raise ConfigError("ppo.clip_range deve ser positivo")
        if self.n_steps < 1 or self.n_envs < 1 or self.n_epochs < 1 or self.n_minibatches < 1:
            raise ConfigError("n_steps, n_envs, n_epochs e n_minibatches devem ser >= 1")
        if self.n_steps % self.n_minibatches != 0:
            raise ConfigError(
                f"ppo.n_steps ({self.n_steps}) deve ser divisível por ppo.n_minibatches ({self.n_minibatches})"
            )
        if self.learning_rate <= 0 or self.max_grad_norm <= 0:
            raise ConfigError("learning_rate e max_grad_norm devem ser positivos")
        if self.reward_window < 1 or self.checkpoint_every < 0:
            raise ConfigError("reward_window >= 1 e checkpoint_every >= 0")
        return self


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    state: Optional[RecurrentState]
    action: np.ndarray
    reward: float
    done: bool
    value: float
    log_prob: float


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    env: int
    seed: int
    reward: float
    outcome: str
    steps: int


@dataclass
class Minibatch:
    observations: np.ndarray
    hidden: Optional[np.ndarray]
    cell: Optional[np.ndarray]
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    @property
    def state(self) -> Optional[RecurrentState]:
        if self.hidden is None:
            return None
        return RecurrentState(self.hidden, self.cell)

    def take(self, idx: np.ndarray) -> "Minibatch":
        values = (getattr(self, f.name) for f in fields(self))
        return Minibatch(*(None if v is None else v[idx] for v in values))


@dataclass
class RolloutBuffer:
    """Transições em ordem passo-major (t * n_envs + env)."""
    n_steps: int
    n_envs: int
    transitions: List[Transition]
    bootstrap_values: np.ndarray
    episodes: List[EpisodeRecord] = field(default_factory=list)
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.transitions)

    def _grid(self, attr: str) -> np.ndarray:
        arr = np.array([getattr(t, attr) for t in self.transitions], dtype=np.float64)
        return arr.reshape((self.n_steps, self.n_envs) + arr.shape[1:])

    @property
    def rewards(self) -> np.ndarray:
        return self._grid("reward")

    @property
    def values(self) -> np.ndarray:
        return self._grid("value")

    @property
    def dones(self) -> np.ndarray:
        return self._grid("done")

    @property
    def log_probs(self) -> np.ndarray:
        return self._grid("log_prob")

    def compute_advantages(self, gamma: float, gae_lambda: float) -> "RolloutBuffer":
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones, self.bootstrap_values, gamma, gae_lambda
        )
        if not np.all(np.isfinite(self.advantages)):
            raise NumericalError("Vantagens não finitas no buffer")
        return self

    def as_minibatch(self) -> Minibatch:
        if self.advantages is None:
            raise ValueError("compute_advantages deve ser chamado antes de as_minibatch")
        ts = self.transitions
        recurrent = ts[0].state is not None
        return Minibatch(
            observations=np.stack([t.observation for t in ts]),
            hidden=np.stack([t.state.hidden for t in ts]) if recurrent else None,
            cell=np.stack([t.state.cell for t in ts]) if recurrent else None,
            actions=np.stack([t.action for t in ts]),
            old_log_probs=np.array([t.log_prob for t in ts]),
            advantages=self.advantages.reshape(-1),
            returns=self.returns.reshape(-1),
        )


class EnvBatch:
    """Ambientes em paralelo lógico + observação/estado recorrente corrente de cada um."""

    def __init__(self, envs: Sequence[RoverNavEnv], policy: PolicyNetwork):
        if not envs:
            raise ConfigError("EnvBatch precisa de ao menos um ambiente")
        self.envs = list(envs)
        self.obs = np.stack([env.reset()[0] for env in self.envs])
        self.state = policy.initial_state(len(self.envs))
        self.ep_reward = np.zeros(len(self.envs))
        self.ep_steps = np.zeros(len(self.envs), dtype=np.int64)
        self.episode_count = 0

    def __len__(self) -> int:
        return len(self.envs)


def collect_rollout(envs: EnvBatch, policy: PolicyNetwork, n_steps: int, rng: np.random.Generator) -> RolloutBuffer:
    transitions: List[Transition] = []
    episodes: List[EpisodeRecord] = []
    n_envs = len(envs)
    for _ in range(n_steps):
        out, _ = policy.forward(envs.obs, envs.state)
        actions = sample_action(out.mean, out.log_std, rng)
        log_probs = gaussian_log_prob(out.mean, out.log_std, actions)
        next_obs = np.empty_like(envs.obs)
        done_rows = []
        for e, env in enumerate(envs.envs):
            seed = env.episode_seed
            obs_e, reward, terminated, truncated, info = env.step(actions[e])
            state_e = None
            if envs.state is not None:
                state_e = RecurrentState(envs.state.hidden[e].copy(), envs.state.cell[e].copy())
            transitions.append(Transition(
                observation=envs.obs[e], state=state_e, action=actions[e].copy(), reward=reward,
                done=bool(terminated or truncated), value=float(out.value[e]), log_prob=float(log_probs[e]),
            ))
            envs.ep_reward[e] += reward
            envs.ep_steps[e] += 1
            if terminated or truncated:
                episodes.append(EpisodeRecord(envs.episode_count, e, int(seed), float(envs.ep_reward[e]),
                                              info["outcome"].value, int(envs.ep_steps[e])))
                envs.episode_count += 1
                envs.ep_reward[e] = 0.0
                envs.ep_steps[e] = 0
                obs_e, _ = env.reset()
                done_rows.append(e)
            next_obs[e] = obs_e
        envs.obs = next_obs
        if out.state is not None:
            envs.state = out.state.reset_rows(done_rows) if done_rows else out.state

    last, _ = policy.forward(envs.obs, envs.state)
    return RolloutBuffer(n_steps, n_envs, transitions, np.asarray(last.value, dtype=np.float64), episodes)


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float, gae_lambda: float):
    """Vantagens GAE por recursão reversa. Aceita (T,) ou (T, n_envs)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    bootstrap = np.asarray(bootstrap_value, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ShapeError(f"Sequências com tamanhos diferentes: {rewards.shape}, {values.shape}, {dones.shape}")
    if bootstrap.shape != rewards.shape[1:]:
        raise ShapeError(f"bootstrap_value com shape {bootstrap.shape}, esperado {rewards.shape[1:]}")

    advantages = np.zeros_like(rewards)
    last = np.zeros_like(bootstrap)
    next_value = bootstrap
    for t in range(rewards.shape[0] - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * gae_lambda * nonterminal * last
        advantages[t] = last
        next_value = values[t]
    return advantages, advantages + values


def surrogate_gradient(ratio, advantages, clip_range: float) -> np.ndarray:
    """d min(r·A, clip(r)·A) / d log π, por amostra. Zero quando o termo cortado é o escolhido."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - clip_range, 1.0 + clip_range) * advantages
    return np.where(surr1 <= surr2, surr1, 0.0)


def normalize_advantages(advantages) -> np.ndarray:
    advantages = np.asarray(advantages, dtype=np.float64)
    return (advantages - advantages.mean()) / (advantages.std() + ADV_EPS)


@dataclass(frozen=True)
class LossStats:
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def ppo_loss(policy: PolicyNetwork, batch: Minibatch, clip_range: float, vf_coef: float, ent_coef: float,
             normalize: bool = True):
    """Retorna (loss, gradientes, LossStats).

    loss = -mean(min(r·A, clip(r)·A)) + vf_coef·mean((V - R)²) - ent_coef·mean(H)
    """
    n = len(batch)
    adv = normalize_advantages(batch.advantages) if normalize else np.asarray(batch.advantages, dtype=np.float64)
    out, cache = policy.forward(batch.observations, batch.state)
    mean, log_std, value = out.mean, out.log_std, np.asarray(out.value)

    logp = gaussian_log_prob(mean, log_std, batch.actions)
    ratio = np.exp(logp - batch.old_log_probs)
    clipped = np.clip(ratio, 1.0 - clip_range, 1.0 + clip_range)
    policy_loss = -float(np.mean(np.minimum(ratio * adv, clipped * adv)))
    value_err = value - batch.returns
    value_loss = float(np.mean(value_err * value_err))
    entropy = float(np.mean(gaussian_entropy(log_std)))
    loss = policy_loss + vf_coef * value_loss - ent_coef * entropy

    d_logp = -surrogate_gradient(ratio, adv, clip_range) / n
    g_mean, g_log_std = gaussian_log_prob_grads(mean, log_std, batch.actions)
    d_mean = d_logp[:, None] * g_mean
    d_log_std = d_logp[:, None] * g_log_std - ent_coef / n
    d_value = vf_coef * 2.0 * value_err / n
    grads = policy.backward(cache, d_mean, d_log_std, d_value)

    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if not math.isfinite(loss) or bad:
        raise NumericalError(
            f"Loss/gradiente não finito (loss={loss}, policy={policy_loss}, value={value_loss}, "
            f"entropy={entropy}, ratio max={np.nanmax(ratio)}, params={bad})"
        )
    clip_fraction = float(np.mean(np.abs(ratio - 1.0) > clip_range))
    return loss, grads, LossStats(loss, policy_loss, value_loss, entropy, clip_fraction)


def update_mean_reward(episodes: Sequence[EpisodeRecord]) -> float:
    """Recompensa média dos episódios encerrados na atualização; 0.0 quando nenhum terminou."""
    if not episodes:
        return 0.0
    return float(np.mean([ep.reward for ep in episodes]))


def smooth_reward_curve(episode_log: pd.DataFrame, window: int = 50) -> pd.DataFrame:
    if window < 1:
        raise ValueError("window deve ser >= 1")
    ordered = episode_log.sort_values("episode")
    return pd.DataFrame({
        "episode": ordered["episode"].to_numpy(dtype=np.int64),
        "reward": ordered["reward"].to_numpy(dtype=np.float64),
        "smoothed": ordered["reward"].rolling(window, min_periods=1).mean().to_numpy(dtype=np.float64),
    })


@dataclass
class TrainResult:
    policy: PolicyNetwork
    train_log: pd.DataFrame
    episodes: pd.DataFrame
    checkpoint: Path


TRAIN_LOG_COLUMNS = [
    "update_index", "timesteps", "episodes", "mean_ep_reward", "success", "collision", "fall", "timeout",
    "policy_loss", "value_loss", "entropy", "clip_fraction", "wallclock_s",
]
EPISODE_COLUMNS = ["episode", "env", "seed", "reward", "outcome", "steps"]


class PpoTrainer:
    def __init__(
        self,
        logger,
        *,
        ppo: PpoConfig,
        world: WorldConfig,
        reward: RewardConfig,
        camera: CameraConfig,
        obs: ObservationConfig,
        net: NetConfig,
        output_dir,
        metadata: Optional[dict] = None,
    ):
        self.logger = require_logger(logger, "PpoTrainer")
        self.ppo = ppo.validate()
        self.world = world.validate()
        self.reward = reward.validate()
        self.camera = camera.validate()
        self.obs = obs.validate()
        self.net_config = net.validate()
        if self.net_config.kind != "mlp" and (self.net_config.obs_height, self.net_config.obs_width) != (obs.height, obs.width):
            raise ConfigError(
                f"NetConfig espera {self.net_config.obs_height}x{self.net_config.obs_width}, "
                f"observação é {obs.height}x{obs.width}"
            )
        self.output_dir = Path(output_dir)
        self.metadata = dict(metadata or {})
        self.files = DataFileHandler(logger=self.logger, schema_root=SCHEMA_DIR)
        self.rows: List[dict] = []
        self.episode_rows: List[EpisodeRecord] = []

    @property
    def checkpoint_path(self) -> Path:
        return self.output_dir / "policy.svrl"

    def _make_envs(self) -> List[RoverNavEnv]:
        kind = "state" if self.net_config.kind == "mlp" else "image"
        return [
            RoverNavEnv(self.world, self.reward, self.camera, self.obs, observation_kind=kind,
                        base_seed=self.ppo.seed, env_index=i)
            for i in range(self.ppo.n_envs)
        ]

    def _checkpoint_meta(self, update: int, timesteps: int) -> dict:
        meta = {"obs_mode": self.obs.mode, "update": update, "timesteps": timesteps, "seed": self.ppo.seed}
        meta.update(self.metadata)
        return meta

    def _update(self, policy: PolicyNetwork, opt: AdamState, data: Minibatch, rng: np.random.Generator):
        cfg = self.ppo
        n = len(data)
        mb_size = n // cfg.n_minibatches
        stats: List[LossStats] = []
        for _ in range(cfg.n_epochs):
            perm = rng.permutation(n)
            for k in range(cfg.n_minibatches):
                idx = perm[k * mb_size:(k + 1) * mb_size]
                _, grads, st = ppo_loss(policy, data.take(idx), cfg.clip_range, cfg.vf_coef, cfg.ent_coef)
                grads = clip_grad_norm(grads, cfg.max_grad_norm)
                new_params, opt = adam_step(policy.params, grads, opt, cfg.learning_rate)
                policy.set_params(new_params)
                stats.append(st)
        return opt, stats

    def _log_row(self, update: int, timesteps: int, buffer: RolloutBuffer, stats: List[LossStats], elapsed: float) -> dict:
        counts = {o.value: 0 for o in (Outcome.SUCCESS, Outcome.COLLISION, Outcome.FALL, Outcome.TIMEOUT)}
        for ep in buffer.episodes:
            counts[ep.outcome] += 1
        return {
            "update_index": update,
            "timesteps": timesteps,
            "episodes": len(buffer.episodes),
            "mean_ep_reward": update_mean_reward(buffer.episodes),
            "success": counts["Success"],
            "collision": counts["Collision"],
            "fall": counts["Fall"],
            "timeout": counts["Timeout"],
            "policy_loss": float(np.mean([s.policy_loss for s in stats])),
            "value_loss": float(np.mean([s.value_loss for s in stats])),
            "entropy": float(np.mean([s.entropy for s in stats])),
            "clip_fraction": float(np.mean([s.clip_fraction for s in stats])),
            "wallclock_s": float(elapsed) if self.ppo.log_wallclock else 0.0,
        }

    def train_log_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TRAIN_LOG_COLUMNS)

    def episode_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(ep) for ep in self.episode_rows], columns=EPISODE_COLUMNS)

    def save_logs(self):
        try:
            log_df = TrainLogContract.validate(self.train_log_frame(), lazy=True)
            ep_df = EpisodeContract.validate(self.episode_frame(), lazy=True)
            curve = RewardCurveContract.validate(smooth_reward_curve(ep_df, self.ppo.reward_window), lazy=True)
        except (pa.errors.SchemaErrors, pa.errors.SchemaError) as e:
            self.logger.error(f"Erro de validação dos logs de treino: {e}")
            raise
        self.files.write(log_df, self.output_dir / "train_log.csv", schema_filename="train_log.json")
        self.files.write(ep_df, self.output_dir / "episodes.csv", schema_filename="episodes.json")
        self.files.write(curve, self.output_dir / "reward_curve.csv", schema_filename="reward_curve.json")
        return log_df, ep_df

    def train(self) -> TrainResult:
        cfg = self.ppo
        start = time.perf_counter()
        policy = PolicyNetwork(self.net_config)
        n_updates = math.ceil(cfg.total_timesteps / cfg.batch_size) if cfg.total_timesteps > 0 else 0
        self.logger.info(
            f"Treino iniciado | net={self.net_config.kind} | obs={self.obs.mode} | "
            f"params={policy.parameter_count} | updates={n_updates} | envs={cfg.n_envs}"
        )
        try:
            if n_updates > 0:
                opt = AdamState.zeros_like(policy.params)
                rng = np.random.default_rng(derive_seed(cfg.seed, cfg.n_envs))
                batch = EnvBatch(self._make_envs(), policy)
                timesteps = 0
                for update in range(1, n_updates + 1):
                    buffer = collect_rollout(batch, policy, cfg.n_steps, rng)
                    buffer.compute_advantages(cfg.gamma, cfg.gae_lambda)
                    self.episode_rows.extend(buffer.episodes)
                    opt, stats = self._update(policy, opt, buffer.as_minibatch(), rng)
                    timesteps += len(buffer)
                    row = self._log_row(update, timesteps, buffer, stats, time.perf_counter() - start)
                    self.rows.append(row)
                    self.logger.info(
                        f"Update {update}/{n_updates} | passos={timesteps} | episódios={row['episodes']} | "
                        f"recompensa média={row['mean_ep_reward']:.3f} | policy={row['policy_loss']:.4f} | "
                        f"value={row['value_loss']:.4f}"
                    )
                    if cfg.checkpoint_every and update % cfg.checkpoint_every == 0:
                        save_checkpoint(policy, self.output_dir / f"policy_{update:05d}.svrl",
                                        self._checkpoint_meta(update, timesteps))
                final_meta = self._checkpoint_meta(n_updates, timesteps)
            else:
                final_meta = self._checkpoint_meta(0, 0)
            path = save_checkpoint(policy, self.checkpoint_path, final_meta)
            log_df, ep_df = self.save_logs()
        except Exception as e:
            self.logger.error(f"Treino abortado: {type(e).__name__}: {e}")
            self._persist_partial()
            raise
        elapsed = format_duration(time.perf_counter() - start, "duração")
        self.logger.info(f"Treino concluído | checkpoint={path} | {elapsed}")
        return TrainResult(policy, log_df, ep_df, path)

    def _persist_partial(self):
        # log parcial sem validação de contrato: o objetivo é não perder o que já rodou
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            self.train_log_frame().to_csv(self.output_dir / "train_log.partial.csv", index=False, lineterminator="\n")
            self.episode_frame().to_csv(self.output_dir / "episodes.partial.csv", index=False, lineterminator="\n")
            self.logger.warning(f"Log parcial gravado em {self.output_dir}")
        except OSError as e:
            self.logger.error(f"Falha ao gravar log parcial: {e}")


def train(ppo_config: PpoConfig, world_config: WorldConfig, reward_config: RewardConfig,
          camera_config: CameraConfig, net_config: NetConfig, *, obs_config: Optional[ObservationConfig] = None,
          output_dir, logger) -> TrainResult:
    obs_config = obs_config or ObservationConfig(width=net_config.obs_width, height=net_config.obs_height)
    return PpoTrainer(logger, ppo=ppo_config, world=world_config, reward=reward_config, camera=camera_config,
                      obs=obs_config, net=net_config, output_dir=output_dir).train()
