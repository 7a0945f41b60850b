"""Ambiente gymnasium do rover (mundo + câmera + pré-processamento).

Cada instância tem seu próprio gerador de sementes de episódio, semeado com
base_seed + env_index; cada reset sorteia a semente do próximo episódio
nesse gerador. `options={"episode_seed": s}` força um episódio específico
(usado pelo replay).
"""
from __future__ import annotations

from typing import Any, Dict, Optional

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from modules.exceptions import ConfigError, ContractViolationError
from modules.util import SEED_MODULUS, derive_seed
from pipeline.simulation.camera_render import CameraConfig
from pipeline.simulation.env_world import (
    Outcome,
    RewardConfig,
    WheelCommand,
    World,
    WorldConfig,
    control_step,
    generate_episode,
)
from pipeline.vision.preprocess import STATE_VECTOR_SIZE, ObservationConfig, observe, state_vector

OBSERVATION_KINDS = ("image", "state")


class RoverNavEnv(gym.Env):
    metadata = {"render_modes": []}

    def __init__(
        self,
        world_config: Optional[WorldConfig] = None,
        reward_config: Optional[RewardConfig] = None,
        camera_config: Optional[CameraConfig] = None,
        obs_config: Optional[ObservationConfig] = None,
        observation_kind: str = "image",
        base_seed: int = 0,
        env_index: int = 0,
    ):
        super().__init__()
        if observation_kind not in OBSERVATION_KINDS:
            raise ConfigError(f"observation_kind inválido: {observation_kind!r} (use {OBSERVATION_KINDS})")
        self.world_config = (world_config or WorldConfig()).validate()
        self.reward_config = (reward_config or RewardConfig()).validate()
        self.camera_config = (camera_config or CameraConfig()).validate()
        self.obs_config = (obs_config or ObservationConfig()).validate()
        self.observation_kind = observation_kind
        self.env_index = env_index

        if observation_kind == "image":
            self.observation_space = spaces.Box(0.0, 1.0, shape=self.obs_config.shape, dtype=np.float64)
        else:
            self.observation_space = spaces.Box(-np.inf, np.inf, shape=(STATE_VECTOR_SIZE,), dtype=np.float64)
        self.action_space = spaces.Box(0.0, 1.0, shape=(2,), dtype=np.float64)

        self._seed_stream = np.random.default_rng(derive_seed(base_seed, env_index))
        self.world: Optional[World] = None
        self.episode_seed: Optional[int] = None
        self.prev_cmd = WheelCommand(0.0, 0.0)
        self.outcome = Outcome.RUNNING

    def _observation(self) -> np.ndarray:
        if self.observation_kind == "state":
            return state_vector(self.world, self.prev_cmd)
        return observe(self.world, self.camera_config, self.obs_config)

    def _info(self) -> Dict[str, Any]:
        return {"outcome": self.outcome, "episode_seed": self.episode_seed, "world": self.world}

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        super().reset(seed=seed)
        if seed is not None:
            self._seed_stream = np.random.default_rng(derive_seed(seed, self.env_index))
        if options and "episode_seed" in options:
            episode_seed = int(options["episode_seed"])
        else:
            episode_seed = int(self._seed_stream.integers(0, SEED_MODULUS))
        self.episode_seed = episode_seed
        self.world = generate_episode(episode_seed, self.world_config)
        self.prev_cmd = WheelCommand(0.0, 0.0)
        self.outcome = Outcome.RUNNING
        return self._observation(), self._info()

    def step(self, action):
        if self.world is None or self.outcome.terminal:
            raise ContractViolationError("step chamado sem reset após o fim do episódio")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), 0.0, 1.0)
        cmd = WheelCommand(float(a[0]), float(a[1]))
        self.world, reward, self.outcome = control_step(self.world, cmd, self.reward_config)
        self.prev_cmd = cmd
        return self._observation(), reward, self.outcome.terminal, False, self._info()
