"""Controladores de referência e adaptador da política treinada.

Cada controlador declara o que observa (`observes`):
  - "goal":        P-controller, recebe apenas pose do rover e posição do objetivo;
  - "nothing":     aleatório;
  - "observation": política DRL, recebe apenas o tensor de observação.
O harness de avaliação entrega a cada um somente o que foi declarado.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from modules.exceptions import ConfigError
from pipeline.learning.neuralnet import PolicyNetwork, sample_action
from pipeline.simulation.env_world import RoverPose, WheelCommand, wrap_angle

CONTROLLER_NAMES = ("ppo", "p", "random")


@dataclass(frozen=True)
class PControllerConfig:
    k_p: float = 1.0
    p_0: float = 0.8

    def validate(self) -> "PControllerConfig":
        if not (0.0 <= self.p_0 <= 1.0):
            raise ConfigError(f"p_0 deve estar em [0, 1] (recebido {self.p_0})")
        if self.k_p < 0:
            raise ConfigError(f"k_p não pode ser negativo (recebido {self.k_p})")
        return self


def goal_bearing_error(pose: RoverPose, goal: Tuple[float, float]) -> float:
    return wrap_angle(math.atan2(goal[1] - pose.y, goal[0] - pose.x) - pose.heading)


def p_control(pose: RoverPose, goal: Tuple[float, float], cfg: PControllerConfig = PControllerConfig()) -> WheelCommand:
    e = goal_bearing_error(pose, goal)
    return WheelCommand.clamped(cfg.p_0 - cfg.k_p * e, cfg.p_0 + cfg.k_p * e)


def random_control(rng: np.random.Generator) -> WheelCommand:
    left, right = rng.uniform(0.0, 1.0, size=2)
    return WheelCommand(float(left), float(right))


class PController:
    name = "p"
    observes = "goal"

    def __init__(self, cfg: PControllerConfig = PControllerConfig()):
        self.cfg = cfg.validate()

    def reset(self, trial_seed: int) -> None:
        pass

    def act(self, pose: RoverPose, goal: Tuple[float, float]) -> WheelCommand:
        return p_control(pose, goal, self.cfg)


class RandomController:
    name = "random"
    observes = "nothing"

    def __init__(self):
        self.rng = np.random.default_rng(0)

    def reset(self, trial_seed: int) -> None:
        # fluxo separado do gerador do mundo (mesma semente de trial)
        self.rng = np.random.default_rng([int(trial_seed), 1])

    def act(self) -> WheelCommand:
        return random_control(self.rng)


class PolicyController:
    name = "ppo"
    observes = "observation"

    def __init__(self, policy: PolicyNetwork, *, obs_mode: Optional[str] = None, deterministic: bool = True):
        self.policy = policy
        self.obs_mode = obs_mode
        self.deterministic = deterministic
        self.state = policy.initial_state()
        self.rng = np.random.default_rng(0)

    @property
    def observation_kind(self) -> str:
        return "state" if self.policy.config.kind == "mlp" else "image"

    def reset(self, trial_seed: int) -> None:
        self.state = self.policy.initial_state()
        self.rng = np.random.default_rng([int(trial_seed), 2])

    def act(self, observation: np.ndarray) -> WheelCommand:
        if not isinstance(observation, np.ndarray):
            raise TypeError(f"PolicyController aceita apenas np.ndarray (recebido {type(observation).__name__})")
        out, _ = self.policy.forward(observation, self.state)
        self.state = out.state
        action = out.mean if self.deterministic else sample_action(out.mean, out.log_std, self.rng)
        return WheelCommand.clamped(action[0], action[1])
