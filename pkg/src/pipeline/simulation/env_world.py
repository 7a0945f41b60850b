"""Mundo do rover: geração de episódios, cinemática skid-steer, recompensa e
classificação de desfecho.

Convenções:
  - mapa [0, map_side]², rover parte de (map_side/2, 0) olhando para +y;
  - heading medido a partir de +x, anti-horário, normalizado em (-pi, pi];
  - distâncias de colisão/vitória medidas ao centro (rover tratado como ponto).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from modules.exceptions import ConfigError, ContractViolationError, UnsatisfiableConfigError

MAX_REJECTION_ATTEMPTS = 10_000
GOAL_EDGE_MARGIN = 1.0
STRAIGHT_LINE_EPS = 1e-9
TWO_PI = 2.0 * math.pi


class Outcome(str, Enum):
    RUNNING = "Running"
    SUCCESS = "Success"
    COLLISION = "Collision"
    FALL = "Fall"
    TIMEOUT = "Timeout"

    @property
    def terminal(self) -> bool:
        return self is not Outcome.RUNNING


TERMINAL_OUTCOMES = (Outcome.SUCCESS, Outcome.COLLISION, Outcome.FALL, Outcome.TIMEOUT)


def wrap_angle(angle: float) -> float:
    """Normaliza em (-pi, pi]. math.remainder é exato, então ângulos já no
    intervalo voltam bit a bit iguais."""
    a = math.remainder(float(angle), TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


@dataclass(frozen=True)
class RoverPose:
    x: float
    y: float
    heading: float


@dataclass(frozen=True)
class WheelCommand:
    left: float
    right: float

    @classmethod
    def clamped(cls, left: float, right: float) -> "WheelCommand":
        # só velocidades positivas nas rodas
        return cls(min(max(float(left), 0.0), 1.0), min(max(float(right), 0.0), 1.0))


@dataclass(frozen=True)
class WorldConfig:
    map_side: float = 25.0
    n_obstacles: int = 4
    goal_min_dist: float = 10.0
    goal_max_dist: Optional[float] = None
    obstacle_min_dist_from_start: float = 4.0
    collision_radius: float = 0.5
    win_radius: float = 1.0
    max_episode_time: float = 100.0
    v_max: float = 0.2
    track_width: float = 0.3
    physics_dt: float = 0.2
    substeps_per_action: int = 5
    obstacle_radius_min: float = 0.2
    obstacle_radius_max: float = 0.5

    @property
    def obstacle_radius_range(self) -> Tuple[float, float]:
        return (self.obstacle_radius_min, self.obstacle_radius_max)

    @property
    def start(self) -> Tuple[float, float]:
        return (self.map_side / 2.0, 0.0)

    @property
    def control_dt(self) -> float:
        return self.physics_dt * self.substeps_per_action

    @property
    def max_control_steps(self) -> int:
        return int(round(self.max_episode_time / self.control_dt))

    def validate(self) -> "WorldConfig":
        positives = {
            "map_side": self.map_side,
            "goal_min_dist": self.goal_min_dist,
            "obstacle_min_dist_from_start": self.obstacle_min_dist_from_start,
            "collision_radius": self.collision_radius,
            "win_radius": self.win_radius,
            "max_episode_time": self.max_episode_time,
            "v_max": self.v_max,
            "track_width": self.track_width,
            "physics_dt": self.physics_dt,
            "obstacle_radius_min": self.obstacle_radius_min,
        }
        for name, value in positives.items():
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"WorldConfig.{name} deve ser positivo (recebido {value})")
        if self.n_obstacles < 0:
            raise ConfigError("WorldConfig.n_obstacles não pode ser negativo")
        if self.substeps_per_action < 1:
            raise ConfigError("WorldConfig.substeps_per_action deve ser >= 1")
        if self.obstacle_radius_max < self.obstacle_radius_min:
            raise ConfigError("WorldConfig.obstacle_radius_max < obstacle_radius_min")
        if self.goal_min_dist >= math.hypot(self.map_side, self.map_side):
            raise ConfigError("WorldConfig.goal_min_dist deve ser menor que a diagonal do mapa")
        if self.goal_max_dist is not None and self.goal_max_dist < self.goal_min_dist:
            raise ConfigError("WorldConfig.goal_max_dist < goal_min_dist")
        if self.collision_radius >= self.obstacle_min_dist_from_start:
            raise ConfigError("WorldConfig.collision_radius deve ser menor que obstacle_min_dist_from_start")
        return self


@dataclass(frozen=True)
class RewardConfig:
    c_veloc: float = 100.0
    c_crash: float = 100.0
    c_fall: float = 100.0
    c_timeout: float = 20.0

    def validate(self) -> "RewardConfig":
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"RewardConfig.{f.name} não pode ser negativo")
        return self


@dataclass(frozen=True)
class Obstacle:
    center: Tuple[float, float]
    radius: float


@dataclass(frozen=True)
class World:
    config: WorldConfig
    rover: RoverPose
    goal: Tuple[float, float]
    obstacles: Tuple[Obstacle, ...]
    substeps: int = 0
    prev_goal_distance: float = 0.0
    seed: int = 0
    rng_state: Dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def elapsed(self) -> float:
        return self.substeps * self.config.physics_dt

    @property
    def goal_distance(self) -> float:
        return math.hypot(self.goal[0] - self.rover.x, self.goal[1] - self.rover.y)


def build_world(config: WorldConfig, rover: RoverPose, goal, obstacles=(), *, seed: int = 0) -> World:
    """Monta um mundo com layout explícito (cenas de teste, replay)."""
    goal = (float(goal[0]), float(goal[1]))
    obstacles = tuple(
        o if isinstance(o, Obstacle) else Obstacle((float(o[0][0]), float(o[0][1])), float(o[1]))
        for o in obstacles
    )
    d0 = math.hypot(goal[0] - rover.x, goal[1] - rover.y)
    return World(config=config, rover=rover, goal=goal, obstacles=obstacles,
                 substeps=0, prev_goal_distance=d0, seed=seed)


def _sample_point(rng: np.random.Generator, low: float, high: float, accept, what: str) -> Tuple[float, float]:
    for _ in range(MAX_REJECTION_ATTEMPTS):
        x, y = rng.uniform(low, high, size=2)
        p = (float(x), float(y))
        if accept(p):
            return p
    raise UnsatisfiableConfigError(
        f"Nenhuma posição válida para {what} após {MAX_REJECTION_ATTEMPTS} tentativas"
    )


def generate_episode(seed: int, config: Optional[WorldConfig] = None) -> World:
    config = (config or WorldConfig()).validate()
    rng = np.random.default_rng(int(seed))
    sx, sy = config.start

    def goal_ok(p):
        d = math.hypot(p[0] - sx, p[1] - sy)
        if d < config.goal_min_dist:
            return False
        return config.goal_max_dist is None or d <= config.goal_max_dist

    goal = _sample_point(rng, GOAL_EDGE_MARGIN, config.map_side - GOAL_EDGE_MARGIN, goal_ok, "o objetivo")

    keep_out = config.win_radius + config.collision_radius

    def obstacle_ok(p):
        return (math.hypot(p[0] - sx, p[1] - sy) >= config.obstacle_min_dist_from_start
                and math.hypot(p[0] - goal[0], p[1] - goal[1]) >= keep_out)

    obstacles = []
    for i in range(config.n_obstacles):
        center = _sample_point(rng, 0.0, config.map_side, obstacle_ok, f"o obstáculo {i}")
        radius = float(rng.uniform(config.obstacle_radius_min, config.obstacle_radius_max))
        obstacles.append(Obstacle(center, radius))

    rover = RoverPose(sx, sy, math.pi / 2.0)
    world = build_world(config, rover, goal, obstacles, seed=int(seed))
    return replace(world, rng_state=rng.bit_generator.state)


def step_physics(pose: RoverPose, cmd: WheelCommand, dt: float, v_max: float, track_width: float) -> RoverPose:
    """Avança a pose pelo arco circular exato do comando diferencial."""
    if dt <= 0:
        raise ContractViolationError(f"dt deve ser positivo (recebido {dt})")
    v = v_max * (cmd.left + cmd.right) / 2.0
    omega = v_max * (cmd.right - cmd.left) / track_width
    h = pose.heading
    if abs(omega) < STRAIGHT_LINE_EPS:
        return RoverPose(pose.x + v * dt * math.cos(h), pose.y + v * dt * math.sin(h), h)
    h1 = h + omega * dt
    r = v / omega
    x = pose.x + r * (math.sin(h1) - math.sin(h))
    y = pose.y - r * (math.cos(h1) - math.cos(h))
    return RoverPose(x, y, wrap_angle(h1))


def classify(world: World) -> Outcome:
    cfg = world.config
    rx, ry = world.rover.x, world.rover.y
    for obs in world.obstacles:
        if math.hypot(rx - obs.center[0], ry - obs.center[1]) < cfg.collision_radius:
            return Outcome.COLLISION
    if not (0.0 <= rx <= cfg.map_side and 0.0 <= ry <= cfg.map_side):
        return Outcome.FALL
    if world.goal_distance < cfg.win_radius:
        return Outcome.SUCCESS
    if world.substeps >= int(round(cfg.max_episode_time / cfg.physics_dt)):
        return Outcome.TIMEOUT
    return Outcome.RUNNING


def control_step(world: World, cmd: WheelCommand, rewards: Optional[RewardConfig] = None):
    """Executa uma decisão (substeps_per_action passos de física).

    Retorna (world', reward, outcome). O termo de progresso é pago também no
    passo terminal.
    """
    rewards = rewards or RewardConfig()
    current = classify(world)
    if current.terminal:
        raise ContractViolationError(f"control_step chamado em episódio encerrado ({current.value})")

    cfg = world.config
    cmd = WheelCommand.clamped(cmd.left, cmd.right)
    outcome = Outcome.RUNNING
    for _ in range(cfg.substeps_per_action):
        pose = step_physics(world.rover, cmd, cfg.physics_dt, cfg.v_max, cfg.track_width)
        world = replace(world, rover=pose, substeps=world.substeps + 1)
        outcome = classify(world)
        if outcome.terminal:
            break

    new_distance = world.goal_distance
    reward = rewards.c_veloc * (world.prev_goal_distance - new_distance)
    if outcome is Outcome.COLLISION:
        reward -= rewards.c_crash
    elif outcome is Outcome.FALL:
        reward -= rewards.c_fall
    elif outcome is Outcome.TIMEOUT:
        reward -= rewards.c_timeout

    world = replace(world, prev_goal_distance=new_distance)
    return world, float(reward), outcome


# ===================== SNAPSHOT TEXTO (key=value) =====================

def world_to_text(world: World) -> str:
    lines = [f"seed={world.seed}"]
    for f in fields(world.config):
        lines.append(f"config.{f.name}={getattr(world.config, f.name)!r}")
    lines += [
        f"rover.x={world.rover.x!r}",
        f"rover.y={world.rover.y!r}",
        f"rover.heading={world.rover.heading!r}",
        f"goal.x={world.goal[0]!r}",
        f"goal.y={world.goal[1]!r}",
        f"substeps={world.substeps}",
        f"prev_goal_distance={world.prev_goal_distance!r}",
        f"obstacles={len(world.obstacles)}",
    ]
    for i, o in enumerate(world.obstacles):
        lines += [
            f"obstacle.{i}.x={o.center[0]!r}",
            f"obstacle.{i}.y={o.center[1]!r}",
            f"obstacle.{i}.radius={o.radius!r}",
        ]
    state = world.rng_state or {}
    if state:
        lines += [
            f"rng.bit_generator={state['bit_generator']}",
            f"rng.state={state['state']['state']}",
            f"rng.inc={state['state']['inc']}",
            f"rng.has_uint32={state['has_uint32']}",
            f"rng.uinteger={state['uinteger']}",
        ]
    return "\n".join(lines) + "\n"


def _parse_config_value(raw: str, default):
    if raw == "None":
        return None
    if isinstance(default, bool):
        return raw == "True"
    if isinstance(default, int):
        return int(raw)
    return float(raw)


def world_from_text(text: str) -> World:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"Linha inválida no snapshot: {line!r}")
        kv[key.strip()] = value.strip()

    base = WorldConfig()
    cfg_kwargs = {}
    for f in fields(WorldConfig):
        raw = kv.get(f"config.{f.name}")
        if raw is not None:
            default = getattr(base, f.name)
            cfg_kwargs[f.name] = _parse_config_value(raw, default if default is not None else 0.0)
    config = WorldConfig(**cfg_kwargs)

    n = int(kv.get("obstacles", 0))
    obstacles = tuple(
        Obstacle((float(kv[f"obstacle.{i}.x"]), float(kv[f"obstacle.{i}.y"])), float(kv[f"obstacle.{i}.radius"]))
        for i in range(n)
    )
    rng_state = {}
    if "rng.state" in kv:
        rng_state = {
            "bit_generator": kv["rng.bit_generator"],
            "state": {"state": int(kv["rng.state"]), "inc": int(kv["rng.inc"])},
            "has_uint32": int(kv["rng.has_uint32"]),
            "uinteger": int(kv["rng.uinteger"]),
        }
    return World(
        config=config,
        rover=RoverPose(float(kv["rover.x"]), float(kv["rover.y"]), float(kv["rover.heading"])),
        goal=(float(kv["goal.x"]), float(kv["goal.y"])),
        obstacles=obstacles,
        substeps=int(kv.get("substeps", 0)),
        prev_goal_distance=float(kv["prev_goal_distance"]),
        seed=int(kv.get("seed", 0)),
        rng_state=rng_state,
    )
