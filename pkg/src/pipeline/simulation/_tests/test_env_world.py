import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..', '..')))

import math

import numpy as np
import pytest

from modules.exceptions import ConfigError, ContractViolationError, UnsatisfiableConfigError
from pipeline.simulation.env_world import (
    Obstacle,
    Outcome,
    RewardConfig,
    RoverPose,
    WheelCommand,
    WorldConfig,
    build_world,
    classify,
    control_step,
    generate_episode,
    step_physics,
    world_from_text,
    world_to_text,
    wrap_angle,
)

CFG = WorldConfig()


def _straight_world(obstacles=(), goal=(12.5, 15.0), config=CFG):
    return build_world(config, RoverPose(12.5, 0.0, math.pi / 2), goal, obstacles)


# ---------- geração de episódios ----------

def test_generate_episode_respeita_restricoes():
    for seed in range(10_000):
        w = generate_episode(seed)
        sx, sy = CFG.start
        assert (w.rover.x, w.rover.y, w.rover.heading) == (sx, sy, math.pi / 2)
        gx, gy = w.goal
        assert 1.0 <= gx <= 24.0 and 1.0 <= gy <= 24.0
        assert math.hypot(gx - sx, gy - sy) >= CFG.goal_min_dist
        assert len(w.obstacles) == CFG.n_obstacles
        for o in w.obstacles:
            assert 0.0 <= o.center[0] <= CFG.map_side and 0.0 <= o.center[1] <= CFG.map_side
            assert CFG.obstacle_radius_min <= o.radius <= CFG.obstacle_radius_max
            assert math.hypot(o.center[0] - sx, o.center[1] - sy) >= CFG.obstacle_min_dist_from_start
            assert math.hypot(o.center[0] - gx, o.center[1] - gy) >= CFG.win_radius + CFG.collision_radius
        assert classify(w) is Outcome.RUNNING


def test_generate_episode_deterministico():
    a = generate_episode(42)
    b = generate_episode(42)
    assert a == b
    assert a.rng_state == b.rng_state
    assert generate_episode(43) != a


def test_goal_max_dist_limita_objetivo():
    cfg = WorldConfig(n_obstacles=0, goal_max_dist=15.0)
    for seed in range(300):
        w = generate_episode(seed, cfg)
        assert 10.0 <= w.goal_distance <= 15.0


def test_configuracao_insatisfativel():
    with pytest.raises(UnsatisfiableConfigError):
        generate_episode(0, WorldConfig(goal_min_dist=30.0))


def test_validate_rejeita_configuracao_invalida():
    with pytest.raises(ConfigError):
        WorldConfig(collision_radius=5.0).validate()
    with pytest.raises(ConfigError):
        WorldConfig(map_side=-1.0).validate()
    with pytest.raises(ConfigError):
        WorldConfig(goal_min_dist=12.0, goal_max_dist=11.0).validate()


# ---------- cinemática ----------

def test_step_physics_reta_em_velocidade_maxima():
    pose = step_physics(RoverPose(12.5, 0.0, math.pi / 2), WheelCommand(1.0, 1.0), 0.2, 0.2, 0.3)
    assert pose.x == pytest.approx(12.5, abs=1e-12)
    assert pose.y == pytest.approx(0.04, abs=1e-12)
    assert pose.heading == math.pi / 2


def test_step_physics_comando_zero_nao_move():
    start = RoverPose(3.0, 4.0, 1.0)
    assert step_physics(start, WheelCommand(0.0, 0.0), 0.2, 0.2, 0.3) == start


def test_step_physics_arco_exato():
    start = RoverPose(5.0, 5.0, 0.3)
    v = 0.2 * (0.0 + 1.0) / 2
    omega = 0.2 * (1.0 - 0.0) / 0.3
    r = v / omega
    cx, cy = start.x - r * math.sin(start.heading), start.y + r * math.cos(start.heading)
    pose = step_physics(start, WheelCommand(0.0, 1.0), 0.2, 0.2, 0.3)
    assert math.hypot(pose.x - cx, pose.y - cy) == pytest.approx(r, abs=1e-10)
    assert pose.heading == pytest.approx(wrap_angle(0.3 + omega * 0.2), abs=1e-12)


def test_step_physics_sentido_de_giro_e_limite_de_velocidade():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        start = RoverPose(*rng.uniform(0, 25, size=2), float(rng.uniform(-math.pi, math.pi)))
        a, b = rng.uniform(0, 1, size=2)
        pose = step_physics(start, WheelCommand(float(a), float(b)), 0.2, 0.2, 0.3)
        assert math.hypot(pose.x - start.x, pose.y - start.y) <= 0.04 + 1e-12
        turn = wrap_angle(pose.heading - start.heading)
        if a > b:
            assert turn < 0
        elif b > a:
            assert turn > 0
    same = step_physics(RoverPose(1.0, 1.0, 0.7), WheelCommand(0.4, 0.4), 0.2, 0.2, 0.3)
    assert same.heading == 0.7


# ---------- classificação ----------

def test_classify_colisao_queda_sucesso():
    cfg = CFG
    rock = Obstacle((10.0, 10.0), 0.3)
    w = build_world(cfg, RoverPose(10.49, 10.0, 0.0), (20.0, 20.0), [rock])
    assert classify(w) is Outcome.COLLISION
    w = build_world(cfg, RoverPose(20.0, 20.0, 0.0), (20.0, 20.0), [rock])
    assert classify(w) is Outcome.SUCCESS
    w = build_world(cfg, RoverPose(-0.01, 5.0, 0.0), (20.0, 20.0))
    assert classify(w) is Outcome.FALL


def test_classify_ordem_de_prioridade():
    # fora do mapa e perto de uma rocha: colisão vence
    w = build_world(CFG, RoverPose(-0.01, 5.0, 0.0), (20.0, 20.0), [Obstacle((0.1, 5.0), 0.2)])
    assert classify(w) is Outcome.COLLISION
    # fora do mapa e dentro do raio de vitória: queda vence
    w = build_world(CFG, RoverPose(-0.01, 5.0, 0.0), (0.2, 5.0))
    assert classify(w) is Outcome.FALL


# ---------- recompensa e passo de controle ----------

def test_control_step_progresso_de_20_cm():
    world, reward, outcome = control_step(_straight_world(), WheelCommand(1.0, 1.0))
    assert outcome is Outcome.RUNNING
    assert world.substeps == CFG.substeps_per_action
    assert world.rover.y == pytest.approx(0.2, abs=1e-12)
    assert reward == pytest.approx(20.0, abs=1e-9)


def test_control_step_colisao_para_no_substep():
    world = _straight_world(obstacles=[Obstacle((12.5, 0.6), 0.3)])
    world, reward, outcome = control_step(world, WheelCommand(1.0, 1.0))
    assert outcome is Outcome.COLLISION
    assert world.substeps == 3
    assert reward == pytest.approx(100.0 * 0.12 - 100.0, abs=1e-9)


def test_control_step_timeout():
    world = _straight_world()
    for _ in range(CFG.max_control_steps - 1):
        world, reward, outcome = control_step(world, WheelCommand(0.0, 0.0))
        assert outcome is Outcome.RUNNING
        assert reward == 0.0
    world, reward, outcome = control_step(world, WheelCommand(0.0, 0.0))
    assert outcome is Outcome.TIMEOUT
    assert reward == pytest.approx(-20.0)
    assert world.elapsed == pytest.approx(CFG.max_episode_time)


def test_control_step_em_mundo_encerrado_levanta():
    world = _straight_world(obstacles=[Obstacle((12.5, 0.6), 0.3)])
    world, _, outcome = control_step(world, WheelCommand(1.0, 1.0))
    assert outcome.terminal
    with pytest.raises(ContractViolationError):
        control_step(world, WheelCommand(1.0, 1.0))


def test_control_step_deterministico_e_telescopico():
    rng = np.random.default_rng(11)
    cmds = [WheelCommand(*map(float, rng.uniform(0, 1, size=2))) for _ in range(100)]

    def run():
        world = generate_episode(7)
        d0 = world.goal_distance
        rewards, poses = [], []
        for cmd in cmds:
            world, r, outcome = control_step(world, cmd, RewardConfig())
            rewards.append(r)
            poses.append(world.rover)
            if outcome.terminal:
                break
        return d0, world, outcome, rewards, poses

    first, second = run(), run()
    assert first[3] == second[3] and first[4] == second[4]
    d0, world, outcome, rewards, _ = first
    if not outcome.terminal:
        assert sum(rewards) == pytest.approx(100.0 * (d0 - world.goal_distance), abs=1e-9)
    else:
        progress = sum(rewards[:-1])
        # o passo terminal paga progresso e penalidade juntos
        assert progress + rewards[-1] == pytest.approx(
            100.0 * (d0 - world.goal_distance) + {
                Outcome.SUCCESS: 0.0, Outcome.COLLISION: -100.0,
                Outcome.FALL: -100.0, Outcome.TIMEOUT: -20.0,
            }[outcome],
            abs=1e-9,
        )


def test_episodio_sempre_termina_no_limite_de_tempo():
    rng = np.random.default_rng(3)
    for seed in range(20):
        world = generate_episode(seed)
        outcome = Outcome.RUNNING
        steps = 0
        while not outcome.terminal:
            world, _, outcome = control_step(world, WheelCommand(*map(float, rng.uniform(0, 1, size=2))))
            steps += 1
        assert steps <= CFG.max_control_steps


# ---------- snapshot texto ----------

def test_world_text_round_trip():
    world = generate_episode(99)
    world, _, _ = control_step(world, WheelCommand(0.3, 0.9))
    back = world_from_text(world_to_text(world))
    assert back == world
    assert back.rng_state == world.rng_state


def test_world_text_linha_invalida():
    with pytest.raises(ValueError):
        world_from_text("seed=1\nsem separador\n")
