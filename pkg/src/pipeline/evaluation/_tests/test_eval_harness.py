import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..', '..')))

import numpy as np
import pandas as pd
import pytest

from modules.exceptions import ConfigError, ContractViolationError, ReplayMismatchError
from modules.logger import Logger
from pipeline.evaluation.baselines import PController, PolicyController, RandomController
from pipeline.evaluation.eval_harness import (
    SummaryTable,
    TrajectoryStore,
    compare_success,
    export_trajectories,
    format_table,
    load_trajectories,
    replay_config_path,
    replay_trajectories,
    run_trial,
    run_trials,
    summarize,
    total_rewards,
)
from pipeline.learning.neuralnet import NetConfig, PolicyNetwork
from pipeline.simulation.env_world import Outcome, RewardConfig, WorldConfig
from pipeline.vision.preprocess import ObservationConfig

REACHABLE = WorldConfig(n_obstacles=0, goal_max_dist=15.0)
REACHABLE_ROCKS = WorldConfig(goal_max_dist=15.0)
SMALL_OBS = ObservationConfig(width=16, height=9)


def _logger(tmp_path):
    return Logger(path_logs=tmp_path / "logs", run_id="eval")


def test_p_controller_resolve_mundos_sem_obstaculos():
    summary, reports = run_trials(PController(), REACHABLE, 100, 0)
    assert summary.n_trials == 100
    assert summary.successes >= 95
    assert [r.seed for r in reports] == list(range(100))
    assert all(r.outcome.terminal for r in reports)


def test_aleatorio_e_pior_que_o_p_controller():
    p_summary, _ = run_trials(PController(), REACHABLE_ROCKS, 100, 1000)
    r_summary, _ = run_trials(RandomController(), REACHABLE_ROCKS, 100, 1000)
    assert r_summary.successes < p_summary.successes
    cmp = compare_success(p_summary, r_summary)
    assert cmp.better == "p" and cmp.worse == "random"
    assert cmp.significant


def test_percentuais_somam_cem():
    summary, _ = run_trials(RandomController(), WorldConfig(), 30, 7)
    total = sum(summary.percent(o) for o in (Outcome.SUCCESS, Outcome.COLLISION, Outcome.FALL, Outcome.TIMEOUT))
    assert total == pytest.approx(100.0, abs=1e-9)
    row = summary.as_row()
    assert row["trials"] == 30 and set(row) == {"controller", "trials", "success", "collision", "fall", "timeout"}


def test_trial_reproduzivel():
    a = run_trial(RandomController(), WorldConfig(), 42)
    b = run_trial(RandomController(), WorldConfig(), 42)
    assert a == b
    assert a.trajectory == b.trajectory
    assert a.steps == len(a.trajectory)
    assert a.total_reward == pytest.approx(sum(s.reward for s in a.trajectory), abs=1e-12)
    assert [s.t for s in a.trajectory] == list(range(a.steps))
    assert a.trajectory[-1].outcome == a.outcome.value


def test_run_trials_exige_ao_menos_um_trial():
    with pytest.raises(ConfigError):
        run_trials(PController(), WorldConfig(), 0, 0)
    with pytest.raises(ValueError):
        summarize("p", [])


def test_politica_de_imagem_roda_no_harness():
    net = PolicyNetwork(NetConfig(kind="cnn-lstm", obs_height=9, obs_width=16, dense_units=8, lstm_units=4))
    summary, reports = run_trials(PolicyController(net, obs_mode="segmented"), WorldConfig(), 2, 3, obs=SMALL_OBS)
    assert summary.n_trials == 2
    assert all(r.steps >= 1 for r in reports)


def test_politica_de_estado_roda_no_harness():
    summary, _ = run_trials(PolicyController(PolicyNetwork(NetConfig(kind="mlp"))), WorldConfig(), 3, 0)
    assert summary.n_trials == 3


def test_politica_incompativel_com_observacao():
    cnn = PolicyNetwork(NetConfig(kind="cnn"))
    with pytest.raises(ConfigError):
        run_trials(PolicyController(cnn), WorldConfig(), 1, 0, obs=SMALL_OBS)
    with pytest.raises(ConfigError):
        run_trials(PolicyController(cnn, obs_mode="raw"), WorldConfig(), 1, 0,
                   obs=ObservationConfig(mode="segmented"))


def test_controlador_sem_declaracao_de_observacao():
    class Bogus:
        name = "bogus"
        observes = "world"

    with pytest.raises(ConfigError):
        run_trials(Bogus(), WorldConfig(), 1, 0)


def test_fisher_unilateral():
    strong = SummaryTable("a", 30, {"Success": 28, "Collision": 2, "Fall": 0, "Timeout": 0})
    weak = SummaryTable("b", 30, {"Success": 2, "Collision": 10, "Fall": 10, "Timeout": 8})
    assert compare_success(strong, weak).significant
    assert not compare_success(weak, strong).significant


def test_format_table():
    summary = SummaryTable("p", 4, {"Success": 3, "Collision": 1, "Fall": 0, "Timeout": 0})
    text = format_table([summary])
    header = text.splitlines()[0]
    for col in ("Controller", "Trials", "Success", "Collision", "Fall", "Timeout"):
        assert col in header
    assert "75.0%" in text and "25.0%" in text and "0.0%" in text


# ---------- exportação e replay ----------

def test_exportacao_vazia_tem_so_cabecalho(tmp_path):
    path = export_trajectories([], tmp_path / "empty.csv", _logger(tmp_path))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == ["trial,seed,t,x,y,heading,left,right,reward,outcome"]
    assert load_trajectories(path, _logger(tmp_path)).empty


def test_exportacao_de_trial_curto(tmp_path):
    short = WorldConfig(n_obstacles=0, max_episode_time=3.0)
    report = run_trial(PController(), short, 5)
    assert report.steps == 3 and report.outcome is Outcome.TIMEOUT
    path = export_trajectories([report], tmp_path / "short.csv", _logger(tmp_path))
    df = pd.read_csv(path)
    assert len(df) == 3
    assert df["outcome"].tolist() == ["Running", "Running", "Timeout"]


def test_reimportacao_preserva_recompensa_total(tmp_path):
    _, reports = run_trials(RandomController(), WorldConfig(), 10, 21)
    store = TrajectoryStore(_logger(tmp_path))
    path = store.export_trajectories(reports, tmp_path / "traj.csv")
    df = store.load_trajectories(path)
    totals = total_rewards(df)
    for r in reports:
        assert abs(totals[r.trial] - r.total_reward) <= 1e-9
    again = store.export_trajectories(reports, tmp_path / "traj2.csv")
    assert path.read_bytes() == again.read_bytes()


def test_replay_confere_e_detecta_adulteracao(tmp_path):
    _, reports = run_trials(PController(), WorldConfig(), 5, 100)
    store = TrajectoryStore(_logger(tmp_path))
    df = store.load_trajectories(store.export_trajectories(reports, tmp_path / "traj.csv"))
    assert replay_trajectories(df, WorldConfig()) == sum(r.steps for r in reports)

    tampered = df.copy()
    tampered.loc[2, "reward"] = tampered.loc[2, "reward"] + 1e-9
    with pytest.raises(ReplayMismatchError):
        replay_trajectories(tampered, WorldConfig())

    truncated = df[~((df["trial"] == 0) & (df["t"] == df[df["trial"] == 0]["t"].max()))]
    with pytest.raises(ReplayMismatchError):
        replay_trajectories(truncated, WorldConfig())


def test_replay_reconstroi_o_mundo_da_exportacao(tmp_path):
    exported = WorldConfig(n_obstacles=0, v_max=0.3)
    rewards = RewardConfig(c_timeout=5.0)
    _, reports = run_trials(RandomController(), exported, 4, 9, rewards=rewards)
    store = TrajectoryStore(_logger(tmp_path))
    path = store.export_trajectories(reports, tmp_path / "traj.csv", world_config=exported, rewards=rewards)
    assert replay_config_path(path).name == "traj.config.yaml"
    assert path.read_text(encoding="utf-8").splitlines()[0] == "trial,seed,t,x,y,heading,left,right,reward,outcome"

    loaded = store.load_replay_config(path)
    assert loaded == (exported, rewards)
    df = store.load_trajectories(path)
    assert replay_trajectories(df, *loaded) == sum(r.steps for r in reports)
    with pytest.raises(ReplayMismatchError):
        replay_trajectories(df, WorldConfig())


def test_configuracao_de_replay_ausente_ou_invalida(tmp_path):
    store = TrajectoryStore(_logger(tmp_path))
    path = store.export_trajectories([], tmp_path / "traj.csv")
    assert not replay_config_path(path).exists()
    assert store.load_replay_config(path) is None

    replay_config_path(path).write_text("world:\n  n_obstacles: 0\n  asas: 2\n", encoding="utf-8")
    with pytest.raises(ContractViolationError):
        store.load_replay_config(path)
    replay_config_path(path).write_text("- so\n- uma lista\n", encoding="utf-8")
    with pytest.raises(ContractViolationError):
        store.load_replay_config(path)


def test_exportacao_do_resumo(tmp_path):
    summary, _ = run_trials(PController(), REACHABLE, 5, 0)
    path = TrajectoryStore(_logger(tmp_path)).export_summary([summary], tmp_path / "summary.csv")
    df = pd.read_csv(path)
    assert df.columns.tolist() == ["controller", "trials", "success", "collision", "fall", "timeout"]
    assert np.isclose(df[["success", "collision", "fall", "timeout"]].sum(axis=1), 100.0).all()
