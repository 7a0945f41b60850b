"""Avaliação em lote: trials semeados, tabela de desfechos, trajetórias e replay.

O trial i usa a semente base_seed + i e gera o mundo exatamente como no
treino. Cada controlador recebe somente o que declara observar
(ver pipeline.evaluation.baselines).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
import pandera.pandas as pa
import yaml
from scipy.stats import fisher_exact

from modules.datafilehandler import DataFileHandler
from modules.exceptions import ConfigError, ContractViolationError, ReplayMismatchError
from modules.logger import require_logger
from modules.util import derive_seed
from pipeline.evaluation._contracts.eval_contract import SummaryContract, TrajectoryContract
from pipeline.evaluation.baselines import PolicyController
from pipeline.simulation.camera_render import CameraConfig
from pipeline.simulation.env_world import (
    Outcome,
    RewardConfig,
    WheelCommand,
    WorldConfig,
    control_step,
    generate_episode,
)
from pipeline.vision.preprocess import ObservationConfig, observe, state_vector

SCHEMA_DIR = Path(__file__).resolve().parent / "schemas" / "csv"
TRAJECTORY_COLUMNS = ["trial", "seed", "t", "x", "y", "heading", "left", "right", "reward", "outcome"]
SUMMARY_COLUMNS = ["controller", "trials", "success", "collision", "fall", "timeout"]
OUTCOME_ORDER = (Outcome.SUCCESS, Outcome.COLLISION, Outcome.FALL, Outcome.TIMEOUT)


@dataclass(frozen=True)
class TrajectoryStep:
    t: int
    x: float
    y: float
    heading: float
    left: float
    right: float
    reward: float
    outcome: str


@dataclass(frozen=True)
class TrialReport:
    trial: int
    seed: int
    outcome: Outcome
    steps: int
    total_reward: float
    final_goal_distance: float
    trajectory: Tuple[TrajectoryStep, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class SummaryTable:
    controller: str
    n_trials: int
    counts: Dict[str, int]

    def percent(self, outcome: Outcome) -> float:
        return 100.0 * self.counts.get(outcome.value, 0) / self.n_trials

    @property
    def successes(self) -> int:
        return self.counts.get(Outcome.SUCCESS.value, 0)

    def as_row(self) -> dict:
        row = {"controller": self.controller, "trials": self.n_trials}
        for o in OUTCOME_ORDER:
            row[o.value.lower()] = self.percent(o)
        return row


def summarize(controller: str, reports: Sequence[TrialReport]) -> SummaryTable:
    if not reports:
        raise ValueError("Nenhum trial para resumir")
    counts = {o.value: 0 for o in OUTCOME_ORDER}
    for r in reports:
        counts[r.outcome.value] += 1
    return SummaryTable(controller, len(reports), counts)


def _check_controller(controller, obs: ObservationConfig):
    observes = getattr(controller, "observes", None)
    if observes not in ("goal", "nothing", "observation"):
        raise ConfigError(f"Controlador sem declaração de observação válida: {controller!r}")
    if isinstance(controller, PolicyController):
        if controller.observation_kind == "image":
            expected = controller.policy.config.input_shape
            if tuple(expected) != obs.shape:
                raise ConfigError(f"Rede espera observação {expected}, pipeline produz {obs.shape}")
            if controller.obs_mode is not None and controller.obs_mode != obs.mode:
                raise ConfigError(
                    f"Checkpoint treinado com observação '{controller.obs_mode}', avaliação usa '{obs.mode}'"
                )


def run_trial(controller, world_config: WorldConfig, seed: int, trial: int = 0, *,
              camera: Optional[CameraConfig] = None, obs: Optional[ObservationConfig] = None,
              rewards: Optional[RewardConfig] = None) -> TrialReport:
    camera = camera or CameraConfig()
    obs = obs or ObservationConfig()
    world = generate_episode(seed, world_config)
    controller.reset(seed)
    prev_cmd = WheelCommand(0.0, 0.0)
    steps: List[TrajectoryStep] = []
    total = 0.0
    outcome = Outcome.RUNNING
    while not outcome.terminal:
        if controller.observes == "goal":
            cmd = controller.act(world.rover, world.goal)
        elif controller.observes == "observation":
            if controller.observation_kind == "state":
                cmd = controller.act(state_vector(world, prev_cmd))
            else:
                cmd = controller.act(observe(world, camera, obs))
        else:
            cmd = controller.act()
        cmd = WheelCommand.clamped(cmd.left, cmd.right)
        world, reward, outcome = control_step(world, cmd, rewards)
        total += reward
        steps.append(TrajectoryStep(len(steps), world.rover.x, world.rover.y, world.rover.heading,
                                    cmd.left, cmd.right, reward, outcome.value))
        prev_cmd = cmd
    return TrialReport(trial, int(seed), outcome, len(steps), total, world.goal_distance, tuple(steps))


def run_trials(controller, world_config: WorldConfig, n_trials: int, base_seed: int, *,
               camera: Optional[CameraConfig] = None, obs: Optional[ObservationConfig] = None,
               rewards: Optional[RewardConfig] = None, logger=None) -> Tuple[SummaryTable, List[TrialReport]]:
    if n_trials < 1:
        raise ConfigError(f"n_trials deve ser >= 1 (recebido {n_trials})")
    obs = (obs or ObservationConfig()).validate()
    world_config = world_config.validate()
    _check_controller(controller, obs)
    reports = [
        run_trial(controller, world_config, derive_seed(base_seed, i), i, camera=camera, obs=obs, rewards=rewards)
        for i in range(n_trials)
    ]
    summary = summarize(controller.name, reports)
    if logger is not None:
        pct = " | ".join(f"{o.value}={summary.percent(o):.1f}%" for o in OUTCOME_ORDER)
        logger.info(f"Eval OK | controller={controller.name} | trials={n_trials} | seed={base_seed} | {pct}")
    return summary, reports


@dataclass(frozen=True)
class SuccessComparison:
    better: str
    worse: str
    p_value: float
    alpha: float

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


def compare_success(a: SummaryTable, b: SummaryTable, alpha: float = 0.05) -> SuccessComparison:
    """Teste exato de Fisher unilateral para "taxa de sucesso de a > b"."""
    table = [[a.successes, a.n_trials - a.successes], [b.successes, b.n_trials - b.successes]]
    _, p_value = fisher_exact(table, alternative="greater")
    return SuccessComparison(a.controller, b.controller, float(p_value), alpha)


def summary_frame(summaries: Sequence[SummaryTable]) -> pd.DataFrame:
    return pd.DataFrame([s.as_row() for s in summaries], columns=SUMMARY_COLUMNS)


def format_table(summaries: Sequence[SummaryTable]) -> str:
    df = summary_frame(summaries)
    shown = pd.DataFrame({
        "Controller": df["controller"],
        "Trials": df["trials"],
        **{o.value: df[o.value.lower()].map(lambda v: f"{v:.1f}%") for o in OUTCOME_ORDER},
    })
    return shown.to_string(index=False)


def trajectory_frame(reports: Sequence[TrialReport]) -> pd.DataFrame:
    rows = [
        {"trial": r.trial, "seed": r.seed, "t": s.t, "x": s.x, "y": s.y, "heading": s.heading,
         "left": s.left, "right": s.right, "reward": s.reward, "outcome": s.outcome}
        for r in reports for s in r.trajectory
    ]
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


def total_rewards(df: pd.DataFrame) -> Dict[int, float]:
    """Soma sequencial por trial (mesma ordem de acumulação do run_trial)."""
    out: Dict[int, float] = {}
    for trial, group in df.groupby("trial", sort=True):
        total = 0.0
        for r in group.sort_values("t")["reward"]:
            total += float(r)
        out[int(trial)] = total
    return out


def replay_config_path(path: Union[str, Path]) -> Path:
    """Arquivo lateral com mundo e recompensas da exportação (traj.csv -> traj.config.yaml)."""
    path = Path(path)
    return path.with_name(f"{path.stem}.config.yaml")


def _config_from(cls, values, source: Path):
    if not isinstance(values, dict):
        raise ContractViolationError(f"Seção {cls.__name__} inválida em {source}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ContractViolationError(f"Campos desconhecidos para {cls.__name__} em {source}: {unknown}")
    return cls(**values).validate()


class TrajectoryStore:
    """Exportação/importação dos CSVs de avaliação (trajetórias e resumo)."""

    def __init__(self, logger):
        self.logger = require_logger(logger, "TrajectoryStore")
        self.files = DataFileHandler(logger=self.logger, schema_root=SCHEMA_DIR)

    def export_trajectories(
        self,
        reports: Sequence[TrialReport],
        path: Union[str, Path],
        *,
        world_config: Optional[WorldConfig] = None,
        rewards: Optional[RewardConfig] = None,
    ) -> Path:
        try:
            df = TrajectoryContract.validate(trajectory_frame(reports), lazy=True)
        except pa.errors.SchemaErrors as e:
            self.logger.error(f"Erro de validação das trajetórias: {e}")
            raise
        out = self.files.write(df, path, schema_filename="trajectories.json")
        if world_config is not None:
            self.export_replay_config(out, world_config, rewards or RewardConfig())
        return out

    def export_replay_config(self, path: Union[str, Path], world_config: WorldConfig,
                             rewards: RewardConfig) -> Path:
        target = replay_config_path(path)
        blob = {"world": asdict(world_config), "reward": asdict(rewards)}
        with open(target, "w", encoding="utf-8") as f:
            yaml.safe_dump(blob, f, sort_keys=False)
        self.logger.info(f"Configuração de replay gravada | {target.name}")
        return target

    def load_replay_config(self, path: Union[str, Path]) -> Optional[Tuple[WorldConfig, RewardConfig]]:
        """Mundo e recompensas gravados na exportação; None quando o arquivo lateral não existe."""
        target = replay_config_path(path)
        if not target.exists():
            self.logger.warning(f"Sem {target.name} ao lado das trajetórias; usando a configuração atual")
            return None
        try:
            with open(target, "r", encoding="utf-8") as f:
                blob = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            self.logger.error(f"YAML de replay inválido em {target}: {e}")
            raise ContractViolationError(f"YAML de replay inválido em {target}") from e
        if not isinstance(blob, dict):
            raise ContractViolationError(f"Configuração de replay deve ser um mapeamento: {target}")
        world = _config_from(WorldConfig, blob.get("world", {}), target)
        rewards = _config_from(RewardConfig, blob.get("reward", {}), target)
        self.logger.info(f"Configuração de replay lida | {target.name} | n_obstacles={world.n_obstacles}")
        return world, rewards

    def load_trajectories(self, path: Union[str, Path]) -> pd.DataFrame:
        df = self.files.read(path, schema_filename="trajectories.json")
        try:
            return TrajectoryContract.validate(df, lazy=True)
        except pa.errors.SchemaErrors as e:
            self.logger.error(f"Arquivo de trajetórias inválido: {e}")
            raise

    def export_summary(self, summaries: Sequence[SummaryTable], path: Union[str, Path]) -> Path:
        try:
            df = SummaryContract.validate(summary_frame(summaries), lazy=True)
        except pa.errors.SchemaErrors as e:
            self.logger.error(f"Erro de validação do resumo: {e}")
            raise
        return self.files.write(df, path, schema_filename="summary.json")


def export_trajectories(reports: Sequence[TrialReport], path: Union[str, Path], logger, *,
                        world_config: Optional[WorldConfig] = None,
                        rewards: Optional[RewardConfig] = None) -> Path:
    return TrajectoryStore(logger).export_trajectories(reports, path, world_config=world_config, rewards=rewards)


def load_trajectories(path: Union[str, Path], logger) -> pd.DataFrame:
    return TrajectoryStore(logger).load_trajectories(path)


def _same(a: float, b: float) -> bool:
    return a == b or (math.isnan(a) and math.isnan(b))


def replay_trajectories(df: pd.DataFrame, world_config: WorldConfig,
                        rewards: Optional[RewardConfig] = None) -> int:
    """Re-simula cada trial a partir da semente e dos comandos gravados.

    Exige igualdade bit a bit de pose, recompensa e desfecho; devolve o número de
    passos verificados ou levanta ReplayMismatchError.
    """
    checked = 0
    for trial, group in df.groupby("trial", sort=True):
        group = group.sort_values("t")
        seeds = group["seed"].unique()
        if len(seeds) != 1:
            raise ReplayMismatchError(f"Trial {trial} com mais de uma semente: {list(seeds)}")
        world = generate_episode(int(seeds[0]), world_config)
        for row in group.itertuples(index=False):
            world, reward, outcome = control_step(world, WheelCommand(float(row.left), float(row.right)), rewards)
            got = (world.rover.x, world.rover.y, world.rover.heading, reward)
            want = (float(row.x), float(row.y), float(row.heading), float(row.reward))
            if not all(_same(g, w) for g, w in zip(got, want)) or outcome.value != row.outcome:
                raise ReplayMismatchError(
                    f"Divergência no trial {trial}, passo {row.t}: esperado {want} / {row.outcome}, "
                    f"obtido {got} / {outcome.value}"
                )
            checked += 1
        if not outcome.terminal:
            raise ReplayMismatchError(f"Trial {trial} termina sem desfecho terminal ({outcome.value})")
    return checked
