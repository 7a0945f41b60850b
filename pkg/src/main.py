from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

# === Encontra o diretório src ===
THIS_FILE = Path(__file__).resolve()
SRC_DIR = THIS_FILE.parent  # .../src
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

# Imports do projeto
from modules.config import PRESETS, Settings
from modules.exceptions import ConfigError
from modules.imagefile import ImageFileHandler
from modules.logger import Logger
from modules.util import ensure_dir, file_sha256, format_duration
from pipeline.evaluation.baselines import CONTROLLER_NAMES, PController, PolicyController, RandomController, p_control
from pipeline.evaluation.eval_harness import (
    TrajectoryStore,
    compare_success,
    format_table,
    replay_trajectories,
    run_trials,
)
from pipeline.learning.checkpoint import load_checkpoint
from pipeline.learning.neuralnet import NET_KINDS
from pipeline.learning.ppo_train import PpoTrainer
from pipeline.simulation.camera_render import RgbImage, render_rgb, render_segmented, render_shaded
from pipeline.simulation.env_world import control_step, generate_episode
from pipeline.vision.preprocess import OBSERVATION_MODES, observe, preprocess_image


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: erro: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="semente base (treino, trials, render)")
    common.add_argument("--config", default=None, help="arquivo key=value ou YAML")
    common.add_argument("--preset", choices=sorted(PRESETS), default=None)
    common.add_argument("--obs", choices=OBSERVATION_MODES, default=None, help="modo de observação")
    common.add_argument("--net", choices=NET_KINDS, default=None, help="arquitetura da política")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECAO.CAMPO=VALOR",
                        help="sobrescreve um campo de configuração (repetível)")
    common.add_argument("--output-dir", default="runs", help="pasta de saída")
    common.add_argument("--log-dir", default=None, help="pasta de logs (default: PATH_LOGS)")

    parser = _Parser(prog="rover", description="Bancada visuomotora do rover: treino PPO, avaliação e replay.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="treina a política PPO")
    p.add_argument("--total-timesteps", type=int, default=None)
    p.add_argument("--n-envs", type=int, default=None)

    p = sub.add_parser("eval", parents=[common], help="roda trials e imprime a tabela de desfechos")
    p.add_argument("--controller", nargs="+", choices=CONTROLLER_NAMES, default=["p"])
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--checkpoint", default=None, help="checkpoint SVRL (controller ppo)")
    p.add_argument("--stochastic", action="store_true", help="amostra ações em vez da média")

    p = sub.add_parser("render", parents=[common], help="grava quadros de um episódio")
    p.add_argument("--frames", type=int, default=1, help="quadros a gravar (rover guiado pelo P-controller)")
    p.add_argument("--format", choices=("ppm", "png"), default="png")

    p = sub.add_parser("preprocess", parents=[common], help="segmenta/reduz uma imagem")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)

    p = sub.add_parser("replay", parents=[common], help="re-simula um CSV de trajetórias e confere bit a bit")
    p.add_argument("--trajectories", required=True)
    return parser


def _overrides(args) -> dict:
    values = {}
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set espera SECAO.CAMPO=VALOR (recebido {item!r})")
        values[key.strip()] = value
    if args.obs:
        values["obs.mode"] = args.obs
    if args.net:
        values["net.kind"] = args.net
    if args.seed is not None:
        values["ppo.seed"] = args.seed
        values["net.seed"] = args.seed
    if getattr(args, "total_timesteps", None) is not None:
        values["ppo.total_timesteps"] = args.total_timesteps
    if getattr(args, "n_envs", None) is not None:
        values["ppo.n_envs"] = args.n_envs
    return values


def cmd_train(args, settings: Settings, logger) -> int:
    trainer = PpoTrainer(
        logger,
        ppo=settings.ppo, world=settings.world, reward=settings.reward, camera=settings.camera,
        obs=settings.obs, net=settings.net_config, output_dir=args.output_dir,
        metadata={"preset": args.preset or ""},
    )
    result = trainer.train()
    digest = file_sha256(result.checkpoint)
    logger.info(f"Checkpoint {result.checkpoint} | sha256={digest}")
    print(f"Checkpoint: {result.checkpoint} (sha256 {digest[:12]})")
    print(f"Atualizações: {len(result.train_log)} | episódios: {len(result.episodes)}")
    return 0


def _make_controller(name: str, args, settings: Settings, logger):
    if name == "p":
        return PController(settings.pcontroller), settings.obs
    if name == "random":
        return RandomController(), settings.obs
    if not args.checkpoint:
        raise ConfigError("--controller ppo exige --checkpoint")
    policy, meta = load_checkpoint(args.checkpoint)
    obs = settings.obs
    if args.obs is None:
        obs = replace(obs, mode=meta.get("obs_mode", obs.mode))
    if policy.config.kind != "mlp":
        obs = replace(obs, width=policy.config.obs_width, height=policy.config.obs_height)
    logger.info(f"Checkpoint carregado: {args.checkpoint} | net={policy.config.kind} | obs={obs.mode}")
    controller = PolicyController(policy, obs_mode=meta.get("obs_mode"), deterministic=not args.stochastic)
    return controller, obs


def cmd_eval(args, settings: Settings, logger) -> int:
    base_seed = args.seed if args.seed is not None else 0
    out_dir = ensure_dir(args.output_dir)
    store = TrajectoryStore(logger)
    summaries = []
    for name in args.controller:
        controller, obs = _make_controller(name, args, settings, logger)
        summary, reports = run_trials(controller, settings.world, args.trials, base_seed, camera=settings.camera,
                                      obs=obs, rewards=settings.reward, logger=logger)
        store.export_trajectories(reports, out_dir / f"trajectories_{name}.csv",
                                  world_config=settings.world, rewards=settings.reward)
        summaries.append(summary)
    store.export_summary(summaries, out_dir / "summary.csv")
    print(format_table(summaries))
    for other in summaries[1:]:
        cmp = compare_success(summaries[0], other)
        verdict = "significativo" if cmp.significant else "não significativo"
        print(f"sucesso({cmp.better}) > sucesso({cmp.worse}): p={cmp.p_value:.4g} ({verdict} a 95%)")
    return 0


def cmd_render(args, settings: Settings, logger) -> int:
    seed = args.seed if args.seed is not None else 0
    out_dir = ensure_dir(Path(args.output_dir) / f"frames_seed{seed}")
    images = ImageFileHandler(logger)
    world = generate_episode(seed, settings.world)
    for frame in range(max(args.frames, 1)):
        images.save(render_rgb(render_segmented(world, settings.camera)).pixels,
                    out_dir / f"segmented_{frame:04d}.{args.format}")
        images.save(render_shaded(world, settings.camera).pixels, out_dir / f"raw_{frame:04d}.{args.format}")
        tensor = observe(world, settings.camera, settings.obs)
        images.save(_tensor_to_pixels(tensor), out_dir / f"observation_{frame:04d}.{args.format}")
        world, _, outcome = control_step(world, p_control(world.rover, world.goal, settings.pcontroller),
                                         settings.reward)
        if outcome.terminal:
            logger.info(f"Render: episódio terminou em {outcome.value} no quadro {frame}")
            break
    print(f"Quadros gravados em {out_dir}")
    return 0


def _tensor_to_pixels(tensor: np.ndarray) -> np.ndarray:
    return np.rint(np.transpose(tensor, (1, 2, 0)) * 255.0).astype(np.uint8)


def cmd_preprocess(args, settings: Settings, logger) -> int:
    images = ImageFileHandler(logger)
    image = RgbImage(images.load(args.input))
    obs = replace(settings.obs, width=args.width or settings.obs.width, height=args.height or settings.obs.height)
    tensor = preprocess_image(image, obs.validate())
    images.save(_tensor_to_pixels(tensor), args.output)
    print(f"{image.width}x{image.height} -> {obs.width}x{obs.height} ({obs.mode}): {args.output}")
    return 0


def cmd_replay(args, settings: Settings, logger) -> int:
    store = TrajectoryStore(logger)
    df = store.load_trajectories(args.trajectories)
    world, rewards = store.load_replay_config(args.trajectories) or (settings.world, settings.reward)
    if world != settings.world or rewards != settings.reward:
        logger.info("Replay com a configuração gravada na exportação (difere da atual)")
    checked = replay_trajectories(df, world, rewards)
    logger.info(f"Replay OK | {args.trajectories} | {checked} passos idênticos")
    print(f"Replay OK: {checked} passos em {df['trial'].nunique()} trials reproduzidos bit a bit")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "render": cmd_render,
    "preprocess": cmd_preprocess,
    "replay": cmd_replay,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 2
    except SystemExit as e:  # --help
        return int(e.code or 0)

    logger = Logger(path_logs=args.log_dir, run_id=args.command)
    start_time = time.time()
    try:
        settings = Settings.load(config_path=args.config, preset=args.preset, overrides=_overrides(args))
        code = COMMANDS[args.command](args, settings, logger)
    except ConfigError as e:
        logger.error(f"Erro de configuração: {e}")
        print(f"Erro de configuração: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"Falha em '{args.command}': {type(e).__name__}: {e}")
        print(f"Erro: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    finally:
        logger.info(format_duration(time.time() - start_time, f"Execução de {args.command!r}"))
        logger.close_file()
    return code


if __name__ == '__main__':
    sys.exit(run_cli())
