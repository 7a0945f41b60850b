"""Configuração em camadas.

Ordem (a última vence): defaults dos dataclasses -> preset -> arquivo -> flags da CLI.
Arquivo: texto key=value (dotenv_values) com chaves `secao.campo`, ou YAML
aninhado (`secao: {campo: valor}`). Caminho via --config ou ROVER_CONFIG_FILE.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml
from dotenv import dotenv_values, load_dotenv

from modules.exceptions import ConfigError
from pipeline.evaluation.baselines import PControllerConfig
from pipeline.learning.neuralnet import NetConfig
from pipeline.learning.ppo_train import DESK_TOTAL_TIMESTEPS, FULL_TOTAL_TIMESTEPS, PpoConfig
from pipeline.simulation.camera_render import CameraConfig
from pipeline.simulation.env_world import RewardConfig, WorldConfig
from pipeline.vision.preprocess import ObservationConfig

load_dotenv()
CONFIG_FILE = os.getenv("ROVER_CONFIG_FILE")

SECTIONS = {
    "world": WorldConfig,
    "reward": RewardConfig,
    "camera": CameraConfig,
    "obs": ObservationConfig,
    "net": NetConfig,
    "ppo": PpoConfig,
    "pcontroller": PControllerConfig,
}

# config1..3 e mlp: os quatro setups treinados; full: orçamento completo de passos
PRESETS: Dict[str, Dict[str, Any]] = {
    "config1": {"obs.mode": "segmented", "net.kind": "cnn-lstm"},
    "config2": {"obs.mode": "segmented", "net.kind": "cnn"},
    "config3": {"obs.mode": "raw", "net.kind": "cnn-lstm"},
    "mlp": {"net.kind": "mlp"},
    "full": {"ppo.total_timesteps": FULL_TOTAL_TIMESTEPS},
}

_TRUE = {"true", "1", "yes", "sim", "y", "t"}
_FALSE = {"false", "0", "no", "nao", "não", "n", "f"}


def _coerce(key: str, raw: Any, default: Any) -> Any:
    try:
        if isinstance(raw, str):
            raw = raw.strip()
            if raw.lower() in ("none", "null", ""):
                if default is None:
                    return None
                raise ValueError("valor vazio")
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            text = str(raw).lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(f"booleano inválido {raw!r}")
        if isinstance(default, int):
            value = float(raw)
            if not value.is_integer():
                raise ValueError(f"inteiro esperado, recebido {raw!r}")
            return int(value)
        if isinstance(default, float) or default is None:
            value = float(raw)
            if math.isnan(value):
                raise ValueError("NaN")
            return value
        return str(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Valor inválido para {key}: {raw!r} ({e})") from e


def _flatten(blob: Mapping[str, Any]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for section, values in blob.items():
        if isinstance(values, Mapping):
            for name, value in values.items():
                out[f"{section}.{name}"] = value
        else:
            out[str(section)] = values
    return out


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Arquivo de configuração não encontrado: {path}")
    if path.suffix.lower() in (".yml", ".yaml"):
        with open(path, "r", encoding="utf-8") as f:
            try:
                blob = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"YAML inválido em {path}: {e}") from e
        if not isinstance(blob, Mapping):
            raise ConfigError(f"YAML de configuração deve ser um mapeamento: {path}")
        return _flatten(blob)
    return {k: v for k, v in dotenv_values(path).items() if v is not None}


@dataclass(frozen=True)
class Settings:
    world: WorldConfig = field(default_factory=WorldConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    obs: ObservationConfig = field(default_factory=ObservationConfig)
    net: NetConfig = field(default_factory=NetConfig)
    ppo: PpoConfig = field(default_factory=lambda: PpoConfig(total_timesteps=DESK_TOTAL_TIMESTEPS))
    pcontroller: PControllerConfig = field(default_factory=PControllerConfig)

    @property
    def net_config(self) -> NetConfig:
        """NetConfig com a resolução de entrada amarrada à observação."""
        return replace(self.net, obs_height=self.obs.height, obs_width=self.obs.width)

    def apply(self, values: Mapping[str, Any]) -> "Settings":
        updates: Dict[str, Dict[str, Any]] = {}
        for key, raw in values.items():
            section, _, name = str(key).partition(".")
            cls = SECTIONS.get(section)
            if cls is None or not name:
                raise ConfigError(f"Chave de configuração desconhecida: {key!r} (seções: {sorted(SECTIONS)})")
            current = getattr(self, section)
            known = {f.name for f in fields(cls)}
            if name not in known:
                raise ConfigError(f"Campo desconhecido {key!r}; válidos: {sorted(known)}")
            updates.setdefault(section, {})[name] = _coerce(key, raw, getattr(current, name))
        new = {s: replace(getattr(self, s), **kv) for s, kv in updates.items()}
        return replace(self, **new)

    def validate(self) -> "Settings":
        for section in SECTIONS:
            getattr(self, section).validate()
        # a observação só sai da câmera por redução (sem upscale)
        if self.obs.width > self.camera.width or self.obs.height > self.camera.height:
            raise ConfigError(
                f"Observação {self.obs.width}x{self.obs.height} maior que a câmera "
                f"{self.camera.width}x{self.camera.height}"
            )
        self.net_config.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {s: {f.name: getattr(getattr(self, s), f.name) for f in fields(SECTIONS[s])} for s in SECTIONS}

    @classmethod
    def load(
        cls,
        *,
        config_path: Optional[Union[str, Path]] = None,
        preset: Optional[str] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "Settings":
        settings = cls()
        if preset:
            if preset not in PRESETS:
                raise ConfigError(f"Preset desconhecido: {preset!r} (use {sorted(PRESETS)})")
            settings = settings.apply(PRESETS[preset])
        path = config_path or CONFIG_FILE
        if path:
            settings = settings.apply(read_config_file(path))
        if overrides:
            settings = settings.apply(overrides)
        return settings.validate()
