from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from modules.logger import require_logger

SUPPORTED_FORMATS = {".ppm": "PPM", ".png": "PNG"}


class ImageFileHandler:
    """Gravação/leitura de quadros RGB (H, W, 3) uint8 em PPM (P6) ou PNG."""

    def __init__(self, logger):
        self.logger = require_logger(logger, "ImageFileHandler")

    @staticmethod
    def _format_for(path: Path) -> str:
        fmt = SUPPORTED_FORMATS.get(path.suffix.lower())
        if fmt is None:
            raise ValueError(f"Extensão de imagem não suportada: {path.suffix} (use {sorted(SUPPORTED_FORMATS)})")
        return fmt

    def save(self, pixels: np.ndarray, path: Union[str, Path]) -> Path:
        path = Path(path)
        fmt = self._format_for(path)
        arr = np.asarray(pixels)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise ValueError(f"Imagem deve ser (H, W, 3) uint8; recebido {arr.shape} {arr.dtype}")
        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            Image.fromarray(arr).save(path, format=fmt)
        except OSError as e:
            self.logger.error(f"Falha ao gravar imagem {path}: {e}")
            raise
        self.logger.info(f"Imagem gravada: {path.name} ({arr.shape[1]}x{arr.shape[0]})")
        return path

    def load(self, path: Union[str, Path]) -> np.ndarray:
        path = Path(path)
        self._format_for(path)
        if not path.exists():
            self.logger.error(f"Imagem não encontrada: {path}")
            raise FileNotFoundError(f"Imagem não encontrada: {path}")
        with Image.open(path) as img:
            return np.array(img.convert("RGB"), dtype=np.uint8)
