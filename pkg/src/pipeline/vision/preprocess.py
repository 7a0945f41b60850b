"""Pré-processamento das imagens da câmera.

Duas etapas: segmentação em 4 classes e redução bicúbica (kernel de
convolução cúbica separável, a = -0.5, suporte 4x4). Depois converte para o
tensor de observação (C, H, W) em [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from modules.exceptions import ConfigError, ShapeError, UnsupportedDirectionError
from pipeline.simulation.camera_render import (
    PALETTE,
    CameraConfig,
    ClassImage,
    RgbImage,
    render_rgb,
    render_segmented,
    render_shaded,
)
from pipeline.simulation.env_world import WheelCommand, World, wrap_angle

CUBIC_A = -0.5
OBSERVATION_MODES = ("segmented", "raw")
STATE_VECTOR_SIZE = 7


@dataclass(frozen=True)
class ObservationConfig:
    width: int = 48
    height: int = 27
    mode: str = "segmented"
    requantize: bool = True

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (3, self.height, self.width)

    def validate(self) -> "ObservationConfig":
        if self.mode not in OBSERVATION_MODES:
            raise ConfigError(f"Modo de observação inválido: {self.mode!r} (use {OBSERVATION_MODES})")
        if self.width < 1 or self.height < 1:
            raise ConfigError("Resolução de observação deve ser positiva")
        return self


def cubic_weight(x, a: float = CUBIC_A):
    """Kernel de convolução cúbica (Keys)."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def sample_positions(n_in: int, n_out: int) -> np.ndarray:
    """Coordenadas de origem alinhadas ao centro do pixel."""
    return (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5


def resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Matriz (n_out, n_in) com os pesos cúbicos; bordas por clamp de índice."""
    pos = sample_positions(n_in, n_out)
    base = np.floor(pos).astype(np.int64)
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    for k in range(-1, 3):
        idx = base + k
        w = cubic_weight(pos - idx)
        np.add.at(mat, (rows, np.clip(idx, 0, n_in - 1)), w)
    return mat


def bicubic_interpolate(image: RgbImage, out_w: int, out_h: int) -> np.ndarray:
    """Valores interpolados (float64, já limitados a [0, 255]) antes da quantização."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"Tamanho de saída inválido: {out_w}x{out_h}")
    if out_w > image.width or out_h > image.height:
        raise UnsupportedDirectionError(
            f"Upscale não suportado: {image.width}x{image.height} -> {out_w}x{out_h}"
        )
    wy = resample_matrix(image.height, out_h)
    wx = resample_matrix(image.width, out_w)
    src = image.pixels.astype(np.float64)
    rows = np.tensordot(wy, src, axes=([1], [0]))                      # (out_h, W, 3)
    out = np.tensordot(rows, wx, axes=([1], [1])).transpose(0, 2, 1)  # (out_h, out_w, 3)
    return np.clip(out, 0.0, 255.0)


def bicubic_downsample(image: RgbImage, out_w: int, out_h: int) -> RgbImage:
    values = bicubic_interpolate(image, out_w, out_h)
    return RgbImage(np.rint(values).astype(np.uint8))


def class_quantize(image: RgbImage) -> ClassImage:
    px = image.pixels.astype(np.int64)
    diff = px[:, :, None, :] - PALETTE.astype(np.int64)[None, None, :, :]
    dist2 = np.einsum("hwkc,hwkc->hwk", diff, diff)
    # argmin devolve o primeiro mínimo: empate resolvido pela ordem das classes
    return ClassImage(np.argmin(dist2, axis=2).astype(np.uint8))


def to_tensor(image: RgbImage, expected_shape: Optional[Tuple[int, int, int]] = None) -> np.ndarray:
    tensor = np.transpose(image.pixels, (2, 0, 1)).astype(np.float64) / 255.0
    if expected_shape is not None and tuple(tensor.shape) != tuple(expected_shape):
        raise ShapeError(f"Observação com shape {tensor.shape}, esperado {tuple(expected_shape)}")
    return tensor


def preprocess_image(image: RgbImage, obs: ObservationConfig) -> np.ndarray:
    """Imagem já renderizada -> tensor, na ordem segmentar e depois reduzir."""
    obs.validate()
    if (image.width, image.height) != (obs.width, obs.height):
        image = bicubic_downsample(image, obs.width, obs.height)
    if obs.mode == "segmented" and obs.requantize:
        image = render_rgb(class_quantize(image))
    return to_tensor(image, obs.shape)


def render_observation_image(world: World, cam: CameraConfig, obs: ObservationConfig) -> RgbImage:
    if obs.validate().mode == "raw":
        return render_shaded(world, cam)
    return render_rgb(render_segmented(world, cam))


def observe(world: World, cam: CameraConfig, obs: ObservationConfig) -> np.ndarray:
    return preprocess_image(render_observation_image(world, cam, obs), obs)


def state_vector(world: World, prev_cmd: Optional[WheelCommand] = None) -> np.ndarray:
    """Vetor proprioceptivo do baseline MLP: bearing e distância ao objetivo,
    heading, x, y e o último comando das rodas."""
    prev_cmd = prev_cmd or WheelCommand(0.0, 0.0)
    r = world.rover
    gx, gy = world.goal
    bearing = wrap_angle(math.atan2(gy - r.y, gx - r.x) - r.heading)
    side = world.config.map_side
    return np.array(
        [bearing / math.pi, world.goal_distance / side, r.heading / math.pi,
         r.x / side, r.y / side, prev_cmd.left, prev_cmd.right],
        dtype=np.float64,
    )
