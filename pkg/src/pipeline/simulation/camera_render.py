"""Câmera sintética: raycasting vetorizado (numpy) da cena do rover.

A cena tem três tipos de superfície: plano do chão (z=0), rochas esféricas
apoiadas no chão e o farol do objetivo (cilindro vertical com tampa). Cada
pixel recebe um raio primário; a menor interseção dentro de
[near_clip, far_clip] define a classe. Sem interseção -> Space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from modules.exceptions import ConfigError
from pipeline.simulation.env_world import World

GOAL_BEACON_RADIUS = 0.3
GOAL_BEACON_HEIGHT = 1.0


class SemanticClass(IntEnum):
    GROUND = 0
    ROCK = 1
    GOAL = 2
    SPACE = 3


# ordem das linhas = ordem das classes (desempate do class_quantize)
PALETTE = np.array(
    [
        (64, 64, 64),    # Ground
        (255, 0, 0),     # Rock
        (0, 0, 255),     # Goal
        (0, 0, 0),       # Space
    ],
    dtype=np.uint8,
)

# albedo do modo "raw"
ALBEDO = np.array(
    [
        (0.62, 0.56, 0.48),
        (0.45, 0.38, 0.33),
        (0.85, 0.80, 0.20),
    ],
    dtype=np.float64,
)
LIGHT_DIR = np.array([0.35, -0.25, 0.90]) / np.linalg.norm([0.35, -0.25, 0.90])
AMBIENT = 0.25
ATTENUATION = 0.04
SKY_ZENITH = np.array([70.0, 110.0, 190.0])
SKY_HORIZON = np.array([180.0, 200.0, 230.0])


@dataclass(frozen=True)
class CameraConfig:
    width: int = 48
    height: int = 27
    horizontal_fov: float = 69.4
    near_clip: float = 0.01
    far_clip: float = 20.0
    mount_height: float = 0.25
    pitch: float = 0.0

    def validate(self) -> "CameraConfig":
        if self.width < 4 or self.height < 4:
            raise ConfigError(f"Resolução mínima 4x4 (recebido {self.width}x{self.height})")
        if not (0.0 < self.horizontal_fov < 180.0):
            raise ConfigError("horizontal_fov deve estar em (0, 180)")
        if not (0.0 < self.near_clip < self.far_clip):
            raise ConfigError("É preciso 0 < near_clip < far_clip")
        return self

    def with_resolution(self, width: int, height: int) -> "CameraConfig":
        return CameraConfig(width, height, self.horizontal_fov, self.near_clip,
                            self.far_clip, self.mount_height, self.pitch)


@dataclass(frozen=True)
class ClassImage:
    classes: np.ndarray  # (H, W) uint8, valores de SemanticClass

    @property
    def height(self) -> int:
        return int(self.classes.shape[0])

    @property
    def width(self) -> int:
        return int(self.classes.shape[1])

    def histogram(self) -> np.ndarray:
        return np.bincount(self.classes.ravel(), minlength=len(SemanticClass))


@dataclass(frozen=True)
class RgbImage:
    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError(f"RgbImage espera (H, W, 3); recebido {self.pixels.shape}")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class RaycastResult:
    classes: np.ndarray   # (H, W) uint8
    distance: np.ndarray  # (H, W) parâmetro do raio; inf onde não houve hit
    normals: np.ndarray   # (H, W, 3)
    directions: np.ndarray  # (H, W, 3) unitárias

    @property
    def hit_mask(self) -> np.ndarray:
        return self.classes != SemanticClass.SPACE


def camera_basis(heading: float, pitch: float):
    """(forward, right, up) no referencial do mundo."""
    ch, sh = math.cos(heading), math.sin(heading)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([ch * cp, sh * cp, sp])
    right = np.array([sh, -ch, 0.0])
    up = np.array([-ch * sp, -sh * sp, cp])
    return forward, right, up


def ray_directions(cam: CameraConfig, heading: float) -> np.ndarray:
    tan_w = math.tan(math.radians(cam.horizontal_fov) / 2.0)
    tan_h = tan_w * cam.height / cam.width
    cols = (np.arange(cam.width) + 0.5) / cam.width
    rows = (np.arange(cam.height) + 0.5) / cam.height
    sx = (2.0 * cols - 1.0) * tan_w
    sy = (1.0 - 2.0 * rows) * tan_h
    forward, right, up = camera_basis(heading, cam.pitch)
    d = (forward[None, None, :]
         + sx[None, :, None] * right[None, None, :]
         + sy[:, None, None] * up[None, None, :])
    return d / np.linalg.norm(d, axis=2, keepdims=True)


def _in_range(t: np.ndarray, cam: CameraConfig) -> np.ndarray:
    return (t >= cam.near_clip) & (t <= cam.far_clip)


def _sphere_hits(origin, dirs, center, radius, cam):
    oc = origin - center
    b = dirs @ oc
    c = float(oc @ oc) - radius * radius
    disc = b * b - c
    hit = disc >= 0.0
    root = np.sqrt(np.where(hit, disc, 0.0))
    t0 = -b - root
    t1 = -b + root
    t = np.where(hit & _in_range(t0, cam), t0, np.where(hit & _in_range(t1, cam), t1, np.inf))
    return t


def _beacon_hits(origin, dirs, goal, cam):
    """Cilindro vertical (lateral + tampa superior)."""
    ox, oy = origin[0] - goal[0], origin[1] - goal[1]
    dx, dy, dz = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    a = dx * dx + dy * dy
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - GOAL_BEACON_RADIUS ** 2
    safe_a = np.where(a > 1e-12, a, 1.0)
    disc = b * b - a * c
    hit = (a > 1e-12) & (disc >= 0.0)
    root = np.sqrt(np.where(hit, disc, 0.0))

    best = np.full(a.shape, np.inf)
    for t in ((-b - root) / safe_a, (-b + root) / safe_a):
        z = origin[2] + t * dz
        ok = hit & _in_range(t, cam) & (z >= 0.0) & (z <= GOAL_BEACON_HEIGHT)
        best = np.where(ok & (t < best), t, best)

    safe_dz = np.where(np.abs(dz) > 1e-12, dz, 1.0)
    t_cap = (GOAL_BEACON_HEIGHT - origin[2]) / safe_dz
    px = ox + t_cap * dx
    py = oy + t_cap * dy
    cap_ok = (np.abs(dz) > 1e-12) & _in_range(t_cap, cam) & (px * px + py * py <= GOAL_BEACON_RADIUS ** 2)
    cap_t = np.where(cap_ok, t_cap, np.inf)
    use_cap = cap_t < best
    return np.where(use_cap, cap_t, best), use_cap


def raycast(world: World, cam: CameraConfig) -> RaycastResult:
    cam.validate()
    rover = world.rover
    origin = np.array([rover.x, rover.y, cam.mount_height])
    dirs = ray_directions(cam, rover.heading)
    shape = dirs.shape[:2]

    best_t = np.full(shape, np.inf)
    classes = np.full(shape, SemanticClass.SPACE, dtype=np.uint8)
    normals = np.zeros(shape + (3,))

    # chão
    dz = dirs[..., 2]
    safe_dz = np.where(dz < 0.0, dz, -1.0)
    t_ground = np.where(dz < 0.0, -origin[2] / safe_dz, np.inf)
    ground_ok = _in_range(t_ground, cam)
    best_t = np.where(ground_ok, t_ground, best_t)
    classes[ground_ok] = SemanticClass.GROUND
    normals[ground_ok] = (0.0, 0.0, 1.0)

    # rochas (esferas apoiadas no chão)
    for obs in world.obstacles:
        center = np.array([obs.center[0], obs.center[1], obs.radius])
        t = _sphere_hits(origin, dirs, center, obs.radius, cam)
        closer = t < best_t
        if closer.any():
            best_t = np.where(closer, t, best_t)
            classes[closer] = SemanticClass.ROCK
            p = origin + t[closer][:, None] * dirs[closer]
            normals[closer] = (p - center) / obs.radius

    # farol do objetivo
    t, on_cap = _beacon_hits(origin, dirs, world.goal, cam)
    closer = t < best_t
    if closer.any():
        best_t = np.where(closer, t, best_t)
        classes[closer] = SemanticClass.GOAL
        p = origin + t[closer][:, None] * dirs[closer]
        lateral = np.zeros_like(p)
        lateral[:, 0] = (p[:, 0] - world.goal[0]) / GOAL_BEACON_RADIUS
        lateral[:, 1] = (p[:, 1] - world.goal[1]) / GOAL_BEACON_RADIUS
        cap = on_cap[closer]
        lateral[cap] = (0.0, 0.0, 1.0)
        normals[closer] = lateral

    return RaycastResult(classes=classes, distance=best_t, normals=normals, directions=dirs)


def render_segmented(world: World, cam: CameraConfig) -> ClassImage:
    return ClassImage(raycast(world, cam).classes)


def render_rgb(image: ClassImage) -> RgbImage:
    return RgbImage(PALETTE[image.classes])


def sky_colors(directions: np.ndarray) -> np.ndarray:
    """Gradiente do céu em função da elevação do raio."""
    elev = np.clip(directions[..., 2], 0.0, 1.0)[..., None]
    return SKY_HORIZON * (1.0 - elev) + SKY_ZENITH * elev


def render_shaded(world: World, cam: CameraConfig) -> RgbImage:
    """Modo "raw": albedo por superfície, Lambert com luz direcional fixa e
    atenuação por distância. Usa o mesmo raycast do render_segmented."""
    hit = raycast(world, cam)
    out = sky_colors(hit.directions)
    mask = hit.hit_mask
    if mask.any():
        cls = hit.classes[mask]
        lambert = np.clip(hit.normals[mask] @ LIGHT_DIR, 0.0, 1.0)
        shade = AMBIENT + (1.0 - AMBIENT) * lambert
        atten = 1.0 / (1.0 + ATTENUATION * hit.distance[mask])
        out[mask] = 255.0 * ALBEDO[cls] * (shade * atten)[:, None]
    return RgbImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))
