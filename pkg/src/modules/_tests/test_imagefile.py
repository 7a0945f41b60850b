import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

import numpy as np
import pytest

from modules.imagefile import ImageFileHandler
from modules.logger import Logger


@pytest.fixture
def images(tmp_path):
    return ImageFileHandler(Logger(path_logs=tmp_path / "logs"))


@pytest.mark.parametrize("ext", [".png", ".ppm"])
def test_round_trip_sem_perdas(images, tmp_path, ext):
    pixels = np.random.default_rng(0).integers(0, 256, size=(27, 48, 3), dtype=np.uint8)
    path = images.save(pixels, tmp_path / f"quadro{ext}")
    assert np.array_equal(images.load(path), pixels)


def test_ppm_binario(images, tmp_path):
    path = images.save(np.zeros((2, 3, 3), dtype=np.uint8), tmp_path / "p.ppm")
    assert path.read_bytes()[:2] == b"P6"


def test_entradas_invalidas(images, tmp_path):
    with pytest.raises(ValueError):
        images.save(np.zeros((2, 2, 3), dtype=np.uint8), tmp_path / "x.bmp")
    with pytest.raises(ValueError):
        images.save(np.zeros((2, 2, 3), dtype=np.float64), tmp_path / "x.png")
    with pytest.raises(FileNotFoundError):
        images.load(tmp_path / "nada.png")
