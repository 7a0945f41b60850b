import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

import datetime

import pytest

from modules.logger import Logger, require_logger
from modules.util import SEED_MODULUS, derive_seed, ensure_dir, file_sha256, format_duration


def test_derive_seed():
    assert derive_seed(10, 3) == 13
    assert derive_seed(SEED_MODULUS - 1, 1) == 0


def test_formata_duracao():
    assert format_duration(0.25) == "Duração: 250 ms"
    assert format_duration(0) == "Duração: 0 ms"
    assert format_duration(42.9) == "Duração: 42s"
    assert format_duration(125) == "Duração: 2min 05s"
    assert format_duration(3725, "Treino") == "Treino: 1h 02min 05s"
    assert format_duration(datetime.timedelta(days=2, seconds=7)) == "Duração: 2d 0h 00min 07s"


def test_hash_e_ensure_dir(tmp_path):
    d = ensure_dir(tmp_path / "a" / "b")
    (d / "f.txt").write_bytes(b"abc")
    assert file_sha256(d / "f.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    # o resultado não depende do tamanho do bloco
    (d / "g.bin").write_bytes(bytes(range(256)) * 40)
    assert file_sha256(d / "g.bin", chunk_size=7) == file_sha256(d / "g.bin")


def test_logger_nao_duplica_handlers(tmp_path):
    a = Logger(path_logs=tmp_path, run_id="x", log_name="t.log")
    b = Logger(path_logs=tmp_path, run_id="y", log_name="t.log")
    assert a.auto_logger is b.auto_logger
    assert len(a.auto_logger.handlers) == 1
    a.info("primeira")
    b.warning("segunda")
    a.close_file()
    text = (tmp_path / "t.log").read_text(encoding="utf-8")
    assert "[x] primeira" in text and "[y] segunda" in text


def test_require_logger():
    with pytest.raises(ValueError):
        require_logger(None, "X")
    with pytest.raises(TypeError):
        require_logger(object(), "X")
