import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..', '..')))

from collections import OrderedDict

import numpy as np
import pytest

from modules.exceptions import ContractViolationError
from pipeline.learning.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from pipeline.learning.neuralnet import NetConfig, PolicyNetwork


@pytest.mark.parametrize("kind", ["cnn-lstm", "cnn", "mlp"])
def test_checkpoint_round_trip_bit_a_bit(tmp_path, kind):
    net = PolicyNetwork(NetConfig(kind=kind, seed=3))
    rng = np.random.default_rng(0)
    net.set_params(OrderedDict((k, v + rng.standard_normal(v.shape)) for k, v in net.params.items()))
    path = save_checkpoint(net, tmp_path / "policy.svrl", {"obs_mode": "raw", "update": 12})

    loaded, meta = load_checkpoint(path)
    assert loaded.config == net.config
    assert meta == {"obs_mode": "raw", "update": 12}
    assert list(loaded.params) == list(net.params)
    for name, arr in net.params.items():
        assert loaded.params[name].tobytes() == arr.tobytes()

    obs = rng.uniform(0, 1, size=net.config.input_shape)
    a, _ = net.forward(obs, net.initial_state())
    b, _ = loaded.forward(obs, loaded.initial_state())
    assert np.array_equal(a.mean, b.mean) and a.value == b.value


def test_checkpoint_arquivo_comeca_com_magic(tmp_path):
    path = save_checkpoint(PolicyNetwork(NetConfig(kind="mlp")), tmp_path / "sub" / "p.svrl")
    assert path.read_bytes()[:4] == MAGIC


def test_checkpoint_magic_invalido(tmp_path):
    path = tmp_path / "bad.svrl"
    path.write_bytes(b"NOPE" + bytes(32))
    with pytest.raises(ContractViolationError):
        load_checkpoint(path)


def test_checkpoint_com_bytes_sobrando(tmp_path):
    path = save_checkpoint(PolicyNetwork(NetConfig(kind="mlp")), tmp_path / "p.svrl")
    path.write_bytes(path.read_bytes() + b"\x00" * 8)
    with pytest.raises(ContractViolationError):
        load_checkpoint(path)
