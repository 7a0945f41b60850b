"""Arquivo de checkpoint da política.

Layout (little-endian):
  b"SVRL" | uint32 versão | uint32 len + JSON (NetConfig + metadados)
  | uint32 n_entradas | por entrada: uint16 len + nome utf-8, uint8 ndim, uint32 * ndim
  | arrays float64 na ordem do manifesto
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from modules.exceptions import ContractViolationError
from pipeline.learning.neuralnet import NetConfig, PolicyNetwork, config_to_dict

MAGIC = b"SVRL"
FORMAT_VERSION = 1


def save_checkpoint(net: PolicyNetwork, path: Union[str, Path], metadata: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({"net": config_to_dict(net.config), "meta": metadata or {}}, sort_keys=True).encode("utf-8")

    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(header)), header,
              struct.pack("<I", len(net.params))]
    for name, arr in net.params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
    for arr in net.params.values():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    with open(path, "wb") as f:
        f.write(b"".join(chunks))
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[PolicyNetwork, dict]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ContractViolationError(f"Arquivo {path} não é um checkpoint SVRL")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise ContractViolationError(f"Versão de checkpoint não suportada: {version}")
    (hlen,) = struct.unpack_from("<I", blob, 8)
    offset = 12
    header = json.loads(blob[offset:offset + hlen].decode("utf-8"))
    offset += hlen
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4

    manifest = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + nlen].decode("utf-8")
        offset += nlen
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        manifest.append((name, tuple(shape)))

    params = {}
    for name, shape in manifest:
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(shape)
        params[name] = arr.astype(np.float64)
        offset += 8 * size
    if offset != len(blob):
        raise ContractViolationError(f"Checkpoint {path} com {len(blob) - offset} bytes sobrando")

    net = PolicyNetwork(NetConfig(**header["net"]), params)
    return net, header.get("meta", {})
