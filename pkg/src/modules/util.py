import datetime
import hashlib
from pathlib import Path
from typing import Union

SEED_MODULUS = 2 ** 63
HASH_CHUNK = 1 << 16


def file_sha256(path, *, chunk_size: int = HASH_CHUNK) -> str:
    """SHA-256 (hex) de um artefato da execução, lido em blocos."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        while chunk := f.read(chunk_size):
            digest.update(chunk)
    return digest.hexdigest()


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def derive_seed(base_seed: int, index: int) -> int:
    """Semente do fluxo `index` (base_seed + index), reduzida ao intervalo de 63 bits."""
    return (int(base_seed) + int(index)) % SEED_MODULUS


def format_duration(elapsed: Union[float, datetime.timedelta], label: str = "Duração") -> str:
    """Duração compacta para os logs de execução, p.ex. `Treino: 1h 02min 05s`.

    Abaixo de um segundo mostra milissegundos.
    """
    seconds = elapsed.total_seconds() if isinstance(elapsed, datetime.timedelta) else float(elapsed)
    if seconds < 1.0:
        return f"{label}: {int(round(seconds * 1000))} ms"

    days, rest = divmod(int(seconds), 86400)
    hours, rest = divmod(rest, 3600)
    minutes, secs = divmod(rest, 60)
    parts = []
    if days:
        parts.append(f"{days}d")
    if parts or hours:
        parts.append(f"{hours}h")
    if parts or minutes:
        parts.append(f"{minutes:02d}min" if parts else f"{minutes}min")
    parts.append(f"{secs:02d}s" if parts else f"{secs}s")
    return f"{label}: " + " ".join(parts)
