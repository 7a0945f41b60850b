from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd

from modules.logger import require_logger


class DataFileHandler:
    """
    Leitura e escrita de CSV guiadas por **schema JSON obrigatório**:
      - ordem e tipos das colunas vêm do schema ("fields": [{name, type}])
      - encoding/delimiter do schema (default utf-8 / ",")
      - floats escritos com repr de ida-e-volta e lidos com float_precision="round_trip",
        para que replay e comparações bit a bit funcionem
      - cabeçalho sempre na 1ª linha; arquivo sem dados vira só cabeçalho
    """

    _TYPE_MAP: Dict[str, str] = {
        "string": "string",
        "int": "int64", "int64": "int64", "integer": "int64",
        "float": "float64", "float64": "float64", "number": "float64",
        "bool": "bool", "boolean": "bool",
    }

    def __init__(
        self,
        logger,
        *,
        default_encoding: str = "utf-8",
        schema_root: Optional[Union[str, Path]] = None,
    ):
        self.logger = require_logger(logger, "DataFileHandler")
        self.default_encoding = default_encoding
        self.schema_root = Path(schema_root) if schema_root else Path("schemas") / "csv"

    # --- helper de log ---
    def _log(self, level: str, msg: str) -> None:
        if level in ("warn", "warning"):
            self.logger.warning(msg)
        elif level in ("err", "error"):
            self.logger.error(msg)
        else:
            self.logger.info(msg)

    # ===================== SCHEMA HELPERS =====================

    def _load_schema_file(self, schema_filename: Union[str, Path]) -> Dict[str, Any]:
        p = Path(schema_filename)
        # relativo e inexistente: resolve via schema_root
        if not p.exists() and not p.is_absolute():
            candidate = self.schema_root / p
            if candidate.exists():
                p = candidate
        if not p.exists():
            raise FileNotFoundError(f"Schema não encontrado: {p}")
        with open(p, "r", encoding=self.default_encoding) as f:
            return json.load(f)

    def load_generic_schema(self, schema_filename: Union[str, Path]) -> Tuple[Dict[str, str], List[str], str, str]:
        blob = self._load_schema_file(schema_filename)
        mapping = self._extract_schema_mapping(blob)
        if not mapping:
            raise ValueError(f"O schema '{schema_filename}' não definiu colunas/tipos válidos.")
        return mapping, list(mapping), blob.get("delimiter", ","), blob.get("encoding", self.default_encoding)

    def _extract_schema_mapping(self, blob: Dict[str, Any]) -> Dict[str, str]:
        out: Dict[str, str] = {}
        for coldef in blob.get("fields") or blob.get("columns") or []:
            name = coldef.get("name")
            if name:
                typ = str(coldef.get("type") or "string").strip().lower()
                if typ not in self._TYPE_MAP:
                    raise ValueError(f"Tipo '{typ}' não suportado na coluna {name}")
                out[name] = typ
        return out

    # ===================== LEITURA / ESCRITA =====================

    def read(
        self,
        path: Union[str, Path],
        *,
        schema_filename: Union[str, Path],
        validate_columns: bool = True,
    ) -> pd.DataFrame:
        if not schema_filename:
            raise ValueError("schema_filename é obrigatório em DataFileHandler.read()")
        path = Path(path)
        schema_map, ordered, delimiter, encoding = self.load_generic_schema(schema_filename)

        dtypes = {c: ("str" if self._TYPE_MAP[t] == "string" else self._TYPE_MAP[t]) for c, t in schema_map.items()}
        df = pd.read_csv(
            path,
            sep=delimiter,
            encoding=encoding,
            dtype=dtypes,
            keep_default_na=False,
            float_precision="round_trip",
            header=0,
        )
        df.columns = [str(c).lstrip("\ufeff").strip() for c in df.columns]
        if validate_columns:
            self._validate_columns(list(df.columns), expected=ordered)
        df = self._apply_schema(df, schema_map)
        self._log("info", f"Leitura OK | {path.name} | {len(df)} linhas")
        return df

    def write(
        self,
        df: pd.DataFrame,
        path: Union[str, Path],
        *,
        schema_filename: Union[str, Path],
    ) -> Path:
        path = Path(path)
        schema_map, ordered, delimiter, encoding = self.load_generic_schema(schema_filename)
        self._validate_columns(list(df.columns), expected=ordered)
        out = self._apply_schema(df, schema_map)
        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            out.to_csv(path, sep=delimiter, encoding=encoding, index=False, lineterminator="\n")
        except OSError as e:
            self._log("error", f"Falha ao gravar {path}: {e}")
            raise
        self._log("info", f"Gravação OK | {path.name} | {len(out)} linhas")
        return path

    # ===================== SUPORTE =====================

    def _validate_columns(self, got: List[str], expected: List[str]) -> None:
        got_set = set(map(str, got))
        exp_set = set(map(str, expected))
        missing = [c for c in expected if c not in got_set]
        extra = [c for c in got if c not in exp_set]
        if missing or extra:
            msg = []
            if missing:
                msg.append(f"faltando: {missing}")
            if extra:
                msg.append(f"colunas inesperadas: {extra}")
            self._log("error", "Cabeçalhos divergentes do schema: " + "; ".join(msg))
            raise ValueError("Cabeçalhos divergentes do schema: " + "; ".join(msg))

    def _apply_schema(self, df: pd.DataFrame, schema: Dict[str, str]) -> pd.DataFrame:
        out = df[list(schema.keys())].copy()
        for col, typ in schema.items():
            target = self._TYPE_MAP[typ]
            if target == "string":
                out[col] = out[col].astype(str)
            else:
                out[col] = out[col].astype(target)
        return out.reset_index(drop=True)
