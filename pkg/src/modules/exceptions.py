"""Exceções do projeto. Todas herdam de um built-in para que quem já trata
ValueError/RuntimeError continue funcionando."""


class RoverError(Exception):
    """Base de todos os erros do workbench."""


class ConfigError(RoverError, ValueError):
    """Configuração inválida (CLI mapeia para exit code 2)."""


class UnsatisfiableConfigError(ConfigError):
    """Amostragem por rejeição não encontrou posição válida."""


class ContractViolationError(RoverError, RuntimeError):
    """Chamada fora do contrato (ex.: step em episódio já encerrado)."""


class ShapeError(RoverError, ValueError):
    pass


class UnsupportedDirectionError(RoverError, ValueError):
    """Reamostragem pedida em direção não suportada (upscale)."""


class NumericalError(RoverError, FloatingPointError):
    """NaN/Inf detectado durante a atualização."""


class ReplayMismatchError(RoverError, AssertionError):
    pass
