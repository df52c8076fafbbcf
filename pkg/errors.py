# errors.py
from typing import Optional


class InterferenceError(Exception):
    """Raíz de todos los errores del simulador."""


class InvalidActionError(InterferenceError, ValueError):
    pass


# --- Ingesta de adyacencias ---
class AdjacencyFormatError(InterferenceError):
    def __init__(self, message: str, path: Optional[str] = None,
                 row: Optional[int] = None, column: Optional[int] = None):
        self.path = path
        self.row = row
        self.column = column
        where = []
        if path:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class NonSquareError(AdjacencyFormatError):
    pass


class NonBooleanEntryError(AdjacencyFormatError):
    pass


class AdjacencyIOError(AdjacencyFormatError):
    pass


# --- Estimadores ---
class SingularDesignError(InterferenceError):
    def __init__(self, row: int, size: int):
        self.row = row
        self.size = size
        super().__init__(f"centered design for row {row} is rank deficient on {size} columns")


# --- Configuración ---
class ConfigError(InterferenceError):
    pass


class ConfigParseError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


# --- Ejecución ---
class RoundError(InterferenceError):
    def __init__(self, round_index: int, cause: BaseException):
        self.round_index = round_index
        super().__init__(f"round {round_index}: {type(cause).__name__}: {cause}")


class InvariantViolation(InterferenceError):
    pass


class OutputError(InterferenceError):
    pass
