"""Exception types.  The CLI maps each family to an exit code."""


class CstDispatchError(Exception):
    exit_code = 1


class ConfigError(CstDispatchError, ValueError):
    exit_code = 2


class DataError(CstDispatchError, ValueError):
    """Malformed or inconsistent input data."""
    exit_code = 2


class ParseError(DataError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


class SchemaError(DataError):
    pass


class SolverError(CstDispatchError, RuntimeError):
    exit_code = 1


class BackendUnavailable(SolverError):
    exit_code = 2


class ExtractionError(CstDispatchError, ValueError):
    exit_code = 1
