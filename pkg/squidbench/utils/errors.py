from typing import (
    Any,
    Dict,
)


class BenchError(Exception):
    def to_json(self) -> Dict[str, Any]:
        return {"status": "error", "error": type(self).__name__, "message": str(self)}


class ConfigError(BenchError):
    pass


class TraceSizeError(BenchError):
    pass


class TraceFormatError(BenchError):
    pass


class InvalidInputError(BenchError, ValueError):
    pass
