"""Exception types. Everything raised on bad input derives from GapError."""

from __future__ import annotations


class GapError(ValueError):
    """Input or contract violation (CLI exit code 2)."""


class ManifestError(GapError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class ScoreFileError(ManifestError):
    pass


class MetricsError(GapError):
    pass


class AudioError(GapError):
    def __init__(self, message: str, record_id: str | None = None):
        self.record_id = record_id
        prefix = f"[{record_id}] " if record_id is not None else ""
        super().__init__(prefix + message)


class TrainingDivergence(ArithmeticError):
    """Non-finite loss during training (CLI exit code 3)."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
