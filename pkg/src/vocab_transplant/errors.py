"""Exceptions du domaine."""

from __future__ import annotations

from pathlib import Path


class VocabTransplantError(Exception):
    """Racine de toutes les erreurs levées par le paquet."""


class FormatError(VocabTransplantError, ValueError):
    """Fichier mal formé. Le message indique le fichier et la ligne si connus."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        self.reason = message
        where = []
        if self.path is not None:
            where.append(self.path)
        if line is not None:
            where.append(f"ligne {line}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class CorpusDecodeError(FormatError):
    """Octets qui ne sont pas de l'UTF-8 valide."""

    def __init__(self, offset: int, path: str | Path | None = None, line: int | None = None):
        self.offset = offset
        super().__init__(f"UTF-8 invalide à l'octet {offset}", path=path, line=line)


class TrainingError(VocabTransplantError):
    pass


class ReconciliationError(VocabTransplantError):
    def __init__(self, shortfall: int, surplus: int, available: int):
        self.shortfall = shortfall
        super().__init__(
            f"vocabulaire cible trop grand de {surplus} types mais seulement "
            f"{available} tokens [unused-x] disponibles (manque {shortfall})"
        )


class ProjectionError(VocabTransplantError):
    pass


class SolverError(ProjectionError):
    pass


class ReportValidationError(VocabTransplantError, ValueError):
    pass


class ConfigError(VocabTransplantError, ValueError):
    pass
