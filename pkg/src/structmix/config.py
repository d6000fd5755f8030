"""
Configuration par variables d'environnement.

    STRUCTMIX_ARCHIVE_URI   URI SQLAlchemy de l'archive (défaut : SQLite en mémoire)
    STRUCTMIX_LOG_LEVEL     niveau de journalisation (défaut : INFO)
    STRUCTMIX_JOBS          processus pour `experiment` (défaut : 1)
"""

import os

from structmix.domain.exceptions import InvalidModelError


def get_archive_uri() -> str:
    return os.environ.get("STRUCTMIX_ARCHIVE_URI", "sqlite://")


def get_log_level() -> str:
    return os.environ.get("STRUCTMIX_LOG_LEVEL", "INFO").upper()


def get_jobs() -> int:
    raw = os.environ.get("STRUCTMIX_JOBS", "1")
    try:
        jobs = int(raw)
    except ValueError:
        raise InvalidModelError(
            f"STRUCTMIX_JOBS doit être un entier, reçu {raw!r}"
        ) from None
    if jobs == 0:
        raise InvalidModelError("STRUCTMIX_JOBS ne peut pas valoir 0")
    return jobs
