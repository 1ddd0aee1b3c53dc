"""
Logging setup.

Modules log through ``logging.getLogger(__name__)``; the entry points (CLI and
the FastAPI lifespan) call :func:`configure_logging` once.
"""

import logging
from typing import Optional

from rich.logging import RichHandler

from app.core.config import settings


_configured = False


def configure_logging(level: Optional[str] = None) -> None:
    """
    Install a rich console handler on the ``app`` logger.

    Args:
        level: Log level name; defaults to ``settings.log_level``
    """
    global _configured
    root = logging.getLogger("app")
    root.setLevel((level or settings.log_level).upper())
    if _configured:
        return
    handler = RichHandler(rich_tracebacks=settings.debug, show_path=settings.debug)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    _configured = True
