"""
Session storage abstraction layer.
Provides a unified interface for directory-per-session files and in-memory storage.
"""

import logging
import shutil
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional

from app.core.config import settings
from app.harness.runner import SessionLog, load_session_log, save_session_log


logger = logging.getLogger(__name__)


class SessionStore(ABC):
    """Abstract interface for session-log storage."""

    @abstractmethod
    async def save_session(self, log: SessionLog) -> str:
        """Store a session log; returns its id."""
        pass

    @abstractmethod
    async def get_session(self, session_id: str) -> Optional[SessionLog]:
        """Retrieve one session log, or None if unknown."""
        pass

    @abstractmethod
    async def list_session_ids(self) -> List[str]:
        """All stored session ids, sorted."""
        pass

    @abstractmethod
    async def delete_session(self, session_id: str) -> bool:
        """Remove a session; returns False if it did not exist."""
        pass

    async def get_paginated_sessions(self, skip: int = 0, limit: int = 100) -> List[SessionLog]:
        """Retrieve a page of session logs in id order."""
        ids = (await self.list_session_ids())[skip:skip + limit]
        logs = [await self.get_session(i) for i in ids]
        return [log for log in logs if log is not None]

    async def get_session_count(self) -> int:
        return len(await self.list_session_ids())

    async def close(self):
        """Release resources."""
        pass


class FileSessionStore(SessionStore):
    """One directory per session under ``root``."""

    def __init__(self, root: str):
        """
        Initialize file storage.

        Args:
            root: Directory holding the session directories
        """
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, session_id: str) -> Path:
        path = (self.root / session_id).resolve()
        if path.parent != self.root.resolve():
            raise ValueError(f"invalid session id {session_id!r}")
        return path

    async def save_session(self, log: SessionLog) -> str:
        save_session_log(log, self._dir(log.session_id))
        return log.session_id

    async def get_session(self, session_id: str) -> Optional[SessionLog]:
        try:
            path = self._dir(session_id)
        except ValueError:
            return None
        if not path.is_dir():
            return None
        return load_session_log(path)

    async def list_session_ids(self) -> List[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / "session.json").is_file())

    async def delete_session(self, session_id: str) -> bool:
        path = self._dir(session_id)
        if not path.is_dir():
            return False
        shutil.rmtree(path)
        return True


class MemorySessionStore(SessionStore):
    """Process-local storage, used by tests and throwaway servers."""

    def __init__(self):
        self._logs: Dict[str, SessionLog] = {}

    async def save_session(self, log: SessionLog) -> str:
        self._logs[log.session_id] = log
        return log.session_id

    async def get_session(self, session_id: str) -> Optional[SessionLog]:
        return self._logs.get(session_id)

    async def list_session_ids(self) -> List[str]:
        return sorted(self._logs)

    async def delete_session(self, session_id: str) -> bool:
        return self._logs.pop(session_id, None) is not None

    async def close(self):
        self._logs.clear()


class StoreFactory:
    """Factory for creating session stores."""

    @staticmethod
    def create_store() -> SessionStore:
        """
        Create a store instance based on configuration.

        Returns:
            SessionStore implementation
        """
        if settings.storage_type == "memory":
            return MemorySessionStore()
        logger.info("storing sessions under %s", settings.session_storage_path)
        return FileSessionStore(root=settings.session_storage_path)


# Global store instance
store: Optional[SessionStore] = None


def get_store() -> SessionStore:
    """
    Get the global store instance.
    Creates one if it doesn't exist.

    Returns:
        SessionStore instance
    """
    global store
    if store is None:
        store = StoreFactory.create_store()
    return store
