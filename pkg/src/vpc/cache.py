"""On-disk, content-addressed response cache.

One JSON file per entry under ``cache/<first-2-hex>/<digest>.json`` so
entries are human-inspectable and a run is resumable without any database.
Writes go through a temp file and an atomic rename: concurrent writers of
the same key converge because identical requests produce identical content.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from pathlib import Path
from typing import Optional, Union


class ResponseCache:
    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        """The stored response payload, or None on a miss or unreadable entry."""
        path = self.path_for(key)
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None
        response = entry.get("response")
        if not isinstance(response, dict):
            return None
        return response

    def put(self, key: str, response: dict) -> None:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {"key": key, "created_at": time.time(), "response": response}
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(entry, f, ensure_ascii=True, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    def __contains__(self, key: str) -> bool:
        return self.path_for(key).exists()


class NullCache(ResponseCache):
    """Cache that stores nothing; every lookup misses."""

    def __init__(self):
        pass

    def get(self, key: str) -> Optional[dict]:
        return None

    def put(self, key: str, response: dict) -> None:
        return None

    def __contains__(self, key: str) -> bool:
        return False
