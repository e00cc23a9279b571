"""Content-addressed store of rendered reports under the XDG cache directory."""

import json
import os
import tempfile
import threading
from datetime import UTC, datetime
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, get_xdg_cache_dir


class ResultCache:
    """Report text keyed by the SHA-256 of the canonical experiment config.

    A hit returns exactly the text that was stored. Entries written by another
    tool version are ignored.
    """

    _lock = threading.Lock()

    def __init__(self, root: Path | None = None, *, version: str = __version__) -> None:
        self.root = Path(root) if root is not None else get_xdg_cache_dir() / "results"
        self.version = version

    def path_for(self, config: ExperimentConfig) -> Path:
        key = config.cache_key()
        return self.root / key[:2] / f"{key}.json"

    def get(self, config: ExperimentConfig) -> str | None:
        path = self.path_for(config)
        with self._lock:
            if not path.exists():
                return None
            try:
                entry = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                return None
        if entry.get("version") != self.version or entry.get("key") != config.cache_key():
            return None
        report = entry.get("report")
        return report if isinstance(report, str) else None

    def put(self, config: ExperimentConfig, report: str) -> Path:
        path = self.path_for(config)
        entry = {
            "key": config.cache_key(),
            "version": self.version,
            "timestamp": datetime.now(UTC).isoformat(timespec="seconds"),
            "config": config.to_json(),
            "report": report,
        }
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    json.dump(entry, fh, sort_keys=True)
                Path(tmp).replace(path)
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise
        return path

    def clear(self) -> int:
        removed = 0
        with self._lock:
            for path in self.root.glob("*/*.json"):
                path.unlink()
                removed += 1
        return removed
