"""
Content-addressed cache of pipeline stage outputs.

A stage key is the sha256 of (stage name, upstream stage keys, the config
subsection the stage reads, tool version). Changing any upstream input
changes every downstream key; unrelated edits leave keys untouched.
"""

from __future__ import annotations

import logging
import os
import shutil
import threading
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence

import joblib

from config import stable_hash
from models import TOOL_VERSION

logger = logging.getLogger(__name__)

CACHE_ENV = "VOLLAB_CACHE_DIR"


def stage_key(stage: str, upstream: Sequence[str], section: Any) -> str:
    return stable_hash(
        {
            "stage": stage,
            "upstream": list(upstream),
            "section": section,
            "tool_version": TOOL_VERSION,
        }
    )


def resolve_cache_dir(configured: Optional[str], output_dir: str | Path) -> Path:
    """Environment override first, then the config, then <output>/.cache."""
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    if configured:
        return Path(configured)
    return Path(output_dir) / ".cache"


class StageCache:
    def __init__(self, root: str | Path, enabled: bool = True) -> None:
        self.root = Path(root)
        self.enabled = enabled
        self.keys: Dict[str, str] = {}
        self._lock = threading.Lock()

    def _path(self, stage: str, key: str) -> Path:
        return self.root / stage.replace(":", "_").replace("+", "_") / f"{key}.joblib"

    def load(self, stage: str, key: str) -> tuple[bool, Any]:
        path = self._path(stage, key)
        if not self.enabled or not path.exists():
            return False, None
        try:
            return True, joblib.load(path)
        except Exception as exc:  # noqa: BLE001 - unreadable entries are recomputed
            logger.warning("Unreadable cache entry %s (%s); recomputing", path, exc)
            path.unlink(missing_ok=True)
            return False, None

    def store(self, stage: str, key: str, value: Any) -> None:
        if not self.enabled:
            return
        path = self._path(stage, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
        joblib.dump(value, tmp)
        os.replace(tmp, path)

    def run(self, stage: str, upstream: Sequence[str], section: Any, compute: Callable[[], Any]) -> tuple[str, Any]:
        """Return (key, value), computing and storing the value on a miss."""
        key = stage_key(stage, upstream, section)
        with self._lock:
            self.keys[stage] = key
        hit, value = self.load(stage, key)
        if hit:
            logger.info("Stage %s: cache hit (%s)", stage, key[:12])
            return key, value
        logger.info("Stage %s: computing (%s)", stage, key[:12])
        value = compute()
        self.store(stage, key, value)
        return key, value

    def clear(self) -> int:
        """Delete every cached entry; returns the number of files removed."""
        if not self.root.exists():
            return 0
        count = sum(1 for p in self.root.rglob("*") if p.is_file())
        shutil.rmtree(self.root)
        return count
