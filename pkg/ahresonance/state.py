from __future__ import annotations
import sqlite3
import threading
import logging
from pathlib import Path
from typing import Optional, List, Dict

log = logging.getLogger(__name__)

SCHEMA = """
PRAGMA journal_mode=WAL;

CREATE TABLE IF NOT EXISTS meta (
  key TEXT PRIMARY KEY,
  value TEXT
);

CREATE TABLE IF NOT EXISTS scan_cache (
  key TEXT PRIMARY KEY,
  path TEXT NOT NULL,
  created INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS runs (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  config_hash TEXT NOT NULL,
  command TEXT NOT NULL,
  status TEXT NOT NULL DEFAULT 'RUNNING'  -- RUNNING | SUCCEEDED | FAILED
);

CREATE INDEX IF NOT EXISTS idx_runs_hash ON runs(config_hash, command);
"""

RUNNING = "RUNNING"
SUCCEEDED = "SUCCEEDED"
FAILED = "FAILED"


class State:
    """SQLite index of cache files and runs."""
    def __init__(self, db_path: str):
        self.db_path = str(db_path)
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self._local = threading.local()
        self._counter_lock = threading.Lock()
        self._conn()
        log.debug("SQLite state initialized at %s", self.db_path)

    def _conn(self) -> sqlite3.Connection:
        """Return a per-thread SQLite connection (create if missing)."""
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = sqlite3.connect(
                self.db_path,
                isolation_level=None,        # autocommit mode
                check_same_thread=False,
            )
            conn.execute("PRAGMA journal_mode=WAL;")
            conn.execute("PRAGMA synchronous = NORMAL;")
            conn.executescript(SCHEMA)
            self._local.conn = conn
        return conn

    @property
    def conn(self) -> sqlite3.Connection:
        return self._conn()

    def close(self):
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            try:
                conn.close()
            finally:
                self._local.conn = None

    # --- meta helpers ---
    def get_meta(self, key: str) -> Optional[str]:
        row = self.conn.execute("SELECT value FROM meta WHERE key = ?", (key,)).fetchone()
        return row[0] if row else None

    def set_meta(self, key: str, value: str) -> None:
        self.conn.execute("INSERT INTO meta(key,value) VALUES(?,?) ON CONFLICT(key) DO UPDATE SET value=excluded.value",
                          (key, value))

    def _next_counter(self) -> int:
        # monotone counter instead of a clock so outputs do not depend on wall time
        with self._counter_lock:
            v = int(self.get_meta("counter") or 0) + 1
            self.set_meta("counter", str(v))
            return v

    # --- scan cache ---
    def cache_path(self, key: str) -> Optional[str]:
        row = self.conn.execute("SELECT path FROM scan_cache WHERE key = ?", (key,)).fetchone()
        if not row:
            return None
        if not Path(row[0]).is_file():
            log.warning("cache entry %s points to missing file %s, dropping it", key[:12], row[0])
            self.conn.execute("DELETE FROM scan_cache WHERE key = ?", (key,))
            return None
        return row[0]

    def record_cache(self, key: str, path: str) -> None:
        created = self._next_counter()
        self.conn.execute(
            "INSERT INTO scan_cache(key,path,created) VALUES(?,?,?) "
            "ON CONFLICT(key) DO UPDATE SET path=excluded.path, created=excluded.created",
            (key, str(path), created))

    # --- runs ---
    def start_run(self, config_hash: str, command: str) -> int:
        cur = self.conn.execute("INSERT INTO runs(config_hash,command,status) VALUES(?,?,?)",
                                (config_hash, command, RUNNING))
        return int(cur.lastrowid)

    def finish_run(self, run_id: int, ok: bool) -> None:
        self.conn.execute("UPDATE runs SET status=? WHERE id=?", (SUCCEEDED if ok else FAILED, run_id))

    def list_runs(self, command: Optional[str] = None) -> List[Dict]:
        if command:
            rows = self.conn.execute("SELECT id, config_hash, command, status FROM runs WHERE command=? ORDER BY id",
                                     (command,)).fetchall()
        else:
            rows = self.conn.execute("SELECT id, config_hash, command, status FROM runs ORDER BY id").fetchall()
        return [dict(id=r[0], config_hash=r[1], command=r[2], status=r[3]) for r in rows]
