from __future__ import annotations

import hashlib
import json
import sqlite3
import time
from pathlib import Path
from typing import Any


def config_hash(payload: dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON of everything a computed row depends on."""
    digest_input = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(digest_input.encode("utf-8")).hexdigest()


class ResultCache:
    """Local cache of computed sweep rows keyed by config hash."""

    def __init__(self, db_path: Path) -> None:
        self.db_path = db_path
        self._init_db()

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def _init_db(self) -> None:
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        with self._connect() as conn:
            conn.execute(
                """
                CREATE TABLE IF NOT EXISTS sweep_rows (
                    config_hash TEXT PRIMARY KEY,
                    computed_ts INTEGER NOT NULL,
                    payload_json TEXT NOT NULL
                )
                """
            )

    def get_row(self, key: str) -> dict[str, Any] | None:
        with self._connect() as conn:
            row = conn.execute(
                "SELECT payload_json FROM sweep_rows WHERE config_hash = ?",
                (key,),
            ).fetchone()
            if not row:
                return None
            return json.loads(row["payload_json"])

    def save_row(self, key: str, payload: dict[str, Any], *, now_ts: int | None = None) -> None:
        ts = now_ts or int(time.time())
        with self._connect() as conn:
            conn.execute(
                """
                INSERT OR REPLACE INTO sweep_rows (config_hash, computed_ts, payload_json)
                VALUES (?, ?, ?)
                """,
                (key, ts, json.dumps(payload, sort_keys=True)),
            )

    def row_count(self) -> int:
        with self._connect() as conn:
            return int(conn.execute("SELECT COUNT(*) FROM sweep_rows").fetchone()[0])
