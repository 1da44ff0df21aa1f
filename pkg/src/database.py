"""SQLite run ledger: one row per CLI command."""

import sqlite3
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import config


def get_connection(path: Optional[Path] = None) -> sqlite3.Connection:
    """Get database connection."""
    conn = sqlite3.connect(path or config.RUNS_DATABASE_PATH)
    conn.row_factory = sqlite3.Row
    return conn


def init_database(path: Optional[Path] = None) -> None:
    """Create tables if they don't exist."""
    conn = get_connection(path)
    try:
        conn.executescript("""
            CREATE TABLE IF NOT EXISTS run_log (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                timestamp TEXT NOT NULL,
                command TEXT NOT NULL,
                config_hash TEXT,
                seed INTEGER,
                replicas INTEGER DEFAULT 0,
                outputs TEXT,
                passed INTEGER,
                summary TEXT
            );

            CREATE INDEX IF NOT EXISTS idx_run_log_timestamp
                ON run_log(timestamp DESC);
        """)
        conn.commit()
    finally:
        conn.close()


def log_run(
    command: str,
    config_hash: str = "",
    seed: Optional[int] = None,
    replicas: int = 0,
    outputs: str = "",
    passed: Optional[bool] = None,
    summary: str = "",
    path: Optional[Path] = None,
) -> int:
    """Record one command run. Returns the row id."""
    conn = get_connection(path)
    try:
        now = datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
        cursor = conn.execute("""
            INSERT INTO run_log (timestamp, command, config_hash, seed, replicas, outputs, passed, summary)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?)
        """, (now, command, config_hash, seed, replicas, outputs,
              None if passed is None else (1 if passed else 0), summary))
        conn.commit()
        return cursor.lastrowid
    finally:
        conn.close()


def get_run_logs(limit: int = 50, path: Optional[Path] = None) -> list[dict]:
    """Get recent runs, newest first."""
    conn = get_connection(path)
    try:
        cursor = conn.execute("""
            SELECT id, timestamp, command, config_hash, seed, replicas, outputs, passed, summary
            FROM run_log
            ORDER BY id DESC
            LIMIT ?
        """, (limit,))
        return [dict(row) for row in cursor.fetchall()]
    finally:
        conn.close()
