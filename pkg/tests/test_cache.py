import sqlite3
import sys
from pathlib import Path

sys.path.append(str(Path(__file__).resolve().parents[1]))

from src.cache import ResultCache, config_hash


def test_config_hash_is_canonical() -> None:
    first = config_hash({"params": {"N": 3, "p": 2.0}, "grid": {"n": 64}})
    second = config_hash({"grid": {"n": 64}, "params": {"p": 2.0, "N": 3}})
    assert first == second
    assert len(first) == 64
    assert config_hash({"params": {"N": 3, "p": 2.5}, "grid": {"n": 64}}) != first


def test_rows_round_trip_and_replace(tmp_path: Path) -> None:
    db_path = tmp_path / "nested" / "rows.sqlite3"
    cache = ResultCache(db_path)
    assert cache.get_row("missing") is None

    cache.save_row("a", {"S_rad": 1.25, "broken": False, "status": "ok"}, now_ts=1_000)
    cache.save_row("b", {"S_rad": 2.5, "broken": None, "status": "ok"}, now_ts=1_000)
    assert cache.row_count() == 2
    assert cache.get_row("a") == {"S_rad": 1.25, "broken": False, "status": "ok"}

    # same key overwrites
    cache.save_row("a", {"S_rad": 1.5, "status": "ok"}, now_ts=2_000)
    assert cache.row_count() == 2
    assert cache.get_row("a")["S_rad"] == 1.5

    conn = sqlite3.connect(db_path)
    stamps = dict(conn.execute("SELECT config_hash, computed_ts FROM sweep_rows").fetchall())
    conn.close()
    assert stamps == {"a": 2_000, "b": 1_000}


def test_cache_survives_reopening(tmp_path: Path) -> None:
    db_path = tmp_path / "rows.sqlite3"
    ResultCache(db_path).save_row("k", {"value": 3.0})
    assert ResultCache(db_path).get_row("k") == {"value": 3.0}
