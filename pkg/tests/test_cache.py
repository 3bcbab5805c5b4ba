import json
import threading

from vpc.cache import NullCache, ResponseCache


def test_miss_returns_none(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    assert cache.get("00" * 32) is None
    assert ("00" * 32) not in cache


def test_put_get_roundtrip(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    key = "ab" + "cd" * 31
    payload = {"text": "hello", "usage": {"total_tokens": 3}}
    cache.put(key, payload)
    assert cache.get(key) == payload
    assert key in cache


def test_sharded_layout(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    key = "ff" + "00" * 31
    cache.put(key, {"text": "x"})
    path = cache.path_for(key)
    assert path == tmp_path / "cache" / "ff" / f"{key}.json"
    assert path.exists()
    entry = json.loads(path.read_text())
    assert entry["key"] == key
    assert entry["response"] == {"text": "x"}
    assert "created_at" in entry


def test_overwrite_same_key(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    key = "aa" * 32
    cache.put(key, {"text": "one"})
    cache.put(key, {"text": "two"})
    assert cache.get(key) == {"text": "two"}


def test_corrupt_entry_reads_as_miss(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    key = "bb" * 32
    cache.put(key, {"text": "x"})
    cache.path_for(key).write_text("{ not json")
    assert cache.get(key) is None


def test_concurrent_writers_converge(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    key = "cc" * 32
    payload = {"text": "same for everyone"}
    threads = [threading.Thread(target=cache.put, args=(key, payload)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert cache.get(key) == payload
    # No leftover temp files.
    stray = [p for p in (tmp_path / "cache").rglob("*") if p.is_file() and p.suffix != ".json"]
    assert stray == []


def test_null_cache_never_stores():
    cache = NullCache()
    cache.put("aa" * 32, {"text": "x"})
    assert cache.get("aa" * 32) is None
    assert ("aa" * 32) not in cache
