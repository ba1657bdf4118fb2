import numpy as np

from specfid.spectrum import SpectralProfile
from specfid.utils.caching import cache_profile, file_hash, get_cache_connection, get_cached_profile


def test_cache_round_trip(tmp_path):
    conn = get_cache_connection(str(tmp_path / "nested" / "cache.db"))
    profile = SpectralProfile(np.array([1.5, 0.25, 1e-300]), 4)
    cache_profile(conn, "abc", "binned", profile)
    cached = get_cached_profile(conn, "abc", "binned")
    assert cached.n == 4
    assert np.array_equal(cached.values, profile.values)
    assert get_cached_profile(conn, "abc", "interpolated") is None
    assert get_cached_profile(conn, "other", "binned") is None
    conn.close()


def test_hits_are_counted(tmp_path):
    conn = get_cache_connection(str(tmp_path / "cache.db"))
    cache_profile(conn, "abc", "binned", SpectralProfile(np.zeros(3), 2))
    for _ in range(3):
        get_cached_profile(conn, "abc", "binned")
    assert conn.execute("SELECT hit_count FROM profile_cache").fetchone() == (3,)
    cache_profile(conn, "abc", "binned", SpectralProfile(np.ones(3), 2))
    assert conn.execute("SELECT hit_count FROM profile_cache").fetchone() == (0,)
    conn.close()


def test_file_hash_follows_content(tmp_path):
    a, b, c = tmp_path / "a.png", tmp_path / "b.png", tmp_path / "c.png"
    a.write_bytes(b"same")
    b.write_bytes(b"same")
    c.write_bytes(b"different")
    assert file_hash(str(a)) == file_hash(str(b))
    assert file_hash(str(a)) != file_hash(str(c))
    assert len(file_hash(str(a))) == 64
