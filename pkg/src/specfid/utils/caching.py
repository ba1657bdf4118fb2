"""
Module for caching spectral profiles of image files.

Profiles are keyed by the SHA-256 of the image file's bytes and the profile mode,
so a renamed or copied file still hits the cache and an edited one misses it.

Functions
---------
get_cache_connection
    Establishes a connection to the SQLite cache database and ensures the table exists.
file_hash
    SHA-256 hex digest of a file's contents.
cache_profile
    Store a profile in the cache.
get_cached_profile
    Retrieve a cached profile if available.
"""

import hashlib
import json
import logging
import os
import sqlite3
from typing import Optional

import numpy as np

from specfid.spectrum import SpectralProfile

logger = logging.getLogger(__name__)


def get_cache_connection(db_path: str) -> sqlite3.Connection:
    """Establish a connection to the SQLite cache database and ensure the cache table exists.

    The table ``profile_cache`` stores one profile per (file hash, mode) pair as a
    JSON list together with the number of times it was served.

    :param db_path: Path of the SQLite database file; parent directories are created
    :type db_path: str
    :return: A connection object to the SQLite database.
    :rtype: sqlite3.Connection
    """
    parent = os.path.dirname(os.path.abspath(db_path))
    os.makedirs(parent, exist_ok=True)
    conn = sqlite3.connect(db_path)
    cursor = conn.cursor()
    cursor.execute(
        """
        CREATE TABLE IF NOT EXISTS profile_cache (
            image_hash TEXT,
            mode TEXT,
            n INTEGER,
            profile TEXT,
            hit_count INTEGER DEFAULT 0,
            PRIMARY KEY (image_hash, mode)
        )
    """
    )
    conn.commit()
    return conn


def file_hash(path: str) -> str:
    """SHA-256 hex digest of the file at ``path``."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def cache_profile(conn: sqlite3.Connection, image_hash: str, mode: str, profile: SpectralProfile):
    """Store a profile in the cache, replacing any previous entry for the same key.

    :param conn: Connection from :func:`get_cache_connection`
    :type conn: sqlite3.Connection
    :param image_hash: Digest from :func:`file_hash`
    :type image_hash: str
    :param mode: Profile mode the profile was computed with
    :type mode: str
    :param profile: The profile to store
    :type profile: SpectralProfile
    """
    cursor = conn.cursor()
    cursor.execute(
        "INSERT OR REPLACE INTO profile_cache (image_hash, mode, n, profile, hit_count) "
        "VALUES (?, ?, ?, ?, 0)",
        (image_hash, mode, profile.n, json.dumps([float(v) for v in profile.values])),
    )
    conn.commit()


def get_cached_profile(
    conn: sqlite3.Connection, image_hash: str, mode: str
) -> Optional[SpectralProfile]:
    """Retrieve a cached profile and count the hit.

    :param conn: Connection from :func:`get_cache_connection`
    :type conn: sqlite3.Connection
    :param image_hash: Digest from :func:`file_hash`
    :type image_hash: str
    :param mode: Profile mode
    :type mode: str
    :return: The cached profile if found, otherwise None.
    :rtype: SpectralProfile | None
    """
    cursor = conn.cursor()
    cursor.execute(
        "SELECT n, profile FROM profile_cache WHERE image_hash = ? AND mode = ?",
        (image_hash, mode),
    )
    result = cursor.fetchone()
    if result is None:
        return None
    cursor.execute(
        "UPDATE profile_cache SET hit_count = hit_count + 1 WHERE image_hash = ? AND mode = ?",
        (image_hash, mode),
    )
    conn.commit()
    n, payload = result
    logger.debug("Profile cache hit for %s", image_hash[:12])
    return SpectralProfile(np.asarray(json.loads(payload), dtype=np.float64), n)
