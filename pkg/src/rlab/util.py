"""Small shared helpers: threading, hashing, deterministic RNG streams."""

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def thread_count():
    """Parallelism cap from RLAB_THREADS (default 1, always >= 1)."""
    try:
        n = int(os.environ.get("RLAB_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def parallel_map(fn, items):
    """Map preserving input order; threads only when RLAB_THREADS > 1."""
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def sha256_hex(data):
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj):
    """Deterministic JSON encoding (sorted keys, no whitespace drift)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=1)


def rng_stream(seed, *stream):
    """Counter-based generator for (seed, stream...) so substreams never collide."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def loglog_slope(r, v):
    """Least-squares slope of log(v) against log(r)."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    if len(r) < 2:
        return float("nan")
    x = np.log(r)
    y = np.log(v)
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        return float("nan")
    return float(np.dot(x, y - y.mean()) / denom)


def dyadic_radii(r_min, r_max):
    """Radii r_min * 2^k not exceeding r_max."""
    out = []
    r = float(r_min)
    while r <= r_max * (1 + 1e-12):
        out.append(r)
        r *= 2.0
    return out
