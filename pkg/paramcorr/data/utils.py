import hashlib
import json
import os
import tempfile
from typing import Union

import numpy as np
import pandas as pd

from paramcorr.config import CSV_FLOAT_FORMAT, GENERATOR_ID, JSON_SCHEMA_VERSION


def replicate_seed(master_seed: int, *stream: int) -> int:
    """Derive a 64-bit seed for an independent stream of ``master_seed``.

    The derived seed only depends on ``master_seed`` and the ``stream``
    indices, so replicates can be generated in any order (or in parallel)
    and still reproduce the same numbers.

    Args:
        master_seed (int):
            Non-negative master seed.
        *stream (int):
            Stream indices, e.g. ``(replicate_index,)`` or
            ``(catalog_index, realization)``.

    Returns:
        int: Derived unsigned 64-bit seed.
    """
    if master_seed < 0:
        raise ValueError(f"Seeds must be non-negative, got {master_seed}")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) for ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def generator_id() -> str:
    return GENERATOR_ID


def stable_hash(obj) -> str:
    """SHA-256 hex digest of the canonical JSON encoding of ``obj``."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def atomic_write_text(path: Union[str, os.PathLike], text: str) -> str:
    """Write ``text`` to ``path`` via a temporary file and an atomic rename.

    Concurrent writers never leave a partially written file at ``path``.

    Returns:
        str: The path written.
    """
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=folder, prefix=".tmp_", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    return path


def to_json_text(payload: dict) -> str:
    """Canonical JSON text with the schema version stamped in."""
    payload = {"schema_version": JSON_SCHEMA_VERSION, **payload}
    return json.dumps(payload, indent=4, sort_keys=True, default=_json_default) + "\n"


def write_json(path: Union[str, os.PathLike], payload: dict) -> str:
    return atomic_write_text(path, to_json_text(payload))


def write_csv(path: Union[str, os.PathLike], df: pd.DataFrame) -> str:
    """Write ``df`` as CSV (no index) with 17 significant digits."""
    text = df.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return atomic_write_text(path, text)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serialisable")
