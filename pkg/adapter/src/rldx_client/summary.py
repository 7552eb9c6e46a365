"""Tensor summarization for the trace boundary.

Raw parameters never cross the wire: each tensor becomes summary statistics
plus a 64-bit content digest.  The digest is blake2b (8-byte digest) over
the tensor's float64 little-endian bytes in C order, read back big-endian;
statistics cover the finite entries, ``frac_nonfinite`` accounts for the
rest, and a constant tensor reports std exactly 0.0.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np


def tensor_digest(values) -> int:
    data = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    return int.from_bytes(hashlib.blake2b(data.tobytes(), digest_size=8).digest(), "big")


def summarize(name: str, values) -> dict:
    """Wire-format tensor statistics payload for one named tensor."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    n = arr.size
    if n == 0:
        raise ValueError(f"tensor {name!r} is empty")
    digest = tensor_digest(arr)
    frac_zero = float(np.count_nonzero(arr == 0.0) / n)
    finite = arr[np.isfinite(arr)]
    frac_bad = (n - finite.size) / n
    if finite.size:
        lo = float(finite.min())
        hi = float(finite.max())
        mean = float(finite.mean())
        std = 0.0 if lo == hi else float(finite.std())
        l2 = float(np.sqrt(finite @ finite))
    else:
        mean = std = lo = hi = l2 = math.nan
    return {
        "name": name,
        "mean": mean,
        "std": std,
        "min": lo,
        "max": hi,
        "l2_norm": l2,
        "frac_zero": frac_zero,
        "frac_nonfinite": float(frac_bad),
        "digest": digest,
    }
