"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import math
import numbers
from typing import Sequence

import numpy as np
from sklearn.utils.validation import check_array


def check_nonnegative(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a finite number >= 0, got {value!r}")
    return float(value)


def check_probability(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")
    return float(value)


def check_range(value, name: str) -> tuple[float, float]:
    try:
        low, high = value
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a [low, high] pair, got {value!r}") from None
    if not (math.isfinite(low) and math.isfinite(high)) or low > high:
        raise ValueError(f"{name} must satisfy low <= high, got {value!r}")
    return float(low), float(high)


def check_seed(value) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or not 0 <= value < 2**64:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {value!r}")
    return int(value)


def check_embeddings(X, name: str = "X", allow_empty: bool = False) -> np.ndarray:
    """2-D float array of nonzero rows, L2-normalized."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0 and allow_empty:
        return X.reshape(0, X.shape[-1] if X.ndim == 2 else 0)
    X = check_array(X, dtype=np.float64, ensure_2d=True, input_name=name)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"{name} contains a zero vector; cosine distance is undefined")
    return X / norms[:, None]


def check_ids(ids: Sequence[str] | None, n: int, name: str = "ids") -> list[str]:
    if ids is None:
        return [str(i) for i in range(n)]
    ids = [str(i) for i in ids]
    if len(ids) != n:
        raise ValueError(f"{name} has {len(ids)} entries for {n} rows")
    if len(set(ids)) != n:
        raise ValueError(f"{name} must be unique")
    return ids


def check_candidates(X) -> list:
    from .sentence_select import Candidate

    out = list(X)
    for c in out:
        if not isinstance(c, Candidate):
            raise TypeError(f"expected Candidate objects, got {type(c).__name__}")
        if not c.duration_s > 0:
            raise ValueError(f"candidate {c.utt_id!r} has nonpositive duration")
    if len({c.utt_id for c in out}) != len(out):
        raise ValueError("candidate utt_ids must be unique")
    return out
