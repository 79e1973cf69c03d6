"""Speaker selection from an unseen pool by nearest-selected-speaker distance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_embeddings, check_ids, check_seed
from .manifest import SpeakerEmbeddingRecord, embedding_matrix

CRITERIA = ("minmin", "medmin", "maxmin", "random")


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine distance is undefined for a zero vector")
    return float(1.0 - np.dot(a, b) / (na * nb))


def _choose(dist: np.ndarray, ids: Sequence[str], criterion: str) -> int:
    """Index into ``dist`` picked by the criterion; ties go to the smallest id."""
    order = sorted(range(len(dist)), key=lambda i: (dist[i], ids[i]))
    if criterion == "minmin":
        return order[0]
    if criterion == "medmin":
        return order[(len(order) - 1) // 2]
    # maxmin: largest distance, smallest id among equals
    top = dist[order[-1]]
    return min((i for i in order if dist[i] == top), key=lambda i: ids[i])


def select_speakers(
    seen: np.ndarray,
    unseen: np.ndarray,
    n: int,
    criterion: str = "maxmin",
    seed: int = 42,
    unseen_ids: Sequence[str] | None = None,
) -> list[str]:
    """Iteratively move speakers from ``unseen`` into the selection R.

    Each round every remaining unseen speaker gets its distance to the closest
    speaker in ``seen ∪ R`` and the min / lower-median / max of those is taken.
    Running minima are updated against the newest pick only.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    U = check_embeddings(unseen, "unseen")
    ids = check_ids(unseen_ids, U.shape[0], "unseen_ids")
    if not 0 <= n <= len(ids):
        raise ValueError(f"cannot select {n} speakers from a pool of {len(ids)}")
    if criterion == "random":
        rng = np.random.default_rng(check_seed(seed))
        ordered = sorted(ids)
        return [ordered[i] for i in rng.permutation(len(ordered))[:n]]
    S = check_embeddings(seen, "seen", allow_empty=True)
    if S.shape[0] == 0:
        raise ValueError(f"{criterion} needs a non-empty seen speaker set")
    if S.shape[1] != U.shape[1]:
        raise ValueError(f"dimension mismatch: seen {S.shape[1]} vs unseen {U.shape[1]}")

    nearest = (1.0 - U @ S.T).min(axis=1)
    remaining = list(range(len(ids)))
    picked: list[str] = []
    for _ in range(n):
        rem = np.asarray(remaining)
        k = _choose(nearest[rem], [ids[i] for i in rem], criterion)
        chosen = remaining.pop(k)
        picked.append(ids[chosen])
        if remaining:
            rem = np.asarray(remaining)
            nearest[rem] = np.minimum(nearest[rem], 1.0 - U[rem] @ U[chosen])
    return picked


@dataclass
class NeighborReport:
    distances: dict[str, float]
    mean: float
    median: float
    min: float
    max: float

    def to_json(self) -> dict:
        return {
            "n_selected": len(self.distances),
            "mean": self.mean,
            "median": self.median,
            "min": self.min,
            "max": self.max,
            "distances": self.distances,
        }


def nearest_neighbor_report(real, selected, selected_ids: Sequence[str] | None = None) -> NeighborReport:
    """Distance from each selected speaker to its nearest real speaker."""
    R = check_embeddings(real, "real", allow_empty=True)
    X = check_embeddings(selected, "selected", allow_empty=True)
    if R.shape[0] == 0 or X.shape[0] == 0:
        raise ValueError("nearest-neighbor report needs non-empty real and selected sets")
    ids = check_ids(selected_ids, X.shape[0], "selected_ids")
    nn = np.clip((1.0 - X @ R.T).min(axis=1), 0.0, 2.0)
    return NeighborReport(
        distances={i: float(d) for i, d in zip(ids, nn)},
        mean=float(nn.mean()),
        median=float(np.median(nn)),
        min=float(nn.min()),
        max=float(nn.max()),
    )


class SpeakerSelector(BaseEstimator):
    """Fit on the seen speakers, then :meth:`select` from an unseen pool."""

    def __init__(self, n_speakers: int = 1, criterion: str = "maxmin", seed: int = 42):
        self.n_speakers = n_speakers
        self.criterion = criterion
        self.seed = seed

    def fit(self, X, y=None):
        if isinstance(X, (list, tuple)) and X and isinstance(X[0], SpeakerEmbeddingRecord):
            _, X = embedding_matrix(X)
        self.seen_ = check_embeddings(X, "seen", allow_empty=self.criterion == "random")
        return self

    def select(self, X, ids: Sequence[str] | None = None) -> list[str]:
        check_is_fitted(self, "seen_")
        if isinstance(X, (list, tuple)) and X and isinstance(X[0], SpeakerEmbeddingRecord):
            ids, X = embedding_matrix(X)
        self.selected_ids_ = select_speakers(self.seen_, X, self.n_speakers, self.criterion, self.seed, ids)
        return self.selected_ids_

    def transform(self, X, ids: Sequence[str] | None = None) -> np.ndarray:
        """Rows of ``X`` for the selected speakers, in selection order."""
        if isinstance(X, (list, tuple)) and X and isinstance(X[0], SpeakerEmbeddingRecord):
            ids, X = embedding_matrix(X)
        U = check_embeddings(X, "unseen")
        ids = check_ids(ids, U.shape[0], "ids")
        picked = self.select(U, ids)
        pos = {s: i for i, s in enumerate(ids)}
        return U[[pos[s] for s in picked]]
