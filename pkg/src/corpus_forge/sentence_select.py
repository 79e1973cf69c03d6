"""Greedy sentence selection minimizing KL(P_{Y∪K} || Q) under a duration budget.

Each iteration scores every remaining candidate ``z`` by the KL the corpus
would have after adding it. With the cached sums of
:class:`~corpus_forge.diphone_stats.DiphoneDistribution` this is::

    KL_z = (s1 + Δs1_z - s2q - Δs2_z) / (N + n_z) - ln(N + n_z)

where ``Δs2_z = Σ δ ln Q`` and ``n_z`` are fixed per candidate, and ``Δs1_z``
only involves the candidate's own di-phonemes. Scoring a whole pool is then
O(Σ|z|) per iteration and vectorizes over a CSR layout of the candidates.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_candidates, check_nonnegative
from .diphone_stats import (
    DiphoneDistribution,
    SupportError,
    TargetDistribution,
    count_diphones,
    natural_target,
    uniform_target,
    xlogx,
)
from .phonemize import Diphone, diphones

logger = logging.getLogger(__name__)

TARGETS = ("natural", "uniform", "random")

# KL values closer than this are ties and resolve to the smallest utt_id
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Candidate:
    utt_id: str
    deltas: Mapping[Diphone, int]
    duration_s: float

    @classmethod
    def from_sequence(cls, utt_id: str, phonemes: Sequence[str], duration_s: float) -> "Candidate":
        return cls(utt_id, Counter(diphones(phonemes)), float(duration_s))

    @property
    def n_diphones(self) -> int:
        return sum(self.deltas.values())


class SelectionState:
    """Y ∪ K bound to a target, the picks so far and the accumulated duration."""

    def __init__(self, base: DiphoneDistribution, budget_s: float = math.inf):
        if base.target is None:
            raise ValueError("selection state needs a distribution bound to a target")
        self.base = base
        self.budget_s = budget_s
        self.selected: list[str] = []
        self.t_c = 0.0

    @classmethod
    def from_real(
        cls, real: Iterable[Sequence[str]], target: TargetDistribution, budget_s: float = math.inf
    ) -> "SelectionState":
        return cls(DiphoneDistribution.from_sentences(real, target), budget_s)

    @property
    def done(self) -> bool:
        return self.t_c >= self.budget_s

    def kl(self) -> float:
        return self.base.kl()

    def score(self, candidate: Candidate) -> float:
        return score_candidate(self, candidate)

    def commit(self, candidate: Candidate) -> None:
        if candidate.utt_id in self.selected:
            raise ValueError(f"{candidate.utt_id!r} already selected")
        if candidate.deltas:
            self.base.add_counts(candidate.deltas)
        self.selected.append(candidate.utt_id)
        self.t_c += candidate.duration_s


def score_candidate(state: SelectionState, candidate: Candidate) -> float:
    """Hypothetical KL after adding ``candidate``; ``state`` is not mutated."""
    base = state.base
    lp = base.target.log_probs
    ds1 = 0.0
    ds2 = 0.0
    n = 0
    for d, k in candidate.deltas.items():
        if d not in lp:
            raise SupportError(d, f"candidate {candidate.utt_id}")
        c = base.counts.get(d, 0)
        ds1 += xlogx(c + k) - xlogx(c)
        ds2 += k * lp[d]
        n += k
    if n == 0:
        return base.kl()
    total = base.total + n
    return (base.s1 + ds1 - base.s2q - ds2) / total - math.log(total)


@dataclass
class SelectionResult:
    selected: list[str]
    trajectory: list[tuple[float, float]] = field(default_factory=list)
    exhausted: bool = False
    state: SelectionState | None = None

    @property
    def final_kl(self) -> float:
        return self.trajectory[-1][1] if self.trajectory else math.nan


class _PoolScorer:
    """CSR layout of candidate deltas over the target's column index.

    ``gain[j, k-1] = xlogx(c_j + k) - xlogx(c_j)`` is kept for every column
    and every delta size that occurs, so ``Δs1_z`` is one gather plus a
    segmented sum over the candidate's entries.
    """

    def __init__(
        self,
        candidates: Sequence[Candidate],
        target: TargetDistribution,
        base_counts: Mapping[Diphone, int],
        n_workers: int = 1,
    ):
        columns = sorted(target.probs)
        self.column_of = {d: j for j, d in enumerate(columns)}
        self.log_q = np.array([target.log_probs[d] for d in columns])
        n_rows = len(candidates)
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        cols: list[int] = []
        vals: list[int] = []
        for i, cand in enumerate(candidates):
            for d in sorted(cand.deltas):
                j = self.column_of.get(d)
                if j is None:
                    raise SupportError(d, f"candidate {cand.utt_id}")
                cols.append(j)
                vals.append(int(cand.deltas[d]))
            row_ptr[i + 1] = len(cols)
        self.row_ptr = row_ptr
        self.cols = np.asarray(cols, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=np.int64)
        rows = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(row_ptr))
        self.n_z = np.bincount(rows, weights=self.vals, minlength=n_rows).astype(np.int64)
        self.ds2 = np.bincount(rows, weights=self.vals * self.log_q[self.cols], minlength=n_rows)
        self.nonempty = np.diff(row_ptr) > 0

        self.counts = np.zeros(len(columns), dtype=np.int64)
        for d, c in base_counts.items():
            j = self.column_of.get(d)
            if j is None:
                raise SupportError(d, "real data")
            self.counts[j] = c
        col_mass = np.bincount(self.cols, weights=self.vals, minlength=len(columns)).astype(np.int64)
        ceiling = int((self.counts + col_mass).max(initial=0))
        k = np.arange(ceiling + 1, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.xlogx = np.where(k > 0, k * np.log(k), 0.0)
        self.K = int(self.vals.max(initial=1))
        self.steps = np.arange(1, self.K + 1, dtype=np.int64)
        self.flat = self.cols * self.K + (self.vals - 1)
        self.gain = np.zeros((len(columns), self.K))
        self._refresh_gain(slice(None))
        self.N = int(self.counts.sum())
        self.s1 = float(self.xlogx[self.counts].sum())
        self.s2q = float((self.counts * self.log_q).sum())

        self.n_workers = max(1, int(n_workers))
        bounds = np.linspace(0, n_rows, self.n_workers + 1).round().astype(int)
        self.chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def _refresh_gain(self, cols) -> None:
        c = self.counts[cols]
        top = np.minimum(c[:, None] + self.steps, len(self.xlogx) - 1)
        self.gain[cols] = self.xlogx[top] - self.xlogx[c][:, None]

    def copy_state(self) -> tuple:
        return self.counts.copy(), self.N, self.s1, self.s2q

    def set_state(self, state: tuple) -> None:
        counts, self.N, self.s1, self.s2q = state
        self.counts = counts.copy()
        self._refresh_gain(slice(None))

    def current_kl(self) -> float:
        if self.N == 0:
            return math.nan
        return max(0.0, self.s1 / self.N - math.log(self.N) - self.s2q / self.N)

    def _score_rows(self, a: int, b: int, out: np.ndarray) -> None:
        e0, e1 = self.row_ptr[a], self.row_ptr[b]
        ds1 = np.zeros(b - a)
        if e1 > e0:
            term = self.gain.ravel()[self.flat[e0:e1]]
            keep = self.nonempty[a:b]
            ds1[keep] = np.add.reduceat(term, self.row_ptr[a:b][keep] - e0)
        total = self.N + self.n_z[a:b]
        with np.errstate(divide="ignore", invalid="ignore"):
            kl = (self.s1 + ds1 - self.s2q - self.ds2[a:b]) / total - np.log(total)
        kl[total == 0] = np.inf
        out[a:b] = kl

    def score_all(self, executor: ThreadPoolExecutor | None = None) -> np.ndarray:
        out = np.empty(len(self.n_z))
        if executor is None or len(self.chunks) <= 1:
            for a, b in self.chunks:
                self._score_rows(a, b, out)
        else:
            list(executor.map(lambda ab: self._score_rows(ab[0], ab[1], out), self.chunks))
        return out

    def commit(self, i: int) -> float:
        e0, e1 = self.row_ptr[i], self.row_ptr[i + 1]
        cols = self.cols[e0:e1]
        old = self.counts[cols]
        new = old + self.vals[e0:e1]
        self.s1 += float((self.xlogx[new] - self.xlogx[old]).sum())
        self.s2q += float(self.ds2[i])
        self.counts[cols] = new
        self.N += int(self.n_z[i])
        self._refresh_gain(cols)
        return self.current_kl()


def _pick(scores: np.ndarray, alive: np.ndarray, rank: np.ndarray) -> int:
    masked = np.where(alive, scores, np.inf)
    best = masked.min()
    if not np.isfinite(best):
        pool = np.flatnonzero(alive)
    else:
        pool = np.flatnonzero(masked <= best + TIE_TOL * max(1.0, abs(best)))
    return int(pool[np.argmin(rank[pool])])


def greedy_select(
    real: Iterable[Sequence[str]],
    candidates: Sequence[Candidate],
    target: TargetDistribution,
    budget_s: float,
    n_workers: int = 1,
    beam_width: int = 1,
) -> SelectionResult:
    """Pick candidates one at a time by minimum hypothetical KL until the budget is met.

    The last pick may overshoot ``budget_s``. Ties go to the smallest utt_id.
    If the pool runs out first, everything is returned and ``exhausted`` is set.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    ids = [c.utt_id for c in candidates]
    if len(set(ids)) != len(ids):
        raise ValueError("candidate utt_ids must be unique")
    real = [list(s) for s in real]
    state = SelectionState.from_real(real, target, budget_s)
    if beam_width > 1:
        return _beam_select(state, candidates, target, budget_s, n_workers, beam_width)

    scorer = _PoolScorer(candidates, target, state.base.counts, n_workers)
    rank = np.argsort(np.argsort(np.array(ids, dtype=object), kind="stable"), kind="stable")
    alive = np.ones(len(candidates), dtype=bool)
    trajectory = [(0.0, scorer.current_kl())]
    executor = ThreadPoolExecutor(scorer.n_workers) if scorer.n_workers > 1 else None
    try:
        while not state.done and alive.any():
            scores = scorer.score_all(executor)
            i = _pick(scores, alive, rank)
            alive[i] = False
            kl_now = scorer.commit(i)
            state.commit(candidates[i])
            trajectory.append((state.t_c, kl_now))
    finally:
        if executor is not None:
            executor.shutdown()
    exhausted = not state.done
    if exhausted and budget_s > 0:
        warnings.warn(
            f"candidate pool exhausted at {state.t_c:.1f}s of a {budget_s:.1f}s budget",
            RuntimeWarning,
            stacklevel=2,
        )
    return SelectionResult(list(state.selected), trajectory, exhausted, state)


def _beam_select(state, candidates, target, budget_s, n_workers, beam_width) -> SelectionResult:
    scorer = _PoolScorer(candidates, target, state.base.counts, n_workers)
    ids = [c.utt_id for c in candidates]
    rank = np.argsort(np.argsort(np.array(ids, dtype=object), kind="stable"), kind="stable")
    start = scorer.copy_state()
    # beam: (kl, picks, t_c, scorer-state)
    active = [(scorer.current_kl(), [], 0.0, start)]
    finished = []
    if budget_s <= 0:
        finished = active
        active = []
    while active:
        expansions = []
        for _, picks, t_c, st in active:
            scorer.set_state(st)
            alive = np.ones(len(candidates), dtype=bool)
            alive[picks] = False
            if not alive.any():
                finished.append((scorer.current_kl(), picks, t_c, st))
                continue
            scores = np.where(alive, scorer.score_all(), np.inf)
            order = np.lexsort((rank, scores))
            order = order[alive[order]][:beam_width]
            for i in order:
                expansions.append((float(scores[i]), picks + [int(i)], t_c + candidates[i].duration_s, st))
        expansions.sort(key=lambda e: (e[0], [rank[i] for i in e[1]]))
        active = []
        for kl_val, picks, t_c, st in expansions[:beam_width]:
            scorer.set_state(st)
            kl_val = scorer.commit(picks[-1])
            entry = (kl_val, picks, t_c, scorer.copy_state())
            (finished if t_c >= budget_s else active).append(entry)
    best = min(finished, key=lambda e: (e[0] if np.isfinite(e[0]) else np.inf, [rank[i] for i in e[1]]))
    _, picks, _, _ = best
    scorer.set_state(start)
    trajectory = [(0.0, scorer.current_kl())]
    for i in picks:
        kl_now = scorer.commit(i)
        state.commit(candidates[i])
        trajectory.append((state.t_c, kl_now))
    exhausted = not state.done
    return SelectionResult(list(state.selected), trajectory, exhausted, state)


def random_select(candidates: Sequence[Candidate], budget_s: float, seed: int) -> list[str]:
    """Uniform draws without replacement until the budget is met (or the pool is empty)."""
    ordered = sorted(candidates, key=lambda c: c.utt_id)
    rng = np.random.default_rng(seed)
    picks: list[str] = []
    t_c = 0.0
    for i in rng.permutation(len(ordered)):
        if t_c >= budget_s:
            break
        picks.append(ordered[i].utt_id)
        t_c += ordered[i].duration_s
    return picks


def kl_trajectory(
    real: Iterable[Sequence[str]],
    picks: Sequence[Candidate],
    target: TargetDistribution,
    real_duration_s: float = 0.0,
) -> list[tuple[float, float]]:
    """(duration of Y ∪ K so far, KL) after each pick, starting from Y alone."""
    dist = DiphoneDistribution.from_sentences(real, target)
    t = real_duration_s
    out = [(t, dist.kl() if dist.total else math.nan)]
    for cand in picks:
        if cand.deltas:
            dist.add_counts(cand.deltas)
        t += cand.duration_s
        out.append((t, dist.kl() if dist.total else math.nan))
    return out


def build_target(
    kind: str,
    real: Iterable[Sequence[str]],
    candidates: Sequence[Candidate],
    smoothing_alpha: float = 0.0,
) -> TargetDistribution:
    """Natural or uniform target over X = Y ∪ Z (``random`` scores against natural)."""
    if kind not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}, got {kind!r}")
    counts = count_diphones(real)
    for cand in candidates:
        counts.update(cand.deltas)
    if kind == "uniform":
        return uniform_target(counts)
    return natural_target(counts)


class SentenceSelector(BaseEstimator):
    """Estimator wrapper around :func:`greedy_select` / :func:`random_select`.

    ``fit`` takes the candidate pool (a list of :class:`Candidate`) and the real
    sentences as phoneme sequences; the selection is exposed as
    ``selected_ids_`` and ``transform`` returns the selected candidates in
    selection order.
    """

    def __init__(
        self,
        target: str = "natural",
        budget_s: float = 0.0,
        seed: int = 42,
        smoothing_alpha: float = 0.0,
        n_workers: int = 1,
        beam_width: int = 1,
    ):
        self.target = target
        self.budget_s = budget_s
        self.seed = seed
        self.smoothing_alpha = smoothing_alpha
        self.n_workers = n_workers
        self.beam_width = beam_width

    def fit(self, X: Sequence[Candidate], y=None, real: Iterable[Sequence[str]] = (), real_duration_s: float = 0.0):
        candidates = check_candidates(X)
        budget = check_nonnegative(self.budget_s, "budget_s")
        alpha = check_nonnegative(self.smoothing_alpha, "smoothing_alpha")
        real = [list(s) for s in real]
        target = build_target(self.target, real, candidates)
        if alpha > 0:
            inventory = set(count_diphones(real))
            for c in candidates:
                inventory.update(c.deltas)
            target = target.smoothed(alpha, inventory)
        self.target_ = target
        if self.target == "random":
            self.selected_ids_ = random_select(candidates, budget, self.seed)
            index = {c.utt_id: c for c in candidates}
            picks = [index[u] for u in self.selected_ids_]
            self.exhausted_ = len(picks) == len(candidates) and sum(c.duration_s for c in picks) < budget
        else:
            result = greedy_select(real, candidates, target, budget, self.n_workers, self.beam_width)
            self.selected_ids_ = result.selected
            self.exhausted_ = result.exhausted
            index = {c.utt_id: c for c in candidates}
            picks = [index[u] for u in self.selected_ids_]
        self.trajectory_ = kl_trajectory(real, picks, target, real_duration_s)
        self.kl_ = self.trajectory_[-1][1]
        return self

    def transform(self, X: Sequence[Candidate]) -> list[Candidate]:
        check_is_fitted(self, "selected_ids_")
        index = {c.utt_id: c for c in X}
        return [index[u] for u in self.selected_ids_ if u in index]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).transform(X)
