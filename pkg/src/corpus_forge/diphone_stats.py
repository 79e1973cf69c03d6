"""Di-phoneme distributions and KL divergence with cached sums.

A :class:`DiphoneDistribution` keeps, alongside its counts ``c_d`` and total
``N``::

    s1  = sum_d c_d ln c_d
    s2q = sum_d c_d ln Q(d)     (only when bound to a target Q)

so that ``KL(P || Q) = s1/N - ln N - s2q/N`` is read in O(1) and a change in
counts only touches the affected terms.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Mapping, Sequence

from .phonemize import Diphone, diphones


class SupportError(ValueError):
    """A di-phoneme with positive count has no mass in the target distribution."""

    def __init__(self, diphone: Diphone, context: str = ""):
        self.diphone = diphone
        msg = f"di-phoneme {diphone[0]}-{diphone[1]} is outside the target support"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


def xlogx(c: float) -> float:
    return c * math.log(c) if c > 0 else 0.0


def count_diphones(sentences: Iterable[Sequence[str]]) -> Counter:
    counts: Counter = Counter()
    for seq in sentences:
        counts.update(diphones(seq))
    return counts


class TargetDistribution:
    """Fixed desired distribution Q over di-phonemes; strictly positive on its support."""

    def __init__(self, probs: Mapping[Diphone, float]):
        if not probs:
            raise ValueError("target distribution needs a non-empty support")
        for d, p in probs.items():
            if not p > 0:
                raise ValueError(f"target probability must be positive, got {p!r} for {d}")
        total = math.fsum(probs.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"target probabilities sum to {total!r}, not 1")
        self.probs = dict(probs)
        self.log_probs = {d: math.log(p) for d, p in self.probs.items()}

    @property
    def support(self) -> set[Diphone]:
        return set(self.probs)

    def __contains__(self, d: Diphone) -> bool:
        return d in self.probs

    def __len__(self) -> int:
        return len(self.probs)

    def entropy(self) -> float:
        return -math.fsum(p * math.log(p) for p in self.probs.values())

    def smoothed(self, alpha: float, inventory: Iterable[Diphone] = ()) -> "TargetDistribution":
        """Additive smoothing over ``support ∪ inventory``.

        Each unit gets ``(Q(d) + alpha) / (|V| alpha + 1)``, so unseen
        di-phonemes receive ``alpha / (|V| alpha + 1)``.
        """
        if alpha < 0:
            raise ValueError("smoothing alpha must be >= 0")
        if alpha == 0:
            return self
        vocab = sorted(set(self.probs) | set(inventory))
        denom = len(vocab) * alpha + 1.0
        probs = {d: (self.probs.get(d, 0.0) + alpha) / denom for d in vocab}
        # renormalize away rounding so the sum check holds
        z = math.fsum(probs.values())
        return TargetDistribution({d: p / z for d, p in probs.items()})


def natural_target(X: "DiphoneDistribution | Mapping[Diphone, int]") -> TargetDistribution:
    counts = X.counts if isinstance(X, DiphoneDistribution) else X
    total = sum(c for c in counts.values() if c > 0)
    if total == 0:
        raise ValueError("cannot build a natural target from an empty distribution")
    return TargetDistribution({d: c / total for d, c in counts.items() if c > 0})


def uniform_target(inventory: Iterable[Diphone]) -> TargetDistribution:
    inv = sorted(set(inventory))
    if not inv:
        raise ValueError("cannot build a uniform target over an empty inventory")
    p = 1.0 / len(inv)
    return TargetDistribution({d: p for d in inv})


class DiphoneDistribution:
    """Di-phoneme counts with cached ``s1`` and (when bound) ``s2q``."""

    def __init__(self, counts: Mapping[Diphone, int] | None = None, target: TargetDistribution | None = None):
        self.counts: Counter = Counter()
        self.total = 0
        self.s1 = 0.0
        self.s2q = 0.0
        self.target: TargetDistribution | None = None
        if counts:
            for d, c in counts.items():
                if c < 0 or int(c) != c:
                    raise ValueError(f"counts must be nonnegative integers, got {c!r} for {d}")
                if c:
                    self.counts[d] = int(c)
            self.total = sum(self.counts.values())
            self.s1 = math.fsum(xlogx(c) for c in self.counts.values())
        if target is not None:
            self.bind(target)

    @classmethod
    def from_sentences(
        cls, sentences: Iterable[Sequence[str]], target: TargetDistribution | None = None
    ) -> "DiphoneDistribution":
        return cls(count_diphones(sentences), target)

    def copy(self) -> "DiphoneDistribution":
        other = DiphoneDistribution()
        other.counts = Counter(self.counts)
        other.total = self.total
        other.s1 = self.s1
        other.s2q = self.s2q
        other.target = self.target
        return other

    def bind(self, target: TargetDistribution) -> "DiphoneDistribution":
        for d in self.counts:
            if d not in target:
                raise SupportError(d)
        self.target = target
        lp = target.log_probs
        self.s2q = math.fsum(c * lp[d] for d, c in self.counts.items())
        return self

    @property
    def inventory(self) -> set[Diphone]:
        return set(self.counts)

    def probability(self, d: Diphone) -> float:
        if self.total == 0:
            raise ValueError("probability undefined for an empty distribution")
        return self.counts.get(d, 0) / self.total

    def probabilities(self) -> dict[Diphone, float]:
        if self.total == 0:
            raise ValueError("probability undefined for an empty distribution")
        return {d: c / self.total for d, c in self.counts.items()}

    def entropy(self) -> float:
        if self.total == 0:
            raise ValueError("entropy undefined for an empty distribution")
        return math.log(self.total) - self.s1 / self.total

    def add_counts(self, deltas: Mapping[Diphone, int]) -> None:
        self._apply(deltas, +1)

    def remove_counts(self, deltas: Mapping[Diphone, int]) -> None:
        self._apply(deltas, -1)

    def _apply(self, deltas: Mapping[Diphone, int], sign: int) -> None:
        # validate first so a failed update leaves the state untouched
        for d, k in deltas.items():
            if k <= 0 or int(k) != k:
                raise ValueError(f"delta counts must be positive integers, got {k!r} for {d}")
            if sign < 0 and self.counts.get(d, 0) < k:
                raise ValueError(f"count underflow removing {k} of {d} (have {self.counts.get(d, 0)})")
            if sign > 0 and self.target is not None and d not in self.target:
                raise SupportError(d)
        lp = self.target.log_probs if self.target is not None else None
        for d, k in deltas.items():
            old = self.counts.get(d, 0)
            new = old + sign * int(k)
            self.s1 += xlogx(new) - xlogx(old)
            if lp is not None:
                self.s2q += sign * k * lp[d]
            if new:
                self.counts[d] = new
            else:
                del self.counts[d]
            self.total += sign * int(k)
        if self.total == 0:
            # exact reset avoids carrying rounding residue through an empty state
            self.s1 = 0.0
            self.s2q = 0.0

    def kl(self) -> float:
        """Cached-sum KL to the bound target."""
        if self.target is None:
            raise ValueError("distribution is not bound to a target")
        if self.total == 0:
            raise ValueError("KL undefined for an empty distribution")
        n = self.total
        # true KL is >= 0; the closed form can land a few ulps below it
        return max(0.0, self.s1 / n - math.log(n) - self.s2q / n)

    def recompute(self) -> tuple[float, float]:
        """Direct (s1, s2q) sums, for checking cache coherence."""
        s1 = math.fsum(xlogx(c) for c in self.counts.values())
        s2q = 0.0
        if self.target is not None:
            s2q = math.fsum(c * self.target.log_probs[d] for d, c in self.counts.items())
        return s1, s2q


def kl(P: DiphoneDistribution, Q: TargetDistribution) -> float:
    """KL(P || Q) in nats; zero-probability terms of P contribute nothing."""
    if P.total == 0:
        raise ValueError("KL undefined for an empty distribution")
    if P.target is Q:
        return P.kl()
    for d in P.counts:
        if d not in Q:
            raise SupportError(d)
    n = P.total
    s1 = math.fsum(xlogx(c) for c in P.counts.values())
    s2q = math.fsum(c * Q.log_probs[d] for d, c in P.counts.items())
    return max(0.0, s1 / n - math.log(n) - s2q / n)


def distribution_report(P: DiphoneDistribution, top_k: int = 20) -> dict:
    """Summary used by the ``stats`` command."""
    ranked = sorted(P.counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
    return {
        "inventory_size": len(P.counts),
        "total_diphones": P.total,
        "entropy_nats": P.entropy() if P.total else 0.0,
        "top": [
            {"diphone": f"{d[0]} {d[1]}", "count": c, "probability": c / P.total}
            for d, c in ranked
        ],
    }
