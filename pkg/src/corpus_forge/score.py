"""WER / CER via Levenshtein alignment, and the matched-pairs sentence-segment test."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

from .phonemize import normalize_tokens

MATCH, SUBSTITUTE, DELETE, INSERT = "match", "substitute", "delete", "insert"


class AlignOp(NamedTuple):
    kind: str
    ref_index: int | None
    hyp_index: int | None


@dataclass
class Alignment:
    ops: list[AlignOp]

    @property
    def cost(self) -> int:
        return sum(op.kind != MATCH for op in self.ops)

    def counts(self) -> "ErrorCounts":
        c = ErrorCounts()
        for op in self.ops:
            if op.kind == MATCH:
                c.hits += 1
            elif op.kind == SUBSTITUTE:
                c.substitutions += 1
            elif op.kind == DELETE:
                c.deletions += 1
            else:
                c.insertions += 1
        c.n_ref = c.hits + c.substitutions + c.deletions
        return c


@dataclass
class ErrorCounts:
    hits: int = 0
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    n_ref: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def rate(self) -> float:
        if self.n_ref == 0:
            raise ValueError("error rate undefined for an empty reference")
        return self.errors / self.n_ref

    def __add__(self, other: "ErrorCounts") -> "ErrorCounts":
        return ErrorCounts(
            self.hits + other.hits,
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.n_ref + other.n_ref,
        )

    def to_json(self) -> dict:
        return {
            "hits": self.hits,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "n_ref": self.n_ref,
        }


def align(ref: Sequence, hyp: Sequence) -> Alignment:
    """Minimum edit-distance alignment with unit costs.

    Backtrace prefers match, then substitution, deletion, insertion.
    """
    n, m = len(ref), len(hyp)
    D = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        D[i][0] = i
    for j in range(1, m + 1):
        D[0][j] = j
    for i in range(1, n + 1):
        r = ref[i - 1]
        row, prev = D[i], D[i - 1]
        for j in range(1, m + 1):
            row[j] = min(
                prev[j - 1] + (r != hyp[j - 1]),
                prev[j] + 1,
                row[j - 1] + 1,
            )
    ops: list[AlignOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and D[i][j] == D[i - 1][j - 1]:
            ops.append(AlignOp(MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and D[i][j] == D[i - 1][j - 1] + 1:
            ops.append(AlignOp(SUBSTITUTE, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and D[i][j] == D[i - 1][j] + 1:
            ops.append(AlignOp(DELETE, i - 1, None))
            i -= 1
        else:
            ops.append(AlignOp(INSERT, None, j - 1))
            j -= 1
    ops.reverse()
    return Alignment(ops)


def _tokens(x) -> list[str]:
    return normalize_tokens(x) if isinstance(x, str) else list(x)


def _chars(x) -> list[str]:
    return list(" ".join(_tokens(x)))


def error_counts(refs: Sequence, hyps: Sequence, unit: str = "word") -> ErrorCounts:
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    split = _tokens if unit == "word" else _chars
    total = ErrorCounts()
    for r, h in zip(refs, hyps):
        total = total + align(split(r), split(h)).counts()
    return total


def wer(refs: Sequence, hyps: Sequence) -> float:
    """Corpus-level (S + D + I) / N over words; strings are normalized first."""
    counts = error_counts(refs, hyps, "word")
    if counts.n_ref == 0:
        raise ValueError("empty reference corpus")
    return counts.rate


def cer(refs: Sequence, hyps: Sequence) -> float:
    """Like :func:`wer` over characters, spaces included."""
    counts = error_counts(refs, hyps, "char")
    if counts.n_ref == 0:
        raise ValueError("empty reference corpus")
    return counts.rate


def position_errors(alignment: Alignment, n_ref: int) -> list[int]:
    """Errors charged to each reference position.

    Insertions go to the reference word on their left, or to the first word
    when they open the utterance. An empty reference gets one slot.
    """
    errs = [0] * max(n_ref, 1)
    last = -1
    for op in alignment.ops:
        if op.kind == INSERT:
            errs[max(last, 0)] += 1
            continue
        last = op.ref_index
        if op.kind != MATCH:
            errs[last] += 1
    return errs


def segment_spans(errs_a: Sequence[int], errs_b: Sequence[int]) -> list[tuple[int, int]]:
    """[start, end) spans between runs of >= 2 positions both systems got right.

    Spans where neither system errs are dropped.
    """
    n = len(errs_a)
    both_ok = [errs_a[i] == 0 and errs_b[i] == 0 for i in range(n)]
    separator = [False] * n
    i = 0
    while i < n:
        if both_ok[i]:
            j = i
            while j < n and both_ok[j]:
                j += 1
            if j - i >= 2:
                for k in range(i, j):
                    separator[k] = True
            i = j
        else:
            i += 1
    spans = []
    i = 0
    while i < n:
        if separator[i]:
            i += 1
            continue
        j = i
        while j < n and not separator[j]:
            j += 1
        if any(errs_a[k] or errs_b[k] for k in range(i, j)):
            spans.append((i, j))
        i = j
    return spans


@dataclass
class MapsswResult:
    z: float
    p_significant_95: bool
    n_segments: int
    mean_diff: float
    p_value: float
    inapplicable: bool = False
    infinite_z: bool = False
    diffs: list[int] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "z": self.z if math.isfinite(self.z) else None,
            "p_value": self.p_value,
            "p_significant_95": self.p_significant_95,
            "n_segments": self.n_segments,
            "mean_diff": self.mean_diff,
            "inapplicable": self.inapplicable,
            "infinite_z": self.infinite_z,
        }


def segment_diffs(refs: Sequence, hyps_a: Sequence, hyps_b: Sequence) -> list[int]:
    if not len(refs) == len(hyps_a) == len(hyps_b):
        raise ValueError("reference and both hypothesis corpora must have the same length")
    diffs = []
    for r, a, b in zip(refs, hyps_a, hyps_b):
        r, a, b = _tokens(r), _tokens(a), _tokens(b)
        ea = position_errors(align(r, a), len(r))
        eb = position_errors(align(r, b), len(r))
        for s, e in segment_spans(ea, eb):
            diffs.append(sum(ea[s:e]) - sum(eb[s:e]))
    return diffs


def mapsswe(refs: Sequence, hyps_a: Sequence, hyps_b: Sequence, z_crit: float = 1.96) -> MapsswResult:
    """Matched-pairs sentence-segment word error test (two-sided).

    Z = mean(diff) / (sd(diff) / sqrt(n)) with the sample standard deviation
    over per-segment error differences A - B.
    """
    diffs = segment_diffs(refs, hyps_a, hyps_b)
    n = len(diffs)
    total = sum(diffs)
    if n < 2:
        return MapsswResult(0.0, False, n, float(total) if n else 0.0, 1.0, inapplicable=True, diffs=diffs)
    mean = total / n
    # integer arithmetic keeps Z(A, B) == -Z(B, A) exactly
    var_num = n * sum(d * d for d in diffs) - total * total
    if var_num == 0:
        if total == 0:
            return MapsswResult(0.0, False, n, 0.0, 1.0, diffs=diffs)
        z = math.copysign(math.inf, total)
        return MapsswResult(z, True, n, mean, 0.0, infinite_z=True, diffs=diffs)
    sd = math.sqrt(var_num / (n * (n - 1)))
    z = mean / (sd / math.sqrt(n))
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return MapsswResult(z, abs(z) >= z_crit, n, mean, p, diffs=diffs)


_TRN = re.compile(r"^(.*?)\s*\(([^()\s]+)\)\s*$")


def read_trn(path: str | Path) -> dict[str, str]:
    """``text ... (utt_id)`` per line → ordered {utt_id: text}."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            m = _TRN.match(line.rstrip("\n"))
            if not m:
                raise ValueError(f"{path}:{lineno}: expected 'tokens ... (utt_id)'")
            text, utt = m.groups()
            if utt in out:
                raise ValueError(f"{path}:{lineno}: duplicate utterance id {utt!r}")
            out[utt] = text
    return out


def score_report(refs: dict[str, str], *hyps: dict[str, str]) -> dict:
    """WER/CER per hypothesis set, plus the segment test when there are two."""
    ids = list(refs)
    ref_list = [refs[u] for u in ids]
    systems = []
    hyp_lists = []
    for k, h in enumerate(hyps):
        missing = [u for u in ids if u not in h]
        if missing:
            raise ValueError(f"hypothesis set {k} lacks utterances {missing[:5]}")
        hl = [h[u] for u in ids]
        hyp_lists.append(hl)
        wc = error_counts(ref_list, hl, "word")
        cc = error_counts(ref_list, hl, "char")
        if wc.n_ref == 0:
            raise ValueError("empty reference corpus")
        systems.append({"wer": wc.rate, "cer": cc.rate, "word_counts": wc.to_json(), "char_counts": cc.to_json()})
    report: dict = {"n_utterances": len(ids), "systems": systems}
    if len(hyp_lists) == 2:
        report["mapsswe"] = mapsswe(ref_list, hyp_lists[0], hyp_lists[1]).to_json()
    return report
