"""Lexicon-based phonemization and di-phoneme extraction."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

Diphone = tuple[str, str]
PhonemeSequence = list[str]

WORD_BOUNDARY = "#"
FALLBACK_PREFIX = "@"

_APOSTROPHES = str.maketrans({"’": "'", "‘": "'", "ʼ": "'"})
_STRESS = re.compile(r"\d")
_ALT_SUFFIX = re.compile(r"\(\d+\)$")


def normalize_tokens(text: str) -> list[str]:
    """Case-fold, split on whitespace, drop punctuation except intra-word apostrophes."""
    tokens = []
    for raw in text.translate(_APOSTROPHES).casefold().split():
        kept = "".join(
            ch for ch in raw
            if ch == "'" or not unicodedata.category(ch).startswith(("P", "S"))
        )
        kept = kept.strip("'")
        if kept:
            tokens.append(kept)
    return tokens


def strip_stress(symbol: str) -> str:
    return _STRESS.sub("", symbol)


@dataclass
class Lexicon:
    entries: dict[str, list[tuple[str, ...]]] = field(default_factory=dict)

    def add(self, word: str, pronunciation: Sequence[str]) -> None:
        pron = tuple(p for p in (strip_stress(s) for s in pronunciation) if p)
        if not pron:
            raise ValueError(f"empty pronunciation for {word!r}")
        self.entries.setdefault(word.casefold(), []).append(pron)

    def lookup(self, word: str) -> tuple[str, ...] | None:
        prons = self.entries.get(word.casefold())
        return prons[0] if prons else None

    def __contains__(self, word: str) -> bool:
        return word.casefold() in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Sequence[str] | Sequence[Sequence[str]]]) -> "Lexicon":
        lex = cls()
        for word, prons in mapping.items():
            if prons and isinstance(prons[0], str):
                prons = [prons]
            for pron in prons:
                lex.add(word, pron)
        return lex


def read_lexicon(path: str | Path) -> Lexicon:
    """Read a CMUdict-style file: ``WORD PH1 PH2 ...`` per line, ``;;;`` comments.

    Repeated words, and ``WORD(2)``-style variants, become alternate
    pronunciations in file order.
    """
    lex = Lexicon()
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith(";;;"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: entry without pronunciation")
            word = _ALT_SUFFIX.sub("", parts[0])
            try:
                lex.add(word, parts[1:])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return lex


def phonemize_sentence(text: str, lexicon: Lexicon, word_boundary_marker: bool = False) -> PhonemeSequence:
    """Phoneme sequence for ``text``; first pronunciation wins.

    Out-of-vocabulary tokens are spelled as ``@c`` per character. With
    ``word_boundary_marker`` the sequence is wrapped in and separated by ``#``.
    """
    words: list[Sequence[str]] = []
    for token in normalize_tokens(text):
        pron = lexicon.lookup(token)
        if pron is None:
            pron = tuple(FALLBACK_PREFIX + ch for ch in token)
        words.append(pron)
    if not word_boundary_marker:
        return [p for w in words for p in w]
    if not words:
        return []
    seq = [WORD_BOUNDARY]
    for w in words:
        seq.extend(w)
        seq.append(WORD_BOUNDARY)
    return seq


def diphones(seq: Sequence[str]) -> list[Diphone]:
    return list(zip(seq[:-1], seq[1:]))


class Phonemizer(TransformerMixin, BaseEstimator):
    """Text → phoneme sequence transformer.

    ``lexicon`` may be a :class:`Lexicon`, a mapping, or a path to a lexicon file.
    """

    def __init__(self, lexicon=None, word_boundary_marker: bool = False):
        self.lexicon = lexicon
        self.word_boundary_marker = word_boundary_marker

    def fit(self, X=None, y=None):
        if isinstance(self.lexicon, Lexicon):
            self.lexicon_ = self.lexicon
        elif isinstance(self.lexicon, Mapping):
            self.lexicon_ = Lexicon.from_mapping(self.lexicon)
        elif self.lexicon is None:
            self.lexicon_ = Lexicon()
        else:
            self.lexicon_ = read_lexicon(self.lexicon)
        return self

    def transform(self, X: Iterable[str]) -> list[PhonemeSequence]:
        check_is_fitted(self, "lexicon_")
        return [phonemize_sentence(t, self.lexicon_, self.word_boundary_marker) for t in X]
