"""Utterance manifests and speaker-embedding tables (JSON Lines)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

ORIGINS = ("real", "tts", "vc")
MANIFEST_KEYS = ("utt_id", "text", "speaker_id", "duration_s", "audio_path", "origin")


class ManifestError(ValueError):
    """Raised for malformed manifest or embedding files."""

    def __init__(self, message: str, line: int | None = None, path: str | Path | None = None):
        self.line = line
        self.path = None if path is None else str(path)
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    text: str
    speaker_id: str
    duration_s: float
    audio_path: str | None = None
    origin: str = "real"
    # free-form annotations (e.g. planned stretch/pitch for external tools)
    meta: dict = field(default_factory=dict, hash=False)

    def validate(self) -> None:
        if not isinstance(self.utt_id, str) or not self.utt_id:
            raise ManifestError("utt_id must be a non-empty string")
        if not isinstance(self.text, str) or not self.text.strip():
            raise ManifestError(f"empty text for utterance {self.utt_id!r}")
        if not isinstance(self.speaker_id, str):
            raise ManifestError(f"speaker_id must be a string for {self.utt_id!r}")
        if isinstance(self.duration_s, bool) or not isinstance(self.duration_s, (int, float)):
            raise ManifestError(f"duration_s must be a number for {self.utt_id!r}")
        if not math.isfinite(self.duration_s) or self.duration_s <= 0:
            raise ManifestError(f"nonpositive duration {self.duration_s!r} for {self.utt_id!r}")
        if self.audio_path is not None and not isinstance(self.audio_path, str):
            raise ManifestError(f"audio_path must be a string or null for {self.utt_id!r}")
        if self.origin not in ORIGINS:
            raise ManifestError(f"origin must be one of {ORIGINS}, got {self.origin!r}")

    def to_json(self) -> dict[str, Any]:
        row: dict[str, Any] = {
            "utt_id": self.utt_id,
            "text": self.text,
            "speaker_id": self.speaker_id,
            "duration_s": self.duration_s,
            "audio_path": self.audio_path,
            "origin": self.origin,
        }
        if self.meta:
            row["meta"] = self.meta
        return row

    @classmethod
    def from_json(cls, row: dict[str, Any]) -> "UtteranceRecord":
        missing = [k for k in MANIFEST_KEYS if k not in row]
        if missing:
            raise ManifestError(f"missing keys {missing}")
        meta = row.get("meta") or {}
        if not isinstance(meta, dict):
            raise ManifestError("meta must be an object")
        rec = cls(
            utt_id=row["utt_id"],
            text=row["text"],
            speaker_id=row["speaker_id"],
            duration_s=row["duration_s"],
            audio_path=row["audio_path"],
            origin=row["origin"],
            meta=meta,
        )
        rec.validate()
        return rec


@dataclass
class Manifest:
    records: list[UtteranceRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for rec in self.records:
            if rec.utt_id in seen:
                raise ManifestError(f"duplicate utt_id {rec.utt_id!r}")
            seen.add(rec.utt_id)

    @property
    def total_duration_s(self) -> float:
        return math.fsum(r.duration_s for r in self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def by_id(self) -> dict[str, UtteranceRecord]:
        return {r.utt_id: r for r in self.records}

    def subset(self, utt_ids: Iterable[str]) -> "Manifest":
        """Records for ``utt_ids`` in the order given."""
        index = self.by_id()
        return Manifest([index[u] for u in utt_ids])


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, allow_nan=False)


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"parse error: {exc.msg}", lineno, path) from None
            if not isinstance(row, dict):
                raise ManifestError("expected a JSON object", lineno, path)
            try:
                rec = UtteranceRecord.from_json(row)
            except ManifestError as exc:
                raise ManifestError(str(exc), lineno, path) from None
            if rec.utt_id in seen:
                raise ManifestError(f"duplicate utt_id {rec.utt_id!r}", lineno, path)
            seen.add(rec.utt_id)
            records.append(rec)
    return Manifest(records)


def write_manifest(manifest: Manifest | Sequence[UtteranceRecord], path: str | Path) -> None:
    records = manifest.records if isinstance(manifest, Manifest) else list(manifest)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            rec.validate()
            fh.write(_dumps(rec.to_json()))
            fh.write("\n")


@dataclass(frozen=True)
class SpeakerEmbeddingRecord:
    speaker_id: str
    vector: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


def l2_normalize(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(vector)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return vector / norm


def average_embeddings(utterance_vectors: Sequence[Sequence[float]]) -> np.ndarray:
    """Mean of a speaker's utterance embeddings, L2-normalized."""
    if len(utterance_vectors) == 0:
        raise ValueError("need at least one utterance embedding")
    dims = {len(v) for v in utterance_vectors}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch among utterance embeddings: {sorted(dims)}")
    stacked = np.asarray(utterance_vectors, dtype=np.float64)
    return l2_normalize(stacked.mean(axis=0))


def read_embeddings(path: str | Path) -> list[SpeakerEmbeddingRecord]:
    """Load an embedding table; vectors are unit-normalized on load."""
    path = Path(path)
    out: list[SpeakerEmbeddingRecord] = []
    seen: set[str] = set()
    dim: int | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"parse error: {exc.msg}", lineno, path) from None
            if not isinstance(row, dict) or "speaker_id" not in row or "vector" not in row:
                raise ManifestError("expected keys speaker_id and vector", lineno, path)
            sid = row["speaker_id"]
            if not isinstance(sid, str) or not sid:
                raise ManifestError("speaker_id must be a non-empty string", lineno, path)
            if sid in seen:
                raise ManifestError(f"duplicate speaker_id {sid!r}", lineno, path)
            try:
                vec = np.asarray(row["vector"], dtype=np.float64)
            except (TypeError, ValueError):
                raise ManifestError("vector must be an array of numbers", lineno, path) from None
            if vec.ndim != 1 or vec.size == 0:
                raise ManifestError("vector must be a non-empty 1-D array", lineno, path)
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ManifestError(f"dimension {vec.size} differs from table dimension {dim}", lineno, path)
            try:
                vec = l2_normalize(vec)
            except ValueError:
                raise ManifestError(f"zero or non-finite vector for {sid!r}", lineno, path) from None
            seen.add(sid)
            out.append(SpeakerEmbeddingRecord(sid, vec))
    return out


def write_embeddings(records: Sequence[SpeakerEmbeddingRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(_dumps({"speaker_id": rec.speaker_id, "vector": [float(x) for x in rec.vector]}))
            fh.write("\n")


def embedding_matrix(records: Sequence[SpeakerEmbeddingRecord]) -> tuple[list[str], np.ndarray]:
    ids = [r.speaker_id for r in records]
    if not records:
        return ids, np.zeros((0, 0))
    return ids, np.vstack([r.vector for r in records])
