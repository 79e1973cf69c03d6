"""Seeded per-utterance augmentation plans and the noise / reverb transforms.

Plans are derived from ``(seed, utt_id, realization)`` alone, so they do not
depend on manifest order or on how work is split across threads. Stretch and
pitch decisions are recorded for external tools; only reverb and additive
noise are rendered here, reverb first.
"""

from __future__ import annotations

import hashlib
import json
import re
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.signal import fftconvolve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_probability, check_range, check_seed
from .audio import SAMPLE_RATE, read_wav, wav_duration, write_wav
from .manifest import Manifest, UtteranceRecord

PLAN_SCHEMA = "corpus-forge/augment-plan"
PLAN_VERSION = 1


class PlanError(ValueError):
    pass


@dataclass
class AugmentConfig:
    p_noise: float = 0.0
    p_reverb: float = 0.0
    snr_db_range: tuple[float, float] = (0.0, 15.0)
    p_stretch: float = 0.0
    stretch_range: tuple[float, float] = (0.9, 1.1)
    p_pitch: float = 0.0
    pitch_range: tuple[float, float] = (-2.0, 2.0)
    reassign_duration_speaker: bool = False
    reassign_pitch_speaker: bool = False
    seed: int = 42
    noise_pool: list[str] = field(default_factory=list)
    rir_pool: list[str] = field(default_factory=list)
    speaker_pool: list[str] = field(default_factory=list)
    realizations: int = 1

    def validate(self) -> "AugmentConfig":
        for name in ("p_noise", "p_reverb", "p_stretch", "p_pitch"):
            setattr(self, name, check_probability(getattr(self, name), name))
        for name in ("snr_db_range", "stretch_range", "pitch_range"):
            setattr(self, name, check_range(getattr(self, name), name))
        if self.stretch_range[0] <= 0:
            raise ValueError("stretch rates must be positive")
        self.seed = check_seed(self.seed)
        if not isinstance(self.realizations, int) or self.realizations < 1:
            raise ValueError("realizations must be a positive integer")
        self.noise_pool = [str(p) for p in self.noise_pool]
        self.rir_pool = [str(p) for p in self.rir_pool]
        self.speaker_pool = [str(s) for s in self.speaker_pool]
        return self

    def to_json(self) -> dict[str, Any]:
        out = asdict(self)
        for name in ("snr_db_range", "stretch_range", "pitch_range"):
            out[name] = list(out[name])
        return out

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "AugmentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown augmentation config keys: {sorted(unknown)}")
        cfg = cls(**data)
        for name in ("snr_db_range", "stretch_range", "pitch_range"):
            setattr(cfg, name, tuple(getattr(cfg, name)))
        return cfg.validate()


@dataclass
class AugmentPlanEntry:
    utt_id: str
    realization: int = 0
    noise: dict | None = None  # {noise_path, snr_db, noise_offset_s}
    reverb: dict | None = None  # {rir_path}
    stretch_rate: float | None = None
    pitch_semitones: float | None = None
    duration_speaker_id: str | None = None
    pitch_speaker_id: str | None = None

    @property
    def renders_audio(self) -> bool:
        return self.noise is not None or self.reverb is not None

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, row: dict[str, Any]) -> "AugmentPlanEntry":
        return cls(**row)


def utterance_rng(seed: int, utt_id: str, realization: int = 0) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}\x1f{utt_id}\x1f{realization}".encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int.from_bytes(digest, "little"))))


def _scale(u: float, bounds: tuple[float, float]) -> float:
    low, high = bounds
    return low + u * (high - low) if high > low else low


def _index(u: float, n: int) -> int:
    return min(int(u * n), n - 1)


def plan_utterance(
    record: UtteranceRecord,
    config: AugmentConfig,
    realization: int = 0,
    noise_durations: dict[str, float] | None = None,
) -> AugmentPlanEntry:
    # fixed number of draws in fixed order, whatever is enabled
    u = utterance_rng(config.seed, record.utt_id, realization).random(12)
    entry = AugmentPlanEntry(record.utt_id, realization)
    if u[0] < config.p_noise:
        path = config.noise_pool[_index(u[5], len(config.noise_pool))]
        length = (noise_durations or {}).get(path, 0.0)
        entry.noise = {
            "noise_path": path,
            "snr_db": _scale(u[4], config.snr_db_range),
            "noise_offset_s": float(u[6] * length),
        }
    if u[1] < config.p_reverb:
        entry.reverb = {"rir_path": config.rir_pool[_index(u[7], len(config.rir_pool))]}
    if u[2] < config.p_stretch:
        entry.stretch_rate = _scale(u[8], config.stretch_range)
    if u[3] < config.p_pitch:
        entry.pitch_semitones = _scale(u[9], config.pitch_range)
    if config.reassign_duration_speaker or config.reassign_pitch_speaker:
        others = sorted(set(config.speaker_pool) - {record.speaker_id}) or sorted(set(config.speaker_pool))
        if config.reassign_duration_speaker:
            entry.duration_speaker_id = others[_index(u[10], len(others))]
        if config.reassign_pitch_speaker:
            entry.pitch_speaker_id = others[_index(u[11], len(others))]
    return entry


def make_plan(
    manifest: Manifest | Sequence[UtteranceRecord],
    config: AugmentConfig,
    noise_durations: dict[str, float] | None = None,
) -> list[AugmentPlanEntry]:
    """One entry per utterance (and realization), in manifest order.

    Noise offsets need each noise file's length; when ``noise_durations`` is
    not given they are read from the WAV headers.
    """
    config.validate()
    if config.p_noise > 0 and not config.noise_pool:
        raise PlanError("noise augmentation enabled with an empty noise pool")
    if config.p_reverb > 0 and not config.rir_pool:
        raise PlanError("reverb augmentation enabled with an empty RIR pool")
    if (config.reassign_duration_speaker or config.reassign_pitch_speaker) and not config.speaker_pool:
        raise PlanError("speaker reassignment enabled with an empty speaker pool")
    if config.p_noise > 0 and noise_durations is None:
        noise_durations = {p: wav_duration(p) for p in sorted(set(config.noise_pool))}
    records = manifest.records if isinstance(manifest, Manifest) else list(manifest)
    return [
        plan_utterance(rec, config, k, noise_durations)
        for rec in records
        for k in range(config.realizations)
    ]


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, allow_nan=False)


def write_plan(plan: Iterable[AugmentPlanEntry], path: str | Path, config: AugmentConfig) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps({"schema": PLAN_SCHEMA, "version": PLAN_VERSION, "config": config.to_json()}) + "\n")
        for entry in plan:
            fh.write(_dumps(entry.to_json()) + "\n")


def read_plan(path: str | Path) -> tuple[AugmentConfig, list[AugmentPlanEntry]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise PlanError(f"{path}: empty plan file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}:1: {exc.msg}") from None
    if header.get("schema") != PLAN_SCHEMA or header.get("version") != PLAN_VERSION:
        raise PlanError(f"{path}: unsupported plan header {header.get('schema')!r} v{header.get('version')!r}")
    config = AugmentConfig.from_json(header["config"])
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            entries.append(AugmentPlanEntry.from_json(json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            raise PlanError(f"{path}:{lineno}: bad plan entry ({exc})") from None
    return config, entries


def noise_gain(signal_power: float, noise_power: float, snr_db: float) -> float:
    """Gain putting noise at ``snr_db`` below the signal (mean-square powers)."""
    return float(np.sqrt(signal_power / (noise_power * 10.0 ** (snr_db / 10.0))))


def apply_noise(
    signal: np.ndarray,
    noise: np.ndarray,
    snr_db: float,
    noise_offset_s: float = 0.0,
    sample_rate: int = SAMPLE_RATE,
) -> np.ndarray:
    """Add ``noise`` (looped from the offset, trimmed to length) at the target SNR."""
    signal = np.asarray(signal, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    p_signal = float(np.mean(signal**2)) if signal.size else 0.0
    if p_signal == 0.0:
        raise ValueError("signal is silent; SNR is undefined")
    if noise.size == 0:
        raise ValueError("noise is empty")
    start = int(round(noise_offset_s * sample_rate)) % noise.size
    segment = noise[(start + np.arange(signal.size)) % noise.size]
    p_noise = float(np.mean(segment**2))
    if p_noise == 0.0:
        raise ValueError("noise segment is silent; cannot scale to an SNR")
    return signal + noise_gain(p_signal, p_noise, snr_db) * segment


def convolve_rir(signal: np.ndarray, rir: np.ndarray) -> np.ndarray:
    """Linear convolution truncated to the signal length."""
    signal = np.asarray(signal, dtype=np.float64)
    rir = np.asarray(rir, dtype=np.float64)
    if rir.size == 0:
        raise ValueError("empty RIR")
    if signal.size == 0:
        return signal.copy()
    return fftconvolve(signal, rir, mode="full")[: signal.size]


def apply_rir(signal: np.ndarray, rir: np.ndarray) -> np.ndarray:
    """Reverberate and rescale so the output peak equals the input peak."""
    signal = np.asarray(signal, dtype=np.float64)
    out = convolve_rir(signal, rir)
    peak_out = np.max(np.abs(out)) if out.size else 0.0
    if peak_out == 0.0:
        return out
    return out * (np.max(np.abs(signal)) / peak_out)


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def output_name(entry: AugmentPlanEntry) -> tuple[str, str]:
    """(utt_id, file name) for a rendered plan entry."""
    utt_id = entry.utt_id if entry.realization == 0 else f"{entry.utt_id}__r{entry.realization}"
    return utt_id, _UNSAFE.sub("_", utt_id) + ".wav"


def _resolve(path: str, root: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or root is None else root / p


def apply_plan(
    manifest: Manifest,
    plan: Sequence[AugmentPlanEntry],
    out_dir: str | Path,
    audio_root: str | Path | None = None,
    n_workers: int = 1,
) -> Manifest:
    """Render a plan into ``out_dir``; returned audio paths are relative to it.

    Entries without noise or reverb are copied byte-for-byte. Stretch, pitch
    and reassigned speakers travel in each record's ``meta``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = None if audio_root is None else Path(audio_root)
    index = manifest.by_id()
    for entry in plan:
        if entry.utt_id not in index:
            raise PlanError(f"plan entry for unknown utterance {entry.utt_id!r}")
        if index[entry.utt_id].audio_path is None:
            raise PlanError(f"utterance {entry.utt_id!r} has no audio_path")

    @lru_cache(maxsize=None)
    def load(path: str) -> np.ndarray:
        return read_wav(path)[0]

    def render(entry: AugmentPlanEntry) -> UtteranceRecord:
        rec = index[entry.utt_id]
        src = _resolve(rec.audio_path, root)
        if not src.exists():
            raise FileNotFoundError(f"missing audio for {rec.utt_id!r}: {src}")
        utt_id, name = output_name(entry)
        dst = out_dir / name
        meta = dict(rec.meta)
        if entry.renders_audio:
            x, _ = read_wav(src)
            if entry.reverb is not None:
                x = apply_rir(x, load(entry.reverb["rir_path"]))
            if entry.noise is not None:
                n = entry.noise
                x = apply_noise(x, load(n["noise_path"]), n["snr_db"], n["noise_offset_s"])
            meta["clipped_samples"] = write_wav(dst, x)
        else:
            read_wav(src)  # format check only
            shutil.copyfile(src, dst)
        for key in ("noise", "reverb", "stretch_rate", "pitch_semitones", "duration_speaker_id", "pitch_speaker_id"):
            value = getattr(entry, key)
            if value is not None:
                meta[key] = value
        if entry.realization:
            meta["source_utt_id"] = rec.utt_id
            meta["realization"] = entry.realization
        return UtteranceRecord(utt_id, rec.text, rec.speaker_id, rec.duration_s, name, rec.origin, meta)

    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            records = list(pool.map(render, plan))
    else:
        records = [render(e) for e in plan]
    return Manifest(records)


class AugmentPlanner(BaseEstimator):
    """Estimator front end for :func:`make_plan`.

    ``fit`` validates the configuration against a manifest (filling an empty
    speaker pool from the manifest's speakers); ``transform`` returns the plan.
    """

    def __init__(
        self,
        p_noise: float = 0.0,
        p_reverb: float = 0.0,
        snr_db_range=(0.0, 15.0),
        p_stretch: float = 0.0,
        stretch_range=(0.9, 1.1),
        p_pitch: float = 0.0,
        pitch_range=(-2.0, 2.0),
        reassign_duration_speaker: bool = False,
        reassign_pitch_speaker: bool = False,
        seed: int = 42,
        noise_pool=(),
        rir_pool=(),
        speaker_pool=(),
        realizations: int = 1,
        noise_durations: dict | None = None,
    ):
        self.p_noise = p_noise
        self.p_reverb = p_reverb
        self.snr_db_range = snr_db_range
        self.p_stretch = p_stretch
        self.stretch_range = stretch_range
        self.p_pitch = p_pitch
        self.pitch_range = pitch_range
        self.reassign_duration_speaker = reassign_duration_speaker
        self.reassign_pitch_speaker = reassign_pitch_speaker
        self.seed = seed
        self.noise_pool = noise_pool
        self.rir_pool = rir_pool
        self.speaker_pool = speaker_pool
        self.realizations = realizations
        self.noise_durations = noise_durations

    def fit(self, X: Manifest | Sequence[UtteranceRecord], y=None):
        records = X.records if isinstance(X, Manifest) else list(X)
        speakers = list(self.speaker_pool) or sorted({r.speaker_id for r in records})
        self.config_ = AugmentConfig(
            p_noise=self.p_noise,
            p_reverb=self.p_reverb,
            snr_db_range=tuple(self.snr_db_range),
            p_stretch=self.p_stretch,
            stretch_range=tuple(self.stretch_range),
            p_pitch=self.p_pitch,
            pitch_range=tuple(self.pitch_range),
            reassign_duration_speaker=self.reassign_duration_speaker,
            reassign_pitch_speaker=self.reassign_pitch_speaker,
            seed=self.seed,
            noise_pool=list(self.noise_pool),
            rir_pool=list(self.rir_pool),
            speaker_pool=speakers,
            realizations=self.realizations,
        ).validate()
        return self

    def transform(self, X: Manifest | Sequence[UtteranceRecord]) -> list[AugmentPlanEntry]:
        check_is_fitted(self, "config_")
        return make_plan(X, self.config_, self.noise_durations)
