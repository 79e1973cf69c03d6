"""Speech corpus curation: di-phoneme KL sentence selection, embedding-distance
speaker selection, seeded augmentation plans and WER/CER scoring."""

__version__ = "0.1.0"

from .augment import AugmentConfig, AugmentPlanEntry, AugmentPlanner, apply_noise, apply_plan, apply_rir, make_plan
from .diphone_stats import DiphoneDistribution, SupportError, TargetDistribution, kl, natural_target, uniform_target
from .manifest import Manifest, SpeakerEmbeddingRecord, UtteranceRecord, average_embeddings, read_manifest, write_manifest
from .phonemize import Lexicon, Phonemizer, diphones, normalize_tokens, phonemize_sentence, read_lexicon
from .score import align, cer, mapsswe, wer
from .sentence_select import Candidate, SelectionState, SentenceSelector, greedy_select, random_select, score_candidate
from .speaker_select import SpeakerSelector, cosine_distance, nearest_neighbor_report, select_speakers

__all__ = [
    "AugmentConfig", "AugmentPlanEntry", "AugmentPlanner", "apply_noise", "apply_plan", "apply_rir", "make_plan",
    "DiphoneDistribution", "SupportError", "TargetDistribution", "kl", "natural_target", "uniform_target",
    "Manifest", "SpeakerEmbeddingRecord", "UtteranceRecord", "average_embeddings", "read_manifest", "write_manifest",
    "Lexicon", "Phonemizer", "diphones", "normalize_tokens", "phonemize_sentence", "read_lexicon",
    "align", "cer", "mapsswe", "wer",
    "Candidate", "SelectionState", "SentenceSelector", "greedy_select", "random_select", "score_candidate",
    "SpeakerSelector", "cosine_distance", "nearest_neighbor_report", "select_speakers",
]
