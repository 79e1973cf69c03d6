"""Small worked cases and oracle checks across modules."""

import math

import numpy as np
import pytest

from conftest import TOY_WORDS, random_phoneme_corpus, random_sentences
from corpus_forge.audio import read_wav, to_pcm16, write_wav
from corpus_forge.augment import (
    AugmentConfig,
    AugmentPlanEntry,
    apply_noise,
    apply_plan,
    apply_rir,
    convolve_rir,
    make_plan,
    noise_gain,
)
from corpus_forge.diphone_stats import DiphoneDistribution, count_diphones, natural_target, uniform_target
from corpus_forge.manifest import Manifest, UtteranceRecord, average_embeddings, read_manifest, write_manifest
from corpus_forge.phonemize import Lexicon, normalize_tokens, phonemize_sentence
from corpus_forge.score import align, error_counts, mapsswe
from corpus_forge.sentence_select import (
    Candidate,
    SelectionState,
    SentenceSelector,
    build_target,
    greedy_select,
    random_select,
    score_candidate,
)
from corpus_forge.speaker_select import nearest_neighbor_report, select_speakers
from oracles import convolve_direct, cosine, diphone_counts, edit_distance_recursive, greedy_oracle, kl_direct


# manifests ------------------------------------------------------------------

def test_empty_manifest(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    m = read_manifest(p)
    assert len(m) == 0 and m.total_duration_s == 0


def test_random_records_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    recs = [
        UtteranceRecord(f"id{i}", "".join(rng.choice(list("abc é漢"), 8)) + "x", f"s{i % 7}",
                        float(rng.uniform(0.1, 30)), None if i % 2 else f"w/{i}.wav", ["real", "tts", "vc"][i % 3])
        for i in range(100)
    ]
    write_manifest(recs, tmp_path / "m.jsonl")
    assert read_manifest(tmp_path / "m.jsonl").records == recs


def test_average_embedding_cases():
    np.testing.assert_allclose(average_embeddings([[1, 0], [1, 0]]), [1, 0])
    np.testing.assert_allclose(average_embeddings([[1, 0], [0, 1]]), [1 / math.sqrt(2)] * 2)
    vecs = np.random.default_rng(1).normal(size=(5, 16))
    mean = vecs.mean(axis=0)
    np.testing.assert_allclose(average_embeddings(vecs.tolist()), mean / np.sqrt((mean**2).sum()), atol=1e-15)


# phonemes and counts --------------------------------------------------------

def test_token_and_phoneme_cases():
    lex = Lexicon.from_mapping({"cat": ["K", "AE", "T"]})
    assert normalize_tokens("Hello, world!") == ["hello", "world"]
    assert normalize_tokens("don't stop") == ["don't", "stop"]
    assert normalize_tokens("") == []
    assert phonemize_sentence("cat", lex) == ["K", "AE", "T"]
    assert phonemize_sentence("qq", lex) == ["@q", "@q"]
    assert phonemize_sentence("cat cat", lex) == ["K", "AE", "T"] * 2


def test_counting_matches_oracle():
    lex = Lexicon.from_mapping(TOY_WORDS)
    assert count_diphones([["K", "AE", "T"]]) == {("K", "AE"): 1, ("AE", "T"): 1}
    assert DiphoneDistribution.from_sentences([]).total == 0
    seqs = [phonemize_sentence(s, lex) for s in random_sentences(np.random.default_rng(2), 50)]
    assert dict(count_diphones(seqs)) == dict(diphone_counts(seqs))


def test_target_cases():
    a, b = ("a", "x"), ("b", "x")
    assert natural_target({a: 1, b: 1}).probs == {a: 0.5, b: 0.5}
    assert math.fsum(natural_target({a: 7, b: 3}).probs.values()) == pytest.approx(1.0)
    inv4 = [(str(i), "x") for i in range(4)]
    assert set(uniform_target(inv4).probs.values()) == {0.25}
    assert uniform_target([a]).probs == {a: 1.0}
    inv10 = [(str(i), "x") for i in range(10)]
    assert uniform_target(inv10).entropy() == pytest.approx(math.log(10), abs=1e-12)


def test_add_then_remove_is_identity():
    P = DiphoneDistribution({("a", "b"): 3})
    P.add_counts({("K", "AE"): 2})
    assert P.total == 5
    P.remove_counts({("K", "AE"): 2})
    assert dict(P.counts) == {("a", "b"): 3} and P.total == 3


# sentence selection ---------------------------------------------------------

def test_zero_diphone_candidate_is_a_noop():
    real = [["a", "b", "c"]]
    target = natural_target(diphone_counts(real))
    state = SelectionState.from_real(real, target)
    assert score_candidate(state, Candidate.from_sequence("z", ["a"], 1.0)) == state.kl()


def test_fixed_point_stays_at_zero():
    real = [["a", "b", "a", "b"]]
    target = natural_target(diphone_counts(real))
    state = SelectionState.from_real(real, target)
    assert abs(score_candidate(state, Candidate.from_sequence("z", ["a", "b", "a", "b"], 1.0))) <= 1e-12


def test_candidate_score_equals_rebuild_on_toy_corpus():
    lex = Lexicon.from_mapping(TOY_WORDS)
    texts = ["the cat sat", "a dog ran", "the mat", "to the tin", "a note on the hat", "the dog sat on a mat"]
    seqs = [phonemize_sentence(t, lex) for t in texts]
    real, pool = seqs[:2], seqs[2:]
    target = natural_target(diphone_counts(seqs))
    state = SelectionState.from_real(real, target)
    for i, s in enumerate(pool):
        got = score_candidate(state, Candidate.from_sequence(f"z{i}", s, 1.0))
        assert got == pytest.approx(kl_direct(diphone_counts(real + [s]), target.probs), abs=1e-9)


def test_five_candidates_three_picks():
    lex = Lexicon.from_mapping(TOY_WORDS)
    real = [phonemize_sentence("the cat sat on the mat", lex)]
    texts = ["a dog ran to the tin", "the hat", "cat cat cat", "a note on a mat", "the dog sat"]
    pool = [(f"z{i}", phonemize_sentence(t, lex), 1.0) for i, t in enumerate(texts)]
    cands = [Candidate.from_sequence(u, s, d) for u, s, d in pool]
    target = build_target("natural", real, cands)
    got = greedy_select(real, cands, target, 3.0).selected
    assert len(got) == 3
    assert got == greedy_oracle(real, pool, target.probs, 3.0)


def test_duplicate_of_real_beats_divergent_sentence():
    # X is dominated by Y-like text: Q = {ab: 10, bc: 10, ca: 10, cc: 1} / 31
    real = [["a", "b", "c", "a"]]
    cands = [Candidate.from_sequence("dup", ["a", "b", "c", "a"], 1.0),
             Candidate.from_sequence("odd", ["c", "c", "c", "c"], 1.0)]
    target = natural_target({("a", "b"): 10, ("b", "c"): 10, ("c", "a"): 10, ("c", "c"): 1})
    state = SelectionState.from_real(real, target)
    # by hand: ln(31/30) for dup, (ln(31/60) + ln(15.5)) / 2 for odd
    assert score_candidate(state, cands[0]) == pytest.approx(math.log(31 / 30), abs=1e-12)
    assert score_candidate(state, cands[1]) == pytest.approx((math.log(31 / 60) + math.log(15.5)) / 2, abs=1e-12)
    assert greedy_select(real, cands, target, 1.0).selected == ["dup"]


def test_random_selection_cases():
    cands = [Candidate.from_sequence(f"z{i}", ["a", "b"], 1.0) for i in range(6)]
    assert random_select(cands, 2.0, 5) == random_select(cands, 2.0, 5)
    everything = random_select(cands, 100.0, 5)
    assert sorted(everything) == [c.utt_id for c in cands]
    three = cands[:3]
    n = 10_000
    first = [random_select(three, 1.0, seed)[0] for seed in range(n)]
    for c in three:
        k = first.count(c.utt_id)
        assert abs(k - n / 3) <= 3 * math.sqrt(n * (1 / 3) * (2 / 3))


def test_natural_trajectory_non_increasing_on_random_corpora():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        real = random_phoneme_corpus(rng, 20)
        seqs = random_phoneme_corpus(rng, 150)
        cands = [Candidate.from_sequence(f"z{i:03d}", s, float(rng.uniform(1, 3))) for i, s in enumerate(seqs)]
        sel = SentenceSelector(target="natural", budget_s=60.0).fit(cands, real=real, real_duration_s=40.0)
        values = [v for _, v in sel.trajectory_]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_empty_selection_has_single_checkpoint():
    real = [["a", "b", "c"]]
    cands = [Candidate.from_sequence("z", ["b", "c"], 1.0)]
    sel = SentenceSelector(budget_s=0.0).fit(cands, real=real, real_duration_s=12.5)
    target = build_target("natural", real, cands)
    assert sel.trajectory_ == [(12.5, pytest.approx(kl_direct(diphone_counts(real), target.probs), abs=1e-12))]


# speakers -------------------------------------------------------------------

def test_speaker_cases():
    assert select_speakers([[1, 0]], [[0, 1]], 0) == []
    eight = [math.cos(math.radians(8)), math.sin(math.radians(8))]
    got = select_speakers([[1, 0]], [eight, [0, 1], [-1, 0]], 2, "maxmin", unseen_ids=["t8", "up", "left"])
    assert got == ["left", "up"]


def test_neighbor_report_cases():
    rng = np.random.default_rng(4)
    real = rng.normal(size=(50, 6))
    rep = nearest_neighbor_report(real, real[:10])
    assert rep.max <= 1e-12
    one = nearest_neighbor_report([[1, 0]], [[0, 1]])
    assert one.mean == pytest.approx(1.0)
    sel = rng.normal(size=(50, 6))
    rep = nearest_neighbor_report(real, sel)
    expected = [min(cosine(s, r) for r in real.tolist()) for s in sel.tolist()]
    np.testing.assert_allclose(list(rep.distances.values()), expected, atol=1e-12)


# augmentation ---------------------------------------------------------------

def _m(n):
    return Manifest([UtteranceRecord(f"u{i}", "t", "s", 1.0) for i in range(n)])


def test_plan_degenerate_cases():
    plan = make_plan(_m(50), AugmentConfig(p_noise=1.0, snr_db_range=(5.0, 5.0), noise_pool=["n"]), {"n": 1.0})
    assert all(e.noise["snr_db"] == 5.0 for e in plan)
    empty = make_plan(_m(50), AugmentConfig())
    assert all(e == AugmentPlanEntry(e.utt_id) for e in empty)


def test_gain_cases():
    assert noise_gain(1.0, 1.0, 0.0) == 1.0
    assert noise_gain(1.0, 1.0, 10.0) == pytest.approx(10 ** -0.5, abs=1e-15)


def test_delayed_delta_shifts_input():
    x = np.arange(1.0, 11.0)
    h = np.zeros(4)
    h[3] = 1.0
    np.testing.assert_allclose(convolve_rir(x, h), np.r_[np.zeros(3), x[:-3]], atol=1e-6)


def test_64_tap_rir_on_1024_samples():
    rng = np.random.default_rng(6)
    x, h = rng.normal(size=1024), rng.normal(size=64)
    np.testing.assert_allclose(convolve_rir(x, h), convolve_direct(x.tolist(), h.tolist()), atol=1e-6)


def test_reverb_then_noise_ordering(tmp_path):
    rng = np.random.default_rng(8)
    write_wav(tmp_path / "u0.wav", rng.normal(0, 0.05, 3200))
    write_wav(tmp_path / "n.wav", rng.normal(0, 0.05, 5000))
    rir = np.zeros(100)
    rir[0], rir[40] = 0.9, 0.3
    write_wav(tmp_path / "r.wav", rir)
    m = Manifest([UtteranceRecord("u0", "t", "s", 0.2, "u0.wav")])
    entry = AugmentPlanEntry("u0", noise={"noise_path": str(tmp_path / "n.wav"), "snr_db": 6.0, "noise_offset_s": 0.1},
                             reverb={"rir_path": str(tmp_path / "r.wav")})
    apply_plan(m, [entry], tmp_path / "out", audio_root=tmp_path)
    x, _ = read_wav(tmp_path / "u0.wav")
    expected = apply_noise(apply_rir(x, read_wav(tmp_path / "r.wav")[0]), read_wav(tmp_path / "n.wav")[0], 6.0, 0.1)
    got, _ = read_wav(tmp_path / "out" / "u0.wav")
    np.testing.assert_array_equal(got, to_pcm16(expected)[0] / 32768.0)


# scoring --------------------------------------------------------------------

def test_alignment_cases():
    c = align(["a", "b"], ["a", "b"]).counts()
    assert c.hits == 2 and c.errors == 0
    c = align(["a", "b", "c"], ["a", "x", "c"]).counts()
    assert c.substitutions == 1 and c.errors == 1
    rng = np.random.default_rng(9)
    for _ in range(200):
        r = list(rng.choice(list("abc"), size=int(rng.integers(0, 8))))
        h = list(rng.choice(list("abc"), size=int(rng.integers(0, 8))))
        assert align(r, h).cost == edit_distance_recursive(r, h)


def test_corpus_counts_equal_recount():
    rng = np.random.default_rng(10)
    refs = [" ".join(rng.choice(list("abcd"), size=int(rng.integers(1, 8)))) for _ in range(30)]
    hyps = [" ".join(rng.choice(list("abcd"), size=int(rng.integers(0, 8)))) for _ in range(30)]
    total = error_counts(refs, hyps)
    assert total.errors == sum(edit_distance_recursive(r.split(), h.split()) for r, h in zip(refs, hyps))
    assert total.n_ref == sum(len(r.split()) for r in refs)


def test_mapsswe_fixtures():
    refs = [f"w{i} a b c d" for i in range(10)]
    same = mapsswe(refs, refs, refs)
    assert same.z == 0.0 and not same.p_significant_95
    one_error = [r.replace(" b ", " x ") for r in refs]
    res = mapsswe(refs, one_error, refs)
    assert res.diffs == [1] * 10 and res.infinite_z and res.p_significant_95
    two = mapsswe(["a b c d e"], ["x b c y e"], ["a b c d e"])
    one = mapsswe(["a b c d e"], ["x b y d e"], ["a b c d e"])
    assert (two.n_segments, one.n_segments) == (2, 1)
