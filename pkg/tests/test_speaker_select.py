import numpy as np
import pytest
from sklearn.base import clone

from corpus_forge.manifest import SpeakerEmbeddingRecord
from corpus_forge.speaker_select import (
    SpeakerSelector,
    cosine_distance,
    nearest_neighbor_report,
    select_speakers,
)
from oracles import speaker_oracle


def _unit(deg):
    r = np.deg2rad(deg)
    return [np.cos(r), np.sin(r)]


def test_maxmin_2d_fixture():
    # seen speaker at 0 deg; candidates on the unit circle
    seen = [_unit(0)]
    angles = {"a": 10, "b": 60, "c": 90, "d": 170, "e": 120}
    ids = list(angles)
    unseen = [_unit(angles[i]) for i in ids]
    # round 1: d (170 from seen); round 2: nearest-selected distances
    # a:10, b:60, c:80 (to d), e:50 (to d) -> c; round 3: a:10, b:30, e:30 -> b (tie, smaller id)
    assert select_speakers(seen, unseen, 3, "maxmin", unseen_ids=ids) == ["d", "c", "b"]
    assert select_speakers(seen, unseen, 1, "minmin", unseen_ids=ids) == ["a"]
    # medmin over sorted nearest distances a,b,c,e,d -> c
    assert select_speakers(seen, unseen, 1, "medmin", unseen_ids=ids) == ["c"]


@pytest.mark.parametrize("criterion", ["minmin", "medmin", "maxmin"])
def test_matches_bruteforce(criterion):
    rng = np.random.default_rng(13)
    for _ in range(20):
        dim = int(rng.integers(2, 6))
        seen = rng.normal(size=(int(rng.integers(1, 5)), dim))
        unseen = rng.normal(size=(int(rng.integers(1, 20)), dim))
        ids = [f"s{i:02d}" for i in rng.permutation(len(unseen))]
        n = int(rng.integers(0, len(unseen) + 1))
        got = select_speakers(seen, unseen, n, criterion, unseen_ids=ids)
        assert got == speaker_oracle(seen.tolist(), unseen.tolist(), ids, n, criterion)


def test_duplicate_vectors_tie_to_smallest_id():
    seen = [[1.0, 0.0]]
    unseen = [[0.0, 1.0], [0.0, 1.0]]
    assert select_speakers(seen, unseen, 1, "maxmin", unseen_ids=["b", "a"]) == ["a"]


def test_random_criterion_contract():
    unseen = np.eye(5)
    ids = ["e", "d", "c", "b", "a"]
    got = select_speakers(np.zeros((0, 5)), unseen, 3, "random", seed=4, unseen_ids=ids)
    perm = np.random.default_rng(4).permutation(5)
    assert got == [sorted(ids)[i] for i in perm[:3]]


def test_errors():
    with pytest.raises(ValueError):
        select_speakers([[1.0, 0.0]], [[0.0, 1.0]], 2)
    with pytest.raises(ValueError):
        select_speakers([[1.0, 0.0]], [[0.0, 1.0]], 1, "best")
    with pytest.raises(ValueError):
        select_speakers([[1.0, 0.0, 0.0]], [[0.0, 1.0]], 1)
    with pytest.raises(ValueError):
        select_speakers([[1.0, 0.0]], [[0.0, 0.0]], 1)
    with pytest.raises(ValueError):
        cosine_distance([0, 0], [1, 0])


def test_cosine_distance_range():
    assert cosine_distance([1, 0], [1, 0]) == pytest.approx(0.0)
    assert cosine_distance([1, 0], [-2, 0]) == pytest.approx(2.0)
    assert cosine_distance([1, 0], [0, 3]) == pytest.approx(1.0)


def test_neighbor_report():
    rep = nearest_neighbor_report([_unit(0)], [_unit(90), _unit(0)], ["x", "y"])
    assert rep.distances["x"] == pytest.approx(1.0)
    assert rep.min == pytest.approx(0.0, abs=1e-12)
    assert rep.to_json()["n_selected"] == 2


def test_estimator_api():
    recs = [SpeakerEmbeddingRecord(f"s{i}", np.array(_unit(20 * i))) for i in range(6)]
    sel = SpeakerSelector(n_speakers=2, criterion="maxmin").fit(recs[:1])
    assert sel.select(recs[1:]) == select_speakers([_unit(0)], [_unit(20 * i) for i in range(1, 6)], 2,
                                                 unseen_ids=[f"s{i}" for i in range(1, 6)])
    rows = clone(sel).fit(recs[:1]).transform(recs[1:])
    assert rows.shape == (2, 2)
    assert sel.get_params() == {"n_speakers": 2, "criterion": "maxmin", "seed": 42}
