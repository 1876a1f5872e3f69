import numpy as np
import pytest
from scipy import stats

from dynir.click_model import RankBias
from dynir.errors import InvalidInputError
from dynir.metrics import Judgments
from dynir.relevance_model import build_belief, min_max_normalize
from dynir.simulator import UserModel, simulate_clicks, synth_collection, synth_ensemble

J = Judgments({("1", "a"): 0, ("1", "b"): 3, ("1", "c"): 0, ("1", "d"): 1})


def test_perfect_user():
    for seed in (0, 99):
        assert simulate_clicks(UserModel("perfect", seed), ("a", "b", "c"), J, "1") == (0, 1, 0)
    assert simulate_clicks(UserModel("perfect"), ("zz",), J, "1") == (0,)


def test_examination_user_certain_click():
    user = UserModel("examination", 3, RankBias([1.0]))
    assert all(simulate_clicks(user, ("b",), J, "1") == (1,) for _ in range(50))


def test_examination_user_is_seeded():
    a = UserModel("examination", 42)
    b = UserModel("examination", 42)
    page = ("b", "d", "a", "c")
    first = [simulate_clicks(a, page, J, "1") for _ in range(20)]
    assert first == [simulate_clicks(b, page, J, "1") for _ in range(20)]
    a.reset()
    assert first == [simulate_clicks(a, page, J, "1") for _ in range(20)]


def test_examination_click_rates():
    user = UserModel("examination", 7)
    page = ("b", "d", "a")
    n = 100_000
    clicks = np.array([simulate_clicks(user, page, J, "1") for _ in range(n)])
    want = RankBias.dcg(3).biases * np.array([1.0, 1 / 3, 0.0])
    sigma = np.sqrt(want * (1 - want) / n)
    assert np.all(np.abs(clicks.mean(axis=0) - want) <= 3 * sigma + 1e-12)


def test_user_kind_validated():
    with pytest.raises(InvalidInputError):
        UserModel("cascade")


def test_synth_noise_free_has_zero_variance():
    e, j = synth_ensemble(20, 5, 1, 0.0)
    assert np.all(build_belief(e).var == 0)


def test_synth_reproducible():
    e1, j1 = synth_ensemble(30, 5, 9, 0.3, n_subtopics=3)
    e2, j2 = synth_ensemble(30, 5, 9, 0.3, n_subtopics=3)
    assert e1.scores.tobytes() == e2.scores.tobytes()
    assert j1 == j2


def test_synth_means_track_relevance():
    for seed in range(20):
        e, j = synth_ensemble(100, 5, seed, 0.2)
        latent = [j.grade("1", d) for d in e.doc_ids]
        rho = stats.spearmanr(build_belief(min_max_normalize(e)).mean, latent)[0]
        assert rho > 0


def test_synth_collection_topics():
    ens, j = synth_collection(3, 10, 4, 0, 0.2, n_subtopics=2)
    assert list(ens) == ["1", "2", "3"]
    assert j.topics == ["1", "2", "3"]
    assert all(j.has_subtopics(t) for t in ens)
    with pytest.raises(InvalidInputError):
        synth_ensemble(5, 1, 0, 0.1)
