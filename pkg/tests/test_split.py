import pytest
from hypothesis import given
from hypothesis import strategies as st

from pitchtrace.errors import TooFewMatches
from pitchtrace.split import SplitManifest, split_dataset
from pitchtrace.synth import generate_corpus


def ids(n):
    return [f"match-{i:03d}" for i in range(n)]


def test_sizes_20_and_140():
    assert split_dataset(ids(20), 0).sizes() == (14, 3, 3)
    assert split_dataset(ids(140), 0).sizes() == (98, 21, 21)


def test_same_seed_same_manifest():
    assert split_dataset(ids(50), 7) == split_dataset(list(reversed(ids(50))), 7)
    assert split_dataset(ids(50), 7) != split_dataset(ids(50), 8)


@given(st.integers(3, 500), st.integers(0, 2**32 - 1))
def test_exact_partition(n, seed):
    m = split_dataset(ids(n), seed)
    train, val, test = (set(m.matches(p)) for p in ("train", "val", "test"))
    assert train | val | test == set(ids(n))
    assert not (train & val or train & test or val & test)
    assert (len(train), len(test)) == (n * 70 // 100, n * 15 // 100)


def test_too_few_matches():
    with pytest.raises(TooFewMatches):
        split_dataset(["a", "b", "a"], 0)


def test_no_test_match_in_training():
    corpus = generate_corpus(20, 2, duration_s=0.2, seed=3)
    m = split_dataset([s.match_id for s in corpus], 3)
    train_ids = {s.match_id for s in m.select(corpus, "train")}
    assert not train_ids & {s.match_id for s in m.select(corpus, "test")}


def test_manifest_save_load(tmp_path):
    m = split_dataset(ids(30), 5)
    assert SplitManifest.load(m.save(tmp_path / "split.json")) == m
