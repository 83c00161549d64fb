import pytest

from umtkit.cipher import make_cipher_corpus


@pytest.fixture(scope="module")
def corpus():
    return make_cipher_corpus(vocab_size=80, n_sentences=600, n_test=30, shared=10, seed=3)


def test_sizes(corpus):
    assert len(corpus.src_mono) == len(corpus.tgt_mono) == 600
    assert len(corpus.test_src) == len(corpus.test_ref) == 30
    assert len(corpus.lexicon) == 80


def test_cipher_is_a_bijection(corpus):
    assert len(set(corpus.lexicon.values())) == len(corpus.lexicon)
    shared = [s for s, t in corpus.lexicon.items() if s == t]
    assert len(shared) == 10


def test_reference_is_the_cipher_of_the_test_side(corpus):
    for src, ref in zip(corpus.test_src, corpus.test_ref):
        assert [corpus.lexicon[w] for w in src] == ref


def test_target_side_uses_cipher_vocabulary(corpus):
    tgt_vocab = set(corpus.lexicon.values())
    assert all(w in tgt_vocab for s in corpus.tgt_mono for w in s)


def test_samples_are_not_parallel(corpus):
    ciphered = [[corpus.lexicon[w] for w in s] for s in corpus.src_mono]
    same = sum(a == b for a, b in zip(ciphered, corpus.tgt_mono))
    assert same < 30


def test_seeded_and_deterministic(corpus):
    again = make_cipher_corpus(vocab_size=80, n_sentences=600, n_test=30, shared=10, seed=3)
    assert again == corpus
    other = make_cipher_corpus(vocab_size=80, n_sentences=600, n_test=30, shared=10, seed=4)
    assert other.src_mono != corpus.src_mono


def test_write(corpus, tmp_path):
    files = corpus.write(tmp_path)
    assert set(files) == {"src_mono", "tgt_mono", "test_src", "test_ref", "lexicon"}
    lines = files["lexicon"].read_text(encoding="utf-8").splitlines()
    assert len(lines) == 80 and all(len(line.split("\t")) == 2 for line in lines)
    assert files["src_mono"].read_text(encoding="utf-8").count("\n") == 600


def test_rejects_tiny_vocabulary():
    with pytest.raises(ValueError):
        make_cipher_corpus(vocab_size=1)
