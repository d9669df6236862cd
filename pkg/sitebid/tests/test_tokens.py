import pytest

from sitebid.exceptions import ValidationError
from sitebid.tokens import (
    PAD_ID, UNK_ID, Vocabulary, normalize, build_vocab, ad_text, tokenize_text, tokenize_ad,
)


def test_normalize():
    assert normalize('Oak, CHAIR!  soft-seat') == ['oak', 'chair', 'softseat']


def test_build_vocab():
    vocab = build_vocab(['a a b'], max_size=4)
    assert vocab.as_dict() == {'<pad>': 0, '<unk>': 1, 'a': 2, 'b': 3}

    # Equal counts are ordered lexicographically.
    vocab = build_vocab(['c b a', 'b c a d'], max_size=10)
    assert vocab.decode(range(2, len(vocab))) == ['a', 'b', 'c', 'd']

    vocab = build_vocab(['a a b'], max_size=2)
    assert len(vocab) == 2
    assert vocab.encode(['a', 'b', 'z']) == [UNK_ID, UNK_ID, UNK_ID]

    with pytest.raises(ValidationError):
        build_vocab([], max_size=4)


def test_vocab_persistence(tmp_path, write_text):
    vocab = build_vocab(['oak chair oak table'], max_size=10)
    path = tmp_path / 'vocab.txt'

    vocab.save(path)
    loaded = Vocabulary.load(path)

    assert loaded == vocab
    assert loaded.digest() == vocab.digest()
    assert build_vocab(['lamp'], max_size=10).digest() != vocab.digest()

    with pytest.raises(ValidationError) as e:
        Vocabulary.load(write_text('bad.txt', '<pad>\t0\n<unk>\t1\noak\t3\n'))
    assert e.value.line == 3


def test_tokenize_text():
    vocab = build_vocab(['a a b'], max_size=4)

    assert tokenize_text('a b z', vocab, seq_len=5).ids == (2, 3, UNK_ID, PAD_ID, PAD_ID)
    assert tokenize_text('b a b a b a', vocab, seq_len=3).ids == (3, 2, 3)

    sequence = tokenize_text('a z', vocab, seq_len=4)
    assert len(sequence) == 4
    assert sequence.n_tokens == 2


def test_tokenize_ad(make_ad):
    ad = make_ad('a1', titles=['Oak Chair', 'Pine Table', 'Desk Lamp', 'Wool Rug'])

    # Only the three best-ranked items describe an ad.
    text = ad_text(ad)
    assert 'Desk Lamp' in text
    assert 'Wool Rug' not in text

    vocab = build_vocab([text], max_size=100)
    sequence = tokenize_ad(ad, vocab)

    # Default length comes from SITEBID_SEQ_LEN.
    assert len(sequence) == 16
    assert UNK_ID not in sequence.ids
    assert vocab.decode(sequence.ids[:2]) == ['oak', 'chair']
