"""Ad text tokenization."""
import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Iterable, Tuple, Union

from .exceptions import SiteBidConfigurationError, ValidationError
from .ingest import Ad
from .settings import SEQ_LEN

PAD_ID = 0
UNK_ID = 1

PAD_TOKEN = '<pad>'
UNK_TOKEN = '<unk>'

TOP_ITEMS = 3
"""Number of top-ranked items whose text describes an ad."""

_RE_PUNCT = re.compile(r'[^\w\s]')


def normalize(text: str) -> List[str]:
    """Lowercases, strips punctuation and splits on whitespace."""
    return _RE_PUNCT.sub('', text.lower()).split()


class Vocabulary:
    """Immutable token to index mapping with reserved pad/unk entries."""

    def __init__(self, tokens: Iterable[str]):
        """
        :param tokens: regular tokens in index order (indexes start at 2)

        """
        self._itos: Tuple[str, ...] = (PAD_TOKEN, UNK_TOKEN) + tuple(tokens)
        self._stoi: Dict[str, int] = {token: idx for idx, token in enumerate(self._itos)}

        if len(self._stoi) != len(self._itos):
            raise ValidationError('vocabulary contains duplicate tokens')

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __getitem__(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def as_dict(self) -> Dict[str, int]:
        return dict(self._stoi)

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self[token] for token in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self._itos[idx] for idx in ids]

    def digest(self) -> str:
        """Returns a stable hash identifying the vocabulary."""
        return hashlib.sha256('\n'.join(self._itos).encode('utf-8')).hexdigest()

    def save(self, path: Union[str, Path]):
        """Writes `token<TAB>id` lines."""
        lines = [f'{token}\t{idx}' for idx, token in enumerate(self._itos)]
        Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'Vocabulary':
        tokens = []

        for lineno, line in enumerate(Path(path).read_text(encoding='utf-8').splitlines(), 1):
            if not line:
                continue

            try:
                token, idx = line.rsplit('\t', 1)
                idx = int(idx)

            except ValueError:
                raise ValidationError('expected `token<TAB>id`', line=lineno)

            if idx != lineno - 1:
                raise ValidationError(f'expected id {lineno - 1}', line=lineno, field='id')

            tokens.append(token)

        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValidationError('reserved pad/unk entries are missing', line=1)

        return cls(tokens[2:])


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length token ids; padding is a trailing suffix."""

    ids: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_tokens(self) -> int:
        """Number of non-pad positions."""
        return sum(1 for idx in self.ids if idx != PAD_ID)


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocabulary:
    """Builds a frequency-ranked vocabulary.

    Ties are broken lexicographically. Indexes 0/1 are reserved for pad/unk.

    :param corpus: texts
    :param max_size: capacity including reserved entries

    """
    corpus = list(corpus)

    if not corpus:
        raise ValidationError('corpus is empty')

    if max_size < 2:
        raise SiteBidConfigurationError('vocabulary capacity must be at least 2')

    counts = Counter()

    for text in corpus:
        counts.update(normalize(text))

    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))

    return Vocabulary(token for token, _ in ranked[:max_size - 2])


def ad_text(ad: Ad) -> str:
    """Returns an ad text feature: titles and descriptions of its top items."""
    parts = []

    for item in ad.top_items(TOP_ITEMS):
        parts.append(item.title)
        parts.append(item.description)

    return ' '.join(part for part in parts if part)


def tokenize_text(text: str, vocab: Vocabulary, seq_len: int = SEQ_LEN) -> TokenSequence:
    ids = vocab.encode(normalize(text))[:seq_len]
    ids += [PAD_ID] * (seq_len - len(ids))
    return TokenSequence(tuple(ids))


def tokenize_ad(ad: Ad, vocab: Vocabulary, seq_len: int = SEQ_LEN) -> TokenSequence:
    """Converts ad text feature into a token sequence of length `seq_len`.

    :param ad:
    :param vocab:
    :param seq_len: truncation/padding length (L)

    """
    if not ad.items:
        raise ValidationError(f'ad `{ad.ad_id}` has no items', field='items')

    return tokenize_text(ad_text(ad), vocab, seq_len)
