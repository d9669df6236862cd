"""Customer intention embedding: a small transformer encoder trained
with the interactive-metric weighted contrastive loss.

"""
import csv
import json
import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union, Iterable

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import TrainConfig
from .exceptions import ValidationError, CheckpointError, NonFiniteGradientError
from .ingest import Ad, AdPair
from .tokens import PAD_ID, TokenSequence, Vocabulary, tokenize_ad

LOGGER = logging.getLogger(__name__)

DTYPE = torch.float64

CHECKPOINT_FORMAT = 'sitebid-intent'
CHECKPOINT_VERSION = 1

TypePair = Tuple[TokenSequence, TokenSequence, float]


class SelfAttention(nn.Module):
    """Multi-head scaled dot-product self-attention over non-pad keys."""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads

        self.query = nn.Linear(d_model, d_model)
        self.key = nn.Linear(d_model, d_model)
        self.value = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, keep: torch.Tensor) -> torch.Tensor:
        batch, length, d_model = x.shape

        def split(tensor):
            return tensor.view(batch, length, self.n_heads, self.d_head).transpose(1, 2)

        query, key, value = split(self.query(x)), split(self.key(x)), split(self.value(x))

        scores = query @ key.transpose(-2, -1) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~keep[:, None, None, :], float('-inf'))
        weights = torch.softmax(scores, dim=-1)

        context = (weights @ value).transpose(1, 2).reshape(batch, length, d_model)

        return self.out(context)


class TransformerBlock(nn.Module):

    def __init__(self, d_model: int, n_heads: int, ff_mult: int):
        super().__init__()
        self.attention = SelfAttention(d_model, n_heads)
        self.attention_norm = nn.LayerNorm(d_model)
        self.feed_forward = nn.Sequential(
            nn.Linear(d_model, d_model * ff_mult),
            nn.GELU(),
            nn.Linear(d_model * ff_mult, d_model),
        )
        self.feed_forward_norm = nn.LayerNorm(d_model)

    def forward(self, x: torch.Tensor, keep: torch.Tensor) -> torch.Tensor:
        x = self.attention_norm(x + self.attention(x, keep))
        return self.feed_forward_norm(x + self.feed_forward(x))


class EmbeddingNet(nn.Module):
    """Maps token sequences to unit vectors.

    Token + learned position embeddings, N transformer blocks,
    a dense pooling layer over the mean of non-pad states,
    two feed-forward layers and an explicit normalization.

    """
    def __init__(self, vocab_size: int, seq_len: int, cfg: TrainConfig):
        super().__init__()
        cfg.validate()

        self.cfg = cfg
        self.vocab_size = vocab_size
        self.seq_len = seq_len

        self.token_embedding = nn.Embedding(vocab_size, cfg.d_model)
        self.position_embedding = nn.Embedding(seq_len, cfg.d_model)
        self.layers = nn.ModuleList([
            TransformerBlock(cfg.d_model, cfg.n_heads, cfg.ff_mult) for _ in range(cfg.n_layers)
        ])
        self.pooling = nn.Linear(cfg.d_model, cfg.d_model)
        self.head = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.d_model),
            nn.Tanh(),
            nn.Linear(cfg.d_model, cfg.d_out),
        )

        self.to(DTYPE)
        init_uniform(self, cfg.seed)

    @property
    def n_parameters(self) -> int:
        return sum(parameter.numel() for parameter in self.parameters())

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.dim() != 2 or ids.shape[1] != self.seq_len:
            raise ValidationError(f'expected token batch of shape (*, {self.seq_len})')

        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.vocab_size):
            raise ValidationError(f'token id out of range [0, {self.vocab_size})')

        keep = ids != PAD_ID
        # All-pad rows attend and pool over every position.
        keep = keep | ~keep.any(dim=1, keepdim=True)

        positions = torch.arange(self.seq_len)
        hidden = self.token_embedding(ids) + self.position_embedding(positions)[None, :, :]

        for layer in self.layers:
            hidden = layer(hidden, keep)

        weights = keep.to(DTYPE)[..., None]
        pooled = (hidden * weights).sum(dim=1) / weights.sum(dim=1)
        pooled = torch.tanh(self.pooling(pooled))

        return F.normalize(self.head(pooled), dim=-1)


def init_uniform(module: nn.Module, seed: int):
    """Initializes parameters uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Layer normalization keeps unit scale and zero shift.

    :param module:
    :param seed:

    """
    generator = torch.Generator().manual_seed(seed)

    with torch.no_grad():
        for submodule in module.modules():

            if isinstance(submodule, nn.Linear):
                bound = 1 / math.sqrt(submodule.in_features)
                tensors = [submodule.weight] + ([submodule.bias] if submodule.bias is not None else [])

            elif isinstance(submodule, nn.Embedding):
                bound = 1 / math.sqrt(submodule.embedding_dim)
                tensors = [submodule.weight]

            else:
                continue

            for tensor in tensors:
                values = torch.rand(tensor.shape, generator=generator, dtype=tensor.dtype)
                tensor.copy_(values * 2 * bound - bound)


def as_batch(sequences: Iterable[TokenSequence]) -> torch.Tensor:
    return torch.tensor([list(sequence.ids) for sequence in sequences], dtype=torch.long)


def forward(net: EmbeddingNet, tokens: TokenSequence) -> np.ndarray:
    """Returns the unit-norm embedding of a token sequence.

    :param net:
    :param tokens:

    :raises ValidationError: on token id out of range

    """
    with torch.no_grad():
        return net(as_batch([tokens]))[0].numpy().copy()


def log_sigmoid(x: float) -> float:
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def pair_loss(im: float, dot: float) -> float:
    """Returns the contrastive loss of a pair: -im * log(sigmoid(dot)).

    :param im: interactive metric in [-1, 1], -1 for negative pairs
    :param dot: inner product of the two unit embeddings

    """
    return -im * log_sigmoid(dot)


def pair_loss_tensor(im: torch.Tensor, dot: torch.Tensor) -> torch.Tensor:
    return -im * F.logsigmoid(dot)


def _pair_objective(net: EmbeddingNet, pair: TypePair) -> torch.Tensor:
    left, right, im = pair
    embeddings = net(as_batch([left, right]))
    dot = (embeddings[0] * embeddings[1]).sum()
    return pair_loss_tensor(torch.tensor(float(im), dtype=DTYPE), dot)


def pair_gradients(net: EmbeddingNet, pair: TypePair) -> Dict[str, torch.Tensor]:
    """Returns analytic parameter gradients of a pair loss.

    :param net:
    :param pair: (left tokens, right tokens, interactive metric)

    """
    net.zero_grad()
    _pair_objective(net, pair).backward()

    gradients = {}

    for name, parameter in net.named_parameters():
        gradient = parameter.grad

        gradients[name] = (
            torch.zeros_like(parameter) if gradient is None else gradient.detach().clone())

    net.zero_grad()

    return gradients


def grad_check(
        net: EmbeddingNet,
        pair: TypePair,
        epsilon: float = 1e-5,
        n_coords: int = 128,
        seed: int = 0,
        floor: float = 1e-6
) -> float:
    """Compares analytic gradients with central finite differences
    on a random subset of parameter coordinates.

    Returns max relative error |a - n| / max(|a|, |n|, floor).

    :param net: double precision network
    :param pair: (left tokens, right tokens, interactive metric)
    :param epsilon: finite difference step
    :param n_coords: coordinates to sample (all if fewer exist)
    :param seed: sampling seed
    :param floor: denominator floor for coordinates with vanishing gradients

    :raises NonFiniteGradientError:

    """
    gradients = pair_gradients(net, pair)
    named = list(net.named_parameters())

    sizes = np.array([parameter.numel() for _, parameter in named])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])

    rng = np.random.default_rng(seed)
    coords = np.sort(rng.choice(total, size=min(n_coords, total), replace=False))

    worst = 0.0

    with torch.no_grad():
        for coord in coords:
            param_idx = int(np.searchsorted(offsets, coord, side='right') - 1)
            flat_idx = int(coord - offsets[param_idx])
            name, parameter = named[param_idx]

            flat = parameter.view(-1)
            original = flat[flat_idx].item()

            flat[flat_idx] = original + epsilon
            loss_plus = _pair_objective(net, pair).item()

            flat[flat_idx] = original - epsilon
            loss_minus = _pair_objective(net, pair).item()

            flat[flat_idx] = original

            numeric = (loss_plus - loss_minus) / (2 * epsilon)
            analytic = gradients[name].view(-1)[flat_idx].item()

            if not (math.isfinite(numeric) and math.isfinite(analytic)):
                raise NonFiniteGradientError(f'non-finite gradient at `{name}`[{flat_idx}]')

            error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, error)

    return worst


def train(
        pairs: Sequence[AdPair],
        tokens: Mapping[str, TokenSequence],
        cfg: TrainConfig,
        vocab_size: int
) -> Tuple[EmbeddingNet, List[float]]:
    """Trains the intention embedding network with ADAM on shuffled mini-batches.

    Returns the network and per-epoch mean pair loss.

    :param pairs: interactive metric pairs (negatives carry -1)
    :param tokens: token sequence per ad id
    :param cfg:
    :param vocab_size:

    """
    if not pairs:
        raise ValidationError('no training pairs')

    ad_ids = sorted({pair.ad_i for pair in pairs} | {pair.ad_j for pair in pairs})
    missing = [ad_id for ad_id in ad_ids if ad_id not in tokens]

    if missing:
        raise ValidationError(f'ad `{missing[0]}` has no token sequence', field='ad_id')

    index = {ad_id: idx for idx, ad_id in enumerate(ad_ids)}
    sequences = as_batch(tokens[ad_id] for ad_id in ad_ids)
    seq_len = sequences.shape[1]

    left = torch.tensor([index[pair.ad_i] for pair in pairs], dtype=torch.long)
    right = torch.tensor([index[pair.ad_j] for pair in pairs], dtype=torch.long)
    ims = torch.tensor([pair.im for pair in pairs], dtype=DTYPE)

    net = EmbeddingNet(vocab_size, seq_len, cfg)
    optimizer = torch.optim.Adam(
        net.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_epsilon,
    )

    rng = np.random.default_rng(cfg.seed)
    n_pairs = len(pairs)
    losses = []

    LOGGER.info('Training intention embedding on %s pairs, %s parameters', n_pairs, net.n_parameters)

    for epoch in range(cfg.epochs):
        order = torch.from_numpy(rng.permutation(n_pairs))
        epoch_losses = torch.zeros(n_pairs, dtype=DTYPE)

        for start in range(0, n_pairs, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]

            used, inverse = torch.unique(torch.cat([left[batch], right[batch]]), return_inverse=True)
            embeddings = net(sequences[used])

            size = len(batch)
            dots = (embeddings[inverse[:size]] * embeddings[inverse[size:]]).sum(dim=-1)
            batch_losses = pair_loss_tensor(ims[batch], dots)

            optimizer.zero_grad()
            batch_losses.mean().backward()
            optimizer.step()

            epoch_losses[batch] = batch_losses.detach()

        mean_loss = epoch_losses.mean().item()

        if not math.isfinite(mean_loss):
            raise NonFiniteGradientError(f'non-finite loss at epoch {epoch}')

        losses.append(mean_loss)
        LOGGER.debug('Epoch %s mean loss %.6f', epoch, mean_loss)

    return net, losses


def embed_catalog(
        net: EmbeddingNet,
        ads: Iterable[Ad],
        vocab: Vocabulary,
        batch_size: int = 256
) -> Dict[str, np.ndarray]:
    """Embeds every ad. Identical texts get identical vectors regardless of catalog order.

    :param net:
    :param ads:
    :param vocab:
    :param batch_size:

    """
    ads = list(ads)
    sequences = {ad.ad_id: tokenize_ad(ad, vocab, net.seq_len) for ad in ads}

    unique = sorted({sequence.ids for sequence in sequences.values()})
    vectors = {}

    net.eval()

    with torch.no_grad():
        for start in range(0, len(unique), batch_size):
            chunk = unique[start:start + batch_size]
            batch = torch.tensor([list(ids) for ids in chunk], dtype=torch.long)

            for ids, vector in zip(chunk, net(batch).numpy()):
                vectors[ids] = vector.copy()

    return {ad.ad_id: vectors[sequences[ad.ad_id].ids] for ad in ads}


def save_checkpoint(net: EmbeddingNet, vocab: Vocabulary, path: Union[str, Path]):
    """Writes a versioned JSON checkpoint with config, vocabulary digest and tensors."""

    payload = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'config': asdict(net.cfg),
        'vocab_size': net.vocab_size,
        'seq_len': net.seq_len,
        'vocab_digest': vocab.digest(),
        'tensors': [
            {
                'name': name,
                'shape': list(tensor.shape),
                'data': tensor.detach().reshape(-1).tolist(),
            }
            for name, tensor in net.state_dict().items()
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding='utf-8')


def load_checkpoint(path: Union[str, Path], vocab: Vocabulary = None) -> EmbeddingNet:
    """Restores a network from a checkpoint, validating version and shapes.

    :param path:
    :param vocab: when given, must match the digest stored in the checkpoint

    :raises CheckpointError:

    """
    try:
        payload = json.loads(Path(path).read_text(encoding='utf-8'))

    except ValueError as e:
        raise CheckpointError(f'checkpoint is not valid JSON: {e}')

    if payload.get('format') != CHECKPOINT_FORMAT or payload.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError('unsupported checkpoint format or version')

    if vocab is not None and payload['vocab_digest'] != vocab.digest():
        raise CheckpointError('checkpoint was trained with another vocabulary')

    net = EmbeddingNet(payload['vocab_size'], payload['seq_len'], TrainConfig(**payload['config']))
    expected = net.state_dict()

    state = {}

    for entry in payload['tensors']:
        name, shape = entry['name'], tuple(entry['shape'])

        if name not in expected or tuple(expected[name].shape) != shape:
            raise CheckpointError(f'unexpected tensor `{name}` of shape {shape}')

        if len(entry['data']) != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f'tensor `{name}` data does not match its shape')

        state[name] = torch.tensor(entry['data'], dtype=DTYPE).reshape(shape)

    if set(state) != set(expected):
        raise CheckpointError('checkpoint lacks some tensors')

    net.load_state_dict(state)

    return net


def write_embeddings(embeddings: Mapping[str, np.ndarray], path: Union[str, Path]):

    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        dim = len(next(iter(embeddings.values()))) if embeddings else 0
        writer.writerow(['ad_id'] + [f'v_{idx}' for idx in range(dim)])

        for ad_id, vector in embeddings.items():
            writer.writerow([ad_id] + [repr(float(value)) for value in vector])


def read_embeddings(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    embeddings = {}

    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        header = next(reader, None)

        if not header or header[0] != 'ad_id':
            raise ValidationError('embeddings header must start with `ad_id`', line=1)

        for row in reader:
            line = reader.line_num

            if len(row) != len(header):
                raise ValidationError('row length does not match header', line=line)

            try:
                embeddings[row[0]] = np.array([float(value) for value in row[1:]])

            except ValueError:
                raise ValidationError('embedding component is not a number', line=line)

    return embeddings
