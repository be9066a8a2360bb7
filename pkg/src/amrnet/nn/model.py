"""The six-block 1D CNN over SNP token sequences."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigurationError, InputError
from . import layers as L
from .ops import sigmoid

# (filters, kernel) per block; max-pool after the first POOLED_BLOCKS blocks
BLOCK_PLAN = ((128, 7), (128, 7), (64, 5), (64, 5), (32, 3), (32, 3))
POOLED_BLOCKS = 4
MIN_SEQ_LEN = 16


@dataclass
class CnnArchitecture:
    seq_len: int
    n_tokens: int = 5
    embed_dim: int = 64
    blocks: tuple = BLOCK_PLAN
    pooled_blocks: int = POOLED_BLOCKS
    pool: int = 2
    hidden: int = 128
    dropout: float = 0.3
    l2: float = 1e-4
    dtype: str = "float32"

    def to_dict(self):
        d = asdict(self)
        d["blocks"] = [list(b) for b in self.blocks]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["blocks"] = tuple(tuple(b) for b in d["blocks"])
        return cls(**d)


def pooled_length(seq_len: int, n_pools: int = POOLED_BLOCKS, pool: int = 2) -> int:
    """Sequence length after ``n_pools`` floor-division pools."""
    for _ in range(n_pools):
        seq_len //= pool
    return seq_len


class CnnModel:
    """Embedding, six conv/batchnorm/ReLU blocks, global max pool, MLP head.

    ``forward`` returns logits of shape ``(B,)``; ``predict_proba`` applies the
    sigmoid in inference mode.
    """

    def __init__(self, arch: CnnArchitecture, seed: int = 0):
        if arch.seq_len < MIN_SEQ_LEN:
            raise ConfigurationError(
                f"seq_len {arch.seq_len} too short; four pools need at least {MIN_SEQ_LEN}"
            )
        self.arch = arch
        self.seed = seed
        dtype = np.dtype(arch.dtype)
        rng = np.random.default_rng(seed)
        self.dropout_rng = np.random.default_rng([seed, 1])
        self.blocks = []
        cin = arch.embed_dim
        for i, (filters, k) in enumerate(arch.blocks, start=1):
            if i == 1:
                conv = L.EmbedConv1D(arch.n_tokens, arch.embed_dim, filters, k, rng, arch.l2, dtype)
            else:
                conv = L.Conv1D(f"block{i}.conv", cin, filters, k, rng, arch.l2, dtype)
            block = [conv, L.BatchNorm(f"block{i}.bn", filters, dtype=dtype), L.ReLU()]
            if i <= arch.pooled_blocks:
                block.append(L.MaxPool1D(arch.pool))
            self.blocks.append(block)
            cin = filters
        self.head = [
            L.GlobalMaxPool(),
            L.Dropout(arch.dropout, self.dropout_rng),
            L.Dense("dense", cin, arch.hidden, rng, arch.l2, dtype),
            L.ReLU(),
            L.Dropout(arch.dropout, self.dropout_rng),
            L.Dense("output", arch.hidden, 1, rng, arch.l2, dtype),
        ]

    # ------------------------------------------------------------------
    @property
    def layers(self):
        return [layer for block in self.blocks for layer in block] + self.head

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def buffers(self):
        out = {}
        for layer in self.layers:
            out.update(layer.buffers())
        return out

    def n_parameters(self) -> int:
        return int(sum(p.value.size for p in self.parameters()))

    @property
    def post_pool_length(self) -> int:
        return pooled_length(self.arch.seq_len, self.arch.pooled_blocks, self.arch.pool)

    def reseed_dropout(self, seed):
        self.dropout_rng.bit_generator.state = np.random.default_rng([seed, 1]).bit_generator.state

    # ------------------------------------------------------------------
    def _check_input(self, tokens):
        tokens = np.asarray(tokens)
        if tokens.ndim == 1:
            tokens = tokens[None, :]
        if tokens.ndim != 2 or tokens.shape[1] != self.arch.seq_len:
            raise InputError(
                f"model expects sequences of length {self.arch.seq_len}, got shape {tokens.shape}"
            )
        return tokens

    def forward(self, tokens, training=False):
        x = self._check_input(tokens)
        for layer in self.layers:
            x = layer.forward(x, training)
        return x[:, 0]

    def backward(self, dlogits):
        g = np.asarray(dlogits, dtype=self.arch.dtype)[:, None]
        for layer in reversed(self.layers):
            g = layer.backward(g)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def predict_logits(self, tokens, batch_size=16):
        tokens = self._check_input(tokens)
        out = [self.forward(tokens[s : s + batch_size]) for s in range(0, len(tokens), batch_size)]
        return np.concatenate(out) if out else np.zeros(0)

    def predict_proba(self, tokens, batch_size=16):
        return sigmoid(self.predict_logits(tokens, batch_size).astype(np.float64))

    # ------------------------------------------------------------------
    def state_arrays(self) -> dict:
        arrays = {p.name: p.value for p in self.parameters()}
        arrays.update(self.buffers())
        return arrays

    def load_state_arrays(self, arrays: dict):
        own = self.state_arrays()
        missing = set(own) - set(arrays)
        if missing:
            raise InputError(f"state is missing arrays: {sorted(missing)}")
        for name, target in own.items():
            src = np.asarray(arrays[name])
            if src.shape != target.shape:
                raise InputError(f"{name}: shape {src.shape} != {target.shape}")
            target[...] = src


def build_amr_cnn(seq_len: int, seed: int = 0, dtype="float32", dropout=0.3, l2=1e-4) -> CnnModel:
    """The SNP CNN for sequences of ``seq_len`` tokens, deterministically seeded."""
    return CnnModel(CnnArchitecture(seq_len=seq_len, dtype=str(np.dtype(dtype)), dropout=dropout, l2=l2), seed)
