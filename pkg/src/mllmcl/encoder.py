"""Mean-pooling sentence encoder with classification and MLM heads.

Forward: token embeddings are averaged over non-PAD positions, then passed
through ``tanh(x W1 + b1) W2 + b2`` to give the sentence representation.
The classifier and the MLM head are affine maps of that representation.
Gradients are derived by hand in :func:`backward`.
"""

from dataclasses import dataclass, fields

import numpy as np

from .corpus import PAD
from .errors import PositionOutOfRange, ShapeMismatch, TokenIdOutOfRange

CKPT_MAGIC = "MLLMCL-CKPT"


@dataclass(eq=False)
class ModelParams:
    token_embeddings: np.ndarray  # (V, d)
    w1: np.ndarray                # (d, d)
    b1: np.ndarray                # (d,)
    w2: np.ndarray                # (d, d_out)
    b2: np.ndarray                # (d_out,)
    w_cls: np.ndarray             # (d_out, C)
    b_cls: np.ndarray             # (C,)
    w_mlm: np.ndarray             # (d_out, V)
    b_mlm: np.ndarray             # (V,)

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]

    def arrays(self):
        return [getattr(self, name) for name in self.names()]

    @property
    def vocab_size(self):
        return self.token_embeddings.shape[0]

    @property
    def d(self):
        return self.token_embeddings.shape[1]

    @property
    def d_out(self):
        return self.w2.shape[1]

    @property
    def num_classes(self):
        return self.w_cls.shape[1]

    def map(self, fn, *others):
        return ModelParams(*[fn(a, *[getattr(o, n) for o in others])
                             for n, a in zip(self.names(), self.arrays())])

    def __add__(self, other):
        return self.map(np.add, other)

    def zeros_like(self):
        return self.map(np.zeros_like)

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_flat(self, vector):
        out, pos = [], 0
        for a in self.arrays():
            out.append(np.asarray(vector[pos:pos + a.size], dtype=np.float64).reshape(a.shape).copy())
            pos += a.size
        if pos != len(vector):
            raise ShapeMismatch("flat vector length does not match parameters")
        return ModelParams(*out)

    def check_shapes(self, other):
        for name, a, b in zip(self.names(), self.arrays(), other.arrays()):
            if a.shape != b.shape:
                raise ShapeMismatch(f"{name}: {a.shape} vs {b.shape}")


def init_params(vocab_size, d, d_out, num_classes, seed):
    if min(vocab_size, d, d_out, num_classes) < 1:
        raise ShapeMismatch("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    shapes = [(vocab_size, d), (d, d), (d,), (d, d_out), (d_out,),
              (d_out, num_classes), (num_classes,), (d_out, vocab_size), (vocab_size,)]
    return ModelParams(*[rng.uniform(-0.1, 0.1, size=s) for s in shapes])


def clone_params(params):
    return params.map(np.copy)


def save_checkpoint(params, path, seed=0):
    header = (f"{CKPT_MAGIC} 1 vocab_size={params.vocab_size} d={params.d} "
              f"d_out={params.d_out} num_classes={params.num_classes} seed={seed}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (params, seed)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        payload = fh.read()
    if len(header) < 2 or header[0] != CKPT_MAGIC:
        raise ShapeMismatch(f"{path} is not a checkpoint")
    meta = dict(item.split("=", 1) for item in header[2:])
    v, d, d_out, c = (int(meta[k]) for k in ("vocab_size", "d", "d_out", "num_classes"))
    shapes = [(v, d), (d, d), (d,), (d, d_out), (d_out,), (d_out, c), (c,), (d_out, v), (v,)]
    flat = np.frombuffer(payload, dtype="<f8")
    if flat.size != sum(int(np.prod(s)) for s in shapes):
        raise ShapeMismatch(f"{path}: payload size does not match header")
    arrays, pos = [], 0
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(flat[pos:pos + n].astype(np.float64).reshape(s))
        pos += n
    return ModelParams(*arrays), int(meta.get("seed", 0))


@dataclass(eq=False)
class EmbeddingBatch:
    """Sentence representations plus where each row came from.

    ``positive[i]`` is the row index of row i's paired transcript, or -1.
    """
    rows: np.ndarray
    origin: list
    positive: np.ndarray

    def __len__(self):
        return len(self.rows)

    @classmethod
    def single(cls, rows, example_ids=None, side="clean"):
        ids = range(len(rows)) if example_ids is None else example_ids
        return cls(rows, [(int(i), side) for i in ids], np.full(len(rows), -1, dtype=np.int64))

    @classmethod
    def paired(cls, clean_rows, noisy_rows, example_ids=None):
        """Stack clean rows then noisy rows; row i pairs with row i + N."""
        n = len(clean_rows)
        if len(noisy_rows) != n:
            raise ShapeMismatch("clean and noisy sides differ in row count")
        ids = list(range(n)) if example_ids is None else [int(i) for i in example_ids]
        origin = [(i, "clean") for i in ids] + [(i, "noisy") for i in ids]
        positive = np.concatenate([np.arange(n, 2 * n), np.arange(n)]).astype(np.int64)
        return cls(np.vstack([clean_rows, noisy_rows]), origin, positive)


@dataclass(eq=False)
class _Forward:
    tokens: np.ndarray
    mask: np.ndarray
    counts: np.ndarray
    pooled: np.ndarray
    hidden: np.ndarray
    out: np.ndarray


def _forward(params, token_rows):
    tokens = np.asarray(token_rows, dtype=np.int64)
    if tokens.ndim != 2:
        raise ShapeMismatch("token rows must be a 2-D id matrix")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= params.vocab_size):
        raise TokenIdOutOfRange(f"token ids must lie in [0, {params.vocab_size})")
    mask = tokens != PAD
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ShapeMismatch("every row needs at least one non-PAD token")
    emb = params.token_embeddings[tokens] * mask[..., None]
    pooled = emb.sum(axis=1) / counts[:, None]
    hidden = np.tanh(pooled @ params.w1 + params.b1)
    out = hidden @ params.w2 + params.b2
    return _Forward(tokens, mask, counts, pooled, hidden, out)


def encode(params, token_rows, example_ids=None, side="clean"):
    return EmbeddingBatch.single(_forward(params, token_rows).out, example_ids, side)


def classify(params, batch):
    rows = getattr(batch, "rows", batch)
    return rows @ params.w_cls + params.b_cls


def _positions(masked_positions, tokens):
    pos = np.asarray(masked_positions, dtype=np.int64).reshape(-1, 2)
    for r, c in pos:
        if not (0 <= r < tokens.shape[0] and 0 <= c < tokens.shape[1]) or tokens[r, c] == PAD:
            raise PositionOutOfRange(f"masked position ({r}, {c}) is outside the rows or on padding")
    return pos


def mlm_logits(params, token_rows, masked_positions):
    """Vocabulary logits for each (row, column) masked slot.

    Every slot in a row is scored from that row's pooled representation.
    """
    fwd = _forward(params, token_rows)
    pos = _positions(masked_positions, fwd.tokens)
    return fwd.out[pos[:, 0]] @ params.w_mlm + params.b_mlm


def backward(params, token_rows, grad_embeddings=None, grad_logits=None,
             masked_positions=None, grad_mlm_logits=None):
    """Parameter gradient given upstream gradients on the sentence
    representations, the classifier logits and/or the MLM logits of one
    forward pass over ``token_rows``."""
    fwd = _forward(params, token_rows)
    grads = params.zeros_like()
    m, d_out = fwd.out.shape
    grad_out = np.zeros((m, d_out))
    if grad_embeddings is not None:
        grad_embeddings = np.asarray(grad_embeddings, dtype=np.float64)
        if grad_embeddings.shape != fwd.out.shape:
            raise ShapeMismatch(f"embedding gradient shape {grad_embeddings.shape} != {fwd.out.shape}")
        grad_out += grad_embeddings
    if grad_logits is not None:
        grad_logits = np.asarray(grad_logits, dtype=np.float64)
        if grad_logits.shape != (m, params.num_classes):
            raise ShapeMismatch(f"logit gradient shape {grad_logits.shape} != {(m, params.num_classes)}")
        grads.w_cls = fwd.out.T @ grad_logits
        grads.b_cls = grad_logits.sum(axis=0)
        grad_out += grad_logits @ params.w_cls.T
    if grad_mlm_logits is not None:
        pos = _positions(masked_positions, fwd.tokens)
        g = np.asarray(grad_mlm_logits, dtype=np.float64)
        if g.shape != (len(pos), params.vocab_size):
            raise ShapeMismatch(f"MLM gradient shape {g.shape} != {(len(pos), params.vocab_size)}")
        grads.w_mlm = fwd.out[pos[:, 0]].T @ g
        grads.b_mlm = g.sum(axis=0)
        np.add.at(grad_out, pos[:, 0], g @ params.w_mlm.T)
    grads.w2 = fwd.hidden.T @ grad_out
    grads.b2 = grad_out.sum(axis=0)
    grad_pre = (grad_out @ params.w2.T) * (1.0 - fwd.hidden ** 2)
    grads.w1 = fwd.pooled.T @ grad_pre
    grads.b1 = grad_pre.sum(axis=0)
    grad_pooled = (grad_pre @ params.w1.T) / fwd.counts[:, None]
    rows_idx, cols_idx = np.nonzero(fwd.mask)
    np.add.at(grads.token_embeddings, fwd.tokens[rows_idx, cols_idx], grad_pooled[rows_idx])
    return grads
