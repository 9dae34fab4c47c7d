"""Task heads over the CLS embedding, the n-gram DNN baseline, and the
multi-label binary cross-entropy loss.

The category head is per-class sigmoid (independent binary decisions over
the taxonomy); intent heads are 768->2 affine + softmax. The DNN baseline
averages hashed character n-gram embeddings into a single affine layer.
"""

from __future__ import annotations

import zlib

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tokenizer import normalize


def bce_loss(targets, predictions, eps=1e-7):
    """Summed BCE of probability predictions against 0/1 targets (floats ok)."""
    y = np.asarray(targets, dtype=np.float64)
    p = predictions.data if isinstance(predictions, T.Tensor) else np.asarray(predictions)
    if y.shape != np.shape(p):
        raise ShapeError(f"bce_loss: {y.shape} targets vs {np.shape(p)} predictions")
    if isinstance(predictions, T.Tensor):
        return T.bce(predictions, y, eps=eps)
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum())


def init_category_head(dim, num_categories, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "head.category.w": T.Tensor(rng.normal(0, 0.02, (dim, num_categories)).astype(np.float32),
                                    name="head.category.w", trainable=True),
        "head.category.b": T.Tensor(np.zeros(num_categories, dtype=np.float32),
                                    name="head.category.b", trainable=True),
    }


def category_head_forward(cls_emb, head):
    """Per-category sigmoid scores; no normalization across categories."""
    x = cls_emb if isinstance(cls_emb, T.Tensor) else T.Tensor(cls_emb)
    logits = T.add(T.matmul(x, head["head.category.w"]), head["head.category.b"])
    return T.sigmoid(logits)


def init_intent_head(dim, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "head.intent.w": T.Tensor(rng.normal(0, 0.02, (dim, 2)).astype(np.float32),
                                  name="head.intent.w", trainable=True),
        "head.intent.b": T.Tensor(np.zeros(2, dtype=np.float32),
                                  name="head.intent.b", trainable=True),
    }


def intent_head_forward(cls_emb, head):
    """Two-way softmax over [negative, positive] logits."""
    x = cls_emb if isinstance(cls_emb, T.Tensor) else T.Tensor(cls_emb)
    logits = T.add(T.matmul(x, head["head.intent.w"]), head["head.intent.b"])
    return T.softmax(logits)


def intent_head_param_count(dim):
    return dim * 2 + 2


def softmax_cross_entropy(probs, labels, eps=1e-7):
    """Mean negative log-likelihood of softmax probabilities; labels are ints."""
    labels = np.asarray(labels, dtype=np.int64)
    onehot = np.zeros(probs.data.shape, dtype=np.float32)
    onehot[np.arange(labels.size), labels] = 1.0
    picked = T.tsum(T.mul(T.log(probs, eps=eps), T.Tensor(onehot)))
    return T.scale(picked, -1.0 / labels.size)


# ---------------------------------------------------------------------------
# n-gram DNN baseline
# ---------------------------------------------------------------------------

DEFAULT_NGRAM_TABLE = 174_486  # with dim 64 the affine head brings the total to 11,167,234
DEFAULT_NGRAM_DIM = 64


def _gram_id(gram, table_size):
    return zlib.crc32(gram.encode("utf-8")) % table_size


def extract_grams(query):
    """Character 1-3 grams within each word plus whole-word grams."""
    grams = []
    for word in normalize(query).split():
        for n in (1, 2, 3):
            grams.extend(word[i:i + n] for i in range(len(word) - n + 1))
        grams.append(f"<w>{word}</w>")
    return grams


def ngram_featurize(query, table, dim=None):
    """Mean embedding of all extracted grams; zero vector for empty queries."""
    data = table.data if isinstance(table, T.Tensor) else np.asarray(table)
    grams = extract_grams(query)
    if not grams:
        return np.zeros(data.shape[1], dtype=data.dtype)
    ids = np.array([_gram_id(g, data.shape[0]) for g in grams])
    return data[ids].mean(axis=0)


def init_dnn_baseline(table_size=DEFAULT_NGRAM_TABLE, dim=DEFAULT_NGRAM_DIM, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "dnn.table": T.Tensor(rng.normal(0, 0.02, (table_size, dim)).astype(np.float32),
                              name="dnn.table", trainable=True),
        "dnn.w": T.Tensor(rng.normal(0, 0.02, (dim, 2)).astype(np.float32),
                          name="dnn.w", trainable=True),
        "dnn.b": T.Tensor(np.zeros(2, dtype=np.float32), name="dnn.b", trainable=True),
    }


def dnn_baseline_forward(features, weights):
    """Affine d->2 plus softmax over a batch of n-gram features."""
    x = features if isinstance(features, T.Tensor) else T.Tensor(np.atleast_2d(features))
    logits = T.add(T.matmul(x, weights["dnn.w"]), weights["dnn.b"])
    return T.softmax(logits)


def dnn_param_count(table_size=DEFAULT_NGRAM_TABLE, dim=DEFAULT_NGRAM_DIM):
    return table_size * dim + dim * 2 + 2
