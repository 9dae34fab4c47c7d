"""Multi-layer transformer encoder with CLS extraction, frozen-prefix
partitioning, and a closed-form parameter-counting oracle.

Weight naming convention (all float32):
    embeddings.word (V,D)  embeddings.position (P,D)  embeddings.token_type (T,D)
    embeddings.ln.gamma / .beta (D,)
    layer{i}.attn.{q,k,v,o}.w (D,D)  layer{i}.attn.{q,k,v,o}.b (D,)
    layer{i}.ln1.gamma / .beta (D,)
    layer{i}.ffn.w1 (D,F)  .b1 (F,)  .w2 (F,D)  .b2 (D,)
    layer{i}.ln2.gamma / .beta (D,)
with i in 1..L. Post-layer-norm residual blocks, GELU feed-forward.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import checkpoint
from . import tensor as T
from .errors import ConfigError, ShapeError

MASK_NEG = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 12
    hidden_dim: int = 768
    num_heads: int = 12
    ff_dim: int = 3072
    vocab_size: int = 30522
    max_positions: int = 512
    type_vocab: int = 2
    dropout: float = 0.1

    def __post_init__(self):
        for f in ("num_layers", "hidden_dim", "num_heads", "ff_dim", "vocab_size",
                  "max_positions", "type_vocab"):
            if getattr(self, f) < 1:
                raise ConfigError(f"{f} must be >= 1, got {getattr(self, f)}")
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")

    @classmethod
    def reference(cls):
        return cls()

    @classmethod
    def toy(cls, num_layers=2, hidden_dim=64, num_heads=4, ff_dim=128,
            vocab_size=1000, max_positions=16, dropout=0.1):
        return cls(num_layers=num_layers, hidden_dim=hidden_dim, num_heads=num_heads,
                   ff_dim=ff_dim, vocab_size=vocab_size, max_positions=max_positions,
                   dropout=dropout)

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FreezeSpec:
    """Frozen prefix depth N: N=0 trains everything; N>=1 freezes the
    embedding block and encoder layers 1..N."""

    frozen_prefix: int = 0

    def validate(self, config):
        if not 0 <= self.frozen_prefix <= config.num_layers:
            raise ConfigError(
                f"frozen_prefix {self.frozen_prefix} outside [0, {config.num_layers}]")
        return self


@dataclass
class LayerOutputs:
    """Per-layer CLS embeddings, with optional full hidden-state sequences."""

    cls: dict
    hidden: dict
    attention: list | None = None


# ---------------------------------------------------------------------------
# parameter accounting
# ---------------------------------------------------------------------------


def layer_param_count(config):
    d, f = config.hidden_dim, config.ff_dim
    return 4 * (d * d + d) + (d * f + f) + (f * d + d) + 2 * (2 * d)


def embedding_param_count(config):
    d = config.hidden_dim
    return (config.vocab_size + config.max_positions + config.type_vocab) * d + 2 * d


def count_parameters(config, freeze=FreezeSpec(0), head_params=0):
    """Closed-form (total, trainable) for encoder + an attached head."""
    freeze.validate(config)
    per_layer = layer_param_count(config)
    total = embedding_param_count(config) + config.num_layers * per_layer + head_params
    n = freeze.frozen_prefix
    trainable = (config.num_layers - n) * per_layer + head_params
    if n == 0:
        trainable += embedding_param_count(config)
    return total, trainable


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def _trunc_normal(rng, shape, std=0.02):
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(np.float32)


def weight_names(config):
    names = ["embeddings.word", "embeddings.position", "embeddings.token_type",
             "embeddings.ln.gamma", "embeddings.ln.beta"]
    for i in range(1, config.num_layers + 1):
        for proj in ("q", "k", "v", "o"):
            names += [f"layer{i}.attn.{proj}.w", f"layer{i}.attn.{proj}.b"]
        names += [f"layer{i}.ln1.gamma", f"layer{i}.ln1.beta",
                  f"layer{i}.ffn.w1", f"layer{i}.ffn.b1",
                  f"layer{i}.ffn.w2", f"layer{i}.ffn.b2",
                  f"layer{i}.ln2.gamma", f"layer{i}.ln2.beta"]
    return names


def _weight_shape(name, config):
    d, f = config.hidden_dim, config.ff_dim
    if name == "embeddings.word":
        return (config.vocab_size, d)
    if name == "embeddings.position":
        return (config.max_positions, d)
    if name == "embeddings.token_type":
        return (config.type_vocab, d)
    if name.endswith(".ffn.w1"):
        return (d, f)
    if name.endswith(".ffn.b1"):
        return (f,)
    if name.endswith(".ffn.w2"):
        return (f, d)
    if name.endswith((".attn.q.w", ".attn.k.w", ".attn.v.w", ".attn.o.w")):
        return (d, d)
    return (d,)


def init_weights(config, seed=0):
    """Random init: truncated normal std 0.02, zero biases, identity layer norm."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name in weight_names(config):
        shape = _weight_shape(name, config)
        if name.endswith((".gamma",)):
            data = np.ones(shape, dtype=np.float32)
        elif name.endswith((".beta", ".b")) or name.endswith((".b1", ".b2")):
            data = np.zeros(shape, dtype=np.float32)
        else:
            data = _trunc_normal(rng, shape)
        weights[name] = T.Tensor(data, name=name, trainable=True)
    return weights


def frozen_names(config, freeze):
    """Weight names covered by the frozen prefix."""
    freeze.validate(config)
    n = freeze.frozen_prefix
    if n == 0:
        return set()
    out = {name for name in weight_names(config) if name.startswith("embeddings.")}
    for i in range(1, n + 1):
        out |= {name for name in weight_names(config) if name.startswith(f"layer{i}.")}
    return out


def apply_freeze(weights, config, freeze):
    """Set trainable flags per the freeze spec; returns the same dict."""
    frozen = frozen_names(config, freeze)
    for name, t in weights.items():
        t.trainable = name not in frozen
        t.requires_grad = t.trainable
        if not t.trainable:
            t.grad = None
    return weights


def save_encoder(path, config, weights, extra=None):
    cfg = {"kind": "encoder", "encoder": config.to_dict()}
    if extra:
        cfg.update(extra)
    checkpoint.save(path, cfg, weights)


def load_encoder(path, expected_config=None):
    cfg, arrays, flags = checkpoint.load(path)
    if cfg.get("kind") != "encoder":
        raise ConfigError(f"checkpoint at {path} is not an encoder (kind={cfg.get('kind')!r})")
    config = EncoderConfig(**cfg["encoder"])
    if expected_config is not None and config != expected_config:
        raise ConfigError(
            f"checkpoint config {config} does not match requested {expected_config}")
    weights = {}
    mismatched = []
    for name in weight_names(config):
        if name not in arrays:
            mismatched.append(f"missing {name}")
            continue
        shape = _weight_shape(name, config)
        if arrays[name].shape != shape:
            mismatched.append(f"{name}: have {arrays[name].shape}, want {shape}")
            continue
        weights[name] = T.Tensor(arrays[name], name=name, trainable=flags.get(name, True))
    if mismatched:
        raise ConfigError("checkpoint/config mismatch: " + "; ".join(mismatched))
    return config, weights


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------


def _split_heads(x, num_heads):
    b, t, d = x.shape
    dh = d // num_heads
    return T.transpose(T.reshape(x, (b, t, num_heads, dh)), (0, 2, 1, 3))


def _merge_heads(x):
    b, h, t, dh = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, t, h * dh))


def _dense(x, weights, prefix):
    return T.add(T.matmul(x, weights[f"{prefix}.w"]), weights[f"{prefix}.b"])


def run_layer(x, mask_add, weights, config, i, train=False, rng=None, attn_sink=None):
    """One encoder block: self-attention + FFN, post-LN residuals."""
    w = weights
    q = _split_heads(_dense(x, w, f"layer{i}.attn.q"), config.num_heads)
    k = _split_heads(_dense(x, w, f"layer{i}.attn.k"), config.num_heads)
    v = _split_heads(_dense(x, w, f"layer{i}.attn.v"), config.num_heads)
    dh = config.hidden_dim // config.num_heads
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    probs = T.softmax(T.add_const(scores, mask_add))
    if attn_sink is not None:
        attn_sink.append(probs.data)
    ctx = _merge_heads(T.matmul(probs, v))
    attn_out = _dense(ctx, w, f"layer{i}.attn.o")
    attn_out = T.dropout(attn_out, config.dropout, rng, train)
    x = T.layer_norm(T.add(x, attn_out), w[f"layer{i}.ln1.gamma"], w[f"layer{i}.ln1.beta"])
    h = T.gelu(T.add(T.matmul(x, w[f"layer{i}.ffn.w1"]), w[f"layer{i}.ffn.b1"]))
    h = T.add(T.matmul(h, w[f"layer{i}.ffn.w2"]), w[f"layer{i}.ffn.b2"])
    h = T.dropout(h, config.dropout, rng, train)
    return T.layer_norm(T.add(x, h), w[f"layer{i}.ln2.gamma"], w[f"layer{i}.ln2.beta"])


def mask_additive(mask):
    """(B,T) 0/1 mask -> (B,1,1,T) additive attention bias."""
    return ((1.0 - np.asarray(mask, dtype=np.float32)) * MASK_NEG)[:, None, None, :]


def embed(ids, weights, config, train=False, rng=None):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.max() >= config.vocab_size:
        raise ConfigError(f"token id {ids.max()} >= vocab size {config.vocab_size}")
    b, t = ids.shape
    if t > config.max_positions:
        raise ShapeError(f"sequence length {t} exceeds max positions {config.max_positions}")
    w = weights
    x = T.embedding(w["embeddings.word"], ids)
    x = T.add(x, T.embedding(w["embeddings.position"], np.arange(t)))
    x = T.add(x, T.embedding(w["embeddings.token_type"], np.zeros(t, dtype=np.int64)))
    x = T.layer_norm(x, w["embeddings.ln.gamma"], w["embeddings.ln.beta"])
    return T.dropout(x, config.dropout, rng, train)


def forward_hidden(ids, mask, weights, config, train=False, rng=None,
                   start_layer=1, hidden_in=None, attn_sink=None):
    """Per-layer hidden-state Tensors {layer: (B,T,D)} from layer start..L.

    ``hidden_in`` (a Tensor or array) resumes the pass from the output of
    layer ``start_layer - 1`` instead of the embedding block.
    """
    mask_add = mask_additive(mask)
    if start_layer == 1 and hidden_in is None:
        x = embed(ids, weights, config, train=train, rng=rng)
    else:
        x = hidden_in if isinstance(hidden_in, T.Tensor) else T.Tensor(hidden_in)
    hidden = {}
    for i in range(start_layer, config.num_layers + 1):
        x = run_layer(x, mask_add, weights, config, i, train=train, rng=rng, attn_sink=attn_sink)
        hidden[i] = x
    return hidden


def encode(ids, mask, weights, config, layers=None, mode="infer", rng=None,
           return_hidden=(), collect_attention=False):
    """Inference-oriented wrapper returning numpy LayerOutputs.

    ``layers`` selects which per-layer CLS embeddings to return (default:
    final layer only); ``return_hidden`` requests full (B,T,D) hidden-state
    sequences at the named layers (serving cut points).
    """
    if mode not in ("infer", "train"):
        raise ConfigError(f"mode must be 'infer' or 'train', got {mode!r}")
    layers = {config.num_layers} if layers is None else set(layers)
    for req in set(layers) | set(return_hidden):
        if not 1 <= req <= config.num_layers:
            raise ConfigError(f"layer index {req} outside [1, {config.num_layers}]")
    attn = [] if collect_attention else None
    hidden = forward_hidden(ids, mask, weights, config,
                            train=(mode == "train"), rng=rng, attn_sink=attn)
    return LayerOutputs(
        cls={i: hidden[i].data[:, 0, :].copy() for i in layers},
        hidden={i: hidden[i].data.copy() for i in return_hidden},
        attention=attn,
    )
