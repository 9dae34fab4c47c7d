"""Query normalization and greedy longest-match WordPiece tokenization.

Sequences are fixed length: one leading CLS position plus ``max_pieces``
content positions, PAD-filled on the right. A word with any unmatched
remainder collapses to a single UNK.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, VocabError

CLS_TOKEN = "[CLS]"
PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CONTINUATION = "##"

DEFAULT_MAX_PIECES = 12


@dataclass(frozen=True)
class Vocab:
    token_to_id: dict
    id_to_token: tuple
    cls_id: int
    pad_id: int
    unk_id: int

    def __len__(self):
        return len(self.id_to_token)


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple
    attention_mask: tuple

    def __len__(self):
        return len(self.ids)


def make_vocab(tokens):
    """Build a Vocab from an ordered token list (line number = id)."""
    token_to_id = {}
    for i, tok in enumerate(tokens):
        if tok in token_to_id:
            raise VocabError(f"duplicate token {tok!r} at lines {token_to_id[tok]} and {i}")
        if not tok:
            raise VocabError(f"empty token at line {i}")
        token_to_id[tok] = i
    for special in (CLS_TOKEN, PAD_TOKEN, UNK_TOKEN):
        if special not in token_to_id:
            raise VocabError(f"vocabulary missing required special token {special}")
    return Vocab(
        token_to_id=token_to_id,
        id_to_token=tuple(tokens),
        cls_id=token_to_id[CLS_TOKEN],
        pad_id=token_to_id[PAD_TOKEN],
        unk_id=token_to_id[UNK_TOKEN],
    )


def load_vocab(path):
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    while tokens and tokens[-1] == "":
        tokens.pop()
    return make_vocab(tokens)


def save_vocab(path, vocab):
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab.id_to_token:
            fh.write(tok + "\n")


def normalize(query):
    """Lowercase, collapse runs of whitespace, strip ends."""
    return " ".join(query.lower().split())


def word_pieces(word, vocab):
    """Greedy longest-match split of one word; None if any remainder is unmatched."""
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            candidate = word[start:end]
            if start > 0:
                candidate = CONTINUATION + candidate
            if candidate in vocab.token_to_id:
                match = candidate
                break
            end -= 1
        if match is None:
            return None
        pieces.append(match)
        start = end
    return pieces


def tokenize(query, vocab, max_pieces=DEFAULT_MAX_PIECES):
    if max_pieces < 1:
        raise ConfigError(f"max_pieces must be >= 1, got {max_pieces}")
    pieces = []
    for word in normalize(query).split():
        split = word_pieces(word, vocab)
        if split is None:
            pieces.append(UNK_TOKEN)
        else:
            pieces.extend(split)
    pieces = pieces[:max_pieces]
    ids = [vocab.cls_id] + [vocab.token_to_id[p] for p in pieces]
    mask = [1] * len(ids)
    pad = 1 + max_pieces - len(ids)
    ids += [vocab.pad_id] * pad
    mask += [0] * pad
    return TokenSequence(ids=tuple(ids), attention_mask=tuple(mask))


def pieces_of(query, vocab, max_pieces=DEFAULT_MAX_PIECES):
    """The content piece strings for a query (CLI display helper)."""
    out = []
    for word in normalize(query).split():
        split = word_pieces(word, vocab)
        out.extend(split if split is not None else [UNK_TOKEN])
    return out[:max_pieces]


def batch_encode(queries, vocab, max_pieces=DEFAULT_MAX_PIECES):
    """Tokenize a list of queries into (ids int32 (B,T), mask float32 (B,T))."""
    seqs = [tokenize(q, vocab, max_pieces) for q in queries]
    ids = np.array([s.ids for s in seqs], dtype=np.int32)
    mask = np.array([s.attention_mask for s in seqs], dtype=np.float32)
    return ids, mask
