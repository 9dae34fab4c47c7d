"""Synthetic query-log generation plus ingestion, aggregation, balancing
and splitting.

The generator mimics the shape of engagement logs: queries are composed
from per-category term templates; intent-positive queries either carry a
surface marker phrase ("help with ...") or, for a held-out fraction, no
marker at all and are recognizable only through their category. Everything
is deterministic per seed.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .taxonomy import build_taxonomy
from .tokenizer import CLS_TOKEN, PAD_TOKEN, UNK_TOKEN, make_vocab

CLICK = "click"
PURCHASE = "purchase"

DEFAULT_ACTION_WEIGHTS = {CLICK: 1.0, PURCHASE: 5.0}
DEFAULT_MIN_SCORE = 3.0

_SYLLABLES = [c + v for c in "bdklmnrst" for v in "aeiou"]
_FILLERS = ["pro", "set", "kit", "pack", "series"]


@dataclass(frozen=True)
class IntentLexicon:
    markers: tuple
    assoc_frac: float = 0.2


DEFAULT_INTENTS = {
    "help": IntentLexicon(markers=("help with", "how to fix", "support for")),
    "adult": IntentLexicon(markers=("adult", "explicit")),
    "lowasp": IntentLexicon(markers=("cheap", "budget")),
}


@dataclass(frozen=True)
class QueryRecord:
    query: str
    category_id: int
    action: str
    count: int


@dataclass(frozen=True)
class LabeledExample:
    query: str
    label: object  # frozenset of category ids (domain) or int 0/1 (intent)


@dataclass
class SyntheticSpec:
    num_leaves: int = 200
    branching: int = 20
    terms_per_leaf: int = 3
    intents: dict = field(default_factory=lambda: dict(DEFAULT_INTENTS))
    marker_prob: float = 0.7
    noise_rate: float = 0.0
    positive_prior: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError(f"noise_rate must be in [0,1), got {self.noise_rate}")
        if not 0.0 < self.positive_prior < 1.0:
            raise ConfigError(f"positive_prior must be in (0,1), got {self.positive_prior}")
        if self.num_leaves < 1:
            raise ConfigError("taxonomy must have at least one leaf")

    def taxonomy(self):
        return build_taxonomy(self.num_leaves, self.branching)

    def leaf_terms(self, leaf_index):
        """Deterministic unique pseudo-word terms for one leaf."""
        terms = []
        for j in range(self.terms_per_leaf):
            idx = leaf_index * self.terms_per_leaf + j
            word = ""
            for _ in range(3):
                word += _SYLLABLES[idx % len(_SYLLABLES)]
                idx //= len(_SYLLABLES)
            terms.append(word)
        return terms

    def associated_leaves(self, intent):
        """Leaf indices whose queries carry the intent with no surface marker."""
        lex = self.intents[intent]
        rng = np.random.default_rng((self.seed, zlib.crc32(intent.encode()), 17))
        k = max(1, int(round(lex.assoc_frac * self.num_leaves)))
        return set(rng.choice(self.num_leaves, size=k, replace=False).tolist())

    def vocab(self):
        """WordPiece vocab covering every word the generator can emit."""
        words = set(_FILLERS)
        for leaf in range(self.num_leaves):
            words.update(self.leaf_terms(leaf))
        for lex in self.intents.values():
            for marker in lex.markers:
                words.update(marker.split())
        tokens = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN] + sorted(words)
        return make_vocab(tokens)


def _base_query(spec, rng, leaf_index):
    terms = spec.leaf_terms(leaf_index)
    k = int(rng.integers(1, min(2, len(terms)) + 1))
    picked = [terms[int(i)] for i in rng.choice(len(terms), size=k, replace=False)]
    if rng.random() < 0.3:
        picked.append(_FILLERS[int(rng.integers(len(_FILLERS)))])
    return " ".join(picked)


def _decorate(rng, query, lex):
    marker = lex.markers[int(rng.integers(len(lex.markers)))]
    return f"{marker} {query}" if rng.random() < 0.5 else f"{query} {marker}"


def generate_synthetic_log(spec, n):
    """n QueryRecords plus ground-truth intent labels per distinct query.

    Returns (records, truth) where truth maps query -> {intent: 0/1}.
    """
    if n < 1:
        raise ConfigError("record count must be >= 1")
    tax = spec.taxonomy()
    leaves = tax.leaves()
    if not leaves:
        raise ConfigError("empty taxonomy")
    assoc = {name: spec.associated_leaves(name) for name in spec.intents}
    rng = np.random.default_rng(spec.seed)
    records = []
    truth = {}
    intent_names = sorted(spec.intents)
    for _ in range(n):
        leaf_index = int(rng.integers(len(leaves)))
        query = _base_query(spec, rng, leaf_index)
        labels = {name: int(leaf_index in assoc[name]) for name in intent_names}
        if intent_names and rng.random() < 0.3:
            name = intent_names[int(rng.integers(len(intent_names)))]
            if rng.random() < spec.marker_prob:
                query = _decorate(rng, query, spec.intents[name])
                labels[name] = 1
        category = leaves[leaf_index]
        if spec.noise_rate > 0.0 and rng.random() < spec.noise_rate:
            category = leaves[int(rng.integers(len(leaves)))]
        action = PURCHASE if rng.random() < 0.25 else CLICK
        count = int(rng.integers(1, 6))
        records.append(QueryRecord(query=query, category_id=category, action=action, count=count))
        prior = truth.get(query)
        truth[query] = {k: max(labels[k], prior[k]) for k in labels} if prior else labels
    return records, truth


def make_intent_examples(spec, intent, n):
    """Balanced-by-prior binary examples for one intent.

    Positives carry a marker with probability ``spec.marker_prob``; unmarked
    positives come from the intent's associated leaves. Negatives are plain
    category queries from non-associated leaves.
    """
    if intent not in spec.intents:
        raise ConfigError(f"unknown intent {intent!r}")
    lex = spec.intents[intent]
    assoc = spec.associated_leaves(intent)
    non_assoc = [i for i in range(spec.num_leaves) if i not in assoc]
    if not non_assoc:
        raise ConfigError("intent association covers every leaf; no negatives possible")
    rng = np.random.default_rng((spec.seed, zlib.crc32(intent.encode()), 29))
    assoc_list = sorted(assoc)
    out = []
    for _ in range(n):
        if rng.random() < spec.positive_prior:
            if rng.random() < spec.marker_prob:
                leaf = int(rng.integers(spec.num_leaves))
                query = _decorate(rng, _base_query(spec, rng, leaf), lex)
            else:
                leaf = assoc_list[int(rng.integers(len(assoc_list)))]
                query = _base_query(spec, rng, leaf)
            out.append(LabeledExample(query=query, label=1))
        else:
            leaf = non_assoc[int(rng.integers(len(non_assoc)))]
            out.append(LabeledExample(query=_base_query(spec, rng, leaf), label=0))
    return out


def aggregate_query_categories(records, min_score=DEFAULT_MIN_SCORE,
                               weights=None):
    """Score (query, category) pairs by weighted action counts and keep those
    at or above ``min_score``. Returns (examples, dropped_query_count)."""
    weights = dict(DEFAULT_ACTION_WEIGHTS) if weights is None else weights
    if any(w <= 0 for w in weights.values()):
        raise ConfigError("action weights must be positive")
    scores = {}
    for rec in records:
        key = (rec.query, rec.category_id)
        scores[key] = scores.get(key, 0.0) + weights[rec.action] * rec.count
    per_query = {}
    for (query, cat), score in scores.items():
        if score >= min_score:
            per_query.setdefault(query, set()).add(cat)
    all_queries = {rec.query for rec in records}
    dropped = len(all_queries) - len(per_query)
    examples = [LabeledExample(query=q, label=frozenset(cats))
                for q, cats in sorted(per_query.items())]
    return examples, dropped


def balance_downsample(examples, seed=0):
    """Uniformly subsample the majority class down to the minority size."""
    pos = [e for e in examples if e.label == 1]
    neg = [e for e in examples if e.label == 0]
    if not pos or not neg:
        raise ConfigError("balance_downsample requires both classes present")
    rng = np.random.default_rng(seed)
    if len(pos) > len(neg):
        idx = rng.choice(len(pos), size=len(neg), replace=False)
        pos = [pos[i] for i in sorted(idx)]
    elif len(neg) > len(pos):
        idx = rng.choice(len(neg), size=len(pos), replace=False)
        neg = [neg[i] for i in sorted(idx)]
    return pos + neg


def split(examples, ratios=(0.8, 0.1, 0.1), seed=0):
    """Partition into (train, val, test) by unique query string."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must be three positive values summing to 1, got {ratios}")
    if len(examples) < 3:
        raise ConfigError("need at least 3 examples to split")
    queries = sorted({e.query for e in examples})
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(queries))
    n_train = int(round(ratios[0] * len(queries)))
    n_val = int(round(ratios[1] * len(queries)))
    assignment = {}
    for rank, qi in enumerate(order):
        if rank < n_train:
            bucket = 0
        elif rank < n_train + n_val:
            bucket = 1
        else:
            bucket = 2
        assignment[queries[qi]] = bucket
    parts = ([], [], [])
    for e in examples:
        parts[assignment[e.query]].append(e)
    return parts


# ---------------------------------------------------------------------------
# TSV interchange
# ---------------------------------------------------------------------------


def write_log_tsv(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(f"{r.query}\t{r.category_id}\t{r.action}\t{r.count}\n")


def read_log_tsv(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            query, cat, action, count = line.rstrip("\n").split("\t")
            records.append(QueryRecord(query=query, category_id=int(cat),
                                       action=action, count=int(count)))
    return records


def write_labeled_tsv(path, examples):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in examples:
            if isinstance(e.label, frozenset):
                label = ",".join(str(c) for c in sorted(e.label))
            else:
                label = str(e.label)
            fh.write(f"{e.query}\t{label}\n")


def read_labeled_tsv(path, multi_label=False):
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            query, label = line.rstrip("\n").split("\t")
            if multi_label:
                examples.append(LabeledExample(query=query,
                                               label=frozenset(int(c) for c in label.split(","))))
            else:
                examples.append(LabeledExample(query=query, label=int(label)))
    return examples
