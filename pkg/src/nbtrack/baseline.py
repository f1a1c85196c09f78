"""Delexicalisation-based comparison tracker.

Exact-match (plus optional semantic-dictionary) substitution of ontology value
mentions into generic tags, template n-gram features around the candidate's
tag, and a per-slot logistic classifier. Turn-level probabilities feed the
same cross-turn update as the neural models, so the two systems differ only in
turn-level understanding.

The matcher is deliberately literal: it only recognizes surface forms listed
in the ontology or the dictionary. That brittleness is the point of the
comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .domain import (
    ACT_CONFIRM, ACT_REQUEST, REQUEST_SLOT, CandidatePair, FormatError, Ontology,
)
from .examples import BatchPlan, batches_per_epoch, minibatches
from .wordvec import tokenize

VALUE_TAG = "<value:{slot}>"
SLOT_TAG = "<slot:{slot}>"


class SemanticDictionary:
    """Hand-listed rephrasings: (slot, value) -> list of token phrases."""

    def __init__(self, rephrasings: dict):
        self.rephrasings = {}
        for (slot, value), phrases in rephrasings.items():
            toks = [tuple(tokenize(p)) if isinstance(p, str) else tuple(p)
                    for p in phrases]
            if any(not t for t in toks):
                raise FormatError(f"empty rephrasing for ({slot!r}, {value!r})")
            self.rephrasings[(slot, value)] = toks

    def phrases(self, slot: str, value: str) -> list:
        return self.rephrasings.get((slot, value), [])

    def to_json(self) -> dict:
        out: dict = {}
        for (slot, value), phrases in self.rephrasings.items():
            out.setdefault(slot, {})[value] = [" ".join(p) for p in phrases]
        return out


def load_semantic_dictionary(path) -> SemanticDictionary:
    """Read {slot: {value: [phrase, ...]}} JSON."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: dictionary must be an object keyed by slot")
    rephrasings = {}
    for slot, values in data.items():
        for value, phrases in values.items():
            rephrasings[(slot, value)] = list(phrases)
    return SemanticDictionary(rephrasings)


def save_semantic_dictionary(dictionary: SemanticDictionary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dictionary.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class DelexMatch:
    start: int
    length: int
    slot: str
    value: str
    source: str        # "exact" or "dictionary"
    original: tuple    # the replaced tokens


@dataclass
class DelexResult:
    tokens: list       # tagged token list
    matches: list      # DelexMatch records

    def restore(self) -> list:
        """Reverse the substitution using the match records."""
        out = list(self.tokens)
        for m in sorted(self.matches, key=lambda m: m.start, reverse=True):
            out[m.start:m.start + 1] = list(m.original)
        return out


def _match_phrases(ontology: Ontology, dictionary: SemanticDictionary | None,
                   tag_slot_names: bool) -> list:
    """(phrase tokens, replacement tag, slot, value, source), longest first."""
    entries = []
    for slot in ontology.informable_slots:
        for value in ontology.informable[slot]:
            entries.append((tuple(ontology.value_tokens[(slot, value)]),
                            VALUE_TAG.format(slot=slot), slot, value, "exact"))
            if dictionary is not None:
                for phrase in dictionary.phrases(slot, value):
                    entries.append((phrase, VALUE_TAG.format(slot=slot),
                                    slot, value, "dictionary"))
    for req in ontology.requestable:
        entries.append((tuple(ontology.value_tokens[(REQUEST_SLOT, req)]),
                        VALUE_TAG.format(slot=REQUEST_SLOT), REQUEST_SLOT, req, "exact"))
        if dictionary is not None:
            for phrase in dictionary.phrases(REQUEST_SLOT, req):
                entries.append((phrase, VALUE_TAG.format(slot=REQUEST_SLOT),
                                REQUEST_SLOT, req, "dictionary"))
    if tag_slot_names:
        for slot in ontology.informable_slots:
            entries.append((tuple(ontology.slot_tokens[slot]),
                            SLOT_TAG.format(slot=slot), slot, "", "slot-name"))
    # longest phrases first; earlier ontology entries win length ties
    entries.sort(key=lambda e: -len(e[0]))
    return entries


def delexicalise(tokens, ontology: Ontology,
                 dictionary: SemanticDictionary | None = None,
                 tag_slot_names: bool = False) -> DelexResult:
    """Replace value-phrase mentions with `<value:slot>` tags.

    Scans left to right taking the longest match at each position, so
    overlapping candidates resolve deterministically. Slot-name tagging is off
    by default (plain slot words like "food" stay lexical, which is what the
    downstream templates expect); pass tag_slot_names=True to replace them
    with `<slot:slot>` tags as well.
    """
    entries = _match_phrases(ontology, dictionary, tag_slot_names)
    tokens = list(tokens)
    tagged: list = []
    matches: list = []
    i = 0
    while i < len(tokens):
        hit = None
        for phrase, tag, slot, value, source in entries:
            n = len(phrase)
            if n and tuple(tokens[i:i + n]) == phrase:
                hit = (phrase, tag, slot, value, source)
                break
        if hit is None:
            tagged.append(tokens[i])
            i += 1
        else:
            phrase, tag, slot, value, source = hit
            matches.append(DelexMatch(start=len(tagged), length=len(phrase),
                                      slot=slot, value=value, source=source,
                                      original=tuple(phrase)))
            tagged.append(tag)
            i += len(phrase)
    return DelexResult(tokens=tagged, matches=matches)


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

def featurize(delex: DelexResult, acts, candidate: CandidatePair) -> dict:
    """Sparse template features for one candidate decision.

    All n-grams (n <= 3) containing the candidate's own tag, rendered with the
    candidate tag generalized to `<value>` (other slots' tags stay as-is), plus
    indicator features for a system request on the candidate slot and a system
    confirm matching the pair (conjoined with utterance unigrams so the
    classifier can read the yes/no polarity of the reply).
    """
    own = {m.start for m in delex.matches
           if m.slot == candidate.slot and m.value == candidate.value}
    rendered = list(delex.tokens)
    for i in own:
        rendered[i] = "<value>"

    features: dict = {}

    def bump(key, amount=1.0):
        features[key] = features.get(key, 0.0) + amount

    for n in (1, 2, 3):
        for i in range(len(rendered) - n + 1):
            if any(j in own for j in range(i, i + n)):
                bump(" ".join(rendered[i:i + n]))

    request_match = any(a.kind == ACT_REQUEST and a.slot == candidate.slot
                        for a in acts)
    confirm_pair = any(a.kind == ACT_CONFIRM and a.slot == candidate.slot
                       and a.value == candidate.value for a in acts)
    confirm_slot_other = any(a.kind == ACT_CONFIRM and a.slot == candidate.slot
                             and a.value != candidate.value for a in acts)
    if request_match:
        bump("sys:request_slot")
    if confirm_pair:
        bump("sys:confirm_pair")
        for tok in set(delex.tokens):
            bump(f"sys:confirm_pair+{tok}")
    if confirm_slot_other:
        bump("sys:confirm_other")
        for tok in set(delex.tokens):
            bump(f"sys:confirm_other+{tok}")
    return features


# ---------------------------------------------------------------------------
# per-slot logistic classifier
# ---------------------------------------------------------------------------

class BaselineSlotModel:
    """Logistic regression over template features for one slot."""

    def __init__(self, slot: str, feature_index: dict, weights: np.ndarray,
                 bias: float, ontology: Ontology,
                 dictionary: SemanticDictionary | None = None):
        self.slot = slot
        self.feature_index = feature_index
        self.weights = weights
        self.bias = bias
        self.ontology = ontology
        self.dictionary = dictionary

    def _vectorize(self, features: dict) -> np.ndarray:
        x = np.zeros(len(self.feature_index))
        for name, count in features.items():
            j = self.feature_index.get(name)
            if j is not None:
                x[j] = count
        return x

    def prob(self, tokens, acts, value: str) -> float:
        delex = delexicalise(tokens, self.ontology, self.dictionary)
        feats = featurize(delex, acts, CandidatePair(self.slot, value))
        x = self._vectorize(feats)
        z = float(self.weights @ x) + self.bias
        return float(1.0 / (1.0 + math.exp(-z))) if z > -700 else 0.0

    def turn_value_probs(self, tokens, acts, table, values) -> dict:
        # `table` is unused: the baseline never touches word vectors
        delex = delexicalise(tokens, self.ontology, self.dictionary)
        out = {}
        for v in values:
            feats = featurize(delex, acts, CandidatePair(self.slot, v))
            z = float(self.weights @ self._vectorize(feats)) + self.bias
            out[v] = float(1.0 / (1.0 + math.exp(-z))) if z > -700 else 0.0
        return out

    def value_probs(self, tokens, ctx, table, values) -> dict:
        raise NotImplementedError("baseline models need the raw system acts; "
                                  "call turn_value_probs")


def train_baseline(examples, ontology: Ontology, slot: str, plan: BatchPlan,
                   dictionary: SemanticDictionary | None = None,
                   lr: float = 0.01, l2: float = 1e-4, clip=(-2.0, 2.0),
                   max_epochs: int = 60) -> BaselineSlotModel:
    """Fit the per-slot classifier with Adam on cross-entropy + L2.

    Features are indexed from the training set; unseen test features are
    ignored. Shares the Example/minibatch machinery with the neural models;
    deterministic given the batch plan seed.
    """
    featurized = {}
    index: dict = {}
    for ex in examples:
        delex = delexicalise(ex.tokens, ontology, dictionary)
        feats = featurize(delex, ex.acts, ex.candidate)
        featurized[id(ex)] = feats
        for name in feats:
            if name not in index:
                index[name] = len(index)

    w = np.zeros(len(index))
    b = np.zeros(1)
    params = {"w": w, "b": b}
    state = nm.AdamState()
    stream = minibatches(examples, plan)
    n_batches = batches_per_epoch(examples, plan)
    for _ in range(max_epochs):
        for _ in range(n_batches):
            batch = next(stream)
            gw = np.zeros_like(w)
            gb = 0.0
            for ex in batch:
                feats = featurized[id(ex)]
                z = b[0]
                for name, count in feats.items():
                    j = index.get(name)
                    if j is not None:
                        z += w[j] * count
                p = 1.0 / (1.0 + math.exp(-z)) if z > -700 else 0.0
                err = p - ex.label
                for name, count in feats.items():
                    gw[index[name]] += err * count
                gb += err
            gw /= len(batch)
            gb /= len(batch)
            gw += 2.0 * l2 * w
            nm.adam_step(params, {"w": gw, "b": np.array([gb])}, state,
                         lr=lr, clip=clip)
    return BaselineSlotModel(slot, index, w, float(b[0]), ontology, dictionary)


def predict_baseline(model: BaselineSlotModel, tokens, acts,
                     pair: CandidatePair) -> float:
    """Turn-level probability that the candidate pair was expressed."""
    if pair.slot != model.slot:
        raise ValueError(f"model for slot {model.slot!r} asked about {pair.slot!r}")
    return model.prob(tokens, acts, pair.value)


# ---------------------------------------------------------------------------
# serialization (same envelope as the neural models, family "baseline")
# ---------------------------------------------------------------------------

def save_baseline(model: BaselineSlotModel, path) -> None:
    payload = {
        "format_version": 1,
        "family": "baseline",
        "slot": model.slot,
        "features": list(model.feature_index.keys()),
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "dictionary": model.dictionary.to_json() if model.dictionary else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_baseline(path, ontology: Ontology) -> BaselineSlotModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise FormatError(f"{path}: unsupported format_version")
    if payload.get("family") != "baseline":
        raise FormatError(f"{path}: not a baseline model")
    features = payload["features"]
    weights = np.asarray(payload["weights"], dtype=np.float64)
    if weights.shape != (len(features),):
        raise FormatError(f"{path}: weight/feature count mismatch")
    dictionary = None
    if payload.get("dictionary") is not None:
        rephrasings = {}
        for slot, values in payload["dictionary"].items():
            for value, phrases in values.items():
                rephrasings[(slot, value)] = list(phrases)
        dictionary = SemanticDictionary(rephrasings)
    index = {name: j for j, name in enumerate(features)}
    return BaselineSlotModel(payload["slot"], index, weights,
                             float(payload["bias"]), ontology, dictionary)
