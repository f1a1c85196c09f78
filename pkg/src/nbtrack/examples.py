"""Turn labeled dialogue turns into binary training examples and serve
class-balanced minibatches.

For a given slot, every labeled turn produces one example per ontology value.
An example is positive when the turn expressed that candidate pair: either the
corpus carries explicit per-turn `informed` annotations, or (for cumulative
goal labels) the goal for the slot changed at this turn to that value.
Requests are turn-level by nature, so the synthetic request slot labels
positives directly from the gold request set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .domain import REQUEST_SLOT, CandidatePair, Ontology
from .numerics import derive_seed
from .wordvec import tokenize


class NoPositivesError(ValueError):
    """A slot yielded no positive examples; balanced batching is impossible."""


@dataclass(frozen=True)
class Example:
    tokens: tuple          # normalized utterance tokens
    acts: tuple            # the turn's SystemActs (context sources)
    candidate: CandidatePair
    label: int


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 256
    positive_fraction: float = 0.125
    seed: int = 0

    def __post_init__(self):
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not 0.0 < self.positive_fraction <= 1.0:
            raise ValueError(f"positive_fraction must be in (0, 1], got {self.positive_fraction}")

    @property
    def positives_per_batch(self) -> int:
        return math.ceil(self.positive_fraction * self.batch_size)


def _expressed_value(turn, prev_goal, slot):
    """The value of `slot` expressed at this turn, or None."""
    gold = turn.gold
    if gold.informed is not None:
        return gold.informed.get(slot)
    current = gold.goals.get(slot)
    if current is not None and current != prev_goal:
        return current
    return None


def generate_examples(corpus: list, ontology: Ontology, slot: str) -> list:
    """One example per (labeled turn, value of `slot`), in corpus order."""
    if slot != REQUEST_SLOT and slot not in ontology.informable:
        raise KeyError(f"unknown slot {slot!r}")
    values = ontology.values(slot)
    out = []
    for dialogue in corpus:
        prev_goal = None
        for turn in dialogue.turns:
            if turn.gold is None:
                continue
            tokens = tuple(tokenize(turn.transcript))
            acts = tuple(turn.system_acts)
            if slot == REQUEST_SLOT:
                requested = set(turn.gold.requests)
                for v in values:
                    out.append(Example(tokens, acts, CandidatePair(slot, v),
                                       int(v in requested)))
            else:
                expressed = _expressed_value(turn, prev_goal, slot)
                for v in values:
                    out.append(Example(tokens, acts, CandidatePair(slot, v),
                                       int(v == expressed)))
                prev_goal = turn.gold.goals.get(slot)
    return out


def split_by_label(examples: list) -> tuple:
    positives = [e for e in examples if e.label == 1]
    negatives = [e for e in examples if e.label == 0]
    return positives, negatives


def batches_per_epoch(examples: list, plan: BatchPlan) -> int:
    """Number of batches one pass over the negatives produces."""
    _, negatives = split_by_label(examples)
    per_batch = plan.batch_size - plan.positives_per_batch
    if per_batch <= 0:
        return 1
    return max(1, len(negatives) // per_batch)


def minibatches(examples: list, plan: BatchPlan) -> Iterator[list]:
    """Endless stream of batches with a fixed positive count.

    Each batch holds exactly ceil(positive_fraction * batch_size) positives
    (sampled with replacement when positives are scarce) and batch_size minus
    that many negatives. Negatives are consumed without replacement within an
    epoch; a trailing chunk too small to fill a batch is dropped so every
    batch keeps the exact positive count. Deterministic under the plan seed.
    """
    positives, negatives = split_by_label(examples)
    if not positives:
        slot = examples[0].candidate.slot if examples else "<no examples>"
        raise NoPositivesError(f"no positive examples for slot {slot!r}; "
                               "check the label derivation and the corpus")
    if not negatives:
        slot = examples[0].candidate.slot
        raise ValueError(f"no negative examples for slot {slot!r}")
    n_pos = plan.positives_per_batch
    n_neg = plan.batch_size - n_pos
    rng = np.random.default_rng(derive_seed(plan.seed, "minibatches"))
    replace = len(positives) < n_pos
    while True:
        order = rng.permutation(len(negatives))
        if n_neg == 0:
            chunks = [np.array([], dtype=int)]
        elif len(negatives) < n_neg:
            chunks = [order]
        else:
            chunks = [order[i:i + n_neg] for i in range(0, len(order) - n_neg + 1, n_neg)]
        for chunk in chunks:
            pos_idx = rng.choice(len(positives), size=n_pos, replace=replace)
            batch = [positives[i] for i in pos_idx]
            batch.extend(negatives[i] for i in chunk)
            yield batch
