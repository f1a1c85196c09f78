"""Evaluation metrics and the synthetic desk-scale corpus generator.

Metrics follow the standard dialogue-state-tracking definitions: joint goal
accuracy (all informable slots simultaneously correct at a turn) and request
accuracy (predicted request set equals the gold set). Significance between two
trackers comes from a paired bootstrap over dialogues, with a Welch t-test as
a secondary readout.

The toy generator builds a three-slot restaurant domain whose vector space is
constructed, not learned: every ontology value gets an orthogonal base vector
and each of its surface synonyms sits within a small noise ball of it, while
unrelated values stay mutually orthogonal. Synonym mentions are therefore
resolvable from vector position alone, never from surface form, which is
exactly the regime the tracker is meant to exploit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .baseline import SemanticDictionary
from .domain import (
    REQUEST_SLOT, Dialogue, GoldLabel, Ontology, SystemAct, Turn,
)
from .numerics import derive_seed
from .wordvec import WordVectorTable


class AlignmentError(ValueError):
    """Tracker outputs do not line up 1:1 with the corpus turns."""


@dataclass
class Metrics:
    joint_goal: float
    request_acc: float
    per_slot: dict
    n_turns: int

    def to_json(self) -> dict:
        return {"joint_goal": self.joint_goal, "requests": self.request_acc,
                "per_slot": dict(self.per_slot), "n_turns": self.n_turns}

    def format_table(self) -> str:
        lines = [f"{'metric':<18}accuracy",
                 f"{'joint goal':<18}{self.joint_goal:.4f}",
                 f"{'requests':<18}{self.request_acc:.4f}"]
        for slot, acc in self.per_slot.items():
            lines.append(f"{'slot ' + slot:<18}{acc:.4f}")
        lines.append(f"({self.n_turns} labeled turns)")
        return "\n".join(lines)


def flatten_outputs(outputs_by_dialogue: dict, corpus: list) -> list:
    """Order tracker outputs to match the corpus turn sequence."""
    flat = []
    for d in corpus:
        if d.id not in outputs_by_dialogue:
            raise AlignmentError(f"no tracker output for dialogue {d.id!r}")
        outs = outputs_by_dialogue[d.id]
        if len(outs) != len(d.turns):
            raise AlignmentError(f"dialogue {d.id!r}: {len(outs)} outputs for "
                                 f"{len(d.turns)} turns")
        flat.extend(outs)
    return flat


def _goal_correct(output, gold: GoldLabel, slot: str) -> bool:
    return output.goals.get(slot) == gold.goals.get(slot)


def _turn_judgments(outputs: list, corpus: list):
    """Yield (dialogue index, output, gold) for every labeled turn."""
    total_turns = sum(len(d.turns) for d in corpus)
    if len(outputs) != total_turns:
        raise AlignmentError(f"{len(outputs)} outputs for {total_turns} corpus turns")
    k = 0
    for d_idx, d in enumerate(corpus):
        for turn in d.turns:
            out = outputs[k]
            k += 1
            if turn.gold is not None:
                yield d_idx, out, turn.gold


def score(outputs: list, corpus: list) -> Metrics:
    """Joint-goal / request accuracy over exactly the labeled turns."""
    slots = None
    joint = requests = n = 0
    slot_correct: dict = {}
    for _, out, gold in _turn_judgments(outputs, corpus):
        if slots is None:
            slots = list(out.goals.keys())
            slot_correct = {s: 0 for s in slots}
        n += 1
        ok = True
        for slot in slots:
            correct = _goal_correct(out, gold, slot)
            slot_correct[slot] += int(correct)
            ok = ok and correct
        joint += int(ok)
        requests += int(set(out.requests) == set(gold.requests))
    if n == 0:
        return Metrics(0.0, 0.0, {}, 0)
    per_slot = {s: c / n for s, c in slot_correct.items()}
    per_slot[REQUEST_SLOT] = requests / n
    return Metrics(joint / n, requests / n, per_slot, n)


@dataclass
class BootstrapResult:
    p_value: float
    observed_diff: float
    welch_p: float
    iterations: int


def _joint_flags_by_dialogue(outputs: list, corpus: list) -> list:
    flags: dict = {}
    for d_idx, out, gold in _turn_judgments(outputs, corpus):
        ok = all(_goal_correct(out, gold, s) for s in out.goals)
        flags.setdefault(d_idx, []).append(int(ok))
    return [np.asarray(flags[i]) for i in sorted(flags)]


def paired_bootstrap(outputs_a: list, outputs_b: list, corpus: list,
                     iterations: int = 10000, seed: int = 0) -> BootstrapResult:
    """Two-sided significance of the joint-goal difference (a minus b).

    Resamples dialogues with replacement; p-values use add-one smoothing so
    they are never exactly zero. A Welch t-test over per-dialogue accuracies
    is reported alongside.
    """
    flags_a = _joint_flags_by_dialogue(outputs_a, corpus)
    flags_b = _joint_flags_by_dialogue(outputs_b, corpus)
    if len(flags_a) != len(flags_b):
        raise AlignmentError("the two output sets cover different dialogues")
    n_dialogues = len(flags_a)
    counts = np.array([len(f) for f in flags_a])
    sums_a = np.array([f.sum() for f in flags_a], dtype=np.float64)
    sums_b = np.array([f.sum() for f in flags_b], dtype=np.float64)
    observed = (sums_a.sum() - sums_b.sum()) / counts.sum()

    rng = np.random.default_rng(derive_seed(seed, "bootstrap"))
    le = ge = 0
    for _ in range(iterations):
        idx = rng.integers(0, n_dialogues, size=n_dialogues)
        turns = counts[idx].sum()
        delta = (sums_a[idx].sum() - sums_b[idx].sum()) / turns
        le += delta <= 0
        ge += delta >= 0
    p = 2.0 * min((le + 1) / (iterations + 1), (ge + 1) / (iterations + 1))
    p = min(1.0, p)

    means_a = sums_a / counts
    means_b = sums_b / counts
    if np.allclose(means_a, means_b):
        welch_p = 1.0
    elif means_a.std() == 0.0 and means_b.std() == 0.0:
        welch_p = 0.0  # constant but different groups
    else:
        welch_p = float(stats.ttest_ind(means_a, means_b, equal_var=False).pvalue)
    return BootstrapResult(p_value=float(p), observed_diff=float(observed),
                           welch_p=welch_p, iterations=iterations)


# ---------------------------------------------------------------------------
# synthetic restaurant domain
# ---------------------------------------------------------------------------

TOY_INFORMABLE = {
    "food": {"thai": ("siamese", "bangkok"),
             "italian": ("tuscan", "sicilian"),
             "indian": ("punjabi", "bengali"),
             "chinese": ("cantonese", "szechuan")},
    "area": {"centre": ("downtown", "central"),
             "north": ("uptown", "northern"),
             "south": ("southern", "riverside")},
    "price": {"cheap": ("inexpensive", "affordable"),
              "moderate": ("midpriced", "reasonable"),
              "expensive": ("pricey", "upscale")},
}

TOY_REQUESTABLE = {"address": ("location", "whereabouts"),
                   "phone": ("telephone", "hotline"),
                   "postcode": ("zipcode", "postal")}

_FILLER_WORDS = [
    "im", "looking", "for", "a", "restaurant", "in", "the", "i", "want",
    "need", "place", "please", "find", "me", "whats", "of", "that", "yes",
    "no", "thanks", "yeah", "and", "food", "area", "price", "spot", "town",
]

SYNONYM_NOISE_NORM = 0.04   # << 0.1 of the unit value-vector norm


@dataclass
class ToyData:
    ontology: Ontology
    corpus: list
    table: WordVectorTable
    dictionary: SemanticDictionary
    vocabulary: list = field(default_factory=list)


def toy_ontology() -> Ontology:
    return Ontology({slot: list(values) for slot, values in TOY_INFORMABLE.items()},
                    list(TOY_REQUESTABLE))


def toy_vocabulary() -> list:
    """Every token the toy generator can emit, base concepts first."""
    concepts = []
    concepts.extend(TOY_INFORMABLE)                     # slot names
    for values in TOY_INFORMABLE.values():
        concepts.extend(values)
    concepts.extend(TOY_REQUESTABLE)
    for w in _FILLER_WORDS:
        if w not in concepts:
            concepts.append(w)
    synonyms = [s for values in TOY_INFORMABLE.values() for syns in values.values()
                for s in syns]
    synonyms.extend(s for syns in TOY_REQUESTABLE.values() for s in syns)
    return concepts + synonyms


def toy_vector_table(seed: int, dim: int = 48) -> WordVectorTable:
    """Constructed vector space: orthonormal base concepts, synonyms in a
    noise ball around their value (noise norm <= 0.1 of the value norm)."""
    concepts = []
    synonym_of = {}
    concepts.extend(TOY_INFORMABLE)
    for values in TOY_INFORMABLE.values():
        for v, syns in values.items():
            concepts.append(v)
            for s in syns:
                synonym_of[s] = v
    for r, syns in TOY_REQUESTABLE.items():
        concepts.append(r)
        for s in syns:
            synonym_of[s] = r
    for w in _FILLER_WORDS:
        if w not in concepts:
            concepts.append(w)
    if len(concepts) > dim:
        raise ValueError(f"need dim >= {len(concepts)} for orthogonal concepts")
    rng = np.random.default_rng(derive_seed(seed, "toy-vectors", dim))
    basis, _ = np.linalg.qr(rng.normal(size=(dim, len(concepts))))
    vectors = {tok: basis[:, j].copy() for j, tok in enumerate(concepts)}
    for syn, value in synonym_of.items():
        noise = rng.normal(size=dim)
        noise *= SYNONYM_NOISE_NORM / np.linalg.norm(noise)
        vectors[syn] = vectors[value] + noise
    source_hash = hashlib.sha256(f"toy\x1f{seed}\x1f{dim}".encode()).hexdigest()
    return WordVectorTable(vectors, dim, source_hash=source_hash)


def toy_semantic_dictionary() -> SemanticDictionary:
    rephrasings = {}
    for slot, values in TOY_INFORMABLE.items():
        for v, syns in values.items():
            rephrasings[(slot, v)] = list(syns)
    for r, syns in TOY_REQUESTABLE.items():
        rephrasings[(REQUEST_SLOT, r)] = list(syns)
    return SemanticDictionary(rephrasings)


def _surface(rng, slot_values, value, paraphrase_rate):
    syns = slot_values[value]
    if rng.random() < paraphrase_rate:
        return syns[rng.integers(0, len(syns))]
    return value


def _inform_tokens(rng, goals: dict, paraphrase_rate: float) -> list:
    parts = []
    if "price" in goals:
        parts.append(_surface(rng, TOY_INFORMABLE["price"], goals["price"],
                              paraphrase_rate))
    if "food" in goals:
        parts.append(_surface(rng, TOY_INFORMABLE["food"], goals["food"],
                              paraphrase_rate))
    head = int(rng.integers(0, 3))
    if head == 0:
        tokens = ["im", "looking", "for", "a"] + parts + ["restaurant"]
    elif head == 1:
        tokens = ["i", "want", "a"] + parts + ["place"]
    else:
        tokens = ["find", "me", "a"] + parts + ["spot"]
    if "area" in goals:
        tokens += ["in", "the",
                   _surface(rng, TOY_INFORMABLE["area"], goals["area"],
                            paraphrase_rate)]
    if head == 1:
        tokens.append("please")
    return tokens


def _request_tokens(rng, requested: list, paraphrase_rate: float) -> list:
    tokens = ["and", "whats", "the"]
    mentions = [_surface(rng, TOY_REQUESTABLE, r, paraphrase_rate)
                for r in requested]
    tokens.append(mentions[0])
    for m in mentions[1:]:
        tokens += ["and", "the", m]
    return tokens


def _word_dropout_hyps(rng, tokens: list) -> list:
    """Simulated N-best list: the transcript plus word-dropout variants."""
    def dropped(k):
        if len(tokens) <= k + 1:
            return list(tokens)
        keep = sorted(rng.choice(len(tokens), size=len(tokens) - k, replace=False))
        return [tokens[i] for i in keep]
    return [(" ".join(tokens), 0.65),
            (" ".join(dropped(1)), 0.25),
            (" ".join(dropped(2)), 0.10)]


def _make_turn(rng, acts, tokens, goals, requested, informed, asr):
    return Turn(
        system_acts=acts,
        transcript=" ".join(tokens),
        asr=_word_dropout_hyps(rng, tokens) if asr else None,
        gold=GoldLabel(goals=dict(goals), requests=tuple(requested),
                       informed=dict(informed)),
    )


def _incremental_dialogue(rng, paraphrase_rate, asr) -> list:
    slots = list(TOY_INFORMABLE)
    goal = {s: list(TOY_INFORMABLE[s])[rng.integers(0, len(TOY_INFORMABLE[s]))]
            for s in slots}
    order = [slots[i] for i in rng.permutation(len(slots))]
    n_first = int(rng.integers(1, 4))
    active = {s: goal[s] for s in order[:n_first]}
    remaining = order[n_first:]
    turns = []
    acts: list = []
    while True:
        last = not remaining
        requested = []
        if last and rng.random() < 0.7:
            n_req = int(rng.integers(1, 3))
            req_names = list(TOY_REQUESTABLE)
            requested = [req_names[i] for i in rng.choice(len(req_names),
                                                          size=n_req, replace=False)]
        tokens = _inform_tokens(rng, active, paraphrase_rate)
        if requested:
            tokens += _request_tokens(rng, requested, paraphrase_rate)
        turns.append(_make_turn(rng, acts, tokens, active, requested, active, asr))
        if last:
            break
        nxt = remaining.pop(0)
        acts = [SystemAct("request", slot=nxt)]
        active = dict(active)
        active[nxt] = goal[nxt]
    return turns


def _confirm_dialogue(rng, paraphrase_rate, asr, index: int) -> list:
    # stratified over slots and reply polarities so every slot sees matching
    # confirms with affirmative and negative replies regardless of the seed
    slots = list(TOY_INFORMABLE)
    slot = slots[index % len(slots)]
    values = list(TOY_INFORMABLE[slot])
    value = values[rng.integers(0, len(values))]
    acts = [SystemAct("confirm", slot=slot, value=value)]
    branch = ("yes", "counter", "yes", "no")[(index // len(slots)) % 4]
    if branch == "yes":
        tokens = [["yes"], ["yes", "please"], ["yeah"]][rng.integers(0, 3)]
        goals = informed = {slot: value}
    elif branch == "counter":
        other = values[rng.integers(0, len(values))]
        while other == value:
            other = values[rng.integers(0, len(values))]
        mention = _surface(rng, TOY_INFORMABLE[slot], other, paraphrase_rate)
        tokens = ["no", "i", "want", mention]
        if slot == "food":
            tokens.append("food")
        goals = informed = {slot: other}
    else:
        tokens = [["no"], ["no", "thanks"]][rng.integers(0, 2)]
        goals = informed = {}
    return [_make_turn(rng, acts, tokens, goals, [], informed, asr)]


def _single_turn_dialogue(rng, paraphrase_rate, asr) -> list:
    goal = {s: list(TOY_INFORMABLE[s])[rng.integers(0, len(TOY_INFORMABLE[s]))]
            for s in TOY_INFORMABLE}
    requested = []
    if rng.random() < 0.5:
        req_names = list(TOY_REQUESTABLE)
        requested = [req_names[rng.integers(0, len(req_names))]]
    tokens = _inform_tokens(rng, goal, paraphrase_rate)
    if requested:
        tokens += _request_tokens(rng, requested, paraphrase_rate)
    return [_make_turn(rng, [], tokens, goal, requested, goal, asr)]


def generate_toy_corpus(seed: int, n_dialogues: int, paraphrase_rate: float,
                        asr: bool = False, split: str = "train",
                        dim: int = 48, confirm_fraction: float = 0.25) -> ToyData:
    """Templated three-slot restaurant dialogues with gold labels.

    The ontology, vector table and semantic dictionary depend only on `seed`
    (and `dim`), so corpora generated for different splits or paraphrase rates
    share one world. Dialogue content is deterministic in the full argument
    tuple. Every user turn restates the user's active constraints, so the
    cumulative goal state is recoverable from per-turn estimates.
    """
    if not 0.0 <= paraphrase_rate <= 1.0:
        raise ValueError(f"paraphrase_rate must be in [0, 1], got {paraphrase_rate}")
    ontology = toy_ontology()
    table = toy_vector_table(seed, dim=dim)
    dictionary = toy_semantic_dictionary()
    rng = np.random.default_rng(
        derive_seed(seed, "toy-corpus", split, n_dialogues, paraphrase_rate, asr))
    confirm_period = max(2, round(1.0 / confirm_fraction)) if confirm_fraction > 0 else 0
    dialogues = []
    n_confirm = 0
    for k in range(n_dialogues):
        if confirm_period and k % confirm_period == 1:
            turns = _confirm_dialogue(rng, paraphrase_rate, asr, n_confirm)
            n_confirm += 1
        elif k % 7 == 5:
            turns = _single_turn_dialogue(rng, paraphrase_rate, asr)
        else:
            turns = _incremental_dialogue(rng, paraphrase_rate, asr)
        dialogues.append(Dialogue(id=f"{split}-{k:04d}", turns=turns))
    return ToyData(ontology=ontology, corpus=dialogues, table=table,
                   dictionary=dictionary, vocabulary=toy_vocabulary())


def exact_value_mentions(corpus: list, ontology: Ontology) -> set:
    """Ontology value strings (and requestable names) appearing verbatim in
    transcripts; empty at paraphrase rate 1."""
    value_tokens = set()
    for slot in ontology.informable_slots:
        value_tokens.update(ontology.informable[slot])
    value_tokens.update(ontology.requestable)
    seen = set()
    for d in corpus:
        for t in d.turns:
            seen.update(tok for tok in t.transcript.split() if tok in value_tokens)
    return seen


def metrics_report(metrics: Metrics, path=None) -> str:
    """Machine-readable JSON (optionally written to `path`) + the text table."""
    text = json.dumps(metrics.to_json(), indent=1, sort_keys=True)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return metrics.format_table()
