"""Rule-based cross-turn belief update.

Per turn, the per-slot models produce independent turn-level probabilities for
every candidate pair; hypotheses from an ASR N-best list are combined by
posterior-weighted summation. The cumulative belief is the convex combination

    P_t = lam * turn_level + (1 - lam) * P_{t-1}        (P_0 = 0)

applied per pair. Goals are read off as the highest-probability value among
those at or above 0.5 (ties break by ontology order); requests need no
cross-turn tracking and threshold the current turn's estimates directly.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

from .domain import REQUEST_SLOT, CandidatePair, Ontology
from .wordvec import WordVectorTable, tokenize

GOAL_THRESHOLD = 0.5
DEFAULT_LAMBDA = 0.55

_POSTERIOR_TOLERANCE = 1e-6


class PosteriorError(ValueError):
    """ASR posteriors out of range or summing past 1."""


@dataclass
class BeliefState:
    """Independent per-pair probabilities for each informable slot.

    Not a normalized distribution over values: the update rule operates on
    each pair separately.
    """

    probs: dict           # slot -> {value: probability}
    turn_index: int = -1  # -1 before the first update

    def copy(self) -> "BeliefState":
        return BeliefState({s: dict(v) for s, v in self.probs.items()}, self.turn_index)


@dataclass
class TurnOutput:
    goals: dict           # slot -> value or None
    requests: list        # sorted requested slot names
    belief: BeliefState


def initial_belief(ontology: Ontology) -> BeliefState:
    return BeliefState({slot: {v: 0.0 for v in ontology.informable[slot]}
                        for slot in ontology.informable_slots})


def combine_asr(per_hyp: list) -> dict:
    """Posterior-weighted sum of per-hypothesis probability maps.

    `per_hyp` is a list of (probability map keyed by CandidatePair, posterior).
    Pairs absent from a hypothesis map contribute zero for that hypothesis.
    Posterior mass missing from the sum contributes nothing.
    """
    total_mass = 0.0
    for _, posterior in per_hyp:
        if posterior < 0.0:
            raise PosteriorError(f"negative ASR posterior {posterior}")
        total_mass += posterior
    if total_mass > 1.0 + _POSTERIOR_TOLERANCE:
        raise PosteriorError(f"ASR posteriors sum to {total_mass:.6f} > 1")
    combined: dict = {}
    for probs, posterior in per_hyp:
        for pair, p in probs.items():
            combined[pair] = combined.get(pair, 0.0) + posterior * p
    return combined


def update_belief(prev: BeliefState, turn_level: dict, lam: float) -> BeliefState:
    """Convex per-pair combination of the turn estimate with the prior state."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    updated = {}
    for slot, values in prev.probs.items():
        updated[slot] = {
            v: lam * turn_level.get(CandidatePair(slot, v), 0.0) + (1.0 - lam) * p
            for v, p in values.items()}
    return BeliefState(updated, prev.turn_index + 1)


def extract_output(belief: BeliefState, turn_level_requests: dict) -> TurnOutput:
    """Detected values are those at/above 0.5; the goal is their argmax.

    Ties break to the earliest value in ontology order (the insertion order of
    the belief maps). Requests come from the current turn only.
    """
    goals = {}
    for slot, values in belief.probs.items():
        best_value, best_p = None, -1.0
        for v, p in values.items():
            if p >= GOAL_THRESHOLD and p > best_p:
                best_value, best_p = v, p
        goals[slot] = best_value
    requests = sorted(q for q, p in turn_level_requests.items() if p >= GOAL_THRESHOLD)
    return TurnOutput(goals=goals, requests=requests, belief=belief.copy())


def _turn_probs(models: dict, tokens, acts, ontology: Ontology,
                table: WordVectorTable) -> dict:
    """Turn-level probabilities for every candidate pair, via each slot model.

    Models expose turn_value_probs(tokens, acts, table, values); the raw acts
    go through so non-neural models that never embed them work too.
    """
    out = {}
    for slot in ontology.tracked_slots():
        if slot not in models:
            raise KeyError(f"no trained model for slot {slot!r}")
        probs = models[slot].turn_value_probs(tokens, acts, table,
                                              ontology.values(slot))
        for value, p in probs.items():
            out[CandidatePair(slot, value)] = p
    return out


def _utterance_tokens(text: str) -> tuple:
    tokens = tuple(tokenize(text))
    # an utterance that normalizes to nothing still needs a defined encoding;
    # a single out-of-vocabulary placeholder embeds to the zero vector
    return tokens if tokens else ("",)


def track_dialogue(models: dict, dialogue, ontology: Ontology, table: WordVectorTable,
                   lam: float = DEFAULT_LAMBDA, use_asr: bool = False,
                   renormalize_asr: bool = False) -> list:
    """Run the per-turn recursion over one dialogue; one TurnOutput per turn.

    With use_asr, each hypothesis is decoded separately and combined by its
    posterior; turns lacking an N-best list fall back to the transcript (a
    single warning reports how many).
    """
    belief = initial_belief(ontology)
    outputs = []
    fallbacks = 0
    for turn in dialogue.turns:
        if use_asr and turn.asr:
            hyps = list(turn.asr)
            if renormalize_asr:
                mass = sum(p for _, p in hyps)
                if mass > 0:
                    hyps = [(h, p / mass) for h, p in hyps]
        else:
            if use_asr:
                fallbacks += 1
            hyps = [(turn.transcript, 1.0)]
        per_hyp = [(_turn_probs(models, _utterance_tokens(text), turn.system_acts,
                                ontology, table), posterior)
                   for text, posterior in hyps]
        turn_level = combine_asr(per_hyp)
        belief = update_belief(belief, turn_level, lam)
        request_probs = {q: turn_level.get(CandidatePair(REQUEST_SLOT, q), 0.0)
                         for q in ontology.requestable}
        outputs.append(extract_output(belief, request_probs))
    if fallbacks:
        warnings.warn(f"dialogue {dialogue.id!r}: {fallbacks} turn(s) lacked ASR "
                      "hypotheses; used the transcript")
    return outputs


def track_corpus(models: dict, dialogues: list, ontology: Ontology,
                 table: WordVectorTable, lam: float = DEFAULT_LAMBDA,
                 use_asr: bool = False, renormalize_asr: bool = False) -> dict:
    """Track every dialogue; returns {dialogue id: [TurnOutput, ...]}."""
    return {d.id: track_dialogue(models, d, ontology, table, lam=lam,
                                 use_asr=use_asr, renormalize_asr=renormalize_asr)
            for d in dialogues}


# ---------------------------------------------------------------------------
# output file: one JSON object per line, one line per turn
# ---------------------------------------------------------------------------

def write_outputs(outputs_by_dialogue: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for did, outputs in outputs_by_dialogue.items():
            for t, out in enumerate(outputs):
                record = {
                    "dialogue_id": did,
                    "turn": t,
                    "goals": {s: v for s, v in out.goals.items()},
                    "requests": list(out.requests),
                    "belief": {s: dict(vals) for s, vals in out.belief.probs.items()},
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_outputs(path) -> dict:
    """Parse a tracker output file back into {dialogue id: [TurnOutput, ...]}."""
    by_dialogue: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            belief = BeliefState(rec["belief"], rec["turn"])
            out = TurnOutput(goals=rec["goals"], requests=list(rec["requests"]),
                             belief=belief)
            by_dialogue.setdefault(rec["dialogue_id"], []).append(out)
    return by_dialogue
