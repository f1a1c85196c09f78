"""Ontology and dialogue data model with JSON ingestion/validation.

Ontology file:  {"informable": {slot: [value, ...], ...}, "requestable": [slot, ...]}
Corpus file:    [{"id": str, "turns": [turn, ...]}, ...] where a turn is
    {"system_acts": [{"act": "request", "slot": s} | {"act": "confirm",
        "slot": s, "value": v} | {"act": "other"}],
     "transcript": str,
     "asr": [{"hyp": str, "score": float}, ...]?,           # optional N-best
     "labels": {"goals": {slot: value, ...},               # cumulative state
                "requests": [slot, ...],
                "informed": {slot: value, ...}?}?}         # optional per-turn

Original surface strings are retained for I/O; the shared tokenizer provides
normalized token lists for embedding. Requests are folded into one synthetic
slot named "request" whose values are the requestable slot names, so the same
per-slot machinery covers request detection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .wordvec import tokenize

REQUEST_SLOT = "request"

ACT_REQUEST = "request"
ACT_CONFIRM = "confirm"
ACT_OTHER = "other"

_ASR_SUM_TOLERANCE = 1e-6


class FormatError(ValueError):
    """Malformed or invalid ontology/corpus input, with location context."""


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None


@dataclass(frozen=True)
class SystemAct:
    kind: str
    slot: str | None = None
    value: str | None = None

    def __post_init__(self):
        if self.kind == ACT_REQUEST:
            if self.slot is None or self.value is not None:
                raise FormatError(f"request act needs a slot and no value: {self}")
        elif self.kind == ACT_CONFIRM:
            if self.slot is None or self.value is None:
                raise FormatError(f"confirm act needs slot and value: {self}")
        elif self.kind == ACT_OTHER:
            if self.slot is not None or self.value is not None:
                raise FormatError(f"'other' act carries no arguments: {self}")
        else:
            raise FormatError(f"unknown system act kind {self.kind!r}")


@dataclass(frozen=True)
class GoldLabel:
    """Turn annotation: cumulative goal state, this turn's requests, and an
    optional map of slot-value pairs explicitly informed this turn."""

    goals: dict
    requests: tuple
    informed: dict | None = None


@dataclass
class Turn:
    system_acts: list
    transcript: str
    asr: list | None = None          # [(hypothesis, posterior), ...]
    gold: GoldLabel | None = None


@dataclass
class Dialogue:
    id: str
    turns: list


@dataclass(frozen=True, order=True)
class CandidatePair:
    slot: str
    value: str


class Ontology:
    """Informable slots with ordered value lists plus requestable slot names."""

    def __init__(self, informable: dict, requestable: list):
        self.informable = {str(s): [str(v) for v in vals] for s, vals in informable.items()}
        self.requestable = [str(r) for r in requestable]
        self._validate()
        self.slot_tokens = {s: tokenize(s) for s in self.informable}
        self.slot_tokens[REQUEST_SLOT] = tokenize(REQUEST_SLOT)
        self.value_tokens = {}
        for slot, values in self.informable.items():
            for v in values:
                self.value_tokens[(slot, v)] = tokenize(v)
        for r in self.requestable:
            self.value_tokens[(REQUEST_SLOT, r)] = tokenize(r)

    def _validate(self):
        seen_slots = set()
        for slot, values in self.informable.items():
            norm = " ".join(tokenize(slot))
            if not norm:
                raise FormatError(f"slot name {slot!r} is empty after normalization")
            if norm in seen_slots:
                raise FormatError(f"duplicate slot name {slot!r}")
            seen_slots.add(norm)
            if not values:
                raise FormatError(f"slot {slot!r} has an empty value list")
            seen_values = set()
            for v in values:
                vnorm = " ".join(tokenize(v))
                if not vnorm:
                    raise FormatError(f"value {v!r} of slot {slot!r} is empty after normalization")
                if vnorm in seen_values:
                    raise FormatError(f"duplicate value {v!r} in slot {slot!r}")
                seen_values.add(vnorm)
        if REQUEST_SLOT in seen_slots:
            raise FormatError(f"slot name {REQUEST_SLOT!r} is reserved")
        seen_req = set()
        for r in self.requestable:
            rnorm = " ".join(tokenize(r))
            if not rnorm:
                raise FormatError(f"requestable name {r!r} is empty after normalization")
            if rnorm in seen_req:
                raise FormatError(f"duplicate requestable slot {r!r}")
            seen_req.add(rnorm)

    @property
    def informable_slots(self) -> list:
        return list(self.informable.keys())

    def values(self, slot: str) -> list:
        if slot == REQUEST_SLOT:
            return list(self.requestable)
        return list(self.informable[slot])

    def tracked_slots(self) -> list:
        """Informable slots plus the synthetic request slot, in order."""
        return self.informable_slots + [REQUEST_SLOT]

    def to_json(self) -> dict:
        return {"informable": {s: list(v) for s, v in self.informable.items()},
                "requestable": list(self.requestable)}


def load_ontology(path) -> Ontology:
    data = _load_json(path)
    if not isinstance(data, dict) or "informable" not in data:
        raise FormatError(f"{path}: ontology must be an object with an 'informable' map")
    informable = data["informable"]
    requestable = data.get("requestable", [])
    if not isinstance(informable, dict) or not isinstance(requestable, list):
        raise FormatError(f"{path}: 'informable' must be a map and 'requestable' a list")
    try:
        return Ontology(informable, requestable)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_ontology(ontology: Ontology, path) -> None:
    # key order is meaningful: it fixes the candidate iteration order
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ontology.to_json(), fh, indent=2)
        fh.write("\n")


def candidate_pairs(ontology: Ontology) -> list:
    """All decisions the tracker iterates over, in a deterministic order:
    informable slots in file order (values in file order), then the synthetic
    request slot over the requestable names."""
    pairs = []
    for slot, values in ontology.informable.items():
        pairs.extend(CandidatePair(slot, v) for v in values)
    pairs.extend(CandidatePair(REQUEST_SLOT, r) for r in ontology.requestable)
    return pairs


# ---------------------------------------------------------------------------
# corpus ingestion
# ---------------------------------------------------------------------------

def _parse_act(raw, where: str) -> SystemAct:
    if not isinstance(raw, dict) or "act" not in raw:
        raise FormatError(f"{where}: system act must be an object with an 'act' field")
    kind = raw["act"]
    try:
        return SystemAct(kind, raw.get("slot"), raw.get("value"))
    except FormatError as exc:
        raise FormatError(f"{where}: {exc}") from None


def _check_act(act: SystemAct, ontology: Ontology, where: str) -> None:
    if act.kind == ACT_REQUEST and act.slot not in ontology.informable:
        raise FormatError(f"{where}: request act names unknown slot {act.slot!r}")
    if act.kind == ACT_CONFIRM:
        if act.slot not in ontology.informable:
            raise FormatError(f"{where}: confirm act names unknown slot {act.slot!r}")
        if act.value not in ontology.informable[act.slot]:
            raise FormatError(f"{where}: confirm act names unknown value "
                              f"{act.value!r} for slot {act.slot!r}")


def _check_goal_map(goals: dict, ontology: Ontology, where: str, what: str) -> dict:
    out = {}
    for slot, value in goals.items():
        if slot not in ontology.informable:
            raise FormatError(f"{where}: {what} names unknown slot {slot!r}")
        if value not in ontology.informable[slot]:
            raise FormatError(f"{where}: {what} value {value!r} not in ontology "
                              f"for slot {slot!r}")
        out[slot] = value
    return out


def _parse_turn(raw, ontology: Ontology, where: str) -> Turn:
    if "transcript" not in raw:
        raise FormatError(f"{where}: turn lacks a transcript")
    acts = [_parse_act(a, where) for a in raw.get("system_acts", [])]
    for act in acts:
        _check_act(act, ontology, where)

    asr = None
    if raw.get("asr") is not None:
        asr = []
        total = 0.0
        for k, h in enumerate(raw["asr"]):
            if "hyp" not in h or "score" not in h:
                raise FormatError(f"{where}: asr entry {k} needs 'hyp' and 'score'")
            score = float(h["score"])
            if score < 0.0 or score > 1.0:
                raise FormatError(f"{where}: asr posterior {score} outside [0, 1]")
            total += score
            asr.append((str(h["hyp"]), score))
        if total > 1.0 + _ASR_SUM_TOLERANCE:
            raise FormatError(f"{where}: asr posteriors sum to {total:.6f} > 1")

    gold = None
    if raw.get("labels") is not None:
        labels = raw["labels"]
        goals = _check_goal_map(labels.get("goals", {}), ontology, where, "gold goal")
        requests = []
        for r in labels.get("requests", []):
            if r not in ontology.requestable:
                raise FormatError(f"{where}: gold request {r!r} not requestable")
            requests.append(r)
        informed = None
        if labels.get("informed") is not None:
            informed = _check_goal_map(labels["informed"], ontology, where, "informed pair")
        gold = GoldLabel(goals=goals, requests=tuple(requests), informed=informed)

    return Turn(system_acts=acts, transcript=str(raw["transcript"]), asr=asr, gold=gold)


def load_corpus(path, ontology: Ontology) -> list:
    """Parse and validate a corpus file against the ontology.

    Errors name the offending dialogue id and turn index.
    """
    data = _load_json(path)
    if not isinstance(data, list):
        raise FormatError(f"{path}: corpus must be a list of dialogues")
    dialogues = []
    seen_ids = set()
    for d_idx, raw in enumerate(data):
        did = str(raw.get("id", d_idx))
        if did in seen_ids:
            raise FormatError(f"{path}: duplicate dialogue id {did!r}")
        seen_ids.add(did)
        raw_turns = raw.get("turns", [])
        if not raw_turns:
            raise FormatError(f"{path}: dialogue {did!r} has no turns")
        turns = [_parse_turn(t, ontology, f"{path}: dialogue {did!r} turn {t_idx}")
                 for t_idx, t in enumerate(raw_turns)]
        dialogues.append(Dialogue(id=did, turns=turns))
    return dialogues


def corpus_stats(dialogues: list) -> dict:
    """Per-corpus statistics: dialogue/turn counts and label coverage."""
    n_turns = sum(len(d.turns) for d in dialogues)
    n_labeled = sum(1 for d in dialogues for t in d.turns if t.gold is not None)
    n_asr = sum(1 for d in dialogues for t in d.turns if t.asr)
    return {"dialogues": len(dialogues), "turns": n_turns,
            "labeled_turns": n_labeled, "turns_with_asr": n_asr}


def _act_to_json(act: SystemAct) -> dict:
    if act.kind == ACT_REQUEST:
        return {"act": ACT_REQUEST, "slot": act.slot}
    if act.kind == ACT_CONFIRM:
        return {"act": ACT_CONFIRM, "slot": act.slot, "value": act.value}
    return {"act": ACT_OTHER}


def dialogues_to_json(dialogues: list) -> list:
    out = []
    for d in dialogues:
        turns = []
        for t in d.turns:
            turn = {"system_acts": [_act_to_json(a) for a in t.system_acts],
                    "transcript": t.transcript}
            if t.asr is not None:
                turn["asr"] = [{"hyp": h, "score": s} for h, s in t.asr]
            if t.gold is not None:
                labels = {"goals": dict(t.gold.goals),
                          "requests": list(t.gold.requests)}
                if t.gold.informed is not None:
                    labels["informed"] = dict(t.gold.informed)
                turn["labels"] = labels
            turns.append(turn)
        out.append({"id": d.id, "turns": turns})
    return out


def save_corpus(dialogues: list, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dialogues_to_json(dialogues), fh, indent=1)
        fh.write("\n")
