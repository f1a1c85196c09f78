import json

import pytest

from nbtrack.domain import (
    REQUEST_SLOT, CandidatePair, FormatError, Ontology, SystemAct,
    candidate_pairs, corpus_stats, dialogues_to_json, load_corpus,
    load_ontology, save_corpus, save_ontology,
)


@pytest.fixture
def ontology_path(tmp_path):
    path = tmp_path / "ontology.json"
    path.write_text(json.dumps({
        "informable": {"food": ["thai", "italian"], "area": ["centre"]},
        "requestable": ["address"],
    }))
    return path


def write_corpus(tmp_path, dialogues, name="corpus.json"):
    path = tmp_path / name
    path.write_text(json.dumps(dialogues))
    return path


def test_load_minimal_ontology(tmp_path):
    path = tmp_path / "o.json"
    path.write_text(json.dumps({"informable": {"food": ["thai", "italian"]},
                                "requestable": ["address"]}))
    onto = load_ontology(path)
    assert onto.informable_slots == ["food"]
    assert onto.requestable == ["address"]


def test_duplicate_value_rejected(tmp_path):
    path = tmp_path / "o.json"
    path.write_text(json.dumps({"informable": {"food": ["thai", "thai"]},
                                "requestable": []}))
    with pytest.raises(FormatError, match="duplicate value"):
        load_ontology(path)


def test_three_slot_restaurant_ontology(tmp_path):
    path = tmp_path / "o.json"
    path.write_text(json.dumps({
        "informable": {"food": ["thai", "italian", "indian"],
                       "area": ["centre", "north", "south"],
                       "price range": ["cheap", "moderate", "expensive"]},
        "requestable": ["address", "phone", "postcode"]}))
    onto = load_ontology(path)
    assert len(onto.informable_slots) == 3
    assert onto.slot_tokens["price range"] == ["price", "range"]


def test_malformed_json_positions(tmp_path):
    path = tmp_path / "o.json"
    path.write_text('{"informable": {')
    with pytest.raises(FormatError, match="line 1"):
        load_ontology(path)


def test_reserved_request_slot_name(tmp_path):
    path = tmp_path / "o.json"
    path.write_text(json.dumps({"informable": {"request": ["x"]}, "requestable": []}))
    with pytest.raises(FormatError, match="reserved"):
        load_ontology(path)


def test_empty_value_list_rejected(tmp_path):
    path = tmp_path / "o.json"
    path.write_text(json.dumps({"informable": {"food": []}, "requestable": []}))
    with pytest.raises(FormatError, match="empty value list"):
        load_ontology(path)


def test_system_act_invariants():
    SystemAct("request", slot="food")
    SystemAct("confirm", slot="food", value="thai")
    SystemAct("other")
    with pytest.raises(FormatError):
        SystemAct("request")
    with pytest.raises(FormatError):
        SystemAct("confirm", slot="food")
    with pytest.raises(FormatError):
        SystemAct("other", slot="food")
    with pytest.raises(FormatError):
        SystemAct("greet")


def test_candidate_pairs_fixed_order(ontology_path):
    onto = load_ontology(ontology_path)
    pairs = candidate_pairs(onto)
    assert pairs == [CandidatePair("food", "thai"), CandidatePair("food", "italian"),
                     CandidatePair("area", "centre"), CandidatePair(REQUEST_SLOT, "address")]
    assert candidate_pairs(onto) == pairs  # deterministic


def test_candidate_pairs_no_requestables(tmp_path):
    path = tmp_path / "o.json"
    path.write_text(json.dumps({"informable": {"food": ["thai"]}, "requestable": []}))
    pairs = candidate_pairs(load_ontology(path))
    assert pairs == [CandidatePair("food", "thai")]


def test_minimal_corpus_loads(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [
        {"id": "d1", "turns": [{"system_acts": [], "transcript": "hello there"}]}])
    dialogues = load_corpus(corpus_path, onto)
    assert len(dialogues) == 1
    assert dialogues[0].turns[0].asr is None
    assert dialogues[0].turns[0].gold is None


def test_unknown_gold_value_names_location(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [
        {"id": "d7", "turns": [
            {"system_acts": [], "transcript": "x",
             "labels": {"goals": {"food": "french"}, "requests": []}}]}])
    with pytest.raises(FormatError, match="d7.*turn 0"):
        load_corpus(corpus_path, onto)


def test_asr_hypotheses_stored_in_order(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [
        {"id": "d1", "turns": [
            {"system_acts": [], "transcript": "thai food",
             "asr": [{"hyp": "thai food", "score": 0.6},
                     {"hyp": "tie food", "score": 0.4}]}]}])
    turn = load_corpus(corpus_path, onto)[0].turns[0]
    assert turn.asr == [("thai food", 0.6), ("tie food", 0.4)]


def test_asr_posterior_out_of_range(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [
        {"id": "d1", "turns": [
            {"system_acts": [], "transcript": "x",
             "asr": [{"hyp": "x", "score": 1.4}]}]}])
    with pytest.raises(FormatError, match=r"outside \[0, 1\]"):
        load_corpus(corpus_path, onto)


def test_asr_posteriors_must_not_exceed_one(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [
        {"id": "d1", "turns": [
            {"system_acts": [], "transcript": "x",
             "asr": [{"hyp": "a", "score": 0.7}, {"hyp": "b", "score": 0.7}]}]}])
    with pytest.raises(FormatError, match="sum"):
        load_corpus(corpus_path, onto)


def test_unknown_confirm_value_rejected(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [
        {"id": "d1", "turns": [
            {"system_acts": [{"act": "confirm", "slot": "food", "value": "sushi"}],
             "transcript": "x"}]}])
    with pytest.raises(FormatError, match="sushi"):
        load_corpus(corpus_path, onto)


def test_duplicate_dialogue_ids_rejected(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [
        {"id": "d1", "turns": [{"system_acts": [], "transcript": "a"}]},
        {"id": "d1", "turns": [{"system_acts": [], "transcript": "b"}]}])
    with pytest.raises(FormatError, match="duplicate dialogue id"):
        load_corpus(corpus_path, onto)


def test_empty_dialogue_rejected(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [{"id": "d1", "turns": []}])
    with pytest.raises(FormatError, match="no turns"):
        load_corpus(corpus_path, onto)


def test_corpus_round_trip(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [
        {"id": "d1", "turns": [
            {"system_acts": [{"act": "request", "slot": "food"}],
             "transcript": "thai please",
             "asr": [{"hyp": "thai please", "score": 0.9}],
             "labels": {"goals": {"food": "thai"}, "requests": ["address"],
                        "informed": {"food": "thai"}}},
            {"system_acts": [{"act": "other"}], "transcript": "thanks"}]}])
    first = load_corpus(corpus_path, onto)
    out_path = tmp_path / "again.json"
    save_corpus(first, out_path)
    second = load_corpus(out_path, onto)
    assert dialogues_to_json(first) == dialogues_to_json(second)


def test_ontology_round_trip(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    out = tmp_path / "o2.json"
    save_ontology(onto, out)
    again = load_ontology(out)
    assert again.to_json() == onto.to_json()
    assert candidate_pairs(again) == candidate_pairs(onto)


def test_corpus_stats(tmp_path, ontology_path):
    onto = load_ontology(ontology_path)
    corpus_path = write_corpus(tmp_path, [
        {"id": "d1", "turns": [
            {"system_acts": [], "transcript": "a",
             "labels": {"goals": {}, "requests": []}},
            {"system_acts": [], "transcript": "b"}]}])
    stats = corpus_stats(load_corpus(corpus_path, onto))
    assert stats == {"dialogues": 1, "turns": 2, "labeled_turns": 1,
                     "turns_with_asr": 0}


def test_ontology_validation_applies_normalization():
    with pytest.raises(FormatError, match="duplicate value"):
        Ontology({"food": ["Thai", "thai"]}, [])
