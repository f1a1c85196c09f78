import json

import pytest

from nbtrack.baseline import (
    BaselineSlotModel, SemanticDictionary, delexicalise, featurize,
    load_baseline, load_semantic_dictionary, predict_baseline, save_baseline,
    save_semantic_dictionary, train_baseline,
)
from nbtrack.domain import (
    CandidatePair, SystemAct, load_ontology,
)
from nbtrack.examples import BatchPlan, Example


@pytest.fixture
def ontology(tmp_path):
    path = tmp_path / "o.json"
    path.write_text(json.dumps({
        "informable": {"price": ["cheap", "expensive"],
                       "food": ["thai", "italian"],
                       "area": ["centre", "north"]},
        "requestable": ["address"]}))
    return load_ontology(path)


def test_delex_hand_case(ontology):
    result = delexicalise(["cheap", "thai", "food"], ontology)
    assert result.tokens == ["<value:price>", "<value:food>", "food"]
    assert [(m.slot, m.value) for m in result.matches] == \
        [("price", "cheap"), ("food", "thai")]


def test_delex_dictionary_rephrasing(ontology):
    d = SemanticDictionary({("area", "centre"): ["downtown"]})
    result = delexicalise(["downtown"], ontology, dictionary=d)
    assert result.tokens == ["<value:area>"]
    assert result.matches[0].source == "dictionary"
    assert result.matches[0].value == "centre"


def test_delex_no_matches_identity(ontology):
    tokens = ["hello", "there"]
    result = delexicalise(tokens, ontology)
    assert result.tokens == tokens
    assert result.matches == []


def test_delex_longest_match_first(tmp_path):
    path = tmp_path / "o2.json"
    path.write_text(json.dumps({
        "informable": {"food": ["north indian", "indian"], "area": ["north"]},
        "requestable": []}))
    onto = load_ontology(path)
    result = delexicalise(["north", "indian", "food"], onto)
    assert result.tokens == ["<value:food>", "food"]
    assert result.matches[0].value == "north indian"


def test_delex_multiword_value_positions(ontology):
    d = SemanticDictionary({("price", "cheap"): ["low cost"]})
    result = delexicalise(["a", "low", "cost", "place"], ontology, dictionary=d)
    assert result.tokens == ["a", "<value:price>", "place"]
    m = result.matches[0]
    assert (m.start, m.length, m.original) == (1, 2, ("low", "cost"))


def test_delex_restore_round_trip(ontology):
    d = SemanticDictionary({("price", "cheap"): ["low cost"]})
    tokens = ["a", "low", "cost", "thai", "place"]
    result = delexicalise(tokens, ontology, dictionary=d)
    assert result.restore() == tokens


def test_delex_requestable_mentions_tagged(ontology):
    result = delexicalise(["whats", "the", "address"], ontology)
    assert result.tokens == ["whats", "the", "<value:request>"]


def test_delex_slot_name_tagging_opt_in(ontology):
    result = delexicalise(["cheap", "food"], ontology, tag_slot_names=True)
    assert result.tokens == ["<value:price>", "<slot:food>"]


def test_featurize_candidate_ngrams(ontology):
    delex = delexicalise(["thai", "food"], ontology)
    feats = featurize(delex, (), CandidatePair("food", "thai"))
    assert feats["<value>"] == 1.0
    assert feats["<value> food"] == 1.0


def test_featurize_ignores_other_value_tags(ontology):
    delex = delexicalise(["cheap", "thai"], ontology)
    feats = featurize(delex, (), CandidatePair("food", "thai"))
    # the price tag stays slot-qualified; the food tag is generalized
    assert "<value:price> <value>" in feats
    assert all("<value:food>" not in k for k in feats)


def test_featurize_absent_candidate_only_context(ontology):
    delex = delexicalise(["nothing", "here"], ontology)
    acts = (SystemAct("request", slot="food"),)
    feats = featurize(delex, acts, CandidatePair("food", "thai"))
    assert feats == {"sys:request_slot": 1.0}


def test_featurize_confirm_match_indicator(ontology):
    delex = delexicalise(["yes"], ontology)
    acts = (SystemAct("confirm", slot="food", value="thai"),)
    feats = featurize(delex, acts, CandidatePair("food", "thai"))
    assert feats["sys:confirm_pair"] == 1.0
    assert feats["sys:confirm_pair+yes"] == 1.0


def test_featurize_confirm_other_value(ontology):
    delex = delexicalise(["no"], ontology)
    acts = (SystemAct("confirm", slot="food", value="italian"),)
    feats = featurize(delex, acts, CandidatePair("food", "thai"))
    assert "sys:confirm_pair" not in feats
    assert feats["sys:confirm_other"] == 1.0


def test_featurize_invariant_to_value_identity(ontology):
    # the delexicalisation property: identical tagging => identical features
    f1 = featurize(delexicalise(["want", "thai", "food"], ontology), (),
                   CandidatePair("food", "thai"))
    f2 = featurize(delexicalise(["want", "italian", "food"], ontology), (),
                   CandidatePair("food", "italian"))
    assert f1 == f2


def make_examples(ontology, n=40, mention="cheap", slot="price",
                  values=("cheap", "expensive")):
    examples = []
    for i in range(n):
        expressed = values[i % 2]
        tokens = ("i", "want", expressed, "food")
        for v in values:
            examples.append(Example(tokens, (), CandidatePair(slot, v),
                                    int(v == expressed)))
    return examples


def test_train_baseline_separates_exact_mentions(ontology):
    examples = make_examples(ontology)
    model = train_baseline(examples, ontology, "price",
                           BatchPlan(16, 0.5, seed=0))
    p_pos = model.prob(("i", "want", "cheap", "food"), (), "cheap")
    p_neg = model.prob(("i", "want", "cheap", "food"), (), "expensive")
    assert p_pos > 0.8
    assert p_neg < 0.2


def test_baseline_fails_on_unseen_paraphrase_without_dictionary(ontology):
    examples = make_examples(ontology)
    model = train_baseline(examples, ontology, "price",
                           BatchPlan(16, 0.5, seed=0))
    p = model.prob(("i", "want", "inexpensive", "food"), (), "cheap")
    assert p < 0.5


def test_baseline_recovers_with_dictionary(ontology):
    d = SemanticDictionary({("price", "cheap"): ["inexpensive"]})
    examples = make_examples(ontology)
    model = train_baseline(examples, ontology, "price",
                           BatchPlan(16, 0.5, seed=0), dictionary=d)
    p = model.prob(("i", "want", "inexpensive", "food"), (), "cheap")
    assert p > 0.8


def test_predict_baseline_guards_slot(ontology):
    model = BaselineSlotModel("price", {}, weights=__import__("numpy").zeros(0),
                              bias=0.0, ontology=ontology)
    with pytest.raises(ValueError, match="price"):
        predict_baseline(model, ("x",), (), CandidatePair("food", "thai"))


def test_turn_value_probs_covers_values(ontology):
    examples = make_examples(ontology)
    model = train_baseline(examples, ontology, "price",
                           BatchPlan(16, 0.5, seed=0))
    probs = model.turn_value_probs(("cheap",), (), None,
                                   ontology.values("price"))
    assert set(probs) == {"cheap", "expensive"}


def test_dictionary_json_round_trip(tmp_path, ontology):
    d = SemanticDictionary({("price", "cheap"): ["inexpensive", "low cost"],
                            ("area", "centre"): ["downtown"]})
    path = tmp_path / "dict.json"
    save_semantic_dictionary(d, path)
    again = load_semantic_dictionary(path)
    assert again.to_json() == d.to_json()
    assert again.phrases("price", "cheap") == [("inexpensive",), ("low", "cost")]


def test_dictionary_rejects_empty_phrase():
    with pytest.raises(Exception, match="empty"):
        SemanticDictionary({("price", "cheap"): [""]})


def test_baseline_model_round_trip(tmp_path, ontology):
    d = SemanticDictionary({("price", "cheap"): ["inexpensive"]})
    examples = make_examples(ontology)
    model = train_baseline(examples, ontology, "price",
                           BatchPlan(16, 0.5, seed=0), dictionary=d)
    path = tmp_path / "m.json"
    save_baseline(model, path)
    again = load_baseline(path, ontology)
    probe = ("i", "want", "inexpensive", "food")
    assert again.prob(probe, (), "cheap") == model.prob(probe, (), "cheap")
