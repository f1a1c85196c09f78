#!/usr/bin/env python3
"""Exact-match delexicalisation vs reasoning over vector positions.

Shows the tagging and template features the baseline lives on, then compares
three trackers on a paraphrase-only test set: the baseline without a
dictionary, the baseline with one, and the convolutional model.
"""

from nbtrack.baseline import delexicalise, featurize, train_baseline
from nbtrack.domain import CandidatePair
from nbtrack.eval import (
    flatten_outputs, generate_toy_corpus, score, toy_semantic_dictionary,
)
from nbtrack.examples import BatchPlan, generate_examples
from nbtrack.nbt import SlotModel, train_slot
from nbtrack.tracker import track_corpus

SEED = 31
train_data = generate_toy_corpus(SEED, 40, 0.0)
test_data = generate_toy_corpus(SEED, 20, 1.0, split="test")
ontology, table = train_data.ontology, train_data.table
dictionary = toy_semantic_dictionary()

print("=== delexicalisation ===")
tokens = ["im", "looking", "for", "a", "cheap", "thai", "restaurant"]
plain = delexicalise(tokens, ontology)
print("  input: ", " ".join(tokens))
print("  tagged:", " ".join(plain.tokens))
rephrased = ["an", "inexpensive", "siamese", "restaurant"]
print("  input: ", " ".join(rephrased))
print("  no dictionary: ", " ".join(delexicalise(rephrased, ontology).tokens))
print("  with dictionary:",
      " ".join(delexicalise(rephrased, ontology, dictionary).tokens))

feats = featurize(plain, (), CandidatePair("food", "thai"))
print("  features for food=thai:", sorted(feats))

print("\n=== training the three trackers ===")
examples = {s: generate_examples(train_data.corpus, ontology, s)
            for s in ontology.tracked_slots()}

def joint(models, tbl=table):
    outputs = track_corpus(models, test_data.corpus, ontology, tbl, lam=0.55)
    return score(flatten_outputs(outputs, test_data.corpus), test_data.corpus).joint_goal

results = {}
for tag, dic in (("baseline", None), ("baseline + dictionary", dictionary)):
    models = {s: train_baseline(examples[s], ontology, s,
                                BatchPlan(32, 0.25, seed=SEED), dictionary=dic,
                                lr=0.1, l2=1e-5, max_epochs=60)
              for s in ontology.tracked_slots()}
    results[tag] = joint(models)

cnn = {}
for slot in ontology.tracked_slots():
    model = SlotModel("cnn", slot, word_dim=table.dim, num_filters=48,
                      hidden_dim=100, dropout_rate=0.5, seed=SEED)
    train_slot(model, examples[slot], BatchPlan(32, 0.25, seed=SEED), table,
               lr=0.02, max_epochs=50, patience=15, seed=SEED)
    cnn[slot] = model
results["cnn over word vectors"] = joint(cnn)

print("\njoint goal accuracy on the paraphrase-only test set:")
for tag, value in results.items():
    print(f"  {tag:24s} {value:.3f}")
print("\nexact matching collapses without a hand-built lexicon; reasoning "
      "over vector positions never needed one.")
