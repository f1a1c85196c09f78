#!/usr/bin/env python3
"""How much does vector quality matter? Semantic vs random initialisation.

Trains the same convolutional models twice: once over the constructed
semantic space (synonyms near their values) and once over random uniform
vectors of the same dimensionality, then evaluates both on a paraphrase-only
test set.
"""

from nbtrack.eval import flatten_outputs, generate_toy_corpus, score
from nbtrack.examples import BatchPlan, generate_examples
from nbtrack.nbt import SlotModel, train_slot
from nbtrack.tracker import track_corpus
from nbtrack.wordvec import random_table

SEED = 77
train_data = generate_toy_corpus(SEED, 40, 0.0)
test_data = generate_toy_corpus(SEED, 20, 1.0, split="test")
ontology = train_data.ontology
examples = {s: generate_examples(train_data.corpus, ontology, s)
            for s in ontology.tracked_slots()}

tables = {
    "semantic (constructed)": train_data.table,
    "random (uniform init)": random_table(train_data.vocabulary,
                                          train_data.table.dim, seed=SEED),
}

print("training the convolutional tracker over two vector spaces...\n")
for tag, table in tables.items():
    models = {}
    for slot in ontology.tracked_slots():
        model = SlotModel("cnn", slot, word_dim=table.dim, num_filters=48,
                          hidden_dim=100, dropout_rate=0.5, seed=SEED)
        train_slot(model, examples[slot], BatchPlan(32, 0.25, seed=SEED),
                   table, lr=0.02, max_epochs=50, patience=15, seed=SEED)
        models[slot] = model
    outputs = track_corpus(models, test_data.corpus, ontology, table, lam=0.55)
    metrics = score(flatten_outputs(outputs, test_data.corpus), test_data.corpus)
    print(f"  {tag:24s} joint goal {metrics.joint_goal:.3f}, "
          f"requests {metrics.request_acc:.3f}")

print("\nwith random vectors the model can only memorize surface forms seen "
      "in training; the constructed space lets it resolve unseen rephrasings "
      "purely from where they sit.")
