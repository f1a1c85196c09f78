#!/usr/bin/env python3
"""Train per-slot models and watch the belief state evolve over a dialogue.

Trains the convolutional variant on a small exact-mention corpus, then tracks
a paraphrase-only test dialogue turn by turn, printing the cumulative belief
after each update. Finishes with a save/load round trip.
"""

import tempfile
import time
from pathlib import Path

from nbtrack.eval import flatten_outputs, generate_toy_corpus, score
from nbtrack.examples import BatchPlan, generate_examples
from nbtrack.nbt import SlotModel, load_model, save_model, train_slot
from nbtrack.tracker import track_corpus, track_dialogue

SEED = 13
train_data = generate_toy_corpus(SEED, 40, 0.0)
test_data = generate_toy_corpus(SEED, 20, 1.0, split="test")
ontology, table = train_data.ontology, train_data.table

print("training one convolutional model per slot (small configuration)...")
start = time.time()
models = {}
for slot in ontology.tracked_slots():
    examples = generate_examples(train_data.corpus, ontology, slot)
    model = SlotModel("cnn", slot, word_dim=table.dim, num_filters=48,
                      hidden_dim=100, dropout_rate=0.5, seed=SEED,
                      vector_hash=table.source_hash)
    plan = BatchPlan(batch_size=32, positive_fraction=0.25, seed=SEED)
    history = train_slot(model, examples, plan, table, lr=0.02,
                         max_epochs=40, patience=12, seed=SEED)
    models[slot] = model
    print(f"  {slot}: {len(history.epoch_loss)} epochs, "
          f"final loss {history.epoch_loss[-1]:.3f}")
print(f"trained in {time.time() - start:.0f}s")

dialogue = next(d for d in test_data.corpus if len(d.turns) >= 2)
print(f"\ntracking {dialogue.id} (paraphrase-only utterances):")
outputs = track_dialogue(models, dialogue, ontology, table, lam=0.55)
for turn, out in zip(dialogue.turns, outputs):
    print(f"  user: {turn.transcript!r}")
    strongest = {s: max(v.items(), key=lambda kv: kv[1])
                 for s, v in out.belief.probs.items()}
    print("   belief:", {s: f"{val}:{p:.2f}" for s, (val, p) in strongest.items()})
    print("   goals:", {s: v for s, v in out.goals.items() if v},
          "requests:", out.requests, " gold:", dict(turn.gold.goals))

all_outputs = track_corpus(models, test_data.corpus, ontology, table)
metrics = score(flatten_outputs(all_outputs, test_data.corpus), test_data.corpus)
print(f"\ntest metrics: joint goal {metrics.joint_goal:.3f}, "
      f"requests {metrics.request_acc:.3f}")

path = Path(tempfile.mkdtemp()) / "food.json"
save_model(models["food"], path)
again = load_model(path, table=table)
print(f"\nsaved and reloaded the food model: variant={again.variant}, "
      f"{sum(p.value.size for p in again.params.values())} parameters")
