"""Acceptance suite: one test per binding criterion, at its stated tolerance.

The semantic-generalization experiment (criteria 5-7) trains once per session
and is shared across those tests. Run with `-v -s` to see one line per
criterion.
"""

import json
import time

import numpy as np
import pytest

from nbtrack import numerics as nm
from nbtrack.baseline import train_baseline
from nbtrack.cli import main as cli_main
from nbtrack.domain import (
    CandidatePair, FormatError, SystemAct, load_corpus, load_ontology,
    save_corpus, save_ontology,
)
from nbtrack.eval import (
    flatten_outputs, generate_toy_corpus, score, toy_semantic_dictionary,
)
from nbtrack.examples import BatchPlan, Example, generate_examples, minibatches
from nbtrack.nbt import SlotModel, forward, forward_logits, make_context, train_slot
from nbtrack.tracker import BeliefState, track_corpus, track_dialogue, update_belief
from nbtrack.wordvec import VectorFormatError, load_vectors, random_table

SEED = 20
GRAD_TOLERANCE = 1e-4
CLOSED_FORM_TOLERANCE = 1e-12
TRAIN_BUDGET_SECONDS = 600.0


def report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# criterion 1: gradient suite, both variants, all parameter groups, < 60 s
# ---------------------------------------------------------------------------

def test_gradient_suite():
    start = time.monotonic()
    worst = {}
    for variant in ("dnn", "cnn"):
        dim = 6
        table = random_table(["a", "b", "c", "food", "thai"], dim, seed=1)
        model = SlotModel(variant, "food", word_dim=dim, num_filters=5,
                          hidden_dim=8, dropout_rate=0.0, seed=1)
        ctx = make_context([SystemAct("request", slot="food"),
                            SystemAct("confirm", slot="food", value="thai")], table)
        pair = CandidatePair("food", "thai")

        def build():
            return nm.softmax_xent(
                forward_logits(model, ("a", "b", "c"), ctx, pair, table), 1)

        err = nm.finite_difference_check(build, model.params,
                                         max_entries_per_param=30,
                                         rng=np.random.default_rng(2))
        worst[variant] = err
    elapsed = time.monotonic() - start
    ok = all(e < GRAD_TOLERANCE for e in worst.values()) and elapsed < 60.0
    report("gradient suite", ok,
           f"dnn={worst['dnn']:.2e} cnn={worst['cnn']:.2e} "
           f"(tolerance {GRAD_TOLERANCE}), runtime {elapsed:.1f}s < 60s")


# ---------------------------------------------------------------------------
# criterion 2: iterative belief update bitwise-equals naive recursion
# ---------------------------------------------------------------------------

class ScriptedModel:
    def __init__(self, slot, script):
        self.slot = slot
        self.script = script

    def turn_value_probs(self, tokens, acts, table, values):
        return {v: self.script[tuple(tokens)].get(v, 0.0) for v in values}


class NullTable:
    dim = 4

    def embed_phrase(self, phrase):
        return np.zeros(4)


def test_belief_update_oracle(tmp_path):
    onto_path = tmp_path / "o.json"
    onto_path.write_text(json.dumps({
        "informable": {"food": ["thai", "italian"], "price": ["cheap"]},
        "requestable": ["address"]}))
    ontology = load_ontology(onto_path)
    rng = np.random.default_rng(nm.derive_seed(SEED, "oracle"))
    n_dialogues, n_turns = 200, 6
    mismatches = 0
    for lam in (0.0, 0.55, 1.0):
        for d in range(n_dialogues):
            transcripts = [f"turn{d}_{t}" for t in range(n_turns)]
            script = {}
            for t in range(n_turns):
                script[(transcripts[t],)] = {
                    "thai": rng.random(), "italian": rng.random(),
                    "cheap": rng.random(), "address": rng.random()}
            models = {s: ScriptedModel(s, script) for s in ontology.tracked_slots()}
            corpus_path = tmp_path / "c.json"
            corpus_path.write_text(json.dumps([{
                "id": "d", "turns": [{"system_acts": [], "transcript": tr}
                                     for tr in transcripts]}]))
            dialogue = load_corpus(corpus_path, ontology)[0]
            outputs = track_dialogue(models, dialogue, ontology, NullTable(),
                                     lam=lam)

            def naive(t, slot, value):
                if t < 0:
                    return 0.0
                turn_level = script[(transcripts[t],)][value]
                return lam * turn_level + (1.0 - lam) * naive(t - 1, slot, value)

            for t, out in enumerate(outputs):
                for slot in ("food", "price"):
                    for value in ontology.informable[slot]:
                        if out.belief.probs[slot][value] != naive(t, slot, value):
                            mismatches += 1
    report("belief-update oracle", mismatches == 0,
           f"{3 * n_dialogues} dialogues x {n_turns} turns, "
           f"lambda in {{0, 0.55, 1}}, {mismatches} bitwise mismatches")


# ---------------------------------------------------------------------------
# criterion 3: closed-form recursion for a constant turn-level estimate
# ---------------------------------------------------------------------------

def test_closed_form_recursion():
    worst = 0.0
    pair = CandidatePair("food", "thai")
    for lam in (0.0, 0.25, 0.55, 1.0):
        for p in (0.0, 0.3, 0.8, 1.0):
            belief = BeliefState({"food": {"thai": 0.0}})
            for t in range(1, 51):
                belief = update_belief(belief, {pair: p}, lam)
                expected = p * (1.0 - (1.0 - lam) ** t)
                worst = max(worst, abs(belief.probs["food"]["thai"] - expected))
    report("closed-form recursion", worst < CLOSED_FORM_TOLERANCE,
           f"max abs deviation {worst:.2e} < {CLOSED_FORM_TOLERANCE} over t<=50")


# ---------------------------------------------------------------------------
# criterion 4: exact positive count in every minibatch
# ---------------------------------------------------------------------------

def test_sampling_contract():
    pair_p = CandidatePair("food", "thai")
    pair_n = CandidatePair("food", "italian")
    examples = [Example((f"p{i}",), (), pair_p, 1) for i in range(50)]
    examples += [Example((f"n{i}",), (), pair_n, 0) for i in range(4000)]
    plan = BatchPlan(batch_size=256, positive_fraction=0.125, seed=SEED)
    stream = minibatches(examples, plan)
    bad = 0
    for _ in range(1000):
        batch = next(stream)
        if sum(e.label for e in batch) != 32 or len(batch) != 256:
            bad += 1
    report("sampling contract", bad == 0,
           f"1000 batches of 256 with exactly 32 positives ({bad} violations)")


# ---------------------------------------------------------------------------
# criteria 5-7: the synthetic semantic-generalization experiment
# ---------------------------------------------------------------------------

TRAIN_CFG = dict(lr=0.02, max_epochs=60, patience=20)


def _train_nbt(variant, examples_by_slot, ontology, table):
    models = {}
    for slot in ontology.tracked_slots():
        model = SlotModel(variant, slot, word_dim=table.dim, num_filters=48,
                          hidden_dim=100, dropout_rate=0.5, seed=SEED)
        plan = BatchPlan(batch_size=32, positive_fraction=0.25, seed=SEED)
        train_slot(model, examples_by_slot[slot], plan, table, seed=SEED,
                   **TRAIN_CFG)
        models[slot] = model
    return models


def _joint(models, test_corpus, ontology, table):
    outputs = track_corpus(models, test_corpus, ontology, table, lam=0.55)
    return score(flatten_outputs(outputs, test_corpus), test_corpus).joint_goal


@pytest.fixture(scope="module")
def experiment():
    train_data = generate_toy_corpus(SEED, 60, 0.0)
    test_data = generate_toy_corpus(SEED, 40, 1.0, split="test")
    ontology, table = train_data.ontology, train_data.table
    examples_by_slot = {s: generate_examples(train_data.corpus, ontology, s)
                        for s in ontology.tracked_slots()}

    start = time.monotonic()
    nbt_models = {v: _train_nbt(v, examples_by_slot, ontology, table)
                  for v in ("cnn", "dnn")}
    baselines = {}
    for tag, dictionary in (("plain", None), ("dict", toy_semantic_dictionary())):
        models = {}
        for slot in ontology.tracked_slots():
            plan = BatchPlan(batch_size=32, positive_fraction=0.25, seed=SEED)
            models[slot] = train_baseline(examples_by_slot[slot], ontology, slot,
                                          plan, dictionary=dictionary, lr=0.1,
                                          l2=1e-5, max_epochs=60)
        baselines[tag] = models
    rand_table = random_table(train_data.vocabulary, table.dim, seed=SEED)
    random_models = _train_nbt("cnn", examples_by_slot, ontology, rand_table)
    train_seconds = time.monotonic() - start

    return {
        "ontology": ontology, "table": table, "rand_table": rand_table,
        "test_corpus": test_data.corpus, "train_seconds": train_seconds,
        "joint": {v: _joint(m, test_data.corpus, ontology, table)
                  for v, m in nbt_models.items()},
        "joint_baseline": {t: _joint(m, test_data.corpus, ontology, table)
                           for t, m in baselines.items()},
        "joint_random": _joint(random_models, test_data.corpus, ontology,
                               rand_table),
        "food_cnn": nbt_models["cnn"]["food"],
    }


def test_semantic_generalization(experiment):
    joint = experiment["joint"]
    plain = experiment["joint_baseline"]["plain"]
    with_dict = experiment["joint_baseline"]["dict"]
    seconds = experiment["train_seconds"]
    ok_nbt = joint["cnn"] >= 0.90 and joint["dnn"] >= 0.90
    ok_plain = all(plain <= joint[v] - 0.20 for v in ("cnn", "dnn"))
    ok_dict = all(abs(with_dict - joint[v]) <= 0.05 for v in ("cnn", "dnn"))
    ok_time = seconds < TRAIN_BUDGET_SECONDS
    report("semantic generalization", ok_nbt and ok_plain and ok_dict and ok_time,
           f"cnn={joint['cnn']:.3f} dnn={joint['dnn']:.3f} (>=0.90); "
           f"baseline={plain:.3f} (<=nbt-0.20); +dict={with_dict:.3f} "
           f"(within 0.05); training {seconds:.0f}s < {TRAIN_BUDGET_SECONDS:.0f}s")


def test_vector_ablation_direction(experiment):
    semantic = experiment["joint"]["cnn"]
    rand = experiment["joint_random"]
    report("vector-ablation direction", semantic - rand >= 0.10,
           f"semantic={semantic:.3f} vs random={rand:.3f}, "
           f"gap {semantic - rand:.3f} >= 0.10")


def test_context_gating(experiment):
    table = experiment["table"]
    model = experiment["food_cnn"]
    pair = CandidatePair("food", "thai")
    ctx_match = make_context([SystemAct("confirm", slot="food", value="thai")],
                             table)
    ctx_other = make_context([SystemAct("confirm", slot="food", value="italian")],
                             table)
    p_match = forward(model, ("yes",), ctx_match, pair, table)
    p_other = forward(model, ("yes",), ctx_other, pair, table)
    report("context gating", p_match >= 0.8 and p_other <= 0.5,
           f"P(thai | confirm thai, 'yes')={p_match:.3f} >= 0.8; "
           f"P(thai | confirm italian, 'yes')={p_other:.3f} <= 0.5")


# ---------------------------------------------------------------------------
# criterion 8: byte-identical artifacts under identical seeds
# ---------------------------------------------------------------------------

def test_determinism(tmp_path):
    toy = tmp_path / "toy"
    assert cli_main(["gen-toy", "--seed", "3", "--dialogues", "12",
                     "--paraphrase-rate", "0.0", "--out", str(toy)]) == 0
    assert cli_main(["gen-toy", "--seed", "3", "--dialogues", "6",
                     "--paraphrase-rate", "1.0", "--split", "test",
                     "--out", str(toy)]) == 0
    model_bytes = []
    output_bytes = []
    for run in ("r1", "r2"):
        models = tmp_path / run
        assert cli_main(["train", "--variant", "cnn",
                         "--ontology", str(toy / "ontology.json"),
                         "--corpus", str(toy / "train.json"),
                         "--vectors", str(toy / "vectors.txt"),
                         "--out", str(models), "--seed", "17",
                         "--batch", "16", "--pos-frac", "0.25", "--lr", "0.02",
                         "--epochs", "3", "--patience", "3",
                         "--hidden", "12", "--filters", "8"]) == 0
        model_bytes.append({p.name: p.read_bytes()
                            for p in models.glob("*.json") if p.name != "report.json"})
        out = tmp_path / f"{run}.jsonl"
        assert cli_main(["track", "--models", str(models),
                         "--ontology", str(toy / "ontology.json"),
                         "--corpus", str(toy / "test.json"),
                         "--vectors", str(toy / "vectors.txt"),
                         "--out", str(out)]) == 0
        output_bytes.append(out.read_bytes())
    same_models = model_bytes[0] == model_bytes[1]
    same_outputs = output_bytes[0] == output_bytes[1]
    report("determinism", same_models and same_outputs,
           f"model files identical={same_models}, "
           f"tracker outputs identical={same_outputs}")


# ---------------------------------------------------------------------------
# criterion 9: format round-trips and line-accurate rejection
# ---------------------------------------------------------------------------

def test_format_gates(tmp_path):
    data = generate_toy_corpus(SEED, 10, 0.4, asr=True)
    onto_path = tmp_path / "o.json"
    corpus_path = tmp_path / "c.json"
    save_ontology(data.ontology, onto_path)
    save_corpus(data.corpus, corpus_path)
    onto2 = load_ontology(onto_path)
    corpus2 = load_corpus(corpus_path, onto2)
    onto_path2 = tmp_path / "o2.json"
    corpus_path2 = tmp_path / "c2.json"
    save_ontology(onto2, onto_path2)
    save_corpus(corpus2, corpus_path2)
    round_trips = (onto_path.read_bytes() == onto_path2.read_bytes()
                   and corpus_path.read_bytes() == corpus_path2.read_bytes())

    from nbtrack.baseline import (load_semantic_dictionary,
                                  save_semantic_dictionary)
    dict_path = tmp_path / "d.json"
    save_semantic_dictionary(data.dictionary, dict_path)
    dict_again = load_semantic_dictionary(dict_path)
    dict_rt = dict_again.to_json() == data.dictionary.to_json()

    bad_json = tmp_path / "bad.json"
    bad_json.write_text('{\n "informable": {\n   BROKEN\n}}')
    with pytest.raises(FormatError, match="line 3") as exc1:
        load_ontology(bad_json)

    bad_vectors = tmp_path / "bad.txt"
    bad_vectors.write_text("a 1.0 2.0\nb 1.0 2.0 3.0\n")
    with pytest.raises(VectorFormatError, match=":2:") as exc2:
        load_vectors(bad_vectors)

    report("format gates", round_trips and dict_rt,
           f"round-trips ok={round_trips and dict_rt}; malformed rejections "
           f"carry locations ('{exc1.value}' / '{exc2.value}')")
