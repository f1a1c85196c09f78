import json

import pytest

from nbtrack.cli import main


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("toy")
    assert run("gen-toy", "--seed", "3", "--dialogues", "14",
               "--paraphrase-rate", "0.0", "--out", str(path)) == 0
    assert run("gen-toy", "--seed", "3", "--dialogues", "8",
               "--paraphrase-rate", "1.0", "--split", "test",
               "--out", str(path)) == 0
    return path


def train_args(toy_dir, out, variant="dnn", seed="5", extra=()):
    return ["train", "--variant", variant,
            "--ontology", str(toy_dir / "ontology.json"),
            "--corpus", str(toy_dir / "train.json"),
            "--vectors", str(toy_dir / "vectors.txt"),
            "--out", str(out), "--seed", seed,
            "--batch", "16", "--pos-frac", "0.25", "--lr", "0.02",
            "--epochs", "4", "--patience", "4", "--hidden", "12",
            "--filters", "8", *extra]


def test_gen_toy_writes_world(toy_dir):
    for name in ("ontology.json", "train.json", "test.json", "vectors.txt",
                 "dictionary.json"):
        assert (toy_dir / name).exists(), name


def test_gen_toy_stable_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("gen-toy", "--seed", "11", "--dialogues", "6",
                   "--paraphrase-rate", "0.5", "--out", str(out)) == 0
    for name in ("ontology.json", "train.json", "vectors.txt", "dictionary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_train_track_eval_pipeline(toy_dir, tmp_path):
    models = tmp_path / "models"
    assert main(train_args(toy_dir, models)) == 0
    assert (models / "report.json").exists()
    assert (models / "food.json").exists()
    payload = json.loads((models / "food.json").read_text())
    assert payload["family"] == "nbt"

    out = tmp_path / "out.jsonl"
    assert run("track", "--models", str(models),
               "--ontology", str(toy_dir / "ontology.json"),
               "--corpus", str(toy_dir / "test.json"),
               "--vectors", str(toy_dir / "vectors.txt"),
               "--out", str(out), "--lambda", "0.55") == 0
    lines = out.read_text().splitlines()
    corpus = json.loads((toy_dir / "test.json").read_text())
    assert len(lines) == sum(len(d["turns"]) for d in corpus)

    assert run("eval", "--output", str(out),
               "--ontology", str(toy_dir / "ontology.json"),
               "--corpus", str(toy_dir / "test.json"),
               "--report", str(tmp_path / "metrics.json")) == 0
    report = json.loads((tmp_path / "metrics.json").read_text())
    assert set(report) >= {"joint_goal", "requests", "per_slot", "n_turns"}


def test_train_deterministic_model_bytes(toy_dir, tmp_path):
    m1, m2 = tmp_path / "m1", tmp_path / "m2"
    assert main(train_args(toy_dir, m1, seed="7")) == 0
    assert main(train_args(toy_dir, m2, seed="7")) == 0
    for path in sorted(m1.glob("*.json")):
        if path.name == "report.json":
            continue
        assert path.read_bytes() == (m2 / path.name).read_bytes(), path.name


def test_track_deterministic_output_bytes(toy_dir, tmp_path):
    models = tmp_path / "models"
    assert main(train_args(toy_dir, models)) == 0
    outs = []
    for name in ("o1.jsonl", "o2.jsonl"):
        out = tmp_path / name
        assert run("track", "--models", str(models),
                   "--ontology", str(toy_dir / "ontology.json"),
                   "--corpus", str(toy_dir / "test.json"),
                   "--vectors", str(toy_dir / "vectors.txt"),
                   "--out", str(out)) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_baseline_variant_trains(toy_dir, tmp_path):
    models = tmp_path / "bmodels"
    args = train_args(toy_dir, models, variant="baseline",
                      extra=("--dictionary", str(toy_dir / "dictionary.json")))
    assert main(args) == 0
    payload = json.loads((models / "food.json").read_text())
    assert payload["family"] == "baseline"
    out = tmp_path / "b.jsonl"
    assert run("track", "--models", str(models),
               "--ontology", str(toy_dir / "ontology.json"),
               "--corpus", str(toy_dir / "test.json"),
               "--vectors", str(toy_dir / "vectors.txt"),
               "--out", str(out)) == 0


def test_missing_vectors_file_exit_2(toy_dir, tmp_path):
    args = train_args(toy_dir, tmp_path / "x")
    args[args.index("--vectors") + 1] = str(tmp_path / "nope.txt")
    assert main(args) == 2


def test_malformed_corpus_exit_1(toy_dir, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('[{"id": "d", "turns": []}]')
    args = train_args(toy_dir, tmp_path / "x")
    args[args.index("--corpus") + 1] = str(bad)
    assert main(args) == 1


def test_model_ontology_mismatch_exit_1(toy_dir, tmp_path):
    models = tmp_path / "partial"
    assert main(train_args(toy_dir, models, extra=("--slots", "food"))) == 0
    assert run("track", "--models", str(models),
               "--ontology", str(toy_dir / "ontology.json"),
               "--corpus", str(toy_dir / "test.json"),
               "--vectors", str(toy_dir / "vectors.txt"),
               "--out", str(tmp_path / "x.jsonl")) == 1


def test_gradcheck_both_variants():
    assert run("gradcheck", "--variant", "both", "--seed", "1") == 0


def test_eval_min_joint_gate(toy_dir, tmp_path):
    models = tmp_path / "models"
    assert main(train_args(toy_dir, models)) == 0
    out = tmp_path / "out.jsonl"
    assert run("track", "--models", str(models),
               "--ontology", str(toy_dir / "ontology.json"),
               "--corpus", str(toy_dir / "test.json"),
               "--vectors", str(toy_dir / "vectors.txt"),
               "--out", str(out)) == 0
    code = run("eval", "--output", str(out),
               "--ontology", str(toy_dir / "ontology.json"),
               "--corpus", str(toy_dir / "test.json"),
               "--min-joint", "1.01")
    assert code == 1


def test_env_override_supplies_default(toy_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("NBTRACK_SEED", "9")
    args = train_args(toy_dir, tmp_path / "envm")
    idx = args.index("--seed")
    del args[idx:idx + 2]   # no flag: env fills it
    assert main(args) == 0


def test_config_file_supplies_default(toy_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 13}))
    args = train_args(toy_dir, tmp_path / "cfgm") + ["--config", str(cfg)]
    idx = args.index("--seed")
    del args[idx:idx + 2]
    assert main(args) == 0


def test_jobs_parallel_training_matches_serial(toy_dir, tmp_path):
    serial, parallel = tmp_path / "s", tmp_path / "p"
    assert main(train_args(toy_dir, serial, seed="21",
                           extra=("--slots", "food,price"))) == 0
    assert main(train_args(toy_dir, parallel, seed="21",
                           extra=("--slots", "food,price", "--jobs", "2"))) == 0
    for path in sorted(serial.glob("*.json")):
        if path.name == "report.json":
            continue
        assert path.read_bytes() == (parallel / path.name).read_bytes()
