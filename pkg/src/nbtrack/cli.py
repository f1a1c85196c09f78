"""Command-line entry points: train, track, eval, gen-toy, gradcheck.

Configuration precedence: explicit flags > NBTRACK_* environment variables >
--config JSON file > built-in defaults. Every run's randomness flows from the
single --seed flag. Exit codes: 0 ok, 1 validation/metric failure, 2 I/O,
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import baseline as bl
from . import eval as ev
from . import nbt
from . import tracker as tr
from .domain import (
    FormatError, corpus_stats, load_corpus, load_ontology, save_corpus,
    save_ontology,
)
from .examples import BatchPlan, NoPositivesError, generate_examples
from .numerics import DimensionError, GraphError, derive_seed
from .wordvec import VectorFormatError, load_vectors, save_vectors

ENV_PREFIX = "NBTRACK_"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INTERNAL = 3

GRADCHECK_TOLERANCE = 1e-4


def _sanitize(slot: str) -> str:
    return slot.replace(" ", "_").replace("/", "_")


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} file not found: {p}")
    return p


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _train_one_nbt(variant, slot, examples, val_examples, table, cfg):
    model = nbt.SlotModel(variant, slot, word_dim=table.dim,
                          num_filters=cfg["filters"], hidden_dim=cfg["hidden"],
                          dropout_rate=cfg["dropout"], seed=cfg["seed"],
                          vector_hash=table.source_hash)
    plan = BatchPlan(batch_size=cfg["batch"], positive_fraction=cfg["pos_frac"],
                     seed=derive_seed(cfg["seed"], "batches", slot))
    history = nbt.train_slot(model, examples, plan, table,
                             validation=val_examples, lr=cfg["lr"],
                             clip=(-cfg["clip"], cfg["clip"]),
                             max_epochs=cfg["epochs"], patience=cfg["patience"],
                             seed=derive_seed(cfg["seed"], "train", slot))
    return nbt.model_payload(model), {
        "epochs": len(history.epoch_loss), "loss": history.epoch_loss,
        "val_metric": history.val_metric, "best_epoch": history.best_epoch,
        "stopped_early": history.stopped_early}


def _train_one_nbt_star(args):
    return _train_one_nbt(*args)


def cmd_train(args) -> int:
    ontology = load_ontology(_require_file(args.ontology, "ontology"))
    corpus = load_corpus(_require_file(args.corpus, "corpus"), ontology)
    table = load_vectors(_require_file(args.vectors, "vectors"))
    dictionary = None
    if args.dictionary:
        dictionary = bl.load_semantic_dictionary(
            _require_file(args.dictionary, "dictionary"))
    val_corpus = None
    if args.val_corpus:
        val_corpus = load_corpus(_require_file(args.val_corpus, "validation corpus"),
                                 ontology)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    slots = args.slots.split(",") if args.slots else ontology.tracked_slots()
    for slot in slots:
        if slot not in ontology.tracked_slots():
            raise FormatError(f"--slots names unknown slot {slot!r}")
    cfg = {"seed": args.seed, "lr": args.lr, "batch": args.batch,
           "pos_frac": args.pos_frac, "dropout": args.dropout,
           "epochs": args.epochs, "patience": args.patience, "clip": args.clip,
           "hidden": args.hidden, "filters": args.filters}
    print(f"training variant={args.variant} slots={slots} "
          f"corpus={corpus_stats(corpus)}", file=sys.stderr)

    report = {"variant": args.variant, "config": cfg, "slots": {}}
    if args.variant == "baseline":
        for slot in slots:
            examples = generate_examples(corpus, ontology, slot)
            plan = BatchPlan(batch_size=args.batch, positive_fraction=args.pos_frac,
                             seed=derive_seed(args.seed, "batches", slot))
            model = bl.train_baseline(examples, ontology, slot, plan,
                                      dictionary=dictionary, lr=args.lr,
                                      l2=args.l2, clip=(-args.clip, args.clip),
                                      max_epochs=args.epochs)
            bl.save_baseline(model, out_dir / f"{_sanitize(slot)}.json")
            report["slots"][slot] = {"features": len(model.feature_index)}
            print(f"  slot {slot}: {len(model.feature_index)} features",
                  file=sys.stderr)
    else:
        jobs = []
        for slot in slots:
            examples = generate_examples(corpus, ontology, slot)
            val_examples = (generate_examples(val_corpus, ontology, slot)
                            if val_corpus else None)
            jobs.append((args.variant, slot, examples, val_examples, table, cfg))
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_train_one_nbt_star, jobs))
        else:
            results = [_train_one_nbt_star(j) for j in jobs]
        for (variant, slot, *_), (payload, hist) in zip(jobs, results):
            path = out_dir / f"{_sanitize(slot)}.json"
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True)
                fh.write("\n")
            report["slots"][slot] = hist
            print(f"  slot {slot}: {hist['epochs']} epochs, "
                  f"final loss {hist['loss'][-1]:.4f}", file=sys.stderr)

    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(slots)} model file(s) to {out_dir}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# track / eval
# ---------------------------------------------------------------------------

def _load_models(models_dir, ontology, table):
    models = {}
    model_dir = Path(models_dir)
    if not model_dir.is_dir():
        raise FileNotFoundError(f"model directory not found: {model_dir}")
    for path in sorted(model_dir.glob("*.json")):
        if path.name == "report.json":
            continue
        payload = json.loads(path.read_text(encoding="utf-8"))
        family = payload.get("family")
        if family == "nbt":
            model = nbt.load_model(path, table=table)
        elif family == "baseline":
            model = bl.load_baseline(path, ontology)
        else:
            continue
        models[model.slot] = model
    expected = set(ontology.tracked_slots())
    if set(models) != expected:
        raise FormatError(f"model/ontology slot mismatch: models cover "
                          f"{sorted(models)} but the ontology needs {sorted(expected)}")
    return models


def cmd_track(args) -> int:
    ontology = load_ontology(_require_file(args.ontology, "ontology"))
    corpus = load_corpus(_require_file(args.corpus, "corpus"), ontology)
    table = load_vectors(_require_file(args.vectors, "vectors"))
    models = _load_models(args.models, ontology, table)
    outputs = tr.track_corpus(models, corpus, ontology, table,
                              lam=args.lam, use_asr=args.use_asr,
                              renormalize_asr=args.renormalize_asr)
    tr.write_outputs(outputs, args.out)
    n = sum(len(v) for v in outputs.values())
    print(f"wrote {n} turn outputs to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    ontology = load_ontology(_require_file(args.ontology, "ontology"))
    corpus = load_corpus(_require_file(args.corpus, "corpus"), ontology)
    outputs_by_dialogue = tr.read_outputs(_require_file(args.output, "tracker output"))
    flat = ev.flatten_outputs(outputs_by_dialogue, corpus)
    metrics = ev.score(flat, corpus)
    print(ev.metrics_report(metrics, path=args.report))
    if args.min_joint is not None and metrics.joint_goal < args.min_joint:
        print(f"joint goal {metrics.joint_goal:.4f} below required "
              f"{args.min_joint}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen-toy / gradcheck
# ---------------------------------------------------------------------------

def cmd_gen_toy(args) -> int:
    data = ev.generate_toy_corpus(args.seed, args.dialogues, args.paraphrase_rate,
                                  asr=args.asr, split=args.split, dim=args.dim)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_ontology(data.ontology, out_dir / "ontology.json")
    save_corpus(data.corpus, out_dir / f"{args.split}.json")
    save_vectors(data.table, out_dir / "vectors.txt")
    bl.save_semantic_dictionary(data.dictionary, out_dir / "dictionary.json")
    print(f"wrote ontology.json, {args.split}.json, vectors.txt, dictionary.json "
          f"to {out_dir}", file=sys.stderr)
    return EXIT_OK


def _gradcheck_variant(variant, seed):
    from .domain import CandidatePair, SystemAct
    from .numerics import finite_difference_check, softmax_xent
    from .wordvec import random_table

    dim = 6
    table = random_table(["a", "b", "c", "food", "thai"], dim, seed=seed)
    model = nbt.SlotModel(variant, "food", word_dim=dim, num_filters=5,
                          hidden_dim=8, dropout_rate=0.0, seed=seed)
    ctx = nbt.make_context([SystemAct("request", slot="food"),
                            SystemAct("confirm", slot="food", value="thai")], table)
    pair = CandidatePair("food", "thai")

    def build():
        return softmax_xent(
            nbt.forward_logits(model, ("a", "b", "c"), ctx, pair, table), 1)

    return finite_difference_check(build, model.params, max_entries_per_param=25,
                                   rng=np.random.default_rng(seed))


def cmd_gradcheck(args) -> int:
    variants = ["dnn", "cnn"] if args.variant == "both" else [args.variant]
    worst = 0.0
    for variant in variants:
        err = _gradcheck_variant(variant, args.seed)
        print(f"{variant}: max relative error {err:.3e}")
        worst = max(worst, err)
    if worst >= GRADCHECK_TOLERANCE:
        print(f"gradient check FAILED (>= {GRADCHECK_TOLERANCE})", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"gradient check passed (< {GRADCHECK_TOLERANCE})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbtrack",
        description="Train, run and evaluate word-vector belief trackers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train per-slot models")
    p.add_argument("--variant", choices=["dnn", "cnn", "baseline"], required=True)
    p.add_argument("--ontology", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True, help="directory for model files")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--val-corpus", default=None)
    p.add_argument("--dictionary", default=None, help="semantic dictionary (baseline)")
    p.add_argument("--slots", default=None, help="comma-separated subset")
    p.add_argument("--lr", type=float, default=nbt.DEFAULT_LR)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--pos-frac", type=float, default=0.125)
    p.add_argument("--dropout", type=float, default=nbt.DEFAULT_DROPOUT)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--clip", type=float, default=2.0)
    p.add_argument("--hidden", type=int, default=nbt.DEFAULT_HIDDEN_DIM)
    p.add_argument("--filters", type=int, default=nbt.DEFAULT_NUM_FILTERS)
    p.add_argument("--l2", type=float, default=1e-5, help="baseline L2 strength")
    p.add_argument("--jobs", type=int, default=1, help="parallel per-slot trainers")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", help="run trained models over a corpus")
    p.add_argument("--models", required=True, help="directory of model files")
    p.add_argument("--ontology", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True, help="output JSON-lines file")
    p.add_argument("--lambda", dest="lam", type=float, default=tr.DEFAULT_LAMBDA)
    p.add_argument("--use-asr", action="store_true")
    p.add_argument("--renormalize-asr", action="store_true")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score tracker output against gold labels")
    p.add_argument("--output", required=True, help="tracker JSON-lines file")
    p.add_argument("--ontology", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--report", default=None, help="write metrics JSON here")
    p.add_argument("--min-joint", type=float, default=None,
                   help="exit 1 if joint goal falls below this")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-toy", help="emit a synthetic corpus + world files")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dialogues", type=int, default=60)
    p.add_argument("--paraphrase-rate", type=float, default=0.0)
    p.add_argument("--split", default="train")
    p.add_argument("--asr", action="store_true")
    p.add_argument("--dim", type=int, default=48)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("gradcheck", help="finite-difference check of both models")
    p.add_argument("--variant", choices=["dnn", "cnn", "both"], default="both")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _external_defaults(parser: argparse.ArgumentParser, argv) -> None:
    """Apply --config file values and NBTRACK_* env overrides as defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=os.environ.get(ENV_PREFIX + "CONFIG"))
    known, _ = pre.parse_known_args(argv)
    overrides = {}
    if known.config:
        overrides.update(json.loads(Path(known.config).read_text(encoding="utf-8")))
    for key, value in os.environ.items():
        if key.startswith(ENV_PREFIX) and key != ENV_PREFIX + "CONFIG":
            overrides[key[len(ENV_PREFIX):].lower()] = value
    if not overrides:
        return
    for action_parser in parser._subparsers._group_actions[0].choices.values():
        usable = {}
        for action in action_parser._actions:
            if action.dest in overrides:
                raw = overrides[action.dest]
                if action.type is not None and isinstance(raw, str):
                    raw = action.type(raw)
                usable[action.dest] = raw
                if action.required:
                    action.required = False
        if usable:
            action_parser.set_defaults(**usable)


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    # strip --config before the real parse; it only feeds defaults
    _external_defaults(parser, argv)
    cleaned = []
    skip = False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--config":
            skip = True
            continue
        if a.startswith("--config="):
            continue
        cleaned.append(a)
    args = parser.parse_args(cleaned)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FormatError, VectorFormatError, nbt.ModelFormatError,
            ev.AlignmentError, NoPositivesError, tr.PosteriorError,
            DimensionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GraphError, nbt.TrainingDivergedError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
