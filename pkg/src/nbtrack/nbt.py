"""Per-slot neural belief models over fixed word vectors.

Two utterance encoders share one downstream skeleton:

  dense ("dnn")  -- cumulative n-gram sums (n = 1, 2, 3), each mapped through
                    its own sigmoid layer and summed into r;
  conv  ("cnn")  -- banks of n-gram filters, ReLU, max-pool over time, summed
                    into r.

The candidate pair is encoded from the summed word vectors of its slot name
and value; the decision combines the elementwise utterance-candidate
interaction with two context gates that pass the utterance representation
through only when the preceding system act asked about the candidate slot
(request) or slot-value pair (confirm). A final linear layer produces the
two-class logits; hidden layers use the sigmoid nonlinearity. Training keeps
the word vectors fixed; only the per-slot weights listed here learn.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .domain import ACT_CONFIRM, ACT_REQUEST, CandidatePair, Ontology
from .examples import BatchPlan, batches_per_epoch, minibatches
from .numerics import Node, derive_seed
from .wordvec import WordVectorTable, tokenize

MODEL_FORMAT_VERSION = 1

DEFAULT_WORD_DIM = 300
DEFAULT_NUM_FILTERS = 300
DEFAULT_HIDDEN_DIM = 100
DEFAULT_DROPOUT = 0.5
DEFAULT_LR = 0.001
DEFAULT_CLIP = (-2.0, 2.0)


class ModelFormatError(ValueError):
    """Serialized model rejected: wrong version, family, or dimensionality."""


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite; the model was restored to the last good epoch."""


@dataclass
class TurnContext:
    """Embedded arguments of the preceding system acts (zero if absent)."""

    t_q: np.ndarray
    t_s: np.ndarray
    t_v: np.ndarray


def make_context(acts, table: WordVectorTable) -> TurnContext:
    """Sum the embedded arguments of all request/confirm acts in the turn."""
    dim = table.dim
    t_q = np.zeros(dim)
    t_s = np.zeros(dim)
    t_v = np.zeros(dim)
    for act in acts:
        if act.kind == ACT_REQUEST:
            t_q = t_q + table.embed_phrase(tokenize(act.slot))
        elif act.kind == ACT_CONFIRM:
            t_s = t_s + table.embed_phrase(tokenize(act.slot))
            t_v = t_v + table.embed_phrase(tokenize(act.value))
    return TurnContext(t_q, t_s, t_v)


def zero_context(dim: int) -> TurnContext:
    return TurnContext(np.zeros(dim), np.zeros(dim), np.zeros(dim))


def _xavier_matrix(rng, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


class SlotModel:
    """All trainable parameters for one slot's tracker, plus hyperparameters."""

    def __init__(self, variant: str, slot: str, word_dim: int = DEFAULT_WORD_DIM,
                 num_filters: int = DEFAULT_NUM_FILTERS, hidden_dim: int = DEFAULT_HIDDEN_DIM,
                 dropout_rate: float = DEFAULT_DROPOUT, seed: int = 0,
                 vector_hash: str = ""):
        if variant not in ("dnn", "cnn"):
            raise ValueError(f"unknown variant {variant!r} (expected 'dnn' or 'cnn')")
        self.variant = variant
        self.slot = slot
        self.word_dim = word_dim
        self.num_filters = num_filters
        self.hidden_dim = hidden_dim
        self.dropout_rate = dropout_rate
        self.vector_hash = vector_hash
        self.rep_dim = word_dim if variant == "dnn" else num_filters
        rng = np.random.default_rng(derive_seed(seed, "init", variant, slot))
        self.params: dict[str, Node] = {}
        for n in (1, 2, 3):
            rows = word_dim if variant == "dnn" else num_filters
            self._add_param(rng, f"utt{n}_w", rows, n * word_dim)
            self.params[f"utt{n}_b"] = Node(np.zeros(rows))
        self._add_param(rng, "cand_w", self.rep_dim, word_dim)
        self.params["cand_b"] = Node(np.zeros(self.rep_dim))
        for branch in ("d", "mr", "mc"):
            self._add_param(rng, f"hid_{branch}_w", hidden_dim, self.rep_dim)
            self.params[f"hid_{branch}_b"] = Node(np.zeros(hidden_dim))
        self._add_param(rng, "out_w", 2, hidden_dim)
        self.params["out_b"] = Node(np.zeros(2))

    def _add_param(self, rng, name: str, rows: int, cols: int) -> None:
        self.params[name] = Node(_xavier_matrix(rng, rows, cols))

    # -- parameter plumbing -------------------------------------------------

    def param_values(self) -> dict:
        return {name: node.value for name, node in self.params.items()}

    def param_grads(self) -> dict:
        return {name: node.grad for name, node in self.params.items()}

    def zero_grads(self) -> None:
        nm.zero_gradients(self.params.values())

    def snapshot(self) -> dict:
        return {name: node.value.copy() for name, node in self.params.items()}

    def restore(self, snap: dict) -> None:
        for name, arr in snap.items():
            self.params[name].value[...] = arr

    # -- prediction conveniences ---------------------------------------------

    def prob(self, tokens, ctx: TurnContext, pair: CandidatePair,
             table: WordVectorTable) -> float:
        return forward(self, tokens, ctx, pair, table, train_mode=False)

    def value_probs(self, tokens, ctx: TurnContext, table: WordVectorTable,
                    values) -> dict:
        """P(expressed) for every value of this slot, sharing one utterance
        encoding across candidates."""
        r = encode_utterance(self, tokens, table)
        out = {}
        for v in values:
            logits = _decision_logits(self, r, ctx, CandidatePair(self.slot, v),
                                      table, train_mode=False, rng=None)
            out[v] = _positive_prob(logits)
        return out

    def turn_value_probs(self, tokens, acts, table: WordVectorTable, values) -> dict:
        return self.value_probs(tokens, make_context(acts, table), table, values)


# ---------------------------------------------------------------------------
# representation learning
# ---------------------------------------------------------------------------

def _word_matrix(tokens, table: WordVectorTable) -> np.ndarray:
    return np.stack([table.lookup(t) for t in tokens])  # (k, D)


def _cumulative_ngram(words: np.ndarray, n: int) -> np.ndarray:
    """Sum over positions of the concatenation of n consecutive word vectors.

    Block j of the result is the sum of words j .. j+k-n over positions, so no
    explicit concatenation is materialized.
    """
    k = words.shape[0]
    count = k - n + 1
    blocks = [words[j:j + count].sum(axis=0) for j in range(n)]
    return np.concatenate(blocks)


def encode_utterance_dnn(model: SlotModel, tokens, table: WordVectorTable) -> Node:
    """Cumulative n-gram sums through per-n sigmoid layers, summed.

    Utterances shorter than n contribute the zero cumulative n-gram for that
    n, which still passes through its layer (yielding sigmoid(bias)).
    """
    if not tokens:
        raise ValueError("cannot encode an empty token list")
    words = _word_matrix(tokens, table)
    k = words.shape[0]
    terms = []
    for n in (1, 2, 3):
        if k >= n:
            rn = _cumulative_ngram(words, n)
        else:
            rn = np.zeros(n * model.word_dim)
        terms.append(nm.sigmoid(nm.affine(model.params[f"utt{n}_w"], rn,
                                          model.params[f"utt{n}_b"])))
    return nm.add(*terms)


def _ngram_columns(words: np.ndarray, n: int) -> np.ndarray:
    """Matrix whose column i is the concatenation of word vectors i .. i+n-1."""
    k = words.shape[0]
    count = k - n + 1
    return np.concatenate([words[j:j + count] for j in range(n)], axis=1).T  # (nD, count)


def encode_utterance_cnn(model: SlotModel, tokens, table: WordVectorTable) -> Node:
    """Filter banks over n-grams, ReLU, max-pool over time, summed.

    When the utterance is shorter than n there are no n-grams to pool over;
    that n's contribution is the zero vector.
    """
    if not tokens:
        raise ValueError("cannot encode an empty token list")
    words = _word_matrix(tokens, table)
    k = words.shape[0]
    terms = []
    for n in (1, 2, 3):
        if k < n:
            continue
        cols = _ngram_columns(words, n)
        conv = nm.affine(model.params[f"utt{n}_w"], cols, model.params[f"utt{n}_b"])
        terms.append(nm.maxpool_over_time(nm.relu(conv)))
    if not terms:
        return Node(np.zeros(model.num_filters))
    return nm.add(*terms)


def encode_utterance(model: SlotModel, tokens, table: WordVectorTable) -> Node:
    if model.variant == "dnn":
        return encode_utterance_dnn(model, tokens, table)
    return encode_utterance_cnn(model, tokens, table)


def candidate_vectors(pair: CandidatePair, table: WordVectorTable) -> tuple:
    """Raw vector-space representations of the candidate slot name and value."""
    c_s = table.embed_phrase(tokenize(pair.slot))
    c_v = table.embed_phrase(tokenize(pair.value))
    return c_s, c_v


def encode_candidate(model: SlotModel, pair: CandidatePair,
                     table: WordVectorTable) -> Node:
    """sigmoid(W (c_s + c_v) + b): same dimensionality as the utterance
    representation for either variant."""
    c_s, c_v = candidate_vectors(pair, table)
    return nm.sigmoid(nm.affine(model.params["cand_w"], c_s + c_v,
                                model.params["cand_b"]))


# ---------------------------------------------------------------------------
# decision layer
# ---------------------------------------------------------------------------

def _decision_logits(model: SlotModel, r: Node, ctx: TurnContext,
                     pair: CandidatePair, table: WordVectorTable,
                     train_mode: bool, rng, cand_cache: dict | None = None) -> Node:
    if train_mode and model.dropout_rate > 0.0:
        r = nm.dropout(r, model.dropout_rate, rng)
    if cand_cache is not None and pair.value in cand_cache:
        c = cand_cache[pair.value]
    else:
        c = encode_candidate(model, pair, table)
        if cand_cache is not None:
            cand_cache[pair.value] = c

    c_s, c_v = candidate_vectors(pair, table)
    request_gate = float(c_s @ ctx.t_q)
    confirm_gate = float(c_s @ ctx.t_s) * float(c_v @ ctx.t_v)

    d = nm.elementwise_mul(r, c)
    m_r = nm.scale(r, request_gate)
    m_c = nm.scale(r, confirm_gate)

    hidden = []
    for name, branch in (("d", d), ("mr", m_r), ("mc", m_c)):
        h = nm.sigmoid(nm.affine(model.params[f"hid_{name}_w"], branch,
                                 model.params[f"hid_{name}_b"]))
        if train_mode and model.dropout_rate > 0.0:
            h = nm.dropout(h, model.dropout_rate, rng)
        hidden.append(h)
    return nm.affine(model.params["out_w"], nm.add(*hidden), model.params["out_b"])


def _positive_prob(logits: Node) -> float:
    z = logits.value
    zmax = z.max()
    p = np.exp(z - zmax)
    return float(p[1] / p.sum())


def forward_logits(model: SlotModel, tokens, ctx: TurnContext, pair: CandidatePair,
                   table: WordVectorTable, train_mode: bool = False, rng=None,
                   utt_cache: dict | None = None, cand_cache: dict | None = None) -> Node:
    """Build the full decision graph and return the two-class logits node."""
    key = tuple(tokens)
    if utt_cache is not None and key in utt_cache:
        r = utt_cache[key]
    else:
        r = encode_utterance(model, tokens, table)
        if utt_cache is not None:
            utt_cache[key] = r
    return _decision_logits(model, r, ctx, pair, table, train_mode, rng,
                            cand_cache=cand_cache)


def forward(model: SlotModel, tokens, ctx: TurnContext, pair: CandidatePair,
            table: WordVectorTable, train_mode: bool = False, rng=None) -> float:
    """P(candidate expressed) = softmax(logits)[1]; dropout only in train mode."""
    return _positive_prob(forward_logits(model, tokens, ctx, pair, table,
                                         train_mode=train_mode, rng=rng))


def predict_turn(models: dict, turn_tokens, ctx: TurnContext, ontology: Ontology,
                 table: WordVectorTable) -> dict:
    """Evaluation-mode probability for every candidate pair in the ontology."""
    out = {}
    for slot in ontology.tracked_slots():
        if slot not in models:
            raise KeyError(f"no trained model for slot {slot!r}")
        probs = models[slot].value_probs(turn_tokens, ctx, table, ontology.values(slot))
        for value, p in probs.items():
            out[CandidatePair(slot, value)] = p
    return out


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainHistory:
    epoch_loss: list = field(default_factory=list)
    val_metric: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def _accuracy_and_xent(model: SlotModel, examples, table: WordVectorTable) -> tuple:
    correct = 0
    total_nll = 0.0
    ctx_cache: dict = {}
    for ex in examples:
        ctx = ctx_cache.get(ex.acts)
        if ctx is None:
            ctx = make_context(ex.acts, table)
            ctx_cache[ex.acts] = ctx
        p = forward(model, ex.tokens, ctx, ex.candidate, table)
        correct += int((p >= 0.5) == bool(ex.label))
        p_label = p if ex.label == 1 else 1.0 - p
        total_nll -= np.log(max(p_label, 1e-12))
    n = max(1, len(examples))
    return correct / n, total_nll / n


def train_slot(model: SlotModel, examples, plan: BatchPlan, table: WordVectorTable,
               validation=None, lr: float = DEFAULT_LR, clip=DEFAULT_CLIP,
               max_epochs: int = 400, patience: int = 20, seed: int = 0,
               log=None) -> TrainHistory:
    """Minimize mean batch cross-entropy with Adam, early-stopping on held-out
    accuracy (ties broken toward lower held-out cross-entropy).

    Without a validation list, the metric is computed on (up to 512 of) the
    training examples themselves. Deterministic for a fixed seed. On a
    non-finite loss the model is restored to the end of the last good epoch
    and TrainingDivergedError is raised.
    """
    batches = minibatches(examples, plan)
    n_batches = batches_per_epoch(examples, plan)
    drop_rng = np.random.default_rng(derive_seed(seed, "dropout", model.slot))
    state = nm.AdamState()
    history = TrainHistory()
    eval_set = validation if validation is not None else examples[:512]
    best_metric = None
    best_params = model.snapshot()
    last_good = model.snapshot()
    stale = 0

    for epoch in range(max_epochs):
        total = 0.0
        for _ in range(n_batches):
            batch = next(batches)
            model.zero_grads()
            utt_cache: dict = {}
            cand_cache: dict = {}
            ctx_cache: dict = {}
            losses = []
            for ex in batch:
                ctx = ctx_cache.get(ex.acts)
                if ctx is None:
                    ctx = make_context(ex.acts, table)
                    ctx_cache[ex.acts] = ctx
                logits = forward_logits(model, ex.tokens, ctx, ex.candidate, table,
                                        train_mode=True, rng=drop_rng,
                                        utt_cache=utt_cache, cand_cache=cand_cache)
                losses.append(nm.softmax_xent(logits, ex.label))
            loss = nm.scale(nm.add(*losses), 1.0 / len(losses))
            value = loss.item()
            if not np.isfinite(value):
                model.restore(last_good)
                raise TrainingDivergedError(
                    f"slot {model.slot!r}: non-finite loss at epoch {epoch}")
            nm.backward(loss)
            try:
                nm.adam_step(model.param_values(), model.param_grads(), state,
                             lr=lr, clip=clip)
            except nm.NonFiniteGradientError:
                model.restore(last_good)
                raise TrainingDivergedError(
                    f"slot {model.slot!r}: non-finite gradient at epoch {epoch}")
            total += value
        history.epoch_loss.append(total / n_batches)
        last_good = model.snapshot()

        acc, xent = _accuracy_and_xent(model, eval_set, table)
        history.val_metric.append(acc)
        metric = (acc, -xent)
        if best_metric is None or metric > best_metric:
            best_metric = metric
            best_params = model.snapshot()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
        if log is not None:
            log(f"slot={model.slot} epoch={epoch} loss={history.epoch_loss[-1]:.4f} "
                f"acc={acc:.4f}")
        if stale >= patience:
            history.stopped_early = True
            break

    model.restore(best_params)
    return history


# ---------------------------------------------------------------------------
# serialization: versioned JSON with named flat parameter arrays
# ---------------------------------------------------------------------------

def model_payload(model: SlotModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "family": "nbt",
        "variant": model.variant,
        "slot": model.slot,
        "word_dim": model.word_dim,
        "num_filters": model.num_filters,
        "hidden_dim": model.hidden_dim,
        "dropout": model.dropout_rate,
        "vector_file_hash": model.vector_hash,
        "params": {name: {"shape": list(node.value.shape),
                          "data": node.value.reshape(-1).tolist()}
                   for name, node in model.params.items()},
    }


def save_model(model: SlotModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_payload(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path, table: WordVectorTable | None = None) -> SlotModel:
    """Reconstruct a model, rejecting version or dimensionality mismatches."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{path}: format_version {payload.get('format_version')!r} "
                               f"!= {MODEL_FORMAT_VERSION}")
    if payload.get("family") != "nbt":
        raise ModelFormatError(f"{path}: not a neural slot model (family="
                               f"{payload.get('family')!r})")
    model = SlotModel(payload["variant"], payload["slot"],
                      word_dim=payload["word_dim"], num_filters=payload["num_filters"],
                      hidden_dim=payload["hidden_dim"], dropout_rate=payload["dropout"],
                      vector_hash=payload.get("vector_file_hash", ""))
    stored = payload["params"]
    if set(stored) != set(model.params):
        raise ModelFormatError(f"{path}: parameter set mismatch")
    for name, node in model.params.items():
        entry = stored[name]
        if tuple(entry["shape"]) != node.value.shape:
            raise ModelFormatError(
                f"{path}: parameter {name!r} has shape {entry['shape']}, "
                f"expected {list(node.value.shape)}")
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != node.value.size:
            raise ModelFormatError(f"{path}: parameter {name!r} has {data.size} "
                                   f"entries, expected {node.value.size}")
        node.value[...] = data.reshape(node.value.shape)
    if table is not None and model.vector_hash and table.source_hash \
            and model.vector_hash != table.source_hash:
        warnings.warn(f"{path}: model was trained against a different vector file "
                      f"({model.vector_hash[:12]}.. != {table.source_hash[:12]}..)")
    return model
