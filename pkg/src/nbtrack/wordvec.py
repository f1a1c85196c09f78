"""Fixed pre-trained word vectors: loading, lookup, phrase composition.

Vectors are read once from the plain-text one-line-per-token format and are
never updated afterwards; lookups on unknown tokens fall back to the zero
vector by default (a hashed deterministic random vector is available as a
config option). A deterministic random table supports the
random-initialisation arm of vector-quality comparisons.

The token normalization pipeline defined here (lowercase, strip edge
punctuation, whitespace split) is the single tokenizer used everywhere:
utterances, slot names and slot values all pass through it.
"""

from __future__ import annotations

import hashlib
import string

import numpy as np

_EDGE_PUNCT = string.punctuation


class VectorFormatError(ValueError):
    """Vector file violated the `token f1 .. fD` line format."""


class EmptyPhraseError(ValueError):
    """embed_phrase called with no tokens."""


def normalize_token(token: str) -> str:
    """Lowercase and strip leading/trailing punctuation."""
    return token.lower().strip(_EDGE_PUNCT)


def tokenize(text: str) -> list[str]:
    """Whitespace split + per-token normalization, empty tokens dropped."""
    out = []
    for raw in text.split():
        tok = normalize_token(raw)
        if tok:
            out.append(tok)
    return out


def xavier_bound(dim: int) -> float:
    """Uniform init bound sqrt(6 / (dim + 1)) for a single dim-vector."""
    return float(np.sqrt(6.0 / (dim + 1)))


def xavier_vector(token: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic per-token uniform vector in [-bound, bound].

    Depends only on (token, dim, seed) -- not on process hash randomization or
    on the order tokens are requested in.
    """
    digest = hashlib.sha256(f"{token}\x1f{seed}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    b = xavier_bound(dim)
    return rng.uniform(-b, b, size=dim)


class WordVectorTable:
    """Immutable token -> vector map with a fixed dimensionality.

    `fallback` is "zero" (default) or "hashed"; out-of-vocabulary lookups are
    counted on `oov_count` but never change returned values.
    """

    def __init__(self, vectors: dict[str, np.ndarray], dim: int,
                 fallback: str = "zero", source_hash: str = "",
                 duplicate_count: int = 0):
        if fallback not in ("zero", "hashed"):
            raise ValueError(f"unknown fallback policy {fallback!r}")
        self.dim = int(dim)
        self.fallback = fallback
        self.source_hash = source_hash
        self.duplicate_count = duplicate_count
        self.oov_count = 0
        self._vectors = {}
        for token, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise VectorFormatError(
                    f"vector for {token!r} has shape {arr.shape}, expected ({self.dim},)")
            arr = arr.copy()
            arr.setflags(write=False)
            self._vectors[token] = arr
        self._zero = np.zeros(self.dim)
        self._zero.setflags(write=False)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def tokens(self):
        return self._vectors.keys()

    def lookup(self, token: str) -> np.ndarray:
        """Stored vector; falls back to the normalized form, then to the
        out-of-vocabulary policy (zero vector by default)."""
        vec = self._vectors.get(token)
        if vec is not None:
            return vec
        folded = normalize_token(token)
        if folded != token:
            vec = self._vectors.get(folded)
            if vec is not None:
                return vec
        self.oov_count += 1
        if self.fallback == "hashed":
            return xavier_vector(folded or token, self.dim)
        return self._zero

    def embed_phrase(self, phrase: list[str]) -> np.ndarray:
        """Sum of per-token lookups; multi-word names compose additively."""
        if not phrase:
            raise EmptyPhraseError("cannot embed an empty phrase")
        total = np.zeros(self.dim)
        for token in phrase:
            total += self.lookup(token)
        return total

    def oov_rate(self, tokens: list[str]) -> float:
        """Fraction of the given tokens with no stored (or folded) vector."""
        if not tokens:
            return 0.0
        misses = sum(1 for t in tokens
                     if t not in self._vectors and normalize_token(t) not in self._vectors)
        return misses / len(tokens)


def load_vectors(path, expected_dim: int | None = None,
                 fallback: str = "zero") -> WordVectorTable:
    """Parse a `token f1 f2 .. fD` text file (single-space separated, UTF-8).

    Duplicate tokens keep the last occurrence and are counted. Raises
    VectorFormatError (with the line number) on dimension drift, unparseable
    floats, or an empty file.
    """
    vectors: dict[str, np.ndarray] = {}
    dim = expected_dim
    duplicates = 0
    with open(path, "rb") as fh:
        raw = fh.read()
    source_hash = hashlib.sha256(raw).hexdigest()
    text = raw.decode("utf-8")
    lineno = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(" ")
        token = parts[0]
        if not token or len(parts) < 2:
            raise VectorFormatError(f"{path}:{lineno}: expected `token f1 .. fD`")
        try:
            values = np.array([float(p) for p in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise VectorFormatError(f"{path}:{lineno}: unparseable float ({exc})") from None
        if dim is None:
            dim = values.shape[0]
        elif values.shape[0] != dim:
            raise VectorFormatError(
                f"{path}:{lineno}: {values.shape[0]} floats for {token!r}, expected {dim}")
        if token in vectors:
            duplicates += 1
        vectors[token] = values
    if not vectors:
        raise VectorFormatError(f"{path}: no vectors found (empty file)")
    return WordVectorTable(vectors, dim, fallback=fallback,
                           source_hash=source_hash, duplicate_count=duplicates)


def save_vectors(table: WordVectorTable, path) -> None:
    """Write the table back in the plain-text format (round-trip safe)."""
    with open(path, "w", encoding="utf-8") as fh:
        for token in table.tokens():
            vec = table.lookup(token)
            fh.write(token + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def random_table(vocab, dim: int, seed: int, fallback: str = "zero") -> WordVectorTable:
    """Deterministic uniform-random table over `vocab`.

    Each vector depends only on its token and the seed, so adding or removing
    other vocabulary entries never reshuffles existing vectors.
    """
    if dim <= 0:
        raise ValueError(f"dimension must be positive, got {dim}")
    vectors = {token: xavier_vector(token, dim, seed) for token in vocab}
    source_hash = hashlib.sha256(
        ("random\x1f%d\x1f%d\x1f" % (dim, seed) + "\x1f".join(sorted(vectors))).encode("utf-8")
    ).hexdigest()
    return WordVectorTable(vectors, dim, fallback=fallback, source_hash=source_hash)


# module-level wrappers mirroring the table methods, for symmetry with the
# rest of the functional API
def lookup(table: WordVectorTable, token: str) -> np.ndarray:
    return table.lookup(token)


def embed_phrase(table: WordVectorTable, phrase: list[str]) -> np.ndarray:
    return table.embed_phrase(phrase)


__all__ = [
    "EmptyPhraseError", "VectorFormatError", "WordVectorTable",
    "embed_phrase", "load_vectors", "lookup", "normalize_token",
    "random_table", "save_vectors", "tokenize", "xavier_bound", "xavier_vector",
]
